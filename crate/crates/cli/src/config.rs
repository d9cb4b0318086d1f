//! Experiment configuration: a TOML document with sections `system`, `run`,
//! `policy`, `probes`, and optional `sweep` and `drift`. Unknown keys are
//! rejected. Seeds accept either an integer or a decimal string so the full
//! unsigned 64-bit range is expressible.

use serde::{Deserialize, Deserializer};
use std::path::Path;

use hetsim_core::engine::{InitialState, RunSpec};
use hetsim_core::error::{Error, Result};
use hetsim_core::metrics::{EtaVariant, ProbeId};
use hetsim_core::model::{make_profile, ProfileSpec, SystemConfig};
use hetsim_core::policy::PolicySpec;
use hetsim_core::sweep::SweepSpec;

fn u64_from_int_or_string<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Int(v) if v >= 0 => Ok(v as u64),
        Raw::Int(v) => Err(serde::de::Error::custom(format!("seed must be non-negative, got {v}"))),
        Raw::Text(s) => s
            .parse::<u64>()
            .map_err(|_| serde::de::Error::custom(format!("invalid u64 seed {s:?}"))),
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n: usize,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub buffer_b: usize,
    pub profile: ProfileSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon_events: u64,
    pub warmup_events: Option<u64>,
    pub batches: Option<u32>,
    #[serde(deserialize_with = "u64_from_int_or_string")]
    pub seed: u64,
    pub replications: Option<u32>,
    pub initial: Option<InitialState>,
    pub eta_variant: Option<EtaVariant>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub kind: String,
    pub d: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub n_grid: Vec<usize>,
    pub alpha_grid: Vec<f64>,
    pub profiles: Option<Vec<ProfileSpec>>,
    pub policies: Option<Vec<String>>,
    pub horizon_events: Option<u64>,
    pub warmup_events: Option<u64>,
    pub batches: Option<u32>,
    pub replications: Option<u32>,
}

/// Parameters of the drift-check subcommand.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    /// Sampled premise states per lemma case when the space is too large to
    /// enumerate. Default 100000.
    pub samples: Option<usize>,
    /// δ for the prefix-idle lemma when the --lemma id carries none.
    pub delta: Option<f64>,
    /// Moment order for the heterogeneity constants. Default 1.
    pub r: Option<u32>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub system: SystemSection,
    pub run: RunSection,
    pub policy: PolicySection,
    #[serde(default)]
    pub probes: Vec<String>,
    pub sweep: Option<SweepSection>,
    pub drift: Option<DriftSection>,
}

impl ConfigFile {
    pub fn parse_str(text: &str) -> Result<ConfigFile> {
        let value: toml::Value =
            toml::from_str(text).map_err(|e| Error::config(format!("config parse: {e}")))?;
        value
            .try_into()
            .map_err(|e| Error::config(format!("config schema: {e}")))
    }

    /// Loads a config file and applies `key=value` overrides on dotted paths
    /// (e.g. `system.n=100`, `run.seed=7`) before schema validation.
    pub fn load(path: &Path, overrides: &[String]) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let mut value: toml::Value =
            toml::from_str(&text).map_err(|e| Error::config(format!("config parse: {e}")))?;
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        value
            .try_into()
            .map_err(|e| Error::config(format!("config schema: {e}")))
    }

    pub fn system_config(&self) -> Result<SystemConfig> {
        let sys = &self.system;
        let profile = make_profile(&sys.profile, sys.n)?;
        match (sys.alpha, sys.lambda) {
            (Some(alpha), None) => SystemConfig::with_alpha(sys.n, alpha, sys.buffer_b, profile),
            (None, Some(lambda)) => {
                SystemConfig::with_lambda(sys.n, lambda, sys.buffer_b, profile)
            }
            _ => Err(Error::config("exactly one of system.alpha / system.lambda must be set")),
        }
    }

    pub fn policy(&self) -> Result<PolicySpec> {
        let p = &self.policy;
        if p.kind.contains(':') {
            if p.d.is_some() {
                return Err(Error::config("give pod's d either inline or as policy.d, not both"));
            }
            return p.kind.parse();
        }
        match (p.kind.as_str(), p.d) {
            ("pod", Some(d)) => Ok(PolicySpec::PowerOfD { d }),
            ("pod", None) => Err(Error::config("policy pod needs d")),
            (kind, None) => kind.parse(),
            (kind, Some(_)) => Err(Error::config(format!("policy {kind:?} takes no d"))),
        }
    }

    pub fn probes(&self) -> Result<Vec<ProbeId>> {
        self.probes.iter().map(|s| s.parse()).collect()
    }

    pub fn replications(&self) -> u32 {
        self.run.replications.unwrap_or(1)
    }

    pub fn run_spec(&self) -> Result<RunSpec> {
        let config = self.system_config()?;
        let policy = self.policy()?;
        let horizon = self.run.horizon_events;
        let spec = RunSpec {
            config,
            policy,
            horizon_events: horizon,
            warmup_events: self.run.warmup_events.unwrap_or(horizon / 5),
            batches: self.run.batches.unwrap_or(32),
            seed: self.run.seed,
            probes: self.probes()?,
            initial: self.run.initial.unwrap_or_default(),
            eta_variant: self.run.eta_variant.unwrap_or_default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let sw = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::config("config has no [sweep] section"))?;
        let policies = match &sw.policies {
            Some(list) => list
                .iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<PolicySpec>>>()?,
            None => vec![self.policy()?],
        };
        let profiles = match &sw.profiles {
            Some(list) => list.clone(),
            None => vec![self.system.profile.clone()],
        };
        let horizon = sw.horizon_events.unwrap_or(self.run.horizon_events);
        let spec = SweepSpec {
            n_grid: sw.n_grid.clone(),
            alpha_grid: sw.alpha_grid.clone(),
            profiles,
            policies,
            buffer_b: self.system.buffer_b,
            horizon_events: horizon,
            warmup_events: sw
                .warmup_events
                .or(self.run.warmup_events)
                .unwrap_or(horizon / 5),
            batches: sw.batches.or(self.run.batches).unwrap_or(32),
            seed: self.run.seed,
            replications: sw.replications.or(self.run.replications).unwrap_or(1),
            probes: self.probes()?,
            eta_variant: self.run.eta_variant.unwrap_or_default(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Sets `path.to.key = value` inside a parsed TOML tree. The value text is
/// parsed as a TOML literal; bare words fall back to strings.
pub fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {spec:?} is not key=value")))?;
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
    {
        Ok(mut table) => table.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let mut cursor = root;
    let segments: Vec<&str> = path.trim().split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::config(format!("override path {path:?} has empty segments")));
    }
    for seg in &segments[..segments.len() - 1] {
        let table = cursor
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override path {path:?} crosses a non-table")))?;
        cursor = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = cursor
        .as_table_mut()
        .ok_or_else(|| Error::config(format!("override path {path:?} crosses a non-table")))?;
    table.insert(segments.last().unwrap().to_string(), parsed);
    Ok(())
}
