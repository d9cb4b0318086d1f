use hetsim_core::engine::{run, RunSpec};
use hetsim_core::model::{make_profile, ProfileSpec, SystemConfig};
use hetsim_core::policy::PolicySpec;
use std::time::Instant;

fn main() {
    for (n, alpha, events) in [
        (1_000usize, 0.3, 30_000_000u64),
        (10_000, 0.3, 30_000_000),
    ] {
        let p = make_profile(&ProfileSpec::Homogeneous, n).unwrap();
        let c = SystemConfig::with_alpha(n, alpha, 2, p).unwrap();
        let spec = RunSpec::new(c, PolicySpec::Jfsq, events, 1);
        let t = Instant::now();
        let m = run(&spec).unwrap();
        let dt = t.elapsed().as_secs_f64();
        println!(
            "n={n}: {events} events in {dt:.2}s ({:.0} ns/event), p_wait={:.3e} ± {:.1e}, arrivals={}, waiting_hits≈{:.0}",
            dt / events as f64 * 1e9,
            m.p_wait.value,
            m.p_wait.stderr,
            m.counts.arrivals,
            m.p_wait.value * (m.counts.arrivals as f64) * 0.8,
        );
    }
}
