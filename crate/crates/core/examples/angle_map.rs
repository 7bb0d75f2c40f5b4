//! Frequency-to-angle map of the default scenario and the ideal beam it produces.

use metaprism::ideal::AngleFrequencyMap;
use metaprism::runner::run_ideal_sweep;
use metaprism::scenario::{linspace, Scenario};

fn main() -> metaprism::Result<()> {
    let s = Scenario::default();
    let map = AngleFrequencyMap::from_scenario(&s)?;
    let freqs = s.band_plan(9)?.frequencies();
    let thetas = linspace(s.theta_min, s.theta_max, 1001);
    let sweep = run_ideal_sweep(&s, &thetas, &freqs)?;
    println!("{:>12} {:>12} {:>12}", "f (GHz)", "mapped (°)", "peak (°)");
    for (k, &f) in freqs.iter().enumerate() {
        let peak = thetas[sweep.map.argmax(k)];
        println!(
            "{:>12.4} {:>12.3} {:>12.3}",
            f / 1e9,
            map.angle(f)?.to_degrees(),
            peak.to_degrees()
        );
    }
    Ok(())
}
