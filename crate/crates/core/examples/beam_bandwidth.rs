//! Beam bandwidth and the normalized frequency response around one beam.

use metaprism::ideal::{bandwidth, frequency_response_at_beam, AngleFrequencyMap};
use metaprism::scenario::{linspace, Scenario};

fn main() -> metaprism::Result<()> {
    let s = Scenario::default();
    let map = AngleFrequencyMap::from_scenario(&s)?;
    let bw = bandwidth(&map, &s.geometry, 0.05, s.phi)?;
    println!("exact ΔW       {:8.3} MHz", bw.exact_hz / 1e6);
    println!("approximation  {:8.3} MHz", bw.approx_hz / 1e6);
    println!("first null     {:8.3} MHz", bw.first_null_hz / 1e6);
    for df in linspace(-2.0 * bw.exact_hz, 2.0 * bw.exact_hz, 9) {
        let h = frequency_response_at_beam(&s.geometry, &map, df, s.phi);
        println!("Δf {:+8.2} MHz  |h|² {:.4}", df / 1e6, h.norm_sqr());
    }
    Ok(())
}
