//! Effective Rician factor seen through the ideal beam and a Monte Carlo check.

use metaprism::ideal::{
    effective_rician_factor, IdealDesign, MultipathSampler, MultipathSpec, PhaseModel,
};
use metaprism::scenario::Scenario;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> metaprism::Result<()> {
    let s = Scenario::default();
    let design = IdealDesign::from_scenario(&s)?.with_model(PhaseModel::Exact);
    for kappa in [0.1, 1.0, 10.0] {
        let spec = MultipathSpec::isotropic(kappa)?;
        let kappa_eff = effective_rician_factor(&spec, &design, s.f0)?;
        let sampler = MultipathSampler::new(&spec, &design, s.f0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut diffuse, mut los) = (0.0, 0.0);
        let draws = 5000;
        for _ in 0..draws {
            let d = sampler.draw(&mut rng);
            diffuse += d.diffuse.norm_sqr();
            los = d.los.norm_sqr();
        }
        let empirical = kappa * los / (diffuse / draws as f64);
        println!("κ_R {kappa:5.1}  κ_eff {kappa_eff:9.2}  sampled {empirical:9.2}");
    }
    Ok(())
}
