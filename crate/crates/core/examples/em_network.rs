//! Mutual-coupling network of the default array and its Touchstone export.

use metaprism::em::{
    build_impedance_matrix, realistic_channel, write_touchstone, z_to_s, z_to_s_partition,
    FrequencyPoint,
};
use metaprism::ideal::IdealDesign;
use metaprism::runner::dipole_spec;
use metaprism::scenario::{Direction, Scenario};

fn main() -> metaprism::Result<()> {
    let s = Scenario::default();
    let spec = dipole_spec(&s)?;
    let user = Direction::new(s.theta_min, s.phi)?;
    let z = build_impedance_matrix(
        &s.geometry,
        s.tx_position(),
        s.geometry.point_at(user, s.d_u),
        &spec,
        s.f0,
    )?;
    println!(
        "{} ports, self impedance {:.2} Ω",
        z.port_count(),
        z.matrix()[(1, 1)]
    );
    println!("neighbour coupling {:.2} Ω", z.matrix()[(1, 2)]);

    let net = z_to_s_partition(&z.clone().without_direct_link(), s.z0)?;
    let design = IdealDesign::from_scenario(&s)?;
    let h = realistic_channel(&net, &design.reflection(s.f0 - s.bandwidth / 2.0))?;
    println!("channel toward θ_min: |h|² = {:.3e}", h.norm_sqr());

    let text = write_touchstone(
        &[FrequencyPoint {
            freq_hz: s.f0,
            matrix: z_to_s(z.matrix(), s.z0)?,
        }],
        s.z0,
    )?;
    println!("Touchstone export: {} lines", text.lines().count());
    Ok(())
}
