//! Foster load synthesis of one element and its SPICE subcircuit.

use metaprism::foster::{export_netlist, plan_poles, synthesize_element, FitOptions};
use metaprism::ideal::{bandwidth, IdealDesign};
use metaprism::scenario::Scenario;

fn main() -> metaprism::Result<()> {
    let s = Scenario::default();
    let design = IdealDesign::from_scenario(&s)?;
    let bw = bandwidth(&design.map, &s.geometry, 0.05, s.phi)?;
    let n = 15;
    let plan = plan_poles(&design, n);
    println!(
        "element {n}: in-band poles {:?} GHz",
        plan.poles_hz.iter().map(|p| p / 1e9).collect::<Vec<_>>()
    );
    let (circ, report) = synthesize_element(
        &design,
        n,
        s.z0,
        &FitOptions::with_beam_bandwidth(bw.exact_hz),
    )?;
    println!(
        "reactance RMS {:.2} %, phase RMS {:.4} rad, {} sections",
        report.reactance_rel_rms * 100.0,
        report.phase_rms_rad,
        circ.sections.len()
    );
    print!("{}", export_netlist(&circ, 6)?);
    Ok(())
}
