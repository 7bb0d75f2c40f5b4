//! Alternating optimization of the affine phase profile on a reduced array.

use metaprism::optimize::OptimizeOptions;
use metaprism::runner::{default_users, run_optimize, ModelArgs, OptimizeMode};
use metaprism::scenario::ScenarioConfig;

fn main() -> metaprism::Result<()> {
    let mut cfg = ScenarioConfig::default();
    cfg.array.i_count = Some(8);
    cfg.array.j_count = Some(2);
    let s = cfg.resolve()?;
    let k = default_users(&s)?;
    let out = run_optimize(
        &s,
        &ModelArgs::multiport(),
        k,
        120,
        60,
        &OptimizeOptions::default(),
        OptimizeMode::Both,
        true,
    )?;
    println!("users {k}");
    println!("non-opt  {:.4} bit/s/Hz", out.non_opt.normalized);
    if let Some(f) = &out.foster {
        println!("foster   {:.4} bit/s/Hz", f.normalized);
    }
    println!(
        "mtp      {:.4} bit/s/Hz after {} iterations",
        out.mtp.1.normalized, out.mtp.1.iterations
    );
    if let Some((_, nc)) = &out.nc {
        println!("nc-mtp   {:.4} bit/s/Hz", nc.normalized);
    }
    for w in &out.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
