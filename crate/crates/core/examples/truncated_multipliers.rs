//! Multipliers of single truncations, with both assemblies and the dense
//! reference solver.

use horizon_pmp::certificate::adjoint_forward;
use horizon_pmp::lab::catalog;
use horizon_pmp::truncation::{oracle_kkt, reduce, solve_multipliers, Assembly, SolveOutcome, SolverOptions};

fn main() -> horizon_pmp::Result<()> {
    for name in ["LQ1", "SLACK1", "CON1", "MIX1"] {
        let inst = catalog::instance(name, 40)?;
        let fh = reduce(&inst.problem, &inst.candidate, 10)?;
        let derivs = fh.derivatives(1e-5)?;
        for assembly in [Assembly::Stacked, Assembly::AdjointReduced] {
            let opts = SolverOptions {
                assembly,
                ..SolverOptions::default()
            };
            match solve_multipliers(&fh, &derivs, inst.variant, &opts)? {
                SolveOutcome::Certified(m) => println!(
                    "{name:<6} {:?}/{:?}: lambda0 {:.8} p1 {:.8} p11 {:.3e} residual {:.1e} nullity {}",
                    assembly,
                    m.assembly,
                    m.lambda0,
                    m.p1()[0],
                    m.p[10][0],
                    m.max_residual(),
                    m.nullity
                ),
                SolveOutcome::NoCertificate { reason, best_residual, .. } => {
                    println!("{name:<6} {assembly:?}: no certificate ({reason:?}, best residual {best_residual:.1e})")
                }
            }
        }
        if let SolveOutcome::Certified(o) = oracle_kkt(&fh, inst.variant, &SolverOptions::default())?.outcome {
            println!("{name:<6} dense reference: lambda0 {:.8} p1 {:.8}", o.lambda0, o.p1()[0]);
        }
    }

    let inst = catalog::lq1(40)?;
    let fh = reduce(&inst.problem, &inst.candidate, 10)?;
    let derivs = fh.derivatives(1e-5)?;
    if let SolveOutcome::Certified(m) = solve_multipliers(&fh, &derivs, inst.variant, &SolverOptions::default())? {
        let p = adjoint_forward(m.lambda0, m.p1(), &derivs, 11)?;
        let gap = p.iter().zip(&m.p).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        println!("LQ1 forward recursion from (lambda0, p1) matches to {gap:.1e}");
    }
    Ok(())
}
