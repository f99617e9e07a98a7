//! Full certification of every catalog problem: sweep, limit, verification.

use horizon_pmp::certificate::{verify, VerifyOptions};
use horizon_pmp::lab::catalog;
use horizon_pmp::lab::sweep::{horizon_sweep, SweepOptions};

fn main() -> horizon_pmp::Result<()> {
    let horizons = [10, 20, 40, 60, 80, 100];
    for name in catalog::names() {
        let inst = catalog::instance(name, 120)?;
        let opts = SweepOptions {
            extend_to: Some(20),
            ..SweepOptions::default()
        };
        let res = horizon_sweep(&inst.problem, &inst.candidate, &horizons, inst.variant, &opts)?;
        let Some(cert) = res.limits.as_ref().filter(|_| res.converged) else {
            println!("{name}: sweep did not converge ({:.2e})", res.tail_difference());
            continue;
        };
        let rep = verify(&inst.problem, &inst.candidate, cert, 1e-6)?;
        print!("{name}: {}", rep.summary());
        let mut tampered = cert.clone();
        tampered.p[2][0] += 1e-3;
        let rep = horizon_pmp::certificate::verify_with(
            &inst.problem,
            &inst.candidate,
            &tampered,
            &VerifyOptions::new(1e-6),
        )?;
        println!("  with p_3 shifted by 1e-3: {}", if rep.pass() { "PASS" } else { "FAIL" });
    }
    Ok(())
}
