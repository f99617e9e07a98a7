//! Admissibility, partial sums and overtaking comparison on the regulator.

use nalgebra::DVector;

use horizon_pmp::lab::catalog;
use horizon_pmp::model::{check_admissibility, overtaking_compare, partial_sums, Trajectory};

fn main() -> horizon_pmp::Result<()> {
    let inst = catalog::lq1(200)?;
    let rep = check_admissibility(&inst.problem, &inst.candidate, 1e-9)?;
    println!("LQ1 candidate feasible: {}", rep.feasible);

    let sums = partial_sums(&inst.problem, &inst.candidate, &[10, 20, 40, 80, 160], 1e-9)?;
    for (h, v) in sums.horizons.iter().zip(&sums.values) {
        println!("  sum_(t<={h}) phi = {v:.12}");
    }
    println!("  Cauchy: {}", sums.cauchy);

    let mut controls = inst.candidate.controls.clone();
    controls[0] += DVector::from_element(1, 0.1);
    let other = Trajectory::simulate(&inst.problem, controls)?;
    let cmp = overtaking_compare(&inst.problem, &inst.candidate, &other, 160, 1e-12)?;
    println!(
        "optimal vs u_0 + 0.1: liminf {:.6e}, weakly overtakes {}, catching up {}",
        cmp.liminf_est, cmp.a_weakly_overtakes_b, cmp.a_catching_up_b
    );

    let mut broken = inst.candidate.clone();
    broken.states[3][0] += 1e-3;
    let rep = check_admissibility(&inst.problem, &broken, 1e-9)?;
    for v in &rep.violations {
        println!("  violation {:?} at t = {}: {:.3e}", v.kind, v.t, v.magnitude);
    }
    Ok(())
}
