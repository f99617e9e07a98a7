//! Numerical differentials, linearity probes and the structural checks on
//! state differentials.

use nalgebra::{dmatrix, dvector, DVector};

use horizon_pmp::diff::{gateaux_matrix, invertibility_check, linearity_check, monotonicity_check};

fn main() -> horizon_pmp::Result<()> {
    let f = |z: &DVector<f64>| dvector![z[0] * z[1], z[0].sin() + z[1] * z[1]];
    let a = dvector![0.7, -1.2];
    let j = gateaux_matrix(&f, &a, 1e-5)?;
    println!("Jacobian at {:?}:{j}", a.as_slice());
    let exact = dmatrix![a[1], a[0]; a[0].cos(), 2.0 * a[1]];
    println!("max error {:.2e}", (&j - exact).amax());

    let smooth = linearity_check(&f, &a, 16, 1e-6, 7)?;
    println!("smooth map linear differential: {} (defect {:.2e})", smooth.linear, smooth.worst_defect);
    let kink = |z: &DVector<f64>| dvector![z[0].abs() + z[1]];
    let rep = linearity_check(&kink, &dvector![0.0, 1.0], 16, 1e-6, 7)?;
    println!("|x| + y at the kink: linear {} (defect {:.2e})", rep.linear, rep.worst_defect);

    let m = dmatrix![0.5, 0.1; 0.0, 2.0];
    let inv = invertibility_check(&m, 1e12);
    let mono = monotonicity_check(&m);
    println!(
        "D1f = {m}invertible {} (cond {:.3}), monotone {} (gamma {})",
        inv.invertible,
        inv.condition,
        mono.holds(),
        mono.gamma
    );
    Ok(())
}
