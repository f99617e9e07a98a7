//! Separation and span/hull disjointness certificates, and the stage
//! qualification built on them.

use horizon_pmp::lab::catalog;
use horizon_pmp::qualification::{
    qualify_stage, separation_check, span_co_disjoint_check, verify_vanishing_implication, FunctionalFamily,
    DEFAULT_ACTIVE_TOL,
};

fn main() -> horizon_pmp::Result<()> {
    let open = FunctionalFamily::from_slices(&[&[1.0, 0.0], &[1.0, 1.0], &[0.5, -1.0]])?;
    let cert = separation_check(&open)?;
    println!("cone in a half-plane: witness {:?}", cert.witness().map(|w| w.as_slice()));
    let closed = FunctionalFamily::from_slices(&[&[1.0, 0.0], &[-1.0, 1.0], &[0.0, -1.0]])?;
    let cert = separation_check(&closed)?;
    println!("surrounding the origin: {cert:?} verifies {}", cert.verify(None, &closed, 1e-9));

    let psi = FunctionalFamily::from_slices(&[&[0.0, 0.0, 1.0]])?;
    let phi = FunctionalFamily::from_slices(&[&[1.0, 0.0, 3.0], &[1.0, 1.0, -2.0]])?;
    let cert = span_co_disjoint_check(&psi, &phi)?;
    println!("span/hull: {cert:?}");
    let check = verify_vanishing_implication(&psi, &phi, &cert, &[0.0], &[0.0, 0.0], 1e-9)?;
    println!("vanishing combination forces mu = 0: {} (kappa {:.3})", check.holds, check.kappa);
    let meeting = FunctionalFamily::from_slices(&[&[1.0, 0.0, 1.0], &[-1.0, 0.0, 1.0]])?;
    println!("span/hull meeting: {:?}", span_co_disjoint_check(&psi, &meeting)?);

    let inst = catalog::mix1(20)?;
    let q = qualify_stage(&inst.problem, &inst.candidate, 4, DEFAULT_ACTIVE_TOL)?;
    println!("MIX1 stage 4: active {:?}, holds {}", q.active.indices, q.holds());
    Ok(())
}
