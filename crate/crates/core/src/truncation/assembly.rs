//! Homogeneous stationarity systems and the choice of a normalized,
//! sign-feasible nullspace element.

use nalgebra::{DMatrix, DVector};

use super::{
    stage_residuals, system_norm, Assembly, FiniteHorizonProblem, NoCertificateReason, SolveOutcome,
    SolverOptions, TruncatedMultipliers,
};
use crate::certificate::{adjoint_forward_with_limit, Variant};
use crate::diff::{invertibility_check, StageDerivatives};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus, Relation};

/// Slack granted to sign constraints before clamping, tried in order.
const SIGN_SLACKS: [f64; 3] = [0.0, 1e-11, 1e-9];
const MAX_ORTHANT_DIM: usize = 12;
const FORM_FLOOR: f64 = 1e-12;
const COEFF_WEIGHT: f64 = 1e-9;
const REDUCED_GROWTH_LIMIT: f64 = 1e6;

/// `A z = 0` together with the linear forms the selection needs.
pub(super) struct Homogeneous {
    pub a: DMatrix<f64>,
    pub lambda0: DVector<f64>,
    pub p1: Vec<DVector<f64>>,
    /// Forms that must be nonnegative.
    pub signed: Vec<DVector<f64>>,
}

pub(super) enum Selection {
    Found { z: DVector<f64>, nullity: usize, abnormal: bool },
    Failed { reason: NoCertificateReason, probe: DVector<f64> },
}

pub(super) struct Decoded {
    pub lambda0: f64,
    pub p: Vec<DVector<f64>>,
    pub mu: Vec<DVector<f64>>,
    pub eq: Vec<DVector<f64>>,
}

/// Orthonormal nullspace basis (columns) and the right singular vector of
/// the smallest singular value.
pub(super) fn nullspace(a: &DMatrix<f64>, null_rel: f64) -> (DMatrix<f64>, DVector<f64>) {
    let cols = a.ncols();
    let padded = if a.nrows() < cols {
        let mut m = DMatrix::zeros(cols, cols);
        m.view_mut((0, 0), (a.nrows(), cols)).copy_from(a);
        m
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sv = svd.singular_values;
    let smax = sv.max();
    let thr = null_rel * (1.0 + smax);
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let smallest = v_t.row(order[0]).transpose();
    let null: Vec<usize> = order.into_iter().filter(|&i| sv[i] <= thr).collect();
    let mut basis = DMatrix::zeros(cols, null.len());
    for (c, &i) in null.iter().enumerate() {
        basis.set_column(c, &v_t.row(i).transpose());
    }
    (basis, smallest)
}

/// Coordinates of a form in the nullspace basis. Entries negligible against
/// the largest one are rounding noise and are set to zero so that directions
/// the form does not see stay decoupled in the LP.
fn project(form: &DVector<f64>, basis: &DMatrix<f64>) -> Vec<f64> {
    let r = basis.tr_mul(form);
    let top = r.amax();
    r.iter()
        .map(|v| if v.abs() <= FORM_FLOOR * top { 0.0 } else { *v })
        .collect()
}

fn split(r: &[f64], extra: usize) -> Vec<f64> {
    let mut v: Vec<f64> = r.to_vec();
    v.extend(r.iter().map(|x| -x));
    v.extend(std::iter::repeat_n(0.0, extra));
    v
}

fn combine(basis: &DMatrix<f64>, x: &[f64]) -> DVector<f64> {
    let k = basis.ncols();
    let c = DVector::from_fn(k, |i, _| x[i] - x[k + i]);
    basis * c
}

/// Projected sign form scaled to unit max norm with noise entries dropped;
/// `None` when the form is numerically orthogonal to the nullspace.
fn scaled(r: &[f64]) -> Option<Vec<f64>> {
    let top = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if top <= FORM_FLOOR {
        return None;
    }
    Some(r.iter().map(|v| v / top).collect())
}

/// Normal direction: `lambda0 = 1`, minimal `|p_1|_1`.
fn normal_lp(sys: &Homogeneous, basis: &DMatrix<f64>, eps: f64) -> Option<DVector<f64>> {
    let k = basis.ncols();
    let n = sys.p1.len();
    let mut lp = LinearProgram::new(2 * k + n);
    lp.add(split(&project(&sys.lambda0, basis), n), Relation::Eq, 1.0);
    for f in &sys.signed {
        if let Some(r) = scaled(&project(f, basis)) {
            lp.add(split(&r, n), Relation::Ge, -eps);
        }
    }
    for (a, f) in sys.p1.iter().enumerate() {
        let r = project(f, basis);
        let mut up = split(&r, n);
        up[2 * k + a] = 1.0;
        let mut down: Vec<f64> = split(&r, n).iter().map(|v| -v).collect();
        down[2 * k + a] = 1.0;
        lp.add(down, Relation::Ge, 0.0);
        lp.add(up, Relation::Ge, 0.0);
    }
    // Directions that barely move p_1 would otherwise leave far-out
    // vertices; a small weight on the coefficients keeps them bounded.
    lp.costs[..2 * k].iter_mut().for_each(|c| *c = COEFF_WEIGHT);
    lp.costs[2 * k..].iter_mut().for_each(|c| *c = 1.0);
    let sol = lp.solve();
    (sol.status == LpStatus::Optimal).then(|| combine(basis, &sol.x))
}

/// Abnormal direction in the orthant `s` of `p_1`: `lambda0 = 0`, `s . p_1 = 1`.
fn abnormal_lp(sys: &Homogeneous, basis: &DMatrix<f64>, signs: &[f64], eps: f64) -> Option<DVector<f64>> {
    let k = basis.ncols();
    let mut lp = LinearProgram::new(2 * k);
    lp.add(split(&project(&sys.lambda0, basis), 0), Relation::Eq, 0.0);
    let mut total = vec![0.0; k];
    for (f, s) in sys.p1.iter().zip(signs) {
        let r = project(f, basis);
        for (t, v) in total.iter_mut().zip(&r) {
            *t += s * v;
        }
        let oriented: Vec<f64> = r.iter().map(|v| s * v).collect();
        lp.add(split(&oriented, 0), Relation::Ge, -eps);
    }
    lp.add(split(&total, 0), Relation::Eq, 1.0);
    for f in &sys.signed {
        if let Some(r) = scaled(&project(f, basis)) {
            lp.add(split(&r, 0), Relation::Ge, -eps);
        }
    }
    let sol = lp.solve();
    (sol.status == LpStatus::Optimal).then(|| combine(basis, &sol.x))
}

pub(super) fn select(sys: &Homogeneous, null_rel: f64) -> Selection {
    let (basis, smallest) = nullspace(&sys.a, null_rel);
    let nullity = basis.ncols();
    if nullity == 0 {
        return Selection::Failed {
            reason: NoCertificateReason::NoNullspace,
            probe: smallest,
        };
    }
    for eps in SIGN_SLACKS {
        if let Some(z) = normal_lp(sys, &basis, eps) {
            return Selection::Found {
                z,
                nullity,
                abnormal: false,
            };
        }
    }
    let n = sys.p1.len().min(MAX_ORTHANT_DIM);
    for eps in SIGN_SLACKS {
        for mask in 0..(1usize << n) {
            let signs: Vec<f64> = (0..sys.p1.len())
                .map(|a| if a < n && mask & (1 << a) != 0 { -1.0 } else { 1.0 })
                .collect();
            if let Some(z) = abnormal_lp(sys, &basis, &signs, eps) {
                return Selection::Found {
                    z,
                    nullity,
                    abnormal: true,
                };
            }
        }
    }
    Selection::Failed {
        reason: NoCertificateReason::SignInfeasible,
        probe: basis.column(0).into_owned(),
    }
}

struct Layout {
    /// `p_col[t][alpha]` for `p_{t+1}`.
    p_col: Vec<Vec<Option<usize>>>,
    mu_col: Vec<Vec<Option<usize>>>,
    eq_col: Vec<Vec<usize>>,
}

fn control_columns(
    fh: &FiniteHorizonProblem,
    opts: &SolverOptions,
    mut next: usize,
) -> Result<(Vec<Vec<Option<usize>>>, Vec<Vec<usize>>, usize)> {
    let actives = fh.active_sets(opts.active_tol)?;
    let mi = fh.problem.controls.num_ineq();
    let me = fh.problem.controls.num_eq();
    let mut mu_col = Vec::with_capacity(fh.h + 1);
    for act in &actives {
        let row = (0..mi)
            .map(|k| {
                act.contains(k).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        mu_col.push(row);
    }
    let mut eq_col = Vec::with_capacity(fh.h + 1);
    for _ in 0..=fh.h {
        eq_col.push((next..next + me).collect());
        next += me;
    }
    Ok((mu_col, eq_col, next))
}

fn unit(len: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(len);
    v[i] = 1.0;
    v
}

fn decode_controls(z: &DVector<f64>, layout: &Layout) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mu = layout
        .mu_col
        .iter()
        .map(|row| DVector::from_iterator(row.len(), row.iter().map(|c| c.map_or(0.0, |c| z[c]))))
        .collect();
    let eq = layout
        .eq_col
        .iter()
        .map(|row| DVector::from_iterator(row.len(), row.iter().map(|&c| z[c])))
        .collect();
    (mu, eq)
}

fn add_control_terms(row: &mut [f64], d: &StageDerivatives, layout: &Layout, t: usize, i: usize) {
    for (k, c) in layout.mu_col[t].iter().enumerate() {
        if let Some(c) = c {
            row[*c] += d.dg[(k, i)];
        }
    }
    for (j, &c) in layout.eq_col[t].iter().enumerate() {
        row[c] += d.de[(j, i)];
    }
}

fn stacked(
    fh: &FiniteHorizonProblem,
    derivs: &[StageDerivatives],
    variant: Variant,
    opts: &SolverOptions,
) -> Result<(Homogeneous, Layout)> {
    let (n, d, h) = (fh.problem.n, fh.problem.d, fh.h);
    let slack = fh.slack_rows(opts.active_tol);
    let mut next = 1;
    let mut p_col = Vec::with_capacity(h + 1);
    for s in &slack {
        let row = (0..n)
            .map(|a| {
                (!s[a]).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        p_col.push(row);
    }
    let (mu_col, eq_col, ncols) = control_columns(fh, opts, next)?;
    let layout = Layout {
        p_col,
        mu_col,
        eq_col,
    };
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n * h + d * (h + 1));
    for (t, sd) in derivs.iter().enumerate().skip(1) {
        for a in 0..n {
            let mut row = vec![0.0; ncols];
            if let Some(c) = layout.p_col[t - 1][a] {
                row[c] += 1.0;
            }
            for b in 0..n {
                if let Some(c) = layout.p_col[t][b] {
                    row[c] -= sd.d1f[(b, a)];
                }
            }
            row[0] -= sd.d1phi[a];
            rows.push(row);
        }
    }
    for (t, sd) in derivs.iter().enumerate() {
        for i in 0..d {
            let mut row = vec![0.0; ncols];
            for b in 0..n {
                if let Some(c) = layout.p_col[t][b] {
                    row[c] += sd.d2f[(b, i)];
                }
            }
            row[0] += sd.d2phi[i];
            add_control_terms(&mut row, sd, &layout, t, i);
            rows.push(row);
        }
    }
    let a = DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]);
    let p1 = layout.p_col[0]
        .iter()
        .map(|c| c.map_or_else(|| DVector::zeros(ncols), |c| unit(ncols, c)))
        .collect();
    let mut signed = Vec::new();
    if variant.nonnegative_adjoint() {
        signed.extend(layout.p_col.iter().flatten().flatten().map(|&c| unit(ncols, c)));
    }
    signed.extend(layout.mu_col.iter().flatten().flatten().map(|&c| unit(ncols, c)));
    Ok((
        Homogeneous {
            a,
            lambda0: unit(ncols, 0),
            p1,
            signed,
        },
        layout,
    ))
}

fn decode_stacked(z: &DVector<f64>, layout: &Layout) -> Decoded {
    let p = layout
        .p_col
        .iter()
        .map(|row| DVector::from_iterator(row.len(), row.iter().map(|c| c.map_or(0.0, |c| z[c]))))
        .collect();
    let (mu, eq) = decode_controls(z, layout);
    Decoded {
        lambda0: z[0],
        p,
        mu,
        eq,
    }
}

/// `p_t = a_t lambda0 + B_t p_1` for `t = 1..=h+1`.
fn affine_adjoint(
    derivs: &[StageDerivatives],
    n: usize,
    cond_limit: f64,
) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
    let mut out = vec![(DVector::zeros(n), DMatrix::identity(n, n))];
    for (t, sd) in derivs.iter().enumerate().skip(1) {
        let r = invertibility_check(&sd.d1f, cond_limit);
        if !r.invertible {
            return Err(Error::Singular {
                t,
                condition: r.condition,
            });
        }
        let lu = sd.d1f.transpose().lu();
        let (a, b) = out.last().unwrap();
        let a_next = lu.solve(&(a - &sd.d1phi)).ok_or(Error::Singular {
            t,
            condition: r.condition,
        })?;
        let b_next = lu.solve(b).ok_or(Error::Singular {
            t,
            condition: r.condition,
        })?;
        // The recursion amplifies rounding by the growth of B_t; past the
        // limit the reduced system is no better than noise.
        let growth = b_next.amax();
        if growth > REDUCED_GROWTH_LIMIT {
            return Err(Error::Singular { t, condition: growth });
        }
        out.push((a_next, b_next));
    }
    Ok(out)
}

fn normalized(mut v: DVector<f64>) -> DVector<f64> {
    let s = v.norm();
    if s > 0.0 {
        v /= s;
    }
    v
}

fn reduced(
    fh: &FiniteHorizonProblem,
    derivs: &[StageDerivatives],
    variant: Variant,
    opts: &SolverOptions,
) -> Result<(Homogeneous, Layout)> {
    let (n, d, h) = (fh.problem.n, fh.problem.d, fh.h);
    let affine = affine_adjoint(derivs, n, opts.cond_limit)?;
    let slack = fh.slack_rows(opts.active_tol);
    let (mu_col, eq_col, ncols) = control_columns(fh, opts, 1 + n)?;
    let layout = Layout {
        p_col: vec![(1..=n).map(Some).collect()],
        mu_col,
        eq_col,
    };
    let p_form = |t: usize, a: usize| {
        let (av, b) = &affine[t];
        let mut row = DVector::zeros(ncols);
        row[0] = av[a];
        for c in 0..n {
            row[1 + c] = b[(a, c)];
        }
        row
    };
    let mut rows: Vec<DVector<f64>> = Vec::new();
    for (t, sd) in derivs.iter().enumerate() {
        for i in 0..d {
            let mut row = DVector::zeros(ncols);
            for b in 0..n {
                row.axpy(sd.d2f[(b, i)], &p_form(t, b), 1.0);
            }
            row[0] += sd.d2phi[i];
            add_control_terms(row.as_mut_slice(), sd, &layout, t, i);
            rows.push(normalized(row));
        }
    }
    let mut signed = Vec::new();
    for t in 0..=h {
        for a in 0..n {
            if slack[t][a] {
                rows.push(normalized(p_form(t, a)));
            } else if variant.nonnegative_adjoint() {
                signed.push(normalized(p_form(t, a)));
            }
        }
    }
    signed.extend(layout.mu_col.iter().flatten().flatten().map(|&c| unit(ncols, c)));
    let a = DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]);
    Ok((
        Homogeneous {
            a,
            lambda0: unit(ncols, 0),
            p1: (1..=n).map(|c| unit(ncols, c)).collect(),
            signed,
        },
        layout,
    ))
}

fn decode_reduced(
    z: &DVector<f64>,
    layout: &Layout,
    fh: &FiniteHorizonProblem,
    derivs: &[StageDerivatives],
    opts: &SolverOptions,
) -> Result<Decoded> {
    let n = fh.problem.n;
    let p1 = DVector::from_fn(n, |a, _| z[1 + a]);
    let mut p = adjoint_forward_with_limit(z[0], &p1, derivs, fh.h + 1, opts.cond_limit)?;
    for (pt, s) in p.iter_mut().zip(fh.slack_rows(opts.active_tol)) {
        for (v, slack) in pt.iter_mut().zip(s) {
            if slack {
                *v = 0.0;
            }
        }
    }
    let (mu, eq) = decode_controls(z, layout);
    Ok(Decoded {
        lambda0: z[0],
        p,
        mu,
        eq,
    })
}

fn scale_decoded(dec: &mut Decoded, s: f64) {
    dec.lambda0 *= s;
    for v in dec.p.iter_mut().chain(dec.mu.iter_mut()).chain(dec.eq.iter_mut()) {
        *v *= s;
    }
}

fn clamp_signs(dec: &mut Decoded, variant: Variant) {
    let clamp = |v: &mut DVector<f64>| v.iter_mut().for_each(|x| *x = x.max(0.0));
    dec.lambda0 = dec.lambda0.max(0.0);
    if variant.nonnegative_adjoint() {
        dec.p.iter_mut().for_each(clamp);
    }
    dec.mu.iter_mut().for_each(clamp);
}

fn normalize(dec: &mut Decoded) -> bool {
    let norm = dec.lambda0.abs() + dec.p[0].lp_norm(1);
    if !(norm > 0.0) || !norm.is_finite() {
        return false;
    }
    scale_decoded(dec, 1.0 / norm);
    true
}

pub(super) fn solve(
    fh: &FiniteHorizonProblem,
    derivs: &[StageDerivatives],
    variant: Variant,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    match opts.assembly {
        Assembly::Stacked => solve_with(fh, derivs, variant, opts, stacked(fh, derivs, variant, opts)?, Assembly::Stacked),
        Assembly::AdjointReduced => {
            // The reduced system is a reformulation; when it is too poorly
            // conditioned to decide, the stacked system decides.
            let outcome = match reduced(fh, derivs, variant, opts) {
                Ok(built) => solve_with(fh, derivs, variant, opts, built, Assembly::AdjointReduced)?,
                Err(Error::Singular { .. }) => SolveOutcome::NoCertificate {
                    h: fh.h,
                    best_residual: f64::INFINITY,
                    reason: NoCertificateReason::SignInfeasible,
                },
                Err(e) => return Err(e),
            };
            match outcome {
                SolveOutcome::Certified(_) => Ok(outcome),
                SolveOutcome::NoCertificate { .. } => {
                    solve_with(fh, derivs, variant, opts, stacked(fh, derivs, variant, opts)?, Assembly::Stacked)
                }
            }
        }
    }
}

fn solve_with(
    fh: &FiniteHorizonProblem,
    derivs: &[StageDerivatives],
    variant: Variant,
    opts: &SolverOptions,
    built: (Homogeneous, Layout),
    used: Assembly,
) -> Result<SolveOutcome> {
    let (sys, layout) = built;
    let decode = |z: &DVector<f64>| -> Result<Decoded> {
        match used {
            Assembly::Stacked => Ok(decode_stacked(z, &layout)),
            Assembly::AdjointReduced => decode_reduced(z, &layout, fh, derivs, opts),
        }
    };
    let norm = system_norm(derivs);
    let threshold = opts.residual_rel * (1.0 + norm);
    let residual_of = |dec: &Decoded| {
        let (ae, wm) = stage_residuals(derivs, dec.lambda0, &dec.p, &dec.mu, &dec.eq);
        let worst = ae.iter().chain(&wm).copied().fold(0.0, f64::max);
        (ae, wm, worst)
    };
    match select(&sys, opts.null_rel) {
        Selection::Failed { reason, probe } => {
            let mut dec = decode(&probe)?;
            if dec.lambda0 < 0.0 {
                scale_decoded(&mut dec, -1.0);
            }
            if !normalize(&mut dec) {
                let s = dec.p.iter().map(|v| v.amax()).fold(dec.lambda0.abs(), f64::max);
                if s > 0.0 {
                    scale_decoded(&mut dec, 1.0 / s);
                }
            }
            Ok(SolveOutcome::NoCertificate {
                h: fh.h,
                best_residual: residual_of(&dec).2,
                reason,
            })
        }
        Selection::Found { z, nullity, abnormal } => {
            let mut dec = decode(&z)?;
            normalize(&mut dec);
            clamp_signs(&mut dec, variant);
            if !normalize(&mut dec) {
                return Ok(SolveOutcome::NoCertificate {
                    h: fh.h,
                    best_residual: f64::INFINITY,
                    reason: NoCertificateReason::SignInfeasible,
                });
            }
            let (ae, wm, worst) = residual_of(&dec);
            if !(worst <= threshold) {
                return Ok(SolveOutcome::NoCertificate {
                    h: fh.h,
                    best_residual: worst,
                    reason: NoCertificateReason::ResidualTooLarge,
                });
            }
            Ok(SolveOutcome::Certified(TruncatedMultipliers {
                h: fh.h,
                variant,
                lambda0: dec.lambda0,
                p: dec.p,
                mu: dec.mu,
                eq: dec.eq,
                residual_ae: ae,
                residual_wm: wm,
                nullity,
                abnormal,
                system_norm: norm,
                assembly: used,
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn nullspace_of_rank_one() {
        let a = dmatrix![1.0, 1.0, 0.0];
        let (basis, _) = nullspace(&a, 1e-7);
        assert_eq!(basis.ncols(), 2);
        assert!((&a * &basis).amax() < 1e-14);
    }

    #[test]
    fn normal_selection_minimizes_p1() {
        // z = (lambda0, p1); A z = 0 has the full plane as nullspace when A = 0.
        let sys = Homogeneous {
            a: DMatrix::zeros(1, 2),
            lambda0: DVector::from_vec(vec![1.0, 0.0]),
            p1: vec![DVector::from_vec(vec![0.0, 1.0])],
            signed: vec![],
        };
        match select(&sys, 1e-7) {
            Selection::Found { z, abnormal, .. } => {
                assert!(!abnormal);
                assert!((z[0] - 1.0).abs() < 1e-12 && z[1].abs() < 1e-12);
            }
            Selection::Failed { .. } => panic!("expected a direction"),
        }
    }

    #[test]
    fn abnormal_fallback() {
        // lambda0 forced to 0 by the row, p1 free: abnormal with p1 = +-1.
        let sys = Homogeneous {
            a: dmatrix![1.0, 0.0],
            lambda0: DVector::from_vec(vec![1.0, 0.0]),
            p1: vec![DVector::from_vec(vec![0.0, 1.0])],
            signed: vec![],
        };
        match select(&sys, 1e-7) {
            Selection::Found { z, abnormal, .. } => {
                assert!(abnormal);
                assert!(z[0].abs() < 1e-12 && (z[1].abs() - 1.0).abs() < 1e-12);
            }
            Selection::Failed { .. } => panic!("expected a direction"),
        }
    }

    #[test]
    fn sign_infeasible() {
        // lambda0 + p1 = 0 with both signed nonnegative.
        let sys = Homogeneous {
            a: dmatrix![1.0, 1.0],
            lambda0: DVector::from_vec(vec![1.0, 0.0]),
            p1: vec![DVector::from_vec(vec![0.0, 1.0])],
            signed: vec![DVector::from_vec(vec![0.0, 1.0])],
        };
        assert!(matches!(
            select(&sys, 1e-7),
            Selection::Failed {
                reason: NoCertificateReason::SignInfeasible,
                ..
            }
        ));
    }
}
