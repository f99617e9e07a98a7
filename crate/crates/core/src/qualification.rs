//! Separation certificates for active constraint differentials.
//!
//! Every answer comes with an explicit witness that can be checked by plain
//! arithmetic: either a direction `w` on which all functionals are positive,
//! or convex (and span) coefficients showing that no such direction exists.

use nalgebra::DVector;

use crate::diff::{stage_derivatives, DEFAULT_STEP};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus, Relation};
use crate::model::{ControlVariant, ProblemSpec, Trajectory};

pub const DEFAULT_ACTIVE_TOL: f64 = 1e-8;
/// Tolerance used when certificates check themselves.
pub const CERTIFICATE_TOL: f64 = 1e-9;

/// Linear functionals on `R^d`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalFamily {
    pub rows: Vec<DVector<f64>>,
    pub labels: Vec<String>,
}

impl FunctionalFamily {
    pub fn new(rows: Vec<DVector<f64>>) -> Result<Self> {
        let labels = (0..rows.len()).map(|i| format!("row{i}")).collect();
        Self::labeled(rows, labels)
    }

    pub fn labeled(rows: Vec<DVector<f64>>, labels: Vec<String>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Invalid("functional family is empty".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::Invalid("functionals must have dimension >= 1".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::Dimension {
                    context: format!("functional {i}"),
                    expected: dim,
                    found: r.len(),
                });
            }
        }
        if labels.len() != rows.len() {
            return Err(Error::Dimension {
                context: "functional labels".into(),
                expected: rows.len(),
                found: labels.len(),
            });
        }
        Ok(Self { rows, labels })
    }

    pub fn from_slices(rows: &[&[f64]]) -> Result<Self> {
        Self::new(rows.iter().map(|r| DVector::from_column_slice(r)).collect())
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `sum_i c_i row_i`.
    pub fn combine(&self, coeffs: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (r, c) in self.rows.iter().zip(coeffs) {
            out.axpy(*c, r, 1.0);
        }
        out
    }

    /// Returns a copy with one more row appended.
    pub fn with_row(&self, row: DVector<f64>, label: impl Into<String>) -> Result<Self> {
        let mut rows = self.rows.clone();
        let mut labels = self.labels.clone();
        rows.push(row);
        labels.push(label.into());
        Self::labeled(rows, labels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeparationCertificate {
    /// `<phi_i, w> >= 1` for every inequality functional.
    Separated { w: DVector<f64> },
    /// Simplex weights with `sum alpha_i phi_i = 0`.
    NotSeparated { alpha: Vec<f64> },
    /// `<psi_j, w> = 0` for every equality and `<phi_k, w> >= 1` for every inequality.
    Disjoint { w: DVector<f64> },
    /// `sum zeta_j psi_j = sum theta_k phi_k` with `theta` on the simplex.
    Intersecting { zeta: Vec<f64>, theta: Vec<f64> },
}

fn simplex_ok(weights: &[f64], tol: f64) -> bool {
    weights.iter().all(|a| *a >= -tol) && (weights.iter().sum::<f64>() - 1.0).abs() <= tol
}

impl SeparationCertificate {
    /// Checks the certificate by direct arithmetic. `equalities` is ignored
    /// for the single-family outcomes.
    pub fn verify(
        &self,
        equalities: Option<&FunctionalFamily>,
        inequalities: &FunctionalFamily,
        tol: f64,
    ) -> bool {
        match self {
            Self::Separated { w } => {
                w.len() == inequalities.dim()
                    && inequalities.rows.iter().all(|r| r.dot(w) >= 1.0 - tol)
            }
            Self::NotSeparated { alpha } => {
                alpha.len() == inequalities.len()
                    && simplex_ok(alpha, tol)
                    && inequalities.combine(alpha).norm() <= tol
            }
            Self::Disjoint { w } => {
                let eq_ok = equalities
                    .map(|e| e.dim() == w.len() && e.rows.iter().all(|r| r.dot(w).abs() <= tol))
                    .unwrap_or(false);
                eq_ok
                    && w.len() == inequalities.dim()
                    && inequalities.rows.iter().all(|r| r.dot(w) >= 1.0 - tol)
            }
            Self::Intersecting { zeta, theta } => {
                let Some(eq) = equalities else {
                    return false;
                };
                zeta.len() == eq.len()
                    && theta.len() == inequalities.len()
                    && simplex_ok(theta, tol)
                    && (eq.combine(zeta) - inequalities.combine(theta)).norm() <= tol
            }
        }
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, Self::Separated { .. } | Self::Disjoint { .. })
    }

    pub fn witness(&self) -> Option<&DVector<f64>> {
        match self {
            Self::Separated { w } | Self::Disjoint { w } => Some(w),
            _ => None,
        }
    }
}

/// Splits each free variable into a nonnegative pair and returns
/// `(coeffs(+), coeffs(-))` laid out as `[w+ | w-]`.
fn split_row(row: &DVector<f64>) -> Vec<f64> {
    row.iter().copied().chain(row.iter().map(|v| -v)).collect()
}

/// Finds `w` with `<psi_j, w> = 0` and `<phi_k, w> >= 1`, minimizing `|w|_1`.
/// Returns the witness, or the Farkas multipliers `(y_psi, y_phi)`.
fn witness_lp(
    equalities: &[DVector<f64>],
    inequalities: &FunctionalFamily,
) -> std::result::Result<DVector<f64>, (Vec<f64>, Vec<f64>)> {
    let d = inequalities.dim();
    let mut lp = LinearProgram::new(2 * d);
    lp.costs = vec![1.0; 2 * d];
    for psi in equalities {
        lp.add(split_row(psi), Relation::Eq, 0.0);
    }
    for phi in &inequalities.rows {
        lp.add(split_row(phi), Relation::Ge, 1.0);
    }
    let sol = lp.solve();
    match sol.status {
        LpStatus::Optimal => Ok(DVector::from_fn(d, |i, _| sol.x[i] - sol.x[d + i])),
        _ => {
            let y = sol.farkas.unwrap_or_else(|| vec![0.0; lp.constraints.len()]);
            let (yp, yf) = y.split_at(equalities.len());
            Err((yp.to_vec(), yf.to_vec()))
        }
    }
}

/// Direct search for `theta` on the simplex and free `zeta` with
/// `sum zeta psi = sum theta phi`. Used when Farkas extraction is not clean.
fn hull_lp(equalities: &[DVector<f64>], inequalities: &FunctionalFamily) -> Option<(Vec<f64>, Vec<f64>)> {
    let d = inequalities.dim();
    let me = equalities.len();
    let mi = inequalities.len();
    let nv = 2 * me + mi;
    let mut lp = LinearProgram::new(nv);
    for c in 0..d {
        let mut row = vec![0.0; nv];
        for (j, psi) in equalities.iter().enumerate() {
            row[j] = psi[c];
            row[me + j] = -psi[c];
        }
        for (k, phi) in inequalities.rows.iter().enumerate() {
            row[2 * me + k] = -phi[c];
        }
        lp.add(row, Relation::Eq, 0.0);
    }
    let mut simplex = vec![0.0; nv];
    simplex[2 * me..].iter_mut().for_each(|v| *v = 1.0);
    lp.add(simplex, Relation::Eq, 1.0);
    let sol = lp.solve();
    if sol.status != LpStatus::Optimal {
        return None;
    }
    let zeta = (0..me).map(|j| sol.x[j] - sol.x[me + j]).collect();
    let theta = sol.x[2 * me..].to_vec();
    Some((zeta, theta))
}

fn normalize_weights(y: &[f64]) -> Option<Vec<f64>> {
    let clipped: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = clipped.iter().sum();
    (s > 0.0).then(|| clipped.iter().map(|v| v / s).collect())
}

/// Decides whether some `w` makes every functional strictly positive.
pub fn separation_check(family: &FunctionalFamily) -> Result<SeparationCertificate> {
    if family.is_empty() {
        return Err(Error::Invalid("functional family is empty".into()));
    }
    let m = family.len();
    if family.rows.iter().all(|r| r.iter().all(|v| *v == 0.0)) {
        return Ok(SeparationCertificate::NotSeparated {
            alpha: vec![1.0 / m as f64; m],
        });
    }
    match witness_lp(&[], family) {
        Ok(w) => Ok(SeparationCertificate::Separated { w }),
        Err((_, y)) => {
            if let Some(alpha) = normalize_weights(&y) {
                let cert = SeparationCertificate::NotSeparated { alpha };
                if cert.verify(None, family, CERTIFICATE_TOL) {
                    return Ok(cert);
                }
            }
            let (_, alpha) = hull_lp(&[], family)
                .ok_or_else(|| Error::Invalid("separation solver returned no certificate".into()))?;
            Ok(SeparationCertificate::NotSeparated { alpha })
        }
    }
}

/// Decides whether `span(psi)` and `co(phi)` are disjoint.
pub fn span_co_disjoint_check(
    equalities: &FunctionalFamily,
    inequalities: &FunctionalFamily,
) -> Result<SeparationCertificate> {
    if equalities.dim() != inequalities.dim() {
        return Err(Error::Dimension {
            context: "equality vs inequality functionals".into(),
            expected: inequalities.dim(),
            found: equalities.dim(),
        });
    }
    match witness_lp(&equalities.rows, inequalities) {
        Ok(w) => Ok(SeparationCertificate::Disjoint { w }),
        Err((yp, yf)) => {
            let s: f64 = yf.iter().map(|v| v.max(0.0)).sum();
            if s > 0.0 {
                let cert = SeparationCertificate::Intersecting {
                    zeta: yp.iter().map(|v| -v / s).collect(),
                    theta: yf.iter().map(|v| v.max(0.0) / s).collect(),
                };
                if cert.verify(Some(equalities), inequalities, CERTIFICATE_TOL) {
                    return Ok(cert);
                }
            }
            let (zeta, theta) = hull_lp(&equalities.rows, inequalities)
                .ok_or_else(|| Error::Invalid("disjointness solver returned no certificate".into()))?;
            Ok(SeparationCertificate::Intersecting { zeta, theta })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VanishingCheck {
    pub holds: bool,
    /// `|sum lambda psi + sum mu phi|_2`.
    pub combination_norm: f64,
    /// `|w|_2` of the disjointness witness.
    pub kappa: f64,
    /// Bound on `sum mu` implied by the witness.
    pub bound: f64,
}

/// Checks that a (near) vanishing combination `sum lambda psi + sum mu phi`
/// forces `mu` to (near) zero.
///
/// With `c` the combination and `w` the witness, `sum mu <= <c, w> + |lambda|_1 max|<psi, w>|`,
/// so `max mu <= tol * |w| + |lambda|_1 * eps_psi` whenever `|c| <= tol`.
pub fn verify_vanishing_implication(
    equalities: &FunctionalFamily,
    inequalities: &FunctionalFamily,
    certificate: &SeparationCertificate,
    lambda: &[f64],
    mu: &[f64],
    tol: f64,
) -> Result<VanishingCheck> {
    let SeparationCertificate::Disjoint { w } = certificate else {
        return Err(Error::NotDisjoint);
    };
    if lambda.len() != equalities.len() {
        return Err(Error::Dimension {
            context: "equality coefficients".into(),
            expected: equalities.len(),
            found: lambda.len(),
        });
    }
    if mu.len() != inequalities.len() {
        return Err(Error::Dimension {
            context: "inequality coefficients".into(),
            expected: inequalities.len(),
            found: mu.len(),
        });
    }
    if let Some((k, v)) = mu.iter().enumerate().find(|(_, v)| **v < -tol) {
        return Err(Error::ConstraintViolated { index: k, value: *v, tol });
    }
    let combination = equalities.combine(lambda) + inequalities.combine(mu);
    let combination_norm = combination.norm();
    let kappa = w.norm();
    let psi_defect = equalities.rows.iter().map(|r| r.dot(w).abs()).fold(0.0, f64::max);
    let lambda_l1: f64 = lambda.iter().map(|v| v.abs()).sum();
    let bound = tol * kappa + lambda_l1 * psi_defect;
    let holds = if combination_norm <= tol {
        mu.iter().copied().fold(0.0, f64::max) <= bound + tol
    } else {
        true
    };
    Ok(VanishingCheck {
        holds,
        combination_norm,
        kappa,
        bound,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    /// 0-based indices `k` with `|g^k| <= tol`.
    pub indices: Vec<usize>,
    pub tol: f64,
}

impl ActiveSet {
    pub fn contains(&self, k: usize) -> bool {
        self.indices.contains(&k)
    }
}

pub fn active_set(g_values: &[f64], tol: f64) -> Result<ActiveSet> {
    let mut indices = Vec::new();
    for (k, g) in g_values.iter().enumerate() {
        if !g.is_finite() || *g < -tol {
            return Err(Error::ConstraintViolated { index: k, value: *g, tol });
        }
        if g.abs() <= tol {
            indices.push(k);
        }
    }
    Ok(ActiveSet { indices, tol })
}

/// Constraint qualification at one stage of a candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct StageQualification {
    pub t: usize,
    pub active: ActiveSet,
    /// `None` when there is nothing to separate (no active inequality rows).
    pub certificate: Option<SeparationCertificate>,
    pub equalities: Option<FunctionalFamily>,
    pub inequalities: Option<FunctionalFamily>,
}

impl StageQualification {
    /// The qualification holds when there is nothing to check or a positive
    /// certificate was produced.
    pub fn holds(&self) -> bool {
        self.certificate.as_ref().is_none_or(|c| c.is_positive())
    }
}

/// Runs the separation check matching the control-set variant on the active
/// differentials at stage `t`.
pub fn qualify_stage(
    problem: &ProblemSpec,
    traj: &Trajectory,
    t: usize,
    active_tol: f64,
) -> Result<StageQualification> {
    if t > traj.horizon() {
        return Err(Error::Horizon {
            requested: t,
            available: traj.horizon(),
        });
    }
    let u = &traj.controls[t];
    let g = problem.controls.g_values(t, u);
    let active = active_set(g.as_slice(), active_tol)?;
    let derivs = stage_derivatives(problem, &traj.states[t], u, t, DEFAULT_STEP)?;
    let ineq_rows: Vec<DVector<f64>> = active
        .indices
        .iter()
        .map(|&k| derivs.dg.row(k).transpose())
        .collect();
    let ineq_labels = active
        .indices
        .iter()
        .map(|&k| problem.controls.g_rows[k].label.clone())
        .collect();
    let inequalities = if ineq_rows.is_empty() {
        None
    } else {
        Some(FunctionalFamily::labeled(ineq_rows, ineq_labels)?)
    };
    let equalities = if problem.controls.variant == ControlVariant::Mixed {
        let rows = (0..derivs.de.nrows()).map(|j| derivs.de.row(j).transpose()).collect();
        let labels = problem.controls.e_rows.iter().map(|r| r.label.clone()).collect();
        Some(FunctionalFamily::labeled(rows, labels)?)
    } else {
        None
    };
    let certificate = match (&equalities, &inequalities) {
        (_, None) => None,
        (None, Some(ineq)) => Some(separation_check(ineq)?),
        (Some(eq), Some(ineq)) => Some(span_co_disjoint_check(eq, ineq)?),
    };
    Ok(StageQualification {
        t,
        active,
        certificate,
        equalities,
        inequalities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(rows: &[&[f64]]) -> FunctionalFamily {
        FunctionalFamily::from_slices(rows).unwrap()
    }

    #[test]
    fn first_quadrant_is_separated() {
        let f = fam(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let c = separation_check(&f).unwrap();
        assert_eq!(c, SeparationCertificate::Separated { w: DVector::from_vec(vec![1.0, 1.0]) });
        assert!(c.verify(None, &f, CERTIFICATE_TOL));
    }

    #[test]
    fn opposite_vectors_not_separated() {
        let f = fam(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        match separation_check(&f).unwrap() {
            SeparationCertificate::NotSeparated { alpha } => {
                assert!((alpha[0] - 0.5).abs() < 1e-12 && (alpha[1] - 0.5).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_rows_give_uniform_weights() {
        let f = fam(&[&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]]);
        let c = separation_check(&f).unwrap();
        assert_eq!(c, SeparationCertificate::NotSeparated { alpha: vec![1.0 / 3.0; 3] });
        assert!(c.verify(None, &f, CERTIFICATE_TOL));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(FunctionalFamily::from_slices(&[&[1.0, 0.0], &[1.0]]).is_err());
        assert!(FunctionalFamily::new(vec![]).is_err());
        let e = fam(&[&[1.0]]);
        let i = fam(&[&[1.0, 0.0]]);
        assert!(span_co_disjoint_check(&e, &i).is_err());
    }

    #[test]
    fn orthogonal_axes_disjoint() {
        let e = fam(&[&[1.0, 0.0]]);
        let i = fam(&[&[0.0, 1.0]]);
        let c = span_co_disjoint_check(&e, &i).unwrap();
        assert_eq!(c, SeparationCertificate::Disjoint { w: DVector::from_vec(vec![0.0, 1.0]) });
    }

    #[test]
    fn identical_vectors_intersect() {
        let e = fam(&[&[1.0, 0.0]]);
        let i = fam(&[&[1.0, 0.0]]);
        let c = span_co_disjoint_check(&e, &i).unwrap();
        match &c {
            SeparationCertificate::Intersecting { zeta, theta } => {
                assert!((zeta[0] - 1.0).abs() < 1e-12 && (theta[0] - 1.0).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
        assert!(c.verify(Some(&e), &i, CERTIFICATE_TOL));
    }

    #[test]
    fn midpoint_intersection() {
        let e = fam(&[&[1.0, 1.0, 0.0]]);
        let i = fam(&[&[1.0, 1.0, 0.5], &[1.0, 1.0, -0.5]]);
        match span_co_disjoint_check(&e, &i).unwrap() {
            SeparationCertificate::Intersecting { zeta, theta } => {
                assert!((zeta[0] - 1.0).abs() < 1e-12);
                assert!((theta[0] - 0.5).abs() < 1e-12 && (theta[1] - 0.5).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vanishing_examples() {
        let e = fam(&[&[1.0, 0.0]]);
        let i = fam(&[&[0.0, 1.0]]);
        let cert = span_co_disjoint_check(&e, &i).unwrap();
        let r = verify_vanishing_implication(&e, &i, &cert, &[0.0], &[0.0], 1e-9).unwrap();
        assert!(r.holds);
        let r = verify_vanishing_implication(&e, &i, &cert, &[3.0], &[0.0], 1e-9).unwrap();
        assert!(r.holds && r.combination_norm == 3.0);
        let bogus = SeparationCertificate::Intersecting { zeta: vec![1.0], theta: vec![1.0] };
        assert!(matches!(
            verify_vanishing_implication(&e, &i, &bogus, &[0.0], &[0.0], 1e-9),
            Err(Error::NotDisjoint)
        ));
    }

    #[test]
    fn active_set_examples() {
        assert_eq!(active_set(&[0.0, 0.5], 1e-8).unwrap().indices, vec![0]);
        assert_eq!(active_set(&[1e-12, 1e-12], 1e-8).unwrap().indices, vec![0, 1]);
        assert!(matches!(
            active_set(&[-1.0, 0.0], 1e-8),
            Err(Error::ConstraintViolated { index: 0, .. })
        ));
    }

    #[test]
    fn zero_equality_row_changes_nothing() {
        let e = fam(&[&[1.0, 0.0]]);
        let i = fam(&[&[0.5, 1.0], &[-0.5, 1.0]]);
        let a = span_co_disjoint_check(&e, &i).unwrap();
        let e0 = e.with_row(DVector::zeros(2), "zero").unwrap();
        let b = span_co_disjoint_check(&e0, &i).unwrap();
        assert_eq!(a.is_positive(), b.is_positive());
    }
}
