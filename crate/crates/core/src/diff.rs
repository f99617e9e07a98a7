//! Gateaux differentials by finite differences, with analytic overrides, and
//! the structural checks the adjoint recursion depends on.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ProblemSpec, Trajectory};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_COND_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// `(f(a + s v) - f(a - s v)) / 2s`.
    Central,
    /// `(f(a + s v) - f(a)) / s`.
    Forward,
    /// One-sided, second order: `(-3 f(a) + 4 f(a + s v) - f(a + 2 s v)) / 2s`.
    /// Exact on quadratics and still sees kinks at `a`.
    ForwardRichardson,
}

fn eval_checked<F>(f: &F, p: &DVector<f64>) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let y = f(p);
    if y.iter().all(|v| v.is_finite()) {
        Ok(y)
    } else {
        Err(Error::NonFinite {
            what: "function".into(),
            point: format!("{:?}", p.as_slice()),
        })
    }
}

/// One-sided or central approximation of `lim (f(a + s v) - f(a)) / s`.
pub fn directional_derivative<F>(
    f: &F,
    a: &DVector<f64>,
    v: &DVector<f64>,
    scheme: Scheme,
    step: f64,
) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if a.len() != v.len() {
        return Err(Error::Dimension {
            context: "direction".into(),
            expected: a.len(),
            found: v.len(),
        });
    }
    let s = step;
    Ok(match scheme {
        Scheme::Central => {
            let plus = eval_checked(f, &(a + v * s))?;
            let minus = eval_checked(f, &(a - v * s))?;
            (plus - minus) / (2.0 * s)
        }
        Scheme::Forward => {
            let plus = eval_checked(f, &(a + v * s))?;
            let base = eval_checked(f, a)?;
            (plus - base) / s
        }
        Scheme::ForwardRichardson => {
            let base = eval_checked(f, a)?;
            let one = eval_checked(f, &(a + v * s))?;
            let two = eval_checked(f, &(a + v * (2.0 * s)))?;
            (one * 4.0 - base * 3.0 - two) / (2.0 * s)
        }
    })
}

/// Matrix of `v -> D f(a, v)`; column `j` is the central derivative along `e_j`.
pub fn gateaux_matrix<F>(f: &F, a: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let base = eval_checked(f, a)?;
    let mut m = DMatrix::zeros(base.len(), a.len());
    for j in 0..a.len() {
        let e = DVector::from_fn(a.len(), |i, _| if i == j { 1.0 } else { 0.0 });
        let col = directional_derivative(f, a, &e, Scheme::Central, step)?;
        m.set_column(j, &col);
    }
    Ok(m)
}

/// Gradient of a scalar function, as a vector.
pub fn gradient<F>(f: &F, a: &DVector<f64>, step: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let wrapped = |p: &DVector<f64>| DVector::from_element(1, f(p));
    Ok(gateaux_matrix(&wrapped, a, step)?.row(0).transpose())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearityReport {
    pub linear: bool,
    pub worst_defect: f64,
    pub trials: usize,
}

/// Samples `v, w, c` and measures `|D(a, c v + w) - c D(a, v) - D(a, w)|`.
///
/// The first probe is always `v = e_1, w = 0, c = -1`, which exposes
/// directional derivatives that are not odd in `v`. Sampling is seeded, so
/// the result is reproducible.
pub fn linearity_check<F>(
    f: &F,
    a: &DVector<f64>,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<LinearityReport>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if trials == 0 {
        return Err(Error::Invalid("linearity check needs at least one trial".into()));
    }
    let dim = a.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mut linear = true;
    let dd = |v: &DVector<f64>| directional_derivative(f, a, v, Scheme::ForwardRichardson, DEFAULT_STEP);
    for trial in 0..trials {
        let (v, w, c) = if trial == 0 {
            let mut e = DVector::zeros(dim);
            e[0] = 1.0;
            (e, DVector::zeros(dim), -1.0)
        } else {
            (
                DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0)),
                DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0)),
                rng.gen_range(-2.0..2.0),
            )
        };
        let dv = dd(&v)?;
        let dw = dd(&w)?;
        let dcomb = dd(&(&v * c + &w))?;
        let defect = (&dcomb - &dv * c - &dw).amax();
        let scale = dcomb.amax().max(c.abs() * dv.amax()).max(dw.amax());
        worst = worst.max(defect);
        if defect > tol * (1.0 + scale) {
            linear = false;
        }
    }
    Ok(LinearityReport {
        linear,
        worst_defect: worst,
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvertibilityReport {
    pub invertible: bool,
    /// 2-norm condition number; infinite when singular.
    pub condition: f64,
}

pub fn invertibility_check(m: &DMatrix<f64>, cond_limit: f64) -> InvertibilityReport {
    if !m.is_square() || m.nrows() == 0 {
        return InvertibilityReport {
            invertible: false,
            condition: f64::INFINITY,
        };
    }
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    let factorizes = m.clone().lu().try_inverse().is_some();
    InvertibilityReport {
        invertible: factorizes && condition <= cond_limit,
        condition,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    pub nonneg_offdiag: bool,
    pub pos_diag: bool,
    /// Smallest diagonal entry.
    pub gamma: f64,
}

impl MonotonicityReport {
    pub fn holds(&self) -> bool {
        self.nonneg_offdiag && self.pos_diag
    }
}

pub fn monotonicity_check(m: &DMatrix<f64>) -> MonotonicityReport {
    let n = m.nrows().min(m.ncols());
    let mut nonneg_offdiag = true;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] < 0.0 {
                nonneg_offdiag = false;
            }
        }
    }
    let gamma = (0..n).map(|i| m[(i, i)]).fold(f64::INFINITY, f64::min);
    MonotonicityReport {
        nonneg_offdiag,
        pos_diag: gamma > 0.0,
        gamma,
    }
}

/// Differentials of one stage at the candidate point.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDerivatives {
    pub d1f: DMatrix<f64>,
    pub d2f: DMatrix<f64>,
    pub d1phi: DVector<f64>,
    pub d2phi: DVector<f64>,
    /// Rows `D g_t^k(u_t)`.
    pub dg: DMatrix<f64>,
    /// Rows `D e_t^j(u_t)`.
    pub de: DMatrix<f64>,
}

impl StageDerivatives {
    fn check(&self, t: usize) -> Result<()> {
        let all = self
            .d1f
            .iter()
            .chain(self.d2f.iter())
            .chain(self.d1phi.iter())
            .chain(self.d2phi.iter())
            .chain(self.dg.iter())
            .chain(self.de.iter());
        for v in all {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("stage derivatives at t = {t}"),
                    point: String::from("candidate"),
                });
            }
        }
        Ok(())
    }
}

/// Stage differentials at `(x_t, u_t)`; analytic overrides win over numerics.
pub fn stage_derivatives(
    problem: &ProblemSpec,
    x: &DVector<f64>,
    u: &DVector<f64>,
    t: usize,
    step: f64,
) -> Result<StageDerivatives> {
    let (n, d) = (problem.n, problem.d);
    let (d1f, d2f) = match &problem.dynamics.jacobians {
        Some(jac) => jac(t, x, u),
        None => {
            let fx = |xx: &DVector<f64>| problem.f(t, xx, u);
            let fu = |uu: &DVector<f64>| problem.f(t, x, uu);
            (gateaux_matrix(&fx, x, step)?, gateaux_matrix(&fu, u, step)?)
        }
    };
    let (d1phi, d2phi) = match &problem.criterion.gradients {
        Some(g) => g(t, x, u),
        None => {
            let px = |xx: &DVector<f64>| problem.phi(t, xx, u);
            let pu = |uu: &DVector<f64>| problem.phi(t, x, uu);
            (gradient(&px, x, step)?, gradient(&pu, u, step)?)
        }
    };
    let row_grad = |row: &crate::model::ControlRow| -> Result<DVector<f64>> {
        match &row.gradient {
            Some(g) => Ok(g(t, u)),
            None => gradient(&|uu: &DVector<f64>| (row.eval)(t, uu), u, step),
        }
    };
    let mut dg = DMatrix::zeros(problem.controls.num_ineq(), d);
    for (k, row) in problem.controls.g_rows.iter().enumerate() {
        dg.set_row(k, &row_grad(row)?.transpose());
    }
    let mut de = DMatrix::zeros(problem.controls.num_eq(), d);
    for (j, row) in problem.controls.e_rows.iter().enumerate() {
        de.set_row(j, &row_grad(row)?.transpose());
    }
    let out = StageDerivatives {
        d1f,
        d2f,
        d1phi,
        d2phi,
        dg,
        de,
    };
    let shapes = [
        (out.d1f.shape(), (n, n), "D1f"),
        (out.d2f.shape(), (n, d), "D2f"),
        ((out.d1phi.len(), 1), (n, 1), "D1phi"),
        ((out.d2phi.len(), 1), (d, 1), "D2phi"),
    ];
    for (found, expected, what) in shapes {
        if found != expected {
            return Err(Error::Dimension {
                context: format!("{what} at t = {t}"),
                expected: expected.0 * expected.1,
                found: found.0 * found.1,
            });
        }
    }
    out.check(t)?;
    Ok(out)
}

/// Stage differentials for `t = 0..=last` along the candidate.
pub fn trajectory_derivatives(
    problem: &ProblemSpec,
    traj: &Trajectory,
    last: usize,
    step: f64,
) -> Result<Vec<StageDerivatives>> {
    if last > traj.horizon() {
        return Err(Error::Horizon {
            requested: last,
            available: traj.horizon(),
        });
    }
    (0..=last)
        .into_par_iter()
        .map(|t| stage_derivatives(problem, &traj.states[t], &traj.controls[t], t, step))
        .collect()
}
