//! Finite-horizon truncation and multiplier construction.
//!
//! A candidate that is optimal on the infinite horizon stays optimal on
//! every truncation `0..=h` once `x_0 = sigma` and `x_{h+1}` are pinned. The
//! multipliers of that finite program are computed here as a normalized
//! element of the nullspace of the stationarity system.

mod assembly;
mod oracle;

use nalgebra::{DMatrix, DVector};

use crate::certificate::{Certificate, Variant};
use crate::diff::{
    invertibility_check, monotonicity_check, trajectory_derivatives, StageDerivatives,
    DEFAULT_COND_LIMIT, DEFAULT_STEP,
};
use crate::error::{Error, Result};
use crate::model::{
    check_admissibility, ControlVariant, ProblemSpec, SystemKind, Trajectory, DEFAULT_FEASIBILITY_TOL,
};
use crate::qualification::{
    active_set, separation_check, span_co_disjoint_check, ActiveSet, FunctionalFamily,
    DEFAULT_ACTIVE_TOL,
};

pub use oracle::{oracle_kkt, OracleReport, DEFAULT_ORACLE_MAX_H};

/// Truncation of a problem at horizon `h` around a candidate.
#[derive(Debug, Clone)]
pub struct FiniteHorizonProblem {
    pub h: usize,
    pub problem: ProblemSpec,
    /// Candidate restricted to `x_0..=x_{h+1}`, `u_0..=u_h`.
    pub candidate: Trajectory,
    pub terminal_state: DVector<f64>,
    /// `f_t(x_t, u_t) - x_{t+1}` for `t = 0..=h`.
    pub slack: Vec<DVector<f64>>,
}

impl FiniteHorizonProblem {
    pub fn kind(&self) -> SystemKind {
        self.problem.kind
    }

    pub fn sigma(&self) -> &DVector<f64> {
        &self.problem.sigma
    }

    pub fn derivatives(&self, step: f64) -> Result<Vec<StageDerivatives>> {
        trajectory_derivatives(&self.problem, &self.candidate, self.h, step)
    }

    /// Active inequality rows per stage.
    pub fn active_sets(&self, tol: f64) -> Result<Vec<ActiveSet>> {
        (0..=self.h)
            .map(|t| {
                let g = self.problem.controls.g_values(t, &self.candidate.controls[t]);
                active_set(g.as_slice(), tol)
            })
            .collect()
    }

    /// Dynamic rows `(t, alpha)` whose slack exceeds `tol`; only meaningful
    /// for inequation systems.
    pub fn slack_rows(&self, tol: f64) -> Vec<Vec<bool>> {
        self.slack
            .iter()
            .map(|s| {
                s.iter()
                    .map(|v| self.problem.kind == SystemKind::Inequation && *v > tol)
                    .collect()
            })
            .collect()
    }
}

/// Pins `x_0 = sigma` and `x_{h+1}` to the candidate and keeps stages `0..=h`.
pub fn reduce(problem: &ProblemSpec, candidate: &Trajectory, h: usize) -> Result<FiniteHorizonProblem> {
    if h + 1 > problem.horizon {
        return Err(Error::Horizon {
            requested: h + 1,
            available: problem.horizon,
        });
    }
    if h > candidate.horizon() {
        return Err(Error::Horizon {
            requested: h + 1,
            available: candidate.horizon() + 1,
        });
    }
    let truncated = candidate.truncated(h);
    let report = check_admissibility(problem, &truncated, DEFAULT_FEASIBILITY_TOL)?;
    if !report.feasible {
        return Err(Error::Inadmissible(Box::new(report)));
    }
    Ok(FiniteHorizonProblem {
        h,
        problem: problem.clone(),
        terminal_state: truncated.states[h + 1].clone(),
        candidate: truncated,
        slack: report.slack,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assembly {
    /// All adjoint vectors are unknowns; adjoint and stationarity rows are stacked.
    Stacked,
    /// Adjoint vectors are eliminated through the forward recursion, leaving
    /// `(lambda0, p_1)` and the control multipliers.
    AdjointReduced,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub assembly: Assembly,
    pub active_tol: f64,
    pub step: f64,
    /// Accept when every residual is below `residual_rel * (1 + system norm)`.
    pub residual_rel: f64,
    /// Singular values below `null_rel * (1 + sigma_max)` span the nullspace.
    pub null_rel: f64,
    pub cond_limit: f64,
    pub check_hypotheses: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            assembly: Assembly::Stacked,
            active_tol: DEFAULT_ACTIVE_TOL,
            step: DEFAULT_STEP,
            residual_rel: 1e-7,
            null_rel: 1e-7,
            cond_limit: DEFAULT_COND_LIMIT,
            check_hypotheses: true,
        }
    }
}

/// Normalized multipliers of one truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMultipliers {
    pub h: usize,
    pub variant: Variant,
    pub lambda0: f64,
    /// `p[i]` is `p_{i+1}`, for `i = 0..=h`.
    pub p: Vec<DVector<f64>>,
    /// `mu[t]` for `t = 0..=h`; inactive rows are exactly zero.
    pub mu: Vec<DVector<f64>>,
    /// `eq[t]` for `t = 0..=h`.
    pub eq: Vec<DVector<f64>>,
    /// `residual_ae[i]` is the adjoint defect at `t = i + 1`.
    pub residual_ae: Vec<f64>,
    /// `residual_wm[t]` is the stationarity defect at `t`.
    pub residual_wm: Vec<f64>,
    pub nullity: usize,
    pub abnormal: bool,
    pub system_norm: f64,
    pub assembly: Assembly,
}

impl TruncatedMultipliers {
    pub fn p1(&self) -> &DVector<f64> {
        &self.p[0]
    }

    pub fn normalization(&self) -> f64 {
        self.lambda0.abs() + self.p[0].lp_norm(1)
    }

    pub fn max_residual_ae(&self) -> f64 {
        self.residual_ae.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_residual_wm(&self) -> f64 {
        self.residual_wm.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        self.max_residual_ae().max(self.max_residual_wm())
    }

    /// The first `window` stages as a certificate, `window` clamped to `1..=h + 1`.
    pub fn window_certificate(&self, window: usize) -> Certificate {
        let w = window.clamp(1, self.p.len());
        Certificate {
            variant: self.variant,
            lambda0: self.lambda0,
            p: self.p[..w].to_vec(),
            mu: self.mu[..w].to_vec(),
            eq_lambda: self.eq[..w].to_vec(),
        }
    }

    /// Multiplies every multiplier by `-1`; residuals are unchanged.
    pub fn negated(&self) -> Self {
        let neg = |v: &Vec<DVector<f64>>| v.iter().map(|x| -x).collect();
        Self {
            lambda0: -self.lambda0,
            p: neg(&self.p),
            mu: neg(&self.mu),
            eq: neg(&self.eq),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoCertificateReason {
    /// The stationarity system has full column rank.
    NoNullspace,
    /// Nullspace directions exist but none satisfies the sign constraints.
    SignInfeasible,
    /// Sign-feasible directions exist but all have `lambda0 = 0, p_1 = 0`.
    NotNormalizable,
    /// A direction was found but its residual is above the threshold.
    ResidualTooLarge,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveOutcome {
    Certified(TruncatedMultipliers),
    NoCertificate {
        h: usize,
        best_residual: f64,
        reason: NoCertificateReason,
    },
}

impl SolveOutcome {
    pub fn certified(&self) -> Option<&TruncatedMultipliers> {
        match self {
            SolveOutcome::Certified(m) => Some(m),
            SolveOutcome::NoCertificate { .. } => None,
        }
    }

    pub fn into_certified(self) -> Option<TruncatedMultipliers> {
        match self {
            SolveOutcome::Certified(m) => Some(m),
            SolveOutcome::NoCertificate { .. } => None,
        }
    }

    pub fn best_residual(&self) -> f64 {
        match self {
            SolveOutcome::Certified(m) => m.max_residual(),
            SolveOutcome::NoCertificate { best_residual, .. } => *best_residual,
        }
    }
}

/// Largest Frobenius norm among the stage differentials.
pub fn system_norm(derivs: &[StageDerivatives]) -> f64 {
    derivs
        .iter()
        .map(|d| {
            d.d1f
                .norm()
                .max(d.d2f.norm())
                .max(d.d1phi.norm())
                .max(d.d2phi.norm())
                .max(d.dg.norm())
                .max(d.de.norm())
        })
        .fold(0.0, f64::max)
}

/// Max-norm defects of the adjoint equation (`t = 1..=h`) and of weak
/// stationarity (`t = 0..=h`).
pub fn stage_residuals(
    derivs: &[StageDerivatives],
    lambda0: f64,
    p: &[DVector<f64>],
    mu: &[DVector<f64>],
    eq: &[DVector<f64>],
) -> (Vec<f64>, Vec<f64>) {
    let h = derivs.len() - 1;
    let ae = (1..=h)
        .map(|t| {
            let d = &derivs[t];
            (&p[t - 1] - d.d1f.tr_mul(&p[t]) - &d.d1phi * lambda0).amax()
        })
        .collect();
    let wm = (0..=h)
        .map(|t| {
            let d = &derivs[t];
            let mut r = d.d2f.tr_mul(&p[t]) + &d.d2phi * lambda0;
            if d.dg.nrows() > 0 {
                r += d.dg.tr_mul(&mu[t]);
            }
            if d.de.nrows() > 0 {
                r += d.de.tr_mul(&eq[t]);
            }
            r.amax()
        })
        .collect();
    (ae, wm)
}

fn rows_of(m: &DMatrix<f64>, which: impl Iterator<Item = usize>) -> Vec<DVector<f64>> {
    which.map(|k| m.row(k).transpose()).collect()
}

/// Checks the structural hypotheses of `variant` on the truncation.
pub fn check_hypotheses(
    fh: &FiniteHorizonProblem,
    derivs: &[StageDerivatives],
    variant: Variant,
    opts: &SolverOptions,
) -> Result<()> {
    variant.check_compatible(&fh.problem)?;
    let hyp = |t: usize, detail: String| Error::Hypothesis {
        variant: variant.name().into(),
        t,
        detail,
    };
    match variant {
        Variant::InteriorInvertible => {
            for (t, d) in derivs.iter().enumerate().skip(1) {
                let r = invertibility_check(&d.d1f, opts.cond_limit);
                if !r.invertible {
                    return Err(Error::Singular {
                        t,
                        condition: r.condition,
                    });
                }
            }
        }
        Variant::InteriorMonotone => {
            for (t, d) in derivs.iter().enumerate().skip(1) {
                let m = monotonicity_check(&d.d1f);
                if !m.pos_diag {
                    return Err(Error::NonMonotone { t, gamma: m.gamma });
                }
                if !m.nonneg_offdiag {
                    return Err(hyp(t, "negative off-diagonal state differential".into()));
                }
            }
        }
        Variant::InequalityConstrained | Variant::MixedInequation | Variant::MixedEquation => {
            let actives = fh.active_sets(opts.active_tol)?;
            let mixed = fh.problem.controls.variant == ControlVariant::Mixed;
            for (t, (d, act)) in derivs.iter().zip(&actives).enumerate() {
                let eq_family = if mixed {
                    let rank = d.de.clone().svd(false, false).rank(1e-10 * (1.0 + d.de.norm()));
                    if rank < d.de.nrows() {
                        return Err(hyp(t, format!("equality differentials have rank {rank} < {}", d.de.nrows())));
                    }
                    Some(FunctionalFamily::new(rows_of(&d.de, 0..d.de.nrows()))?)
                } else {
                    None
                };
                if act.indices.is_empty() {
                    continue;
                }
                let ineq = FunctionalFamily::new(rows_of(&d.dg, act.indices.iter().copied()))?;
                let cert = match &eq_family {
                    Some(e) => span_co_disjoint_check(e, &ineq)?,
                    None => separation_check(&ineq)?,
                };
                if !cert.is_positive() {
                    return Err(hyp(t, "active constraint differentials admit no separating direction".into()));
                }
            }
        }
    }
    Ok(())
}

/// Multipliers of the truncation `fh` for the conditions of `variant`.
pub fn solve_multipliers(
    fh: &FiniteHorizonProblem,
    derivs: &[StageDerivatives],
    variant: Variant,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    if derivs.len() != fh.h + 1 {
        return Err(Error::Dimension {
            context: "stage derivatives".into(),
            expected: fh.h + 1,
            found: derivs.len(),
        });
    }
    if opts.check_hypotheses {
        check_hypotheses(fh, derivs, variant, opts)?;
    } else {
        variant.check_compatible(&fh.problem)?;
    }
    assembly::solve(fh, derivs, variant, opts)
}

/// `reduce` + stage derivatives + `solve_multipliers`.
pub fn solve_at(
    problem: &ProblemSpec,
    candidate: &Trajectory,
    h: usize,
    variant: Variant,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    let fh = reduce(problem, candidate, h)?;
    let derivs = fh.derivatives(opts.step)?;
    solve_multipliers(&fh, &derivs, variant, opts)
}
