//! Truncation sweeps: solve at increasing horizons, track the multipliers
//! on a fixed window and assemble limit candidates.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::certificate::{adjoint_forward_with_limit, Certificate, Variant};
use crate::diff::trajectory_derivatives;
use crate::error::{Error, Result};
use crate::lab::recover::{cauchy_tail, least_squares_coefficients, DEFAULT_CAUCHY_TOL};
use crate::model::{ProblemSpec, Trajectory};
use crate::qualification::active_set;
use crate::truncation::{solve_at, NoCertificateReason, SolveOutcome, SolverOptions, TruncatedMultipliers};

/// `|lambda0|` below which a run counts as abnormal for sign alignment.
const ABNORMAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub solver: SolverOptions,
    pub cauchy_tol: f64,
    pub parallel: bool,
    /// Length of the limit adjoint; defaults to the tracked window.
    pub extend_to: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            cauchy_tol: DEFAULT_CAUCHY_TOL,
            parallel: true,
            extend_to: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub h: usize,
    pub multipliers: TruncatedMultipliers,
    /// The solver output was negated to align signs with earlier runs.
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailedRun {
    pub h: usize,
    pub best_residual: f64,
    pub reason: NoCertificateReason,
}

/// Successive differences (max norm) of one tracked quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantity {
    pub label: String,
    /// `diffs[i]` compares run `i + 1` with run `i`.
    pub diffs: Vec<f64>,
    pub convergent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variant: Variant,
    /// Tracked window `W`: `p_1..p_W` and control multipliers at `0..W-1`.
    pub window: usize,
    pub runs: Vec<SweepRun>,
    pub failed: Vec<FailedRun>,
    pub cauchy_profile: Vec<Quantity>,
    pub converged: bool,
    pub limits: Option<Certificate>,
    pub notes: Vec<String>,
}

impl SweepResult {
    pub fn last(&self) -> Option<&SweepRun> {
        self.runs.last()
    }

    /// Largest difference over the last tail of every tracked quantity.
    pub fn tail_difference(&self) -> f64 {
        self.cauchy_profile
            .iter()
            .filter_map(|q| {
                let k = q.diffs.len().min(3);
                q.diffs[q.diffs.len() - k..].iter().copied().reduce(f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Parses `A..B` or `A..B:step` (inclusive) or a comma list.
pub fn parse_horizons(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::Invalid(format!("bad horizon list `{text}` (use A..B[:step] or a,b,c)"));
    let list: Vec<usize> = if let Some((a, rest)) = text.split_once("..") {
        let (b, step) = match rest.split_once(':') {
            Some((b, s)) => (b, s.trim().parse::<usize>().map_err(|_| bad())?),
            None => (rest, 1),
        };
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if step == 0 || b < a {
            return Err(bad());
        }
        (a..=b).step_by(step).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid(format!("horizon list `{text}` must be strictly increasing")));
    }
    Ok(list)
}

fn align(m: TruncatedMultipliers) -> (TruncatedMultipliers, bool) {
    if m.lambda0.abs() > ABNORMAL_TOL {
        return (m, false);
    }
    let p1 = m.p1();
    let dominant = p1.iamax();
    if !p1.is_empty() && p1[dominant] < 0.0 {
        (m.negated(), true)
    } else {
        (m, false)
    }
}

fn vec_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    if a.is_empty() {
        0.0
    } else {
        (a - b).amax()
    }
}

fn profile(runs: &[SweepRun], window: usize, tol: f64) -> Vec<Quantity> {
    let pairs = || runs.windows(2).map(|w| (&w[0].multipliers, &w[1].multipliers));
    let mut out = Vec::new();
    let mut push = |label: String, diffs: Vec<f64>| {
        let convergent = cauchy_tail(&diffs, tol);
        out.push(Quantity {
            label,
            diffs,
            convergent,
        });
    };
    push("lambda0".into(), pairs().map(|(a, b)| (a.lambda0 - b.lambda0).abs()).collect());
    for t in 1..=window {
        push(format!("p_{t}"), pairs().map(|(a, b)| vec_diff(&a.p[t - 1], &b.p[t - 1])).collect());
    }
    let Some(first) = runs.first() else {
        return out;
    };
    if !first.multipliers.mu[0].is_empty() {
        for t in 0..window {
            push(format!("mu_{t}"), pairs().map(|(a, b)| vec_diff(&a.mu[t], &b.mu[t])).collect());
        }
    }
    if !first.multipliers.eq[0].is_empty() {
        for t in 0..window {
            push(format!("eq_{t}"), pairs().map(|(a, b)| vec_diff(&a.eq[t], &b.eq[t])).collect());
        }
    }
    out
}

/// Limit candidate from the last run on the window, extended to `big_t`
/// adjoint vectors through the forward recursion.
fn limits(
    problem: &ProblemSpec,
    candidate: &Trajectory,
    last: &TruncatedMultipliers,
    window: usize,
    big_t: usize,
    opts: &SweepOptions,
) -> Result<Certificate> {
    let mut cert = last.window_certificate(window);
    if big_t <= window {
        return Ok(cert);
    }
    let derivs = trajectory_derivatives(problem, candidate, big_t - 1, opts.solver.step)?;
    let tail = adjoint_forward_with_limit(
        cert.lambda0,
        &cert.p[window - 1],
        &derivs[window - 1..],
        big_t - window + 1,
        opts.solver.cond_limit,
    )?;
    cert.p.extend(tail.into_iter().skip(1));
    for (t, sd) in derivs.iter().enumerate().take(big_t).skip(window) {
        let g = problem.controls.g_values(t, &candidate.controls[t]);
        let active = active_set(g.as_slice(), opts.solver.active_tol)?;
        let mut rows: Vec<DVector<f64>> = active.indices.iter().map(|k| sd.dg.row(*k).transpose()).collect();
        rows.extend((0..sd.de.nrows()).map(|j| sd.de.row(j).transpose()));
        let combo = -(sd.d2f.transpose() * &cert.p[t] + &sd.d2phi * cert.lambda0);
        let coef = least_squares_coefficients(&rows, &combo);
        let mut mu = DVector::zeros(sd.dg.nrows());
        for (i, k) in active.indices.iter().enumerate() {
            mu[*k] = coef[i];
        }
        cert.mu.push(mu);
        cert.eq_lambda.push(coef.rows(active.indices.len(), sd.de.nrows()).into_owned());
    }
    Ok(cert)
}

pub fn horizon_sweep(
    problem: &ProblemSpec,
    candidate: &Trajectory,
    horizons: &[usize],
    variant: Variant,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    if horizons.len() < 2 {
        return Err(Error::Invalid("a sweep needs at least two horizons".into()));
    }
    if horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("horizons must be strictly increasing".into()));
    }
    if horizons[0] < 2 {
        return Err(Error::Invalid("the smallest horizon must be >= 2".into()));
    }
    let window = horizons[0] - 1;
    let solve = |h: &usize| solve_at(problem, candidate, *h, variant, &opts.solver);
    let outcomes: Vec<Result<SolveOutcome>> = if opts.parallel {
        horizons.par_iter().map(solve).collect()
    } else {
        horizons.iter().map(solve).collect()
    };
    let mut runs = Vec::new();
    let mut failed = Vec::new();
    for (h, out) in horizons.iter().zip(outcomes) {
        match out? {
            SolveOutcome::Certified(m) => {
                let (multipliers, flipped) = align(m);
                runs.push(SweepRun {
                    h: *h,
                    multipliers,
                    flipped,
                });
            }
            SolveOutcome::NoCertificate {
                h,
                best_residual,
                reason,
            } => failed.push(FailedRun {
                h,
                best_residual,
                reason,
            }),
        }
    }
    let cauchy_profile = profile(&runs, window, opts.cauchy_tol);
    let converged = failed.is_empty() && runs.len() >= 2 && cauchy_profile.iter().all(|q| q.convergent);
    let mut notes = Vec::new();
    let limits = match runs.last() {
        Some(last) if converged => {
            let big_t = opts.extend_to.unwrap_or(window).max(window);
            match limits(problem, candidate, &last.multipliers, window, big_t, opts) {
                Ok(c) => Some(c),
                Err(e) => {
                    notes.push(format!("limit extension to {big_t} failed: {e}; using window {window}"));
                    Some(limits(problem, candidate, &last.multipliers, window, window, opts)?)
                }
            }
        }
        _ => None,
    };
    Ok(SweepResult {
        variant,
        window,
        runs,
        failed,
        cauchy_profile,
        converged,
        limits,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::verify;
    use crate::lab::catalog;

    #[test]
    fn horizon_lists() {
        assert_eq!(parse_horizons("10..40:10").unwrap(), vec![10, 20, 30, 40]);
        assert_eq!(parse_horizons("3,5,7").unwrap(), vec![3, 5, 7]);
        assert!(parse_horizons("5..3").is_err());
        assert!(parse_horizons("3,3").is_err());
        assert!(parse_horizons("x").is_err());
    }

    #[test]
    fn regulator_sweep_converges_and_verifies() {
        let inst = catalog::lq1(100).unwrap();
        let opts = SweepOptions {
            extend_to: Some(20),
            ..SweepOptions::default()
        };
        let res = horizon_sweep(&inst.problem, &inst.candidate, &[10, 20, 40, 80], inst.variant, &opts).unwrap();
        assert!(res.converged, "{:?}", res.cauchy_profile);
        assert_eq!(res.window, 9);
        let cert = res.limits.unwrap();
        assert_eq!(cert.window(), 20);
        let rep = verify(&inst.problem, &inst.candidate, &cert, 1e-6).unwrap();
        assert!(rep.pass(), "{}", rep.summary());
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let inst = catalog::con1(40).unwrap();
        let par = horizon_sweep(&inst.problem, &inst.candidate, &[4, 8, 16], inst.variant, &SweepOptions::default())
            .unwrap();
        let seq_opts = SweepOptions {
            parallel: false,
            ..SweepOptions::default()
        };
        let seq = horizon_sweep(&inst.problem, &inst.candidate, &[4, 8, 16], inst.variant, &seq_opts).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn failed_runs_are_recorded() {
        let inst = catalog::mix1(40).unwrap();
        let res = horizon_sweep(
            &inst.problem,
            &inst.candidate,
            &[4, 8],
            Variant::MixedInequation,
            &SweepOptions::default(),
        )
        .unwrap();
        assert!(!res.converged);
        assert_eq!(res.failed.len(), 2);
        assert!(res.limits.is_none());
    }
}
