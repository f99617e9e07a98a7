//! Independent multiplier oracle on the monolithic finite program.
//!
//! The truncation is written as one nonlinear program in
//! `z = (x_1..x_h, u_0..u_h)`: maximize `Phi(z)` subject to
//! `F_t(z) = f_t(x_t, u_t) - x_{t+1} (>= or =) 0`, `G_t(z) >= 0`, `E_t(z) = 0`.
//! All Jacobians come from finite differences of these whole-vector maps, and
//! the multipliers from a Chebyshev residual linear program rather than a
//! nullspace, so it shares no assembly code with the main solver.

use nalgebra::{DMatrix, DVector};

use super::{FiniteHorizonProblem, NoCertificateReason, SolveOutcome, SolverOptions, TruncatedMultipliers};
use super::Assembly;
use crate::certificate::Variant;
use crate::diff::gateaux_matrix;
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus, Relation};

pub const DEFAULT_ORACLE_MAX_H: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub outcome: SolveOutcome,
    /// Rank of the stationarity matrix over the kept multipliers.
    pub rank: usize,
    pub unknowns: usize,
}

impl OracleReport {
    /// More than one free direction beyond normalization.
    pub fn rank_deficient(&self) -> bool {
        self.unknowns.saturating_sub(self.rank) > 1
    }
}

struct Monolithic<'a> {
    fh: &'a FiniteHorizonProblem,
    n: usize,
    d: usize,
    h: usize,
}

impl Monolithic<'_> {
    fn nz(&self) -> usize {
        self.n * self.h + self.d * (self.h + 1)
    }

    fn x(&self, z: &DVector<f64>, t: usize) -> DVector<f64> {
        if t == 0 {
            self.fh.sigma().clone()
        } else if t == self.h + 1 {
            self.fh.terminal_state.clone()
        } else {
            z.rows(self.n * (t - 1), self.n).into_owned()
        }
    }

    fn u(&self, z: &DVector<f64>, t: usize) -> DVector<f64> {
        z.rows(self.n * self.h + self.d * t, self.d).into_owned()
    }

    fn point(&self) -> DVector<f64> {
        let c = &self.fh.candidate;
        let mut z = DVector::zeros(self.nz());
        for t in 1..=self.h {
            z.rows_mut(self.n * (t - 1), self.n).copy_from(&c.states[t]);
        }
        for t in 0..=self.h {
            z.rows_mut(self.n * self.h + self.d * t, self.d).copy_from(&c.controls[t]);
        }
        z
    }

    fn objective(&self, z: &DVector<f64>) -> DVector<f64> {
        let p = &self.fh.problem;
        let s: f64 = (0..=self.h).map(|t| p.phi(t, &self.x(z, t), &self.u(z, t))).sum();
        DVector::from_element(1, s)
    }

    fn dynamics(&self, z: &DVector<f64>) -> DVector<f64> {
        let p = &self.fh.problem;
        let mut out = DVector::zeros(self.n * (self.h + 1));
        for t in 0..=self.h {
            let r = p.f(t, &self.x(z, t), &self.u(z, t)) - self.x(z, t + 1);
            out.rows_mut(self.n * t, self.n).copy_from(&r);
        }
        out
    }

    fn controls(&self, z: &DVector<f64>, equalities: bool) -> DVector<f64> {
        let c = &self.fh.problem.controls;
        let vals: Vec<f64> = (0..=self.h)
            .flat_map(|t| {
                let u = self.u(z, t);
                let v = if equalities { c.e_values(t, &u) } else { c.g_values(t, &u) };
                v.iter().copied().collect::<Vec<_>>()
            })
            .collect();
        DVector::from_vec(vals)
    }
}

/// Role of a kept multiplier column.
#[derive(Clone, Copy)]
enum Slot {
    Lambda0,
    P { t: usize, a: usize },
    Mu { t: usize, k: usize },
    Eq { t: usize, j: usize },
}

pub fn oracle_kkt(fh: &FiniteHorizonProblem, variant: Variant, opts: &SolverOptions) -> Result<OracleReport> {
    oracle_kkt_with_limit(fh, variant, opts, DEFAULT_ORACLE_MAX_H)
}

pub fn oracle_kkt_with_limit(
    fh: &FiniteHorizonProblem,
    variant: Variant,
    opts: &SolverOptions,
    max_h: usize,
) -> Result<OracleReport> {
    if fh.h > max_h {
        return Err(Error::Horizon {
            requested: fh.h,
            available: max_h,
        });
    }
    variant.check_compatible(&fh.problem)?;
    let mono = Monolithic {
        fh,
        n: fh.problem.n,
        d: fh.problem.d,
        h: fh.h,
    };
    let z0 = mono.point();
    let step = opts.step;
    let j_phi = gateaux_matrix(&|z: &DVector<f64>| mono.objective(z), &z0, step)?;
    let j_f = gateaux_matrix(&|z: &DVector<f64>| mono.dynamics(z), &z0, step)?;
    let mi = fh.problem.controls.num_ineq();
    let me = fh.problem.controls.num_eq();
    let j_g = if mi > 0 {
        gateaux_matrix(&|z: &DVector<f64>| mono.controls(z, false), &z0, step)?
    } else {
        DMatrix::zeros(0, mono.nz())
    };
    let j_e = if me > 0 {
        gateaux_matrix(&|z: &DVector<f64>| mono.controls(z, true), &z0, step)?
    } else {
        DMatrix::zeros(0, mono.nz())
    };

    let slack = fh.slack_rows(opts.active_tol);
    let actives = fh.active_sets(opts.active_tol)?;
    let mut slots = vec![Slot::Lambda0];
    let mut cols: Vec<DVector<f64>> = vec![j_phi.row(0).transpose()];
    for t in 0..=fh.h {
        for a in 0..mono.n {
            if !slack[t][a] {
                slots.push(Slot::P { t, a });
                cols.push(j_f.row(mono.n * t + a).transpose());
            }
        }
    }
    for (t, act) in actives.iter().enumerate() {
        for &k in &act.indices {
            slots.push(Slot::Mu { t, k });
            cols.push(j_g.row(mi * t + k).transpose());
        }
    }
    for t in 0..=fh.h {
        for j in 0..me {
            slots.push(Slot::Eq { t, j });
            cols.push(j_e.row(me * t + j).transpose());
        }
    }
    let kmat = DMatrix::from_columns(&cols);
    let norm = kmat.amax();
    let threshold = opts.residual_rel * (1.0 + norm);
    let rank = kmat.clone().svd(false, false).rank(opts.null_rel * (1.0 + norm));
    let signed = |s: Slot| match s {
        Slot::Lambda0 | Slot::Mu { .. } => true,
        Slot::P { .. } => variant.nonnegative_adjoint(),
        Slot::Eq { .. } => false,
    };

    let solver = ChebyshevLp::new(&kmat, &slots, signed, mono.n);
    let mut best: Option<(f64, DVector<f64>, bool)> = None;
    if let Some((delta, y)) = solver.solve(None) {
        best = Some((delta, y, false));
    }
    if best.as_ref().is_none_or(|(d, _, _)| *d > threshold) {
        for mask in 0..(1usize << mono.n.min(12)) {
            let signs: Vec<f64> = (0..mono.n).map(|a| if mask & (1 << a) != 0 { -1.0 } else { 1.0 }).collect();
            if let Some((delta, y)) = solver.solve(Some(&signs)) {
                if best.as_ref().is_none_or(|(d, _, _)| delta < *d) {
                    best = Some((delta, y, true));
                }
            }
        }
    }
    let unknowns = slots.len();
    let Some((_, y, abnormal)) = best else {
        return Ok(OracleReport {
            outcome: SolveOutcome::NoCertificate {
                h: fh.h,
                best_residual: f64::INFINITY,
                reason: NoCertificateReason::SignInfeasible,
            },
            rank,
            unknowns,
        });
    };

    let mut lambda0 = 0.0;
    let mut p = vec![DVector::zeros(mono.n); fh.h + 1];
    let mut mu = vec![DVector::zeros(mi); fh.h + 1];
    let mut eq = vec![DVector::zeros(me); fh.h + 1];
    for (s, v) in slots.iter().zip(y.iter()) {
        match *s {
            Slot::Lambda0 => lambda0 = *v,
            Slot::P { t, a } => p[t][a] = *v,
            Slot::Mu { t, k } => mu[t][k] = *v,
            Slot::Eq { t, j } => eq[t][j] = *v,
        }
    }
    let scale = lambda0.abs() + p[0].lp_norm(1);
    let y = y / scale;
    lambda0 /= scale;
    for v in p.iter_mut().chain(mu.iter_mut()).chain(eq.iter_mut()) {
        *v /= scale;
    }
    let resid = &kmat * &y;
    let ae: Vec<f64> = (1..=fh.h)
        .map(|t| resid.rows(mono.n * (t - 1), mono.n).amax())
        .collect();
    let wm: Vec<f64> = (0..=fh.h)
        .map(|t| resid.rows(mono.n * fh.h + mono.d * t, mono.d).amax())
        .collect();
    let worst = ae.iter().chain(&wm).copied().fold(0.0, f64::max);
    let outcome = if worst <= threshold {
        SolveOutcome::Certified(TruncatedMultipliers {
            h: fh.h,
            variant,
            lambda0,
            p,
            mu,
            eq,
            residual_ae: ae,
            residual_wm: wm,
            nullity: unknowns - rank,
            abnormal,
            system_norm: norm,
            assembly: Assembly::Stacked,
        })
    } else {
        SolveOutcome::NoCertificate {
            h: fh.h,
            best_residual: worst,
            reason: NoCertificateReason::ResidualTooLarge,
        }
    };
    Ok(OracleReport {
        outcome,
        rank,
        unknowns,
    })
}

/// `min delta` over `|K y|_inf <= delta` with sign constraints, then the
/// `|p_1|_1` tie-break at the optimal `delta`.
struct ChebyshevLp<'a> {
    kmat: &'a DMatrix<f64>,
    /// LP column of the nonnegative part, and of the nonpositive part if split.
    var_of: Vec<(usize, Option<usize>)>,
    /// Slot indices of the `p_1` components (`None` when slack-fixed).
    p1: Vec<Option<usize>>,
    num_y_vars: usize,
}

impl<'a> ChebyshevLp<'a> {
    fn new(kmat: &'a DMatrix<f64>, slots: &[Slot], signed: impl Fn(Slot) -> bool, n: usize) -> Self {
        let mut next = 0;
        let mut var_of = Vec::with_capacity(slots.len());
        let mut p1 = vec![None; n];
        for (i, s) in slots.iter().enumerate() {
            if let Slot::P { t: 0, a } = s {
                p1[*a] = Some(i);
            }
            if signed(*s) {
                var_of.push((next, None));
                next += 1;
            } else {
                var_of.push((next, Some(next + 1)));
                next += 2;
            }
        }
        Self {
            kmat,
            var_of,
            p1,
            num_y_vars: next,
        }
    }

    fn coeffs_of(&self, slot_coeffs: &[(usize, f64)], total: usize) -> Vec<f64> {
        let mut row = vec![0.0; total];
        for &(i, c) in slot_coeffs {
            let (pos, neg) = self.var_of[i];
            row[pos] += c;
            if let Some(neg) = neg {
                row[neg] -= c;
            }
        }
        row
    }

    fn build(&self, orthant: Option<&[f64]>, delta_cap: Option<f64>) -> LinearProgram {
        let n = self.p1.len();
        let delta = self.num_y_vars;
        let total = self.num_y_vars + 1 + n;
        let mut lp = LinearProgram::new(total);
        for r in 0..self.kmat.nrows() {
            let entries: Vec<(usize, f64)> = (0..self.kmat.ncols()).map(|c| (c, self.kmat[(r, c)])).collect();
            let mut up = self.coeffs_of(&entries, total);
            up[delta] = -1.0;
            lp.add(up, Relation::Le, 0.0);
            let mut down = self.coeffs_of(&entries, total);
            down[delta] = 1.0;
            lp.add(down, Relation::Ge, 0.0);
        }
        lp.add(self.coeffs_of(&[(0, 1.0)], total), Relation::Eq, if orthant.is_some() { 0.0 } else { 1.0 });
        if let Some(signs) = orthant {
            let mut sum = Vec::new();
            for (a, slot) in self.p1.iter().enumerate() {
                if let Some(i) = slot {
                    sum.push((*i, signs[a]));
                    lp.add(self.coeffs_of(&[(*i, signs[a])], total), Relation::Ge, 0.0);
                }
            }
            lp.add(self.coeffs_of(&sum, total), Relation::Eq, 1.0);
        }
        for (a, slot) in self.p1.iter().enumerate() {
            if let Some(i) = slot {
                let mut up = self.coeffs_of(&[(*i, -1.0)], total);
                up[delta + 1 + a] = 1.0;
                lp.add(up, Relation::Ge, 0.0);
                let mut down = self.coeffs_of(&[(*i, 1.0)], total);
                down[delta + 1 + a] = 1.0;
                lp.add(down, Relation::Ge, 0.0);
            }
        }
        match delta_cap {
            None => lp.costs[delta] = 1.0,
            Some(cap) => {
                let mut row = vec![0.0; total];
                row[delta] = 1.0;
                lp.add(row, Relation::Le, cap);
                lp.costs[delta + 1..].iter_mut().for_each(|c| *c = 1.0);
            }
        }
        lp
    }

    fn extract(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.var_of.len(),
            self.var_of.iter().map(|&(pos, neg)| x[pos] - neg.map_or(0.0, |j| x[j])),
        )
    }

    fn solve(&self, orthant: Option<&[f64]>) -> Option<(f64, DVector<f64>)> {
        let first = self.build(orthant, None).solve();
        if first.status != LpStatus::Optimal {
            return None;
        }
        let delta = first.objective;
        let cap = delta * (1.0 + 1e-9) + 1e-13;
        let second = self.build(orthant, Some(cap)).solve();
        let x = if second.status == LpStatus::Optimal { second.x } else { first.x };
        let y = self.extract(&x);
        Some(((self.kmat * &y).amax(), y))
    }
}
