//! Dense two-phase simplex: Bland's rule for the entering column, largest
//! pivot among tied leaving rows.
//!
//! Only used internally to produce separation certificates and to select a
//! representative inside a multiplier cone. Problems are desk scale (a few
//! hundred rows at most), so a full tableau is kept.

const PIVOT_EPS: f64 = 1e-11;
const PIVOT_REL: f64 = 1e-7;
/// Degenerate pivots in a row before ties fall back to Bland's rule.
const BLAND_AFTER: usize = 50;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Relation {
    Eq,
    Ge,
    Le,
}

#[derive(Debug, Clone)]
pub(crate) struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `minimize costs·x` subject to the constraints and `x >= 0`.
#[derive(Debug, Clone)]
pub(crate) struct LinearProgram {
    pub costs: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// When infeasible: `y` with `y·b > 0` and `y·A_j <= 0` for every
    /// structural column `j` (slack columns included), in the orientation of
    /// the constraints as given.
    pub farkas: Option<Vec<f64>>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            costs: vec![0.0; num_vars],
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.costs.len());
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn solve(&self) -> LpSolution {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    /// +1/-1 applied to each original row to make the rhs nonnegative.
    flips: Vec<f64>,
    num_structural: usize,
    num_cols: usize,
    active: Vec<bool>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.constraints.len();
        let n = lp.num_vars();
        let num_slack = lp
            .constraints
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();
        let num_structural = n + num_slack;
        let num_cols = num_structural + m;
        let mut rows = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        let mut flips = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut slack_col = n;
        for (i, c) in lp.constraints.iter().enumerate() {
            let mut row = vec![0.0; num_cols];
            row[..n].copy_from_slice(&c.coeffs);
            match c.relation {
                Relation::Eq => {}
                Relation::Ge => {
                    row[slack_col] = -1.0;
                    slack_col += 1;
                }
                Relation::Le => {
                    row[slack_col] = 1.0;
                    slack_col += 1;
                }
            }
            let sign = if c.rhs < 0.0 { -1.0 } else { 1.0 };
            if sign < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
            row[num_structural + i] = 1.0;
            rows.push(row);
            rhs.push(sign * c.rhs);
            flips.push(sign);
            basis.push(num_structural + i);
        }
        Self {
            rows,
            rhs,
            basis,
            flips,
            num_structural,
            num_cols,
            active: vec![true; m],
        }
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.rows.len() {
            if i == r || !self.active[i] {
                continue;
            }
            let f = self.rows[i][col];
            if f == 0.0 {
                continue;
            }
            for (v, pv) in self.rows[i].iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.rows[i][col] = 0.0;
            self.rhs[i] -= f * pivot_rhs;
        }
        self.basis[r] = col;
    }

    fn reduced_costs(&self, costs: &[f64], allowed: usize) -> Vec<f64> {
        let mut rc = costs[..allowed].to_vec();
        for (i, row) in self.rows.iter().enumerate() {
            if !self.active[i] {
                continue;
            }
            let cb = costs[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            for (r, v) in rc.iter_mut().zip(row) {
                *r -= cb * v;
            }
        }
        rc
    }

    /// Bland's rule simplex over columns `0..allowed`. Returns false if unbounded.
    /// Leaving row for `enter`: minimum ratio over entries above the pivot
    /// floor, ties to the larger pivot element and then the smaller basis
    /// index (only the index under `bland`). `Err(true)` when only noise-level positive entries exist,
    /// `Err(false)` when the column has no positive entry.
    fn leaving_row(&self, enter: usize, bland: bool) -> std::result::Result<usize, bool> {
        let col_max = (0..self.rows.len())
            .filter(|&i| self.active[i])
            .fold(0.0_f64, |m, i| m.max(self.rows[i][enter].abs()));
        let floor = PIVOT_EPS.max(PIVOT_REL * col_max);
        let mut leave: Option<(usize, f64, f64)> = None;
        let mut tiny = false;
        for i in 0..self.rows.len() {
            if !self.active[i] {
                continue;
            }
            let a = self.rows[i][enter];
            if a <= floor {
                tiny |= a > PIVOT_EPS;
                continue;
            }
            let ratio = self.rhs[i].max(0.0) / a;
            let better = match leave {
                None => true,
                Some((li, lr, la)) => {
                    let tie = 1e-14 * (1.0 + lr.abs());
                    let tied = ratio <= lr + tie;
                    let by_index = self.basis[i] < self.basis[li];
                    ratio < lr - tie
                        || (tied && bland && by_index)
                        || (tied && !bland && (a > la * (1.0 + 1e-9) || (a >= la * (1.0 - 1e-9) && by_index)))
                }
            };
            if better {
                leave = Some((i, ratio, a));
            }
        }
        leave.map(|(r, _, _)| r).ok_or(tiny)
    }

    /// Simplex over columns `0..allowed`, entering columns in Bland order.
    /// Columns whose only pivots are noise are passed over; when no column
    /// admits a stable pivot the current basis is accepted. Returns
    /// `Some(false)` if unbounded, `None` at the pivot limit.
    fn iterate(&mut self, costs: &[f64], allowed: usize) -> Option<bool> {
        let mut streak = 0usize;
        'pivots: for _ in 0..MAX_PIVOTS {
            let rc = self.reduced_costs(costs, allowed);
            let scale = 1.0 + costs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
            for enter in (0..allowed).filter(|&j| rc[j] < -PIVOT_EPS * scale) {
                match self.leaving_row(enter, streak > BLAND_AFTER) {
                    Ok(r) => {
                        let degenerate = self.rhs[r].abs() <= 1e-14;
                        streak = if degenerate { streak + 1 } else { 0 };
                        self.pivot(r, enter);
                        continue 'pivots;
                    }
                    Err(false) => return Some(false),
                    Err(true) => {}
                }
            }
            return Some(true);
        }
        None
    }

    fn run(mut self, lp: &LinearProgram) -> LpSolution {
        let n = lp.num_vars();
        let m = self.rows.len();
        let mut phase1 = vec![0.0; self.num_cols];
        for c in phase1.iter_mut().skip(self.num_structural) {
            *c = 1.0;
        }
        let limit = |x: Vec<f64>| LpSolution {
            status: LpStatus::IterationLimit,
            x,
            objective: f64::NAN,
            farkas: None,
        };
        if self.iterate(&phase1, self.num_cols).is_none() {
            return limit(vec![0.0; n]);
        }
        let infeas: f64 = (0..m)
            .filter(|&i| self.basis[i] >= self.num_structural)
            .map(|i| self.rhs[i])
            .sum();
        let bscale = 1.0 + lp.constraints.iter().fold(0.0_f64, |a, c| a.max(c.rhs.abs()));
        if infeas > 1e-9 * bscale {
            // Reduced cost of artificial i is 1 - y_i.
            let rc = self.reduced_costs(&phase1, self.num_cols);
            let y: Vec<f64> = (0..m)
                .map(|i| (1.0 - rc[self.num_structural + i]) * self.flips[i])
                .collect();
            return LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; n],
                objective: f64::NAN,
                farkas: Some(y),
            };
        }
        // Drive zero-level artificials out of the basis.
        for i in 0..m {
            if self.basis[i] < self.num_structural {
                continue;
            }
            let col = (0..self.num_structural).find(|&j| self.rows[i][j].abs() > 1e-9);
            match col {
                Some(j) => self.pivot(i, j),
                None => self.active[i] = false,
            }
        }
        let mut phase2 = vec![0.0; self.num_cols];
        phase2[..n].copy_from_slice(&lp.costs);
        let status = match self.iterate(&phase2, self.num_structural) {
            None => return limit(self.primal(n)),
            Some(true) => LpStatus::Optimal,
            Some(false) => LpStatus::Unbounded,
        };
        let x = self.primal(n);
        let objective = lp.costs.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpSolution {
            status,
            x,
            objective,
            farkas: None,
        }
    }

    fn primal(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (i, &b) in self.basis.iter().enumerate() {
            if self.active[i] && b < n {
                x[b] = self.rhs[i].max(0.0);
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_optimum() {
        // min -x - y  s.t. x + 2y <= 4, 3x + y <= 6
        let mut lp = LinearProgram::new(2);
        lp.costs = vec![-1.0, -1.0];
        lp.add(vec![1.0, 2.0], Relation::Le, 4.0);
        lp.add(vec![3.0, 1.0], Relation::Le, 6.0);
        let s = lp.solve();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.6).abs() < 1e-12);
        assert!((s.x[1] - 1.2).abs() < 1e-12);
        assert!((s.objective + 2.8).abs() < 1e-12);
    }

    #[test]
    fn infeasible_gives_farkas_ray() {
        // x >= 1, x <= -1 is impossible with x >= 0 anyway; use x1 - x2 >= 1, x2 - x1 >= 1.
        let mut lp = LinearProgram::new(2);
        lp.add(vec![1.0, -1.0], Relation::Ge, 1.0);
        lp.add(vec![-1.0, 1.0], Relation::Ge, 1.0);
        let s = lp.solve();
        assert_eq!(s.status, LpStatus::Infeasible);
        let y = s.farkas.unwrap();
        assert!(y[0] + y[1] > 0.0);
        // y·A_j <= 0 for the structural columns.
        assert!(y[0] - y[1] <= 1e-12);
        assert!(-y[0] + y[1] <= 1e-12);
        // surplus columns are -e_i, so y >= 0.
        assert!(y.iter().all(|v| *v >= -1e-12));
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new(1);
        lp.costs = vec![-1.0];
        lp.add(vec![1.0], Relation::Ge, 0.0);
        assert_eq!(lp.solve().status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(2);
        lp.costs = vec![1.0, 2.0];
        lp.add(vec![1.0, 1.0], Relation::Eq, 1.0);
        lp.add(vec![2.0, 2.0], Relation::Eq, 2.0);
        let s = lp.solve();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_ties_avoid_tiny_pivots() {
        // Many zero-rhs rows carrying noise-level entries in the first column.
        let mut lp = LinearProgram::new(5);
        lp.costs = vec![0.0, 0.0, 0.0, 0.0, 1.0];
        let l0 = [-0.8775632187123312, -3.045838500345063e-20];
        lp.add(vec![l0[0], l0[1], -l0[0], -l0[1], 0.0], Relation::Eq, 1.0);
        for d in [1.2e-7, -9.6e-9, -3.7e-8, 2.5e-8, 7.3e-9, 1.4e-9, -1.4e-10, 2.6e-9] {
            lp.add(vec![d, 1.0, -d, -1.0, 0.0], Relation::Ge, 0.0);
        }
        let p = [-0.4660991643494942, -1.4311763447612718e-17];
        lp.add(vec![-p[0], -p[1], p[0], p[1], 1.0], Relation::Ge, 0.0);
        lp.add(vec![p[0], p[1], -p[0], -p[1], 1.0], Relation::Ge, 0.0);
        let s = lp.solve();
        assert_eq!(s.status, LpStatus::Optimal);
        let c1 = s.x[0] - s.x[2];
        assert!((l0[0] * c1 - 1.0).abs() < 1e-9, "{:?}", s.x);
        assert!((s.objective - 0.4660991643494942 / 0.8775632187123312).abs() < 1e-9);
        assert!(s.x.iter().all(|v| v.abs() < 1e3));
    }
}


