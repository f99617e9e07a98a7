//! Problem data, candidate trajectories, admissibility and criterion sums.
//!
//! Infinite-horizon problems are materialized for `t = 0..=horizon`. Stage
//! maps are closures indexed by `t`, optionally paired with analytic
//! differentials that take precedence over finite differences.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default feasibility tolerance for dynamics and control constraints.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-9;

/// Governs whether the dynamics hold with `<=` or `=` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemKind {
    /// `x_{t+1} <= f_t(x_t, u_t)`.
    Inequation,
    /// `x_{t+1} = f_t(x_t, u_t)`.
    Equation,
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemKind::Inequation => "inequation",
            SystemKind::Equation => "equation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControlVariant {
    /// Candidate controls are interior points of `U_t`; no rows.
    Interior,
    /// `U_t = { u : g_t^k(u) >= 0 }`.
    Inequalities,
    /// Inequality rows plus equality rows `e_t^j(u) = 0`.
    Mixed,
}

impl fmt::Display for ControlVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControlVariant::Interior => "interior",
            ControlVariant::Inequalities => "inequalities",
            ControlVariant::Mixed => "mixed",
        })
    }
}

pub type StageVectorFn = dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
pub type StageScalarFn = dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync;
pub type StageJacobianFn =
    dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync;
pub type StageGradientFn =
    dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync;
pub type ControlFn = dyn Fn(usize, &DVector<f64>) -> f64 + Send + Sync;
pub type ControlGradientFn = dyn Fn(usize, &DVector<f64>) -> DVector<f64> + Send + Sync;

/// Dynamics family `f_t : R^n x R^d -> R^n`.
#[derive(Clone)]
pub struct Dynamics {
    pub eval: Arc<StageVectorFn>,
    /// `(D_1 f_t, D_2 f_t)` when known in closed form.
    pub jacobians: Option<Arc<StageJacobianFn>>,
}

impl Dynamics {
    pub fn new(
        eval: impl Fn(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            jacobians: None,
        }
    }

    pub fn with_jacobians(
        mut self,
        jac: impl Fn(usize, &DVector<f64>, &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>)
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.jacobians = Some(Arc::new(jac));
        self
    }
}

/// Criterion family `phi_t : R^n x R^d -> R`.
#[derive(Clone)]
pub struct Criterion {
    pub eval: Arc<StageScalarFn>,
    pub gradients: Option<Arc<StageGradientFn>>,
}

impl Criterion {
    pub fn new(
        eval: impl Fn(usize, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            gradients: None,
        }
    }

    pub fn with_gradients(
        mut self,
        grad: impl Fn(usize, &DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>)
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.gradients = Some(Arc::new(grad));
        self
    }

    pub fn zero() -> Self {
        Self::new(|_, _, _| 0.0)
    }
}

/// One scalar control constraint row, `g_t^k` or `e_t^j`.
#[derive(Clone)]
pub struct ControlRow {
    pub label: String,
    pub eval: Arc<ControlFn>,
    pub gradient: Option<Arc<ControlGradientFn>>,
}

impl ControlRow {
    pub fn new(
        label: impl Into<String>,
        eval: impl Fn(usize, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            eval: Arc::new(eval),
            gradient: None,
        }
    }

    pub fn with_gradient(
        mut self,
        grad: impl Fn(usize, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(grad));
        self
    }

    /// The affine row `a·u + b`.
    pub fn affine(label: impl Into<String>, a: DVector<f64>, b: f64) -> Self {
        let grad = a.clone();
        Self::new(label, move |_, u| a.dot(u) + b).with_gradient(move |_, _| grad.clone())
    }
}

impl fmt::Debug for ControlRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlRow")
            .field("label", &self.label)
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

#[derive(Clone, Debug)]
pub struct ControlSetSpec {
    pub variant: ControlVariant,
    pub g_rows: Vec<ControlRow>,
    pub e_rows: Vec<ControlRow>,
}

impl ControlSetSpec {
    pub fn interior() -> Self {
        Self {
            variant: ControlVariant::Interior,
            g_rows: Vec::new(),
            e_rows: Vec::new(),
        }
    }

    pub fn inequalities(g_rows: Vec<ControlRow>) -> Result<Self> {
        if g_rows.is_empty() {
            return Err(Error::Invalid("inequality control set needs at least one row".into()));
        }
        Ok(Self {
            variant: ControlVariant::Inequalities,
            g_rows,
            e_rows: Vec::new(),
        })
    }

    pub fn mixed(g_rows: Vec<ControlRow>, e_rows: Vec<ControlRow>) -> Result<Self> {
        if g_rows.is_empty() || e_rows.is_empty() {
            return Err(Error::Invalid(
                "mixed control set needs at least one inequality and one equality row".into(),
            ));
        }
        Ok(Self {
            variant: ControlVariant::Mixed,
            g_rows,
            e_rows,
        })
    }

    pub fn num_ineq(&self) -> usize {
        self.g_rows.len()
    }

    pub fn num_eq(&self) -> usize {
        self.e_rows.len()
    }

    pub fn g_values(&self, t: usize, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.g_rows.len(), self.g_rows.iter().map(|r| (r.eval)(t, u)))
    }

    pub fn e_values(&self, t: usize, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.e_rows.len(), self.e_rows.iter().map(|r| (r.eval)(t, u)))
    }
}

/// Box membership predicate for `X_t`; absent means all of `R^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateBox {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl StateBox {
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
    }
}

/// Declared regularity of the stage data. Finite differences cannot tell
/// Gateaux from Frechet differentiability, nor check semicontinuity, so
/// these are carried as metadata and echoed in reports.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DeclaredRegularity {
    pub frechet: bool,
    pub lower_semicontinuous: bool,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub sigma: DVector<f64>,
    pub kind: SystemKind,
    pub controls: ControlSetSpec,
    pub dynamics: Dynamics,
    pub criterion: Criterion,
    pub state_set: Option<StateBox>,
    pub horizon: usize,
    pub regularity: DeclaredRegularity,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("d", &self.d)
            .field("sigma", &self.sigma.as_slice())
            .field("kind", &self.kind)
            .field("controls", &self.controls.variant)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl ProblemSpec {
    pub fn new(
        n: usize,
        d: usize,
        sigma: DVector<f64>,
        kind: SystemKind,
        controls: ControlSetSpec,
        dynamics: Dynamics,
        criterion: Criterion,
        horizon: usize,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Invalid("state and control dimensions must be >= 1".into()));
        }
        if horizon < 2 {
            return Err(Error::Invalid(format!("working horizon {horizon} < 2")));
        }
        if sigma.len() != n {
            return Err(Error::Dimension {
                context: "initial state".into(),
                expected: n,
                found: sigma.len(),
            });
        }
        Ok(Self {
            name: String::from("unnamed"),
            n,
            d,
            sigma,
            kind,
            controls,
            dynamics,
            criterion,
            state_set: None,
            horizon,
            regularity: DeclaredRegularity::default(),
        })
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_state_set(mut self, state_set: StateBox) -> Self {
        self.state_set = Some(state_set);
        self
    }

    pub fn f(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.dynamics.eval)(t, x, u)
    }

    pub fn phi(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (self.criterion.eval)(t, x, u)
    }
}

/// Candidate `(x_t, u_t)`: `states = x_0..=x_{H+1}`, `controls = u_0..=u_H`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(states: Vec<DVector<f64>>, controls: Vec<DVector<f64>>) -> Result<Self> {
        if controls.is_empty() || states.len() != controls.len() + 1 {
            return Err(Error::Dimension {
                context: "trajectory length (states = controls + 1)".into(),
                expected: controls.len() + 1,
                found: states.len(),
            });
        }
        Ok(Self { states, controls })
    }

    /// Builds a trajectory from scalar sequences (`n = d = 1`).
    pub fn scalar(states: &[f64], controls: &[f64]) -> Result<Self> {
        Self::new(
            states.iter().map(|v| DVector::from_element(1, *v)).collect(),
            controls.iter().map(|v| DVector::from_element(1, *v)).collect(),
        )
    }

    /// Rolls the dynamics forward from `sigma` with equality.
    pub fn simulate(problem: &ProblemSpec, controls: Vec<DVector<f64>>) -> Result<Self> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(problem.sigma.clone());
        for (t, u) in controls.iter().enumerate() {
            let next = problem.f(t, &states[t], u);
            states.push(next);
        }
        Self::new(states, controls)
    }

    /// Last stage index `H` with a control.
    pub fn horizon(&self) -> usize {
        self.controls.len() - 1
    }

    pub fn truncated(&self, h: usize) -> Self {
        Self {
            states: self.states[..h + 2].to_vec(),
            controls: self.controls[..h + 1].to_vec(),
        }
    }

    fn check_dims(&self, problem: &ProblemSpec) -> Result<()> {
        if self.horizon() > problem.horizon {
            return Err(Error::Horizon {
                requested: self.horizon(),
                available: problem.horizon,
            });
        }
        for (t, x) in self.states.iter().enumerate() {
            if x.len() != problem.n {
                return Err(Error::Dimension {
                    context: format!("state x_{t}"),
                    expected: problem.n,
                    found: x.len(),
                });
            }
        }
        for (t, u) in self.controls.iter().enumerate() {
            if u.len() != problem.d {
                return Err(Error::Dimension {
                    context: format!("control u_{t}"),
                    expected: problem.d,
                    found: u.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    InitialState,
    Dynamics,
    Inequality,
    Equality,
    StateSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub t: usize,
    pub component: usize,
    pub kind: ViolationKind,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub feasible: bool,
    pub tol: f64,
    pub violations: Vec<Violation>,
    /// `slack[t][alpha] = f_t^alpha(x_t, u_t) - x_{t+1}^alpha`.
    pub slack: Vec<DVector<f64>>,
}

pub fn check_admissibility(
    problem: &ProblemSpec,
    traj: &Trajectory,
    tol: f64,
) -> Result<AdmissibilityReport> {
    traj.check_dims(problem)?;
    let mut violations = Vec::new();
    for (a, (x0, s)) in traj.states[0].iter().zip(problem.sigma.iter()).enumerate() {
        let gap = (x0 - s).abs();
        if gap > tol {
            violations.push(Violation {
                t: 0,
                component: a,
                kind: ViolationKind::InitialState,
                magnitude: gap,
            });
        }
    }
    let mut slack = Vec::with_capacity(traj.controls.len());
    for (t, u) in traj.controls.iter().enumerate() {
        let x = &traj.states[t];
        let fx = problem.f(t, x, u);
        if fx.len() != problem.n {
            return Err(Error::Dimension {
                context: format!("f_{t} output"),
                expected: problem.n,
                found: fx.len(),
            });
        }
        let s = &fx - &traj.states[t + 1];
        for (a, v) in s.iter().enumerate() {
            let magnitude = match problem.kind {
                SystemKind::Inequation => -v,
                SystemKind::Equation => v.abs(),
            };
            if !v.is_finite() || magnitude > tol {
                violations.push(Violation {
                    t,
                    component: a,
                    kind: ViolationKind::Dynamics,
                    magnitude: if v.is_finite() { magnitude } else { f64::INFINITY },
                });
            }
        }
        for (k, g) in problem.controls.g_values(t, u).iter().enumerate() {
            if *g < -tol {
                violations.push(Violation {
                    t,
                    component: k,
                    kind: ViolationKind::Inequality,
                    magnitude: -g,
                });
            }
        }
        for (j, e) in problem.controls.e_values(t, u).iter().enumerate() {
            if e.abs() > tol {
                violations.push(Violation {
                    t,
                    component: j,
                    kind: ViolationKind::Equality,
                    magnitude: e.abs(),
                });
            }
        }
        slack.push(s);
    }
    if let Some(bx) = &problem.state_set {
        for (t, x) in traj.states.iter().enumerate() {
            if !bx.contains(x, tol) {
                violations.push(Violation {
                    t,
                    component: 0,
                    kind: ViolationKind::StateSet,
                    magnitude: f64::NAN,
                });
            }
        }
    }
    Ok(AdmissibilityReport {
        feasible: violations.is_empty(),
        tol,
        violations,
        slack,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialSums {
    pub horizons: Vec<usize>,
    pub values: Vec<f64>,
    /// Successive differences are nonincreasing in magnitude and the last
    /// one is below the tolerance.
    pub cauchy: bool,
}

/// `sum_{t=0}^{h} phi_t(x_t, u_t)` for each `h` (returned in ascending order).
pub fn partial_sums(
    problem: &ProblemSpec,
    traj: &Trajectory,
    h_list: &[usize],
    cauchy_tol: f64,
) -> Result<PartialSums> {
    if h_list.is_empty() {
        return Err(Error::Invalid("empty horizon list".into()));
    }
    let mut horizons = h_list.to_vec();
    horizons.sort_unstable();
    horizons.dedup();
    let top = *horizons.last().unwrap();
    if top > traj.horizon() {
        return Err(Error::Horizon {
            requested: top,
            available: traj.horizon(),
        });
    }
    // Neumaier-compensated running sum.
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    let mut values = Vec::with_capacity(horizons.len());
    let mut next = horizons.iter().peekable();
    for t in 0..=top {
        let v = problem.phi(t, &traj.states[t], &traj.controls[t]);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: format!("phi_{t}"),
                point: format!("{:?}", traj.states[t].as_slice()),
            });
        }
        let s = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - s) + v;
        } else {
            comp += (v - s) + sum;
        }
        sum = s;
        while next.peek().is_some_and(|h| **h == t) {
            values.push(sum + comp);
            next.next();
        }
    }
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let cauchy = !diffs.is_empty()
        && diffs.windows(2).all(|w| w[1] <= w[0])
        && diffs.last().is_some_and(|d| *d <= cauchy_tol);
    Ok(PartialSums {
        horizons,
        values,
        cauchy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvertakingReport {
    /// `diffs[h] = sum_{t<=h} phi(a) - sum_{t<=h} phi(b)` for `h = 0..=h_max`.
    pub diffs: Vec<f64>,
    pub window: usize,
    pub liminf_est: f64,
    pub limsup_est: f64,
    pub a_weakly_overtakes_b: bool,
    pub a_catching_up_b: bool,
}

/// Compares two admissible trajectories under the overtaking notions; tail
/// statistics use the last `ceil(h_max / 4)` differences.
pub fn overtaking_compare(
    problem: &ProblemSpec,
    a: &Trajectory,
    b: &Trajectory,
    h_max: usize,
    tol: f64,
) -> Result<OvertakingReport> {
    for traj in [a, b] {
        if traj.horizon() < h_max {
            return Err(Error::Horizon {
                requested: h_max,
                available: traj.horizon(),
            });
        }
        let report = check_admissibility(problem, traj, DEFAULT_FEASIBILITY_TOL.max(tol))?;
        if !report.feasible {
            return Err(Error::Inadmissible(Box::new(report)));
        }
    }
    let mut diffs = Vec::with_capacity(h_max + 1);
    let mut acc = 0.0;
    for t in 0..=h_max {
        acc += problem.phi(t, &a.states[t], &a.controls[t])
            - problem.phi(t, &b.states[t], &b.controls[t]);
        diffs.push(acc);
    }
    let window = h_max.div_ceil(4).max(1);
    let tail = &diffs[diffs.len() - window..];
    let liminf_est = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let limsup_est = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(OvertakingReport {
        a_weakly_overtakes_b: liminf_est >= -tol,
        a_catching_up_b: limsup_est >= -tol,
        diffs,
        window,
        liminf_est,
        limsup_est,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_problem(kind: SystemKind, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> ProblemSpec {
        ProblemSpec::new(
            1,
            1,
            DVector::from_element(1, 0.0),
            kind,
            ControlSetSpec::interior(),
            Dynamics::new(move |_, x, u| DVector::from_element(1, f(x[0], u[0]))),
            Criterion::zero(),
            10,
        )
        .unwrap()
    }

    #[test]
    fn telescoping_equation_is_feasible() {
        let p = scalar_problem(SystemKind::Equation, |x, u| x + u);
        let traj = Trajectory::scalar(&[0.0, 1.0, 2.0], &[1.0, 1.0]).unwrap();
        let r = check_admissibility(&p, &traj, 1e-9).unwrap();
        assert!(r.feasible);
        assert!(r.slack.iter().all(|s| s[0] == 0.0));
    }

    #[test]
    fn constant_dynamics_slack() {
        let p = scalar_problem(SystemKind::Inequation, |x, _| x + 1.0);
        let traj = Trajectory::scalar(&[0.0, 0.0, 0.0], &[0.0, 0.0]).unwrap();
        let r = check_admissibility(&p, &traj, 1e-9).unwrap();
        assert!(r.feasible);
        assert_eq!(r.slack.len(), 2);
        assert!(r.slack.iter().all(|s| s[0] == 1.0));

        let p = scalar_problem(SystemKind::Equation, |x, _| x + 1.0);
        let r = check_admissibility(&p, &traj, 1e-9).unwrap();
        assert!(!r.feasible);
        let ts: Vec<usize> = r.violations.iter().map(|v| v.t).collect();
        assert_eq!(ts, vec![0, 1]);
        assert!(r.violations.iter().all(|v| v.magnitude == 1.0 && v.kind == ViolationKind::Dynamics));
    }

    #[test]
    fn dimension_error_names_stage() {
        let p = scalar_problem(SystemKind::Equation, |x, u| x + u);
        let traj = Trajectory::new(
            vec![DVector::zeros(1), DVector::zeros(2), DVector::zeros(1)],
            vec![DVector::zeros(1), DVector::zeros(1)],
        )
        .unwrap();
        let err = check_admissibility(&p, &traj, 1e-9).unwrap_err();
        assert!(err.to_string().contains("x_1"), "{err}");
    }

    #[test]
    fn wrong_initial_state() {
        let p = scalar_problem(SystemKind::Equation, |x, u| x + u);
        let traj = Trajectory::scalar(&[1.0, 2.0], &[1.0]).unwrap();
        let r = check_admissibility(&p, &traj, 1e-9).unwrap();
        assert_eq!(r.violations[0].kind, ViolationKind::InitialState);
    }

    #[test]
    fn partial_sums_geometric() {
        let mut p = scalar_problem(SystemKind::Equation, |x, u| x + u);
        p.criterion = Criterion::new(|t, _, _| 0.5_f64.powi(t as i32));
        let traj = Trajectory::scalar(&[0.0; 4], &[0.0; 3]).unwrap();
        let s = partial_sums(&p, &traj, &[2, 0, 1], 1e-9).unwrap();
        assert_eq!(s.horizons, vec![0, 1, 2]);
        assert_eq!(s.values, vec![1.0, 1.5, 1.75]);
        assert!(partial_sums(&p, &traj, &[], 1e-9).is_err());
        assert!(partial_sums(&p, &traj, &[3], 1e-9).is_err());
    }

    #[test]
    fn zero_criterion_sums() {
        let p = scalar_problem(SystemKind::Equation, |x, u| x + u);
        let traj = Trajectory::scalar(&[0.0; 11], &[0.0; 10]).unwrap();
        let s = partial_sums(&p, &traj, &[1, 5, 9], 1e-9).unwrap();
        assert_eq!(s.values, vec![0.0, 0.0, 0.0]);
        assert!(s.cauchy);
    }

    #[test]
    fn overtaking_divergent_advantage() {
        let mut p = scalar_problem(SystemKind::Equation, |x, _| x);
        p.criterion = Criterion::new(|_, _, u| u[0]);
        let a = Trajectory::scalar(&[0.0; 10], &[1.0; 9]).unwrap();
        let b = Trajectory::scalar(&[0.0; 10], &[0.0; 9]).unwrap();
        let r = overtaking_compare(&p, &a, &b, 8, 1e-9).unwrap();
        for (h, d) in r.diffs.iter().enumerate() {
            assert_eq!(*d, (h + 1) as f64);
        }
        assert!(r.a_weakly_overtakes_b && r.a_catching_up_b);
        assert_eq!(r.window, 2);

        let same = overtaking_compare(&p, &a, &a, 8, 1e-9).unwrap();
        assert!(same.diffs.iter().all(|d| *d == 0.0));
        assert!(same.a_weakly_overtakes_b && same.a_catching_up_b);
    }

    #[test]
    fn overtaking_rejects_inadmissible() {
        let p = scalar_problem(SystemKind::Equation, |x, u| x + u);
        let good = Trajectory::scalar(&[0.0, 1.0, 2.0], &[1.0, 1.0]).unwrap();
        let bad = Trajectory::scalar(&[0.0, 5.0, 2.0], &[1.0, 1.0]).unwrap();
        match overtaking_compare(&p, &good, &bad, 1, 1e-9) {
            Err(Error::Inadmissible(report)) => assert!(!report.feasible),
            other => panic!("expected inadmissible, got {other:?}"),
        }
    }
}
