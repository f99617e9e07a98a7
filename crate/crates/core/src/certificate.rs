//! Multiplier certificates: the adjoint recursion, the a-priori bound
//! sequence, and verification of the five necessary conditions.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::diff::{invertibility_check, monotonicity_check, trajectory_derivatives, StageDerivatives};
use crate::diff::{DEFAULT_COND_LIMIT, DEFAULT_STEP};
use crate::error::{Error, Result};
use crate::model::{check_admissibility, ControlVariant, ProblemSpec, SystemKind, Trajectory};
use crate::model::DEFAULT_FEASIBILITY_TOL;

/// Which set of necessary conditions a certificate claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Interior controls, invertible state differentials.
    InteriorInvertible,
    /// Interior controls, monotone state differentials.
    InteriorMonotone,
    /// Controls restricted by inequality rows.
    InequalityConstrained,
    /// Inequality and equality control rows, inequation dynamics.
    MixedInequation,
    /// Equation dynamics; adjoint signs and dynamic slackness are dropped.
    MixedEquation,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::InteriorInvertible,
        Variant::InteriorMonotone,
        Variant::InequalityConstrained,
        Variant::MixedInequation,
        Variant::MixedEquation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::InteriorInvertible => "interior-invertible",
            Variant::InteriorMonotone => "interior-monotone",
            Variant::InequalityConstrained => "inequality-constrained",
            Variant::MixedInequation => "mixed-inequation",
            Variant::MixedEquation => "mixed-equation",
        }
    }

    /// Default variant for a control-set shape.
    pub fn for_controls(controls: ControlVariant) -> Self {
        match controls {
            ControlVariant::Interior => Variant::InteriorInvertible,
            ControlVariant::Inequalities => Variant::InequalityConstrained,
            ControlVariant::Mixed => Variant::MixedInequation,
        }
    }

    /// Default for a problem: equation dynamics with constrained controls
    /// use the sign-free conclusions, everything else follows the controls.
    pub fn default_for(problem: &ProblemSpec) -> Self {
        if problem.kind == SystemKind::Equation && problem.controls.variant != ControlVariant::Interior {
            Variant::MixedEquation
        } else {
            Variant::for_controls(problem.controls.variant)
        }
    }

    /// Whether `p_t >= 0` is part of the conclusions.
    pub fn nonnegative_adjoint(self) -> bool {
        self != Variant::MixedEquation
    }

    /// Whether `p_{t+1}^a (f^a - x^a) = 0` is checked for this problem kind.
    pub fn dynamic_slackness(self, kind: SystemKind) -> bool {
        self != Variant::MixedEquation && kind == SystemKind::Inequation
    }

    pub fn check_compatible(self, problem: &ProblemSpec) -> Result<()> {
        let found = problem.controls.variant;
        let expected = match self {
            Variant::InteriorInvertible | Variant::InteriorMonotone => Some(ControlVariant::Interior),
            Variant::InequalityConstrained => Some(ControlVariant::Inequalities),
            Variant::MixedInequation => Some(ControlVariant::Mixed),
            Variant::MixedEquation => None,
        };
        if let Some(expected) = expected {
            if expected != found {
                return Err(Error::VariantMismatch {
                    variant: self.name().into(),
                    expected: expected.to_string(),
                    found: found.to_string(),
                });
            }
        }
        if self == Variant::MixedEquation && problem.kind != SystemKind::Equation {
            return Err(Error::VariantMismatch {
                variant: self.name().into(),
                expected: "equation dynamics with any".into(),
                found: format!("{} dynamics with {found}", problem.kind),
            });
        }
        Ok(())
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown variant `{s}`")))
    }
}

/// Infinite-horizon multipliers, materialized on a finite window.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub variant: Variant,
    pub lambda0: f64,
    /// `p[i]` is `p_{i+1}`.
    pub p: Vec<DVector<f64>>,
    /// `mu[t]`, one entry per inequality row.
    pub mu: Vec<DVector<f64>>,
    /// `eq_lambda[t]`, one entry per equality row.
    pub eq_lambda: Vec<DVector<f64>>,
}

impl Certificate {
    /// Number of adjoint vectors `T`; stages `0..T` are checkable.
    pub fn window(&self) -> usize {
        self.p.len()
    }

    pub fn p_t(&self, t: usize) -> &DVector<f64> {
        &self.p[t - 1]
    }

    fn check_lengths(&self, problem: &ProblemSpec) -> Result<()> {
        let big_t = self.window();
        if big_t == 0 {
            return Err(Error::Invalid("certificate has no adjoint entries".into()));
        }
        for (what, seq, width) in [
            ("mu", &self.mu, problem.controls.num_ineq()),
            ("eq", &self.eq_lambda, problem.controls.num_eq()),
        ] {
            if seq.len() < big_t {
                return Err(Error::Dimension {
                    context: format!("{what} stages"),
                    expected: big_t,
                    found: seq.len(),
                });
            }
            if let Some((t, v)) = seq.iter().enumerate().find(|(_, v)| v.len() != width) {
                return Err(Error::Dimension {
                    context: format!("{what}_{t}"),
                    expected: width,
                    found: v.len(),
                });
            }
        }
        if let Some((i, v)) = self.p.iter().enumerate().find(|(_, v)| v.len() != problem.n) {
            return Err(Error::Dimension {
                context: format!("p_{}", i + 1),
                expected: problem.n,
                found: v.len(),
            });
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("certificate v1\n");
        s += &format!("variant {}\n", self.variant);
        s += &format!("lambda0 {:.16e}\n", self.lambda0);
        let line = |tag: &str, t: usize, v: &DVector<f64>| {
            let mut l = format!("{tag} {t}");
            for x in v.iter() {
                l += &format!(" {x:.16e}");
            }
            l + "\n"
        };
        for (i, p) in self.p.iter().enumerate() {
            s += &line("p", i + 1, p);
        }
        for (t, m) in self.mu.iter().enumerate() {
            s += &line("mu", t, m);
        }
        for (t, e) in self.eq_lambda.iter().enumerate() {
            s += &line("eq", t, e);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let parse_err = |line: usize, field: &str, message: String| Error::Parse {
            line,
            field: field.into(),
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, "certificate v1")) => {}
            Some((no, _)) => return Err(parse_err(no, "header", "expected `certificate v1`".into())),
            None => return Err(parse_err(1, "header", "empty input".into())),
        }
        let mut variant = None;
        let mut lambda0 = None;
        let mut p = Vec::new();
        let mut mu = Vec::new();
        let mut eq = Vec::new();
        for (no, l) in lines {
            let mut tok = l.split_whitespace();
            let key = tok.next().unwrap_or("");
            match key {
                "variant" => {
                    let v = tok.next().ok_or_else(|| parse_err(no, "variant", "missing value".into()))?;
                    variant = Some(v.parse().map_err(|e: Error| parse_err(no, "variant", e.to_string()))?);
                }
                "lambda0" => {
                    let v = tok.next().ok_or_else(|| parse_err(no, "lambda0", "missing value".into()))?;
                    lambda0 = Some(v.parse::<f64>().map_err(|e| parse_err(no, "lambda0", e.to_string()))?);
                }
                "p" | "mu" | "eq" => {
                    let t: usize = tok
                        .next()
                        .ok_or_else(|| parse_err(no, key, "missing stage".into()))?
                        .parse()
                        .map_err(|e: std::num::ParseIntError| parse_err(no, key, e.to_string()))?;
                    let vals = tok
                        .map(|x| x.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| parse_err(no, key, e.to_string()))?;
                    let (seq, offset) = match key {
                        "p" => (&mut p, 1),
                        "mu" => (&mut mu, 0),
                        _ => (&mut eq, 0),
                    };
                    let expected = seq.len() + offset;
                    if t != expected {
                        return Err(parse_err(no, key, format!("expected stage {expected}, got {t}")));
                    }
                    seq.push(DVector::from_vec(vals));
                }
                other => return Err(parse_err(no, other, "unknown key".into())),
            }
        }
        Ok(Self {
            variant: variant.ok_or_else(|| parse_err(0, "variant", "missing".into()))?,
            lambda0: lambda0.ok_or_else(|| parse_err(0, "lambda0", "missing".into()))?,
            p,
            mu,
            eq_lambda: eq,
        })
    }
}

/// `p_1..p_T` from `p_{t+1} D1f_t = p_t - lambda0 D1phi_t`.
///
/// `derivs[t]` must cover `t = 1..T-1`.
pub fn adjoint_forward(
    lambda0: f64,
    p1: &DVector<f64>,
    derivs: &[StageDerivatives],
    big_t: usize,
) -> Result<Vec<DVector<f64>>> {
    adjoint_forward_with_limit(lambda0, p1, derivs, big_t, DEFAULT_COND_LIMIT)
}

pub fn adjoint_forward_with_limit(
    lambda0: f64,
    p1: &DVector<f64>,
    derivs: &[StageDerivatives],
    big_t: usize,
    cond_limit: f64,
) -> Result<Vec<DVector<f64>>> {
    if big_t == 0 {
        return Ok(Vec::new());
    }
    if derivs.len() < big_t {
        return Err(Error::Horizon {
            requested: big_t - 1,
            available: derivs.len().saturating_sub(1),
        });
    }
    let mut out = Vec::with_capacity(big_t);
    out.push(p1.clone());
    for (t, sd) in derivs.iter().enumerate().take(big_t).skip(1) {
        let report = invertibility_check(&sd.d1f, cond_limit);
        if !report.invertible {
            return Err(Error::Singular {
                t,
                condition: report.condition,
            });
        }
        let rhs = &out[t - 1] - &sd.d1phi * lambda0;
        let next = sd
            .d1f
            .transpose()
            .lu()
            .solve(&rhs)
            .ok_or(Error::Singular {
                t,
                condition: report.condition,
            })?;
        out.push(next);
    }
    Ok(out)
}

/// Envelope for `|p_t|_1` under monotone dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSequence {
    /// `gamma[i]` is `gamma_{i+1}`.
    pub gamma: Vec<f64>,
    /// `zeta[i]` is `zeta_{i+1}`; `zeta_1 = 1`.
    pub zeta: Vec<f64>,
}

impl BoundSequence {
    pub fn zeta_t(&self, t: usize) -> f64 {
        self.zeta[t - 1]
    }
}

/// `zeta_1 = 1`, `zeta_{t+1} = (zeta_t + |D1phi_t|_1) / gamma_t` for `t = 1..T-1`.
pub fn bound_sequence(derivs: &[StageDerivatives], big_t: usize) -> Result<BoundSequence> {
    if big_t == 0 {
        return Err(Error::Invalid("bound sequence needs T >= 1".into()));
    }
    if derivs.len() < big_t {
        return Err(Error::Horizon {
            requested: big_t - 1,
            available: derivs.len().saturating_sub(1),
        });
    }
    let mut gamma = Vec::with_capacity(big_t.saturating_sub(1));
    let mut zeta = vec![1.0];
    for (t, sd) in derivs.iter().enumerate().take(big_t).skip(1) {
        let m = monotonicity_check(&sd.d1f);
        if !m.pos_diag {
            return Err(Error::NonMonotone { t, gamma: m.gamma });
        }
        if !m.nonneg_offdiag {
            return Err(Error::Hypothesis {
                variant: Variant::InteriorMonotone.name().into(),
                t,
                detail: "negative off-diagonal state differential".into(),
            });
        }
        let phi_norm = sd.d1phi.lp_norm(1);
        let last = *zeta.last().unwrap();
        gamma.push(m.gamma);
        zeta.push((last + phi_norm) / m.gamma);
    }
    Ok(BoundSequence { gamma, zeta })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    Nontriviality,
    Sign,
    Slackness,
    AdjointEquation,
    WeakMaximum,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::Nontriviality,
        Condition::Sign,
        Condition::Slackness,
        Condition::AdjointEquation,
        Condition::WeakMaximum,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Condition::Nontriviality => "NN",
            Condition::Sign => "Si",
            Condition::Slackness => "Sl",
            Condition::AdjointEquation => "AE",
            Condition::WeakMaximum => "WM",
        }
    }
}

/// Where the worst defect of a condition was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Locus {
    pub t: usize,
    /// Short label such as `p[1]`, `mu[0]`, `x[2]` or `u[0]`.
    pub what: String,
}

impl fmt::Display for Locus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} {}", self.t, self.what)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEntry {
    pub condition: Condition,
    pub applicable: bool,
    pub pass: bool,
    /// Worst defect; relative to the stage scale for AE and WM.
    pub worst_defect: f64,
    pub locus: Option<Locus>,
}

impl ConditionEntry {
    fn new(condition: Condition, applicable: bool) -> Self {
        Self {
            condition,
            applicable,
            pass: true,
            worst_defect: 0.0,
            locus: None,
        }
    }

    fn record(&mut self, defect: f64, allowed: f64, locus: impl FnOnce() -> Locus) {
        if !(defect <= self.worst_defect) {
            self.worst_defect = defect;
            self.locus = Some(locus());
        }
        if !(defect <= allowed) {
            self.pass = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub variant: Variant,
    pub tol: f64,
    /// Stages `0..window` were inspected.
    pub window: usize,
    pub entries: Vec<ConditionEntry>,
    pub notes: Vec<String>,
}

impl ConditionReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().filter(|e| e.applicable).all(|e| e.pass)
    }

    pub fn entry(&self, c: Condition) -> &ConditionEntry {
        self.entries.iter().find(|e| e.condition == c).expect("all conditions present")
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "variant {} window t<{} tol {:e}: {}\n",
            self.variant,
            self.window,
            self.tol,
            if self.pass() { "PASS" } else { "FAIL" }
        );
        for e in &self.entries {
            let status = match (e.applicable, e.pass) {
                (false, _) => "n/a ",
                (true, true) => "pass",
                (true, false) => "FAIL",
            };
            s += &format!("  {:<2} {status} worst {:.3e}", e.condition.tag(), e.worst_defect);
            if let Some(l) = &e.locus {
                s += &format!(" at {l}");
            }
            s.push('\n');
        }
        for n in &self.notes {
            s += &format!("  note: {n}\n");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub tol: f64,
    /// Inspect only stages `t < window` (clamped to the certificate length).
    pub window: Option<usize>,
    pub step: f64,
}

impl VerifyOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            window: None,
            step: DEFAULT_STEP,
        }
    }
}

pub fn verify(
    problem: &ProblemSpec,
    candidate: &Trajectory,
    cert: &Certificate,
    tol: f64,
) -> Result<ConditionReport> {
    verify_with(problem, candidate, cert, &VerifyOptions::new(tol))
}

pub fn verify_with(
    problem: &ProblemSpec,
    candidate: &Trajectory,
    cert: &Certificate,
    opts: &VerifyOptions,
) -> Result<ConditionReport> {
    cert.variant.check_compatible(problem)?;
    cert.check_lengths(problem)?;
    let tol = opts.tol;
    let window = opts.window.unwrap_or(usize::MAX).min(cert.window());
    if window == 0 {
        return Err(Error::Invalid("verification window is empty".into()));
    }
    if candidate.horizon() + 1 < window {
        return Err(Error::Horizon {
            requested: window - 1,
            available: candidate.horizon(),
        });
    }
    let adm = check_admissibility(problem, candidate, DEFAULT_FEASIBILITY_TOL.max(tol))?;
    if !adm.feasible {
        return Err(Error::Inadmissible(Box::new(adm)));
    }
    let derivs = trajectory_derivatives(problem, candidate, window - 1, opts.step)?;
    let variant = cert.variant;
    let l0 = cert.lambda0;
    let dyn_slack = variant.dynamic_slackness(problem.kind);

    let mut nn = ConditionEntry::new(Condition::Nontriviality, true);
    let mag = l0.abs() + cert.p[0].lp_norm(1);
    nn.record((tol - mag).max(0.0), 0.0, || Locus {
        t: 1,
        what: "(lambda0, p[1])".into(),
    });

    let mut si = ConditionEntry::new(Condition::Sign, true);
    si.record((-l0).max(0.0), tol, || Locus {
        t: 0,
        what: "lambda0".into(),
    });
    let mut sl = ConditionEntry::new(Condition::Slackness, true);
    let mut ae = ConditionEntry::new(Condition::AdjointEquation, window >= 2);
    let mut wm = ConditionEntry::new(Condition::WeakMaximum, true);

    for (t, sd) in derivs.iter().enumerate() {
        let p_next = &cert.p[t];
        let mu = &cert.mu[t];
        let eql = &cert.eq_lambda[t];
        if variant.nonnegative_adjoint() {
            for (a, v) in p_next.iter().enumerate() {
                si.record((-v).max(0.0), tol, || Locus {
                    t: t + 1,
                    what: format!("p[{a}]"),
                });
            }
        }
        for (k, v) in mu.iter().enumerate() {
            si.record((-v).max(0.0), tol, || Locus {
                t,
                what: format!("mu[{k}]"),
            });
        }
        if dyn_slack {
            for (a, (pv, s)) in p_next.iter().zip(adm.slack[t].iter()).enumerate() {
                sl.record((pv * s).abs(), tol, || Locus {
                    t,
                    what: format!("x[{a}]"),
                });
            }
        }
        let g = problem.controls.g_values(t, &candidate.controls[t]);
        for (k, (m, gv)) in mu.iter().zip(g.iter()).enumerate() {
            sl.record((m * gv).abs(), tol, || Locus {
                t,
                what: format!("mu[{k}]"),
            });
        }
        if t >= 1 {
            let p_t = &cert.p[t - 1];
            let resid = p_t - sd.d1f.tr_mul(p_next) - &sd.d1phi * l0;
            let scale = 1.0
                + p_t
                    .lp_norm(1)
                    .max(p_next.lp_norm(1))
                    .max(l0.abs() * sd.d1phi.lp_norm(1));
            let (a, worst) = argmax_abs(&resid);
            ae.record(worst / scale, tol, || Locus {
                t,
                what: format!("x[{a}]"),
            });
        }
        let mut resid = sd.d2f.tr_mul(p_next) + &sd.d2phi * l0;
        if sd.dg.nrows() > 0 {
            resid += sd.dg.tr_mul(mu);
        }
        if sd.de.nrows() > 0 {
            resid += sd.de.tr_mul(eql);
        }
        let scale = 1.0
            + p_next
                .lp_norm(1)
                .max(l0.abs() * sd.d2phi.lp_norm(1))
                .max(mu.lp_norm(1))
                .max(eql.lp_norm(1));
        let (i, worst) = argmax_abs(&resid);
        wm.record(worst / scale, tol, || Locus {
            t,
            what: format!("u[{i}]"),
        });
    }
    if !dyn_slack && problem.controls.num_ineq() == 0 {
        sl.applicable = false;
    }

    let mut notes = vec![String::from("AE checked for t >= 1; p_0 is not part of any certificate")];
    if variant == Variant::MixedInequation {
        notes.push("state derivative of the criterion taken as a single numerical differential".into());
    }
    if !problem.regularity.frechet {
        notes.push("differentiability class not declared; finite differences cannot tell Gateaux from Frechet".into());
    }
    Ok(ConditionReport {
        variant,
        tol,
        window,
        entries: vec![nn, si, sl, ae, wm],
        notes,
    })
}

fn argmax_abs(v: &DVector<f64>) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, x)| if x.abs() > bv || x.is_nan() { (i, x.abs()) } else { (bi, bv) })
}
