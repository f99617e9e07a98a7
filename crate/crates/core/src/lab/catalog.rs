//! Reference problems with known candidates.
//!
//! | name     | dynamics              | criterion                 | controls            |
//! |----------|-----------------------|---------------------------|---------------------|
//! | `LQ1`    | `x' = x/2 + u`        | `-(x^2 + u^2)`            | interior            |
//! | `SLACK1` | `x' <= x + 1`         | `-(1/2)^t u^2`            | interior            |
//! | `CON1`   | `x' = x/2 + u`        | `-(x^2 + u^2)`            | `u >= 0`            |
//! | `MIX1`   | `x' = x/2 + u1 + u2`  | `-(x^2 + u1^2 + u2^2)`    | `u1 = 0`, `u2 >= 0` |
//!
//! `LQ1` starts at `-1` and follows the stationary Riccati feedback, so its
//! multipliers are normal. `CON1` starts at `1` where the constraint binds
//! along the whole path.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::certificate::Variant;
use crate::error::{Error, Result};
use crate::lab::format::{ProblemFile, StageBlock};
use crate::model::{ControlVariant, ProblemSpec, SystemKind, Trajectory};

pub const DEFAULT_HORIZON: usize = 120;

#[derive(Debug, Clone, Copy)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
}

pub const ENTRIES: [CatalogEntry; 4] = [
    CatalogEntry {
        name: "LQ1",
        summary: "scalar linear-quadratic regulator, Riccati feedback from x0 = -1",
    },
    CatalogEntry {
        name: "SLACK1",
        summary: "inequation dynamics with slack everywhere, zero candidate",
    },
    CatalogEntry {
        name: "CON1",
        summary: "regulator with u >= 0 binding along the path from x0 = 1",
    },
    CatalogEntry {
        name: "MIX1",
        summary: "two controls, one equality row and one binding inequality row",
    },
];

pub fn names() -> impl Iterator<Item = &'static str> {
    ENTRIES.iter().map(|e| e.name)
}

/// A problem, its file form, a candidate and the variant it is certified under.
#[derive(Debug, Clone)]
pub struct Instance {
    pub file: ProblemFile,
    pub problem: ProblemSpec,
    pub candidate: Trajectory,
    pub variant: Variant,
}

/// Stationary solution of the discrete Riccati equation for minimizing
/// `sum x'Qx + u'Ru` subject to `x' = Ax + Bu`.
#[derive(Debug, Clone, PartialEq)]
pub struct Riccati {
    pub p: DMatrix<f64>,
    /// Feedback gain, `u = -K x`.
    pub k: DMatrix<f64>,
    pub iterations: usize,
}

pub fn riccati(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<Riccati> {
    let gain = |p: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let s = r + b.transpose() * p * b;
        let rhs = b.transpose() * p * a;
        s.lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Invalid("Riccati gain system is singular".into()))
    };
    let mut p = q.clone();
    for it in 1..=max_iter {
        let k = gain(&p)?;
        let next = q + a.transpose() * &p * a - a.transpose() * &p * b * &k;
        let delta = (&next - &p).amax();
        p = next;
        if delta <= tol * (1.0 + p.amax()) {
            let k = gain(&p)?;
            return Ok(Riccati { p, k, iterations: it });
        }
    }
    Err(Error::Invalid(format!("Riccati iteration did not converge in {max_iter} steps")))
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn regulator_block() -> StageBlock {
    StageBlock {
        a: Some(scalar(0.5)),
        b: Some(scalar(1.0)),
        c: Some(DVector::zeros(1)),
        q: Some(scalar(1.0)),
        r: Some(scalar(1.0)),
        ..StageBlock::default()
    }
}

fn file(
    name: &str,
    d: usize,
    kind: SystemKind,
    controls: ControlVariant,
    horizon: usize,
    sigma: f64,
    discount: f64,
    stage: StageBlock,
) -> ProblemFile {
    ProblemFile {
        name: name.into(),
        n: 1,
        d,
        kind,
        controls,
        horizon,
        sigma: DVector::from_element(1, sigma),
        discount,
        state_box: None,
        default_stage: stage,
        overrides: BTreeMap::new(),
    }
}

fn build(file: ProblemFile, controls: Vec<DVector<f64>>, variant: Variant) -> Result<Instance> {
    let problem = file.to_problem()?;
    let candidate = Trajectory::simulate(&problem, controls)?;
    Ok(Instance {
        file,
        problem,
        candidate,
        variant,
    })
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon < 2 {
        return Err(Error::Invalid(format!("catalog horizon must be >= 2, got {horizon}")));
    }
    Ok(())
}

pub fn lq1(horizon: usize) -> Result<Instance> {
    check_horizon(horizon)?;
    let f = file(
        "LQ1",
        1,
        SystemKind::Equation,
        ControlVariant::Interior,
        horizon,
        -1.0,
        1.0,
        regulator_block(),
    );
    let ric = riccati(&scalar(0.5), &scalar(1.0), &scalar(1.0), &scalar(1.0), 1e-15, 10_000)?;
    let k = ric.k[(0, 0)];
    let mut x = -1.0;
    let mut controls = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let u = -k * x;
        controls.push(DVector::from_element(1, u));
        x = 0.5 * x + u;
    }
    build(f, controls, Variant::InteriorInvertible)
}

pub fn slack1(horizon: usize) -> Result<Instance> {
    check_horizon(horizon)?;
    let stage = StageBlock {
        a: Some(scalar(1.0)),
        b: Some(scalar(0.0)),
        c: Some(DVector::from_element(1, 1.0)),
        q: Some(scalar(0.0)),
        r: Some(scalar(1.0)),
        ..StageBlock::default()
    };
    let f = file(
        "SLACK1",
        1,
        SystemKind::Inequation,
        ControlVariant::Interior,
        horizon,
        0.0,
        0.5,
        stage,
    );
    let problem = f.to_problem()?;
    let candidate = Trajectory::new(vec![DVector::zeros(1); horizon + 1], vec![DVector::zeros(1); horizon])?;
    Ok(Instance {
        file: f,
        problem,
        candidate,
        variant: Variant::InteriorInvertible,
    })
}

pub fn con1(horizon: usize) -> Result<Instance> {
    con1_with_sigma(horizon, 1.0)
}

/// `CON1` from another initial state. From `sigma < 0` the zero control is
/// no longer optimal and the constraint is inactive along the Riccati path.
pub fn con1_with_sigma(horizon: usize, sigma: f64) -> Result<Instance> {
    check_horizon(horizon)?;
    let stage = StageBlock {
        g: Some(scalar(1.0)),
        g0: Some(DVector::zeros(1)),
        ..regulator_block()
    };
    let f = file(
        "CON1",
        1,
        SystemKind::Equation,
        ControlVariant::Inequalities,
        horizon,
        sigma,
        1.0,
        stage,
    );
    let controls = if sigma >= 0.0 {
        vec![DVector::zeros(1); horizon]
    } else {
        let ric = riccati(&scalar(0.5), &scalar(1.0), &scalar(1.0), &scalar(1.0), 1e-15, 10_000)?;
        let k = ric.k[(0, 0)];
        let mut x = sigma;
        (0..horizon)
            .map(|_| {
                let u = -k * x;
                x = 0.5 * x + u;
                DVector::from_element(1, u)
            })
            .collect()
    };
    build(f, controls, Variant::MixedEquation)
}

pub fn mix1(horizon: usize) -> Result<Instance> {
    check_horizon(horizon)?;
    let stage = StageBlock {
        a: Some(scalar(0.5)),
        b: Some(DMatrix::from_row_slice(1, 2, &[1.0, 1.0])),
        c: Some(DVector::zeros(1)),
        q: Some(scalar(1.0)),
        r: Some(DMatrix::identity(2, 2)),
        g: Some(DMatrix::from_row_slice(1, 2, &[0.0, 1.0])),
        g0: Some(DVector::zeros(1)),
        e: Some(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])),
        e0: Some(DVector::zeros(1)),
    };
    let f = file(
        "MIX1",
        2,
        SystemKind::Equation,
        ControlVariant::Mixed,
        horizon,
        1.0,
        1.0,
        stage,
    );
    build(f, vec![DVector::zeros(2); horizon], Variant::MixedEquation)
}

pub fn instance(name: &str, horizon: usize) -> Result<Instance> {
    match name.to_ascii_uppercase().as_str() {
        "LQ1" => lq1(horizon),
        "SLACK1" => slack1(horizon),
        "CON1" => con1(horizon),
        "MIX1" => mix1(horizon),
        _ => Err(Error::Invalid(format!(
            "unknown catalog problem `{name}` (known: {})",
            names().collect::<Vec<_>>().join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_admissibility, DEFAULT_FEASIBILITY_TOL};

    #[test]
    fn scalar_riccati_fixed_point() {
        let ric = riccati(&scalar(0.5), &scalar(1.0), &scalar(1.0), &scalar(1.0), 1e-15, 10_000).unwrap();
        let p = ric.p[(0, 0)];
        // P^2 - 0.25 P - 1 = 0 after clearing (1 + P).
        assert!((p * p - 0.25 * p - 1.0).abs() < 1e-13);
        assert!((ric.k[(0, 0)] - 0.5 * p / (1.0 + p)).abs() < 1e-14);
    }

    #[test]
    fn candidates_are_admissible() {
        for name in names() {
            let inst = instance(name, 30).unwrap();
            assert_eq!(inst.candidate.horizon(), 29);
            let rep = check_admissibility(&inst.problem, &inst.candidate, DEFAULT_FEASIBILITY_TOL).unwrap();
            assert!(rep.feasible, "{name}: {:?}", rep.violations);
            inst.variant.check_compatible(&inst.problem).unwrap();
            assert_eq!(Variant::default_for(&inst.problem), inst.variant);
        }
    }

    #[test]
    fn files_round_trip() {
        for name in names() {
            let inst = instance(name, 12).unwrap();
            let back = ProblemFile::parse(&inst.file.to_text()).unwrap();
            assert_eq!(back, inst.file);
        }
        assert!(instance("nope", 12).is_err());
    }
}
