//! Acceptance criteria, one PASS/FAIL line each.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use horizon_pmp::certificate::{adjoint_forward, bound_sequence, verify, Condition, Variant};
use horizon_pmp::diff::{gateaux_matrix, gradient};
use horizon_pmp::lab::catalog;
use horizon_pmp::lab::cli;
use horizon_pmp::lab::sweep::{horizon_sweep, SweepOptions};
use horizon_pmp::model::Trajectory;
use horizon_pmp::qualification::{separation_check, span_co_disjoint_check, SeparationCertificate};
use horizon_pmp::truncation::{
    oracle_kkt, reduce, solve_at, solve_multipliers, Assembly, SolverOptions, TruncatedMultipliers,
};

type Outcome = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> std::result::Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("runtime {:.2}s exceeds {limit_s}s", elapsed.as_secs_f64())
    })
}

fn rel_err(num: &[f64], ana: &[f64]) -> f64 {
    let scale = ana.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = num.iter().zip(ana).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn certified(
    problem: &horizon_pmp::model::ProblemSpec,
    traj: &Trajectory,
    h: usize,
    variant: Variant,
    opts: &SolverOptions,
) -> std::result::Result<TruncatedMultipliers, String> {
    solve_at(problem, traj, h, variant, opts)
        .map_err(|e| format!("h={h}: {e}"))?
        .into_certified()
        .ok_or_else(|| format!("h={h}: no certificate"))
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let step = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for name in catalog::names() {
        let inst = catalog::instance(name, 12).map_err(|e| e.to_string())?;
        let (n, d) = (inst.problem.n, inst.problem.d);
        for t in [0usize, 1, 3, 7] {
            let stage = inst.file.stage(t);
            let beta_t = inst.file.discount.powi(t as i32);
            let mut points = vec![(inst.candidate.states[t].clone(), inst.candidate.controls[t].clone())];
            for _ in 0..3 {
                points.push((
                    DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0)),
                    DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0)),
                ));
            }
            for (x, u) in points {
                let z = DVector::from_iterator(n + d, x.iter().chain(u.iter()).copied());
                let split = |z: &DVector<f64>| (z.rows(0, n).into_owned(), z.rows(n, d).into_owned());
                let jf = gateaux_matrix(
                    &|z: &DVector<f64>| {
                        let (x, u) = split(z);
                        inst.problem.f(t, &x, &u)
                    },
                    &z,
                    step,
                )
                .map_err(|e| e.to_string())?;
                let mut ana = nalgebra::DMatrix::zeros(n, n + d);
                ana.view_mut((0, 0), (n, n)).copy_from(&stage.a);
                ana.view_mut((0, n), (n, d)).copy_from(&stage.b);
                worst = worst.max(rel_err(jf.as_slice(), ana.as_slice()));
                let gphi = gradient(
                    &|z: &DVector<f64>| {
                        let (x, u) = split(z);
                        inst.problem.phi(t, &x, &u)
                    },
                    &z,
                    step,
                )
                .map_err(|e| e.to_string())?;
                let gx = (&stage.q + stage.q.transpose()) * &x * -beta_t;
                let gu = (&stage.r + stage.r.transpose()) * &u * -beta_t;
                let ana_phi: Vec<f64> = gx.iter().chain(gu.iter()).copied().collect();
                worst = worst.max(rel_err(gphi.as_slice(), &ana_phi));
                let controls = &inst.problem.controls;
                if stage.g.nrows() > 0 {
                    let jg = gateaux_matrix(&|u: &DVector<f64>| controls.g_values(t, u), &u, step)
                        .map_err(|e| e.to_string())?;
                    worst = worst.max(rel_err(jg.as_slice(), stage.g.as_slice()));
                }
                if stage.e.nrows() > 0 {
                    let je = gateaux_matrix(&|u: &DVector<f64>| controls.e_values(t, u), &u, step)
                        .map_err(|e| e.to_string())?;
                    worst = worst.max(rel_err(je.as_slice(), stage.e.as_slice()));
                }
                checked += 1;
            }
        }
    }
    within(start.elapsed(), 1.0)?;
    ensure(worst <= 1e-6, || format!("worst relative error {worst:e}"))?;
    Ok(format!("{checked} points, worst relative error {worst:.1e}"))
}

fn separation_trichotomy() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut agree, mut separated) = (0, 0);
    for case in 0..200 {
        let dim = rng.gen_range(1..=4);
        let count = rng.gen_range(1..=6);
        let rows = common::random_rows(&mut rng, count, dim, 3);
        let fam = common::family(&rows);
        let cert = separation_check(&fam).map_err(|e| format!("case {case}: {e}"))?;
        ensure(cert.verify(None, &fam, 1e-9), || format!("case {case}: certificate fails its invariant"))?;
        let oracle_separated = !common::zero_in_hull(&common::rational_rows(&rows));
        ensure(cert.is_positive() == oracle_separated, || {
            format!("case {case}: rows {rows:?} solver {} oracle {oracle_separated}", cert.is_positive())
        })?;
        agree += 1;
        separated += usize::from(oracle_separated);
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!("{agree}/200 agree ({separated} separated)"))
}

fn span_hull_disjointness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut agree, mut disjoint) = (0, 0);
    for case in 0..100 {
        let dim = rng.gen_range(2..=4);
        let count = rng.gen_range(1..=5);
        let psi = loop {
            let r = common::random_rows(&mut rng, 1, dim, 2);
            if r[0].iter().any(|v| *v != 0) {
                break r;
            }
        };
        let rows = common::random_rows(&mut rng, count, dim, 3);
        let (eq, ineq) = (common::family(&psi), common::family(&rows));
        let cert = span_co_disjoint_check(&eq, &ineq).map_err(|e| format!("case {case}: {e}"))?;
        ensure(cert.verify(Some(&eq), &ineq, 1e-9), || format!("case {case}: certificate fails its invariant"))?;
        ensure(
            matches!(cert, SeparationCertificate::Disjoint { .. } | SeparationCertificate::Intersecting { .. }),
            || format!("case {case}: single-family outcome"),
        )?;
        let psi_q = &common::rational_rows(&psi)[0];
        let oracle_disjoint = !common::zero_in_hull(&common::project_out(&common::rational_rows(&rows), psi_q));
        ensure(cert.is_positive() == oracle_disjoint, || {
            format!("case {case}: psi {psi:?} rows {rows:?} solver {} oracle {oracle_disjoint}", cert.is_positive())
        })?;
        agree += 1;
        disjoint += usize::from(oracle_disjoint);
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!("{agree}/100 agree ({disjoint} disjoint)"))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let opts = SolverOptions::default();
    let mut worst = 0.0f64;
    for name in ["LQ1", "CON1", "MIX1"] {
        let inst = catalog::instance(name, 40).map_err(|e| e.to_string())?;
        let fh = reduce(&inst.problem, &inst.candidate, 10).map_err(|e| e.to_string())?;
        let derivs = fh.derivatives(opts.step).map_err(|e| e.to_string())?;
        let m = solve_multipliers(&fh, &derivs, inst.variant, &opts)
            .map_err(|e| e.to_string())?
            .into_certified()
            .ok_or_else(|| format!("{name}: solver found no certificate"))?;
        let o = oracle_kkt(&fh, inst.variant, &opts)
            .map_err(|e| e.to_string())?
            .outcome
            .into_certified()
            .ok_or_else(|| format!("{name}: oracle found no certificate"))?;
        let dot = m.lambda0 * o.lambda0 + m.p1().dot(o.p1());
        let o = if dot < 0.0 { o.negated() } else { o };
        let mut diff = (m.lambda0 - o.lambda0).abs();
        for (a, b) in m.p.iter().zip(&o.p).chain(m.mu.iter().zip(&o.mu)).chain(m.eq.iter().zip(&o.eq)) {
            diff = diff.max((a - b).amax());
        }
        ensure(diff <= 1e-5, || format!("{name}: componentwise difference {diff:e}"))?;
        worst = worst.max(diff);
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!("LQ1, CON1, MIX1 at h=10, worst difference {worst:.1e}"))
}

fn adjoint_recursion() -> Outcome {
    let inst = catalog::lq1(40).map_err(|e| e.to_string())?;
    let opts = SolverOptions::default();
    let h = 10;
    let m = certified(&inst.problem, &inst.candidate, h, inst.variant, &opts)?;
    let fh = reduce(&inst.problem, &inst.candidate, h).map_err(|e| e.to_string())?;
    let derivs = fh.derivatives(opts.step).map_err(|e| e.to_string())?;
    let p = adjoint_forward(m.lambda0, m.p1(), &derivs, h + 1).map_err(|e| e.to_string())?;
    let worst = p.iter().zip(&m.p).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    ensure(p.len() == 11, || format!("{} adjoint vectors", p.len()))?;
    ensure(worst <= 1e-8, || format!("worst difference {worst:e}"))?;
    Ok(format!("p_1..p_11 reproduced, worst difference {worst:.1e}"))
}

fn normalization_and_signs() -> Outcome {
    let mut count = 0;
    let (mut worst_norm, mut worst_sign) = (0.0f64, 0.0f64);
    for name in catalog::names() {
        let inst = catalog::instance(name, 40).map_err(|e| e.to_string())?;
        for variant in Variant::ALL {
            if variant.check_compatible(&inst.problem).is_err() {
                continue;
            }
            for assembly in [Assembly::Stacked, Assembly::AdjointReduced] {
                let opts = SolverOptions {
                    assembly,
                    ..SolverOptions::default()
                };
                for h in [2usize, 3, 5, 10, 20, 35] {
                    let Ok(out) = solve_at(&inst.problem, &inst.candidate, h, variant, &opts) else {
                        continue;
                    };
                    let Some(m) = out.certified() else { continue };
                    count += 1;
                    worst_norm = worst_norm.max((m.normalization() - 1.0).abs());
                    let mut neg = (-m.lambda0).max(0.0);
                    for v in &m.mu {
                        neg = neg.max(v.iter().fold(0.0, |a, x| a.max(-x)));
                    }
                    if variant.nonnegative_adjoint() {
                        for v in &m.p {
                            neg = neg.max(v.iter().fold(0.0, |a, x| a.max(-x)));
                        }
                    }
                    worst_sign = worst_sign.max(neg);
                }
            }
        }
    }
    ensure(count > 0, || "no certificates emitted".into())?;
    ensure(worst_norm <= 1e-10, || format!("normalization defect {worst_norm:e}"))?;
    ensure(worst_sign <= 1e-12, || format!("sign defect {worst_sign:e}"))?;
    let worst_sign = worst_sign + 0.0;
    Ok(format!("{count} certificates, normalization defect {worst_norm:.1e}, sign defect {worst_sign:.1e}"))
}

fn slackness() -> Outcome {
    let opts = SolverOptions::default();
    let slack = catalog::slack1(40).map_err(|e| e.to_string())?;
    let mut worst_p = 0.0f64;
    for h in [2usize, 5, 10, 20] {
        let m = certified(&slack.problem, &slack.candidate, h, slack.variant, &opts)?;
        worst_p = worst_p.max(m.p.iter().map(|v| v.amax()).fold(0.0, f64::max));
    }
    ensure(worst_p <= 1e-10, || format!("SLACK1 adjoint magnitude {worst_p:e}"))?;
    let (mut inactive, mut active, mut worst_defect) = (0, 0, 0.0f64);
    for sigma in [1.0, -1.0] {
        let inst = catalog::con1_with_sigma(40, sigma).map_err(|e| e.to_string())?;
        for h in [5usize, 10, 20] {
            let m = certified(&inst.problem, &inst.candidate, h, inst.variant, &opts)?;
            for (t, mu) in m.mu.iter().enumerate() {
                let g = inst.problem.controls.g_values(t, &inst.candidate.controls[t]);
                for (k, (mv, gv)) in mu.iter().zip(g.iter()).enumerate() {
                    if gv.abs() > opts.active_tol {
                        inactive += 1;
                        ensure(*mv == 0.0, || format!("sigma {sigma} h={h} t={t}: inactive mu[{k}] = {mv:e}"))?;
                    } else {
                        active += 1;
                        worst_defect = worst_defect.max((mv * gv).abs());
                    }
                }
            }
        }
    }
    ensure(inactive > 0 && active > 0, || format!("{inactive} inactive, {active} active rows"))?;
    ensure(worst_defect <= 1e-10, || format!("active defect {worst_defect:e}"))?;
    Ok(format!(
        "SLACK1 |p| <= {worst_p:.1e}; CON1 {inactive} inactive rows exactly 0, {active} active, defect {worst_defect:.1e}"
    ))
}

fn boundedness_envelope() -> Outcome {
    let inst = catalog::lq1(80).map_err(|e| e.to_string())?;
    let opts = SolverOptions::default();
    let mut worst = f64::NEG_INFINITY;
    for h in 30..=60 {
        let m = certified(&inst.problem, &inst.candidate, h, Variant::InteriorMonotone, &opts)?;
        let fh = reduce(&inst.problem, &inst.candidate, h).map_err(|e| e.to_string())?;
        let derivs = fh.derivatives(opts.step).map_err(|e| e.to_string())?;
        let bound = bound_sequence(&derivs, 30).map_err(|e| e.to_string())?;
        ensure(bound.gamma.iter().all(|g| (g - 0.5).abs() < 1e-9), || "gamma_t differs from 0.5".into())?;
        for t in 1..=30 {
            let excess = m.p[t - 1].lp_norm(1) - bound.zeta_t(t);
            worst = worst.max(excess);
            ensure(excess <= 1e-9, || format!("h={h} t={t}: |p_t| exceeds zeta_t by {excess:e}"))?;
        }
    }
    Ok(format!("h=30..60, t<=30, max |p_t| - zeta_t = {worst:.3}"))
}

fn horizon_convergence() -> Outcome {
    let start = Instant::now();
    let inst = catalog::lq1(100).map_err(|e| e.to_string())?;
    let opts = SweepOptions {
        extend_to: Some(20),
        ..SweepOptions::default()
    };
    let res = horizon_sweep(&inst.problem, &inst.candidate, &[10, 20, 40, 80], Variant::InteriorInvertible, &opts)
        .map_err(|e| e.to_string())?;
    ensure(res.converged, || format!("not converged, tail difference {:e}", res.tail_difference()))?;
    let tail = res.tail_difference();
    ensure(tail <= 1e-6, || format!("tail difference {tail:e}"))?;
    let cert = res.limits.as_ref().ok_or("no limit certificate")?;
    let rep = verify(&inst.problem, &inst.candidate, cert, 1e-6).map_err(|e| e.to_string())?;
    ensure(rep.pass(), || rep.summary())?;
    within(start.elapsed(), 30.0)?;
    Ok(format!(
        "tail difference {tail:.1e}, limit on {} stages verifies, {:.2}s",
        cert.window(),
        start.elapsed().as_secs_f64()
    ))
}

fn variant_semantics() -> Outcome {
    // The regulator from x0 = +1: the adjoint is negative along the path.
    let base = catalog::lq1(40).map_err(|e| e.to_string())?;
    let mut file = base.file.clone();
    file.sigma = DVector::from_element(1, 1.0);
    let problem = file.to_problem().map_err(|e| e.to_string())?;
    let controls = base.candidate.controls.iter().map(|u| -u).collect();
    let traj = Trajectory::simulate(&problem, controls).map_err(|e| e.to_string())?;
    let m = certified(&problem, &traj, 10, Variant::MixedEquation, &SolverOptions::default())?;
    let cert = m.window_certificate(10);
    ensure(cert.p.iter().any(|v| v.iter().any(|x| *x < 0.0)), || "no negative adjoint component".into())?;
    let sign_free = verify(&problem, &traj, &cert, 1e-6).map_err(|e| e.to_string())?;
    ensure(sign_free.pass(), || format!("rejected without sign rules: {}", sign_free.summary()))?;
    let mut signed = cert.clone();
    signed.variant = Variant::InteriorInvertible;
    let rep = verify(&problem, &traj, &signed, 1e-6).map_err(|e| e.to_string())?;
    ensure(!rep.pass(), || "accepted with sign rules".into())?;
    ensure(!rep.entry(Condition::Sign).pass, || "rejected for a reason other than signs".into())?;
    ensure(
        rep.entry(Condition::AdjointEquation).pass && rep.entry(Condition::WeakMaximum).pass,
        || "AE/WM fail".into(),
    )?;
    Ok(format!("p_1 = {:.4}: rejected as interior-invertible, accepted as mixed-equation", cert.p[0][0]))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = |f: &str| dir.path().join(f).to_string_lossy().into_owned();
    let run = |args: &[&str]| -> std::result::Result<(), String> {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = cli::run(std::iter::once("horizon-pmp").chain(args.iter().copied()), &mut out, &mut err);
        ensure(code == 0, || format!("{args:?} exited {code}: {}", String::from_utf8_lossy(&err)))
    };
    let (prob, traj) = (path("mix1.problem"), path("mix1.traj"));
    run(&["catalog", "emit", "MIX1", "--horizon", "60", "--out", &prob, "--trajectory-out", &traj])?;
    let mut outputs = Vec::new();
    for i in 0..2 {
        let (csv, prof) = (path(&format!("sweep{i}.csv")), path(&format!("profile{i}.csv")));
        run(&[
            "sweep", "--problem", &prob, "--trajectory", &traj, "--h", "10,20,30,40,50", "--out", &csv,
            "--profile-out", &prof,
        ])?;
        let read = |p: &str| std::fs::read(p).map_err(|e| e.to_string());
        outputs.push((read(&csv)?, read(&prof)?));
    }
    ensure(outputs[0] == outputs[1], || "outputs differ".into())?;
    ensure(!outputs[0].0.is_empty(), || "empty CSV".into())?;
    Ok(format!("{} + {} bytes identical", outputs[0].0.len(), outputs[0].1.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("gradient correctness", gradient_correctness),
        ("separation trichotomy", separation_trichotomy),
        ("span-hull disjointness", span_hull_disjointness),
        ("oracle equivalence", oracle_equivalence),
        ("adjoint recursion consistency", adjoint_recursion),
        ("normalization and signs", normalization_and_signs),
        ("slackness", slackness),
        ("boundedness envelope", boundedness_envelope),
        ("horizon convergence", horizon_convergence),
        ("variant semantics", variant_semantics),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                println!("criterion {:>2} FAIL {name}: {detail}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
