//! CSV tables for sweeps. Numbers use a fixed `{:.16e}` format so output is
//! byte-identical across runs.

use std::fmt::Write as _;

use crate::lab::sweep::SweepResult;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row per certified horizon: `h, lambda0, p[t][a].., mu[t][k].., eq[t][j].., residual_AE, residual_WM`
/// over the tracked window.
pub fn sweep_csv(res: &SweepResult) -> String {
    let w = res.window;
    let mut s = String::new();
    let Some(first) = res.runs.first() else {
        s.push_str("h,lambda0,residual_AE,residual_WM\n");
        return s;
    };
    let m0 = &first.multipliers;
    let (n, mi, me) = (m0.p[0].len(), m0.mu[0].len(), m0.eq[0].len());
    let mut header = vec!["h".to_string(), "lambda0".to_string()];
    for t in 1..=w {
        header.extend((0..n).map(|a| format!("p[{t}][{a}]")));
    }
    for t in 0..w {
        header.extend((0..mi).map(|k| format!("mu[{t}][{k}]")));
    }
    for t in 0..w {
        header.extend((0..me).map(|j| format!("eq[{t}][{j}]")));
    }
    header.push("residual_AE".into());
    header.push("residual_WM".into());
    let _ = writeln!(s, "{}", header.join(","));
    for run in &res.runs {
        let m = &run.multipliers;
        let mut row = vec![run.h.to_string(), num(m.lambda0)];
        row.extend(m.p[..w].iter().flat_map(|v| v.iter().map(|x| num(*x))));
        row.extend(m.mu[..w].iter().flat_map(|v| v.iter().map(|x| num(*x))));
        row.extend(m.eq[..w].iter().flat_map(|v| v.iter().map(|x| num(*x))));
        row.push(num(m.max_residual_ae()));
        row.push(num(m.max_residual_wm()));
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// One row per tracked quantity with its successive differences, labelled
/// by the pair of horizons compared.
pub fn profile_csv(res: &SweepResult) -> String {
    let mut s = String::new();
    let mut header = vec!["quantity".to_string(), "convergent".to_string()];
    header.extend(res.runs.windows(2).map(|p| format!("d{}_{}", p[0].h, p[1].h)));
    let _ = writeln!(s, "{}", header.join(","));
    for q in &res.cauchy_profile {
        let mut row = vec![q.label.clone(), q.convergent.to_string()];
        row.extend(q.diffs.iter().map(|d| num(*d)));
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}
