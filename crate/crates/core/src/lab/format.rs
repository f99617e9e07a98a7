//! Line-oriented problem and trajectory files.
//!
//! Problem files describe the affine-quadratic class
//!
//! ```text
//! f_t(x, u)   = A_t x + B_t u + c_t
//! phi_t(x, u) = -beta^t (x' Q_t x + u' R_t u)
//! G_t u + g0_t >= 0,   E_t u + e0_t = 0
//! ```
//!
//! Grammar (`#` starts a comment, blank lines are ignored):
//!
//! ```text
//! problem v1
//! name LQ1                     # optional
//! n 1
//! d 1
//! kind equation                # or inequation
//! controls interior            # interior | inequalities | mixed
//! horizon 120
//! sigma -1
//! discount 1
//! state_lower -10              # optional box, both bounds required
//! state_upper 10
//! stage *                      # default block, required
//! A 1 1                        # matrix: NAME rows cols, then `rows` lines
//! 0.5
//! B 1 1
//! 1
//! c 1                          # vector: NAME len, then one line
//! 0
//! Q 1 1
//! 1
//! R 1 1
//! 1
//! end
//! stage 3                      # optional override, replaces listed entries
//! c 1
//! 0.25
//! end
//! ```
//!
//! Missing entries in the default block are zero (`G`, `E` with zero rows).
//! Trajectory files:
//!
//! ```text
//! trajectory v1
//! n 1
//! d 1
//! horizon 2                    # controls u_0..u_2, states x_0..x_3
//! x 0 -1
//! u 0 0.26
//! ...
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    ControlRow, ControlSetSpec, ControlVariant, Criterion, Dynamics, ProblemSpec, StateBox, SystemKind,
    Trajectory,
};

/// Stage data of the affine-quadratic class. `None` entries inherit from the
/// default block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageBlock {
    pub a: Option<DMatrix<f64>>,
    pub b: Option<DMatrix<f64>>,
    pub c: Option<DVector<f64>>,
    pub q: Option<DMatrix<f64>>,
    pub r: Option<DMatrix<f64>>,
    pub g: Option<DMatrix<f64>>,
    pub g0: Option<DVector<f64>>,
    pub e: Option<DMatrix<f64>>,
    pub e0: Option<DVector<f64>>,
}

/// Fully resolved data of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageData {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub g0: DVector<f64>,
    pub e: DMatrix<f64>,
    pub e0: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFile {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub kind: SystemKind,
    pub controls: ControlVariant,
    pub horizon: usize,
    pub sigma: DVector<f64>,
    pub discount: f64,
    pub state_box: Option<StateBox>,
    pub default_stage: StageBlock,
    pub overrides: BTreeMap<usize, StageBlock>,
}

fn pick<T: Clone>(over: Option<&Option<T>>, base: &Option<T>, zero: impl FnOnce() -> T) -> T {
    over.and_then(|o| o.clone())
        .or_else(|| base.clone())
        .unwrap_or_else(zero)
}

impl ProblemFile {
    pub fn stage(&self, t: usize) -> StageData {
        let (n, d) = (self.n, self.d);
        let base = &self.default_stage;
        let o = self.overrides.get(&t);
        let mi = base.g.as_ref().map_or(0, |g| g.nrows());
        let me = base.e.as_ref().map_or(0, |e| e.nrows());
        StageData {
            a: pick(o.map(|o| &o.a), &base.a, || DMatrix::zeros(n, n)),
            b: pick(o.map(|o| &o.b), &base.b, || DMatrix::zeros(n, d)),
            c: pick(o.map(|o| &o.c), &base.c, || DVector::zeros(n)),
            q: pick(o.map(|o| &o.q), &base.q, || DMatrix::zeros(n, n)),
            r: pick(o.map(|o| &o.r), &base.r, || DMatrix::zeros(d, d)),
            g: pick(o.map(|o| &o.g), &base.g, || DMatrix::zeros(0, d)),
            g0: pick(o.map(|o| &o.g0), &base.g0, || DVector::zeros(mi)),
            e: pick(o.map(|o| &o.e), &base.e, || DMatrix::zeros(0, d)),
            e0: pick(o.map(|o| &o.e0), &base.e0, || DVector::zeros(me)),
        }
    }

    /// Shape and consistency checks on every materialized stage.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Error::Invalid(what);
        if self.n == 0 || self.d == 0 {
            return Err(bad("n and d must be >= 1".into()));
        }
        if !(self.discount > 0.0) || !self.discount.is_finite() {
            return Err(bad(format!("discount must be > 0, got {}", self.discount)));
        }
        if self.sigma.len() != self.n {
            return Err(Error::Dimension {
                context: "sigma".into(),
                expected: self.n,
                found: self.sigma.len(),
            });
        }
        if let Some(t) = self.overrides.keys().find(|t| **t > self.horizon) {
            return Err(bad(format!("override for stage {t} beyond horizon {}", self.horizon)));
        }
        let base = self.stage(0);
        let (mi, me) = (base.g.nrows(), base.e.nrows());
        match self.controls {
            ControlVariant::Interior if mi + me > 0 => {
                return Err(bad("interior controls take no constraint rows".into()))
            }
            ControlVariant::Inequalities if mi == 0 || me > 0 => {
                return Err(bad("inequalities controls need G rows and no E rows".into()))
            }
            ControlVariant::Mixed if mi == 0 || me == 0 => {
                return Err(bad("mixed controls need both G and E rows".into()))
            }
            _ => {}
        }
        let mut stages: Vec<usize> = vec![0];
        stages.extend(self.overrides.keys().copied());
        for t in stages {
            let s = self.stage(t);
            let shapes = [
                ("A", s.a.shape(), (self.n, self.n)),
                ("B", s.b.shape(), (self.n, self.d)),
                ("c", (s.c.len(), 1), (self.n, 1)),
                ("Q", s.q.shape(), (self.n, self.n)),
                ("R", s.r.shape(), (self.d, self.d)),
                ("G", s.g.shape(), (mi, self.d)),
                ("g0", (s.g0.len(), 1), (mi, 1)),
                ("E", s.e.shape(), (me, self.d)),
                ("e0", (s.e0.len(), 1), (me, 1)),
            ];
            for (what, found, expected) in shapes {
                if found != expected {
                    return Err(bad(format!(
                        "stage {t}: {what} is {}x{}, expected {}x{}",
                        found.0, found.1, expected.0, expected.1
                    )));
                }
            }
        }
        if let Some(bx) = &self.state_box {
            if bx.lower.len() != self.n || bx.upper.len() != self.n {
                return Err(bad("state box bounds must have length n".into()));
            }
        }
        Ok(())
    }

    /// Builds the problem with exact differentials.
    pub fn to_problem(&self) -> Result<ProblemSpec> {
        self.validate()?;
        let data: Arc<Vec<StageData>> = Arc::new((0..=self.horizon).map(|t| self.stage(t)).collect());
        let beta = self.discount;
        let (d1, d2, d3, d4) = (data.clone(), data.clone(), data.clone(), data.clone());
        let dynamics = Dynamics::new(move |t, x, u| {
            let s = at(&d1, t);
            &s.a * x + &s.b * u + &s.c
        })
        .with_jacobians(move |t, _, _| {
            let s = at(&d2, t);
            (s.a.clone(), s.b.clone())
        });
        let criterion = Criterion::new(move |t, x, u| {
            let s = at(&d3, t);
            -beta.powi(t as i32) * (x.dot(&(&s.q * x)) + u.dot(&(&s.r * u)))
        })
        .with_gradients(move |t, x, u| {
            let s = at(&d4, t);
            let w = -beta.powi(t as i32);
            ((&s.q + s.q.transpose()) * x * w, (&s.r + s.r.transpose()) * u * w)
        });
        let base = &data[0];
        let row = |kind: char, k: usize| -> ControlRow {
            let (de, dg) = (data.clone(), data.clone());
            let label = format!("{kind}{k}");
            let eval = move |t: usize, u: &DVector<f64>| {
                let s = at(&de, t);
                if kind == 'g' {
                    s.g.row(k).dot(&u.transpose()) + s.g0[k]
                } else {
                    s.e.row(k).dot(&u.transpose()) + s.e0[k]
                }
            };
            ControlRow::new(label, eval).with_gradient(move |t, _| {
                let s = at(&dg, t);
                if kind == 'g' {
                    s.g.row(k).transpose()
                } else {
                    s.e.row(k).transpose()
                }
            })
        };
        let g_rows: Vec<ControlRow> = (0..base.g.nrows()).map(|k| row('g', k)).collect();
        let e_rows: Vec<ControlRow> = (0..base.e.nrows()).map(|k| row('e', k)).collect();
        let controls = match self.controls {
            ControlVariant::Interior => ControlSetSpec::interior(),
            ControlVariant::Inequalities => ControlSetSpec::inequalities(g_rows)?,
            ControlVariant::Mixed => ControlSetSpec::mixed(g_rows, e_rows)?,
        };
        let mut p = ProblemSpec::new(
            self.n,
            self.d,
            self.sigma.clone(),
            self.kind,
            controls,
            dynamics,
            criterion,
            self.horizon,
        )?
        .named(self.name.clone());
        p.regularity.frechet = true;
        p.regularity.lower_semicontinuous = true;
        if let Some(bx) = &self.state_box {
            p = p.with_state_set(bx.clone());
        }
        Ok(p)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("problem v1\n");
        let _ = writeln!(s, "name {}", self.name);
        let _ = writeln!(s, "n {}", self.n);
        let _ = writeln!(s, "d {}", self.d);
        let _ = writeln!(s, "kind {}", self.kind);
        let _ = writeln!(s, "controls {}", self.controls);
        let _ = writeln!(s, "horizon {}", self.horizon);
        let _ = writeln!(s, "sigma {}", join(self.sigma.iter()));
        let _ = writeln!(s, "discount {:e}", self.discount);
        if let Some(bx) = &self.state_box {
            let _ = writeln!(s, "state_lower {}", join(bx.lower.iter()));
            let _ = writeln!(s, "state_upper {}", join(bx.upper.iter()));
        }
        write_block(&mut s, "*", &self.default_stage);
        for (t, b) in &self.overrides {
            write_block(&mut s, &t.to_string(), b);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        lines.expect_header("problem v1")?;
        let mut name = String::from("unnamed");
        let mut n = None;
        let mut d = None;
        let mut kind = None;
        let mut controls = None;
        let mut horizon = None;
        let mut sigma = None;
        let mut discount = 1.0;
        let mut lower = None;
        let mut upper = None;
        let mut default_stage = None;
        let mut overrides = BTreeMap::new();
        while let Some((no, line)) = lines.next() {
            let (key, rest) = split_key(line);
            match key {
                "name" => name = rest.to_string(),
                "n" => n = Some(parse_usize(no, "n", rest)?),
                "d" => d = Some(parse_usize(no, "d", rest)?),
                "kind" => {
                    kind = Some(match rest {
                        "equation" => SystemKind::Equation,
                        "inequation" => SystemKind::Inequation,
                        _ => return Err(perr(no, "kind", "expected `equation` or `inequation`")),
                    })
                }
                "controls" => {
                    controls = Some(match rest {
                        "interior" => ControlVariant::Interior,
                        "inequalities" => ControlVariant::Inequalities,
                        "mixed" => ControlVariant::Mixed,
                        _ => return Err(perr(no, "controls", "expected interior, inequalities or mixed")),
                    })
                }
                "horizon" => horizon = Some(parse_usize(no, "horizon", rest)?),
                "sigma" => sigma = Some(parse_vec(no, "sigma", rest)?),
                "discount" => discount = parse_f64(no, "discount", rest)?,
                "state_lower" => lower = Some(parse_vec(no, "state_lower", rest)?),
                "state_upper" => upper = Some(parse_vec(no, "state_upper", rest)?),
                "stage" => {
                    let block = parse_block(&mut lines, no)?;
                    if rest == "*" {
                        if default_stage.replace(block).is_some() {
                            return Err(perr(no, "stage", "duplicate default block"));
                        }
                    } else {
                        let t = parse_usize(no, "stage", rest)?;
                        if overrides.insert(t, block).is_some() {
                            return Err(perr(no, "stage", "duplicate stage block"));
                        }
                    }
                }
                other => return Err(perr(no, other, "unknown key")),
            }
        }
        let end = lines.last_line();
        let state_box = match (lower, upper) {
            (None, None) => None,
            (Some(lower), Some(upper)) => Some(StateBox { lower, upper }),
            _ => return Err(perr(end, "state_lower", "both state_lower and state_upper are required")),
        };
        let file = Self {
            name,
            n: n.ok_or_else(|| perr(end, "n", "missing"))?,
            d: d.ok_or_else(|| perr(end, "d", "missing"))?,
            kind: kind.ok_or_else(|| perr(end, "kind", "missing"))?,
            controls: controls.ok_or_else(|| perr(end, "controls", "missing"))?,
            horizon: horizon.ok_or_else(|| perr(end, "horizon", "missing"))?,
            sigma: sigma.ok_or_else(|| perr(end, "sigma", "missing"))?,
            discount,
            state_box,
            default_stage: default_stage.ok_or_else(|| perr(end, "stage", "missing default block `stage *`"))?,
            overrides,
        };
        file.validate()?;
        Ok(file)
    }
}

/// Stages past the working horizon reuse the last materialized one.
fn at(data: &[StageData], t: usize) -> &StageData {
    &data[t.min(data.len() - 1)]
}

fn join<'a>(vals: impl Iterator<Item = &'a f64>) -> String {
    vals.map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

fn write_block(s: &mut String, tag: &str, b: &StageBlock) {
    let _ = writeln!(s, "stage {tag}");
    let mats = [("A", &b.a), ("B", &b.b), ("Q", &b.q), ("R", &b.r), ("G", &b.g), ("E", &b.e)];
    let vecs = [("c", &b.c), ("g0", &b.g0), ("e0", &b.e0)];
    for (name, m) in mats {
        if let Some(m) = m {
            let _ = writeln!(s, "{name} {} {}", m.nrows(), m.ncols());
            for r in 0..m.nrows() {
                let _ = writeln!(s, "{}", join(m.row(r).iter()));
            }
        }
    }
    for (name, v) in vecs {
        if let Some(v) = v {
            let _ = writeln!(s, "{name} {}", v.len());
            if !v.is_empty() {
                let _ = writeln!(s, "{}", join(v.iter()));
            }
        }
    }
    s.push_str("end\n");
}

fn perr(line: usize, field: &str, message: &str) -> Error {
    Error::Parse {
        line,
        field: field.to_string(),
        message: message.to_string(),
    }
}

fn split_key(line: &str) -> (&str, &str) {
    match line.split_once(char::is_whitespace) {
        Some((k, r)) => (k, r.trim()),
        None => (line, ""),
    }
}

fn parse_usize(line: usize, field: &str, s: &str) -> Result<usize> {
    s.parse().map_err(|_| perr(line, field, &format!("expected a nonnegative integer, got `{s}`")))
}

fn parse_f64(line: usize, field: &str, s: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| perr(line, field, &format!("expected a number, got `{s}`")))?;
    if !v.is_finite() {
        return Err(perr(line, field, "value is not finite"));
    }
    Ok(v)
}

fn parse_vec(line: usize, field: &str, s: &str) -> Result<DVector<f64>> {
    let vals = s
        .split_whitespace()
        .map(|x| parse_f64(line, field, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(vals))
}

struct Lines<'a> {
    inner: Box<dyn Iterator<Item = (usize, &'a str)> + 'a>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let inner = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        Self {
            inner: Box::new(inner),
            last: 0,
        }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let item = self.inner.next();
        if let Some((no, _)) = item {
            self.last = no;
        }
        item
    }

    fn last_line(&self) -> usize {
        self.last
    }

    fn expect_header(&mut self, header: &str) -> Result<()> {
        match self.next() {
            Some((_, l)) if l == header => Ok(()),
            Some((no, _)) => Err(perr(no, "header", &format!("expected `{header}`"))),
            None => Err(perr(1, "header", "empty input")),
        }
    }
}

fn parse_block(lines: &mut Lines<'_>, start: usize) -> Result<StageBlock> {
    let mut block = StageBlock::default();
    loop {
        let Some((no, line)) = lines.next() else {
            return Err(perr(start, "stage", "block is not closed with `end`"));
        };
        if line == "end" {
            return Ok(block);
        }
        let mut tok = line.split_whitespace();
        let name = tok.next().unwrap_or("");
        let dims: Vec<usize> = tok
            .map(|x| parse_usize(no, name, x))
            .collect::<Result<_>>()?;
        match name {
            "A" | "B" | "Q" | "R" | "G" | "E" => {
                let [rows, cols] = dims[..] else {
                    return Err(perr(no, name, "expected `NAME rows cols`"));
                };
                let mut m = DMatrix::zeros(rows, cols);
                for r in 0..rows {
                    let (rno, rl) = lines.next().ok_or_else(|| perr(no, name, "missing matrix rows"))?;
                    let v = parse_vec(rno, name, rl)?;
                    if v.len() != cols {
                        return Err(perr(rno, name, &format!("expected {cols} values, got {}", v.len())));
                    }
                    m.set_row(r, &v.transpose());
                }
                let slot = match name {
                    "A" => &mut block.a,
                    "B" => &mut block.b,
                    "Q" => &mut block.q,
                    "R" => &mut block.r,
                    "G" => &mut block.g,
                    _ => &mut block.e,
                };
                *slot = Some(m);
            }
            "c" | "g0" | "e0" => {
                let [len] = dims[..] else {
                    return Err(perr(no, name, "expected `NAME len`"));
                };
                let v = if len == 0 {
                    DVector::zeros(0)
                } else {
                    let (vno, vl) = lines.next().ok_or_else(|| perr(no, name, "missing vector values"))?;
                    let v = parse_vec(vno, name, vl)?;
                    if v.len() != len {
                        return Err(perr(vno, name, &format!("expected {len} values, got {}", v.len())));
                    }
                    v
                };
                let slot = match name {
                    "c" => &mut block.c,
                    "g0" => &mut block.g0,
                    _ => &mut block.e0,
                };
                *slot = Some(v);
            }
            other => return Err(perr(no, other, "unknown stage entry")),
        }
    }
}

pub fn trajectory_to_text(traj: &Trajectory) -> String {
    let mut s = String::from("trajectory v1\n");
    let _ = writeln!(s, "n {}", traj.states[0].len());
    let _ = writeln!(s, "d {}", traj.controls[0].len());
    let _ = writeln!(s, "horizon {}", traj.horizon());
    for (t, x) in traj.states.iter().enumerate() {
        let _ = writeln!(s, "x {t} {}", join(x.iter()));
    }
    for (t, u) in traj.controls.iter().enumerate() {
        let _ = writeln!(s, "u {t} {}", join(u.iter()));
    }
    s
}

pub fn parse_trajectory(text: &str) -> Result<Trajectory> {
    let mut lines = Lines::new(text);
    lines.expect_header("trajectory v1")?;
    let mut n = None;
    let mut d = None;
    let mut horizon = None;
    let mut xs: Vec<Option<DVector<f64>>> = Vec::new();
    let mut us: Vec<Option<DVector<f64>>> = Vec::new();
    while let Some((no, line)) = lines.next() {
        let (key, rest) = split_key(line);
        match key {
            "n" => n = Some(parse_usize(no, "n", rest)?),
            "d" => d = Some(parse_usize(no, "d", rest)?),
            "horizon" => {
                let h = parse_usize(no, "horizon", rest)?;
                horizon = Some(h);
                xs = vec![None; h + 2];
                us = vec![None; h + 1];
            }
            "x" | "u" => {
                let h = horizon.ok_or_else(|| perr(no, key, "`horizon` must come before stage lines"))?;
                let (t, vals) = split_key(rest);
                let t = parse_usize(no, key, t)?;
                let v = parse_vec(no, key, vals)?;
                let (dim, seq, max_t) = if key == "x" {
                    (n, &mut xs, h + 1)
                } else {
                    (d, &mut us, h)
                };
                let dim = dim.ok_or_else(|| perr(no, key, "dimensions must come before stage lines"))?;
                if t > max_t {
                    return Err(perr(no, key, &format!("stage {t} beyond {max_t}")));
                }
                if v.len() != dim {
                    return Err(perr(no, key, &format!("expected {dim} values, got {}", v.len())));
                }
                if seq[t].replace(v).is_some() {
                    return Err(perr(no, key, &format!("duplicate stage {t}")));
                }
            }
            other => return Err(perr(no, other, "unknown key")),
        }
    }
    let end = lines.last_line();
    if horizon.is_none() {
        return Err(perr(end, "horizon", "missing"));
    }
    let collect = |seq: Vec<Option<DVector<f64>>>, key: &str| -> Result<Vec<DVector<f64>>> {
        seq.into_iter()
            .enumerate()
            .map(|(t, v)| v.ok_or_else(|| perr(end, key, &format!("missing stage {t}"))))
            .collect()
    };
    Trajectory::new(collect(xs, "x")?, collect(us, "u")?)
}
