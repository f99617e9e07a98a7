//! Command-line front end. Exit codes: 0 success, 1 negative outcome
//! (no certificate, infeasible, qualification fails), 2 bad input.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::certificate::{verify_with, Variant, VerifyOptions};
use crate::error::{Error, Result};
use crate::lab::catalog::{self, DEFAULT_HORIZON};
use crate::lab::format::{parse_trajectory, trajectory_to_text, ProblemFile};
use crate::lab::report::{profile_csv, sweep_csv};
use crate::lab::sweep::{horizon_sweep, parse_horizons, SweepOptions, SweepResult};
use crate::model::{check_admissibility, ProblemSpec, Trajectory, DEFAULT_FEASIBILITY_TOL};
use crate::qualification::{qualify_stage, SeparationCertificate, DEFAULT_ACTIVE_TOL};
use crate::truncation::{Assembly, SolverOptions};

/// Overrides the default tolerance of `certify` and `check`.
pub const TOL_ENV: &str = "HORIZON_PMP_TOL";
pub const DEFAULT_CERTIFY_TOL: f64 = 1e-6;
pub const DEFAULT_WINDOW: usize = 20;
const DEFAULT_HORIZONS: [usize; 6] = [10, 20, 40, 60, 80, 100];

#[derive(Debug, Parser)]
#[command(name = "horizon-pmp", version, about = "Multiplier certificates for infinite-horizon discrete-time control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep truncations, build limit multipliers and verify them.
    Certify(CertifyArgs),
    /// Solve truncations over a horizon list and write multipliers as CSV.
    Sweep(SweepArgs),
    /// Check the control-constraint qualification at one stage.
    Qualify(QualifyArgs),
    /// Built-in reference problems.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Admissibility of a trajectory.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
struct Inputs {
    /// Problem file.
    #[arg(long)]
    problem: PathBuf,
    /// Candidate trajectory file.
    #[arg(long)]
    trajectory: PathBuf,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    tol: Option<f64>,
    /// Number of adjoint vectors to verify.
    #[arg(long)]
    window: Option<usize>,
    /// Horizons as `A..B[:step]` or `a,b,c`.
    #[arg(long)]
    h: Option<String>,
    /// Eliminate adjoint vectors before the nullspace solve.
    #[arg(long)]
    reduced: bool,
    /// Write the condition report and certificate here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    h: String,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    reduced: bool,
    /// Multiplier table; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Successive-difference table; appended to stdout when omitted.
    #[arg(long)]
    profile_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct QualifyArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    t: usize,
    #[arg(long, default_value_t = DEFAULT_ACTIVE_TOL)]
    active_tol: f64,
}

#[derive(Debug, Subcommand)]
enum CatalogAction {
    List,
    /// Write a catalog problem and its candidate.
    Emit {
        name: String,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
        /// Problem file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trajectory_out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    tol: Option<f64>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{rendered}")
            } else {
                write!(err, "{rendered}")
            };
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn env_tol(default: f64) -> Result<f64> {
    match std::env::var(TOL_ENV) {
        Ok(v) => v
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|t| *t > 0.0 && t.is_finite())
            .ok_or_else(|| Error::Invalid(format!("{TOL_ENV} must be a positive number, got `{v}`"))),
        Err(_) => Ok(default),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Invalid(format!("cannot write {}: {e}", path.display())))
}

fn load(inputs: &Inputs) -> Result<(ProblemSpec, Trajectory)> {
    let problem = ProblemFile::parse(&read(&inputs.problem)?)?.to_problem()?;
    let traj = parse_trajectory(&read(&inputs.trajectory)?)?;
    Ok((problem, traj))
}

fn solver(reduced: bool) -> SolverOptions {
    SolverOptions {
        assembly: if reduced {
            Assembly::AdjointReduced
        } else {
            Assembly::Stacked
        },
        ..SolverOptions::default()
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Certify(a) => certify(a, out, err),
        Command::Sweep(a) => sweep(a, out, err),
        Command::Qualify(a) => qualify(a, out),
        Command::Catalog { action } => catalog_cmd(action, out),
        Command::Check(a) => check(a, out),
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Invalid(format!("write failed: {e}"))
}

fn report_failures(res: &SweepResult, err: &mut dyn Write) -> Result<()> {
    for f in &res.failed {
        writeln!(
            err,
            "h = {}: no certificate ({:?}), best residual {:.3e}",
            f.h, f.reason, f.best_residual
        )
        .map_err(io)?;
    }
    Ok(())
}

fn certify(a: CertifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let tol = match a.tol {
        Some(t) => t,
        None => env_tol(DEFAULT_CERTIFY_TOL)?,
    };
    let (problem, traj) = load(&a.inputs)?;
    let variant = a.variant.unwrap_or_else(|| Variant::default_for(&problem));
    variant.check_compatible(&problem)?;
    let adm = check_admissibility(&problem, &traj, DEFAULT_FEASIBILITY_TOL)?;
    if !adm.feasible {
        writeln!(out, "candidate is not admissible ({} violations)", adm.violations.len()).map_err(io)?;
        return Ok(1);
    }
    let max_h = traj.horizon().min(problem.horizon.saturating_sub(1));
    let horizons = match &a.h {
        Some(list) => parse_horizons(list)?,
        None => {
            let hs: Vec<usize> = DEFAULT_HORIZONS.into_iter().filter(|h| *h <= max_h).collect();
            if hs.len() < 2 {
                return Err(Error::Invalid(format!(
                    "candidate horizon {max_h} is too short for the default horizons; pass --h"
                )));
            }
            hs
        }
    };
    let window = a.window.unwrap_or(DEFAULT_WINDOW.min(traj.horizon()));
    if window == 0 || window > traj.horizon() {
        return Err(Error::Invalid(format!(
            "window {window} must be in 1..={}",
            traj.horizon()
        )));
    }
    let opts = SweepOptions {
        solver: solver(a.reduced),
        extend_to: Some(window),
        ..SweepOptions::default()
    };
    let res = horizon_sweep(&problem, &traj, &horizons, variant, &opts)?;
    report_failures(&res, err)?;
    let Some(cert) = res.limits.as_ref().filter(|_| res.converged) else {
        writeln!(
            out,
            "no certificate: sweep over {:?} did not converge (tail difference {:.3e}, {} failed runs)",
            horizons,
            res.tail_difference(),
            res.failed.len()
        )
        .map_err(io)?;
        return Ok(1);
    };
    let vopts = VerifyOptions {
        window: Some(window),
        ..VerifyOptions::new(tol)
    };
    let rep = verify_with(&problem, &traj, cert, &vopts)?;
    let mut text = rep.summary();
    for n in &res.notes {
        text += &format!("  note: {n}\n");
    }
    write!(out, "{text}").map_err(io)?;
    if let Some(path) = &a.report {
        write_file(path, &format!("{text}\n{}", cert.to_text()))?;
    }
    Ok(if rep.pass() { 0 } else { 1 })
}

fn sweep(a: SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let (problem, traj) = load(&a.inputs)?;
    let variant = a.variant.unwrap_or_else(|| Variant::default_for(&problem));
    let horizons = parse_horizons(&a.h)?;
    let opts = SweepOptions {
        solver: solver(a.reduced),
        ..SweepOptions::default()
    };
    let res = horizon_sweep(&problem, &traj, &horizons, variant, &opts)?;
    report_failures(&res, err)?;
    let table = sweep_csv(&res);
    let profile = profile_csv(&res);
    match &a.out {
        Some(p) => write_file(p, &table)?,
        None => write!(out, "{table}").map_err(io)?,
    }
    match (&a.profile_out, &a.out) {
        (Some(p), _) => write_file(p, &profile)?,
        (None, None) => write!(out, "\n{profile}").map_err(io)?,
        (None, Some(_)) => {}
    }
    writeln!(
        err,
        "{} of {} runs certified, converged: {}",
        res.runs.len(),
        horizons.len(),
        res.converged
    )
    .map_err(io)?;
    Ok(if res.failed.is_empty() { 0 } else { 1 })
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(" ")
}

fn qualify(a: QualifyArgs, out: &mut dyn Write) -> Result<i32> {
    let (problem, traj) = load(&a.inputs)?;
    let q = qualify_stage(&problem, &traj, a.t, a.active_tol)?;
    writeln!(out, "stage {}: active rows {:?}", q.t, q.active.indices).map_err(io)?;
    let line = match &q.certificate {
        None => "nothing to separate".to_string(),
        Some(SeparationCertificate::Separated { w }) => format!("separated, w = {}", fmt_vec(w.as_slice())),
        Some(SeparationCertificate::Disjoint { w }) => format!("disjoint, w = {}", fmt_vec(w.as_slice())),
        Some(SeparationCertificate::NotSeparated { alpha }) => format!("not separated, alpha = {}", fmt_vec(alpha)),
        Some(SeparationCertificate::Intersecting { zeta, theta }) => format!(
            "intersecting, zeta = {}, theta = {}",
            fmt_vec(zeta),
            fmt_vec(theta)
        ),
    };
    writeln!(out, "{line}").map_err(io)?;
    writeln!(out, "qualification {}", if q.holds() { "holds" } else { "fails" }).map_err(io)?;
    Ok(if q.holds() { 0 } else { 1 })
}

fn catalog_cmd(action: CatalogAction, out: &mut dyn Write) -> Result<i32> {
    match action {
        CatalogAction::List => {
            for e in catalog::ENTRIES {
                writeln!(out, "{:<7} {}", e.name, e.summary).map_err(io)?;
            }
        }
        CatalogAction::Emit {
            name,
            horizon,
            out: path,
            trajectory_out,
        } => {
            let inst = catalog::instance(&name, horizon)?;
            let text = inst.file.to_text();
            match path {
                Some(p) => write_file(&p, &text)?,
                None => write!(out, "{text}").map_err(io)?,
            }
            if let Some(p) = trajectory_out {
                write_file(&p, &trajectory_to_text(&inst.candidate))?;
            }
        }
    }
    Ok(0)
}

fn check(a: CheckArgs, out: &mut dyn Write) -> Result<i32> {
    let tol = match a.tol {
        Some(t) => t,
        None => env_tol(DEFAULT_FEASIBILITY_TOL)?,
    };
    let (problem, traj) = load(&a.inputs)?;
    let rep = check_admissibility(&problem, &traj, tol)?;
    writeln!(out, "feasible {} (tol {:e})", if rep.feasible { "yes" } else { "no" }, tol).map_err(io)?;
    for v in &rep.violations {
        writeln!(
            out,
            "  {:?} at t = {} component {}: {:.3e}",
            v.kind, v.t, v.component, v.magnitude
        )
        .map_err(io)?;
    }
    let min_slack = rep
        .slack
        .iter()
        .flat_map(|s| s.iter().copied())
        .fold(f64::INFINITY, f64::min);
    if min_slack.is_finite() {
        writeln!(out, "min dynamic slack {min_slack:.3e}").map_err(io)?;
    }
    Ok(if rep.feasible { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn catalog_list_and_usage_errors() {
        let (code, out, _) = run_capture(&["horizon-pmp", "catalog", "list"]);
        assert_eq!(code, 0);
        assert!(out.contains("LQ1") && out.contains("MIX1"));
        let (code, _, err) = run_capture(&["horizon-pmp", "bogus"]);
        assert_eq!(code, 2);
        assert!(!err.is_empty());
        let (code, _, err) = run_capture(&["horizon-pmp", "catalog", "emit", "NOPE"]);
        assert_eq!(code, 2);
        assert!(err.contains("unknown catalog problem"));
    }
}
