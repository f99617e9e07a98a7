//! Horizon sweep with successive differences and CSV output.

use horizon_pmp::lab::catalog;
use horizon_pmp::lab::report::{profile_csv, sweep_csv};
use horizon_pmp::lab::sweep::{horizon_sweep, parse_horizons, SweepOptions};

fn main() -> horizon_pmp::Result<()> {
    let inst = catalog::con1(120)?;
    let horizons = parse_horizons("10..100:10")?;
    let res = horizon_sweep(&inst.problem, &inst.candidate, &horizons, inst.variant, &SweepOptions::default())?;
    println!(
        "CON1: {} runs, window {}, converged {}, tail difference {:.2e}",
        res.runs.len(),
        res.window,
        res.converged,
        res.tail_difference()
    );
    for q in res.cauchy_profile.iter().take(4) {
        let diffs: Vec<String> = q.diffs.iter().map(|d| format!("{d:.1e}")).collect();
        println!("  {:<8} {} [{}]", q.label, q.convergent, diffs.join(" "));
    }
    let csv = sweep_csv(&res);
    println!("\n{}", csv.lines().take(3).collect::<Vec<_>>().join("\n"));
    println!("...\n{}", profile_csv(&res).lines().next().unwrap_or_default());
    Ok(())
}
