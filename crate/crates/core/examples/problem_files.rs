//! The text formats for problems, trajectories and certificates.

use horizon_pmp::certificate::Certificate;
use horizon_pmp::lab::catalog;
use horizon_pmp::lab::format::{parse_trajectory, trajectory_to_text, ProblemFile};
use horizon_pmp::truncation::{solve_at, SolverOptions};

fn main() -> horizon_pmp::Result<()> {
    let inst = catalog::mix1(6)?;
    let text = inst.file.to_text();
    println!("{text}");
    assert_eq!(ProblemFile::parse(&text)?, inst.file);

    let traj_text = trajectory_to_text(&inst.candidate);
    println!("{traj_text}");
    assert_eq!(parse_trajectory(&traj_text)?, inst.candidate);

    if let Some(m) = solve_at(&inst.problem, &inst.candidate, 4, inst.variant, &SolverOptions::default())?.certified() {
        let cert = m.window_certificate(3);
        let cert_text = cert.to_text();
        println!("{cert_text}");
        assert_eq!(Certificate::from_text(&cert_text)?, cert);
    }

    match ProblemFile::parse("problem v1\nn 1\nd x\n") {
        Err(e) => println!("bad file: {e}"),
        Ok(_) => println!("bad file parsed"),
    }
    Ok(())
}
