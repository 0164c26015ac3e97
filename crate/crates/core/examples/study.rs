//! Runs the simulation study for the seeds given on the command line.
//!
//! `cargo run --release -p tlpred-core --example study -- 1 2 3`

use tlpred_core::harness::{run_study, StudyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seeds = std::env::args().skip(1).map(|s| s.parse::<u64>()).collect::<Result<Vec<_>, _>>()?;
    for seed in if seeds.is_empty() { vec![1] } else { seeds } {
        let start = std::time::Instant::now();
        let r = run_study(&StudyConfig { seed, ..Default::default() })?;
        println!(
            "seed {seed}: joint {:.4} coverage {:.4} gaussian {:.4} raw {:.4} K {:.3} tpdm err {:.4} bw {:.3} ({:.1?})",
            r.joint_fraction,
            r.coverage,
            r.gaussian_coverage,
            r.gaussian_raw_coverage,
            r.k,
            r.tpdm_max_error,
            r.bandwidth,
            start.elapsed()
        );
    }
    Ok(())
}
