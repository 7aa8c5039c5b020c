//! Desk-scale training run on the synthetic catalog with the stub encoder.
//! Compares the untrained head against the trained one.
//!
//! Optional arguments: `tau lambda seed`.

use isorec::synthetic::{desk_config, desk_run, DeskSetup, DESK_SEED};

fn main() -> isorec::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(DESK_SEED);
    let mut config = desk_config(seed);
    config.tau = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(config.tau);
    config.lambda = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(config.lambda);

    let setup = DeskSetup::new(seed)?;
    let run = desk_run(&setup, &config)?;

    for e in &run.outcome.report.epochs {
        println!("epoch {:>2}  contrastive {:.4}  isotropy {:.4}", e.epoch + 1, e.contrastive, e.isotropy);
    }
    println!("{:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "", "HR@5", "F1@5", "MRR", "IsoScore", "cos mean", "cos std");
    for (name, m) in [("untrained", &run.untrained), ("trained", &run.trained)] {
        println!(
            "{name:<10} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            m.hit_rate, m.f1, m.mrr, m.isoscore, m.cos_mean, m.cos_std
        );
    }
    println!("trained in {:.2}s", run.outcome.report.wall_time_secs);
    Ok(())
}
