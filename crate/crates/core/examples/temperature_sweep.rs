//! Trains the desk-scale head at several temperatures and prints a metrics
//! table.

use isorec::synthetic::{desk_config, desk_run, DeskSetup, DESK_SEED};
use isorec::train::TrainingConfig;

fn main() -> isorec::Result<()> {
    let setup = DeskSetup::new(DESK_SEED)?;
    println!("{:>6} {:>7} {:>7} {:>7} {:>9} {:>9} {:>8}", "tau", "HR@5", "F1@5", "MRR", "IsoScore", "cos mean", "cos std");
    for tau in [0.2, 0.1, 0.05, 0.01] {
        let run = desk_run(&setup, &TrainingConfig { tau, ..desk_config(DESK_SEED) })?;
        let m = &run.trained;
        println!(
            "{tau:>6} {:>7.3} {:>7.3} {:>7.3} {:>9.3} {:>9.3} {:>8.3}",
            m.hit_rate, m.f1, m.mrr, m.isoscore, m.cos_mean, m.cos_std
        );
    }
    Ok(())
}
