//! IsoScore and cosine statistics for synthetic point clouds and for the
//! course embeddings of an untrained and a trained head.

use isorec::geometry::{cosine_distribution, isoscore, principal_variances, project_2d};
use isorec::linalg::Matrix;
use isorec::seed::rng_from_seed;
use isorec::synthetic::{desk_config, desk_run, DeskSetup, DESK_SEED};
use rand::Rng;

fn cloud(scales: &[f64], n: usize) -> isorec::Result<Matrix> {
    let mut rng = rng_from_seed(5);
    let rows: Vec<Vec<f64>> =
        (0..n).map(|_| scales.iter().map(|s| s * (rng.random::<f64>() - 0.5)).collect()).collect();
    Matrix::from_rows(&rows)
}

fn main() -> isorec::Result<()> {
    for (name, scales) in [
        ("isotropic", vec![1.0; 8]),
        ("two of eight", vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        ("decaying", (0..8).map(|i| 0.5f64.powi(i)).collect()),
    ] {
        let points = cloud(&scales, 2000)?;
        let var = principal_variances(&points)?;
        println!("{name:<13} IsoScore {:.3}  leading variances {:.4?}", isoscore(&points)?, &var[..3]);
    }

    let run = desk_run(&DeskSetup::new(DESK_SEED)?, &desk_config(DESK_SEED))?;
    for (name, m) in [("untrained", &run.untrained), ("trained", &run.trained)] {
        println!("{name:<9} IsoScore {:.3}  cosine mean {:.3}  std {:.3}", m.isoscore, m.cos_mean, m.cos_std);
    }

    let ring = Matrix::from_rows(&(0..12).map(|k| {
        let a = k as f64 * std::f64::consts::PI / 6.0;
        vec![a.cos(), a.sin(), 0.1 * a.cos()]
    }).collect::<Vec<_>>())?;
    let stats = cosine_distribution(&ring)?;
    let xy = project_2d(&ring)?;
    println!("ring: {} pairs, mean cosine {:.3}, first point in 2-d ({:.3}, {:.3})", stats.pairs, stats.mean, xy[(0, 0)], xy[(0, 1)]);
    Ok(())
}
