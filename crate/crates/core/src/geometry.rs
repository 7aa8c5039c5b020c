//! Embedding-space statistics: pairwise cosine distribution, IsoScore and a
//! principal-component projection to two dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{center, covariance_of_centered, dot, norm, symmetric_eigen, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineStats {
    pub mean: f64,
    pub std: f64,
    pub pairs: usize,
}

/// Mean and population standard deviation of the cosine similarity over all
/// unordered pairs of rows.
pub fn cosine_distribution(points: &Matrix) -> Result<CosineStats> {
    let n = points.rows();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let unit: Vec<Vec<f64>> = points
        .row_iter()
        .map(|row| {
            let len = norm(row);
            if len == 0.0 {
                return Err(Error::ZeroVector);
            }
            Ok(row.iter().map(|v| v / len).collect())
        })
        .collect::<Result<_>>()?;

    let mut sims = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            sims.push(dot(&unit[i], &unit[j]).clamp(-1.0, 1.0));
        }
    }
    let count = sims.len() as f64;
    let mean = sims.iter().sum::<f64>() / count;
    let var = sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / count;
    Ok(CosineStats { mean, std: var.sqrt(), pairs: sims.len() })
}

/// Variances of the point cloud along its principal axes, descending.
pub fn principal_variances(points: &Matrix) -> Result<Vec<f64>> {
    let centered = center(points);
    let eig = symmetric_eigen(&covariance_of_centered(&centered))?;
    let projected = centered.matmul(&eig.vectors)?;
    let n = projected.rows() as f64;
    Ok((0..projected.cols())
        .map(|k| projected.row_iter().map(|row| row[k] * row[k]).sum::<f64>() / n)
        .collect())
}

/// IsoScore of a point cloud: 1 when variance is spread evenly over all `D`
/// principal directions, 0 when it sits on a single one.
///
/// With `Λ` the principal variances, `σ̂ = √D·Λ/‖Λ‖`, the isotropy defect
/// `δ = ‖σ̂ − 1‖ / √(2(D − √D))`, the fraction of dimensions used
/// `φ = (D − δ²(D − √D))² / D²`, and finally `ι = (D·φ − 1)/(D − 1)`.
pub fn isoscore(points: &Matrix) -> Result<f64> {
    let (n, d) = (points.rows(), points.cols());
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    if d < 2 {
        return Err(Error::InvalidArgument(format!("isoscore needs at least 2 dimensions, got {d}")));
    }
    let lambda = principal_variances(points)?;
    isoscore_from_variances(&lambda)
}

/// The IsoScore formula applied to a given variance spectrum.
pub fn isoscore_from_variances(lambda: &[f64]) -> Result<f64> {
    let d = lambda.len() as f64;
    let len = norm(lambda);
    if !(len > 0.0) {
        return Err(Error::DegenerateCovariance);
    }
    let sqrt_d = d.sqrt();
    let defect = lambda.iter().map(|l| (sqrt_d * l / len - 1.0).powi(2)).sum::<f64>().sqrt()
        / (2.0 * (d - sqrt_d)).sqrt();
    let k = d - defect * defect * (d - sqrt_d);
    let phi = k * k / (d * d);
    Ok(((d * phi - 1.0) / (d - 1.0)).clamp(0.0, 1.0))
}

/// Coordinates on the two leading principal components. Each component's
/// sign is chosen so its largest-magnitude loading is positive.
pub fn project_2d(points: &Matrix) -> Result<Matrix> {
    let n = points.rows();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    if points.cols() < 2 {
        return Err(Error::InvalidArgument("projection needs at least 2 dimensions".into()));
    }
    let centered = center(points);
    let eig = symmetric_eigen(&covariance_of_centered(&centered))?;
    if !(eig.values[0] > 0.0) {
        return Err(Error::DegenerateCovariance);
    }
    let mut axes = Matrix::zeros(points.cols(), 2);
    for k in 0..2 {
        let mut v = eig.vector(k);
        let pivot = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for (r, x) in v.into_iter().enumerate() {
            axes[(r, k)] = x;
        }
    }
    centered.matmul(&axes)
}
