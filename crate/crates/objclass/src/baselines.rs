//! Classical reference classifiers: minimum distance, Mahalanobis,
//! maximum likelihood, parallelepiped and a k-nearest-neighbor realization
//! of the feature-space rule. All are pure functions of per-class Gaussian
//! statistics or the raw training set.

use crate::error::{Error, Result};
use crate::raster::{ClassId, TrainingSet};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub class: ClassId,
    pub count: usize,
    pub mean: Vec<f64>,
    /// Regularized covariance, row-major B x B.
    pub covariance: Vec<f64>,
    /// Unbiased per-band standard deviation.
    pub std_dev: Vec<f64>,
    /// Lower Cholesky factor of the covariance, row-major.
    chol: Vec<f64>,
    pub ln_det: f64,
}

impl ClassStats {
    /// Builds stats from explicit moments; the covariance must already be
    /// positive definite (no regularization is applied here).
    pub fn from_moments(
        class: ClassId,
        count: usize,
        mean: Vec<f64>,
        covariance: Vec<f64>,
    ) -> Result<Self> {
        let b = mean.len();
        if covariance.len() != b * b {
            return Err(Error::Shape(format!(
                "covariance length {} for dimension {b}",
                covariance.len()
            )));
        }
        let chol = cholesky(&covariance, b, 0.0).ok_or_else(|| {
            Error::InvalidArgument(format!("covariance of class {class} not positive definite"))
        })?;
        let ln_det = 2.0 * (0..b).map(|i| chol[i * b + i].ln()).sum::<f64>();
        let std_dev = (0..b).map(|i| covariance[i * b + i].sqrt()).collect();
        Ok(ClassStats {
            class,
            count,
            mean,
            covariance,
            std_dev,
            chol,
            ln_det,
        })
    }

    /// Squared Mahalanobis distance (x - mu)^T Sigma^-1 (x - mu), computed
    /// through the Cholesky factor.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let b = self.mean.len();
        let mut z: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        // forward-solve L w = z in place
        for i in 0..b {
            for j in 0..i {
                z[i] -= self.chol[i * b + j] * z[j];
            }
            z[i] /= self.chol[i * b + i];
        }
        z.iter().map(|w| w * w).sum()
    }

    pub fn euclidean_sq(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.mean)
            .map(|(v, m)| {
                let d = v - m;
                d * d
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClassStats {
    pub dim: usize,
    pub stats: Vec<ClassStats>,
}

impl GaussianClassStats {
    pub fn class_ids(&self) -> Vec<ClassId> {
        self.stats.iter().map(|s| s.class).collect()
    }
}

/// Lower-Cholesky that rejects pivots below `min_pivot`, so numerically
/// singular matrices fail and get regularized instead of producing a
/// useless near-infinite inverse.
fn cholesky(matrix: &[f64], b: usize, min_pivot: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; b * b];
    for i in 0..b {
        for j in 0..=i {
            let mut sum = matrix[i * b + j];
            for k in 0..j {
                sum -= l[i * b + k] * l[j * b + k];
            }
            if i == j {
                if sum <= min_pivot {
                    return None;
                }
                l[i * b + i] = sum.sqrt();
            } else {
                l[i * b + j] = sum / l[j * b + j];
            }
        }
    }
    Some(l)
}

fn pivot_floor(matrix: &[f64], b: usize) -> f64 {
    let max_diag = (0..b).map(|i| matrix[i * b + i]).fold(0.0f64, f64::max);
    1e-10 * max_diag
}

/// Unbiased per-class mean and covariance; the covariance is ridged by
/// lambda*I (lambda = 1e-6 * trace/B, floored for zero-scatter classes),
/// repeatedly up to ten times until it factors.
pub fn fit_stats(data: &TrainingSet) -> Result<GaussianClassStats> {
    let b = data.dim;
    let classes = data.classes();
    let mut stats = Vec::with_capacity(classes.len());
    for class in classes {
        let members: Vec<&Vec<f64>> = data
            .samples
            .iter()
            .filter(|(_, l)| *l == class)
            .map(|(f, _)| f)
            .collect();
        if members.len() < 2 {
            return Err(Error::TooFewSamples {
                class,
                count: members.len(),
                required: 2,
            });
        }
        let n = members.len() as f64;
        let mean: Vec<f64> = (0..b)
            .map(|j| members.iter().map(|m| m[j]).sum::<f64>() / n)
            .collect();
        let mut covariance = vec![0.0f64; b * b];
        for m in &members {
            for i in 0..b {
                let di = m[i] - mean[i];
                for j in 0..b {
                    covariance[i * b + j] += di * (m[j] - mean[j]);
                }
            }
        }
        for v in &mut covariance {
            *v /= n - 1.0;
        }
        let std_dev: Vec<f64> = (0..b).map(|i| covariance[i * b + i].sqrt()).collect();

        let trace: f64 = (0..b).map(|i| covariance[i * b + i]).sum();
        let base = if trace > 0.0 { trace / b as f64 } else { 1.0 };
        let lambda = 1e-6 * base;
        let mut chol = cholesky(&covariance, b, pivot_floor(&covariance, b));
        let mut attempts = 0;
        while chol.is_none() && attempts < 10 {
            for i in 0..b {
                covariance[i * b + i] += lambda;
            }
            chol = cholesky(&covariance, b, pivot_floor(&covariance, b));
            attempts += 1;
        }
        let chol = chol.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "covariance of class {class} not positive definite after regularization"
            ))
        })?;
        let ln_det = 2.0 * (0..b).map(|i| chol[i * b + i].ln()).sum::<f64>();
        stats.push(ClassStats {
            class,
            count: members.len(),
            mean,
            covariance,
            std_dev,
            chol,
            ln_det,
        });
    }
    Ok(GaussianClassStats { dim: b, stats })
}

fn argmin_class(stats: &GaussianClassStats, score: impl Fn(&ClassStats) -> f64) -> ClassId {
    let mut best = 0usize;
    let mut best_score = f64::INFINITY;
    for (i, s) in stats.stats.iter().enumerate() {
        let v = score(s);
        if v < best_score {
            best_score = v;
            best = i;
        }
    }
    stats.stats[best].class
}

/// Nearest class mean in Euclidean distance; ties to the smallest id.
pub fn classify_min_distance(stats: &GaussianClassStats, pixel: &[f64]) -> ClassId {
    argmin_class(stats, |s| s.euclidean_sq(pixel))
}

/// Smallest Mahalanobis distance under the per-class covariance.
pub fn classify_mahalanobis(stats: &GaussianClassStats, pixel: &[f64]) -> ClassId {
    argmin_class(stats, |s| s.mahalanobis_sq(pixel))
}

/// Equal-prior Gaussian maximum likelihood:
/// argmin ln det Sigma_c + Mahalanobis^2.
pub fn classify_max_likelihood(stats: &GaussianClassStats, pixel: &[f64]) -> ClassId {
    argmin_class(stats, |s| s.ln_det + s.mahalanobis_sq(pixel))
}

/// Per-band box rule with width k standard deviations. Inside exactly one
/// box gives that class, several boxes fall back to the nearest mean, no
/// box at all returns 0 (unclassified).
pub fn classify_parallelepiped(stats: &GaussianClassStats, pixel: &[f64], k: f64) -> ClassId {
    let inside: Vec<&ClassStats> = stats
        .stats
        .iter()
        .filter(|s| {
            pixel
                .iter()
                .zip(&s.mean)
                .zip(&s.std_dev)
                .all(|((x, m), sd)| (x - m).abs() <= k * sd)
        })
        .collect();
    match inside.len() {
        0 => 0,
        1 => inside[0].class,
        _ => {
            let mut best = inside[0];
            let mut best_d = f64::INFINITY;
            for s in inside {
                let d = s.euclidean_sq(pixel);
                if d < best_d {
                    best_d = d;
                    best = s;
                }
            }
            best.class
        }
    }
}

/// k-nearest-neighbor plurality vote in spectral space; distance ties are
/// broken by sample index, label ties by the smallest class id.
pub fn classify_feature_space(data: &TrainingSet, pixel: &[f64], k: usize) -> ClassId {
    let mut distances: Vec<(f64, usize)> = data
        .samples
        .iter()
        .enumerate()
        .map(|(i, (f, _))| {
            let d: f64 = f
                .iter()
                .zip(pixel)
                .map(|(a, b)| {
                    let diff = a - b;
                    diff * diff
                })
                .sum();
            (d, i)
        })
        .collect();
    distances.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let k = k.max(1).min(distances.len());
    let mut counts: std::collections::BTreeMap<ClassId, usize> = std::collections::BTreeMap::new();
    for &(_, i) in distances.iter().take(k) {
        *counts.entry(data.samples[i].1).or_insert(0) += 1;
    }
    let mut winner = 0u16;
    let mut winner_count = 0usize;
    for (&label, &count) in &counts {
        if count > winner_count {
            winner = label;
            winner_count = count;
        }
    }
    winner
}
