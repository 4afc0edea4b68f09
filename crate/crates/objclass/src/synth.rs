//! Synthetic multispectral scenes with known ground truth.
//!
//! Geometry is a Voronoi partition of K seed points smoothed by a majority
//! filter, which yields contiguous irregular patches. Observations are
//! per-band Gaussians around the class mean; a salt fraction of pixels is
//! drawn from another class instead, which is what the spatially-aware
//! classifiers are expected to clean up.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ClassId, LabelMap, Raster};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    /// Number of classes K; labels run 1..=K.
    pub classes: u16,
    /// K vectors of length `bands`.
    pub class_means: Vec<Vec<f64>>,
    /// K vectors of per-band standard deviations, each >= 0.
    pub class_sigmas: Vec<Vec<f64>>,
    /// Majority-filter radius in pixels; controls patch boundary smoothness.
    pub region_scale: usize,
    /// Fraction of pixels whose observation is drawn from another class.
    pub noise_salt_fraction: f64,
    pub seed: u64,
    /// Pixel size recorded in the generated raster header.
    pub resolution_m: f64,
}

impl SceneSpec {
    /// Evenly spaced class means: class c (0-based) sits at `mean_step * c`
    /// on every band, with a shared per-band sigma.
    pub fn graded(
        width: usize,
        height: usize,
        bands: usize,
        classes: u16,
        mean_step: f64,
        sigma: f64,
        region_scale: usize,
        noise_salt_fraction: f64,
        seed: u64,
    ) -> Self {
        let class_means = (0..classes)
            .map(|c| vec![mean_step * c as f64; bands])
            .collect();
        let class_sigmas = (0..classes).map(|_| vec![sigma; bands]).collect();
        SceneSpec {
            width,
            height,
            bands,
            classes,
            class_means,
            class_sigmas,
            region_scale,
            noise_salt_fraction,
            seed,
            resolution_m: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let k = self.classes as usize;
        if k < 2 {
            return Err(Error::SceneGeneration("need at least 2 classes".into()));
        }
        if self.width == 0 || self.height == 0 || self.bands == 0 {
            return Err(Error::EmptyRaster);
        }
        if k > self.width * self.height {
            return Err(Error::SceneGeneration(format!(
                "{k} classes cannot fit in {}x{} pixels",
                self.width, self.height
            )));
        }
        if self.class_means.len() != k || self.class_sigmas.len() != k {
            return Err(Error::SceneGeneration(
                "class_means/class_sigmas length must equal classes".into(),
            ));
        }
        for (c, (m, s)) in self.class_means.iter().zip(&self.class_sigmas).enumerate() {
            if m.len() != self.bands || s.len() != self.bands {
                return Err(Error::SceneGeneration(format!(
                    "class {} mean/sigma length must equal bands",
                    c + 1
                )));
            }
            if s.iter().any(|&v| v < 0.0) {
                return Err(Error::SceneGeneration("sigmas must be >= 0".into()));
            }
        }
        for a in 0..k {
            for b in (a + 1)..k {
                if self.class_means[a] == self.class_means[b] {
                    return Err(Error::SceneGeneration(format!(
                        "class means {} and {} are identical",
                        a + 1,
                        b + 1
                    )));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.noise_salt_fraction) {
            return Err(Error::SceneGeneration(
                "noise_salt_fraction must lie in [0, 1]".into(),
            ));
        }
        if self.region_scale < 1 {
            return Err(Error::SceneGeneration("region_scale must be >= 1".into()));
        }
        if !(self.resolution_m > 0.0) {
            return Err(Error::SceneGeneration("resolution_m must be > 0".into()));
        }
        Ok(())
    }
}

/// A generated scene: observations, ground truth and the per-pixel salt
/// bookkeeping needed by noise-sensitivity tests.
#[derive(Debug, Clone)]
pub struct Scene {
    pub raster: Raster,
    pub labels: LabelMap,
    /// True where the observation was drawn from a different class.
    pub salt: Vec<bool>,
}

impl Scene {
    pub fn salt_count(&self) -> usize {
        self.salt.iter().filter(|&&s| s).count()
    }
}

fn voronoi_labels(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<ClassId> {
    let k = spec.classes as usize;
    let mut seeds: Vec<(usize, usize)> = Vec::with_capacity(k);
    while seeds.len() < k {
        let x = rng.random_range(0..spec.width);
        let y = rng.random_range(0..spec.height);
        if !seeds.contains(&(x, y)) {
            seeds.push((x, y));
        }
    }
    let mut labels = vec![0u16; spec.width * spec.height];
    for y in 0..spec.height {
        for x in 0..spec.width {
            let mut best = 0usize;
            let mut best_d = usize::MAX;
            for (c, &(sx, sy)) in seeds.iter().enumerate() {
                let dx = sx.abs_diff(x);
                let dy = sy.abs_diff(y);
                let d = dx * dx + dy * dy;
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            labels[y * spec.width + x] = best as u16 + 1;
        }
    }
    labels
}

/// One synchronous pass of a square majority filter of the given radius.
fn majority_smooth(labels: &[ClassId], width: usize, height: usize, radius: usize, k: usize) -> Vec<ClassId> {
    let mut out = vec![0u16; labels.len()];
    let mut counts = vec![0usize; k + 1];
    for y in 0..height {
        for x in 0..width {
            counts.iter_mut().for_each(|c| *c = 0);
            let y0 = y.saturating_sub(radius);
            let y1 = (y + radius).min(height - 1);
            let x0 = x.saturating_sub(radius);
            let x1 = (x + radius).min(width - 1);
            for yy in y0..=y1 {
                for xx in x0..=x1 {
                    counts[labels[yy * width + xx] as usize] += 1;
                }
            }
            let mut best = labels[y * width + x];
            let mut best_count = 0usize;
            for (label, &count) in counts.iter().enumerate().skip(1) {
                if count > best_count {
                    best_count = count;
                    best = label as u16;
                }
            }
            out[y * width + x] = best;
        }
    }
    out
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let k = spec.classes as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut truth: Option<Vec<ClassId>> = None;
    for _attempt in 0..10 {
        let raw = voronoi_labels(spec, &mut rng);
        let smoothed = majority_smooth(&raw, spec.width, spec.height, spec.region_scale, k);
        let mut present = vec![false; k + 1];
        for &l in &smoothed {
            present[l as usize] = true;
        }
        if present.iter().skip(1).all(|&p| p) {
            truth = Some(smoothed);
            break;
        }
    }
    let truth = truth.ok_or_else(|| {
        Error::SceneGeneration("a class lost all pixels after smoothing in 10 attempts".into())
    })?;

    let pixel_count = spec.width * spec.height;
    let mut data = vec![0.0f32; pixel_count * spec.bands];
    let mut salt = vec![false; pixel_count];
    for idx in 0..pixel_count {
        let truth_class = truth[idx] as usize - 1;
        let u: f64 = rng.random();
        let source_class = if u < spec.noise_salt_fraction {
            salt[idx] = true;
            // uniformly one of the other classes
            let mut other = rng.random_range(0..k - 1);
            if other >= truth_class {
                other += 1;
            }
            other
        } else {
            truth_class
        };
        for band in 0..spec.bands {
            let z: f64 = rng.sample(StandardNormal);
            let value = spec.class_means[source_class][band]
                + spec.class_sigmas[source_class][band] * z;
            data[band * pixel_count + idx] = value as f32;
        }
    }

    Ok(Scene {
        raster: Raster::new(
            spec.width,
            spec.height,
            spec.bands,
            spec.resolution_m,
            data,
        )?,
        labels: LabelMap::new(spec.width, spec.height, truth)?,
        salt,
    })
}

/// Draws up to `per_class` training pixels per class from the ground truth,
/// deterministically for a given seed. Returns row-major pixel indices.
pub fn sample_training_pixels(
    labels: &LabelMap,
    per_class: usize,
    seed: u64,
) -> Vec<(usize, ClassId)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = labels.classes();
    let mut picks = Vec::new();
    for class in classes {
        let mut indices: Vec<usize> = labels
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        // Fisher-Yates, deterministic under the shared stream
        for i in (1..indices.len()).rev() {
            let j = rng.random_range(0..=i);
            indices.swap(i, j);
        }
        for &idx in indices.iter().take(per_class) {
            picks.push((idx, class));
        }
    }
    picks
}
