//! Support vector random field over the pixel lattice.
//!
//! The unary (observation-matching) potential is the log of the calibrated
//! SVM posterior; the pairwise (local-consistency) potential is a
//! contrast-sensitive Potts term gated by the raw spectral difference of
//! the neighboring pixels. Inference is ICM: greedy single-site updates in
//! row-major order, which makes the objective trace non-decreasing and the
//! result deterministic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::FeaturePair;
use crate::raster::{ClassId, LabelMap, Raster};
use crate::svm::SvmMulticlassModel;

/// Log-probability floor applied to the unary field.
pub const LOG_PROB_FLOOR_P: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighborhood {
    Four,
    Eight,
}

#[derive(Debug, Clone)]
pub struct SvrfModel {
    pub svm: SvmMulticlassModel,
    /// Pairwise strength; zero reduces the field to the pixelwise SVM.
    pub beta: f64,
    /// Contrast bandwidth of the pairwise gate.
    pub sigma_s: f64,
    pub neighborhood: Neighborhood,
    pub max_sweeps: usize,
}

impl SvrfModel {
    pub fn new(
        svm: SvmMulticlassModel,
        beta: f64,
        sigma_s: f64,
        neighborhood: Neighborhood,
        max_sweeps: usize,
    ) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "beta must be >= 0, got {beta}"
            )));
        }
        if !(sigma_s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma_s must be > 0, got {sigma_s}"
            )));
        }
        if max_sweeps < 1 {
            return Err(Error::InvalidArgument("max_sweeps must be >= 1".into()));
        }
        Ok(SvrfModel {
            svm,
            beta,
            sigma_s,
            neighborhood,
            max_sweeps,
        })
    }
}

/// Per-site log posterior vectors over the model's class list.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryField {
    pub width: usize,
    pub height: usize,
    pub classes: Vec<ClassId>,
    /// Site-major: log_probs[site * K + k].
    pub log_probs: Vec<f64>,
}

impl UnaryField {
    pub fn k(&self) -> usize {
        self.classes.len()
    }

    #[inline]
    pub fn site(&self, idx: usize) -> &[f64] {
        let k = self.classes.len();
        &self.log_probs[idx * k..(idx + 1) * k]
    }

    /// Index of the argmax class at a site; ties go to the smallest id.
    pub fn argmax(&self, idx: usize) -> usize {
        let row = self.site(idx);
        let mut best = 0usize;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        best
    }

    /// Pixelwise argmax labeling; identical to the ICM initialization.
    pub fn argmax_labels(&self) -> LabelMap {
        let labels = (0..self.width * self.height)
            .map(|i| self.classes[self.argmax(i)])
            .collect();
        LabelMap::new(self.width, self.height, labels).expect("unary field is rectangular")
    }

    /// Posterior probability of `label` at a site (0 for unknown labels).
    pub fn prob_of(&self, idx: usize, label: ClassId) -> f64 {
        match self.classes.iter().position(|&c| c == label) {
            Some(k) => self.site(idx)[k].exp(),
            None => 0.0,
        }
    }
}

/// Computes the per-site log posterior field for a raster and its aligned
/// spatial feature map.
pub fn unary_field(
    model: &SvmMulticlassModel,
    r: &Raster,
    spatial: &Raster,
) -> Result<UnaryField> {
    if spatial.width != r.width || spatial.height != r.height {
        return Err(Error::Shape(format!(
            "spatial map {}x{} does not match raster {}x{}",
            spatial.width, spatial.height, r.width, r.height
        )));
    }
    let k = model.classes.len();
    let n = r.pixel_count();
    let floor = LOG_PROB_FLOOR_P.ln();
    let mut log_probs = vec![0.0f64; n * k];
    let mut pair = FeaturePair::new(vec![0.0; r.bands], vec![0.0; spatial.bands]);
    for y in 0..r.height {
        for x in 0..r.width {
            r.fill_spectrum(x, y, &mut pair.spectral);
            spatial.fill_spectrum(x, y, &mut pair.spatial);
            let probs = model.posterior(&pair)?;
            let site = y * r.width + x;
            for (j, &p) in probs.iter().enumerate() {
                log_probs[site * k + j] = p.ln().max(floor);
            }
        }
    }
    Ok(UnaryField {
        width: r.width,
        height: r.height,
        classes: model.classes.clone(),
        log_probs,
    })
}

/// Contrast-sensitive Potts potential between two sites.
pub fn pairwise(model: &SvrfModel, xi: &[f64], xj: &[f64], yi: ClassId, yj: ClassId) -> Result<f64> {
    if xi.len() != xj.len() {
        return Err(Error::Dimension(format!(
            "contrast vectors of length {} and {}",
            xi.len(),
            xj.len()
        )));
    }
    if yi != yj {
        return Ok(0.0);
    }
    let d2: f64 = xi
        .iter()
        .zip(xj)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok(model.beta * (-d2 / (2.0 * model.sigma_s * model.sigma_s)).exp())
}

/// Median distance between neighboring pixel spectra, estimated on a
/// deterministic sample of up to 1000 edges. Falls back to 1.0 on a
/// constant image.
pub fn estimate_sigma_s(r: &Raster, sample: usize) -> f64 {
    let mut distances = Vec::new();
    let horizontal = (r.width - 1) * r.height;
    let vertical = r.width * (r.height - 1);
    let total = horizontal + vertical;
    if total == 0 {
        return 1.0;
    }
    let stride = (total / sample.max(1)).max(1);
    let mut a = vec![0.0f64; r.bands];
    let mut b = vec![0.0f64; r.bands];
    let mut edge = 0usize;
    let push = |r: &Raster, x0: usize, y0: usize, x1: usize, y1: usize,
                    a: &mut Vec<f64>, b: &mut Vec<f64>, distances: &mut Vec<f64>| {
        r.fill_spectrum(x0, y0, a);
        r.fill_spectrum(x1, y1, b);
        let d2: f64 = a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum();
        distances.push(d2.sqrt());
    };
    for y in 0..r.height {
        for x in 0..r.width.saturating_sub(1) {
            if edge % stride == 0 {
                push(r, x, y, x + 1, y, &mut a, &mut b, &mut distances);
            }
            edge += 1;
        }
    }
    for y in 0..r.height.saturating_sub(1) {
        for x in 0..r.width {
            if edge % stride == 0 {
                push(r, x, y, x, y + 1, &mut a, &mut b, &mut distances);
            }
            edge += 1;
        }
    }
    distances.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let median = distances[distances.len() / 2];
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Randomized sigma sample matching the documented 1000-pair default.
pub fn estimate_sigma_s_sampled(r: &Raster, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut distances = Vec::with_capacity(pairs);
    let mut a = vec![0.0f64; r.bands];
    let mut b = vec![0.0f64; r.bands];
    for _ in 0..pairs {
        let x = rng.random_range(0..r.width);
        let y = rng.random_range(0..r.height);
        let (nx, ny) = if rng.random::<bool>() && x + 1 < r.width {
            (x + 1, y)
        } else if y + 1 < r.height {
            (x, y + 1)
        } else if x + 1 < r.width {
            (x + 1, y)
        } else {
            (x, y)
        };
        r.fill_spectrum(x, y, &mut a);
        r.fill_spectrum(nx, ny, &mut b);
        let d2: f64 = a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum();
        distances.push(d2.sqrt());
    }
    distances.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let median = distances[distances.len() / 2];
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

struct EdgeWeights {
    width: usize,
    height: usize,
    /// exp(-d^2 / 2 sigma^2) toward the east neighbor, row-major.
    east: Vec<f64>,
    south: Vec<f64>,
    /// Only populated for the 8-neighborhood.
    south_east: Vec<f64>,
    south_west: Vec<f64>,
    eight: bool,
}

impl EdgeWeights {
    fn build(r: &Raster, sigma_s: f64, neighborhood: Neighborhood) -> Self {
        let (w, h) = (r.width, r.height);
        let inv = 1.0 / (2.0 * sigma_s * sigma_s);
        let mut a = vec![0.0f64; r.bands];
        let mut b = vec![0.0f64; r.bands];
        let weight = |x0: usize, y0: usize, x1: usize, y1: usize,
                          a: &mut Vec<f64>, b: &mut Vec<f64>| {
            r.fill_spectrum(x0, y0, a);
            r.fill_spectrum(x1, y1, b);
            let d2: f64 = a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum();
            (-d2 * inv).exp()
        };
        let eight = neighborhood == Neighborhood::Eight;
        let mut east = vec![0.0; w * h];
        let mut south = vec![0.0; w * h];
        let mut south_east = vec![0.0; if eight { w * h } else { 0 }];
        let mut south_west = vec![0.0; if eight { w * h } else { 0 }];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x + 1 < w {
                    east[i] = weight(x, y, x + 1, y, &mut a, &mut b);
                }
                if y + 1 < h {
                    south[i] = weight(x, y, x, y + 1, &mut a, &mut b);
                }
                if eight && x + 1 < w && y + 1 < h {
                    south_east[i] = weight(x, y, x + 1, y + 1, &mut a, &mut b);
                }
                if eight && x > 0 && y + 1 < h {
                    south_west[i] = weight(x, y, x - 1, y + 1, &mut a, &mut b);
                }
            }
        }
        EdgeWeights {
            width: w,
            height: h,
            east,
            south,
            south_east,
            south_west,
            eight,
        }
    }

    /// Visits (neighbor site, edge weight) for every neighbor of (x, y).
    fn for_neighbors(&self, x: usize, y: usize, mut visit: impl FnMut(usize, f64)) {
        let (w, h) = (self.width, self.height);
        let i = y * w + x;
        if x + 1 < w {
            visit(i + 1, self.east[i]);
        }
        if x > 0 {
            visit(i - 1, self.east[i - 1]);
        }
        if y + 1 < h {
            visit(i + w, self.south[i]);
        }
        if y > 0 {
            visit(i - w, self.south[i - w]);
        }
        if self.eight {
            if x + 1 < w && y + 1 < h {
                visit(i + w + 1, self.south_east[i]);
            }
            if x > 0 && y > 0 {
                visit(i - w - 1, self.south_east[i - w - 1]);
            }
            if x > 0 && y + 1 < h {
                visit(i + w - 1, self.south_west[i]);
            }
            if x + 1 < w && y > 0 {
                visit(i - w + 1, self.south_west[i - w + 1]);
            }
        }
    }

    /// Sum over unordered neighbor pairs of beta * w * [same label].
    fn pairwise_total(&self, labels: &[usize], beta: f64) -> f64 {
        let (w, h) = (self.width, self.height);
        let mut total = 0.0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x + 1 < w && labels[i] == labels[i + 1] {
                    total += self.east[i];
                }
                if y + 1 < h && labels[i] == labels[i + w] {
                    total += self.south[i];
                }
                if self.eight {
                    if x + 1 < w && y + 1 < h && labels[i] == labels[i + w + 1] {
                        total += self.south_east[i];
                    }
                    if x > 0 && y + 1 < h && labels[i] == labels[i + w - 1] {
                        total += self.south_west[i];
                    }
                }
            }
        }
        beta * total
    }
}

/// ICM inference: starts from the unary argmax and greedily updates sites
/// in row-major order until a sweep changes nothing or the sweep budget is
/// exhausted. Returns the labeling and the objective value recorded at
/// initialization and after each sweep.
pub fn icm_infer(
    model: &SvrfModel,
    unary: &UnaryField,
    r: &Raster,
) -> Result<(LabelMap, Vec<f64>)> {
    if unary.width != r.width || unary.height != r.height {
        return Err(Error::Shape(format!(
            "unary field {}x{} does not match raster {}x{}",
            unary.width, unary.height, r.width, r.height
        )));
    }
    if unary.classes != model.svm.classes {
        return Err(Error::Shape(
            "unary field classes do not match the model".into(),
        ));
    }
    let (w, h) = (r.width, r.height);
    let k = unary.k();
    let weights = EdgeWeights::build(r, model.sigma_s, model.neighborhood);

    let mut labels: Vec<usize> = (0..w * h).map(|i| unary.argmax(i)).collect();

    let objective = |labels: &[usize]| -> f64 {
        let unary_total: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &c)| unary.site(i)[c])
            .sum();
        unary_total + weights.pairwise_total(labels, model.beta)
    };

    let mut trace = vec![objective(&labels)];
    let mut scores = vec![0.0f64; k];
    for _sweep in 0..model.max_sweeps {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                scores.copy_from_slice(unary.site(i));
                weights.for_neighbors(x, y, |j, weight| {
                    scores[labels[j]] += model.beta * weight;
                });
                let mut best = 0usize;
                for (c, &s) in scores.iter().enumerate() {
                    if s > scores[best] {
                        best = c;
                    }
                }
                if best != labels[i] {
                    labels[i] = best;
                    changed = true;
                }
            }
        }
        trace.push(objective(&labels));
        if !changed {
            break;
        }
    }

    let map = LabelMap::new(
        w,
        h,
        labels.iter().map(|&c| unary.classes[c]).collect(),
    )?;
    Ok((map, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelParams, KernelSpec};
    use crate::raster::TrainingSet;
    use crate::svm::train_multiclass;
    use approx::assert_relative_eq;

    fn two_class_model() -> SvmMulticlassModel {
        let mut samples = Vec::new();
        for i in 0..6 {
            let j = (i as f64 - 2.5) * 0.05;
            samples.push((vec![0.0 + j], 1));
            samples.push((vec![4.0 + j], 2));
        }
        let spatial: Vec<Vec<f64>> = samples.iter().map(|(f, _)| f.clone()).collect();
        let data = TrainingSet::new(1, samples).unwrap();
        let spec = KernelSpec::spectral_only(KernelParams::rbf(0.5));
        train_multiclass(&data, &spatial, &spec, 10.0, 1e-3).unwrap()
    }

    fn flat_raster(width: usize, height: usize, value: f32) -> Raster {
        Raster::new(width, height, 1, 1.0, vec![value; width * height]).unwrap()
    }

    /// Hand-built unary field from explicit probabilities.
    fn field_from_probs(width: usize, height: usize, probs: &[[f64; 2]]) -> UnaryField {
        let log_probs = probs
            .iter()
            .flat_map(|p| p.iter().map(|q| q.ln().max(LOG_PROB_FLOOR_P.ln())))
            .collect();
        UnaryField {
            width,
            height,
            classes: vec![1, 2],
            log_probs,
        }
    }

    #[test]
    fn unary_field_constant_raster_is_uniform() {
        let model = two_class_model();
        let r = flat_raster(3, 2, 1.0);
        let field = unary_field(&model, &r, &r).unwrap();
        let first = field.site(0).to_vec();
        for i in 1..6 {
            assert_eq!(field.site(i), first.as_slice());
        }
    }

    #[test]
    fn unary_field_rows_normalize() {
        let model = two_class_model();
        let spec = crate::synth::SceneSpec::graded(8, 6, 1, 2, 4.0, 0.5, 1, 0.0, 3);
        let scene = crate::synth::generate_scene(&spec).unwrap();
        let field = unary_field(&model, &scene.raster, &scene.raster).unwrap();
        for i in 0..48 {
            let total: f64 = field.site(i).iter().map(|&l| l.exp()).sum();
            assert!((total - 1.0).abs() <= 1e-6, "site {i} sums to {total}");
        }
    }

    #[test]
    fn unary_field_matches_independent_posterior_calls() {
        let model = two_class_model();
        let values = [0.5f32, 3.9, 1.1, 2.6];
        let r = Raster::new(2, 2, 1, 1.0, values.to_vec()).unwrap();
        let field = unary_field(&model, &r, &r).unwrap();
        for (i, &v) in values.iter().enumerate() {
            let p = FeaturePair::spectral_only(vec![v as f64]);
            let probs = model.posterior(&p).unwrap();
            for (j, &q) in probs.iter().enumerate() {
                assert_relative_eq!(
                    field.site(i)[j],
                    q.ln().max(LOG_PROB_FLOOR_P.ln()),
                    epsilon = 1e-12
                );
            }
        }
    }

    fn svrf_with(beta: f64, sigma: f64) -> SvrfModel {
        SvrfModel::new(two_class_model(), beta, sigma, Neighborhood::Four, 50).unwrap()
    }

    #[test]
    fn pairwise_indicator_and_contrast() {
        let m = svrf_with(2.0, 1.0);
        assert_eq!(pairwise(&m, &[1.0], &[1.0], 1, 2).unwrap(), 0.0);
        assert_eq!(pairwise(&m, &[3.0], &[3.0], 1, 1).unwrap(), 2.0);
        // squared distance exactly 2 sigma^2 gives beta / e
        let v = pairwise(&m, &[0.0, 0.0], &[1.0, 1.0], 2, 2).unwrap();
        assert_relative_eq!(v, 2.0 / std::f64::consts::E, max_relative = 1e-12);
    }

    #[test]
    fn beta_zero_reduces_to_unary_argmax() {
        let model = svrf_with(0.0, 1.0);
        let spec = crate::synth::SceneSpec::graded(12, 10, 1, 2, 4.0, 1.2, 1, 0.1, 8);
        let scene = crate::synth::generate_scene(&spec).unwrap();
        let field = unary_field(&model.svm, &scene.raster, &scene.raster).unwrap();
        let (labels, trace) = icm_infer(&model, &field, &scene.raster).unwrap();
        assert_eq!(labels, field.argmax_labels());
        assert_eq!(trace.len(), 2); // init + the single no-change sweep
    }

    #[test]
    fn center_pixel_flips_on_designed_fixture() {
        // 3x3 uniform image so every contrast weight is exactly 1; unary
        // prefers class 1 everywhere except a 0.4 log-odds pull toward
        // class 2 at the center.
        let r = flat_raster(3, 3, 0.0);
        let mut probs = vec![[0.9, 0.1]; 9];
        let p2 = 1.0 / (1.0 + (-0.4f64).exp());
        probs[4] = [1.0 - p2, p2];
        let field = field_from_probs(3, 3, &probs);
        let model = svrf_with(1.0, 1.0);
        let (labels, trace) = icm_infer(&model, &field, &r).unwrap();
        assert!(labels.labels.iter().all(|&l| l == 1), "{:?}", labels.labels);

        // enumeration over all 2^9 labelings agrees
        let brute = brute_force_best(&field, &r, &model);
        assert_relative_eq!(*trace.last().unwrap(), brute, epsilon = 1e-9);
    }

    fn brute_force_best(field: &UnaryField, r: &Raster, model: &SvrfModel) -> f64 {
        let n = field.width * field.height;
        let weights = EdgeWeights::build(r, model.sigma_s, model.neighborhood);
        let mut best = f64::NEG_INFINITY;
        for mask in 0..(1u32 << n) {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let unary_total: f64 = labels
                .iter()
                .enumerate()
                .map(|(i, &c)| field.site(i)[c])
                .sum();
            let value = unary_total + weights.pairwise_total(&labels, model.beta);
            if value > best {
                best = value;
            }
        }
        best
    }

    #[test]
    fn objective_trace_non_decreasing_on_random_fields() {
        use rand::{Rng, SeedableRng};
        for seed in 0..20u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..64).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let r = Raster::new(8, 8, 1, 1.0, data).unwrap();
            let probs: Vec<[f64; 2]> = (0..64)
                .map(|_| {
                    let p: f64 = rng.random_range(0.05..0.95);
                    [p, 1.0 - p]
                })
                .collect();
            let field = field_from_probs(8, 8, &probs);
            let model = svrf_with(1.5, 1.0);
            let (labels, trace) = icm_infer(&model, &field, &r).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-12, "trace decreased: {trace:?}");
            }
            assert!(trace.len() <= model.max_sweeps + 1);
            // a second run from the result is a fixed point
            let (again, _) = icm_infer(&model, &field, &r).unwrap();
            assert_eq!(again, labels);
        }
    }

    #[test]
    fn icm_matches_enumeration_on_small_random_fixtures() {
        use rand::{Rng, SeedableRng};
        for seed in 0..10u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let data: Vec<f32> = (0..9).map(|_| rng.random_range(-0.2f32..0.2)).collect();
            let r = Raster::new(3, 3, 1, 1.0, data).unwrap();
            let probs: Vec<[f64; 2]> = (0..9)
                .map(|_| {
                    let p: f64 = rng.random_range(0.2..0.8);
                    [p, 1.0 - p]
                })
                .collect();
            let field = field_from_probs(3, 3, &probs);
            let model = svrf_with(0.8, 1.0);
            let (_, trace) = icm_infer(&model, &field, &r).unwrap();
            let best = brute_force_best(&field, &r, &model);
            // ICM is greedy: it must reach at least its initialization and
            // never exceed the global optimum
            assert!(*trace.last().unwrap() <= best + 1e-9);
            assert!(trace.last().unwrap() >= trace.first().unwrap());
        }
    }

    #[test]
    fn sigma_estimates_positive() {
        let spec = crate::synth::SceneSpec::graded(16, 16, 2, 2, 3.0, 0.7, 2, 0.0, 2);
        let scene = crate::synth::generate_scene(&spec).unwrap();
        assert!(estimate_sigma_s(&scene.raster, 1000) > 0.0);
        assert!(estimate_sigma_s_sampled(&scene.raster, 1000, 1) > 0.0);
        assert_eq!(estimate_sigma_s(&flat_raster(4, 4, 2.0), 1000), 1.0);
    }
}
