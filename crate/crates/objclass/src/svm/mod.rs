//! Soft-margin SVM on composite kernels: SMO-trained binaries, one-vs-rest
//! multiclass and Platt-calibrated posterior probabilities.

mod model_file;
mod platt;
mod smo;

pub use model_file::{load_model, save_model};
pub use platt::{platt_fit, platt_nll, platt_prob};
pub use smo::{dual_objective, smo_train, KernelCache, SmoParams, SmoResult, FULL_GRAM_MAX, LRU_ROWS};

use crate::error::{Error, Result};
use crate::kernel::{eval_composite, FeaturePair, KernelSpec};
use crate::raster::{ClassId, TrainingSet};

/// A trained binary classifier: support vectors with signed multipliers
/// alpha_i * y_i, bias, and the kernel it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmBinaryModel {
    pub support_vectors: Vec<FeaturePair>,
    pub alphas_signed: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub c: f64,
    /// False when training stopped on the sweep budget instead of KKT.
    pub converged: bool,
}

impl SvmBinaryModel {
    /// g(P) = sum_i alpha_i y_i K(P, P_i) + b, summed in stored order.
    pub fn decision(&self, p: &FeaturePair) -> Result<f64> {
        let mut g = 0.0;
        for (sv, &a) in self.support_vectors.iter().zip(&self.alphas_signed) {
            g += a * eval_composite(&self.kernel, p, sv)?;
        }
        Ok(g + self.bias)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlattCalibrator {
    pub a: f64,
    pub b: f64,
}

impl PlattCalibrator {
    pub fn prob(&self, g: f64) -> f64 {
        platt_prob(self.a, self.b, g)
    }
}

/// One-vs-rest multiclass model with per-class probability calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmMulticlassModel {
    pub classes: Vec<ClassId>,
    pub binaries: Vec<SvmBinaryModel>,
    pub calibrators: Vec<PlattCalibrator>,
}

impl SvmMulticlassModel {
    /// Calibrated posterior over classes, normalized to sum 1.
    pub fn posterior(&self, p: &FeaturePair) -> Result<Vec<f64>> {
        let mut probs = Vec::with_capacity(self.classes.len());
        for (binary, cal) in self.binaries.iter().zip(&self.calibrators) {
            probs.push(cal.prob(binary.decision(p)?));
        }
        let total: f64 = probs.iter().sum();
        if total > 0.0 {
            for q in &mut probs {
                *q /= total;
            }
        } else {
            let uniform = 1.0 / probs.len() as f64;
            probs.iter_mut().for_each(|q| *q = uniform);
        }
        Ok(probs)
    }

    /// Posterior argmax; ties resolve to the smallest class id.
    pub fn predict(&self, p: &FeaturePair) -> Result<ClassId> {
        let probs = self.posterior(p)?;
        let mut best = 0usize;
        for (i, &q) in probs.iter().enumerate() {
            if q > probs[best] {
                best = i;
            }
        }
        Ok(self.classes[best])
    }
}

/// Internal seed for the calibration folds; training is fully deterministic.
const CALIBRATION_SEED: u64 = 0x706c_6174;
const CALIBRATION_FOLDS: usize = 3;

/// Trains one one-vs-rest binary per class plus a Platt calibrator fitted
/// on 3-fold cross-validated decision values.
///
/// `spatial` supplies the spatial feature vector aligned with each training
/// sample. When a class is too small to stratify into three folds the
/// calibrator falls back to in-sample decision values.
pub fn train_multiclass(
    data: &TrainingSet,
    spatial: &[Vec<f64>],
    kernel: &KernelSpec,
    c: f64,
    tol: f64,
) -> Result<SvmMulticlassModel> {
    if spatial.len() != data.samples.len() {
        return Err(Error::Dimension(format!(
            "{} samples but {} spatial vectors",
            data.samples.len(),
            spatial.len()
        )));
    }
    let classes = data.classes();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let pairs: Vec<FeaturePair> = data
        .samples
        .iter()
        .zip(spatial)
        .map(|((features, _), spat)| FeaturePair::new(features.clone(), spat.clone()))
        .collect();
    let labels: Vec<ClassId> = data.samples.iter().map(|(_, l)| *l).collect();
    let params = SmoParams {
        c,
        tol,
        max_passes: SmoParams::default().max_passes,
    };

    let folds = cv_folds(&labels);

    let mut binaries = Vec::with_capacity(classes.len());
    let mut calibrators = Vec::with_capacity(classes.len());
    for &class in &classes {
        let ys: Vec<f64> = labels
            .iter()
            .map(|&l| if l == class { 1.0 } else { -1.0 })
            .collect();
        let full = smo_train(&pairs, &ys, kernel, &params)?;

        let (cal_values, cal_labels) = match &folds {
            Some(folds) => cross_validated_decisions(&pairs, &ys, kernel, &params, folds)?,
            None => {
                let mut values = Vec::with_capacity(pairs.len());
                for p in &pairs {
                    values.push(full.model.decision(p)?);
                }
                (values, ys.clone())
            }
        };
        let (a, b) = platt_fit(&cal_values, &cal_labels)?;
        binaries.push(full.model);
        calibrators.push(PlattCalibrator { a, b });
    }
    Ok(SvmMulticlassModel {
        classes,
        binaries,
        calibrators,
    })
}

fn cv_folds(labels: &[ClassId]) -> Option<Vec<Vec<usize>>> {
    crate::ga::kfold_split(labels.len(), labels, CALIBRATION_FOLDS, CALIBRATION_SEED).ok()
}

fn cross_validated_decisions(
    pairs: &[FeaturePair],
    ys: &[f64],
    kernel: &KernelSpec,
    params: &SmoParams,
    folds: &[Vec<usize>],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut values = Vec::with_capacity(pairs.len());
    let mut labels = Vec::with_capacity(pairs.len());
    for fold in folds {
        let holdout: Vec<bool> = {
            let mut mask = vec![false; pairs.len()];
            for &i in fold {
                mask[i] = true;
            }
            mask
        };
        let mut train_pairs = Vec::new();
        let mut train_ys = Vec::new();
        for i in 0..pairs.len() {
            if !holdout[i] {
                train_pairs.push(pairs[i].clone());
                train_ys.push(ys[i]);
            }
        }
        // a fold can strip one side entirely on skewed data; fall back to
        // the+1/-1 prior midpoint by skipping such folds
        if !train_ys.iter().any(|&y| y > 0.0) || !train_ys.iter().any(|&y| y < 0.0) {
            continue;
        }
        let result = smo_train(&train_pairs, &train_ys, kernel, params)?;
        for &i in fold {
            values.push(result.model.decision(&pairs[i])?);
            labels.push(ys[i]);
        }
    }
    if values.is_empty() || !labels.iter().any(|&y| y > 0.0) || !labels.iter().any(|&y| y < 0.0) {
        return Err(Error::SingleClass);
    }
    Ok((values, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelParams, KernelSpec};
    use approx::assert_relative_eq;

    fn linear_spec() -> KernelSpec {
        KernelSpec::spectral_only(KernelParams::linear())
    }

    fn pair1(x: f64) -> FeaturePair {
        FeaturePair::spectral_only(vec![x])
    }

    #[test]
    fn analytic_two_point_problem() {
        let samples = vec![pair1(-1.0), pair1(1.0)];
        let ys = vec![-1.0, 1.0];
        let params = SmoParams {
            c: 10.0,
            ..SmoParams::default()
        };
        let result = smo_train(&samples, &ys, &linear_spec(), &params).unwrap();
        assert_relative_eq!(result.alphas[0], 0.5, epsilon = 1e-6);
        assert_relative_eq!(result.alphas[1], 0.5, epsilon = 1e-6);
        assert!(result.model.bias.abs() <= 1e-6);
        // g(x) = x
        for x in [-2.0, -0.5, 0.0, 0.3, 1.7] {
            assert_relative_eq!(result.model.decision(&pair1(x)).unwrap(), x, epsilon = 1e-6);
        }
        // margin points hit +-1
        assert_relative_eq!(
            result.model.decision(&pair1(1.0)).unwrap(),
            1.0,
            epsilon = 1e-6
        );
        assert_relative_eq!(
            result.model.decision(&pair1(-1.0)).unwrap(),
            -1.0,
            epsilon = 1e-6
        );
    }

    #[test]
    fn duplicated_opposing_points_saturate_at_c() {
        let samples = vec![pair1(2.0), pair1(2.0)];
        let ys = vec![1.0, -1.0];
        let params = SmoParams {
            c: 0.75,
            ..SmoParams::default()
        };
        let result = smo_train(&samples, &ys, &linear_spec(), &params).unwrap();
        assert_eq!(result.alphas, vec![0.75, 0.75]);
    }

    #[test]
    fn equality_constraint_holds() {
        // small deterministic pseudo-random set
        let mut samples = Vec::new();
        let mut ys = Vec::new();
        for i in 0..40 {
            let x = ((i * 37 % 17) as f64) / 3.0 - 2.5;
            let y = ((i * 13 % 7) as f64) / 2.0;
            samples.push(FeaturePair::spectral_only(vec![x, y]));
            ys.push(if x + y > 0.2 { 1.0 } else { -1.0 });
        }
        let spec = KernelSpec::spectral_only(KernelParams::rbf(0.5));
        let result = smo_train(&samples, &ys, &spec, &SmoParams::default()).unwrap();
        let balance: f64 = result.alphas.iter().zip(&ys).map(|(a, y)| a * y).sum();
        assert!(balance.abs() <= 1e-6, "balance {balance}");
        for &a in &result.alphas {
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn single_class_input_rejected() {
        let samples = vec![pair1(0.0), pair1(1.0)];
        assert!(matches!(
            smo_train(&samples, &[1.0, 1.0], &linear_spec(), &SmoParams::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn non_positive_c_rejected() {
        let samples = vec![pair1(0.0), pair1(1.0)];
        assert!(smo_train(
            &samples,
            &[-1.0, 1.0],
            &linear_spec(),
            &SmoParams {
                c: 0.0,
                ..SmoParams::default()
            }
        )
        .is_err());
    }

    #[test]
    fn empty_support_set_returns_bias() {
        let model = SvmBinaryModel {
            support_vectors: vec![],
            alphas_signed: vec![],
            bias: 0.7,
            kernel: linear_spec(),
            c: 1.0,
            converged: true,
        };
        assert_eq!(model.decision(&pair1(123.0)).unwrap(), 0.7);
    }

    #[test]
    fn lru_cache_matches_full_gram() {
        let samples: Vec<FeaturePair> = (0..10)
            .map(|i| FeaturePair::spectral_only(vec![i as f64 * 0.3, (i as f64).sin()]))
            .collect();
        let spec = KernelSpec::spectral_only(KernelParams::rbf(0.7));
        let mut full = KernelCache::new(&spec, &samples).unwrap();
        let mut lru = KernelCache::with_lru_capacity(&spec, &samples, 3).unwrap();
        // touch rows in an order that forces evictions and re-computation
        for &i in &[0usize, 1, 2, 3, 0, 9, 1, 4, 0] {
            assert_eq!(full.row(i).unwrap().to_vec(), lru.row(i).unwrap().to_vec());
        }
    }

    #[test]
    fn platt_separated_values_give_negative_slope() {
        let values = vec![-2.0, -1.0, 1.0, 2.0];
        let labels = vec![-1.0, -1.0, 1.0, 1.0];
        let (a, b) = platt_fit(&values, &labels).unwrap();
        assert!(a < 0.0, "a = {a}");
        let fitted = platt_nll(a, b, &values, &labels);
        let reference = platt_nll(-1.0, 0.0, &values, &labels);
        assert!(fitted < reference, "{fitted} !< {reference}");
    }

    #[test]
    fn platt_independent_labels_recover_prior() {
        // labels carry no information about the decision value
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..15 {
            for (v, l) in [(-1.0, 1.0), (-1.0, -1.0), (1.0, 1.0), (1.0, -1.0)] {
                values.push(v);
                labels.push(l);
            }
        }
        let (a, b) = platt_fit(&values, &labels).unwrap();
        let p_mid = platt_prob(a, b, 0.0);
        assert!((p_mid - 0.5).abs() < 0.02, "p(0) = {p_mid}");
    }

    #[test]
    fn platt_antisymmetric_fixture_centers_b() {
        let values = vec![-2.0, -1.0, 1.0, 2.0];
        let labels = vec![-1.0, -1.0, 1.0, 1.0];
        let (_, b) = platt_fit(&values, &labels).unwrap();
        assert!(b.abs() <= 1e-6, "b = {b}");
    }

    fn symmetric_two_class() -> (TrainingSet, Vec<Vec<f64>>) {
        let mut samples = Vec::new();
        for i in 0..6 {
            let jitter = (i as f64 - 2.5) * 0.1;
            samples.push((vec![-2.0, jitter], 1));
            samples.push((vec![2.0, jitter], 2));
        }
        let spatial: Vec<Vec<f64>> = samples.iter().map(|(f, _)| f.clone()).collect();
        (TrainingSet::new(2, samples).unwrap(), spatial)
    }

    #[test]
    fn two_class_decisions_mirror() {
        let (data, spatial) = symmetric_two_class();
        let model = train_multiclass(&data, &spatial, &linear_spec(), 10.0, 1e-3).unwrap();
        assert_eq!(model.classes, vec![1, 2]);
        for x in [-3.0, -0.7, 0.0, 1.1, 2.4] {
            let p = FeaturePair::spectral_only(vec![x, 0.0]);
            let g1 = model.binaries[0].decision(&p).unwrap();
            let g2 = model.binaries[1].decision(&p).unwrap();
            assert_relative_eq!(g1, -g2, epsilon = 1e-6);
        }
    }

    #[test]
    fn separated_clusters_train_to_perfect_accuracy() {
        let mut samples = Vec::new();
        let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for i in 0..20 {
                let dx = ((i * 7 % 5) as f64 - 2.0) * 0.2;
                let dy = ((i * 11 % 5) as f64 - 2.0) * 0.2;
                samples.push((vec![cx + dx, cy + dy], c as u16 + 1));
            }
        }
        let spatial: Vec<Vec<f64>> = samples.iter().map(|(f, _)| f.clone()).collect();
        let data = TrainingSet::new(2, samples).unwrap();
        let spec = KernelSpec::spectral_only(KernelParams::rbf(0.5));
        let model = train_multiclass(&data, &spatial, &spec, 10.0, 1e-3).unwrap();
        let correct = data
            .samples
            .iter()
            .filter(|(f, l)| {
                model
                    .predict(&FeaturePair::spectral_only(f.clone()))
                    .unwrap()
                    == *l
            })
            .count();
        assert_eq!(correct, data.samples.len());

        // deep inside a cluster the posterior argmax is that cluster
        let deep = FeaturePair::spectral_only(vec![10.0, 0.0]);
        assert_eq!(model.predict(&deep).unwrap(), 2);
        let probs = model.posterior(&deep).unwrap();
        assert!(probs[1] > probs[0] && probs[1] > probs[2]);
    }

    #[test]
    fn single_class_multiclass_rejected() {
        let data = TrainingSet::new(1, vec![(vec![0.0], 1), (vec![1.0], 1)]).unwrap();
        let spatial = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            train_multiclass(&data, &spatial, &linear_spec(), 1.0, 1e-3),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn posterior_sums_to_one_and_is_symmetric_at_midpoint() {
        let (data, spatial) = symmetric_two_class();
        let model = train_multiclass(&data, &spatial, &linear_spec(), 10.0, 1e-3).unwrap();
        for x in [-5.0, -1.0, 0.0, 0.5, 3.3] {
            let p = FeaturePair::spectral_only(vec![x, 0.0]);
            let probs = model.posterior(&p).unwrap();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(probs.iter().all(|&q| (0.0..=1.0).contains(&q)));
        }
        let mid = model
            .posterior(&FeaturePair::spectral_only(vec![0.0, 0.0]))
            .unwrap();
        assert!((mid[0] - 0.5).abs() < 1e-3, "midpoint posterior {mid:?}");
    }

    #[test]
    fn posterior_permutes_with_class_relabeling() {
        let (data, spatial) = symmetric_two_class();
        let model = train_multiclass(&data, &spatial, &linear_spec(), 10.0, 1e-3).unwrap();

        // swap class ids 1 <-> 2
        let swapped = TrainingSet::new(
            2,
            data.samples
                .iter()
                .map(|(f, l)| (f.clone(), if *l == 1 { 2 } else { 1 }))
                .collect(),
        )
        .unwrap();
        let model2 = train_multiclass(&swapped, &spatial, &linear_spec(), 10.0, 1e-3).unwrap();
        for x in [-1.5, 0.25, 2.0] {
            let p = FeaturePair::spectral_only(vec![x, 0.0]);
            let probs = model.posterior(&p).unwrap();
            let probs2 = model2.posterior(&p).unwrap();
            assert_relative_eq!(probs[0], probs2[1], epsilon = 1e-9);
            assert_relative_eq!(probs[1], probs2[0], epsilon = 1e-9);
        }
    }
}
