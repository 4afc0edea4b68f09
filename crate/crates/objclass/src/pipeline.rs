//! End-to-end pipeline: load, segment, extract spatial features, train or
//! load a model, classify, optionally relax, evaluate and write artifacts.
//! Also the seven-method benchmark harness.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::baselines::{
    classify_feature_space, classify_mahalanobis, classify_max_likelihood,
    classify_min_distance, classify_parallelepiped, fit_stats, GaussianClassStats,
};
use crate::ca::{ca_run, flat_unary};
use crate::config::{Method, PipelineConfig, ALL_METHODS};
use crate::error::{Error, Result};
use crate::eval::{confusion, report, Report};
use crate::ga::{evolve, GaOutcome};
use crate::raster::{
    default_palette, export_ppm, load_labels, load_raster, load_samples_csv, save_labels,
    save_raster, save_samples_csv, LabelMap, Raster, TrainingSet,
};
use crate::segment::{
    default_threshold, object_majority_relabel, segment, spatial_feature_map, Segmentation,
};
use crate::svm::{load_model, save_model, train_multiclass, SvmMulticlassModel};
use crate::svrf::{
    estimate_sigma_s_sampled, icm_infer, unary_field, SvrfModel, UnaryField,
};
use crate::synth::{generate_scene, sample_training_pixels, SceneSpec};

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })?;
    eprintln!("[stage] {name}: {:.3}s", start.elapsed().as_secs_f64());
    Ok(out)
}

fn require_path<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    path.as_ref()
        .ok_or_else(|| Error::Config(format!("missing required path: {what}")))
}

fn check_exists(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ))
    }
}

/// Training samples plus the aligned spatial feature vectors.
pub struct TrainingData {
    pub set: TrainingSet,
    pub spatial: Vec<Vec<f64>>,
}

/// Draws per-class training pixels from the reference labels and extracts
/// spectral features from the raster and spatial features from the object
/// feature map.
pub fn training_from_labels(
    raster: &Raster,
    labels: &LabelMap,
    feature_map: &Raster,
    per_class: usize,
    seed: u64,
) -> Result<TrainingData> {
    if labels.width != raster.width || labels.height != raster.height {
        return Err(Error::Shape(format!(
            "labels {}x{} do not match raster {}x{}",
            labels.width, labels.height, raster.width, raster.height
        )));
    }
    let picks = sample_training_pixels(labels, per_class, seed);
    if picks.is_empty() {
        return Err(Error::InvalidArgument(
            "reference labels contain no classified pixels".into(),
        ));
    }
    let mut samples = Vec::with_capacity(picks.len());
    let mut spatial = Vec::with_capacity(picks.len());
    for (idx, class) in picks {
        let (x, y) = (idx % raster.width, idx / raster.width);
        samples.push((raster.spectrum(x, y), class));
        spatial.push(feature_map.spectrum(x, y));
    }
    Ok(TrainingData {
        set: TrainingSet::new(raster.bands, samples)?,
        spatial,
    })
}

/// Loads a samples CSV; with no raster context the spatial feature of each
/// sample falls back to its spectral vector.
pub fn training_from_csv(path: &Path) -> Result<TrainingData> {
    let set = load_samples_csv(path)?;
    let spatial = set.samples.iter().map(|(f, _)| f.clone()).collect();
    Ok(TrainingData { set, spatial })
}

pub struct PipelineOutcome {
    pub labels: LabelMap,
    pub report: Option<Report>,
    pub objective_trace: Option<Vec<f64>>,
    pub written: Vec<PathBuf>,
}

struct Prepared {
    raster: Raster,
    reference: Option<LabelMap>,
    segmentation: Segmentation,
    feature_map: Raster,
    training: Option<TrainingData>,
}

fn prepare(cfg: &PipelineConfig, needs_training: bool) -> Result<Prepared> {
    let raster_path = require_path(&cfg.paths.raster, "paths.raster")?;
    check_exists(raster_path)?;
    let raster = stage("load_raster", || load_raster(raster_path))?;

    let reference = match &cfg.paths.labels {
        Some(path) => {
            check_exists(path)?;
            Some(stage("load_labels", || Ok(load_labels(path)?.0))?)
        }
        None => None,
    };

    let threshold = cfg.seg_threshold.unwrap_or_else(|| default_threshold(&raster));
    let segmentation = stage("segment", || segment(&raster, threshold, cfg.seg_min_size))?;
    let feature_map = stage("spatial_features", || {
        spatial_feature_map(&raster, &segmentation)
    })?;

    let training = if needs_training {
        Some(stage("training_data", || {
            if let Some(csv) = &cfg.paths.samples {
                check_exists(csv)?;
                training_from_csv(csv)
            } else if let Some(reference) = &reference {
                training_from_labels(
                    &raster,
                    reference,
                    &feature_map,
                    cfg.samples_per_class,
                    cfg.seed,
                )
            } else {
                Err(Error::Config(
                    "training requires paths.samples or paths.labels".into(),
                ))
            }
        })?)
    } else {
        None
    };

    Ok(Prepared {
        raster,
        reference,
        segmentation,
        feature_map,
        training,
    })
}

fn classify_pixelwise(raster: &Raster, f: impl Fn(&[f64]) -> u16) -> LabelMap {
    let mut labels = vec![0u16; raster.pixel_count()];
    let mut spectrum = vec![0.0f64; raster.bands];
    for y in 0..raster.height {
        for x in 0..raster.width {
            raster.fill_spectrum(x, y, &mut spectrum);
            labels[y * raster.width + x] = f(&spectrum);
        }
    }
    LabelMap::new(raster.width, raster.height, labels).expect("length matches by construction")
}

fn baseline_stats(training: &TrainingData) -> Result<GaussianClassStats> {
    fit_stats(&training.set)
}

fn resolve_sigma_s(cfg: &PipelineConfig, raster: &Raster) -> f64 {
    cfg.svrf
        .sigma_s
        .unwrap_or_else(|| estimate_sigma_s_sampled(raster, 1000, cfg.seed))
}

struct SvmArtifacts {
    model: SvmMulticlassModel,
    unary: UnaryField,
    trained_here: bool,
}

fn svm_artifacts(cfg: &PipelineConfig, prep: &Prepared) -> Result<SvmArtifacts> {
    let (model, trained_here) = match &cfg.paths.model {
        Some(path) if path.exists() => (stage("load_model", || load_model(path))?, false),
        _ => {
            let training = prep.training.as_ref().ok_or_else(|| {
                Error::Config("svm methods require a model file or training data".into())
            })?;
            let model = stage("train_svm", || {
                train_multiclass(
                    &training.set,
                    &training.spatial,
                    &cfg.kernel,
                    cfg.c,
                    cfg.tol,
                )
            })?;
            (model, true)
        }
    };
    let unary = stage("posteriors", || {
        unary_field(&model, &prep.raster, &prep.feature_map)
    })?;
    Ok(SvmArtifacts {
        model,
        unary,
        trained_here,
    })
}

fn classify_method(
    cfg: &PipelineConfig,
    method: Method,
    prep: &Prepared,
    svm: Option<&SvmArtifacts>,
) -> Result<(LabelMap, Option<Vec<f64>>)> {
    match method {
        Method::MinDistance | Method::Mahalanobis | Method::MaxLikelihood
        | Method::Parallelepiped => {
            let training = prep
                .training
                .as_ref()
                .ok_or_else(|| Error::Config("baseline methods require training data".into()))?;
            let stats = baseline_stats(training)?;
            let labels = match method {
                Method::MinDistance => {
                    classify_pixelwise(&prep.raster, |p| classify_min_distance(&stats, p))
                }
                Method::Mahalanobis => {
                    classify_pixelwise(&prep.raster, |p| classify_mahalanobis(&stats, p))
                }
                Method::MaxLikelihood => {
                    classify_pixelwise(&prep.raster, |p| classify_max_likelihood(&stats, p))
                }
                _ => classify_pixelwise(&prep.raster, |p| {
                    classify_parallelepiped(&stats, p, cfg.box_k)
                }),
            };
            Ok((labels, None))
        }
        Method::FeatureSpace => {
            let training = prep
                .training
                .as_ref()
                .ok_or_else(|| Error::Config("feature-space method requires training data".into()))?;
            let labels = classify_pixelwise(&prep.raster, |p| {
                classify_feature_space(&training.set, p, cfg.knn_k)
            });
            Ok((labels, None))
        }
        Method::Svm => {
            let svm = svm.expect("svm artifacts prepared for svm method");
            Ok((svm.unary.argmax_labels(), None))
        }
        Method::Svrf => {
            let svm = svm.expect("svm artifacts prepared for svrf method");
            let sigma_s = resolve_sigma_s(cfg, &prep.raster);
            let field_model = SvrfModel::new(
                svm.model.clone(),
                cfg.svrf.beta,
                sigma_s,
                cfg.svrf.neighborhood,
                cfg.svrf.max_sweeps,
            )?;
            let (labels, trace) = stage("icm", || icm_infer(&field_model, &svm.unary, &prep.raster))?;
            Ok((labels, Some(trace)))
        }
    }
}

fn postprocess(
    cfg: &PipelineConfig,
    prep: &Prepared,
    labels: LabelMap,
    unary: Option<&UnaryField>,
) -> Result<LabelMap> {
    let mut labels = labels;
    if cfg.relabel_objects {
        labels = stage("object_relabel", || {
            object_majority_relabel(&labels, &prep.segmentation)
        })?;
    }
    if cfg.ca_enabled {
        let owned_flat;
        let field = match unary {
            Some(u) => u,
            None => {
                owned_flat = flat_unary(&labels);
                &owned_flat
            }
        };
        labels = stage("ca_relax", || ca_run(&labels, field, &cfg.ca))?;
    }
    Ok(labels)
}

/// Runs the configured pipeline for a single method and writes
/// `predicted.hdr/.bin`, `predicted.ppm`, plus `report.json` when reference
/// labels are available and `trace.json` for the random-field method.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let out_dir = require_path(&cfg.paths.output, "paths.output")?.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let model_preloaded = cfg
        .paths
        .model
        .as_ref()
        .map(|p| p.exists())
        .unwrap_or(false);
    let needs_training = !cfg.method.needs_svm_model() || !model_preloaded;
    let prep = prepare(cfg, needs_training)?;

    let svm = if cfg.method.needs_svm_model() {
        Some(svm_artifacts(cfg, &prep)?)
    } else {
        None
    };

    let (labels, trace) = classify_method(cfg, cfg.method, &prep, svm.as_ref())?;
    let labels = postprocess(cfg, &prep, labels, svm.as_ref().map(|s| &s.unary))?;

    let mut written = Vec::new();
    if let (Some(svm), Some(model_path)) = (&svm, &cfg.paths.model) {
        if svm.trained_here {
            stage("save_model", || save_model(&svm.model, model_path))?;
            written.push(model_path.clone());
        }
    }

    let predicted_path = out_dir.join("predicted.hdr");
    stage("write_labels", || {
        save_labels(&labels, prep.raster.resolution_m, &predicted_path)
    })?;
    written.push(predicted_path.clone());

    let ppm_path = out_dir.join("predicted.ppm");
    let palette = default_palette(&labels.classes());
    export_ppm(&labels, &palette, &ppm_path)?;
    written.push(ppm_path);

    if let Some(trace) = &trace {
        let trace_path = out_dir.join("trace.json");
        let body = serde_json::json!({ "objective_trace": trace });
        std::fs::write(&trace_path, serde_json::to_string_pretty(&body).unwrap())
            .map_err(|e| Error::io(&trace_path, e))?;
        written.push(trace_path);
    }

    let report_value = match &prep.reference {
        Some(reference) => {
            let rep = stage("evaluate", || {
                let cm = confusion(reference, &labels)?;
                report(
                    &cm,
                    cfg.method.display_name(),
                    Some((&labels, prep.raster.resolution_m)),
                )
            })?;
            let report_path = out_dir.join("report.json");
            std::fs::write(
                &report_path,
                serde_json::to_string_pretty(&rep).unwrap(),
            )
            .map_err(|e| Error::io(&report_path, e))?;
            written.push(report_path);
            println!(
                "{}: {}",
                cfg.method.display_name(),
                crate::eval::format_metrics_row(rep.kappa, rep.overall_accuracy)
            );
            Some(rep)
        }
        None => None,
    };

    Ok(PipelineOutcome {
        labels,
        report: report_value,
        objective_trace: trace,
        written,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkEntry {
    pub method: String,
    pub display_name: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub unclassified: u64,
}

pub struct BenchmarkOutcome {
    pub entries: Vec<BenchmarkEntry>,
    pub table: String,
    pub labels: BTreeMap<String, LabelMap>,
}

/// Runs all seven methods on the same inputs and writes one label raster
/// and PPM per method plus `benchmark.json` and `benchmark.txt`.
pub fn run_benchmark(cfg: &PipelineConfig) -> Result<BenchmarkOutcome> {
    let out_dir = require_path(&cfg.paths.output, "paths.output")?.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    if cfg.paths.labels.is_none() {
        return Err(Error::Config(
            "benchmark requires reference labels (paths.labels)".into(),
        ));
    }

    let prep = prepare(cfg, true)?;
    let reference = prep.reference.clone().expect("labels checked above");

    // the two kernel methods share the trained model and posterior field
    let svm = match svm_artifacts(cfg, &prep) {
        Ok(artifacts) => Some(artifacts),
        Err(e) => {
            log::warn!("svm training failed; kernel rows will be reported as failed: {e}");
            None
        }
    };

    let mut entries = Vec::new();
    let mut rows = Vec::new();
    let mut label_maps = BTreeMap::new();
    for method in ALL_METHODS {
        let outcome = (|| -> Result<LabelMap> {
            if method.needs_svm_model() && svm.is_none() {
                return Err(Error::SingleClass);
            }
            let (labels, _) = classify_method(cfg, method, &prep, svm.as_ref())?;
            postprocess(
                cfg,
                &prep,
                labels,
                svm.as_ref().map(|s| &s.unary).filter(|_| method.needs_svm_model()),
            )
        })();
        match outcome {
            Ok(labels) => {
                let unclassified = labels.labels.iter().filter(|&&l| l == 0).count() as u64;
                let rep = confusion(&reference, &labels).and_then(|cm| {
                    report(
                        &cm,
                        method.display_name(),
                        Some((&labels, prep.raster.resolution_m)),
                    )
                });
                match rep {
                    Ok(rep) => {
                        rows.push((
                            method.display_name().to_string(),
                            Some((rep.kappa, rep.overall_accuracy)),
                        ));
                        let base = out_dir.join(method.to_string());
                        save_labels(
                            &labels,
                            prep.raster.resolution_m,
                            base.with_extension("hdr"),
                        )?;
                        export_ppm(
                            &labels,
                            &default_palette(&labels.classes()),
                            base.with_extension("ppm"),
                        )?;
                        entries.push(BenchmarkEntry {
                            method: method.to_string(),
                            display_name: method.display_name().to_string(),
                            ok: true,
                            report: Some(rep),
                            error: None,
                            unclassified,
                        });
                        label_maps.insert(method.to_string(), labels);
                    }
                    Err(e) => {
                        rows.push((method.display_name().to_string(), None));
                        entries.push(BenchmarkEntry {
                            method: method.to_string(),
                            display_name: method.display_name().to_string(),
                            ok: false,
                            report: None,
                            error: Some(e.to_string()),
                            unclassified,
                        });
                    }
                }
            }
            Err(e) => {
                log::warn!("method {method} failed: {e}");
                rows.push((method.display_name().to_string(), None));
                entries.push(BenchmarkEntry {
                    method: method.to_string(),
                    display_name: method.display_name().to_string(),
                    ok: false,
                    report: None,
                    error: Some(e.to_string()),
                    unclassified: 0,
                });
            }
        }
    }

    let table = crate::eval::format_method_table(&rows);
    print!("{table}");

    let json_path = out_dir.join("benchmark.json");
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&entries).unwrap(),
    )
    .map_err(|e| Error::io(&json_path, e))?;
    let table_path = out_dir.join("benchmark.txt");
    std::fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;

    Ok(BenchmarkOutcome {
        entries,
        table,
        labels: label_maps,
    })
}

#[derive(Debug, Serialize)]
struct SceneManifest<'a> {
    spec: &'a SceneSpec,
    salt_pixels: usize,
    class_pixel_counts: BTreeMap<u16, usize>,
}

/// Generates a scene and writes `raster.hdr/.bin`, `truth.hdr/.bin`,
/// `scene.json` and optionally a sampled `samples.csv`.
pub fn run_synth(spec: &SceneSpec, out_dir: &Path, samples_per_class: Option<usize>) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let scene = stage("generate_scene", || generate_scene(spec))?;
    save_raster(&scene.raster, out_dir.join("raster.hdr"))?;
    save_labels(&scene.labels, spec.resolution_m, out_dir.join("truth.hdr"))?;

    let mut class_pixel_counts = BTreeMap::new();
    for &l in &scene.labels.labels {
        *class_pixel_counts.entry(l).or_insert(0) += 1;
    }
    let manifest = SceneManifest {
        spec,
        salt_pixels: scene.salt_count(),
        class_pixel_counts,
    };
    let manifest_path = out_dir.join("scene.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .map_err(|e| Error::io(&manifest_path, e))?;

    if let Some(per_class) = samples_per_class {
        let picks = sample_training_pixels(&scene.labels, per_class, spec.seed);
        let samples = picks
            .iter()
            .map(|&(idx, class)| {
                let (x, y) = (idx % spec.width, idx / spec.width);
                (scene.raster.spectrum(x, y), class)
            })
            .collect();
        let set = TrainingSet::new(spec.bands, samples)?;
        save_samples_csv(&set, out_dir.join("samples.csv"))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SegmentManifest {
    object_count: usize,
    objects: Vec<crate::segment::ObjectStats>,
}

/// Segments a raster and writes the object-id map plus an objects table.
pub fn run_segment(cfg: &PipelineConfig) -> Result<()> {
    let raster_path = require_path(&cfg.paths.raster, "paths.raster")?;
    check_exists(raster_path)?;
    let out_dir = require_path(&cfg.paths.output, "paths.output")?.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let raster = stage("load_raster", || load_raster(raster_path))?;
    let threshold = cfg.seg_threshold.unwrap_or_else(|| default_threshold(&raster));
    let seg = stage("segment", || segment(&raster, threshold, cfg.seg_min_size))?;
    if seg.objects.len() > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!(
            "{} objects exceed the 16-bit label raster format",
            seg.objects.len()
        )));
    }
    let ids = LabelMap::new(
        seg.width,
        seg.height,
        seg.object_ids.iter().map(|&id| id as u16).collect(),
    )?;
    save_labels(&ids, raster.resolution_m, out_dir.join("objects.hdr"))?;
    let manifest = SegmentManifest {
        object_count: seg.objects.len(),
        objects: seg.objects,
    };
    let path = out_dir.join("objects.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap())
        .map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// GA hyperparameter search over a samples CSV; writes the winning genome
/// as a key=value block plus the fitness history.
pub fn run_tune(cfg: &PipelineConfig) -> Result<GaOutcome> {
    let samples_path = require_path(&cfg.paths.samples, "paths.samples")?;
    check_exists(samples_path)?;
    let out_dir = require_path(&cfg.paths.output, "paths.output")?.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let training = training_from_csv(samples_path)?;
    let outcome = stage("evolve", || evolve(&training.set, &training.spatial, &cfg.ga))?;

    let genome_path = out_dir.join("best_genome.txt");
    std::fs::write(&genome_path, outcome.best.to_kv_block())
        .map_err(|e| Error::io(&genome_path, e))?;
    let history_path = out_dir.join("history.json");
    let body = serde_json::json!({
        "best_fitness": outcome.best_fitness,
        "history": outcome.history,
        "evaluations": outcome.evaluations,
    });
    std::fs::write(&history_path, serde_json::to_string_pretty(&body).unwrap())
        .map_err(|e| Error::io(&history_path, e))?;
    println!(
        "best fitness {:.4} after {} evaluations",
        outcome.best_fitness, outcome.evaluations
    );
    Ok(outcome)
}

/// Compares two label maps and writes/prints the accuracy report.
pub fn run_evaluate(
    reference_path: &Path,
    predicted_path: &Path,
    out: Option<&Path>,
    method: &str,
) -> Result<Report> {
    check_exists(reference_path)?;
    check_exists(predicted_path)?;
    let (reference, _) = load_labels(reference_path)?;
    let (predicted, resolution) = load_labels(predicted_path)?;
    let cm = confusion(&reference, &predicted)?;
    let rep = report(&cm, method, Some((&predicted, resolution)))?;
    println!(
        "{}: {}",
        method,
        crate::eval::format_metrics_row(rep.kappa, rep.overall_accuracy)
    );
    if let Some(path) = out {
        std::fs::write(path, serde_json::to_string_pretty(&rep).unwrap())
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(rep)
}

/// Convenience used by tests: classify a prepared scene in memory.
pub fn classify_in_memory(
    cfg: &PipelineConfig,
    raster: &Raster,
    reference: &LabelMap,
) -> Result<(LabelMap, Option<Vec<f64>>)> {
    let threshold = cfg.seg_threshold.unwrap_or_else(|| default_threshold(raster));
    let segmentation = segment(raster, threshold, cfg.seg_min_size)?;
    let feature_map = spatial_feature_map(raster, &segmentation)?;
    let training = training_from_labels(
        raster,
        reference,
        &feature_map,
        cfg.samples_per_class,
        cfg.seed,
    )?;
    let prep = Prepared {
        raster: raster.clone(),
        reference: Some(reference.clone()),
        segmentation,
        feature_map,
        training: Some(training),
    };
    let svm = if cfg.method.needs_svm_model() {
        Some(svm_artifacts(cfg, &prep)?)
    } else {
        None
    };
    let (labels, trace) = classify_method(cfg, cfg.method, &prep, svm.as_ref())?;
    let labels = postprocess(cfg, &prep, labels, svm.as_ref().map(|s| &s.unary))?;
    Ok((labels, trace))
}
