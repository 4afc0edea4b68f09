//! Pipeline configuration: a plain-text key=value file with `[section]`
//! headers, overridable key by key from the command line.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::ca::CaRule;
use crate::error::{Error, Result};
use crate::ga::GaConfig;
use crate::kernel::{KernelParams, KernelSpec};
use crate::svrf::Neighborhood;

/// The seven classification methods of the benchmark table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Mahalanobis,
    MinDistance,
    MaxLikelihood,
    Parallelepiped,
    FeatureSpace,
    Svm,
    Svrf,
}

/// Benchmark row order.
pub const ALL_METHODS: [Method; 7] = [
    Method::Mahalanobis,
    Method::MinDistance,
    Method::MaxLikelihood,
    Method::Parallelepiped,
    Method::FeatureSpace,
    Method::Svm,
    Method::Svrf,
];

impl Method {
    pub fn display_name(&self) -> &'static str {
        match self {
            Method::Mahalanobis => "Mahalanobis",
            Method::MinDistance => "Minimum Distance",
            Method::MaxLikelihood => "Maximum Likelihood",
            Method::Parallelepiped => "Parallelepiped",
            Method::FeatureSpace => "Feature Space",
            Method::Svm => "SVM (spectral & spatial)",
            Method::Svrf => "SVRF (spectral & spatial)",
        }
    }

    pub fn needs_svm_model(&self) -> bool {
        matches!(self, Method::Svm | Method::Svrf)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mahalanobis" => Ok(Method::Mahalanobis),
            "mindist" => Ok(Method::MinDistance),
            "maxlik" => Ok(Method::MaxLikelihood),
            "pipiped" => Ok(Method::Parallelepiped),
            "fspace" => Ok(Method::FeatureSpace),
            "svm" => Ok(Method::Svm),
            "svrf" => Ok(Method::Svrf),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (expected mindist|mahalanobis|maxlik|pipiped|fspace|svm|svrf)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Mahalanobis => "mahalanobis",
            Method::MinDistance => "mindist",
            Method::MaxLikelihood => "maxlik",
            Method::Parallelepiped => "pipiped",
            Method::FeatureSpace => "fspace",
            Method::Svm => "svm",
            Method::Svrf => "svrf",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathsConfig {
    pub raster: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrfConfig {
    pub beta: f64,
    /// None means the median-of-neighbor-distances estimate.
    pub sigma_s: Option<f64>,
    pub neighborhood: Neighborhood,
    pub max_sweeps: usize,
}

impl Default for SvrfConfig {
    fn default() -> Self {
        SvrfConfig {
            beta: 1.0,
            sigma_s: None,
            neighborhood: Neighborhood::Four,
            max_sweeps: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub method: Method,
    pub seed: u64,
    /// Training pixels drawn per class when sampling from reference labels.
    pub samples_per_class: usize,
    /// Re-label every object by its plurality class after classification.
    pub relabel_objects: bool,
    pub knn_k: usize,
    /// Parallelepiped box half-width in standard deviations.
    pub box_k: f64,
    pub kernel: KernelSpec,
    pub c: f64,
    pub tol: f64,
    /// None means the data-driven default threshold.
    pub seg_threshold: Option<f64>,
    pub seg_min_size: usize,
    pub svrf: SvrfConfig,
    pub ca_enabled: bool,
    pub ca: CaRule,
    pub ga: GaConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let rbf = KernelParams::rbf(0.5);
        PipelineConfig {
            paths: PathsConfig::default(),
            method: Method::Svm,
            seed: 0,
            samples_per_class: 100,
            relabel_objects: false,
            knn_k: 5,
            box_k: 2.0,
            kernel: KernelSpec::new(rbf, rbf, 0.5).unwrap(),
            c: 10.0,
            tol: 1e-3,
            seg_threshold: None,
            seg_min_size: 8,
            svrf: SvrfConfig::default(),
            ca_enabled: false,
            ca: CaRule::default(),
            ga: GaConfig::default(),
        }
    }
}

fn parse_num<T: FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {section}.{key}")))
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "bad boolean {value:?} for {section}.{key}"
        ))),
    }
}

impl PipelineConfig {
    /// Applies one `section.key = value` assignment.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        match (section, key) {
            ("paths", "raster") => self.paths.raster = Some(PathBuf::from(value)),
            ("paths", "labels") => self.paths.labels = Some(PathBuf::from(value)),
            ("paths", "samples") => self.paths.samples = Some(PathBuf::from(value)),
            ("paths", "model") => self.paths.model = Some(PathBuf::from(value)),
            ("paths", "output") => self.paths.output = Some(PathBuf::from(value)),
            ("pipeline", "method") => self.method = value.parse()?,
            ("pipeline", "seed") => self.seed = parse_num(section, key, value)?,
            ("pipeline", "samples_per_class") => {
                self.samples_per_class = parse_num(section, key, value)?
            }
            ("pipeline", "relabel_objects") => {
                self.relabel_objects = parse_bool(section, key, value)?
            }
            ("pipeline", "knn_k") => self.knn_k = parse_num(section, key, value)?,
            ("pipeline", "box_k") => self.box_k = parse_num(section, key, value)?,
            ("kernel", "spectral_family") => self.kernel.spectral.family = value.parse()?,
            ("kernel", "spectral_gamma") => {
                self.kernel.spectral.gamma = parse_num(section, key, value)?
            }
            ("kernel", "spectral_degree") => {
                self.kernel.spectral.degree = parse_num(section, key, value)?
            }
            ("kernel", "spectral_coef0") => {
                self.kernel.spectral.coef0 = parse_num(section, key, value)?
            }
            ("kernel", "spatial_family") => self.kernel.spatial.family = value.parse()?,
            ("kernel", "spatial_gamma") => {
                self.kernel.spatial.gamma = parse_num(section, key, value)?
            }
            ("kernel", "spatial_degree") => {
                self.kernel.spatial.degree = parse_num(section, key, value)?
            }
            ("kernel", "spatial_coef0") => {
                self.kernel.spatial.coef0 = parse_num(section, key, value)?
            }
            ("kernel", "mu") => self.kernel.mu = parse_num(section, key, value)?,
            ("kernel", "c") => self.c = parse_num(section, key, value)?,
            ("kernel", "tol") => self.tol = parse_num(section, key, value)?,
            ("segmentation", "threshold") => {
                self.seg_threshold = if value == "auto" {
                    None
                } else {
                    Some(parse_num(section, key, value)?)
                }
            }
            ("segmentation", "min_size") => self.seg_min_size = parse_num(section, key, value)?,
            ("svrf", "beta") => self.svrf.beta = parse_num(section, key, value)?,
            ("svrf", "sigma_s") => {
                self.svrf.sigma_s = if value == "auto" {
                    None
                } else {
                    Some(parse_num(section, key, value)?)
                }
            }
            ("svrf", "neighborhood") => {
                self.svrf.neighborhood = match value {
                    "4" => Neighborhood::Four,
                    "8" => Neighborhood::Eight,
                    _ => {
                        return Err(Error::Config(format!(
                            "svrf.neighborhood must be 4 or 8, got {value:?}"
                        )))
                    }
                }
            }
            ("svrf", "max_sweeps") => self.svrf.max_sweeps = parse_num(section, key, value)?,
            ("ca", "enabled") => self.ca_enabled = parse_bool(section, key, value)?,
            ("ca", "threshold") => self.ca.majority_threshold = parse_num(section, key, value)?,
            ("ca", "ceiling") => self.ca.confidence_ceiling = parse_num(section, key, value)?,
            ("ca", "steps") => self.ca.steps = parse_num(section, key, value)?,
            ("ga", "population") => self.ga.population = parse_num(section, key, value)?,
            ("ga", "generations") => self.ga.generations = parse_num(section, key, value)?,
            ("ga", "tournament_size") => {
                self.ga.tournament_size = parse_num(section, key, value)?
            }
            ("ga", "crossover_prob") => self.ga.crossover_prob = parse_num(section, key, value)?,
            ("ga", "mutation_prob") => self.ga.mutation_prob = parse_num(section, key, value)?,
            ("ga", "elitism") => self.ga.elitism = parse_num(section, key, value)?,
            ("ga", "seed") => self.ga.seed = parse_num(section, key, value)?,
            ("ga", "folds") => self.ga.folds = parse_num(section, key, value)?,
            _ => {
                return Err(Error::Config(format!(
                    "unknown configuration key {section}.{key}"
                )))
            }
        }
        Ok(())
    }

    /// Parses a config file body and applies every assignment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value", line_no + 1))
            })?;
            self.set(&section, key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn load(path: Option<&PathBuf>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text)?;
        }
        for (key, value) in overrides {
            let (section, name) = key.split_once('.').ok_or_else(|| {
                Error::Config(format!("override key {key:?} must be section.key"))
            })?;
            cfg.set(section, name, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.kernel.mu) {
            return Err(Error::Config("kernel.mu must lie in [0, 1]".into()));
        }
        if !(self.c > 0.0) {
            return Err(Error::Config("kernel.c must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("kernel.tol must be positive".into()));
        }
        if self.seg_min_size < 1 {
            return Err(Error::Config("segmentation.min_size must be >= 1".into()));
        }
        if self.svrf.beta < 0.0 {
            return Err(Error::Config("svrf.beta must be >= 0".into()));
        }
        if self.ca_enabled {
            self.ca.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.ga.validate()?;
        Ok(())
    }

    /// Resolved configuration in the same format `apply_text` accepts.
    pub fn to_text(&self) -> String {
        let path_or = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let mut out = String::new();
        out.push_str("[paths]\n");
        for (key, value) in [
            ("raster", path_or(&self.paths.raster)),
            ("labels", path_or(&self.paths.labels)),
            ("samples", path_or(&self.paths.samples)),
            ("model", path_or(&self.paths.model)),
            ("output", path_or(&self.paths.output)),
        ] {
            if !value.is_empty() {
                out.push_str(&format!("{key}={value}\n"));
            }
        }
        out.push_str("\n[pipeline]\n");
        out.push_str(&format!("method={}\n", self.method));
        out.push_str(&format!("seed={}\n", self.seed));
        out.push_str(&format!("samples_per_class={}\n", self.samples_per_class));
        out.push_str(&format!("relabel_objects={}\n", self.relabel_objects));
        out.push_str(&format!("knn_k={}\n", self.knn_k));
        out.push_str(&format!("box_k={}\n", self.box_k));
        out.push_str("\n[kernel]\n");
        out.push_str(&self.kernel.to_kv_block());
        out.push_str(&format!("c={}\n", self.c));
        out.push_str(&format!("tol={}\n", self.tol));
        out.push_str("\n[segmentation]\n");
        out.push_str(&format!(
            "threshold={}\n",
            self.seg_threshold
                .map(|t| t.to_string())
                .unwrap_or_else(|| "auto".to_string())
        ));
        out.push_str(&format!("min_size={}\n", self.seg_min_size));
        out.push_str("\n[svrf]\n");
        out.push_str(&format!("beta={}\n", self.svrf.beta));
        out.push_str(&format!(
            "sigma_s={}\n",
            self.svrf
                .sigma_s
                .map(|s| s.to_string())
                .unwrap_or_else(|| "auto".to_string())
        ));
        out.push_str(&format!(
            "neighborhood={}\n",
            match self.svrf.neighborhood {
                Neighborhood::Four => "4",
                Neighborhood::Eight => "8",
            }
        ));
        out.push_str(&format!("max_sweeps={}\n", self.svrf.max_sweeps));
        out.push_str("\n[ca]\n");
        out.push_str(&format!("enabled={}\n", self.ca_enabled));
        out.push_str(&format!("threshold={}\n", self.ca.majority_threshold));
        out.push_str(&format!("ceiling={}\n", self.ca.confidence_ceiling));
        out.push_str(&format!("steps={}\n", self.ca.steps));
        out.push_str("\n[ga]\n");
        out.push_str(&format!("population={}\n", self.ga.population));
        out.push_str(&format!("generations={}\n", self.ga.generations));
        out.push_str(&format!("tournament_size={}\n", self.ga.tournament_size));
        out.push_str(&format!("crossover_prob={}\n", self.ga.crossover_prob));
        out.push_str(&format!("mutation_prob={}\n", self.ga.mutation_prob));
        out.push_str(&format!("elitism={}\n", self.ga.elitism));
        out.push_str(&format!("seed={}\n", self.ga.seed));
        out.push_str(&format!("folds={}\n", self.ga.folds));
        out
    }
}
