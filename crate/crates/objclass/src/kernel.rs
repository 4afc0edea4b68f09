//! Kernel functions: a spectral kernel Kx, a spatial kernel Ky and their
//! weighted composite K = mu*Kx + (1-mu)*Ky, plus Gram construction and a
//! positive-semidefiniteness diagnostic.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Linear,
    Polynomial,
    Rbf,
    /// Spectral angle: exp(-gamma * theta(u,v)^2).
    Sam,
    /// Spectral information divergence: exp(-gamma * SID(u,v)).
    Sid,
}

pub const ALL_FAMILIES: [KernelFamily; 5] = [
    KernelFamily::Linear,
    KernelFamily::Polynomial,
    KernelFamily::Rbf,
    KernelFamily::Sam,
    KernelFamily::Sid,
];

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KernelFamily::Linear => "linear",
            KernelFamily::Polynomial => "polynomial",
            KernelFamily::Rbf => "rbf",
            KernelFamily::Sam => "sam",
            KernelFamily::Sid => "sid",
        };
        f.write_str(s)
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(KernelFamily::Linear),
            "polynomial" | "poly" => Ok(KernelFamily::Polynomial),
            "rbf" => Ok(KernelFamily::Rbf),
            "sam" => Ok(KernelFamily::Sam),
            "sid" => Ok(KernelFamily::Sid),
            other => Err(Error::InvalidArgument(format!(
                "unknown kernel family {other:?}"
            ))),
        }
    }
}

/// One kernel family with its parameters. `gamma` is the width for
/// rbf/sam/sid; `degree` and `coef0` only matter for polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub family: KernelFamily,
    pub gamma: f64,
    pub degree: u32,
    pub coef0: f64,
}

impl KernelParams {
    pub fn new(family: KernelFamily, gamma: f64, degree: u32, coef0: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if degree < 1 {
            return Err(Error::InvalidArgument("degree must be >= 1".into()));
        }
        Ok(KernelParams {
            family,
            gamma,
            degree,
            coef0,
        })
    }

    pub fn rbf(gamma: f64) -> Self {
        KernelParams::new(KernelFamily::Rbf, gamma, 3, 0.0).unwrap()
    }

    pub fn linear() -> Self {
        KernelParams::new(KernelFamily::Linear, 1.0, 3, 0.0).unwrap()
    }
}

/// Composite kernel specification: spectral side, spatial side and the
/// mixing weight mu in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub spectral: KernelParams,
    pub spatial: KernelParams,
    pub mu: f64,
}

impl KernelSpec {
    pub fn new(spectral: KernelParams, spatial: KernelParams, mu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mu) {
            return Err(Error::InvalidArgument(format!(
                "mu must lie in [0, 1], got {mu}"
            )));
        }
        Ok(KernelSpec {
            spectral,
            spatial,
            mu,
        })
    }

    /// Purely spectral spec (mu = 1); the spatial side is never evaluated.
    pub fn spectral_only(spectral: KernelParams) -> Self {
        KernelSpec {
            spectral,
            spatial: spectral,
            mu: 1.0,
        }
    }

    /// Serializes to the key=value block used by model files and the tuner.
    pub fn to_kv_block(&self) -> String {
        let mut out = String::new();
        for (prefix, p) in [("spectral", &self.spectral), ("spatial", &self.spatial)] {
            out.push_str(&format!("{prefix}_family={}\n", p.family));
            out.push_str(&format!("{prefix}_gamma={}\n", p.gamma));
            out.push_str(&format!("{prefix}_degree={}\n", p.degree));
            out.push_str(&format!("{prefix}_coef0={}\n", p.coef0));
        }
        out.push_str(&format!("mu={}\n", self.mu));
        out
    }

    /// Parses the block produced by [`KernelSpec::to_kv_block`]. Lines that
    /// do not carry one of the spec keys are ignored so the block can be
    /// embedded in larger key=value files.
    pub fn from_kv_block(text: &str) -> Result<Self> {
        let mut spectral = [None::<String>, None, None, None];
        let mut spatial = [None::<String>, None, None, None];
        let mut mu = None::<String>;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                continue;
            };
            let (key, value) = (key.trim(), value.trim().to_string());
            let slot = |side: &mut [Option<String>; 4], field: &str| {
                let idx = match field {
                    "family" => 0,
                    "gamma" => 1,
                    "degree" => 2,
                    "coef0" => 3,
                    _ => return false,
                };
                side[idx] = Some(value.clone());
                true
            };
            if let Some(field) = key.strip_prefix("spectral_") {
                slot(&mut spectral, field);
            } else if let Some(field) = key.strip_prefix("spatial_") {
                slot(&mut spatial, field);
            } else if key == "mu" {
                mu = Some(value);
            }
        }
        let parse_side = |side: &[Option<String>; 4], name: &str| -> Result<KernelParams> {
            let family: KernelFamily = side[0]
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument(format!("missing {name}_family")))?
                .parse()?;
            let num = |i: usize, field: &str| -> Result<f64> {
                side[i]
                    .as_deref()
                    .ok_or_else(|| Error::InvalidArgument(format!("missing {name}_{field}")))?
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad {name}_{field}")))
            };
            KernelParams::new(family, num(1, "gamma")?, num(2, "degree")? as u32, num(3, "coef0")?)
        };
        KernelSpec::new(
            parse_side(&spectral, "spectral")?,
            parse_side(&spatial, "spatial")?,
            mu.ok_or_else(|| Error::InvalidArgument("missing mu".into()))?
                .parse()
                .map_err(|_| Error::InvalidArgument("bad mu".into()))?,
        )
    }
}

/// A (spectral, spatial) feature vector pair for one sample or pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePair {
    pub spectral: Vec<f64>,
    pub spatial: Vec<f64>,
}

impl FeaturePair {
    pub fn new(spectral: Vec<f64>, spatial: Vec<f64>) -> Self {
        FeaturePair { spectral, spatial }
    }

    /// Pair whose spatial side reuses the spectral vector; the degraded
    /// mode when no raster context is available for a sample.
    pub fn spectral_only(spectral: Vec<f64>) -> Self {
        let spatial = spectral.clone();
        FeaturePair { spectral, spatial }
    }
}

fn check_dims(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "kernel arguments of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(())
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

/// Symmetric KL divergence between u and v normalized to distributions.
fn spectral_information_divergence(u: &[f64], v: &[f64]) -> Result<f64> {
    for (index, &w) in u.iter().chain(v.iter()).enumerate() {
        if !(w > 0.0) {
            return Err(Error::SidNonPositive {
                index: index % u.len(),
                value: w,
            });
        }
    }
    let su: f64 = u.iter().sum();
    let sv: f64 = v.iter().sum();
    let mut sid = 0.0;
    for (&a, &b) in u.iter().zip(v) {
        let p = a / su;
        let q = b / sv;
        sid += (p - q) * (p.ln() - q.ln());
    }
    Ok(sid)
}

/// Evaluates one base kernel family on a vector pair.
pub fn eval_base(params: &KernelParams, u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u, v)?;
    match params.family {
        KernelFamily::Linear => Ok(dot(u, v)),
        KernelFamily::Polynomial => Ok((dot(u, v) + params.coef0).powi(params.degree as i32)),
        KernelFamily::Rbf => Ok((-params.gamma * sq_dist(u, v)).exp()),
        KernelFamily::Sam => {
            let nu = dot(u, u).sqrt();
            let nv = dot(v, v).sqrt();
            if nu == 0.0 || nv == 0.0 {
                return Err(Error::SamZeroVector);
            }
            if u == v {
                return Ok(1.0); // zero angle, exactly
            }
            // clamp kills fp domain errors for near-parallel vectors
            let cos = (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0);
            let theta = cos.acos();
            Ok((-params.gamma * theta * theta).exp())
        }
        KernelFamily::Sid => {
            let sid = spectral_information_divergence(u, v)?;
            Ok((-params.gamma * sid).exp())
        }
    }
}

/// Composite kernel between two samples. At the boundary weights the unused
/// side is not evaluated, so mu = 1 is exactly the spectral kernel and
/// mu = 0 exactly the spatial one.
pub fn eval_composite(spec: &KernelSpec, p: &FeaturePair, q: &FeaturePair) -> Result<f64> {
    if spec.mu == 1.0 {
        return eval_base(&spec.spectral, &p.spectral, &q.spectral);
    }
    if spec.mu == 0.0 {
        return eval_base(&spec.spatial, &p.spatial, &q.spatial);
    }
    let kx = eval_base(&spec.spectral, &p.spectral, &q.spectral)?;
    let ky = eval_base(&spec.spatial, &p.spatial, &q.spatial)?;
    Ok(spec.mu * kx + (1.0 - spec.mu) * ky)
}

/// Dense symmetric Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    n: usize,
    data: Vec<f64>,
}

impl Gram {
    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn from_rows(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        Gram { n, data }
    }
}

/// Builds the composite Gram matrix; the upper triangle is computed and
/// mirrored so the result is exactly symmetric.
pub fn gram(spec: &KernelSpec, samples: &[FeaturePair]) -> Result<Gram> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::InvalidArgument("gram of zero samples".into()));
    }
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k = eval_composite(spec, &samples[i], &samples[j])?;
            data[i * n + j] = k;
            data[j * n + i] = k;
        }
    }
    Ok(Gram { n, data })
}

/// Minimum eigenvalue of a symmetric matrix and whether it clears `-tol`
/// (the Mercer diagnostic). Uses a symmetric tridiagonalization eigensolver.
pub fn psd_check(g: &Gram, tol: f64) -> Result<(f64, bool)> {
    let n = g.size();
    for i in 0..n {
        for j in (i + 1)..n {
            if g.get(i, j) != g.get(j, i) {
                return Err(Error::InvalidArgument(format!(
                    "matrix not symmetric at ({i},{j})"
                )));
            }
        }
    }
    let m = DMatrix::from_fn(n, n, |i, j| g.get(i, j));
    let eigenvalues = m.symmetric_eigenvalues();
    let min_eig = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((min_eig, min_eig >= -tol))
}
