//! Model persistence: a plain-text `.hdr` with kernel spec, C, classes and
//! Platt parameters, next to a `.bin` block holding, per support vector,
//! its f32 feature coordinates and the f64 signed multiplier. Feature
//! values always sit on the f32 grid (see [`crate::raster::TrainingSet`]),
//! so the round trip is bit-exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::{FeaturePair, KernelSpec};
use crate::raster::payload_path;

use super::{PlattCalibrator, SvmBinaryModel, SvmMulticlassModel};

const FORMAT_TAG: &str = "objclass_svm_model_v1";

fn fmt_f64_list(values: impl Iterator<Item = f64>) -> String {
    values
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn save_model(model: &SvmMulticlassModel, header_path: impl AsRef<Path>) -> Result<()> {
    let header_path = header_path.as_ref();
    let first = model
        .binaries
        .first()
        .ok_or_else(|| Error::InvalidArgument("model has no binaries".into()))?;
    let any_sv = model
        .binaries
        .iter()
        .flat_map(|b| b.support_vectors.first())
        .next();
    let spectral_dim = any_sv.map(|sv| sv.spectral.len()).unwrap_or(0);
    let spatial_dim = any_sv.map(|sv| sv.spatial.len()).unwrap_or(0);

    let mut text = String::new();
    text.push_str(&format!("format={FORMAT_TAG}\n"));
    text.push_str(&format!(
        "classes={}\n",
        model
            .classes
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",")
    ));
    text.push_str(&format!("spectral_dim={spectral_dim}\n"));
    text.push_str(&format!("spatial_dim={spatial_dim}\n"));
    text.push_str(&format!("c={}\n", first.c));
    text.push_str(&first.kernel.to_kv_block());
    text.push_str(&format!(
        "sv_counts={}\n",
        model
            .binaries
            .iter()
            .map(|b| b.support_vectors.len().to_string())
            .collect::<Vec<_>>()
            .join(",")
    ));
    text.push_str(&format!(
        "biases={}\n",
        fmt_f64_list(model.binaries.iter().map(|b| b.bias))
    ));
    text.push_str(&format!(
        "converged={}\n",
        model
            .binaries
            .iter()
            .map(|b| b.converged.to_string())
            .collect::<Vec<_>>()
            .join(",")
    ));
    text.push_str(&format!(
        "platt_a={}\n",
        fmt_f64_list(model.calibrators.iter().map(|c| c.a))
    ));
    text.push_str(&format!(
        "platt_b={}\n",
        fmt_f64_list(model.calibrators.iter().map(|c| c.b))
    ));
    fs::write(header_path, text).map_err(|e| Error::io(header_path, e))?;

    let mut bytes = Vec::new();
    for binary in &model.binaries {
        for (sv, &alpha) in binary.support_vectors.iter().zip(&binary.alphas_signed) {
            for &v in &sv.spectral {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
            for &v in &sv.spatial {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
            bytes.extend_from_slice(&alpha.to_le_bytes());
        }
    }
    let bin = payload_path(header_path);
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))
}

fn header_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::ModelFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn load_model(header_path: impl AsRef<Path>) -> Result<SvmMulticlassModel> {
    let header_path = header_path.as_ref();
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let mut fields = std::collections::BTreeMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let get = |key: &str| -> Result<&String> {
        fields
            .get(key)
            .ok_or_else(|| header_error(header_path, format!("missing key {key}")))
    };
    if get("format")? != FORMAT_TAG {
        return Err(header_error(header_path, "unknown format tag"));
    }
    let kernel = KernelSpec::from_kv_block(&text)?;
    let c: f64 = get("c")?
        .parse()
        .map_err(|_| header_error(header_path, "bad c"))?;
    let classes: Vec<u16> = get("classes")?
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| header_error(header_path, "bad classes"))?;
    let spectral_dim: usize = get("spectral_dim")?
        .parse()
        .map_err(|_| header_error(header_path, "bad spectral_dim"))?;
    let spatial_dim: usize = get("spatial_dim")?
        .parse()
        .map_err(|_| header_error(header_path, "bad spatial_dim"))?;
    let parse_f64s = |key: &str| -> Result<Vec<f64>> {
        get(key)?
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| header_error(header_path, format!("bad {key}")))
    };
    let sv_counts: Vec<usize> = get("sv_counts")?
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| header_error(header_path, "bad sv_counts"))?;
    let biases = parse_f64s("biases")?;
    let platt_a = parse_f64s("platt_a")?;
    let platt_b = parse_f64s("platt_b")?;
    let converged: Vec<bool> = get("converged")?
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| header_error(header_path, "bad converged"))?;

    let k = classes.len();
    if k < 2 {
        return Err(header_error(header_path, "fewer than two classes"));
    }
    if sv_counts.len() != k || biases.len() != k || platt_a.len() != k || platt_b.len() != k
        || converged.len() != k
    {
        return Err(header_error(
            header_path,
            "per-class field lengths disagree with classes",
        ));
    }

    let bin = payload_path(header_path);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let record = (spectral_dim + spatial_dim) * 4 + 8;
    let total_svs: usize = sv_counts.iter().sum();
    let expected = (total_svs * record) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: bin,
            expected,
            actual: bytes.len() as u64,
        });
    }

    struct Cursor<'a> {
        bytes: &'a [u8],
        offset: usize,
    }
    impl Cursor<'_> {
        fn f32(&mut self) -> f32 {
            let b = &self.bytes[self.offset..self.offset + 4];
            self.offset += 4;
            f32::from_le_bytes([b[0], b[1], b[2], b[3]])
        }
        fn f64(&mut self) -> f64 {
            let b = &self.bytes[self.offset..self.offset + 8];
            self.offset += 8;
            f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]])
        }
    }
    let mut cursor = Cursor {
        bytes: &bytes,
        offset: 0,
    };
    let mut binaries = Vec::with_capacity(k);
    for (i, &count) in sv_counts.iter().enumerate() {
        let mut support_vectors = Vec::with_capacity(count);
        let mut alphas_signed = Vec::with_capacity(count);
        for _ in 0..count {
            let spectral: Vec<f64> = (0..spectral_dim).map(|_| cursor.f32() as f64).collect();
            let spatial: Vec<f64> = (0..spatial_dim).map(|_| cursor.f32() as f64).collect();
            support_vectors.push(FeaturePair::new(spectral, spatial));
            alphas_signed.push(cursor.f64());
        }
        binaries.push(SvmBinaryModel {
            support_vectors,
            alphas_signed,
            bias: biases[i],
            kernel,
            c,
            converged: converged[i],
        });
    }
    let calibrators = platt_a
        .into_iter()
        .zip(platt_b)
        .map(|(a, b)| PlattCalibrator { a, b })
        .collect();
    Ok(SvmMulticlassModel {
        classes,
        binaries,
        calibrators,
    })
}
