//! Raster, label-map and training-sample data model plus file formats.
//!
//! A raster on disk is a pair of files: a small JSON header (`.hdr`) and a
//! raw payload (`.bin`) holding little-endian `float32` values in
//! band-sequential order, row-major within each band. Label maps use the
//! same scheme with a little-endian `uint16` payload and no `bands` key;
//! class id 0 is reserved for "unclassified". The grid origin is the top
//! left corner and indexing is row-major everywhere in this crate.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ClassId = u16;

/// B-band image grid; the observations fed to every classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    /// Ground size of one pixel side in meters.
    pub resolution_m: f64,
    /// Band-sequential, row-major within band: index = band*W*H + y*W + x.
    pub data: Vec<f32>,
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        bands: usize,
        resolution_m: f64,
        data: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::EmptyRaster);
        }
        if !(resolution_m > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "resolution_m must be positive, got {resolution_m}"
            )));
        }
        if data.len() != width * height * bands {
            return Err(Error::Shape(format!(
                "raster data length {} != {}x{}x{}",
                data.len(),
                bands,
                height,
                width
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Raster {
            width,
            height,
            bands,
            resolution_m,
            data,
        })
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, band: usize) -> usize {
        band * self.width * self.height + y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, band: usize) -> f32 {
        self.data[self.index(x, y, band)]
    }

    /// Spectrum of pixel (x, y) across all bands, widened to f64.
    pub fn spectrum(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.bands).map(|b| self.get(x, y, b) as f64).collect()
    }

    pub fn fill_spectrum(&self, x: usize, y: usize, out: &mut [f64]) {
        for (b, slot) in out.iter_mut().enumerate() {
            *slot = self.get(x, y, b) as f64;
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Per-band standard deviation over the whole image (population form).
    pub fn band_std_devs(&self) -> Vec<f64> {
        let n = self.pixel_count() as f64;
        (0..self.bands)
            .map(|b| {
                let plane = &self.data[b * self.pixel_count()..(b + 1) * self.pixel_count()];
                let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / n;
                let var = plane
                    .iter()
                    .map(|&v| {
                        let d = v as f64 - mean;
                        d * d
                    })
                    .sum::<f64>()
                    / n;
                var.sqrt()
            })
            .collect()
    }
}

/// Per-pixel class identifiers; 0 means unclassified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    /// Row-major, length width*height.
    pub labels: Vec<ClassId>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<ClassId>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Shape(format!(
                "label length {} != {}x{}",
                labels.len(),
                width,
                height
            )));
        }
        Ok(LabelMap {
            width,
            height,
            labels,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> ClassId {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: ClassId) {
        self.labels[y * self.width + x] = label;
    }

    /// Distinct nonzero class ids, ascending.
    pub fn classes(&self) -> Vec<ClassId> {
        let mut ids: Vec<ClassId> = self.labels.iter().copied().filter(|&c| c != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Labeled feature vectors for classifier training.
///
/// Feature values are carried as f64 but always sit on the f32 grid: they
/// originate either from raster payloads (stored as f32) or from CSV fields
/// parsed at f32 precision. Model files can therefore store support-vector
/// coordinates as f32 without losing bits.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub dim: usize,
    pub samples: Vec<(Vec<f64>, ClassId)>,
}

impl TrainingSet {
    pub fn new(dim: usize, samples: Vec<(Vec<f64>, ClassId)>) -> Result<Self> {
        for (features, label) in &samples {
            if features.len() != dim {
                return Err(Error::Dimension(format!(
                    "sample vector length {} != dim {}",
                    features.len(),
                    dim
                )));
            }
            if *label == 0 {
                return Err(Error::ReservedLabel { row: 0, label: 0 });
            }
        }
        Ok(TrainingSet { dim, samples })
    }

    /// Distinct class ids, ascending.
    pub fn classes(&self) -> Vec<ClassId> {
        let mut ids: Vec<ClassId> = self.samples.iter().map(|(_, c)| *c).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RasterHeader {
    width: usize,
    height: usize,
    bands: usize,
    resolution_m: f64,
    dtype: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelHeader {
    width: usize,
    height: usize,
    resolution_m: f64,
    dtype: String,
}

/// Payload path sitting next to a header path: extension swapped for `bin`.
pub fn payload_path(header_path: &Path) -> PathBuf {
    header_path.with_extension("bin")
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn load_raster(header_path: impl AsRef<Path>) -> Result<Raster> {
    let header_path = header_path.as_ref();
    let header: RasterHeader = serde_json::from_str(&read_text(header_path)?).map_err(|e| {
        Error::Header {
            path: header_path.to_path_buf(),
            reason: e.to_string(),
        }
    })?;
    if header.dtype != "float32" {
        return Err(Error::Header {
            path: header_path.to_path_buf(),
            reason: format!("unsupported dtype {:?}, expected \"float32\"", header.dtype),
        });
    }
    if header.width == 0 || header.height == 0 || header.bands == 0 {
        return Err(Error::EmptyRaster);
    }
    let bin = payload_path(header_path);
    let bytes = read_bytes(&bin)?;
    let expected = (header.width * header.height * header.bands * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: bin,
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Raster::new(
        header.width,
        header.height,
        header.bands,
        header.resolution_m,
        data,
    )
}

pub fn save_raster(r: &Raster, header_path: impl AsRef<Path>) -> Result<()> {
    let header_path = header_path.as_ref();
    let header = RasterHeader {
        width: r.width,
        height: r.height,
        bands: r.bands,
        resolution_m: r.resolution_m,
        dtype: "float32".to_string(),
    };
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    write_file(header_path, text.as_bytes())?;
    let mut bytes = Vec::with_capacity(r.data.len() * 4);
    for v in &r.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_file(&payload_path(header_path), &bytes)
}

/// Loads a label map; returns the map and the resolution recorded in its header.
pub fn load_labels(header_path: impl AsRef<Path>) -> Result<(LabelMap, f64)> {
    let header_path = header_path.as_ref();
    let header: LabelHeader = serde_json::from_str(&read_text(header_path)?).map_err(|e| {
        Error::Header {
            path: header_path.to_path_buf(),
            reason: e.to_string(),
        }
    })?;
    if header.dtype != "uint16" {
        return Err(Error::Header {
            path: header_path.to_path_buf(),
            reason: format!("unsupported dtype {:?}, expected \"uint16\"", header.dtype),
        });
    }
    let bin = payload_path(header_path);
    let bytes = read_bytes(&bin)?;
    let expected = (header.width * header.height * 2) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: bin,
            expected,
            actual: bytes.len() as u64,
        });
    }
    let labels: Vec<u16> = bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    Ok((
        LabelMap::new(header.width, header.height, labels)?,
        header.resolution_m,
    ))
}

pub fn save_labels(
    labels: &LabelMap,
    resolution_m: f64,
    header_path: impl AsRef<Path>,
) -> Result<()> {
    let header_path = header_path.as_ref();
    let header = LabelHeader {
        width: labels.width,
        height: labels.height,
        resolution_m,
        dtype: "uint16".to_string(),
    };
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    write_file(header_path, text.as_bytes())?;
    let mut bytes = Vec::with_capacity(labels.labels.len() * 2);
    for v in &labels.labels {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_file(&payload_path(header_path), &bytes)
}

/// Writes a binary PPM (P6, maxval 255). Label 0 renders black; every other
/// label must have a palette entry.
pub fn export_ppm(
    labels: &LabelMap,
    palette: &BTreeMap<ClassId, [u8; 3]>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(labels.labels.len() * 3 + 32);
    bytes.extend_from_slice(format!("P6\n{} {}\n255\n", labels.width, labels.height).as_bytes());
    for &label in &labels.labels {
        if label == 0 {
            bytes.extend_from_slice(&[0, 0, 0]);
        } else {
            let rgb = palette
                .get(&label)
                .ok_or(Error::MissingPaletteEntry(label))?;
            bytes.extend_from_slice(rgb);
        }
    }
    write_file(path, &bytes)
}

/// Deterministic palette for a class list: a fixed color table cycled by
/// position, distinct for up to 12 classes.
pub fn default_palette(classes: &[ClassId]) -> BTreeMap<ClassId, [u8; 3]> {
    const TABLE: [[u8; 3]; 12] = [
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
        [210, 245, 60],
        [170, 110, 40],
        [128, 128, 128],
        [255, 250, 200],
    ];
    classes
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, TABLE[i % TABLE.len()]))
        .collect()
}

/// Reads a samples CSV with header `band_1,...,band_B,label`. Fields are
/// parsed at f32 precision (see [`TrainingSet`]); file row order is kept.
pub fn load_samples_csv(path: impl AsRef<Path>) -> Result<TrainingSet> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            ),
            _ => Error::Csv {
                row: 0,
                reason: e.to_string(),
            },
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Csv {
            row: 0,
            reason: e.to_string(),
        })?
        .clone();
    if headers.len() < 2 || headers.iter().last() != Some("label") {
        return Err(Error::Csv {
            row: 0,
            reason: format!(
                "expected header band_1,...,band_B,label; got {:?}",
                headers.iter().collect::<Vec<_>>()
            ),
        });
    }
    let dim = headers.len() - 1;
    for (i, name) in headers.iter().take(dim).enumerate() {
        let expected = format!("band_{}", i + 1);
        if name != expected {
            return Err(Error::Csv {
                row: 0,
                reason: format!("column {} named {:?}, expected {:?}", i + 1, name, expected),
            });
        }
    }

    let mut samples = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx as u64 + 1;
        let record = record.map_err(|e| Error::Csv {
            row,
            reason: e.to_string(),
        })?;
        if record.len() != dim + 1 {
            return Err(Error::Csv {
                row,
                reason: format!("expected {} fields, found {}", dim + 1, record.len()),
            });
        }
        let mut features = Vec::with_capacity(dim);
        for (col, field) in record.iter().take(dim).enumerate() {
            let value: f32 = field.parse().map_err(|_| Error::Csv {
                row,
                reason: format!("non-numeric field {:?} in column band_{}", field, col + 1),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFinite { index: idx * dim + col });
            }
            features.push(value as f64);
        }
        let raw: i64 = record[dim].parse().map_err(|_| Error::Csv {
            row,
            reason: format!("non-numeric label {:?}", &record[dim]),
        })?;
        if raw < 1 || raw > u16::MAX as i64 {
            return Err(Error::ReservedLabel { row, label: raw });
        }
        samples.push((features, raw as u16));
    }
    TrainingSet::new(dim, samples)
}

pub fn save_samples_csv(set: &TrainingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for b in 1..=set.dim {
        out.push_str(&format!("band_{b},"));
    }
    out.push_str("label\n");
    for (features, label) in &set.samples {
        for v in features {
            // values sit on the f32 grid; printing the f32 keeps rows short
            out.push_str(&format!("{},", *v as f32));
        }
        out.push_str(&format!("{label}\n"));
    }
    write_file(path, out.as_bytes())
}
