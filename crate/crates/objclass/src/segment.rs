//! Region-growing segmentation and the per-pixel spatial feature map.
//!
//! Objects are grown from raster-scan seeds: a 4-neighbor joins a region
//! when the Euclidean distance between its spectrum and the region's
//! running mean stays within the threshold. Undersized regions are merged
//! into the spectrally nearest adjacent region afterwards. The spatial
//! characteristic of a pixel is the mean spectrum of its object, which is
//! what the spatial kernel Ky consumes.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{ClassId, LabelMap, Raster};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectStats {
    pub id: u32,
    pub pixel_count: usize,
    /// Arithmetic mean of member pixel spectra.
    pub mean_vector: Vec<f64>,
    /// (xmin, ymin, xmax, ymax), inclusive.
    pub bbox: (usize, usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub width: usize,
    pub height: usize,
    /// Row-major object id per pixel; ids are contiguous 1..=N.
    pub object_ids: Vec<u32>,
    pub objects: Vec<ObjectStats>,
}

impl Segmentation {
    #[inline]
    pub fn object_at(&self, x: usize, y: usize) -> u32 {
        self.object_ids[y * self.width + x]
    }

    pub fn object(&self, id: u32) -> &ObjectStats {
        &self.objects[id as usize - 1]
    }
}

const NEIGHBORS_4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Default growth threshold: half the norm of the per-band std-dev vector.
pub fn default_threshold(r: &Raster) -> f64 {
    let stds = r.band_std_devs();
    0.5 * stds.iter().map(|s| s * s).sum::<f64>().sqrt()
}

pub fn segment(r: &Raster, threshold: f64, min_size: usize) -> Result<Segmentation> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "segmentation threshold must be >= 0, got {threshold}"
        )));
    }
    if min_size < 1 {
        return Err(Error::InvalidArgument("min_size must be >= 1".into()));
    }
    let (w, h) = (r.width, r.height);
    let n = w * h;
    let mut region_of = vec![0u32; n]; // 0 = unassigned
    let mut pixels: Vec<Vec<usize>> = Vec::new(); // per region, in join order
    let mut sums: Vec<Vec<f64>> = Vec::new();

    let t2 = threshold * threshold;
    let mut spectrum = vec![0.0f64; r.bands];
    let mut queue = VecDeque::new();

    for seed in 0..n {
        if region_of[seed] != 0 {
            continue;
        }
        let rid = pixels.len() as u32 + 1;
        region_of[seed] = rid;
        r.fill_spectrum(seed % w, seed / w, &mut spectrum);
        let mut sum = spectrum.clone();
        let mut members = vec![seed];
        queue.clear();
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            let (px, py) = (p % w, p / w);
            for (dx, dy) in NEIGHBORS_4 {
                let nx = px as isize + dx;
                let ny = py as isize + dy;
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                    continue;
                }
                let q = ny as usize * w + nx as usize;
                if region_of[q] != 0 {
                    continue;
                }
                r.fill_spectrum(nx as usize, ny as usize, &mut spectrum);
                let count = members.len() as f64;
                let d2: f64 = spectrum
                    .iter()
                    .zip(&sum)
                    .map(|(v, s)| {
                        let d = v - s / count;
                        d * d
                    })
                    .sum();
                if d2 <= t2 {
                    region_of[q] = rid;
                    members.push(q);
                    for (s, v) in sum.iter_mut().zip(&spectrum) {
                        *s += v;
                    }
                    queue.push_back(q);
                }
            }
        }
        pixels.push(members);
        sums.push(sum);
    }

    merge_small_regions(r, &mut region_of, &mut pixels, &mut sums, min_size);
    Ok(finalize(r, &region_of))
}

/// Merges regions below `min_size` into their spectrally nearest 4-adjacent
/// region, smallest region id first, until no mergeable region remains.
fn merge_small_regions(
    r: &Raster,
    region_of: &mut [u32],
    pixels: &mut Vec<Vec<usize>>,
    sums: &mut Vec<Vec<f64>>,
    min_size: usize,
) {
    let (w, h) = (r.width, r.height);
    loop {
        let mut merged_any = false;
        for rid in 1..=pixels.len() as u32 {
            let idx = rid as usize - 1;
            if pixels[idx].is_empty() || pixels[idx].len() >= min_size {
                continue;
            }
            // adjacent regions of this one
            let mut adjacent: Vec<u32> = Vec::new();
            for &p in &pixels[idx] {
                let (px, py) = (p % w, p / w);
                for (dx, dy) in NEIGHBORS_4 {
                    let nx = px as isize + dx;
                    let ny = py as isize + dy;
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                        continue;
                    }
                    let other = region_of[ny as usize * w + nx as usize];
                    if other != rid && !adjacent.contains(&other) {
                        adjacent.push(other);
                    }
                }
            }
            if adjacent.is_empty() {
                continue; // isolated (single-region raster)
            }
            let my_count = pixels[idx].len() as f64;
            let my_mean: Vec<f64> = sums[idx].iter().map(|s| s / my_count).collect();
            let mut best = adjacent[0];
            let mut best_d = f64::INFINITY;
            adjacent.sort_unstable();
            for &other in &adjacent {
                let oidx = other as usize - 1;
                let count = pixels[oidx].len() as f64;
                let mean: Vec<f64> = sums[oidx].iter().map(|s| s / count).collect();
                let d = sq_dist(&my_mean, &mean);
                if d < best_d {
                    best_d = d;
                    best = other;
                }
            }
            let bidx = best as usize - 1;
            let moved = std::mem::take(&mut pixels[idx]);
            for &p in &moved {
                region_of[p] = best;
            }
            pixels[bidx].extend(moved);
            let taken = std::mem::take(&mut sums[idx]);
            for (s, v) in sums[bidx].iter_mut().zip(&taken) {
                *s += v;
            }
            merged_any = true;
        }
        if !merged_any {
            break;
        }
    }
}

/// Renumbers regions to contiguous ids in first-pixel order and recomputes
/// exact per-object statistics.
fn finalize(r: &Raster, region_of: &[u32]) -> Segmentation {
    let (w, h) = (r.width, r.height);
    let mut remap: BTreeMap<u32, u32> = BTreeMap::new();
    let mut object_ids = vec![0u32; w * h];
    for (p, &old) in region_of.iter().enumerate() {
        let next = remap.len() as u32 + 1;
        let id = *remap.entry(old).or_insert(next);
        object_ids[p] = id;
    }
    let count = remap.len();
    let mut sums = vec![vec![0.0f64; r.bands]; count];
    let mut counts = vec![0usize; count];
    let mut bboxes = vec![(usize::MAX, usize::MAX, 0usize, 0usize); count];
    let mut spectrum = vec![0.0f64; r.bands];
    for y in 0..h {
        for x in 0..w {
            let idx = object_ids[y * w + x] as usize - 1;
            r.fill_spectrum(x, y, &mut spectrum);
            for (s, v) in sums[idx].iter_mut().zip(&spectrum) {
                *s += v;
            }
            counts[idx] += 1;
            let b = &mut bboxes[idx];
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x);
            b.3 = b.3.max(y);
        }
    }
    let objects = (0..count)
        .map(|i| ObjectStats {
            id: i as u32 + 1,
            pixel_count: counts[i],
            mean_vector: sums[i].iter().map(|s| s / counts[i] as f64).collect(),
            bbox: bboxes[i],
        })
        .collect();
    Segmentation {
        width: w,
        height: h,
        object_ids,
        objects,
    }
}

/// B-band raster where every pixel carries the mean spectrum of its object.
pub fn spatial_feature_map(r: &Raster, seg: &Segmentation) -> Result<Raster> {
    if seg.width != r.width || seg.height != r.height {
        return Err(Error::Shape(format!(
            "segmentation {}x{} does not match raster {}x{}",
            seg.width, seg.height, r.width, r.height
        )));
    }
    let n = r.pixel_count();
    let mut data = vec![0.0f32; n * r.bands];
    for (p, &id) in seg.object_ids.iter().enumerate() {
        let mean = &seg.objects[id as usize - 1].mean_vector;
        for band in 0..r.bands {
            data[band * n + p] = mean[band] as f32;
        }
    }
    Raster::new(r.width, r.height, r.bands, r.resolution_m, data)
}

/// Replaces every pixel label with its object's plurality label
/// (ties broken by the smallest class id).
pub fn object_majority_relabel(pixel_labels: &LabelMap, seg: &Segmentation) -> Result<LabelMap> {
    if seg.width != pixel_labels.width || seg.height != pixel_labels.height {
        return Err(Error::Shape(format!(
            "segmentation {}x{} does not match labels {}x{}",
            seg.width, seg.height, pixel_labels.width, pixel_labels.height
        )));
    }
    let mut counts: Vec<BTreeMap<ClassId, usize>> = vec![BTreeMap::new(); seg.objects.len()];
    for (p, &id) in seg.object_ids.iter().enumerate() {
        *counts[id as usize - 1]
            .entry(pixel_labels.labels[p])
            .or_insert(0) += 1;
    }
    let winners: Vec<ClassId> = counts
        .iter()
        .map(|c| {
            // BTreeMap iterates ascending, so > keeps the smallest id on ties
            let mut best = 0u16;
            let mut best_count = 0usize;
            for (&label, &count) in c {
                if count > best_count {
                    best_count = count;
                    best = label;
                }
            }
            best
        })
        .collect();
    let labels = seg
        .object_ids
        .iter()
        .map(|&id| winners[id as usize - 1])
        .collect();
    LabelMap::new(pixel_labels.width, pixel_labels.height, labels)
}
