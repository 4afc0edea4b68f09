//! Sequential minimal optimization for the soft-margin dual.
//!
//! Working-set selection is first-order: an examined point that violates
//! its KKT condition is paired with the index maximizing |E1 - E2| (ties
//! to the lowest index), with a deterministic index-order fallback when the
//! analytic step makes no progress. The outer loop alternates full sweeps
//! with sweeps over the non-bound subset, terminating when a full sweep
//! changes nothing. No randomness anywhere, so training is reproducible.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::kernel::{eval_composite, gram, FeaturePair, KernelSpec};

use super::SvmBinaryModel;

/// Above this sample count the solver stops precomputing the full Gram
/// matrix and falls back to an LRU row cache.
pub const FULL_GRAM_MAX: usize = 4000;

/// Rows kept by the LRU cache.
pub const LRU_ROWS: usize = 512;

/// Minimal relative alpha progress for a step to count.
const STEP_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub struct SmoParams {
    pub c: f64,
    pub tol: f64,
    /// Maximum number of outer sweeps (full or non-bound).
    pub max_passes: usize,
}

impl Default for SmoParams {
    fn default() -> Self {
        SmoParams {
            c: 1.0,
            tol: 1e-3,
            max_passes: 100,
        }
    }
}

/// Kernel row provider: full Gram for small problems, LRU rows otherwise.
pub struct KernelCache<'a> {
    spec: &'a KernelSpec,
    samples: &'a [FeaturePair],
    mode: CacheMode,
}

enum CacheMode {
    Full(crate::kernel::Gram),
    Lru {
        capacity: usize,
        rows: HashMap<usize, Vec<f64>>,
        order: Vec<usize>, // most recent last
    },
}

impl<'a> KernelCache<'a> {
    pub fn new(spec: &'a KernelSpec, samples: &'a [FeaturePair]) -> Result<Self> {
        if samples.len() <= FULL_GRAM_MAX {
            Ok(KernelCache {
                spec,
                samples,
                mode: CacheMode::Full(gram(spec, samples)?),
            })
        } else {
            Self::with_lru_capacity(spec, samples, LRU_ROWS)
        }
    }

    /// LRU-backed cache regardless of size; used directly by tests.
    pub fn with_lru_capacity(
        spec: &'a KernelSpec,
        samples: &'a [FeaturePair],
        capacity: usize,
    ) -> Result<Self> {
        Ok(KernelCache {
            spec,
            samples,
            mode: CacheMode::Lru {
                capacity: capacity.max(1),
                rows: HashMap::new(),
                order: Vec::new(),
            },
        })
    }

    pub fn entry(&mut self, i: usize, j: usize) -> Result<f64> {
        Ok(self.row(i)?[j])
    }

    pub fn row(&mut self, i: usize) -> Result<&[f64]> {
        match &mut self.mode {
            CacheMode::Full(g) => Ok(g.row(i)),
            CacheMode::Lru {
                capacity,
                rows,
                order,
            } => {
                if !rows.contains_key(&i) {
                    let mut row = vec![0.0; self.samples.len()];
                    for (j, q) in self.samples.iter().enumerate() {
                        row[j] = eval_composite(self.spec, &self.samples[i], q)?;
                    }
                    if rows.len() >= *capacity {
                        let evict = order.remove(0);
                        rows.remove(&evict);
                    }
                    rows.insert(i, row);
                    order.push(i);
                } else if let Some(pos) = order.iter().position(|&r| r == i) {
                    order.remove(pos);
                    order.push(i);
                }
                Ok(rows.get(&i).unwrap().as_slice())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmoResult {
    pub model: SvmBinaryModel,
    /// Final multipliers for every training point, in input order.
    pub alphas: Vec<f64>,
    pub sweeps: usize,
}

struct Solver<'a> {
    cache: KernelCache<'a>,
    ys: &'a [f64],
    c: f64,
    tol: f64,
    alpha: Vec<f64>,
    errors: Vec<f64>, // E_i = g(x_i) - y_i with g including the bias
    bias: f64,
}

impl<'a> Solver<'a> {
    fn examine(&mut self, i2: usize) -> Result<bool> {
        let y2 = self.ys[i2];
        let alph2 = self.alpha[i2];
        let e2 = self.errors[i2];
        let r2 = e2 * y2;
        let violates = (r2 < -self.tol && alph2 < self.c) || (r2 > self.tol && alph2 > 0.0);
        if !violates {
            return Ok(false);
        }
        // first-order pair choice: maximize |E1 - E2|, lowest index on ties
        let mut best = usize::MAX;
        let mut best_gap = -1.0;
        for (j, &e) in self.errors.iter().enumerate() {
            if j == i2 {
                continue;
            }
            let gap = (e - e2).abs();
            if gap > best_gap {
                best_gap = gap;
                best = j;
            }
        }
        if best != usize::MAX && self.take_step(best, i2)? {
            return Ok(true);
        }
        for i1 in 0..self.ys.len() {
            if i1 == i2 || i1 == best {
                continue;
            }
            if self.take_step(i1, i2)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> Result<bool> {
        if i1 == i2 {
            return Ok(false);
        }
        let (y1, y2) = (self.ys[i1], self.ys[i2]);
        let (alph1, alph2) = (self.alpha[i1], self.alpha[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;

        let (low, high) = if s > 0.0 {
            ((alph1 + alph2 - self.c).max(0.0), (alph1 + alph2).min(self.c))
        } else {
            ((alph2 - alph1).max(0.0), (self.c + alph2 - alph1).min(self.c))
        };
        if low >= high {
            return Ok(false);
        }

        let k11 = self.cache.entry(i1, i1)?;
        let k12 = self.cache.entry(i1, i2)?;
        let k22 = self.cache.entry(i2, i2)?;
        let eta = k11 + k22 - 2.0 * k12;

        let mut a2 = if eta > 0.0 {
            (alph2 + y2 * (e1 - e2) / eta).clamp(low, high)
        } else {
            // flat or concave direction: pick the better endpoint
            let f1 = y1 * e1 - alph1 * k11 - s * alph2 * k12;
            let f2 = y2 * e2 - s * alph1 * k12 - alph2 * k22;
            let l1 = alph1 + s * (alph2 - low);
            let h1 = alph1 + s * (alph2 - high);
            let obj_low =
                l1 * f1 + low * f2 + 0.5 * l1 * l1 * k11 + 0.5 * low * low * k22 + s * low * l1 * k12;
            let obj_high = h1 * f1
                + high * f2
                + 0.5 * h1 * h1 * k11
                + 0.5 * high * high * k22
                + s * high * h1 * k12;
            if obj_low < obj_high - STEP_EPS {
                low
            } else if obj_low > obj_high + STEP_EPS {
                high
            } else {
                return Ok(false);
            }
        };
        if (a2 - alph2).abs() < STEP_EPS * (a2 + alph2 + STEP_EPS) {
            return Ok(false);
        }
        // snap bound dust to the exact bound: a multiplier separated from
        // 0 or C by rounding noise would otherwise masquerade as a free
        // vector and corrupt the bias estimate. Each snap is compensated
        // through the pair constraint so sum(alpha_i y_i) stays put.
        let snap_lo = self.c * 1e-10;
        let snap_hi = self.c * (1.0 - 1e-10);
        if a2 < snap_lo {
            a2 = 0.0;
        } else if a2 > snap_hi {
            a2 = self.c;
        }
        let mut a1 = alph1 + s * (alph2 - a2);
        if a1 < snap_lo {
            a1 = 0.0;
            a2 = alph2 + s * alph1;
        } else if a1 > snap_hi {
            a1 = self.c;
            a2 = alph2 + s * (alph1 - self.c);
        }
        let a1 = a1.clamp(0.0, self.c);
        a2 = a2.clamp(0.0, self.c);

        let d1 = y1 * (a1 - alph1);
        let d2 = y2 * (a2 - alph2);
        let b1 = -(e1 + d1 * k11 + d2 * k12);
        let b2 = -(e2 + d1 * k12 + d2 * k22);
        let new_bias = self.bias
            + if a1 > 0.0 && a1 < self.c {
                b1
            } else if a2 > 0.0 && a2 < self.c {
                b2
            } else {
                (b1 + b2) / 2.0
            };
        let delta_b = new_bias - self.bias;

        let row1 = self.cache.row(i1)?.to_vec();
        let row2 = self.cache.row(i2)?;
        for k in 0..self.errors.len() {
            self.errors[k] += d1 * row1[k] + d2 * row2[k] + delta_b;
        }
        self.bias = new_bias;
        self.alpha[i1] = a1;
        self.alpha[i2] = a2;
        Ok(true)
    }

    /// Bias recomputed from the final multipliers and exact kernel sums.
    /// Free vectors pin it (midrange keeps the worst free-vector violation
    /// within half their spread); an all-at-bound solution leaves an
    /// interval of optimal biases, of which the midpoint is taken. The
    /// running bias is only an estimate tied to the last step and can sit
    /// outside that interval.
    fn final_bias(&mut self) -> Result<f64> {
        let n = self.ys.len();
        let support: Vec<usize> = (0..n).filter(|&i| self.alpha[i] > 0.0).collect();
        let mut f = vec![0.0f64; n];
        for &j in &support {
            let coeff = self.alpha[j] * self.ys[j];
            let row = self.cache.row(j)?;
            for (fi, &k) in f.iter_mut().zip(row.iter()) {
                *fi += coeff * k;
            }
        }
        let mut free_min = f64::INFINITY;
        let mut free_max = f64::NEG_INFINITY;
        let mut lower = f64::NEG_INFINITY;
        let mut upper = f64::INFINITY;
        for i in 0..n {
            let (a, y) = (self.alpha[i], self.ys[i]);
            let r = y - f[i];
            if a > 0.0 && a < self.c {
                free_min = free_min.min(r);
                free_max = free_max.max(r);
            } else if (y > 0.0 && a == 0.0) || (y < 0.0 && a == self.c) {
                lower = lower.max(r);
            } else {
                upper = upper.min(r);
            }
        }
        Ok(if free_min.is_finite() {
            0.5 * (free_min + free_max)
        } else {
            match (lower.is_finite(), upper.is_finite()) {
                (true, true) => 0.5 * (lower + upper),
                (true, false) => lower,
                _ => upper,
            }
        })
    }
}

pub fn smo_train(
    samples: &[FeaturePair],
    ys: &[f64],
    kernel: &KernelSpec,
    params: &SmoParams,
) -> Result<SmoResult> {
    let n = samples.len();
    if ys.len() != n {
        return Err(Error::Dimension(format!(
            "{} samples but {} labels",
            n,
            ys.len()
        )));
    }
    if ys.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidArgument(
            "binary labels must be exactly +1 or -1".into(),
        ));
    }
    if !ys.iter().any(|&y| y > 0.0) || !ys.iter().any(|&y| y < 0.0) {
        return Err(Error::SingleClass);
    }
    if !(params.c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "C must be positive, got {}",
            params.c
        )));
    }
    if !(params.tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }

    let mut solver = Solver {
        cache: KernelCache::new(kernel, samples)?,
        ys,
        c: params.c,
        tol: params.tol,
        alpha: vec![0.0; n],
        errors: ys.iter().map(|&y| -y).collect(),
        bias: 0.0,
    };

    // `max_passes` counts full (examine-all) sweeps; each is followed by
    // refinement passes over the non-bound subset until that subset is
    // stable. A hard cap on total passes guarantees termination even when
    // refinement progress becomes degenerate.
    let mut examine_all = true;
    let mut sweeps = 0usize;
    let mut full_sweeps = 0usize;
    let total_cap = params.max_passes.saturating_mul(200);
    let mut converged = false;
    while full_sweeps < params.max_passes && sweeps < total_cap {
        let mut changed = 0usize;
        if examine_all {
            for i in 0..n {
                changed += solver.examine(i)? as usize;
            }
        } else {
            for i in 0..n {
                if solver.alpha[i] > 0.0 && solver.alpha[i] < params.c {
                    changed += solver.examine(i)? as usize;
                }
            }
        }
        sweeps += 1;
        if examine_all {
            full_sweeps += 1;
            if changed == 0 {
                converged = true;
                break;
            }
            examine_all = false;
        } else if changed == 0 {
            examine_all = true;
        }
    }
    if !converged {
        log::warn!("smo did not satisfy KKT within {} sweeps; returning best iterate", sweeps);
    }

    let bias = solver.final_bias()?;
    let balance: f64 = solver
        .alpha
        .iter()
        .zip(ys)
        .map(|(&a, &y)| a * y)
        .sum();
    debug_assert!(balance.abs() <= 1e-6, "equality constraint drifted: {balance}");

    let mut support_vectors = Vec::new();
    let mut alphas_signed = Vec::new();
    for (i, &a) in solver.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(samples[i].clone());
            alphas_signed.push(a * ys[i]);
        }
    }
    Ok(SmoResult {
        model: SvmBinaryModel {
            support_vectors,
            alphas_signed,
            bias,
            kernel: *kernel,
            c: params.c,
            converged,
        },
        alphas: solver.alpha,
        sweeps,
    })
}

/// Dual objective Q(alpha) = sum(alpha) - 1/2 sum_ij a_i a_j y_i y_j K_ij.
pub fn dual_objective(
    samples: &[FeaturePair],
    ys: &[f64],
    kernel: &KernelSpec,
    alphas: &[f64],
) -> Result<f64> {
    let g = gram(kernel, samples)?;
    let mut quad = 0.0;
    for i in 0..samples.len() {
        for j in 0..samples.len() {
            quad += alphas[i] * alphas[j] * ys[i] * ys[j] * g.get(i, j);
        }
    }
    Ok(alphas.iter().sum::<f64>() - 0.5 * quad)
}
