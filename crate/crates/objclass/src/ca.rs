//! Cellular-automata label relaxation: a synchronous, posterior-gated
//! majority rule over the 8-neighborhood, applied after classification.
//!
//! A site flips when its current label's posterior sits below the
//! confidence ceiling and at least `majority_threshold` of its neighbors
//! share some other label; it adopts the most frequent such label (ties to
//! the smallest id). Updates read only the pre-step map, so the result is
//! independent of visit order.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::raster::{ClassId, LabelMap};
use crate::svrf::UnaryField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaRule {
    /// Neighbors sharing a label required to trigger a flip, 1..=8.
    pub majority_threshold: u8,
    /// Sites whose current-label posterior exceeds this never flip.
    pub confidence_ceiling: f64,
    pub steps: usize,
}

impl Default for CaRule {
    fn default() -> Self {
        CaRule {
            majority_threshold: 5,
            confidence_ceiling: 0.9,
            steps: 10,
        }
    }
}

impl CaRule {
    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.majority_threshold) {
            return Err(Error::InvalidArgument(format!(
                "majority_threshold must lie in [1, 8], got {}",
                self.majority_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence_ceiling) {
            return Err(Error::InvalidArgument(format!(
                "confidence_ceiling must lie in [0, 1], got {}",
                self.confidence_ceiling
            )));
        }
        Ok(())
    }
}

/// A uniform surrogate field for label maps produced without posteriors
/// (the classical baselines): every class gets probability 1/K, so the
/// confidence gate reduces to a plain majority rule whenever the ceiling
/// exceeds 1/K.
pub fn flat_unary(labels: &LabelMap) -> UnaryField {
    let classes = labels.classes();
    let k = classes.len().max(1);
    let p = (1.0 / k as f64).ln().max(crate::svrf::LOG_PROB_FLOOR_P.ln());
    UnaryField {
        width: labels.width,
        height: labels.height,
        classes,
        log_probs: vec![p; labels.width * labels.height * k],
    }
}

/// One synchronous step; returns the new map and the number of flips.
pub fn ca_step(labels: &LabelMap, unary: &UnaryField, rule: &CaRule) -> Result<(LabelMap, usize)> {
    rule.validate()?;
    if labels.width != unary.width || labels.height != unary.height {
        return Err(Error::Shape(format!(
            "labels {}x{} do not match unary field {}x{}",
            labels.width, labels.height, unary.width, unary.height
        )));
    }
    let (w, h) = (labels.width, labels.height);
    let mut out = labels.labels.clone();
    let mut flips = 0usize;
    let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let current = labels.labels[i];
            if unary.prob_of(i, current) >= rule.confidence_ceiling {
                continue;
            }
            counts.clear();
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = x as isize + dx;
                    let ny = y as isize + dy;
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                        continue;
                    }
                    let label = labels.labels[ny as usize * w + nx as usize];
                    *counts.entry(label).or_insert(0) += 1;
                }
            }
            // most frequent label != current with enough support; BTreeMap
            // order keeps the smallest id on ties
            let mut winner = None;
            let mut winner_count = 0usize;
            for (&label, &count) in &counts {
                if label != current && count >= rule.majority_threshold as usize && count > winner_count
                {
                    winner = Some(label);
                    winner_count = count;
                }
            }
            if let Some(label) = winner {
                out[i] = label;
                flips += 1;
            }
        }
    }
    Ok((LabelMap::new(w, h, out)?, flips))
}

/// Applies [`ca_step`] up to `rule.steps` times, stopping early at a fixed
/// point.
pub fn ca_run(labels: &LabelMap, unary: &UnaryField, rule: &CaRule) -> Result<LabelMap> {
    rule.validate()?;
    let mut current = labels.clone();
    for _ in 0..rule.steps {
        let (next, flips) = ca_step(&current, unary, rule)?;
        current = next;
        if flips == 0 {
            break;
        }
    }
    Ok(current)
}
