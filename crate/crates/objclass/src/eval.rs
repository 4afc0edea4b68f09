//! Accuracy assessment: confusion matrix, overall accuracy, kappa
//! coefficient, per-class producer/user accuracies and areal extents.
//!
//! Sites whose reference or predicted label is 0 are excluded from the
//! matrix but counted as `ignored`, so unclassified output (the
//! parallelepiped rule) stays visible in reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ClassId, LabelMap};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Ordered class ids; rows are reference, columns are predicted.
    pub classes: Vec<ClassId>,
    /// Row-major K x K counts.
    pub counts: Vec<u64>,
    /// Sites excluded because reference or prediction was 0.
    pub ignored: u64,
}

impl ConfusionMatrix {
    pub fn k(&self) -> usize {
        self.classes.len()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.classes.len() + col]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, row: usize) -> u64 {
        (0..self.k()).map(|c| self.get(row, c)).sum()
    }

    pub fn col_sum(&self, col: usize) -> u64 {
        (0..self.k()).map(|r| self.get(r, col)).sum()
    }

    /// Builds a matrix from raw counts; intended for fixtures and tests.
    pub fn from_counts(classes: Vec<ClassId>, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes.len() * classes.len() {
            return Err(Error::Shape(format!(
                "{} counts for {} classes",
                counts.len(),
                classes.len()
            )));
        }
        Ok(ConfusionMatrix {
            classes,
            counts,
            ignored: 0,
        })
    }
}

/// Cross-tabulates reference against predicted labels.
pub fn confusion(reference: &LabelMap, predicted: &LabelMap) -> Result<ConfusionMatrix> {
    if reference.width != predicted.width || reference.height != predicted.height {
        return Err(Error::Shape(format!(
            "reference {}x{} vs predicted {}x{}",
            reference.width, reference.height, predicted.width, predicted.height
        )));
    }
    let mut classes: Vec<ClassId> = reference
        .labels
        .iter()
        .chain(predicted.labels.iter())
        .copied()
        .filter(|&c| c != 0)
        .collect();
    classes.sort_unstable();
    classes.dedup();
    let k = classes.len();
    let index_of = |c: ClassId| classes.binary_search(&c).unwrap();

    let mut counts = vec![0u64; k * k];
    let mut ignored = 0u64;
    for (&r, &p) in reference.labels.iter().zip(&predicted.labels) {
        if r == 0 || p == 0 {
            ignored += 1;
        } else {
            counts[index_of(r) * k + index_of(p)] += 1;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::DegenerateMatrix("zero non-ignored sites".into()));
    }
    Ok(ConfusionMatrix {
        classes,
        counts,
        ignored,
    })
}

/// Trace over total.
pub fn overall_accuracy(cm: &ConfusionMatrix) -> f64 {
    cm.trace() as f64 / cm.total() as f64
}

/// Cohen's kappa: (p0 - pe) / (1 - pe) with pe from the marginals.
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.total() as f64;
    let p0 = cm.trace() as f64 / n;
    let pe: f64 = (0..cm.k())
        .map(|c| cm.row_sum(c) as f64 * cm.col_sum(c) as f64)
        .sum::<f64>()
        / (n * n);
    if pe >= 1.0 {
        return if p0 >= 1.0 {
            Ok(1.0)
        } else {
            Err(Error::DegenerateMatrix(
                "chance agreement is 1 with imperfect observed agreement".into(),
            ))
        };
    }
    Ok((p0 - pe) / (1.0 - pe))
}

/// Diagonal over row sums (probability a reference pixel was found).
pub fn producer_accuracy(cm: &ConfusionMatrix) -> Vec<f64> {
    (0..cm.k())
        .map(|i| {
            let row = cm.row_sum(i);
            if row == 0 {
                0.0
            } else {
                cm.get(i, i) as f64 / row as f64
            }
        })
        .collect()
}

/// Diagonal over column sums (probability a predicted pixel is right).
pub fn user_accuracy(cm: &ConfusionMatrix) -> Vec<f64> {
    (0..cm.k())
        .map(|i| {
            let col = cm.col_sum(i);
            if col == 0 {
                0.0
            } else {
                cm.get(i, i) as f64 / col as f64
            }
        })
        .collect()
}

/// Area covered by a class in square kilometers.
pub fn areal_extent(labels: &LabelMap, resolution_m: f64, class: ClassId) -> f64 {
    let count = labels.labels.iter().filter(|&&l| l == class).count();
    count as f64 * resolution_m * resolution_m / 1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: ClassId,
    pub producer_accuracy: f64,
    pub user_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub areal_extent_km2: Option<f64>,
}

/// Accuracy report, serialized as `report_v1` JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub method: String,
    pub classes: Vec<ClassId>,
    pub counts: Vec<u64>,
    pub ignored: u64,
    pub overall_accuracy: f64,
    pub kappa: f64,
    pub per_class: Vec<ClassReport>,
}

/// Builds a report from a matrix; areal extents are attached per class
/// when the predicted map and its resolution are supplied.
pub fn report(
    cm: &ConfusionMatrix,
    method: &str,
    areal: Option<(&LabelMap, f64)>,
) -> Result<Report> {
    let producer = producer_accuracy(cm);
    let user = user_accuracy(cm);
    let per_class = cm
        .classes
        .iter()
        .enumerate()
        .map(|(i, &class)| ClassReport {
            class,
            producer_accuracy: producer[i],
            user_accuracy: user[i],
            areal_extent_km2: areal.map(|(labels, res)| areal_extent(labels, res, class)),
        })
        .collect();
    Ok(Report {
        schema: "report_v1".to_string(),
        method: method.to_string(),
        classes: cm.classes.clone(),
        counts: cm.counts.clone(),
        ignored: cm.ignored,
        overall_accuracy: overall_accuracy(cm),
        kappa: kappa(cm)?,
        per_class,
    })
}

/// One table row: kappa to two decimals, overall accuracy in percent to
/// two decimals, pipe-separated.
pub fn format_metrics_row(kappa: f64, overall_accuracy: f64) -> String {
    format!("{:.2} | {:.2}", kappa, overall_accuracy * 100.0)
}

/// Text table with one row per method, mirroring the usual accuracy-report
/// layout. Rows with `None` metrics render as "failed".
pub fn format_method_table(rows: &[(String, Option<(f64, f64)>)]) -> String {
    let name_width = rows
        .iter()
        .map(|(name, _)| name.len())
        .max()
        .unwrap_or(10)
        .max("Methodology".len());
    let mut out = String::new();
    out.push_str(&format!(
        "{:<name_width$} | Kappa statistics | Overall Accuracy (%)\n",
        "Methodology"
    ));
    out.push_str(&format!(
        "{:-<name_width$}-+------------------+---------------------\n",
        ""
    ));
    for (name, metrics) in rows {
        match metrics {
            Some((kappa, oa)) => out.push_str(&format!(
                "{:<name_width$} | {:>16.2} | {:>20.2}\n",
                name,
                kappa,
                oa * 100.0
            )),
            None => out.push_str(&format!(
                "{:<name_width$} | {:>16} | {:>20}\n",
                name, "failed", "failed"
            )),
        }
    }
    out
}
