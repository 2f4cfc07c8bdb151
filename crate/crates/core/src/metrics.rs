//! Differentiable distance metrics between feature vectors, with analytic
//! gradients with respect to the first argument.
//!
//! Only the first argument ever gets a gradient: the second slot is always an
//! anchor (or a class mean), and those stay fixed. Both metrics share the
//! same plug-in contract so loss code never matches on the kind.

use crate::error::{Error, Result};

/// Features below this norm cannot carry a direction; cosine refuses them.
pub const ZERO_NORM_GUARD: f64 = 1e-12;

/// Guard for the euclidean gradient at coincident points, where the true
/// derivative does not exist; dividing by the guard instead returns the zero
/// subgradient.
pub const EUCLIDEAN_GRAD_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Euclidean,
    Cosine,
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<MetricKind> {
        match s {
            "euclidean" => Ok(MetricKind::Euclidean),
            "cosine" => Ok(MetricKind::Cosine),
            other => Err(Error::InvalidArgument(format!(
                "unknown metric {other:?}, expected \"euclidean\" or \"cosine\""
            ))),
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricKind::Euclidean => write!(f, "euclidean"),
            MetricKind::Cosine => write!(f, "cosine"),
        }
    }
}

/// A metric value together with its gradient with respect to `f1`.
#[derive(Debug, Clone)]
pub struct MetricEval {
    pub value: f64,
    pub grad_f1: Vec<f64>,
}

fn check_dims(op: &'static str, f1: &[f64], f2: &[f64]) -> Result<()> {
    if f1.len() != f2.len() {
        return Err(Error::shape(
            op,
            format!("len {}", f1.len()),
            format!("len {}", f2.len()),
        ));
    }
    Ok(())
}

/// L2 distance ‖f1 − f2‖ and its gradient (f1 − f2)/‖f1 − f2‖. At coincident
/// points the guard yields the zero subgradient instead of NaN — a feature
/// sitting exactly on its anchor is the loss's fixed point, not an error.
pub fn euclidean(f1: &[f64], f2: &[f64]) -> Result<MetricEval> {
    check_dims("euclidean", f1, f2)?;
    let diff: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| a - b).collect();
    let value = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    let denom = value.max(EUCLIDEAN_GRAD_GUARD);
    let grad_f1 = diff.into_iter().map(|d| d / denom).collect();
    Ok(MetricEval { value, grad_f1 })
}

/// Cosine distance 1 − cos(f1, f2) in [0, 2] and its gradient with respect
/// to f1. A near-zero-norm input is an error rather than a guarded case: a
/// zero feature vector means the network upstream is broken.
pub fn cosine(f1: &[f64], f2: &[f64]) -> Result<MetricEval> {
    check_dims("cosine", f1, f2)?;
    let n1 = f1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n2 = f2.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n1 <= ZERO_NORM_GUARD {
        return Err(Error::DegenerateInput(format!(
            "cosine: first argument has near-zero norm {n1:e}"
        )));
    }
    if n2 <= ZERO_NORM_GUARD {
        return Err(Error::DegenerateInput(format!(
            "cosine: second argument has near-zero norm {n2:e}"
        )));
    }
    let dot: f64 = f1.iter().zip(f2).map(|(a, b)| a * b).sum();
    // Parallel vectors can round to cos slightly above 1; clamp so the value
    // honours its [0, 2] range.
    let value = (1.0 - dot / (n1 * n2)).max(0.0);
    let grad_f1 = f1
        .iter()
        .zip(f2)
        .map(|(&a, &b)| dot * a / (n1 * n1 * n1 * n2) - b / (n1 * n2))
        .collect();
    Ok(MetricEval { value, grad_f1 })
}

/// Dispatch on the metric kind.
pub fn eval(kind: MetricKind, f1: &[f64], f2: &[f64]) -> Result<MetricEval> {
    match kind {
        MetricKind::Euclidean => euclidean(f1, f2),
        MetricKind::Cosine => cosine(f1, f2),
    }
}
