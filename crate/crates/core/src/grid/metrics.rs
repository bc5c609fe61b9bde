use serde::{Deserialize, Serialize};

use super::WorldPoint;
use crate::error::{Error, Result};

fn check_lists(preds: &[WorldPoint], golds: &[WorldPoint]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::EmptyInput("metric over zero samples".into()));
    }
    if preds.len() != golds.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} gold points",
            preds.len(),
            golds.len()
        )));
    }
    Ok(())
}

/// Mean squared Euclidean distance, world units². Summed in sample order.
pub fn compute_mse(preds: &[WorldPoint], golds: &[WorldPoint]) -> Result<f64> {
    check_lists(preds, golds)?;
    let total: f64 = preds.iter().zip(golds).map(|(p, g)| p.dist_sq(g)).sum();
    Ok(total / preds.len() as f64)
}

/// Tolerable accuracy in percent: a sample counts when both |Δx| and |Δy|
/// are strictly below `tol`.
pub fn compute_ta(preds: &[WorldPoint], golds: &[WorldPoint], tol: f64) -> Result<f64> {
    check_lists(preds, golds)?;
    if !(tol > 0.0) {
        return Err(Error::Range(format!("tolerance must be positive, got {tol}")));
    }
    let hits = preds
        .iter()
        .zip(golds)
        .filter(|(p, g)| (p.x - g.x).abs() < tol && (p.y - g.y).abs() < tol)
        .count();
    Ok(100.0 * hits as f64 / preds.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub pred_start: WorldPoint,
    pub gold_start: WorldPoint,
    pub pred_end: WorldPoint,
    pub gold_end: Option<WorldPoint>,
}

/// Aggregate metrics plus the per-sample lists they were computed from.
/// End-location metrics cover only samples with end supervision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub tol: f64,
    pub mse_start: f64,
    pub ta_start: f64,
    pub n_end: usize,
    pub mse_end: Option<f64>,
    pub ta_end: Option<f64>,
    pub samples: Vec<SampleOutcome>,
}

impl MetricsReport {
    pub fn compute(samples: Vec<SampleOutcome>, tol: f64) -> Result<Self> {
        let ps: Vec<WorldPoint> = samples.iter().map(|s| s.pred_start).collect();
        let gs: Vec<WorldPoint> = samples.iter().map(|s| s.gold_start).collect();
        let mse_start = compute_mse(&ps, &gs)?;
        let ta_start = compute_ta(&ps, &gs, tol)?;
        let (pe, ge): (Vec<WorldPoint>, Vec<WorldPoint>) = samples
            .iter()
            .filter_map(|s| s.gold_end.map(|g| (s.pred_end, g)))
            .unzip();
        let (mse_end, ta_end) = if pe.is_empty() {
            (None, None)
        } else {
            (Some(compute_mse(&pe, &ge)?), Some(compute_ta(&pe, &ge, tol)?))
        };
        Ok(MetricsReport {
            n: samples.len(),
            tol,
            mse_start,
            ta_start,
            n_end: pe.len(),
            mse_end,
            ta_end,
            samples,
        })
    }
}
