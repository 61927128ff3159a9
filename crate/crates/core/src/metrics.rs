use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scoring::{reject_filter, PredictionResult};
use crate::task::{Metric, TaskSpec};

pub fn accuracy(predictions: &[usize], golds: &[usize]) -> Result<f64> {
    check_len(predictions, golds)?;
    if golds.is_empty() {
        return Ok(0.0);
    }
    let correct = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / golds.len() as f64)
}

/// F1 of the positive class; 0 when precision + recall is 0.
pub fn binary_f1(predictions: &[usize], golds: &[usize], positive: usize) -> Result<f64> {
    check_len(predictions, golds)?;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    for (&p, &g) in predictions.iter().zip(golds) {
        match (p == positive, g == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
    if precision + recall == 0.0 {
        Ok(0.0)
    } else {
        Ok(2.0 * precision * recall / (precision + recall))
    }
}

pub fn evaluate(predictions: &[usize], golds: &[usize], metric: Metric, positive: Option<usize>) -> Result<f64> {
    match metric {
        Metric::Accuracy => accuracy(predictions, golds),
        Metric::BinaryF1 => {
            let positive = positive.ok_or_else(|| Error::Config("binary-f1 needs a positive label".into()))?;
            binary_f1(predictions, golds, positive)
        }
    }
}

fn check_len(predictions: &[usize], golds: &[usize]) -> Result<()> {
    if predictions.len() != golds.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            golds.len()
        )));
    }
    Ok(())
}

/// Overall metric plus the unanimous/disagreed breakdown: O.M, U.R, U.M, D.M.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectReport {
    pub overall: f64,
    pub unanimous_ratio: f64,
    pub unanimous_count: usize,
    pub total: usize,
    /// `None` when no example is unanimous.
    pub unanimous_metric: Option<f64>,
    /// `None` when no example is disagreed.
    pub disagreed_metric: Option<f64>,
}

pub fn reject_report<T: Scalar>(results: &[PredictionResult<T>], golds: &[usize], spec: &TaskSpec) -> Result<RejectReport> {
    let predictions: Vec<usize> = results.iter().map(|r| r.predicted).collect();
    let overall = evaluate(&predictions, golds, spec.metric, spec.positive_label)?;
    let part = reject_filter(results);
    let subset = |idx: &[usize]| -> Result<Option<f64>> {
        if idx.is_empty() {
            return Ok(None);
        }
        let p: Vec<usize> = idx.iter().map(|&i| predictions[i]).collect();
        let g: Vec<usize> = idx.iter().map(|&i| golds[i]).collect();
        evaluate(&p, &g, spec.metric, spec.positive_label).map(Some)
    };
    Ok(RejectReport {
        overall,
        unanimous_ratio: part.unanimous_ratio(),
        unanimous_count: part.unanimous.len(),
        total: results.len(),
        unanimous_metric: subset(&part.unanimous)?,
        disagreed_metric: subset(&part.disagreed)?,
    })
}
