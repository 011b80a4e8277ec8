use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Background-vs-rest confusion counts; background is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f_score(&self) -> f64 {
        f_score(self.precision(), self.recall())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Harmonic mean, 0 when both are 0.
pub fn f_score(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Compares predicted labels with ground truth by trajectory id.
pub fn evaluate(labels: &[(u64, bool)], truth: &[(u64, bool)]) -> Result<Confusion> {
    let gt: HashMap<u64, bool> = truth.iter().copied().collect();
    let mut c = Confusion::default();
    for (id, predicted) in labels {
        let actual = *gt
            .get(id)
            .ok_or_else(|| Error::Invalid(format!("trajectory {id} missing from ground truth")))?;
        match (predicted, actual) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Flat metrics record written as JSON.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_score: Option<f64>,
    pub path_precision: Option<f64>,
    pub path_recall: Option<f64>,
    pub path_f_score: Option<f64>,
    pub global_precision: Option<f64>,
    pub global_recall: Option<f64>,
    pub global_f_score: Option<f64>,
    pub trajectories: usize,
    pub background_labeled: usize,
    pub clips: usize,
    pub candidates: usize,
    pub edges: usize,
    pub reliable: usize,
    pub seconds_clips: f64,
    pub seconds_candidates: f64,
    pub seconds_graph: f64,
    pub seconds_labeling: f64,
    pub seconds_total: f64,
    pub flags: Vec<String>,
}

impl MetricsReport {
    pub fn set_final(&mut self, c: &Confusion) {
        self.precision = Some(c.precision());
        self.recall = Some(c.recall());
        self.f_score = Some(c.f_score());
    }

    pub fn set_path(&mut self, c: &Confusion) {
        self.path_precision = Some(c.precision());
        self.path_recall = Some(c.recall());
        self.path_f_score = Some(c.f_score());
    }

    pub fn set_global(&mut self, c: &Confusion) {
        self.global_precision = Some(c.precision());
        self.global_recall = Some(c.recall());
        self.global_f_score = Some(c.f_score());
    }
}
