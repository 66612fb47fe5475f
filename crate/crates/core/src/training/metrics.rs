use serde::{Deserialize, Serialize};

use crate::dataset::Label;

/// Binary confusion counts with Fake as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn record(&mut self, actual: Label, predicted: Label) {
        match (actual, predicted) {
            (Label::Fake, Label::Fake) => self.tp += 1,
            (Label::True, Label::Fake) => self.fp += 1,
            (Label::True, Label::True) => self.tn += 1,
            (Label::Fake, Label::True) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassScores {
    fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

/// Accuracy plus macro precision/recall/F1 over {True, Fake}.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fake: ClassScores,
    #[serde(rename = "true")]
    pub true_: ClassScores,
    pub confusion: Confusion,
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Self {
        let fake = ClassScores::from_counts(c.tp, c.fp, c.fn_);
        let true_ = ClassScores::from_counts(c.tn, c.fn_, c.fp);
        Self {
            accuracy: ratio(c.tp + c.tn, c.total()),
            precision: (fake.precision + true_.precision) / 2.0,
            recall: (fake.recall + true_.recall) / 2.0,
            f1: (fake.f1 + true_.f1) / 2.0,
            fake,
            true_,
            confusion: c,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut c = Confusion::default();
        for (actual, predicted) in pairs {
            c.record(actual, predicted);
        }
        Self::from_confusion(c)
    }
}

/// The 0.5 decision rule.
pub fn verdict(yhat: f64) -> Label {
    if yhat >= 0.5 {
        Label::Fake
    } else {
        Label::True
    }
}
