use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ClassCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2PR / (P + R)`, zero when `P + R = 0`.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Macro-averaged classification metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassCounts>,
    pub n: usize,
}

impl Metrics {
    pub fn compute(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Metrics {
        assert_eq!(y_true.len(), y_pred.len(), "prediction/label length mismatch");
        let mut per_class = vec![ClassCounts::default(); num_classes];
        let mut correct = 0;
        for (&t, &p) in y_true.iter().zip(y_pred) {
            if t == p {
                per_class[t].tp += 1;
                correct += 1;
            } else {
                per_class[p].fp += 1;
                per_class[t].fn_ += 1;
            }
        }
        let k = num_classes as f64;
        let mean = |f: fn(&ClassCounts) -> f64| per_class.iter().map(f).sum::<f64>() / k;
        Metrics {
            macro_f1: mean(ClassCounts::f1),
            macro_precision: mean(ClassCounts::precision),
            macro_recall: mean(ClassCounts::recall),
            accuracy: ratio(correct, y_true.len()),
            n: y_true.len(),
            per_class,
        }
    }
}
