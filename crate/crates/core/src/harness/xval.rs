use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::metrics::Metrics;
use super::train::{evaluate, train, Prediction};
use crate::dataio::{split_kfold, Dataset, FoldSplit};
use crate::detector::DetectorParams;
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Mean and sample standard deviation (n − 1 denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len() as f64;
        // shifted by the first value so constant inputs give exactly zero spread
        let x0 = xs.first().copied().unwrap_or(0.0);
        let shift = xs.iter().map(|x| x - x0).sum::<f64>() / n;
        let mean = x0 + shift;
        let std = if xs.len() < 2 {
            0.0
        } else {
            let ss = xs.iter().map(|x| (x - x0 - shift).powi(2)).sum::<f64>();
            (ss / (n - 1.0)).sqrt()
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold_index: usize,
    pub n_train: usize,
    pub metrics: Metrics,
    pub mean_uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub k: usize,
    pub folds: Vec<FoldSummary>,
    pub macro_f1: Stat,
    pub macro_precision: Stat,
    pub macro_recall: Stat,
    pub accuracy: Stat,
    /// Mean `u` over every test sample of every fold.
    pub mean_uncertainty: f64,
}

/// Everything a cross-validation run produced, including per-fold models.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub split: FoldSplit,
    pub params: DetectorParams,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone)]
pub struct XvalOutcome {
    pub report: FoldReport,
    pub folds: Vec<FoldOutcome>,
}

impl XvalOutcome {
    pub fn predictions_by_fold(&self) -> Vec<Vec<Prediction>> {
        self.folds.iter().map(|f| f.predictions.clone()).collect()
    }
}

/// The configuration a given fold trains with: both the init and shuffle
/// seeds become `config.seed + fold_index`.
pub fn fold_config(config: &TrainConfig, fold_index: usize) -> TrainConfig {
    let mut c = config.clone();
    let seed = config.seed.wrapping_add(fold_index as u64);
    c.seed = seed;
    c.detector.seed = seed;
    c
}

/// Stratified k-fold cross-validation (split seeded by `config.seed`).
///
/// With `Execution::Parallel` folds run concurrently and each fold trains
/// sequentially; otherwise everything runs on the calling thread.
pub fn xval(data: &Dataset, config: &TrainConfig, k: usize) -> Result<XvalOutcome> {
    config.validate()?;
    let splits = split_kfold(data, k, config.seed)?;
    let folds = config.execution.try_map(&splits, |split| {
        let mut fc = fold_config(config, split.fold_index);
        fc.execution = Execution::Sequential;
        let train_set = data.subset(&split.train)?;
        let test_set = data.subset(&split.test)?;
        let trained = train(&train_set, &fc)?;
        let (_, predictions) =
            evaluate(&test_set, &trained.params, fc.modality_mode, Execution::Sequential)?;
        Ok::<_, Error>(FoldOutcome {
            split: split.clone(),
            params: trained.params,
            predictions,
        })
    })?;

    let summaries: Vec<FoldSummary> = folds
        .iter()
        .map(|f| {
            let y: Vec<usize> = f.predictions.iter().map(|p| p.label).collect();
            let yp: Vec<usize> = f.predictions.iter().map(|p| p.pred).collect();
            FoldSummary {
                fold_index: f.split.fold_index,
                n_train: f.split.train.len(),
                metrics: Metrics::compute(&y, &yp, data.num_classes()),
                mean_uncertainty: mean(f.predictions.iter().map(|p| p.uncertainty)),
            }
        })
        .collect();
    let stat = |f: fn(&Metrics) -> f64| {
        Stat::of(&summaries.iter().map(|s| f(&s.metrics)).collect::<Vec<_>>())
    };
    let report = FoldReport {
        k,
        macro_f1: stat(|m| m.macro_f1),
        macro_precision: stat(|m| m.macro_precision),
        macro_recall: stat(|m| m.macro_recall),
        accuracy: stat(|m| m.accuracy),
        mean_uncertainty: mean(folds.iter().flat_map(|f| &f.predictions).map(|p| p.uncertainty)),
        folds: summaries,
    };
    Ok(XvalOutcome { report, folds })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}
