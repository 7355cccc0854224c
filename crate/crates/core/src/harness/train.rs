use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::config::{LossMode, ModalityMode, TrainConfig};
use super::metrics::Metrics;
use crate::dataio::{Dataset, SampleRecord};
use crate::detector::{forward, forward_graph, DetectorParams, ParamVars};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ndgrad::{Graph, Tensor};
use crate::trust::{
    annealing, loss_cross_entropy_graph, loss_trust_graph, loss_trust_with_lambda, one_hot,
    to_opinion,
};

/// Added to the training seed for the batch-shuffling stream so it never
/// shares a generator state with parameter initialization.
const SHUFFLE_STREAM: u64 = 0x5DEE_CE66_D1CE_5EED;

/// Batch-mean loss terms for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda: f64,
    /// Mean of the digamma term, tracked in both loss modes.
    pub digamma_term: f64,
    pub kl_term: f64,
    /// Mean of the objective actually optimized (trust or cross-entropy).
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: DetectorParams,
    pub history: Vec<EpochRecord>,
    pub steps: u64,
}

/// Embeddings of one record as `1 × d` rows, with the excluded modality zeroed.
pub fn model_inputs(record: &SampleRecord, mode: ModalityMode) -> (Vec<f64>, Vec<f64>) {
    let widen = |xs: &[f32], keep: bool| -> Vec<f64> {
        if keep {
            xs.iter().map(|&x| x as f64).collect()
        } else {
            vec![0.0; xs.len()]
        }
    };
    (
        widen(&record.text_emb, mode.uses_text()),
        widen(&record.image_emb, mode.uses_image()),
    )
}

struct SampleGrad {
    grads: Vec<Tensor>,
    digamma: f64,
    kl: f64,
    total: f64,
}

fn sample_gradient(
    params: &DetectorParams,
    record: &SampleRecord,
    config: &TrainConfig,
    lambda: f64,
) -> Result<SampleGrad> {
    let k = params.config.num_classes;
    let y = one_hot(record.label, k);
    let (xt, xi) = model_inputs(record, config.modality_mode);
    let mut g = Graph::new();
    let pv = ParamVars::bind(&mut g, params);
    let out = forward_graph(&mut g, &pv, Tensor::row(xt), Tensor::row(xi))?;
    let (root, digamma, kl) = match config.loss_mode {
        LossMode::Trust => {
            let tv = loss_trust_graph(&mut g, out.evidence, &y, lambda)?;
            (
                tv.total,
                g.value(tv.digamma_term).item(),
                g.value(tv.kl_term).item(),
            )
        }
        LossMode::Ce => {
            let root = loss_cross_entropy_graph(&mut g, out.logits, &y)?;
            let diag = loss_trust_with_lambda(g.value(out.evidence).data(), &y, lambda)?;
            (root, diag.digamma_term, diag.kl_term)
        }
    };
    let total = g.value(root).item();
    let mut grads = g.backward(root)?;
    Ok(SampleGrad {
        grads: pv.vars.iter().map(|&v| grads.take(v)).collect(),
        digamma,
        kl,
        total,
    })
}

/// Mini-batch Adam training from a fresh seeded initialization.
///
/// Initialization uses `config.detector.seed`; batch order uses `config.seed`.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    check_dims(data, config.detector.text_dim, config.detector.image_dim)?;
    if data.num_classes() != config.detector.num_classes {
        return Err(Error::Validation(format!(
            "dataset has {} classes but the detector expects {}",
            data.num_classes(),
            config.detector.num_classes
        )));
    }
    if data.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }

    let mut params = DetectorParams::init(&config.detector)?;
    let mut state = AdamState::new(params.tensors());
    let adam = AdamConfig {
        lr: config.lr,
        beta1: config.adam_beta1,
        beta2: config.adam_beta2,
        eps: config.adam_eps,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(SHUFFLE_STREAM));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0u64;

    for epoch in 0..config.epochs {
        let lambda = annealing(epoch, config.epochs);
        order.shuffle(&mut rng);
        let (mut sum_dg, mut sum_kl, mut sum_total) = (0.0, 0.0, 0.0);

        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let samples = config
                .execution
                .try_map(idx, |&i| sample_gradient(&params, &data.records()[i], config, lambda))
                .map_err(|e| match e {
                    Error::Domain { .. } | Error::Evaluation(_) => Error::NonFinite {
                        epoch,
                        batch,
                        detail: e.to_string(),
                    },
                    other => other,
                })?;
            let mut acc: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
            let mut batch_total = 0.0;
            for s in &samples {
                for (a, gr) in acc.iter_mut().zip(&s.grads) {
                    a.add_assign(gr)?;
                }
                batch_total += s.total;
                sum_dg += s.digamma;
                sum_kl += s.kl;
            }
            let inv = 1.0 / samples.len() as f64;
            acc.iter_mut().for_each(|a| a.scale_in_place(inv));
            if !batch_total.is_finite() || !acc.iter().all(Tensor::all_finite) {
                return Err(Error::NonFinite {
                    epoch,
                    batch,
                    detail: format!("batch loss = {}", batch_total * inv),
                });
            }
            sum_total += batch_total;
            step += 1;
            adam_step(&mut params.tensors_mut(), &acc, &mut state, step, &adam)?;
        }

        let n = data.len() as f64;
        history.push(EpochRecord {
            epoch,
            lambda,
            digamma_term: sum_dg / n,
            kl_term: sum_kl / n,
            total: sum_total / n,
        });
    }

    if !params.all_finite() {
        return Err(Error::NonFinite {
            epoch: config.epochs - 1,
            batch: 0,
            detail: "parameters became non-finite".into(),
        });
    }
    Ok(TrainOutcome {
        params,
        history,
        steps: step,
    })
}

fn check_dims(data: &Dataset, text_dim: usize, image_dim: usize) -> Result<()> {
    if data.text_dim() != text_dim || data.image_dim() != image_dim {
        return Err(Error::Validation(format!(
            "dataset dims ({}, {}) do not match model dims ({text_dim}, {image_dim})",
            data.text_dim(),
            data.image_dim()
        )));
    }
    Ok(())
}

/// One scored sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: usize,
    pub pred: usize,
    pub uncertainty: f64,
    pub probability: Vec<f64>,
    pub token_count: u32,
}

/// Scores every sample; prediction is the argmax of the opinion's probability.
pub fn predict(
    data: &Dataset,
    params: &DetectorParams,
    mode: ModalityMode,
    exec: Execution,
) -> Result<Vec<Prediction>> {
    check_dims(data, params.config.text_dim, params.config.image_dim)?;
    exec.try_map(data.records(), |r| {
        let (xt, xi) = model_inputs(r, mode);
        let out = forward(&xt, &xi, params)?;
        let op = to_opinion(&out.evidence)?;
        Ok(Prediction {
            id: r.id.clone(),
            label: r.label,
            pred: op.predicted_class(),
            uncertainty: op.uncertainty,
            probability: op.probability,
            token_count: r.token_count,
        })
    })
}

pub fn evaluate(
    data: &Dataset,
    params: &DetectorParams,
    mode: ModalityMode,
    exec: Execution,
) -> Result<(Metrics, Vec<Prediction>)> {
    if data.num_classes() != params.config.num_classes {
        return Err(Error::Validation(format!(
            "dataset has {} classes but the model predicts {}",
            data.num_classes(),
            params.config.num_classes
        )));
    }
    let preds = predict(data, params, mode, exec)?;
    let y_true: Vec<usize> = preds.iter().map(|p| p.label).collect();
    let y_pred: Vec<usize> = preds.iter().map(|p| p.pred).collect();
    Ok((Metrics::compute(&y_true, &y_pred, data.num_classes()), preds))
}
