//! Subjective-logic opinions and the evidential ("trustworthy") loss.
//!
//! Evidence `e ≥ 0` parameterizes a Dirichlet with `α = e + 1`. With strength
//! `S = Σ α_k`, belief `b_k = e_k / S` and uncertainty `u = K / S` satisfy
//! `u + Σ b_k = 1`. The loss is the expected cross-entropy under that
//! Dirichlet, `ψ(S) - ψ(α_y)`, plus an annealed KL divergence from the uniform
//! Dirichlet after removing the true-class evidence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndgrad::{digamma, lgamma, log_sum_exp, Graph, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Opinion {
    pub evidence: Vec<f64>,
    pub alpha: Vec<f64>,
    pub strength: f64,
    pub belief: Vec<f64>,
    pub uncertainty: f64,
    pub probability: Vec<f64>,
}

impl Opinion {
    pub fn num_classes(&self) -> usize {
        self.alpha.len()
    }

    /// `argmax p`, ties broken toward the lower class index.
    pub fn predicted_class(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probability.iter().enumerate() {
            if p > self.probability[best] {
                best = k;
            }
        }
        best
    }
}

pub fn to_opinion(evidence: &[f64]) -> Result<Opinion> {
    let k = evidence.len();
    if k < 2 {
        return Err(Error::Argument(format!("need at least 2 classes, got {k}")));
    }
    if let Some(&bad) = evidence.iter().find(|&&e| !(e >= 0.0 && e.is_finite())) {
        return Err(Error::Domain {
            func: "to_opinion",
            value: bad,
            expected: "finite evidence >= 0",
        });
    }
    let alpha: Vec<f64> = evidence.iter().map(|e| e + 1.0).collect();
    let strength: f64 = alpha.iter().sum();
    Ok(Opinion {
        evidence: evidence.to_vec(),
        belief: evidence.iter().map(|e| e / strength).collect(),
        uncertainty: k as f64 / strength,
        probability: alpha.iter().map(|a| a / strength).collect(),
        alpha,
        strength,
    })
}

/// Validates a one-hot target and returns the hot index.
pub fn one_hot_index(y: &[f64]) -> Result<usize> {
    let mut hot = None;
    for (k, &v) in y.iter().enumerate() {
        if v == 1.0 && hot.is_none() {
            hot = Some(k);
        } else if v != 0.0 {
            return Err(Error::Argument(format!("target {y:?} is not one-hot")));
        }
    }
    hot.ok_or_else(|| Error::Argument(format!("target {y:?} is not one-hot")))
}

pub fn one_hot(label: usize, num_classes: usize) -> Vec<f64> {
    let mut y = vec![0.0; num_classes];
    y[label] = 1.0;
    y
}

fn check_len(alpha: &[f64], y: &[f64]) -> Result<()> {
    if alpha.len() != y.len() {
        return Err(Error::shape("loss", &[alpha.len()], &[y.len()]));
    }
    Ok(())
}

/// `ψ(S) - ψ(α_y)`.
pub fn loss_digamma(alpha: &[f64], y: &[f64]) -> Result<f64> {
    check_len(alpha, y)?;
    let t = one_hot_index(y)?;
    let s: f64 = alpha.iter().sum();
    Ok(digamma(s)? - digamma(alpha[t])?)
}

/// `α̃ = y + (1 - y) ⊙ α`: true-class entry forced to 1.
pub fn adjusted_alpha(alpha: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_len(alpha, y)?;
    one_hot_index(y)?;
    Ok(alpha
        .iter()
        .zip(y)
        .map(|(a, yk)| yk + (1.0 - yk) * a)
        .collect())
}

/// `KL[Dir(α̃) ‖ Dir(1)]` in closed form.
pub fn kl_uniform_dirichlet(alpha_tilde: &[f64]) -> Result<f64> {
    if let Some(&bad) = alpha_tilde.iter().find(|&&a| a.is_nan() || a < 1.0) {
        return Err(Error::Domain {
            func: "kl_uniform_dirichlet",
            value: bad,
            expected: "alpha >= 1",
        });
    }
    let k = alpha_tilde.len() as f64;
    let s: f64 = alpha_tilde.iter().sum();
    let psi_s = digamma(s)?;
    let mut kl = lgamma(s)? - lgamma(k)?;
    for &a in alpha_tilde {
        kl += -lgamma(a)? + (a - 1.0) * (digamma(a)? - psi_s);
    }
    // Clamp rounding noise at the identical-distribution point.
    Ok(kl.max(0.0))
}

/// `min(1, c / (0.5 C))`.
pub fn annealing(epoch: usize, total_epochs: usize) -> f64 {
    if total_epochs == 0 {
        return 1.0;
    }
    (epoch as f64 / (0.5 * total_epochs as f64)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub digamma_term: f64,
    pub kl_term: f64,
    pub lambda: f64,
    pub total: f64,
}

pub fn loss_trust(evidence: &[f64], y: &[f64], epoch: usize, total_epochs: usize) -> Result<LossBreakdown> {
    loss_trust_with_lambda(evidence, y, annealing(epoch, total_epochs))
}

pub fn loss_trust_with_lambda(evidence: &[f64], y: &[f64], lambda: f64) -> Result<LossBreakdown> {
    let op = to_opinion(evidence)?;
    let digamma_term = loss_digamma(&op.alpha, y)?;
    let kl_term = kl_uniform_dirichlet(&adjusted_alpha(&op.alpha, y)?)?;
    Ok(LossBreakdown {
        digamma_term,
        kl_term,
        lambda,
        total: digamma_term + lambda * kl_term,
    })
}

/// Softmax cross-entropy of raw logits.
pub fn loss_cross_entropy(logits: &[f64], y: &[f64]) -> Result<f64> {
    check_len(logits, y)?;
    let t = one_hot_index(y)?;
    Ok(log_sum_exp(logits) - logits[t])
}

/// Graph nodes of the evidential loss for one sample.
#[derive(Debug, Clone, Copy)]
pub struct TrustVars {
    pub digamma_term: Var,
    pub kl_term: Var,
    pub total: Var,
}

/// Tape version of [`loss_trust_with_lambda`]; `evidence` is a `1 × K` node.
pub fn loss_trust_graph(g: &mut Graph<'_>, evidence: Var, y: &[f64], lambda: f64) -> Result<TrustVars> {
    let k = y.len();
    if g.value(evidence).len() != k {
        return Err(Error::shape("loss_trust", g.value(evidence).shape(), &[1, k]));
    }
    one_hot_index(y)?;
    let y_var = g.constant(Tensor::row(y.to_vec()));
    let not_y = g.constant(Tensor::row(y.iter().map(|v| 1.0 - v).collect()));

    let alpha = g.add_scalar(evidence, 1.0)?;
    let s = g.sum(alpha);
    let psi_s = g.digamma(s)?;
    let psi_alpha = g.digamma(alpha)?;
    let picked = g.mul(psi_alpha, y_var)?;
    let picked = g.sum(picked);
    let digamma_term = g.sub(psi_s, picked)?;

    let masked = g.mul(not_y, alpha)?;
    let alpha_t = g.add(y_var, masked)?;
    let s_t = g.sum(alpha_t);
    let lg_s = g.lgamma(s_t)?;
    let lg_a = g.lgamma(alpha_t)?;
    let lg_a = g.sum(lg_a);
    let psi_at = g.digamma(alpha_t)?;
    let psi_st = g.digamma(s_t)?;
    let diff = g.sub(psi_at, psi_st)?;
    let am1 = g.add_scalar(alpha_t, -1.0)?;
    let cross = g.mul(am1, diff)?;
    let cross = g.sum(cross);
    let kl = g.sub(lg_s, lg_a)?;
    let kl = g.add_scalar(kl, -lgamma(k as f64)?)?;
    let kl_term = g.add(kl, cross)?;

    let weighted = g.scale(kl_term, lambda)?;
    let total = g.add(digamma_term, weighted)?;
    Ok(TrustVars {
        digamma_term,
        kl_term,
        total,
    })
}

/// Tape version of [`loss_cross_entropy`]; `logits` is a `1 × K` node.
pub fn loss_cross_entropy_graph(g: &mut Graph<'_>, logits: Var, y: &[f64]) -> Result<Var> {
    if g.value(logits).len() != y.len() {
        return Err(Error::shape("loss_cross_entropy", g.value(logits).shape(), &[1, y.len()]));
    }
    one_hot_index(y)?;
    let y_var = g.constant(Tensor::row(y.to_vec()));
    let lse = g.log_sum_exp(logits);
    let picked = g.mul(logits, y_var)?;
    let picked = g.sum(picked);
    g.sub(lse, picked)
}
