use serde::{Deserialize, Serialize};

use super::config::ModalityMode;
use super::train::{predict, Prediction};
use crate::dataio::Dataset;
use crate::detector::DetectorParams;
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Interior token-count edges; the bins are `[0,10) [10,20) [20,35) [35,60) [60,∞)`.
pub const DEFAULT_LENGTH_EDGES: [u32; 4] = [10, 20, 35, 60];

const Z95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBin {
    pub lower: u32,
    /// `None` for the open last bin.
    pub upper: Option<u32>,
    pub n: usize,
    /// Number of prediction groups (folds or seeds) with at least one sample here.
    pub groups: usize,
    pub accuracy_mean: Option<f64>,
    /// `1.96 · std / √groups`; needs two or more groups.
    pub accuracy_ci95: Option<f64>,
    pub mean_uncertainty: Option<f64>,
}

impl LengthBin {
    pub fn contains(&self, token_count: u32) -> bool {
        token_count >= self.lower && self.upper.is_none_or(|u| token_count < u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBinReport {
    pub edges: Vec<u32>,
    pub bins: Vec<LengthBin>,
}

impl LengthBinReport {
    pub fn first_nonempty(&self) -> Option<&LengthBin> {
        self.bins.iter().find(|b| b.n > 0)
    }

    pub fn last_nonempty(&self) -> Option<&LengthBin> {
        self.bins.iter().rev().find(|b| b.n > 0)
    }
}

/// Parses `"10,20,35,60"`.
pub fn parse_edges(s: &str) -> Result<Vec<u32>> {
    let edges = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|e| Error::Argument(format!("bad bin edge {t:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    validate_edges(&edges)?;
    Ok(edges)
}

fn validate_edges(edges: &[u32]) -> Result<()> {
    if edges.first() == Some(&0) {
        return Err(Error::Argument("bin edges must be > 0 (0 is implicit)".into()));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument(format!(
            "bin edges must be strictly increasing, got {edges:?}"
        )));
    }
    Ok(())
}

/// Bins predictions by token count. Each inner vector is one group (a fold or
/// a seed); per-bin accuracy is averaged over groups that have samples there.
pub fn length_bins_from_predictions(groups: &[Vec<Prediction>], edges: &[u32]) -> Result<LengthBinReport> {
    validate_edges(edges)?;
    let mut bins: Vec<LengthBin> = (0..=edges.len())
        .map(|i| LengthBin {
            lower: if i == 0 { 0 } else { edges[i - 1] },
            upper: edges.get(i).copied(),
            n: 0,
            groups: 0,
            accuracy_mean: None,
            accuracy_ci95: None,
            mean_uncertainty: None,
        })
        .collect();
    for bin in &mut bins {
        let mut accs = Vec::new();
        let (mut u_sum, mut n) = (0.0, 0usize);
        for group in groups {
            let members: Vec<&Prediction> =
                group.iter().filter(|p| bin.contains(p.token_count)).collect();
            if members.is_empty() {
                continue;
            }
            let correct = members.iter().filter(|p| p.pred == p.label).count();
            accs.push(correct as f64 / members.len() as f64);
            u_sum += members.iter().map(|p| p.uncertainty).sum::<f64>();
            n += members.len();
        }
        bin.n = n;
        bin.groups = accs.len();
        if n > 0 {
            let g = accs.len() as f64;
            let mean = accs.iter().sum::<f64>() / g;
            bin.accuracy_mean = Some(mean);
            bin.mean_uncertainty = Some(u_sum / n as f64);
            if accs.len() >= 2 {
                let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (g - 1.0);
                bin.accuracy_ci95 = Some(Z95 * var.sqrt() / g.sqrt());
            }
        }
    }
    Ok(LengthBinReport {
        edges: edges.to_vec(),
        bins,
    })
}

/// Scores each fold's test samples with that fold's model, then bins.
pub fn length_bins(
    data: &Dataset,
    folds: &[(Vec<usize>, DetectorParams)],
    mode: ModalityMode,
    edges: &[u32],
    exec: Execution,
) -> Result<LengthBinReport> {
    let groups = folds
        .iter()
        .map(|(test, params)| predict(&data.subset(test)?, params, mode, exec))
        .collect::<Result<Vec<_>>>()?;
    length_bins_from_predictions(&groups, edges)
}
