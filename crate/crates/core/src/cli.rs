//! Command-line front end for the `tvhsd` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataio::{self, gen_synthetic, Dataset, SyntheticSpec};
use crate::detector::{load_model, save_model, DetectorConfig};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::harness::{
    evaluate, length_bins_from_predictions, parse_edges, predict, to_report_json, train, xval,
    FoldReport, LengthBinReport, LossMode, Metrics, ModalityMode, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(name = "tvhsd", version, about = "Evidential multimodal hate-speech detector")]
pub struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic Gaussian-mixture dataset container.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 32)]
        text_dim: usize,
        #[arg(long, default_value_t = 32)]
        image_dim: usize,
        #[arg(long, default_value_t = 3.0)]
        separation: f64,
        #[arg(long, default_value_t = 0.0)]
        length_noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train on a whole dataset and save model.json.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_loss)]
        loss: Option<LossMode>,
        #[arg(long, value_parser = parse_modality)]
        modality: Option<ModalityMode>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a dataset with a saved model.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Interior token-count edges, e.g. "10,20,35,60".
        #[arg(long)]
        length_bins: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stratified k-fold cross-validation.
    Xval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        length_bins: Option<String>,
    },
    /// Per-sample predictions as CSV.
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_loss(s: &str) -> std::result::Result<LossMode, String> {
    match s {
        "trust" => Ok(LossMode::Trust),
        "ce" => Ok(LossMode::Ce),
        _ => Err(format!("expected trust|ce, got {s:?}")),
    }
}

fn parse_modality(s: &str) -> std::result::Result<ModalityMode, String> {
    match s {
        "both" => Ok(ModalityMode::Both),
        "text_only" => Ok(ModalityMode::TextOnly),
        "image_only" => Ok(ModalityMode::ImageOnly),
        _ => Err(format!("expected both|text_only|image_only, got {s:?}")),
    }
}

/// Detector fields of a config file; dims left out are taken from the dataset.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectorFile {
    text_dim: Option<usize>,
    image_dim: Option<usize>,
    align_dim: Option<usize>,
    state_size: Option<usize>,
    se_reduction: Option<usize>,
    num_classes: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    lr: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    adam_beta1: Option<f64>,
    adam_beta2: Option<f64>,
    adam_eps: Option<f64>,
    loss_mode: Option<LossMode>,
    modality_mode: Option<ModalityMode>,
    seed: Option<u64>,
    #[serde(default)]
    detector: DetectorFile,
}

/// Reads a JSON training config and fills the detector dims from `data`.
///
/// `seed` overrides the file's top-level seed; the detector init seed follows
/// it unless the file pins `detector.seed`.
pub fn load_config(path: &Path, data: &Dataset, seed: Option<u64>) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ConfigFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let fill = |given: Option<usize>, actual: usize, name: &str| -> Result<usize> {
        match given {
            Some(v) if v != actual => Err(Error::Validation(format!(
                "config {name} = {v} but the dataset has {actual}"
            ))),
            _ => Ok(actual),
        }
    };
    let d = &file.detector;
    let mut det = DetectorConfig::new(
        fill(d.text_dim, data.text_dim(), "text_dim")?,
        fill(d.image_dim, data.image_dim(), "image_dim")?,
        fill(d.num_classes, data.num_classes(), "num_classes")?,
    );
    if let Some(v) = d.align_dim {
        det.align_dim = v;
    }
    if let Some(v) = d.state_size {
        det.state_size = v;
    }
    if let Some(v) = d.se_reduction {
        det.se_reduction = v;
    }
    let mut cfg = TrainConfig::new(det);
    macro_rules! set {
        ($($f:ident),*) => {$( if let Some(v) = file.$f { cfg.$f = v; } )*};
    }
    set!(lr, epochs, batch_size, adam_beta1, adam_beta2, adam_eps, loss_mode, modality_mode, seed);
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.detector.seed = d.seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub metrics: Metrics,
    pub mean_uncertainty: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length_bins: Option<LengthBinReport>,
}

#[derive(Debug, Serialize)]
pub struct XvalReport {
    #[serde(flatten)]
    pub folds: FoldReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length_bins: Option<LengthBinReport>,
}

pub fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::GenSynth {
            out,
            samples,
            classes,
            text_dim,
            image_dim,
            separation,
            length_noise,
            seed,
        } => {
            let spec = SyntheticSpec {
                num_samples: samples,
                text_dim,
                image_dim,
                num_classes: classes,
                separation,
                length_noise,
                seed,
            };
            let data = gen_synthetic(&spec)?;
            dataio::save(&data, &out)?;
            eprintln!("wrote {} samples to {}", data.len(), out.display());
        }
        Command::Train {
            data,
            config,
            out,
            loss,
            modality,
            seed,
        } => {
            let data = dataio::load(&data)?;
            let mut cfg = load_config(&config, &data, seed)?;
            if let Some(l) = loss {
                cfg.loss_mode = l;
            }
            if let Some(m) = modality {
                cfg.modality_mode = m;
            }
            cfg.execution = exec;
            let outcome = train(&data, &cfg)?;
            save_model(&out, &outcome.params, cfg.modality_mode)?;
            if let Some(last) = outcome.history.last() {
                eprintln!(
                    "trained {} steps; final epoch loss {:.6} (lambda {:.4})",
                    outcome.steps, last.total, last.lambda
                );
            }
        }
        Command::Eval {
            data,
            model,
            length_bins,
            out,
        } => {
            let edges = length_bins.as_deref().map(parse_edges).transpose()?;
            let data = dataio::load(&data)?;
            let (params, mode) = load_model(&model)?;
            let (metrics, preds) = evaluate(&data, &params, mode, exec)?;
            let mean_u = preds.iter().map(|p| p.uncertainty).sum::<f64>() / preds.len() as f64;
            let bins = edges
                .map(|e| length_bins_from_predictions(&[preds], &e))
                .transpose()?;
            let report = EvalReport {
                metrics,
                mean_uncertainty: mean_u,
                length_bins: bins,
            };
            emit(&to_report_json(&report)?, out.as_deref())?;
        }
        Command::Xval {
            data,
            config,
            folds,
            seed,
            out,
            length_bins,
        } => {
            let edges = length_bins.as_deref().map(parse_edges).transpose()?;
            let data = dataio::load(&data)?;
            let mut cfg = load_config(&config, &data, seed)?;
            cfg.execution = exec;
            let outcome = xval(&data, &cfg, folds)?;
            let bins = edges
                .map(|e| length_bins_from_predictions(&outcome.predictions_by_fold(), &e))
                .transpose()?;
            let report = XvalReport {
                folds: outcome.report,
                length_bins: bins,
            };
            emit(&to_report_json(&report)?, Some(&out))?;
        }
        Command::Predict { data, model, out } => {
            let data = dataio::load(&data)?;
            let (params, mode) = load_model(&model)?;
            let preds = predict(&data, &params, mode, exec)?;
            let mut w = csv::Writer::from_path(&out)?;
            let mut header = vec!["id".to_string(), "pred_label".into(), "uncertainty".into()];
            header.extend((0..params.config.num_classes).map(|k| format!("p_{k}")));
            w.write_record(&header)?;
            for p in &preds {
                let mut row = vec![p.id.clone(), p.pred.to_string(), p.uncertainty.to_string()];
                row.extend(p.probability.iter().map(|x| x.to_string()));
                w.write_record(&row)?;
            }
            w.flush().map_err(|e| Error::io(&out, e))?;
        }
    }
    Ok(())
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io(Path::new("<stdout>"), e)),
    }
}
