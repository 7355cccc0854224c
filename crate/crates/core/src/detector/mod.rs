//! The multimodal detector.
//!
//! Pipeline per sample: the connection block projects both embeddings to the
//! alignment width `M` and stacks them as a two-token sequence (text first),
//! a squeeze-and-excitation gate rescales channels, a shared single-channel
//! state-space model runs over the sequence of every channel, the outputs are
//! mean-pooled over positions, and an affine head followed by softplus yields
//! non-negative class evidence.

mod model;
mod ssm;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndgrad::{sigmoid, softplus, Graph, Tensor, Var};

pub use model::{load_model, save_model, ModelFile};
pub use ssm::{causal_conv, discretize_diag, ssm_conv, ssm_kernel, ssm_scan};

/// Number of sequence positions fed to the state-space block.
pub const SEQ_LEN: usize = 2;

fn default_align_dim() -> usize {
    128
}
fn default_state_size() -> usize {
    16
}
fn default_se_reduction() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub text_dim: usize,
    pub image_dim: usize,
    #[serde(default = "default_align_dim")]
    pub align_dim: usize,
    #[serde(default = "default_state_size")]
    pub state_size: usize,
    #[serde(default = "default_se_reduction")]
    pub se_reduction: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub seed: u64,
}

impl DetectorConfig {
    pub fn new(text_dim: usize, image_dim: usize, num_classes: usize) -> Self {
        DetectorConfig {
            text_dim,
            image_dim,
            align_dim: default_align_dim(),
            state_size: default_state_size(),
            se_reduction: default_se_reduction(),
            num_classes,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("text_dim", self.text_dim),
            ("image_dim", self.image_dim),
            ("align_dim", self.align_dim),
            ("state_size", self.state_size),
            ("se_reduction", self.se_reduction),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Argument(format!("{name} must be >= 1")));
        }
        if self.num_classes < 2 {
            return Err(Error::Argument("num_classes must be >= 2".into()));
        }
        if !self.align_dim.is_multiple_of(self.se_reduction) {
            return Err(Error::Argument(format!(
                "se_reduction {} must divide align_dim {}",
                self.se_reduction, self.align_dim
            )));
        }
        Ok(())
    }

    fn squeezed_dim(&self) -> usize {
        self.align_dim / self.se_reduction
    }
}

/// All trainable weights. Vectors are stored as `1 × n` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub config: DetectorConfig,
    /// `M × text_dim`
    pub w_txt: Tensor,
    pub b_txt: Tensor,
    /// `M × image_dim`
    pub w_img: Tensor,
    pub b_img: Tensor,
    /// `(M/r) × M`
    pub se_w1: Tensor,
    /// `M × (M/r)`
    pub se_w2: Tensor,
    /// `A = -exp(a_log)`, length `N`.
    pub a_log: Tensor,
    pub b: Tensor,
    pub c_out: Tensor,
    /// `Δ = exp(dt_log)`, a single value.
    pub dt_log: Tensor,
    /// `K × M`
    pub w_head: Tensor,
    pub b_head: Tensor,
}

pub const PARAM_NAMES: [&str; 12] = [
    "w_txt", "b_txt", "w_img", "b_img", "se_w1", "se_w2", "a_log", "b", "c_out", "dt_log",
    "w_head", "b_head",
];

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = rng.random_range(-bound..bound);
    }
    t
}

impl DetectorParams {
    /// Seeded initialization: projections and head uniform in `±1/√fan_in`,
    /// `a_n = -(n+1)`, `b = c = 1`, `Δ = 0.01`.
    pub fn init(config: &DetectorConfig) -> Result<Self> {
        config.validate()?;
        let m = config.align_dim;
        let n = config.state_size;
        let k = config.num_classes;
        let mr = config.squeezed_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w_txt = uniform(&mut rng, &[m, config.text_dim], config.text_dim);
        let b_txt = uniform(&mut rng, &[1, m], config.text_dim);
        let w_img = uniform(&mut rng, &[m, config.image_dim], config.image_dim);
        let b_img = uniform(&mut rng, &[1, m], config.image_dim);
        let se_w1 = uniform(&mut rng, &[mr, m], m);
        let se_w2 = uniform(&mut rng, &[m, mr], mr);
        let w_head = uniform(&mut rng, &[k, m], m);
        let b_head = uniform(&mut rng, &[1, k], m);
        let a_log = Tensor::row((0..n).map(|i| ((i + 1) as f64).ln()).collect());
        Ok(DetectorParams {
            config: config.clone(),
            w_txt,
            b_txt,
            w_img,
            b_img,
            se_w1,
            se_w2,
            a_log,
            b: Tensor::full(&[1, n], 1.0),
            c_out: Tensor::full(&[1, n], 1.0),
            dt_log: Tensor::scalar(0.01f64.ln()),
            w_head,
            b_head,
        })
    }

    /// All-zero weights (useful as a degenerate reference network).
    pub fn zeros(config: &DetectorConfig) -> Result<Self> {
        let mut p = Self::init(config)?;
        for t in p.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        Ok(p)
    }

    pub fn tensors(&self) -> [&Tensor; 12] {
        [
            &self.w_txt,
            &self.b_txt,
            &self.w_img,
            &self.b_img,
            &self.se_w1,
            &self.se_w2,
            &self.a_log,
            &self.b,
            &self.c_out,
            &self.dt_log,
            &self.w_head,
            &self.b_head,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 12] {
        [
            &mut self.w_txt,
            &mut self.b_txt,
            &mut self.w_img,
            &mut self.b_img,
            &mut self.se_w1,
            &mut self.se_w2,
            &mut self.a_log,
            &mut self.b,
            &mut self.c_out,
            &mut self.dt_log,
            &mut self.w_head,
            &mut self.b_head,
        ]
    }

    /// Expected shape of every tensor, in [`PARAM_NAMES`] order.
    pub fn expected_shapes(config: &DetectorConfig) -> [[usize; 2]; 12] {
        let (m, n, k, mr) = (
            config.align_dim,
            config.state_size,
            config.num_classes,
            config.squeezed_dim(),
        );
        [
            [m, config.text_dim],
            [1, m],
            [m, config.image_dim],
            [1, m],
            [mr, m],
            [m, mr],
            [1, n],
            [1, n],
            [1, n],
            [1, 1],
            [k, m],
            [1, k],
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    /// Continuous diagonal `A` (strictly negative).
    pub fn a_diag(&self) -> Vec<f64> {
        self.a_log.data().iter().map(|x| -x.exp()).collect()
    }

    pub fn delta(&self) -> f64 {
        self.dt_log.item().exp()
    }
}

/// `L × M` token sequence; row 0 is the text token, row 1 the image token.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub values: Tensor,
}

impl SequenceBatch {
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values.data()[i * w..(i + 1) * w]
    }
}

fn affine(w: &Tensor, bias: &Tensor, x: &[f64], op: &'static str) -> Result<Vec<f64>> {
    let cols = w.cols();
    if x.len() != cols {
        return Err(Error::shape(op, w.shape(), &[x.len()]));
    }
    Ok(w
        .data()
        .chunks_exact(cols)
        .zip(bias.data())
        .map(|(row, b)| row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b)
        .collect())
}

/// Connection block: projects both embeddings to the alignment width.
pub fn connect(f_txt: &[f64], f_img: &[f64], params: &DetectorParams) -> Result<SequenceBatch> {
    let row0 = affine(&params.w_txt, &params.b_txt, f_txt, "connect(text)")?;
    let row1 = affine(&params.w_img, &params.b_img, f_img, "connect(image)")?;
    Ok(SequenceBatch {
        values: Tensor::from_rows(&[row0, row1])?,
    })
}

/// Squeeze-and-excitation channel gate.
pub fn se_gate(x: &SequenceBatch, params: &DetectorParams) -> Result<SequenceBatch> {
    let (l, m) = (x.len(), x.width());
    if m != params.config.align_dim {
        return Err(Error::shape("se_gate", x.values.shape(), &[l, params.config.align_dim]));
    }
    let z: Vec<f64> = (0..m)
        .map(|j| (0..l).map(|i| x.row(i)[j]).sum::<f64>() / l as f64)
        .collect();
    let zeros_mr = Tensor::zeros(&[1, params.config.squeezed_dim()]);
    let zeros_m = Tensor::zeros(&[1, m]);
    let hidden: Vec<f64> = affine(&params.se_w1, &zeros_mr, &z, "se_gate")?
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let scale: Vec<f64> = affine(&params.se_w2, &zeros_m, &hidden, "se_gate")?
        .into_iter()
        .map(sigmoid)
        .collect();
    Ok(SequenceBatch {
        values: Tensor::new(
            x.values.shape().to_vec(),
            x.values
                .data()
                .iter()
                .enumerate()
                .map(|(idx, v)| v * scale[idx % m])
                .collect(),
        )?,
    })
}

/// ZOH-discretized `(ā, b̄)` of the shared state-space model.
pub fn discretize(params: &DetectorParams) -> (Vec<f64>, Vec<f64>) {
    discretize_diag(&params.a_diag(), params.b.data(), params.delta())
}

/// Runs the state-space recurrence over every channel independently.
pub fn ssm_apply(x: &SequenceBatch, params: &DetectorParams) -> Result<SequenceBatch> {
    let (a_bar, b_bar) = discretize(params);
    let (l, m) = (x.len(), x.width());
    let mut out = vec![0.0; l * m];
    for j in 0..m {
        let channel: Vec<f64> = (0..l).map(|i| x.row(i)[j]).collect();
        for (i, y) in ssm_scan(&channel, &a_bar, &b_bar, params.c_out.data())
            .into_iter()
            .enumerate()
        {
            out[i * m + j] = y;
        }
    }
    Ok(SequenceBatch {
        values: Tensor::new(vec![l, m], out)?,
    })
}

/// Head outputs for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// Pre-activation head outputs (used directly as cross-entropy logits).
    pub logits: Vec<f64>,
    /// `softplus(logits)`, strictly positive.
    pub evidence: Vec<f64>,
}

/// Full forward pass with plain arithmetic (no tape).
pub fn forward(f_txt: &[f64], f_img: &[f64], params: &DetectorParams) -> Result<Forward> {
    let seq = connect(f_txt, f_img, params)?;
    let gated = se_gate(&seq, params)?;
    let y = ssm_apply(&gated, params)?;
    let (l, m) = (y.len(), y.width());
    let pooled: Vec<f64> = (0..m)
        .map(|j| (0..l).map(|i| y.row(i)[j]).sum::<f64>() / l as f64)
        .collect();
    let logits = affine(&params.w_head, &params.b_head, &pooled, "head")?;
    let evidence = logits.iter().map(|&x| softplus(x)).collect();
    Ok(Forward { logits, evidence })
}

/// Graph handles for every parameter tensor.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub vars: [Var; 12],
}

impl ParamVars {
    pub fn bind<'a>(g: &mut Graph<'a>, params: &'a DetectorParams) -> Self {
        let ts = params.tensors();
        ParamVars {
            vars: ts.map(|t| g.leaf(t)),
        }
    }

    pub fn from_vars(vars: &[Var]) -> Result<Self> {
        let vars: [Var; 12] = vars
            .try_into()
            .map_err(|_| Error::Argument(format!("expected 12 parameter vars, got {}", vars.len())))?;
        Ok(ParamVars { vars })
    }
}

/// Graph nodes produced by [`forward_graph`].
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub logits: Var,
    pub evidence: Var,
}

/// Tape version of [`forward`]; `f_txt` is `1 × text_dim`, `f_img` is `1 × image_dim`.
pub fn forward_graph(
    g: &mut Graph<'_>,
    p: &ParamVars,
    f_txt: Tensor,
    f_img: Tensor,
) -> Result<ForwardVars> {
    let [w_txt, b_txt, w_img, b_img, se_w1, se_w2, a_log, b, c_out, dt_log, w_head, b_head] =
        p.vars;
    let l = SEQ_LEN;

    // connection block
    let xt = g.constant(f_txt);
    let xi = g.constant(f_img);
    let r0 = g.matmul_t(xt, w_txt)?;
    let r0 = g.add(r0, b_txt)?;
    let r1 = g.matmul_t(xi, w_img)?;
    let r1 = g.add(r1, b_img)?;
    let seq = g.concat_rows(&[r0, r1])?;

    // squeeze-and-excitation
    let pool = g.constant(Tensor::full(&[1, l], 1.0 / l as f64));
    let z = g.matmul(pool, seq)?;
    let h = g.matmul_t(z, se_w1)?;
    let h = g.relu(h);
    let s = g.matmul_t(h, se_w2)?;
    let s = g.sigmoid(s);
    let ones = g.constant(Tensor::full(&[l, 1], 1.0));
    let s_full = g.matmul(ones, s)?;
    let gated = g.mul(seq, s_full)?;

    // state-space block, convolutional form
    let a = g.exp(a_log);
    let a = g.neg(a);
    let dt = g.exp(dt_log);
    let za = g.mul(a, dt)?;
    let a_bar = g.exp(za);
    let phi = g.exprel(za);
    let bdt = g.mul(b, dt)?;
    let b_bar = g.mul(bdt, phi)?;
    let kernel = g.ssm_kernel(a_bar, b_bar, c_out, l)?;
    let toeplitz = g.causal_toeplitz(kernel);
    let y = g.matmul(toeplitz, gated)?;

    // pool + head
    let pooled = g.matmul(pool, y)?;
    let logits = g.matmul_t(pooled, w_head)?;
    let logits = g.add(logits, b_head)?;
    let evidence = g.softplus(logits);
    Ok(ForwardVars { logits, evidence })
}
