//! Reverse-mode gradient tape.
//!
//! Nodes are appended in evaluation order, so the node vector is already a
//! topological order and the backward pass is a single reverse sweep. Leaves
//! may borrow their value, which lets many per-sample graphs share one set of
//! parameter tensors without copying.

use std::borrow::Cow;

use super::special::{
    digamma_unchecked, exprel, exprel_deriv, lgamma_unchecked, trigamma_unchecked,
};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Exp(Var),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exprel(Var),
    Digamma(Var),
    Lgamma(Var),
    Sum(Var),
    LogSumExp(Var),
    /// `k_j = Σ_n c_n a_n^j b_n`, for `j < len`.
    SsmKernel {
        a: Var,
        b: Var,
        c: Var,
        len: usize,
    },
    /// Lower-triangular Toeplitz matrix `T[t, s] = k[t - s]`.
    CausalToeplitz(Var),
    ConcatRows(Vec<Var>),
}

/// A node of the tape: its value and how it was produced.
#[derive(Debug)]
pub struct GradNode<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph<'a> {
    nodes: Vec<GradNode<'a>>,
}

/// Gradients of a scalar root with respect to every node of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`; exactly zero when `v` does not reach the root.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn broadcast_reduce(grad: Tensor, target: &[usize]) -> Tensor {
    if grad.shape() == target {
        grad
    } else {
        Tensor::full(target, grad.sum())
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(GradNode {
            value: Cow::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that borrows its value.
    pub fn leaf(&mut self, value: &'a Tensor) -> Var {
        self.nodes.push(GradNode {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that owns its value (inputs, constants).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(v, Op::MatMulT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_with(self.value(b), "div", |x, y| x / y)?;
        Ok(self.push(v, Op::Div(a, b)))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        self.push(v, Op::Neg(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).exp();
        self.push(v, Op::Exp(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).relu();
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).sigmoid();
        self.push(v, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).softplus();
        self.push(v, Op::Softplus(a))
    }

    pub fn exprel(&mut self, a: Var) -> Var {
        let v = self.value(a).map(exprel);
        self.push(v, Op::Exprel(a))
    }

    fn require_positive(&self, func: &'static str, a: Var) -> Result<()> {
        match self.value(a).data().iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            Some(&bad) => Err(Error::Domain {
                func,
                value: bad,
                expected: "x > 0",
            }),
            None => Ok(()),
        }
    }

    pub fn digamma(&mut self, a: Var) -> Result<Var> {
        self.require_positive("digamma", a)?;
        let v = self.value(a).map(digamma_unchecked);
        Ok(self.push(v, Op::Digamma(a)))
    }

    pub fn lgamma(&mut self, a: Var) -> Result<Var> {
        self.require_positive("lgamma", a)?;
        let v = self.value(a).map(lgamma_unchecked);
        Ok(self.push(v, Op::Lgamma(a)))
    }

    /// Sum of all entries, as a `1 × 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// `ln Σ exp(a)` over all entries, as a `1 × 1` tensor.
    pub fn log_sum_exp(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(log_sum_exp(self.value(a).data()));
        self.push(v, Op::LogSumExp(a))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let s = self.scalar(c);
        self.add(a, s)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let s = self.scalar(c);
        self.mul(a, s)
    }

    /// Causal convolution kernel of a diagonal linear recurrence, as a `1 × len` row.
    pub fn ssm_kernel(&mut self, a: Var, b: Var, c: Var, len: usize) -> Result<Var> {
        let (av, bv, cv) = (self.value(a), self.value(b), self.value(c));
        if av.len() != bv.len() || av.len() != cv.len() {
            return Err(Error::shape("ssm_kernel", av.shape(), bv.shape()));
        }
        if len == 0 {
            return Err(Error::Argument("ssm_kernel length must be >= 1".into()));
        }
        let k = crate::detector::ssm_kernel(av.data(), bv.data(), cv.data(), len);
        Ok(self.push(Tensor::row(k), Op::SsmKernel { a, b, c, len }))
    }

    /// Lower-triangular Toeplitz matrix built from a kernel row.
    pub fn causal_toeplitz(&mut self, kernel: Var) -> Var {
        let k = self.value(kernel).data();
        let t = k.len();
        let mut m = vec![0.0; t * t];
        for i in 0..t {
            for j in 0..=i {
                m[i * t + j] = k[i - j];
            }
        }
        let v = Tensor::new(vec![t, t], m).expect("square shape");
        self.push(v, Op::CausalToeplitz(kernel))
    }

    /// Stacks row vectors (or matrices with matching column count) vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Argument("concat_rows of nothing".into()))?;
        let cols = self.value(*first).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() != 2 || t.cols() != cols {
                return Err(Error::shape(
                    "concat_rows",
                    self.value(*first).shape(),
                    t.shape(),
                ));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let v = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(v, Op::ConcatRows(parts.to_vec())))
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_val = self.value(root);
        if !root_val.is_scalar() {
            return Err(Error::shape("backward", root_val.shape(), &[1, 1]));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::full(root_val.shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let out = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b))?;
                    let gb = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::MatMulT(a, b) => {
                    // out = a · bᵀ: d a = g · b, d b = gᵀ · a
                    let ga = g.matmul(self.value(*b))?;
                    let gb = g.t_matmul(self.value(*a))?;
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Add(a, b) => {
                    let (sa, sb) = (self.value(*a).shape(), self.value(*b).shape());
                    accumulate(&mut grads[a.0], broadcast_reduce(g.clone(), sa));
                    accumulate(&mut grads[b.0], broadcast_reduce(g.clone(), sb));
                }
                Op::Sub(a, b) => {
                    let (sa, sb) = (self.value(*a).shape(), self.value(*b).shape());
                    accumulate(&mut grads[a.0], broadcast_reduce(g.clone(), sa));
                    accumulate(&mut grads[b.0], broadcast_reduce(g.map(|x| -x), sb));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = g.mul(vb)?;
                    let gb = g.mul(va)?;
                    accumulate(&mut grads[a.0], broadcast_reduce(ga, va.shape()));
                    accumulate(&mut grads[b.0], broadcast_reduce(gb, vb.shape()));
                }
                Op::Div(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = g.zip_with(vb, "div", |gi, y| gi / y)?;
                    // d(a/b)/db = -out / b
                    let gb = g
                        .mul(out)?
                        .zip_with(vb, "div", |x, y| -x / y)?;
                    accumulate(&mut grads[a.0], broadcast_reduce(ga, va.shape()));
                    accumulate(&mut grads[b.0], broadcast_reduce(gb, vb.shape()));
                }
                Op::Neg(a) => accumulate(&mut grads[a.0], g.map(|x| -x)),
                Op::Exp(a) => accumulate(&mut grads[a.0], g.mul(out)?),
                Op::Relu(a) => {
                    let mask = self.value(*a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    accumulate(&mut grads[a.0], g.mul(&mask)?);
                }
                Op::Sigmoid(a) => {
                    let d = out.map(|s| s * (1.0 - s));
                    accumulate(&mut grads[a.0], g.mul(&d)?);
                }
                Op::Softplus(a) => {
                    let d = self.value(*a).sigmoid();
                    accumulate(&mut grads[a.0], g.mul(&d)?);
                }
                Op::Exprel(a) => {
                    let d = self.value(*a).map(exprel_deriv);
                    accumulate(&mut grads[a.0], g.mul(&d)?);
                }
                Op::Digamma(a) => {
                    let d = self.value(*a).map(trigamma_unchecked);
                    accumulate(&mut grads[a.0], g.mul(&d)?);
                }
                Op::Lgamma(a) => {
                    let d = self.value(*a).map(digamma_unchecked);
                    accumulate(&mut grads[a.0], g.mul(&d)?);
                }
                Op::Sum(a) => {
                    let ga = Tensor::full(self.value(*a).shape(), g.item());
                    accumulate(&mut grads[a.0], ga);
                }
                Op::LogSumExp(a) => {
                    let lse = out.item();
                    let gi = g.item();
                    let ga = self.value(*a).map(|x| gi * (x - lse).exp());
                    accumulate(&mut grads[a.0], ga);
                }
                Op::SsmKernel { a, b, c, len } => {
                    let (av, bv, cv) = (
                        self.value(*a).data(),
                        self.value(*b).data(),
                        self.value(*c).data(),
                    );
                    let gk = g.data();
                    let n = av.len();
                    let (mut ga, mut gb, mut gc) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
                    for i in 0..n {
                        // Σ_j g_j a^j and Σ_j g_j j a^(j-1)
                        let (mut pow, mut pow_prev) = (1.0, 0.0);
                        let (mut s0, mut s1) = (0.0, 0.0);
                        for (j, &gj) in gk.iter().enumerate().take(*len) {
                            s0 += gj * pow;
                            s1 += gj * j as f64 * pow_prev;
                            pow_prev = pow;
                            pow *= av[i];
                        }
                        gc[i] = s0 * bv[i];
                        gb[i] = s0 * cv[i];
                        ga[i] = s1 * bv[i] * cv[i];
                    }
                    let shape_of = |v: &Var| self.value(*v).shape().to_vec();
                    accumulate(&mut grads[a.0], Tensor::new(shape_of(a), ga)?);
                    accumulate(&mut grads[b.0], Tensor::new(shape_of(b), gb)?);
                    accumulate(&mut grads[c.0], Tensor::new(shape_of(c), gc)?);
                }
                Op::CausalToeplitz(k) => {
                    let kv = self.value(*k);
                    let t = kv.len();
                    let mut gk = vec![0.0; t];
                    for i in 0..t {
                        for j in 0..=i {
                            gk[i - j] += g.data()[i * t + j];
                        }
                    }
                    accumulate(&mut grads[k.0], Tensor::new(kv.shape().to_vec(), gk)?);
                }
                Op::ConcatRows(parts) => {
                    let cols = out.cols();
                    let mut offset = 0;
                    for p in parts {
                        let shape = self.value(*p).shape().to_vec();
                        let n = shape[0] * cols;
                        let slice = g.data()[offset..offset + n].to_vec();
                        offset += n;
                        accumulate(&mut grads[p.0], Tensor::new(shape, slice)?);
                    }
                }
            }
            grads[idx] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

/// Numerically stable `ln Σ exp(x)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}
