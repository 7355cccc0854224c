//! Diagonal linear time-invariant state-space block.
//!
//! With a diagonal continuous-time matrix `A = diag(a)` (all `a_n < 0`) and
//! timescale `Δ > 0`, zero-order-hold discretization is elementwise:
//!
//! ```text
//! ā_n = exp(Δ a_n)
//! b̄_n = (exp(Δ a_n) - 1) / a_n · b_n  =  Δ b_n · exprel(Δ a_n)
//! ```
//!
//! The recurrence `h_t = ā ⊙ h_{t-1} + b̄ x_t`, `y_t = ⟨c, h_t⟩` with `h_0 = 0`
//! equals the causal convolution of `x` with `k_j = Σ_n c_n ā_n^j b̄_n`.

use crate::ndgrad::exprel;

/// Discrete `(ā, b̄)` from continuous diagonal `a`, input vector `b` and step `dt`.
pub fn discretize_diag(a: &[f64], b: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    a.iter()
        .zip(b)
        .map(|(&an, &bn)| {
            let z = dt * an;
            (z.exp(), dt * bn * exprel(z))
        })
        .unzip()
}

/// Runs the recurrence over one scalar channel.
pub fn ssm_scan(x: &[f64], a_bar: &[f64], b_bar: &[f64], c: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; a_bar.len()];
    x.iter()
        .map(|&xt| {
            for ((hn, &an), &bn) in h.iter_mut().zip(a_bar).zip(b_bar) {
                *hn = an * *hn + bn * xt;
            }
            h.iter().zip(c).map(|(hn, cn)| hn * cn).sum()
        })
        .collect()
}

/// `(⟨c, b̄⟩, ⟨c, ā ⊙ b̄⟩, …, ⟨c, ā^{len-1} ⊙ b̄⟩)`.
pub fn ssm_kernel(a_bar: &[f64], b_bar: &[f64], c: &[f64], len: usize) -> Vec<f64> {
    let mut pow: Vec<f64> = b_bar.to_vec();
    (0..len)
        .map(|_| {
            let kj = pow.iter().zip(c).map(|(p, cn)| p * cn).sum();
            for (p, &an) in pow.iter_mut().zip(a_bar) {
                *p *= an;
            }
            kj
        })
        .collect()
}

/// Causal convolution `y_t = Σ_{j ≤ t} k_j x_{t-j}`. Kernel entries past
/// `kernel.len()` are treated as zero.
pub fn causal_conv(x: &[f64], kernel: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            kernel
                .iter()
                .take(t + 1)
                .enumerate()
                .map(|(j, kj)| kj * x[t - j])
                .sum()
        })
        .collect()
}

/// Convolutional form of [`ssm_scan`].
pub fn ssm_conv(x: &[f64], a_bar: &[f64], b_bar: &[f64], c: &[f64]) -> Vec<f64> {
    causal_conv(x, &ssm_kernel(a_bar, b_bar, c, x.len()))
}
