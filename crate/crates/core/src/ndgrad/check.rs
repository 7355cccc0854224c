use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing tape gradients against central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// `max_i |analytic_i - fd_i| / max(1, |analytic_i|, |fd_i|)`.
    pub max_rel_error: f64,
    /// Parameter tensor and flat entry index where the maximum occurred.
    pub worst: (usize, usize),
    pub entries: usize,
}

/// Checks the tape gradient of a scalar function of `params` against central
/// finite differences with step `eps`.
///
/// `f` receives a fresh graph with one leaf per parameter tensor and returns
/// the scalar root.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Argument(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }

    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.leaf(p)).collect();
        let root = f(&mut g, &vars)?;
        let v = g.value(root);
        if !v.is_scalar() {
            return Err(Error::shape("grad_check", v.shape(), &[1, 1]));
        }
        Ok(v.item())
    };

    let analytic: Vec<Tensor> = {
        let mut g = Graph::new();
        let vars: Vec<Var> = params.iter().map(|p| g.leaf(p)).collect();
        let root = f(&mut g, &vars)?;
        let value = g.value(root).item();
        if !value.is_finite() {
            return Err(Error::Evaluation(format!("loss is {value} at the base point")));
        }
        let grads = g.backward(root)?;
        vars.iter().map(|&v| grads.get(v)).collect()
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        entries: 0,
    };
    for (pi, grad) in analytic.iter().enumerate() {
        for ei in 0..grad.len() {
            let orig = work[pi].data()[ei];
            work[pi].data_mut()[ei] = orig + eps;
            let plus = eval(&work)?;
            work[pi].data_mut()[ei] = orig - eps;
            let minus = eval(&work)?;
            work[pi].data_mut()[ei] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Evaluation(format!(
                    "non-finite loss at perturbed point (param {pi}, entry {ei})"
                )));
            }
            let fd = (plus - minus) / (2.0 * eps);
            let an = grad.data()[ei];
            let rel = (an - fd).abs() / 1f64.max(an.abs()).max(fd.abs());
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (pi, ei);
            }
            report.entries += 1;
        }
    }
    Ok(report)
}
