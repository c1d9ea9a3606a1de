use alloc::vec::Vec;

use super::{Graph, NodeId};
use crate::error::Result;
use crate::tensor::Tensor;

/// Worst disagreement between analytic and central-difference gradients for
/// one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub param_index: usize,
    /// `max |analytic − numeric| / (|numeric| + 1e−8)` over the tensor.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_element: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.entries.iter().all(|e| e.max_rel_error < tolerance)
    }

    /// Entries at or above `tolerance`.
    pub fn flagged(&self, tolerance: f64) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries
            .iter()
            .filter(move |e| e.max_rel_error >= tolerance)
    }
}

/// Compares `analytic` against central differences of `loss` with step `eps`.
pub fn check_gradients<F>(
    params: &[Tensor],
    analytic: &[Tensor],
    eps: f64,
    mut loss: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    let mut work: Vec<Tensor> = params.to_vec();
    let mut entries = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut entry = GradCheckEntry {
            param_index: p,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst_element: 0,
        };
        for e in 0..params[p].len() {
            let orig = params[p].data()[e];
            work[p].data_mut()[e] = orig + eps;
            let plus = loss(&work)?;
            work[p].data_mut()[e] = orig - eps;
            let minus = loss(&work)?;
            work[p].data_mut()[e] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let abs = (analytic[p].data()[e] - numeric).abs();
            let rel = abs / (numeric.abs() + 1e-8);
            if rel > entry.max_rel_error {
                entry.max_rel_error = rel;
                entry.worst_element = e;
            }
            entry.max_abs_error = entry.max_abs_error.max(abs);
        }
        entries.push(entry);
    }
    Ok(GradCheckReport { entries })
}

/// Builds the graph from `params` with `build`, differentiates it, and
/// checks every parameter element against central differences.
///
/// `build` receives the graph and the parameter leaves (in `params` order)
/// and returns the scalar loss node.
pub fn finite_diff_check<F>(params: &[Tensor], eps: f64, mut build: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut eval = |ps: &[Tensor], want_grads: bool| -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new();
        let leaves: Vec<NodeId> = ps.iter().map(|p| g.parameter(p.clone())).collect();
        let loss = build(&mut g, &leaves)?;
        let value = g.value(loss).data()[0];
        if !want_grads {
            return Ok((value, Vec::new()));
        }
        let mut grads = g.backward(loss)?;
        let gs = leaves
            .iter()
            .map(|&l| grads.take(l).expect("parameter gradient"))
            .collect();
        Ok((value, gs))
    };
    let (_, analytic) = eval(params, true)?;
    check_gradients(params, &analytic, eps, |ps| eval(ps, false).map(|(v, _)| v))
}
