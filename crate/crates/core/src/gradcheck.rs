//! Central finite-difference verification of analytic gradients.

use crate::autograd::{Graph, Var};
use crate::params::{Bound, ParameterSet};

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// `(parameter name, relative error)` per tensor.
    pub per_tensor: Vec<(String, f64)>,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn worst_name(&self) -> Option<&str> {
        self.per_tensor
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(n, _)| n.as_str())
    }
}

/// `||a - n|| / max(||a||, ||n||)`, with a floor so all-zero gradients compare equal.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-10)
}

/// Compares the tape gradient of `loss` against central differences of its forward value,
/// for every tensor in `params`.
pub fn check_params<F>(params: &ParameterSet, loss: F) -> GradCheck
where
    F: for<'g> Fn(&'g Graph, &Bound<'g>) -> Var<'g>,
{
    let g = Graph::new();
    let bound = params.bind(&g);
    let out = loss(&g, &bound);
    let analytic = bound.grads(&g.backward(out));

    let eval = |p: &ParameterSet| {
        let g = Graph::new();
        let b = p.bind_frozen(&g);
        loss(&g, &b).item()
    };

    let mut per_tensor = Vec::new();
    let mut probe = params.clone();
    for (name, a) in &analytic {
        let n = a.len();
        let mut numeric = vec![0.0; n];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = probe.get(name).unwrap().data()[i];
            probe.get_mut(name).unwrap().data_mut()[i] = orig + FD_STEP;
            let up = eval(&probe);
            probe.get_mut(name).unwrap().data_mut()[i] = orig - FD_STEP;
            let down = eval(&probe);
            probe.get_mut(name).unwrap().data_mut()[i] = orig;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        per_tensor.push((name.clone(), relative_error(a.data(), &numeric)));
    }
    GradCheck { per_tensor }
}

/// Adds `U(-scale, scale)` noise to every parameter. Moves zero biases off
/// the rectifier kink, where one-sided and central differences disagree.
pub fn jitter(params: &mut ParameterSet, scale: f64, seed: u64) {
    use rand::Rng;
    let mut rng = crate::rng::stream(seed, crate::rng::streams::NOISE);
    for (_, t) in params.iter_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-scale..scale);
        }
    }
}
