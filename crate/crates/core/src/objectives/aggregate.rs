use crate::autograd::{Function, Var};
use crate::metrics::{log_normal, mixture_log_density};
use crate::tensor::Tensor;

use super::{log_gaussian_rows, log_standard_normal_rows, ObjectiveError};

/// Aggregate log-densities of a batch under the mixture of its own posteriors,
/// with gradients through the samples and the posterior parameters.
struct AggregateDensity {
    d: usize,
}

impl Function for AggregateDensity {
    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let (z, mu, lv) = (inputs[0].data(), inputs[1].data(), inputs[2].data());
        let d = self.d;
        let b = z.len() / d;
        let g = grad.data();
        let mut dz = vec![0.0; z.len()];
        let mut dmu = vec![0.0; mu.len()];
        let mut dlv = vec![0.0; lv.len()];
        let mut comp = vec![0.0; b * d];
        let mut joint_w = vec![0.0; b];
        let mut dim_w = vec![0.0; b * d];
        for i in 0..b {
            let g_joint = g[i * (d + 1)];
            let g_dims = &g[i * (d + 1) + 1..(i + 1) * (d + 1)];
            for k in 0..b {
                let mut s = 0.0;
                for j in 0..d {
                    let v = log_normal(z[i * d + j], mu[k * d + j], lv[k * d + j]);
                    comp[k * d + j] = v;
                    s += v;
                }
                joint_w[k] = s;
            }
            softmax(&mut joint_w);
            for j in 0..d {
                let m = (0..b).map(|k| comp[k * d + j]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for k in 0..b {
                    let e = (comp[k * d + j] - m).exp();
                    dim_w[k * d + j] = e;
                    total += e;
                }
                for k in 0..b {
                    dim_w[k * d + j] /= total;
                }
            }
            for k in 0..b {
                for j in 0..d {
                    let c = g_joint * joint_w[k] + g_dims[j] * dim_w[k * d + j];
                    if c == 0.0 {
                        continue;
                    }
                    let diff = z[i * d + j] - mu[k * d + j];
                    let ivar = (-lv[k * d + j]).exp();
                    dz[i * d + j] -= c * diff * ivar;
                    dmu[k * d + j] += c * diff * ivar;
                    dlv[k * d + j] += c * 0.5 * (diff * diff * ivar - 1.0);
                }
            }
        }
        let shape = inputs[0].shape().to_vec();
        [dz, dmu, dlv]
            .into_iter()
            .zip(needs)
            .map(|(v, &n)| n.then(|| Tensor::new(shape.clone(), v)))
            .collect()
    }
}

fn softmax(xs: &mut [f64]) {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

/// `(log q(z_i) [B], log q(z_ij) [B, d])` where `q` mixes the `B` posteriors
/// of the batch with equal weight. Shares its forward computation with the
/// evaluation estimators.
pub fn log_density_terms<'g>(z: Var<'g>, mu: Var<'g>, logvar: Var<'g>) -> (Var<'g>, Var<'g>) {
    let shape = z.shape();
    let (b, d) = (shape[0], shape[1]);
    let (log_qz, log_qzj) = mixture_log_density(z.value().data(), mu.value().data(), logvar.value().data(), d);
    let mut packed = Vec::with_capacity(b * (d + 1));
    for i in 0..b {
        packed.push(log_qz[i]);
        packed.extend_from_slice(&log_qzj[i * d..(i + 1) * d]);
    }
    let out = z
        .graph()
        .custom(&[z, mu, logvar], Tensor::new(vec![b, d + 1], packed), Box::new(AggregateDensity { d }));
    (out.narrow(1, 0, 1).reshape(&[b]), out.narrow(1, 1, d))
}

/// Minibatch estimates of the three KL terms, each a scalar batch mean.
#[derive(Clone, Copy)]
pub struct MinibatchTerms<'g> {
    pub mi: Var<'g>,
    pub tc: Var<'g>,
    pub dwkl: Var<'g>,
}

/// Splits the sampled KL of a batch into index-code information, total
/// correlation and dimension-wise KL. Their sum is `log q(z|x) - log p(z)`
/// averaged over the batch.
pub fn minibatch_terms<'g>(
    z: Var<'g>,
    mu: Var<'g>,
    logvar: Var<'g>,
    dataset_size: usize,
) -> Result<MinibatchTerms<'g>, ObjectiveError> {
    let b = z.shape()[0];
    if b > dataset_size {
        return Err(ObjectiveError::BatchTooLarge { batch: b, n: dataset_size });
    }
    if mu.shape() != z.shape() || logvar.shape() != z.shape() {
        return Err(ObjectiveError::Shape(format!(
            "z {:?}, mu {:?}, logvar {:?}",
            z.shape(),
            mu.shape(),
            logvar.shape()
        )));
    }
    let log_qzx = log_gaussian_rows(z, mu, logvar);
    let log_pz = log_standard_normal_rows(z);
    let (log_qz, log_qzj) = log_density_terms(z, mu, logvar);
    let sum_qzj = log_qzj.sum_axis(1);
    Ok(MinibatchTerms {
        mi: (log_qzx - log_qz).mean(),
        tc: (log_qz - sum_qzj).mean(),
        dwkl: (sum_qzj - log_pz).mean(),
    })
}
