//! Spectral graph convolution with gated temporal convolutions.

use std::rc::Rc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use super::layers::{init_linear, linear};
use super::{heads, init_heads, EncoderSpec, InputShape, NetError, Posterior};
use crate::autograd::Var;
use crate::params::{Bound, ParameterSet};
use crate::stdata::Adjacency;
use crate::Tensor;

/// `2 L / lambda_max - I` for the symmetric normalized Laplacian of the
/// symmetrized adjacency. Isolated nodes contribute identity rows to `L`.
pub fn scaled_laplacian(adj: &Adjacency) -> Tensor {
    let n = adj.n();
    let w = |i: usize, j: usize| 0.5 * (adj.weight(i, j) + adj.weight(j, i));
    let dinv: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = (0..n).map(|j| w(i, j)).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let lap = DMatrix::from_fn(n, n, |i, j| (i == j) as u8 as f64 - dinv[i] * w(i, j) * dinv[j]);
    let lambda_max = SymmetricEigen::new(lap.clone()).eigenvalues.max();
    let lambda_max = if lambda_max > 1e-12 { lambda_max } else { 2.0 };
    Tensor::from_fn(&[n, n], |k| {
        let (i, j) = (k / n, k % n);
        2.0 * lap[(i, j)] / lambda_max - (i == j) as u8 as f64
    })
}

/// `sum_k T_k(L) X Theta_k` for `x [.., N, c_in]` and `theta [K, c_in, c_out]`.
pub fn cheb_graph_conv<'g>(x: Var<'g>, lhat: &Rc<Tensor>, theta: Var<'g>) -> Result<Var<'g>, NetError> {
    let (xs, ts) = (x.shape(), theta.shape());
    let n = lhat.shape()[0];
    if lhat.shape() != [n, n] {
        return Err(NetError::InvalidSpec(format!("laplacian {:?} is not square", lhat.shape())));
    }
    if xs.len() < 2 || xs[xs.len() - 2] != n || ts.len() != 3 || ts[0] == 0 || ts[1] != xs[xs.len() - 1] {
        return Err(NetError::InvalidSpec(format!(
            "chebyshev conv of x {xs:?} with theta {ts:?} on {n} nodes"
        )));
    }
    Ok(cheb(x, lhat, theta))
}

fn cheb<'g>(x: Var<'g>, lhat: &Rc<Tensor>, theta: Var<'g>) -> Var<'g> {
    let ts = theta.shape();
    let (k, c_in, c_out) = (ts[0], ts[1], ts[2]);
    let mut terms = vec![x];
    if k > 1 {
        terms.push(x.node_mix(lhat));
    }
    for i in 2..k {
        let next = terms[i - 1].node_mix(lhat).scale(2.0) - terms[i - 2];
        terms.push(next);
    }
    let stacked = if k == 1 { x } else { Var::concat(&terms, terms[0].shape().len() - 1) };
    let s = stacked.shape();
    let lead: usize = s[..s.len() - 1].iter().product();
    let mut out_shape = s.clone();
    *out_shape.last_mut().unwrap() = c_out;
    stacked
        .reshape(&[lead, k * c_in])
        .matmul(theta.reshape(&[k * c_in, c_out]))
        .reshape(&out_shape)
}

/// Gated linear unit over a valid 1-D time convolution.
/// `x [B, T, N, c_in]`, `w [Kt, c_in, 2 c_out]`, `b [2 c_out]` to `[B, T - Kt + 1, N, c_out]`.
pub fn temporal_gated_conv<'g>(x: Var<'g>, w: Var<'g>, b: Var<'g>) -> Result<Var<'g>, NetError> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 4 || ws.len() != 3 || ws[1] != xs[3] || ws[2] % 2 != 0 || b.shape() != [ws[2]] {
        return Err(NetError::InvalidSpec(format!("temporal conv of x {xs:?} with w {ws:?}")));
    }
    if ws[0] == 0 || ws[0] > xs[1] {
        return Err(NetError::SequenceTooShort {
            t_len: xs[1],
            reason: format!("temporal kernel {}", ws[0]),
        });
    }
    Ok(glu(x, w, b))
}

fn glu<'g>(x: Var<'g>, w: Var<'g>, b: Var<'g>) -> Var<'g> {
    let (xs, ws) = (x.shape(), w.shape());
    let (bsz, t, n, c) = (xs[0], xs[1], xs[2], xs[3]);
    let (kt, out2) = (ws[0], ws[2]);
    let t_out = t - kt + 1;
    let stacked = if kt == 1 {
        x
    } else {
        let windows: Vec<Var<'g>> = (0..kt).map(|k| x.narrow(1, k, t_out)).collect();
        Var::concat(&windows, 3)
    };
    let y = (stacked.reshape(&[bsz * t_out * n, kt * c]).matmul(w.reshape(&[kt * c, out2])) + b)
        .reshape(&[bsz, t_out, n, out2]);
    let half = out2 / 2;
    y.narrow(3, 0, half) * y.narrow(3, half, half).sigmoid()
}

pub(crate) fn validate(spec: &EncoderSpec, t_len: usize) -> Result<(), NetError> {
    if spec.cheb_order == 0 || spec.temporal_kernel == 0 {
        return Err(NetError::InvalidSpec("cheb_order and temporal_kernel must be >= 1".into()));
    }
    let shrink = 4 * (spec.temporal_kernel - 1);
    if shrink >= t_len {
        return Err(NetError::SequenceTooShort {
            t_len,
            reason: format!("two blocks with temporal kernel {} remove {shrink} frames", spec.temporal_kernel),
        });
    }
    Ok(())
}

fn graph_dims(shape: InputShape) -> (usize, usize, usize) {
    match shape {
        InputShape::Graph { t_len, n_nodes, features } => (t_len, n_nodes, features),
        InputShape::Raster { .. } => unreachable!("graph model on raster shape"),
    }
}

fn init_block(ps: &mut ParameterSet, prefix: &str, c_in: usize, spec: &EncoderSpec, rng: &mut impl Rng) {
    let (ch, kt, k) = (spec.hidden, spec.temporal_kernel, spec.cheb_order);
    ps.init_uniform(format!("{prefix}.t1.w"), &[kt, c_in, 2 * ch], kt * c_in, rng);
    ps.init_zeros(format!("{prefix}.t1.b"), &[2 * ch]);
    ps.init_uniform(format!("{prefix}.cheb.w"), &[k, ch, ch], k * ch, rng);
    ps.init_zeros(format!("{prefix}.cheb.b"), &[ch]);
    ps.init_uniform(format!("{prefix}.t2.w"), &[kt, ch, 2 * ch], kt * ch, rng);
    ps.init_zeros(format!("{prefix}.t2.b"), &[2 * ch]);
}

/// Temporal gate, graph convolution with rectifier, temporal gate.
fn block<'g>(p: &Bound<'g>, prefix: &str, lhat: &Rc<Tensor>, x: Var<'g>) -> Var<'g> {
    let v = |s: &str| p.var(&format!("{prefix}.{s}"));
    let y = glu(x, v("t1.w"), v("t1.b"));
    let y = (cheb(y, lhat, v("cheb.w")) + v("cheb.b")).relu();
    glu(y, v("t2.w"), v("t2.b"))
}

pub(crate) fn init(ps: &mut ParameterSet, spec: &EncoderSpec, shape: InputShape, rng: &mut impl Rng) {
    let (t, n, f) = graph_dims(shape);
    let ch = spec.hidden;
    init_block(ps, "enc.b0", f, spec, rng);
    init_block(ps, "enc.b1", ch, spec, rng);
    init_heads(ps, ch, spec.latent_dim, rng);
    init_linear(ps, "dec.in", spec.latent_dim, n * ch, rng);
    let t0 = t + 2 * (spec.temporal_kernel - 1);
    ps.init_uniform("dec.time", &[1, t0, 1, ch], 1, rng);
    init_block(ps, "dec.b0", ch, spec, rng);
    init_linear(ps, "dec.out", ch, f, rng);
}

pub(crate) fn encode<'g>(p: &Bound<'g>, _spec: &EncoderSpec, lhat: &Rc<Tensor>, x: Var<'g>) -> Posterior<'g> {
    let y = block(p, "enc.b0", lhat, x);
    let y = block(p, "enc.b1", lhat, y);
    // time then nodes; both means are invariant to node relabeling
    heads(p, y.mean_axis(1).mean_axis(1))
}

pub(crate) fn decode<'g>(p: &Bound<'g>, spec: &EncoderSpec, shape: InputShape, lhat: &Rc<Tensor>, z: Var<'g>) -> Var<'g> {
    let (_, n, _) = graph_dims(shape);
    let b = z.shape()[0];
    let seed = linear(p, "dec.in", z).reshape(&[b, 1, n, spec.hidden]);
    let y = seed + p.var("dec.time");
    linear(p, "dec.out", block(p, "dec.b0", lhat, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Graph;
    use crate::gradcheck::check_params;
    use crate::rng;
    use crate::stdata::random_connected_graph;
    use crate::stnets::{EncoderKind, StVae};

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut r = rng::stream(seed, 9);
        Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
    }

    #[test]
    fn first_order_identity() {
        let g = Graph::new();
        let x = rand_tensor(&[2, 3, 4, 2], 1);
        let l = Rc::new(rand_tensor(&[4, 4], 2));
        let theta = g.constant(Tensor::eye(2).reshape(&[1, 2, 2]));
        let y = cheb_graph_conv(g.constant(x.clone()), &l, theta).unwrap();
        let diff = y.value().zip_map(&x, |a, b| a - b).max_abs();
        assert!(diff <= 1e-8);
    }

    #[test]
    fn second_order_two_nodes() {
        let g = Graph::new();
        let l = Rc::new(Tensor::new(vec![2, 2], vec![0.0, 1.0, 1.0, 0.0]));
        let x = g.constant(Tensor::new(vec![2, 1], vec![1.0, 0.0]));
        let theta = g.constant(Tensor::new(vec![2, 1, 1], vec![0.0, 1.0]));
        let y = cheb_graph_conv(x, &l, theta).unwrap();
        assert_eq!(y.value().data(), &[0.0, 1.0]);
    }

    #[test]
    fn recurrence_matches_polynomial() {
        let a = rand_tensor(&[3, 3], 7);
        let l = a.zip_map(&a.transpose(), |x, y| 0.5 * (x + y));
        let direct = l.matmul(&l).map(|v| 2.0 * v).zip_map(&Tensor::eye(3), |x, y| x - y);
        let g = Graph::new();
        let mut theta = Tensor::zeros(&[3, 3, 3]);
        for i in 0..3 {
            theta.set(&[2, i, i], 1.0);
        }
        let y = cheb_graph_conv(g.constant(Tensor::eye(3)), &Rc::new(l), g.constant(theta)).unwrap();
        assert!(y.value().zip_map(&direct, |a, b| a - b).max_abs() < 1e-12);
    }

    #[test]
    fn cheb_rejects_mismatch() {
        let g = Graph::new();
        let l = Rc::new(Tensor::eye(3));
        let x = g.constant(Tensor::zeros(&[4, 2]));
        assert!(cheb_graph_conv(x, &l, g.constant(Tensor::zeros(&[1, 2, 2]))).is_err());
    }

    #[test]
    fn glu_half_case_and_saturation() {
        let g = Graph::new();
        let x = rand_tensor(&[2, 5, 3, 2], 3);
        let mut w = rand_tensor(&[2, 2, 4], 4);
        for k in 0..2 {
            for c in 0..2 {
                w.set(&[k, c, 2], 0.0);
                w.set(&[k, c, 3], 0.0);
            }
        }
        let b = Tensor::new(vec![4], vec![0.3, -0.1, 0.0, 0.0]);
        let xv = g.constant(x.clone());
        let y = temporal_gated_conv(xv, g.constant(w.clone()), g.constant(b.clone())).unwrap();
        assert_eq!(y.shape(), vec![2, 4, 3, 2]);
        let mut p_branch = w.clone();
        for k in 0..2 {
            for c in 0..2 {
                p_branch.set(&[k, c, 2], 0.0);
            }
        }
        let y_val = y.value().clone();
        for bi in 0..2 {
            for t in 0..4 {
                for n in 0..3 {
                    for o in 0..2 {
                        let mut p = b.data()[o];
                        for k in 0..2 {
                            for c in 0..2 {
                                p += x.at(&[bi, t + k, n, c]) * w.at(&[k, c, o]);
                            }
                        }
                        assert!((y_val.at(&[bi, t, n, o]) - 0.5 * p).abs() <= 1e-8);
                    }
                }
            }
        }

        let mut w1 = Tensor::zeros(&[1, 2, 4]);
        w1.set(&[0, 0, 0], 1.0);
        w1.set(&[0, 1, 1], 1.0);
        let b1 = Tensor::new(vec![4], vec![0.0, 0.0, 20.0, 20.0]);
        let y = temporal_gated_conv(g.constant(x.clone()), g.constant(w1), g.constant(b1)).unwrap();
        assert!(y.value().zip_map(&x, |a, b| a - b).max_abs() < 1e-8);
        assert!(temporal_gated_conv(g.constant(x), g.constant(Tensor::zeros(&[6, 2, 4])), g.constant(Tensor::zeros(&[4]))).is_err());
    }

    fn model(n: usize, seed: u64) -> (StVae, Adjacency) {
        let adj = random_connected_graph(n, 2, &mut rng::stream(seed, 0)).unwrap();
        let mut spec = EncoderSpec::new(EncoderKind::Stgcn);
        spec.hidden = 3;
        spec.latent_dim = 2;
        let shape = InputShape::Graph {
            t_len: 5,
            n_nodes: n,
            features: 1,
        };
        (StVae::new(spec, shape, Some(&adj)).unwrap(), adj)
    }

    #[test]
    fn laplacian_spectrum_in_unit_interval() {
        let (_, adj) = model(6, 3);
        let l = scaled_laplacian(&adj);
        let m = DMatrix::from_row_slice(6, 6, l.data());
        let ev = SymmetricEigen::new(m).eigenvalues;
        assert!((ev.max() - 1.0).abs() < 1e-9);
        assert!(ev.min() >= -1.0 - 1e-9);
    }

    #[test]
    fn node_relabeling_leaves_posterior_unchanged() {
        let n = 6;
        let (m, adj) = model(n, 1);
        let ps = m.init_params(4);
        let perm = [3, 0, 5, 1, 4, 2];
        let w: Vec<f64> = (0..n * n).map(|k| adj.weight(perm[k / n], perm[k % n])).collect();
        let adj_p = Adjacency::new(n, w, false).unwrap();
        let m_p = StVae::new(m.spec.clone(), m.shape, Some(&adj_p)).unwrap();
        let x = rand_tensor(&[2, 5, n, 1], 6);
        let x_p = x.select(2, &perm);
        let (a, b) = (m.posteriors(&ps, &x), m_p.posteriors(&ps, &x_p));
        for (qa, qb) in a.iter().zip(&b) {
            for j in 0..2 {
                assert!((qa.mu[j] - qb.mu[j]).abs() < 1e-5);
                assert!((qa.logvar[j] - qb.logvar[j]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn zero_params_shapes_and_biases() {
        let (m, _) = model(5, 2);
        let mut ps = m.init_params(0);
        ps.zero_all();
        ps.get_mut("enc.logvar.b").unwrap().data_mut()[0] = -3.0;
        ps.get_mut("dec.out.b").unwrap().data_mut()[0] = 0.7;
        let post = m.posteriors(&ps, &rand_tensor(&[3, 5, 5, 1], 1));
        assert!(post.iter().all(|q| q.logvar == vec![-3.0, 0.0] && q.mu == vec![0.0, 0.0]));
        let out = m.reconstruct(&ps, &Tensor::zeros(&[3, 2]));
        assert_eq!(out.shape(), &[3, 5, 5, 1]);
        assert!(out.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn too_short_rejected() {
        let adj = random_connected_graph(4, 1, &mut rng::stream(0, 0)).unwrap();
        let shape = InputShape::Graph {
            t_len: 4,
            n_nodes: 4,
            features: 1,
        };
        assert!(StVae::new(EncoderSpec::new(EncoderKind::Stgcn), shape, Some(&adj)).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let (m, _) = model(4, seed);
            let mut ps = m.init_params(seed + 50);
            crate::gradcheck::jitter(&mut ps, 0.1, seed);
            let x = rand_tensor(&[2, 5, 4, 1], seed);
            let check = check_params(&ps, |g, p| {
                let post = m.encode(p, g.constant(x.clone()));
                m.decode(p, post.mu).square().sum() + post.logvar.sum()
            });
            assert!(check.worst() < 1e-4, "{:?} {}", check.worst_name(), check.worst());
        }
        let l = Rc::new(rand_tensor(&[3, 3], 1));
        let mut ps = ParameterSet::new(0);
        ps.insert("theta", rand_tensor(&[3, 2, 2], 2));
        ps.insert("w", rand_tensor(&[2, 2, 4], 3));
        ps.insert("b", rand_tensor(&[4], 4));
        let x = rand_tensor(&[1, 4, 3, 2], 5);
        let check = check_params(&ps, |g, p| {
            let y = glu(g.constant(x.clone()), p.var("w"), p.var("b"));
            cheb(y, &l, p.var("theta")).square().sum()
        });
        assert!(check.worst() < 1e-4, "{check:?}");
    }
}
