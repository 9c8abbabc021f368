//! Acceptance suite. Runs every criterion in sequence (so wall-clock budgets
//! are measured without competing tests), prints one PASS/FAIL line each and
//! exits nonzero if any fails.
//!
//! `ACCEPTANCE_ONLY=5,6` restricts the run to the listed criteria.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::rc::Rc;
use std::time::{Duration, Instant};

use rand::Rng;
use stvae_core::gradcheck::{check_params, jitter, GradCheck};
use stvae_core::metrics::{
    brute_force_discrete, decompose, estimate_tc, Decomposition, MetricReport, Mode, PosteriorBank, RunLabel,
};
use stvae_core::objectives::{discriminator_loss, permute_dims, LossContext, ObjectiveConfig};
use stvae_core::params::ParameterSet;
use stvae_core::rng;
use stvae_core::stdata::{random_connected_graph, RasterGenConfig};
use stvae_core::stnets::dcrnn::{self, Walks};
use stvae_core::stnets::discriminator::Discriminator;
use stvae_core::stnets::layers::{conv, init_conv, init_linear, linear};
use stvae_core::stnets::mlp::Mlp;
use stvae_core::stnets::stgcn::{cheb_graph_conv, temporal_gated_conv};
use stvae_core::stnets::{convlstm, EncoderKind, EncoderSpec, GraphOperators, InputShape, StVae};
use stvae_core::{Graph, Tensor};
use stvae_harness::data::{build_dataset, Prepared};
use stvae_harness::pipeline::{encoder_spec, image_baseline_run, run_prepared, run_single};
use stvae_harness::portions::{median, medians, portion_sweep};
use stvae_harness::report::{emit_portions, emit_report};
use stvae_harness::sweep::run_sweep;
use stvae_harness::{DatasetSource, ExperimentConfig, TrainingOptions};

/// Monte Carlo samples for the estimator oracles.
const ORACLE_SAMPLES: usize = 8192;
/// Absolute tolerance (nats) against the discrete oracle.
const ORACLE_TOL: f64 = 0.05;
/// Closed-form TC of a bivariate Gaussian with correlation 0.9.
const GAUSSIAN_TC: f64 = 0.8304;
const GAUSSIAN_TOL: f64 = 0.1;
/// Relative tolerance of the decomposition identity.
const IDENTITY_TOL: f64 = 0.05;
/// Relative error bound for finite-difference gradient checks.
const GRAD_TOL: f64 = 1e-4;
const GRAD_INSTANCES: u64 = 5;
/// Gate-algebra cases are exact up to rounding.
const GATE_TOL: f64 = 1e-8;
/// Largest allowed `(max - min) / max` of the MI medians across constraint strengths.
const MI_SPREAD_TOL: f64 = 0.30;
/// Allowed relative mismatch of parameter budgets.
const BUDGET_TOL: f64 = 0.20;
const PEARSON_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let mins = |m: u64| Some(Duration::from_secs(60 * m));
    let criteria = [
        Criterion { id: 1, name: "estimator oracles", budget: mins(2), run: estimator_oracles },
        Criterion { id: 2, name: "decomposition identity", budget: mins(2), run: decomposition_identity },
        Criterion { id: 3, name: "gradient checks", budget: mins(5), run: gradient_checks },
        Criterion { id: 4, name: "gate algebra", budget: None, run: gate_algebra },
        Criterion { id: 5, name: "constraint trend", budget: mins(30), run: constraint_trend },
        Criterion { id: 6, name: "image baseline direction", budget: mins(20), run: image_baseline_direction },
        Criterion { id: 7, name: "score and correlation", budget: None, run: score_and_correlation },
        Criterion { id: 8, name: "portion sweep", budget: None, run: portion_sweep_shape },
        Criterion { id: 9, name: "determinism", budget: None, run: determinism },
    ];
    let mut failed = 0;
    for c in criteria.iter().filter(|c| only.as_ref().is_none_or(|o| o.contains(&c.id))) {
        let start = Instant::now();
        let mut out = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        if let Some(b) = c.budget {
            if elapsed > b {
                out.pass = false;
                out.detail = format!("{}; over the {}s budget", out.detail, b.as_secs());
            }
        }
        failed += usize::from(!out.pass);
        println!(
            "criterion {} {:<26} {} ({:.1}s) {}",
            c.id,
            c.name,
            if out.pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::stream(seed, 9);
    Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
}

fn raster_config(gen: RasterGenConfig, encoder: EncoderKind, dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSource::MovingBlobs(gen),
        encoder,
        grid: vec![ObjectiveConfig::factor_vae(10.0)],
        seeds: vec![0],
        steps: 100,
        latent_dim: 10,
        portions: vec![0.05, 0.1, 0.25, 0.5, 1.0],
        output_dir: dir.to_path_buf(),
        training: TrainingOptions {
            skip_artifacts: true,
            ..Default::default()
        },
    }
}

// ---------------------------------------------------------------- 1

/// Near-point-mass components on a grid with spacing 10, `counts[c]` per cell.
fn grid_bank(dims: &[usize], counts: &[usize]) -> PosteriorBank {
    let d = dims.len();
    let (mut mu, mut lv) = (Vec::new(), Vec::new());
    for (flat, &k) in counts.iter().enumerate() {
        let mut coords = vec![0; d];
        let mut r = flat;
        for a in (0..d).rev() {
            coords[a] = r % dims[a];
            r /= dims[a];
        }
        for _ in 0..k {
            mu.extend(coords.iter().map(|&c| 10.0 * c as f64));
            lv.extend(std::iter::repeat_n(-8.0, d));
        }
    }
    PosteriorBank::from_flat(mu, lv, d).unwrap()
}

fn probability_table(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Standard normal quantile by bisection on the error-function CDF.
fn normal_quantile(p: f64) -> f64 {
    let cdf = |x: f64| 0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2));
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Maclaurin series below 3, continued fraction for the tail.
fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 3.0 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            let add = term / (2 * n + 1) as f64;
            sum += add;
            if add.abs() < 1e-17 {
                break;
            }
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    } else {
        let mut f = 0.0;
        for k in (1..60).rev() {
            f = (k as f64 / 2.0) / (x + f);
        }
        1.0 - (-x * x).exp() / std::f64::consts::PI.sqrt() / (x + f)
    }
}

/// Mixture approximating a unit-variance bivariate Gaussian with correlation `rho`:
/// components on quantile grids along the principal axes, each with a small isotropic variance.
fn correlated_gaussian_bank(rho: f64) -> PosteriorBank {
    let s2: f64 = 0.05;
    let grid = |n: usize| -> Vec<f64> { (0..n).map(|i| normal_quantile((i as f64 + 0.5) / n as f64)).collect() };
    let sd_major = (1.0 + rho - s2).sqrt();
    let sd_minor = (1.0 - rho - s2).sqrt();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (mut mu, mut lv) = (Vec::new(), Vec::new());
    for a in grid(48) {
        for b in grid(12) {
            let (u, v) = (sd_major * a, sd_minor * b);
            mu.extend([h * (u - v), h * (u + v)]);
            lv.extend([s2.ln(), s2.ln()]);
        }
    }
    PosteriorBank::from_flat(mu, lv, 2).unwrap()
}

fn estimator_oracles() -> Outcome {
    let mut cases: Vec<(Vec<usize>, Vec<usize>)> = vec![
        (vec![2, 2], vec![1, 0, 0, 1]),
        (vec![2, 2], vec![1, 1, 1, 1]),
        (vec![2, 2], vec![3, 1, 1, 3]),
        (vec![3, 3], vec![4, 0, 0, 0, 4, 0, 0, 0, 4]),
        (vec![2, 2, 2], vec![1, 0, 0, 0, 0, 0, 0, 1]),
        (vec![2, 3], vec![2, 1, 0, 0, 1, 2]),
    ];
    let mut r = rng::stream(2024, 0);
    for dims in [vec![3, 2], vec![2, 2, 2], vec![4, 3], vec![3, 3, 2], vec![2, 4]] {
        let size: usize = dims.iter().product();
        let mut counts: Vec<usize> = (0..size).map(|_| r.random_range(0..6)).collect();
        counts[0] += 1;
        cases.push((dims, counts));
    }
    let mut worst: f64 = 0.0;
    for (k, (dims, counts)) in cases.iter().enumerate() {
        let oracle = brute_force_discrete(&probability_table(counts), dims).unwrap();
        let est = decompose(&grid_bank(dims, counts), ORACLE_SAMPLES, Mode::FullSum, k as u64).unwrap();
        // Point masses: index-code MI equals the joint entropy of the cells.
        worst = worst.max((est.tc - oracle.tc).abs()).max((est.mi - oracle.joint_entropy).abs());
    }
    let dup = estimate_tc(&grid_bank(&[2, 2], &[1, 0, 0, 1]), ORACLE_SAMPLES, Mode::FullSum, 0).unwrap();
    let dup_err = (dup - 2f64.ln()).abs();
    let closed = -0.5 * (1.0 - 0.81f64).ln();
    let gauss = estimate_tc(&correlated_gaussian_bank(0.9), ORACLE_SAMPLES, Mode::FullSum, 7).unwrap();
    let pass = cases.len() >= 10
        && worst < ORACLE_TOL
        && dup_err < ORACLE_TOL
        && (closed - GAUSSIAN_TC).abs() < 1e-4
        && (gauss - GAUSSIAN_TC).abs() < GAUSSIAN_TOL;
    Outcome::new(
        pass,
        format!(
            "{} grid cases, worst error {worst:.4}; duplicated binary tc {dup:.4} (ln2 {:.4}); gaussian tc {gauss:.4} vs {GAUSSIAN_TC}",
            cases.len(),
            2f64.ln()
        ),
    )
}

// ---------------------------------------------------------------- 2

fn decomposition_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..20u64 {
        let mut r = rng::stream(k, 0);
        let d = 1 + (k as usize % 4);
        let n = 200;
        let mu = (0..n * d).map(|_| r.random_range(-2.0..2.0)).collect();
        let lv = (0..n * d).map(|_| r.random_range(-3.0..0.5)).collect();
        let bank = PosteriorBank::from_flat(mu, lv, d).unwrap();
        let est = decompose(&bank, ORACLE_SAMPLES, Mode::FullSum, k).unwrap();
        let exact = bank.mean_kl();
        worst = worst.max((est.mi + est.tc + est.dwkl - exact).abs() / exact);
    }
    Outcome::new(worst < IDENTITY_TOL, format!("20 banks, worst relative gap {worst:.4}"))
}

// ---------------------------------------------------------------- 3

fn gradient_checks() -> Outcome {
    let mut results: Vec<(String, f64)> = Vec::new();
    let mut record = |name: &str, f: &dyn Fn(u64) -> GradCheck| {
        let worst = (0..GRAD_INSTANCES).map(|s| f(s).worst()).fold(0.0, f64::max);
        results.push((name.to_string(), worst));
    };
    let jittered = |mut ps: ParameterSet, seed: u64| {
        jitter(&mut ps, 0.1, seed);
        ps
    };

    record("linear", &|s| {
        let mut ps = ParameterSet::new(s);
        init_linear(&mut ps, "l", 3, 4, &mut rng::stream(s, 0));
        let ps = jittered(ps, s);
        let x = rand_tensor(&[2, 5, 3], s);
        check_params(&ps, |g, p| linear(p, "l", g.constant(x.clone())).square().sum())
    });
    record("conv", &|s| {
        let mut ps = ParameterSet::new(s);
        init_conv(&mut ps, "c", 2, 3, 3, &mut rng::stream(s, 0));
        let ps = jittered(ps, s);
        let x = rand_tensor(&[2, 2, 4, 4], s);
        check_params(&ps, |g, p| conv(p, "c", g.constant(x.clone())).square().sum())
    });
    record("convlstm cell", &|s| {
        let mut ps = ParameterSet::new(s);
        init_conv(&mut ps, "cell", 3, 8, 3, &mut rng::stream(s, 0));
        let ps = jittered(ps, s);
        let (x, h, c) = (rand_tensor(&[2, 1, 3, 3], s + 10), rand_tensor(&[2, 2, 3, 3], s + 20), rand_tensor(&[2, 2, 3, 3], s + 30));
        check_params(&ps, |g, p| {
            let (h, c) = convlstm::cell_step(p, "cell", Some(g.constant(x.clone())), g.constant(h.clone()), g.constant(c.clone())).unwrap();
            h.square().sum() + c.sum()
        })
    });
    record("diffusion conv cell", &|s| {
        let adj = random_connected_graph(5, 2, &mut rng::stream(s, 1)).unwrap();
        let walks = Walks::new(&GraphOperators::new(&adj));
        let mut ps = ParameterSet::new(s);
        dcrnn::init_cell(&mut ps, "cell", 1, 2, 2, &mut rng::stream(s, 0));
        let ps = jittered(ps, s);
        let (x, h) = (rand_tensor(&[2, 5, 1], s + 10), rand_tensor(&[2, 5, 2], s + 20));
        check_params(&ps, |g, p| {
            dcrnn::cell_step(p, "cell", Some(g.constant(x.clone())), g.constant(h.clone()), &walks).unwrap().square().sum()
        })
    });
    record("chebyshev conv", &|s| {
        let l = Rc::new(rand_tensor(&[4, 4], s + 1));
        let mut ps = ParameterSet::new(s);
        ps.insert("theta", rand_tensor(&[3, 2, 3], s + 2));
        let x = rand_tensor(&[2, 4, 2], s);
        check_params(&ps, |g, p| cheb_graph_conv(g.constant(x.clone()), &l, p.var("theta")).unwrap().square().sum())
    });
    record("gated temporal conv", &|s| {
        let mut ps = ParameterSet::new(s);
        ps.insert("w", rand_tensor(&[2, 2, 4], s + 1));
        ps.insert("b", rand_tensor(&[4], s + 2));
        let x = rand_tensor(&[2, 5, 3, 2], s);
        check_params(&ps, |g, p| temporal_gated_conv(g.constant(x.clone()), p.var("w"), p.var("b")).unwrap().square().sum())
    });
    record("mlp", &|s| {
        let m = Mlp { input: 3, hidden: 5, output: 2 };
        let mut ps = ParameterSet::new(s);
        m.init(&mut ps, &mut rng::stream(s, 0));
        let ps = jittered(ps, s);
        let x = rand_tensor(&[4, 3], s);
        check_params(&ps, |g, p| m.forward(p, g.constant(x.clone())).square().sum())
    });
    record("discriminator loss", &|s| {
        let disc = Discriminator { latent_dim: 3, width: 6 };
        let ps = jittered(disc.init_params(s), s);
        let mut r = rng::stream(s, 3);
        let z = Tensor::from_fn(&[6, 3], |_| r.random_range(-2.0..2.0));
        let zp = permute_dims(&z, &mut r);
        check_params(&ps, |g, p| discriminator_loss(disc.logits(p, g.constant(z.clone())), disc.logits(p, g.constant(zp.clone()))))
    });

    let raster = |t_len, h| InputShape::Raster { t_len, channels: 1, height: h, width: h };
    let graph = |t_len| InputShape::Graph { t_len, n_nodes: 4, features: 1 };
    let models: [(EncoderKind, InputShape); 5] = [
        (EncoderKind::ConvLstm, raster(2, 4)),
        (EncoderKind::StResNet, raster(5, 4)),
        (EncoderKind::ImageConv, raster(2, 8)),
        (EncoderKind::Stgcn, graph(5)),
        (EncoderKind::Dcrnn, graph(3)),
    ];
    for (kind, shape) in models {
        record(&format!("{} model", kind.name()), &|s| {
            let adj = random_connected_graph(4, 1, &mut rng::stream(s, 1)).unwrap();
            let spec = EncoderSpec { hidden: 2, latent_dim: 2, ..EncoderSpec::new(kind) };
            let m = StVae::new(spec, shape, kind.is_graph().then_some(&adj)).unwrap();
            let ps = jittered(m.init_params(s + 100), s);
            let x = rand_tensor(&shape.batch_dims(2), s);
            check_params(&ps, |g, p| {
                let post = m.encode(p, g.constant(x.clone()));
                m.decode(p, post.mu).square().sum() + post.logvar.sum()
            })
        });
    }

    let tiny = StVae::new(
        EncoderSpec { hidden: 2, latent_dim: 2, ..EncoderSpec::new(EncoderKind::ImageConv) },
        raster(2, 8),
        None,
    )
    .unwrap();
    let disc = Discriminator { latent_dim: 2, width: 5 };
    for obj in [
        ObjectiveConfig::vae(),
        ObjectiveConfig::beta_vae(4.0),
        ObjectiveConfig::beta_tcvae(6.0),
        ObjectiveConfig::factor_vae(10.0),
    ] {
        record(&format!("{} total", obj.method.name()), &|s| {
            let ps = jittered(tiny.init_params(s), s);
            let dp = jittered(disc.init_params(s), s + 50);
            let mut r = rng::stream(s, 2);
            let x = Tensor::from_fn(&[3, 2, 1, 8, 8], |_| r.random_range(0.0..1.0));
            let eps = Tensor::from_fn(&[3, 2], |_| r.random_range(-1.5..1.5));
            let ctx = LossContext {
                model: &tiny,
                objective: obj,
                dataset_size: 10,
                discriminator: Some((&disc, &dp)),
            };
            check_params(&ps, |g, p| ctx.forward(g, p, &x, eps.clone()).unwrap().total)
        });
    }

    let failing: Vec<String> = results.iter().filter(|(_, e)| !(*e < GRAD_TOL)).map(|(n, e)| format!("{n} {e:.2e}")).collect();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    Outcome::new(
        failing.is_empty(),
        if failing.is_empty() {
            format!("{} ops x {GRAD_INSTANCES} instances, worst relative error {worst:.2e}", results.len())
        } else {
            format!("failing: {}", failing.join(", "))
        },
    )
}

// ---------------------------------------------------------------- 4

fn gate_algebra() -> Outcome {
    let g = Graph::new();
    let mut errs = Vec::new();

    // ConvLSTM with zero weights and zero state: every gate is 0.5 and the candidate 0.
    let mut ps = ParameterSet::new(0);
    init_conv(&mut ps, "cell", 5, 12, 3, &mut rng::stream(0, 0));
    ps.zero_all();
    let p = ps.bind(&g);
    let zero = g.constant(Tensor::zeros(&[2, 3, 4, 4]));
    let (h, c) = convlstm::cell_step(&p, "cell", Some(g.constant(rand_tensor(&[2, 2, 4, 4], 1))), zero, zero).unwrap();
    errs.push(("convlstm zero", h.value().max_abs().max(c.value().max_abs())));

    // Diffusion-convolutional GRU with zero weights: u = r = 0.5, candidate 0, so h' = h / 2.
    let adj = random_connected_graph(5, 2, &mut rng::stream(0, 1)).unwrap();
    let walks = Walks::new(&GraphOperators::new(&adj));
    let mut ps = ParameterSet::new(0);
    dcrnn::init_cell(&mut ps, "cell", 1, 3, 2, &mut rng::stream(0, 0));
    ps.zero_all();
    let p = ps.bind(&g);
    let h0 = rand_tensor(&[2, 5, 3], 2);
    let h = dcrnn::cell_step(&p, "cell", Some(g.constant(rand_tensor(&[2, 5, 1], 3))), g.constant(h0.clone()), &walks).unwrap();
    errs.push(("diffusion gru zero", h.value().zip_map(&h0, |a, b| a - 0.5 * b).max_abs()));

    // Gated linear unit with a zero gate branch: Y = 0.5 P.
    let x = rand_tensor(&[2, 5, 3, 2], 4);
    let mut w = rand_tensor(&[2, 2, 4], 5);
    for k in 0..2 {
        for ci in 0..2 {
            w.set(&[k, ci, 2], 0.0);
            w.set(&[k, ci, 3], 0.0);
        }
    }
    let b = Tensor::new(vec![4], vec![0.3, -0.1, 0.0, 0.0]);
    let y = temporal_gated_conv(g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone())).unwrap();
    let mut glu_err: f64 = 0.0;
    for bi in 0..2 {
        for t in 0..4 {
            for n in 0..3 {
                for o in 0..2 {
                    let mut pre = b.data()[o];
                    for k in 0..2 {
                        for ci in 0..2 {
                            pre += x.at(&[bi, t + k, n, ci]) * w.at(&[k, ci, o]);
                        }
                    }
                    glu_err = glu_err.max((y.value().at(&[bi, t, n, o]) - 0.5 * pre).abs());
                }
            }
        }
    }
    errs.push(("glu half", glu_err));

    // First-order Chebyshev filter with identity coefficients is the identity.
    let x = rand_tensor(&[2, 3, 4, 2], 6);
    let l = Rc::new(rand_tensor(&[4, 4], 7));
    let y = cheb_graph_conv(g.constant(x.clone()), &l, g.constant(Tensor::eye(2).reshape(&[1, 2, 2]))).unwrap();
    errs.push(("chebyshev identity", y.value().zip_map(&x, |a, b| a - b).max_abs()));

    let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    let detail = errs.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    Outcome::new(worst <= GATE_TOL, detail)
}

// ---------------------------------------------------------------- 5

fn constraint_trend() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let gen = RasterGenConfig {
        height: 24,
        width: 24,
        t_len: 7,
        n_samples: 1024,
        blob_width: vec![3.0, 5.0],
        ..Default::default()
    };
    let mut cfg = raster_config(gen, EncoderKind::ConvLstm, dir.path());
    let gammas = [1.0, 10.0, 40.0];
    cfg.grid = gammas.iter().map(|&g| ObjectiveConfig::factor_vae(g)).collect();
    cfg.seeds = (0..5).collect();
    cfg.steps = 2000;
    cfg.training = TrainingOptions {
        hidden: 4,
        batch_size: 8,
        discriminator_learning_rate: 1e-3,
        discriminator_steps: 5,
        predictor_steps: 50,
        skip_artifacts: true,
        ..Default::default()
    };
    let records = run_sweep(&cfg, 1).unwrap();
    if let Some(r) = records.iter().find(|r| !r.completed()) {
        return Outcome::new(false, format!("{} failed: {:?}", r.run_id, r.error));
    }
    let by_gamma = |f: fn(&MetricReport) -> f64| -> Vec<f64> {
        (0..gammas.len())
            .map(|gi| median(records.iter().filter(|r| r.grid_index == gi).map(|r| f(r.report.as_ref().unwrap())).collect()))
            .collect()
    };
    let tc = by_gamma(|m| m.tc);
    let mi = by_gamma(|m| m.mi);
    let decreasing = tc.windows(2).all(|w| w[1] < w[0]);
    let (lo, hi) = mi.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let spread = (hi - lo) / hi;
    Outcome::new(
        decreasing && spread < MI_SPREAD_TOL,
        format!("gamma {gammas:?}: median tc {tc:.4?}, median mi {mi:.4?} (spread {spread:.3})"),
    )
}

// ---------------------------------------------------------------- 6

fn image_baseline_direction() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let gen = RasterGenConfig { t_len: 11, ..Default::default() };
    let mut cfg = raster_config(gen, EncoderKind::ConvLstm, dir.path());
    cfg.steps = 1500;
    cfg.training.predictor_steps = 50;
    let (mut st, mut img, mut ratio) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..3 {
        let a = run_single(&cfg, 0, seed).unwrap();
        let b = image_baseline_run(&cfg, 0, seed).unwrap();
        let (Some(ra), Some(rb)) = (&a.report, &b.report) else {
            return Outcome::new(false, format!("run failed: {:?} {:?}", a.error, b.error));
        };
        st.push(ra.recon);
        img.push(rb.recon);
        ratio.push(b.param_count as f64 / a.param_count as f64);
    }
    let matched = ratio.iter().all(|r| (r - 1.0).abs() <= BUDGET_TOL);
    let (ms, mi) = (median(st.clone()), median(img.clone()));
    Outcome::new(
        matched && ms < mi,
        format!("median recon convlstm {ms:.4} vs time-as-channels {mi:.4}; budget ratios {ratio:.3?}"),
    )
}

// ---------------------------------------------------------------- 7

fn score_and_correlation() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng::stream(7, 0);
    let reports: Vec<MetricReport> = (0..12)
        .map(|i| {
            let tc = r.random_range(0.0..2.0);
            let mi = 3.0 * tc + 0.25;
            let d = Decomposition { mi, tc, dwkl: 0.1, kl: mi + tc + 0.1, m_samples: 100 };
            let label = RunLabel {
                method: "beta_tcvae".into(),
                encoder: "conv_lstm".into(),
                beta: 1.0 + i as f64,
                gamma: 0.0,
                seed: i,
            };
            // utility exactly linear in the score
            let score = mi - tc;
            MetricReport::new(label, 100, 1.0, &d, Some(0.5 + 2.0 * score))
        })
        .collect();
    let exact = reports.iter().all(|m| m.score() == m.mi - m.tc);
    let summary = emit_report(&reports, None, dir.path()).unwrap();
    let back = MetricReport::read_csv(std::fs::File::open(dir.path().join("runs.csv")).unwrap()).unwrap();
    let round_trip = back == reports && back.iter().all(|m| m.score() == m.mi - m.tc);
    let (a, b) = (summary.score_vs_tc.unwrap(), summary.score_vs_utility.unwrap());
    let pass = exact && round_trip && (a.pearson - 1.0).abs() < PEARSON_TOL && (b.pearson - 1.0).abs() < PEARSON_TOL;
    Outcome::new(
        pass,
        format!("score exact {exact}, csv round trip {round_trip}, pearson {:.12} / {:.12}", a.pearson, b.pearson),
    )
}

// ---------------------------------------------------------------- 8

fn portion_sweep_shape() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let gen = RasterGenConfig { t_len: 11, ..Default::default() };
    let mut cfg = raster_config(gen, EncoderKind::ConvLstm, dir.path());
    cfg.steps = 500;
    cfg.seeds = (0..5).collect();
    let dataset = build_dataset(&cfg.dataset, cfg.training.dataset_seed).unwrap();
    let prep = Prepared::new(&dataset, &cfg.training, false).unwrap();
    let (record, trained) = run_prepared(&cfg, &prep, encoder_spec(&cfg), cfg.grid[0], 0, 0);
    let Some(trained) = trained else {
        return Outcome::new(false, format!("encoder failed: {:?}", record.error));
    };
    let rows = portion_sweep(&cfg, &prep, &trained, &cfg.portions, &cfg.seeds).unwrap();
    emit_portions(&rows, dir.path()).unwrap();
    let med = medians(&rows);
    let raw: Vec<f64> = med.iter().map(|m| m.raw_rmse).collect();
    let latent: Vec<f64> = med.iter().map(|m| m.latent_rmse).collect();
    let monotone = raw.windows(2).all(|w| w[1] <= w[0]);
    let svg = std::fs::read_to_string(dir.path().join("portions.svg")).unwrap();
    let both = svg.matches("<polyline").count() == 2 && rows.iter().all(|r| r.latent_rmse.is_finite() && r.raw_rmse.is_finite());
    let crossover = if latent[0] < raw[0] { "latent ahead" } else { "raw ahead" };
    Outcome::new(
        monotone && both && rows.len() == 25,
        format!("median raw rmse {raw:.4?}; latent {latent:.4?}; smallest portion: {crossover}"),
    )
}

// ---------------------------------------------------------------- 9

fn determinism() -> Outcome {
    let gen = RasterGenConfig { n_samples: 60, t_len: 6, ..Default::default() };
    let run = |dir: &Path| {
        let mut cfg = raster_config(gen.clone(), EncoderKind::ConvLstm, dir);
        cfg.grid = vec![ObjectiveConfig::factor_vae(5.0), ObjectiveConfig::beta_tcvae(3.0), ObjectiveConfig::vae()];
        cfg.seeds = vec![11, 12];
        cfg.steps = 30;
        cfg.latent_dim = 3;
        cfg.training = TrainingOptions {
            hidden: 2,
            batch_size: 8,
            eval_samples: 256,
            predictor_steps: 20,
            ..Default::default()
        };
        let records = run_sweep(&cfg, 2).unwrap();
        let reports: Vec<MetricReport> = records.iter().filter_map(|r| r.report.clone()).collect();
        emit_report(&reports, None, &dir.join("report")).unwrap();
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(a.path());
    run(b.path());
    let files = [
        "runs.csv",
        "status.csv",
        "report/runs.csv",
        "report/mi_tc.csv",
        "report/score_tc.csv",
        "report/score_utility.csv",
        "report/correlations.csv",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(a.path().join(f)).unwrap() != std::fs::read(b.path().join(f)).unwrap())
        .collect();
    let rows = std::fs::read_to_string(a.path().join("runs.csv")).unwrap().lines().count() - 1;
    Outcome::new(
        differing.is_empty() && rows == 6,
        format!("{} csv files compared over {rows} runs; differing: {differing:?}", files.len()),
    )
}
