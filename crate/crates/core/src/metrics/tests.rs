use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::rng;

const M: usize = 8192;

/// Near-point-mass components placed on an integer grid, `counts[c]` copies per cell.
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

fn table_of(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

fn oracle_cases() -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut cases = vec![
        (vec![2, 2], vec![1, 0, 0, 1]),
        (vec![2, 2], vec![1, 1, 1, 1]),
        (vec![2, 2], vec![3, 1, 1, 3]),
        (vec![3, 3], vec![4, 0, 0, 0, 4, 0, 0, 0, 4]),
        (vec![2, 2, 2], vec![1, 0, 0, 0, 0, 0, 0, 1]),
        (vec![2, 3], vec![2, 1, 0, 0, 1, 2]),
    ];
    let mut r = rng::stream(42, 0);
    for dims in [vec![3, 2], vec![2, 2, 2], vec![4, 3], vec![3, 3, 2]] {
        let size: usize = dims.iter().product();
        let counts = (0..size).map(|_| r.random_range(0..6)).collect();
        cases.push((dims, counts));
    }
    cases
}

#[test]
fn duplicated_binary_has_tc_ln2() {
    let bank = grid_bank(&[2, 2], &[1, 0, 0, 1]);
    let tc = estimate_tc(&bank, M, Mode::FullSum, 0).unwrap();
    assert!((tc - 2f64.ln()).abs() < 0.01, "tc = {tc}");
}

#[test]
fn grid_mixtures_match_discrete_oracle() {
    let cases = oracle_cases();
    assert!(cases.len() >= 10);
    for (dims, counts) in cases {
        let oracle = brute_force_discrete(&table_of(&counts), &dims).unwrap();
        let bank = grid_bank(&dims, &counts);
        let est = decompose(&bank, M, Mode::FullSum, 3).unwrap();
        assert!((est.tc - oracle.tc).abs() < 0.05, "{dims:?} {counts:?}: tc {} vs {}", est.tc, oracle.tc);
        assert!(
            (est.mi - oracle.joint_entropy).abs() < 0.05,
            "{dims:?} {counts:?}: mi {} vs {}",
            est.mi,
            oracle.joint_entropy
        );
    }
}

#[test]
fn factor_mi_matches_discrete_oracle() {
    // factor v in {0,1,2}, latent coordinate a noisy copy of it on a 3-level grid
    let counts = [5, 1, 0, 1, 4, 1, 0, 2, 3];
    let table = table_of(&counts);
    let oracle = brute_force_discrete(&table, &[3, 3]).unwrap();
    let mut mu = Vec::new();
    let mut factor = Vec::new();
    for (flat, &k) in counts.iter().enumerate() {
        for _ in 0..k {
            factor.push(flat / 3);
            mu.push(10.0 * (flat % 3) as f64);
        }
    }
    let lv = vec![-8.0; mu.len()];
    let bank = PosteriorBank::from_flat(mu, lv, 1).unwrap();
    let mi = factor_mi(&bank, &factor, 3, 0, M, 1).unwrap();
    assert!((mi - oracle.mi_first_rest).abs() < 0.05, "{mi} vs {}", oracle.mi_first_rest);
}

/// Components on a quantile grid of the principal axes of a correlated
/// Gaussian, each with isotropic variance, approximate that Gaussian.
fn correlated_gaussian_bank(rho: f64) -> PosteriorBank {
    let s2 = 0.05;
    let (n1, n2) = (48, 12);
    let quantiles = |n: usize| -> Vec<f64> {
        // evenly spaced probabilities mapped through an approximate probit
        (0..n).map(|i| probit((i as f64 + 0.5) / n as f64)).collect()
    };
    let sd1 = (1.0 + rho - s2).sqrt();
    let sd2 = (1.0 - rho - s2).sqrt();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (mut mu, mut lv) = (Vec::new(), Vec::new());
    for a in quantiles(n1) {
        for b in quantiles(n2) {
            let (u, v) = (sd1 * a, sd2 * b);
            mu.push(h * (u - v));
            mu.push(h * (u + v));
            lv.extend([s2.ln(), s2.ln()]);
        }
    }
    PosteriorBank::from_flat(mu, lv, 2).unwrap()
}

/// Acklam's rational approximation to the standard normal quantile.
fn probit(p: f64) -> f64 {
    let a = [-3.969683028665376e1, 2.209460984245205e2, -2.759285104469687e2, 1.383_577_518_672_69e2, -3.066479806614716e1, 2.506628277459239];
    let b = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    let c = [-7.784894002430293e-3, -3.223964580411365e-1, -2.400758277161838, -2.549732539343734, 4.374664141464968, 2.938163982698783];
    let d = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let lo = 0.02425;
    if p < lo {
        let q = (-2.0 * p.ln()).sqrt();
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    } else if p > 1.0 - lo {
        -probit(1.0 - p)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    }
}

#[test]
fn correlated_gaussian_tc() {
    let rho: f64 = 0.9;
    let closed_form = -0.5 * (1.0 - rho * rho).ln();
    assert!((closed_form - 0.8304).abs() < 1e-4);
    let bank = correlated_gaussian_bank(rho);
    let tc = estimate_tc(&bank, M, Mode::FullSum, 7).unwrap();
    assert!((tc - closed_form).abs() < 0.1, "tc = {tc}");
}

fn random_bank(n: usize, d: usize, seed: u64) -> PosteriorBank {
    let mut r = rng::stream(seed, 0);
    let mu = (0..n * d).map(|_| r.random_range(-2.0..2.0)).collect();
    let lv = (0..n * d).map(|_| r.random_range(-3.0..0.5)).collect();
    PosteriorBank::from_flat(mu, lv, d).unwrap()
}

#[test]
fn full_minibatch_equals_full_sum() {
    let bank = random_bank(64, 3, 1);
    let s = draw_samples(&bank, 256, 9);
    let (a, aj) = log_q_aggregate(&s.z, &bank, Mode::FullSum, 0).unwrap();
    let (b, bj) = log_q_aggregate(&s.z, &bank, Mode::Mws { batch: 64 }, 0).unwrap();
    for (x, y) in a.iter().chain(&aj).zip(b.iter().chain(&bj)) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn decomposition_tracks_mean_kl() {
    let bank = random_bank(200, 4, 2);
    let est = decompose(&bank, M, Mode::FullSum, 5).unwrap();
    let sum = est.mi + est.tc + est.dwkl;
    assert!((sum - est.kl).abs() < 1e-9);
    let exact = bank.mean_kl();
    assert!((sum - exact).abs() / exact < 0.05, "{sum} vs {exact}");
}

#[test]
fn estimators_share_samples() {
    let bank = random_bank(50, 3, 4);
    let d = decompose(&bank, 1000, Mode::FullSum, 11).unwrap();
    assert_eq!(estimate_mi_index_code(&bank, 1000, Mode::FullSum, 11).unwrap(), d.mi);
    assert_eq!(estimate_tc(&bank, 1000, Mode::FullSum, 11).unwrap(), d.tc);
    assert_eq!(estimate_dwkl(&bank, 1000, Mode::FullSum, 11).unwrap(), d.dwkl);
}

#[test]
fn identical_posteriors_carry_no_information() {
    let bank = PosteriorBank::from_flat([0.3, -0.2].repeat(20), [-1.0, 0.2].repeat(20), 2).unwrap();
    let d = decompose(&bank, 500, Mode::FullSum, 0).unwrap();
    assert!(d.mi.abs() < 1e-12);
    assert!(d.tc.abs() < 1e-12);
}

#[test]
fn rejects_bad_inputs() {
    let bank = random_bank(10, 2, 0);
    let z = vec![0.0; 4];
    assert_eq!(
        log_q_aggregate(&z, &bank, Mode::Mws { batch: 11 }, 0).unwrap_err(),
        MetricError::BatchTooLarge { batch: 11, n: 10 }
    );
    assert_eq!(PosteriorBank::new(&[]).unwrap_err(), MetricError::EmptyBank);
    let big = PosteriorBank::from_flat(vec![0.0; FULL_SUM_LIMIT + 1], vec![0.0; FULL_SUM_LIMIT + 1], 1).unwrap();
    assert_eq!(log_q_aggregate(&[0.0], &big, Mode::FullSum, 0).unwrap_err(), MetricError::BankTooLarge(FULL_SUM_LIMIT + 1));
    assert!(PosteriorBank::from_flat(vec![f64::NAN], vec![0.0], 1).is_err());
    assert!(brute_force_discrete(&[0.5, 0.6], &[2]).is_err());
}

#[test]
fn rmse_per_sample_then_mean() {
    // sample errors (3, 4) -> rmse 3.5355..; second sample exact
    let pred = [3.0, 4.0, 1.0, 1.0];
    let target = [0.0, 0.0, 1.0, 1.0];
    let r = utility_rmse(&pred, &target, 2).unwrap();
    assert!((r - 12.5f64.sqrt() / 2.0).abs() < 1e-12);
    assert!(utility_rmse(&pred, &target, 3).is_err());
}

#[test]
fn correlations() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    let y: Vec<f64> = x.iter().map(|v| v * v * v).collect();
    assert!((correlation(&x, &y, CorrelationKind::Spearman).unwrap() - 1.0).abs() < 1e-12);
    assert!(correlation(&x, &y, CorrelationKind::Pearson).unwrap() < 1.0);
    let down: Vec<f64> = x.iter().map(|v| -2.0 * v + 1.0).collect();
    assert!((correlation(&x, &down, CorrelationKind::Pearson).unwrap() + 1.0).abs() < 1e-12);
    assert_eq!(ranks(&[2.0, 1.0, 2.0, 3.0]), vec![2.5, 1.0, 2.5, 4.0]);
    assert!(correlation(&[1.0], &[1.0], CorrelationKind::Pearson).is_err());
    let (slope, icpt) = linear_fit(&x, &down).unwrap();
    assert!((slope + 2.0).abs() < 1e-12 && (icpt - 1.0).abs() < 1e-12);
}

#[test]
fn report_csv_round_trip() {
    let d = Decomposition {
        mi: 1.25,
        tc: 0.5,
        dwkl: 0.1,
        kl: 1.85,
        m_samples: 100,
    };
    let label = RunLabel {
        method: "factor_vae".into(),
        encoder: "convlstm".into(),
        beta: 1.0,
        gamma: 10.0,
        seed: 3,
    };
    let r = MetricReport::new(label, 64, 2.5, &d, Some(0.2));
    assert_eq!(r.score(), 0.75);
    let mut buf = Vec::new();
    MetricReport::write_csv(std::slice::from_ref(&r), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), REPORT_HEADER.join(","));
    let back = MetricReport::read_csv(text.as_bytes()).unwrap();
    assert_eq!(back, vec![r]);
    let tampered = text.replace(",0.75,", ",0.9,");
    assert!(MetricReport::read_csv(tampered.as_bytes()).is_err());
}

#[test]
fn single_and_duplicate_components() {
    let one = PosteriorBank::from_flat(vec![0.4, -1.0], vec![-0.5, 0.3], 2).unwrap();
    let z = [0.1, 0.2];
    let (qz, qzj) = log_q_aggregate(&z, &one, Mode::FullSum, 0).unwrap();
    let own = log_normal(0.1, 0.4, -0.5) + log_normal(0.2, -1.0, 0.3);
    assert!((qz[0] - own).abs() < 1e-12);
    assert!((qzj[0] - log_normal(0.1, 0.4, -0.5)).abs() < 1e-12);

    let two = PosteriorBank::from_flat(vec![0.0, 0.0], vec![0.0, 0.0], 1).unwrap();
    let (qz, _) = log_q_aggregate(&[0.0], &two, Mode::FullSum, 0).unwrap();
    assert!((qz[0] + 0.918_938_533_204_672_7).abs() < 1e-12);
}

#[test]
fn separated_posteriors_carry_index_entropy() {
    let mu = vec![-5.0, -5.0, -5.0, 5.0, 5.0, -5.0, 5.0, 5.0];
    let bank = PosteriorBank::from_flat(mu, vec![-8.0; 8], 2).unwrap();
    let mi = estimate_mi_index_code(&bank, M, Mode::FullSum, 0).unwrap();
    assert!((mi - 4f64.ln()).abs() < 0.05, "{mi}");
}

#[test]
fn factorized_aggregate_has_no_tc() {
    let xs = [-1.5, 0.0, 0.7];
    let ys = [-0.4, 1.2];
    let (mut mu, mut lv) = (Vec::new(), Vec::new());
    for &x in &xs {
        for &y in &ys {
            mu.extend([x, y]);
            lv.extend([-1.0, -0.5]);
        }
    }
    let bank = PosteriorBank::from_flat(mu, lv, 2).unwrap();
    let tc = estimate_tc(&bank, 4096, Mode::FullSum, 1).unwrap();
    assert!(tc.abs() < 0.05, "{tc}");
}

#[test]
fn dimension_wise_kl_cases() {
    let standard = PosteriorBank::from_flat(vec![0.0; 20], vec![0.0; 20], 2).unwrap();
    let d = estimate_dwkl(&standard, 4096, Mode::FullSum, 0).unwrap();
    assert!(d.abs() < 0.05, "{d}");
    let shifted = PosteriorBank::from_flat(vec![1.0; 10], vec![0.0; 10], 1).unwrap();
    let d = estimate_dwkl(&shifted, 4096, Mode::FullSum, 0).unwrap();
    assert!((d - 0.5).abs() < 0.05, "{d}");
}

#[test]
fn factor_mi_cases() {
    // level 0 near -5, level 1 near +5
    let n = 40;
    let mu: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { -5.0 } else { 5.0 }).collect();
    let factor: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let bank = PosteriorBank::from_flat(mu, vec![0.01f64.ln(); n], 1).unwrap();
    let mi = factor_mi(&bank, &factor, 2, 0, M, 0).unwrap();
    assert!((mi - 2f64.ln()).abs() < 0.05, "{mi}");

    let mut r = rng::stream(5, 0);
    let n = 400;
    let mu = (0..n * 2).map(|_| r.random_range(-1.0..1.0)).collect();
    let bank = PosteriorBank::from_flat(mu, vec![0.0; n * 2], 2).unwrap();
    let factor: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
    for j in 0..2 {
        let mi = factor_mi(&bank, &factor, 3, j, 4096, 1).unwrap();
        assert!(mi.abs() < 0.05, "{mi}");
        assert!(mi <= 3f64.ln() + 0.05);
    }
    assert!(factor_mi(&bank, &factor, 2, 0, 10, 0).is_err());
}

#[test]
fn minibatch_mode_tracks_full_sum_on_average() {
    let bank = random_bank(1000, 2, 8);
    let s = draw_samples(&bank, 512, 3);
    let (full, _) = log_q_aggregate(&s.z, &bank, Mode::FullSum, 0).unwrap();
    let full_mean = full.iter().sum::<f64>() / full.len() as f64;
    let draws: Vec<f64> = (0..10)
        .map(|seed| {
            let (mws, _) = log_q_aggregate(&s.z, &bank, Mode::Mws { batch: 256 }, seed).unwrap();
            mws.iter().sum::<f64>() / mws.len() as f64
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    assert!((mean - full_mean).abs() < 0.1, "{mean} vs {full_mean}");
}

#[test]
fn decomposition_identity_on_twenty_banks() {
    for seed in 0..20u64 {
        let d = 1 + (seed as usize % 4);
        let bank = random_bank(200, d, 100 + seed);
        let est = decompose(&bank, M, Mode::FullSum, seed).unwrap();
        let exact = bank.mean_kl();
        let rel = (est.mi + est.tc + est.dwkl - exact).abs() / exact;
        assert!(rel < 0.05, "bank {seed}: relative gap {rel}");
    }
}

#[test]
fn discrete_oracle_cases() {
    let product = [0.06, 0.14, 0.24, 0.56];
    let info = brute_force_discrete(&product, &[2, 2]).unwrap();
    assert!(info.tc.abs() < 1e-12);
    let diag = brute_force_discrete(&[0.5, 0.0, 0.0, 0.5], &[2, 2]).unwrap();
    assert!((diag.mi_first_rest - 2f64.ln()).abs() < 1e-12);
    assert!((diag.tc - 2f64.ln()).abs() < 1e-12);
    let uniform = brute_force_discrete(&[0.25; 4], &[2, 2]).unwrap();
    assert!(uniform.mi_first_rest.abs() < 1e-12);
}

#[test]
fn score_and_rmse_arithmetic() {
    assert!((disentanglement_score(1.0, 0.3) - 0.7).abs() < 1e-15);
    assert_eq!(disentanglement_score(0.0, 0.0), 0.0);
    let t = [0.5, -1.0, 2.0, 3.0];
    assert_eq!(utility_rmse(&t, &t, 2).unwrap(), 0.0);
    let shifted: Vec<f64> = t.iter().map(|v| v - 0.25).collect();
    assert!((utility_rmse(&shifted, &t, 4).unwrap() - 0.25).abs() < 1e-12);
    let r = correlation(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0], CorrelationKind::Pearson).unwrap();
    assert!((r - 0.8).abs() < 1e-12);
    let xs = [0.3, -1.0, 2.0];
    assert!((correlation(&xs, &xs, CorrelationKind::Pearson).unwrap() - 1.0).abs() < 1e-12);
    let neg: Vec<f64> = xs.iter().map(|v| -v).collect();
    assert!((correlation(&xs, &neg, CorrelationKind::Spearman).unwrap() + 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn terms_add_up_to_kl(seed in 0u64..1000, n in 2usize..30, d in 1usize..4) {
        let bank = random_bank(n, d, seed);
        let est = decompose(&bank, 200, Mode::FullSum, seed).unwrap();
        prop_assert!((est.mi + est.tc + est.dwkl - est.kl).abs() < 1e-9);
        // index-code information is bounded by log N up to Monte Carlo noise
        prop_assert!(est.mi <= (n as f64).ln() + 1e-9);
        prop_assert!(est.mi >= -0.05);
    }

    #[test]
    fn discrete_tc_nonnegative(counts in proptest::collection::vec(0usize..5, 8)) {
        prop_assume!(counts.iter().sum::<usize>() > 0);
        let info = brute_force_discrete(&table_of(&counts), &[2, 2, 2]).unwrap();
        prop_assert!(info.tc >= -1e-12);
        prop_assert!(info.mi_first_rest >= -1e-12);
        prop_assert!(info.mi_first_rest <= info.marginal_entropies[0] + 1e-12);
    }

    #[test]
    fn correlation_bounded(xs in proptest::collection::vec(-10.0f64..10.0, 3..20), shift in -1.0f64..1.0) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x.sin() + shift * i as f64).collect();
        for kind in [CorrelationKind::Pearson, CorrelationKind::Spearman] {
            if let Ok(c) = correlation(&xs, &ys, kind) {
                prop_assert!((-1.0..=1.0).contains(&c));
            }
        }
    }
}
