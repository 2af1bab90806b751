use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};

use tshrink_core::harness::lasso::LassoTuning;
use tshrink_core::marginal_kl::{
    compare_joint_marginal, fit_marginal, mc_gradient, mc_negative_elbo_marginal, MarginalConfig,
    MarginalState,
};
use tshrink_core::{vb, Dataset, Hyperparameters};

fn problem(seed: u64, n: usize, p: usize) -> (Dataset, Hyperparameters) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    let beta = DVector::from_fn(p, |j, _| if j == 0 { 2.0 } else { 0.0 });
    let eps = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let data = Dataset::new(x.clone(), x * beta + eps).unwrap();
    let hyper = Hyperparameters {
        a0: 2.0,
        bn: 0.5,
        ..Hyperparameters::default_for(n, p).unwrap().known_sigma(1.0)
    };
    (data, hyper)
}

/// Exact −E_q ln p(Y | β) for independent location–scale t marginals.
fn expected_nll(state: &MarginalState, data: &Dataset, sigma: f64) -> f64 {
    let n = data.n() as f64;
    let rss = data.residual(&state.mu_tilde).norm_squared();
    let spread: f64 = (0..state.p())
        .map(|j| {
            let (s, v) = (state.scale(j), state.df(j));
            data.col_sq_norms()[j] * s * s * v / (v - 2.0)
        })
        .sum();
    0.5 * n * (2.0 * std::f64::consts::PI * sigma * sigma).ln()
        + (rss + spread) / (2.0 * sigma * sigma)
}

/// KL(q ‖ π) of two location–scale t densities by quadrature on β = μ + s·tan θ.
fn kl_quadrature(q: &StudentsT, mu: f64, s: f64, prior: &StudentsT) -> f64 {
    const NODES: usize = 200_000;
    let h = std::f64::consts::PI / NODES as f64;
    let f = |theta: f64| {
        let beta = mu + s * theta.tan();
        let jac = s / theta.cos().powi(2);
        let lq = q.ln_pdf(beta);
        lq.exp() * jac * (lq - prior.ln_pdf(beta))
    };
    // midpoint rule; the integrand vanishes at ±π/2
    (0..NODES)
        .map(|i| f(-std::f64::consts::FRAC_PI_2 + (i as f64 + 0.5) * h))
        .sum::<f64>()
        * h
}

#[test]
fn location_scale_transform_has_target_distribution() {
    const DRAWS: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (df, loc, scale) in [(3.0, 0.5, 2.0), (7.5, -1.0, 0.1)] {
        let base = StudentT::new(df).unwrap();
        let mut xs: Vec<f64> = (0..DRAWS)
            .map(|_| loc + scale * base.sample(&mut rng))
            .collect();
        xs.sort_by(f64::total_cmp);
        let target = StudentsT::new(loc, scale, df).unwrap();
        let m = DRAWS as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = target.cdf(x);
                (f - i as f64 / m).abs().max((i as f64 + 1.0) / m - f)
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.005, "df {df}: KS {ks}");
    }
}

#[test]
fn prior_marginal_has_zero_kl() {
    let (data, hyper) = problem(2, 20, 3);
    let state = MarginalState::prior(3, &hyper);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let est = mc_negative_elbo_marginal(&state, &data, &hyper, 10_000, &mut rng).unwrap();
    let nll = expected_nll(&state, &data, hyper.sigma);
    assert!(
        (est.value - nll).abs() <= (3.0 * est.std_error).max(1e-9 * nll.abs()),
        "{} vs {nll}",
        est.value
    );
}

#[test]
fn objective_at_joint_optimum_matches_quadrature() {
    for seed in 0..3u64 {
        let (data, hyper) = problem(10 + seed, 15, 2);
        let fit = vb::fit(&data, &hyper, &DVector::zeros(2)).unwrap();
        let state = MarginalState::from_joint(&fit.state);
        let prior = StudentsT::new(0.0, (hyper.bn / hyper.a0).sqrt(), 2.0 * hyper.a0).unwrap();
        let kl: f64 = (0..2)
            .map(|j| {
                let (mu, s) = (state.mu_tilde[j], state.scale(j));
                let q = StudentsT::new(mu, s, state.df(j)).unwrap();
                kl_quadrature(&q, mu, s, &prior)
            })
            .sum();
        let exact = expected_nll(&state, &data, hyper.sigma) + kl;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let est = mc_negative_elbo_marginal(&state, &data, &hyper, 100_000, &mut rng).unwrap();
        assert!(est.value.is_finite());
        assert!(
            (est.value - exact).abs() <= 3.0 * est.std_error,
            "seed {seed}: MC {} ± {} vs quadrature {exact}",
            est.value,
            est.std_error
        );
    }
}

#[test]
fn standard_error_scales_with_sample_size() {
    let (data, hyper) = problem(4, 20, 3);
    let state = MarginalState {
        mu_tilde: DVector::from_vec(vec![1.8, 0.1, -0.1]),
        log_scale: DVector::from_vec(vec![-1.5, -2.0, -1.0]),
        log_df_excess: DVector::from_vec(vec![1.0, 0.5, 2.0]),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let small = mc_negative_elbo_marginal(&state, &data, &hyper, 1_000, &mut rng).unwrap();
    let large = mc_negative_elbo_marginal(&state, &data, &hyper, 100_000, &mut rng).unwrap();
    let ratio = small.std_error / large.std_error;
    assert!((ratio - 10.0).abs() <= 2.0, "ratio {ratio}");
}

fn param_mut(s: &mut MarginalState, k: usize) -> &mut DVector<f64> {
    match k {
        0 => &mut s.mu_tilde,
        1 => &mut s.log_scale,
        _ => &mut s.log_df_excess,
    }
}

#[test]
fn gradient_matches_common_random_number_differences() {
    const REPS: u64 = 100;
    const SAMPLES: usize = 100;
    let (data, hyper) = problem(6, 25, 3);
    let state = MarginalState {
        mu_tilde: DVector::from_vec(vec![1.5, 0.3, -0.2]),
        log_scale: DVector::from_vec(vec![-1.2, -1.0, -0.7]),
        log_df_excess: DVector::from_vec(vec![0.8, 1.5, 0.2]),
    };
    let coords: Vec<(usize, usize)> = (0..3).flat_map(|k| (0..3).map(move |j| (k, j))).collect();
    let mut grads = vec![Vec::new(); coords.len()];
    let mut diffs = vec![Vec::new(); coords.len()];
    for r in 0..REPS {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + r);
        let (_, g) = mc_gradient(&state, &data, &hyper, SAMPLES, &mut rng).unwrap();
        for (c, &(k, j)) in coords.iter().enumerate() {
            grads[c].push(match k {
                0 => g.mu_tilde[j],
                1 => g.log_scale[j],
                _ => g.log_df_excess[j],
            });
            let h = 1e-4;
            let eval = |delta: f64| {
                let mut s = state.clone();
                param_mut(&mut s, k)[j] += delta;
                let mut rng = ChaCha8Rng::seed_from_u64(5_000 + r);
                mc_negative_elbo_marginal(&s, &data, &hyper, SAMPLES, &mut rng)
                    .unwrap()
                    .value
            };
            diffs[c].push((eval(h) - eval(-h)) / (2.0 * h));
        }
    }
    let mean_se = |v: &[f64]| {
        let m = v.len() as f64;
        let mean = v.iter().sum::<f64>() / m;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (mean, (var / m).sqrt())
    };
    for (c, &(k, j)) in coords.iter().enumerate() {
        let (g, gse) = mean_se(&grads[c]);
        let (d, dse) = mean_se(&diffs[c]);
        let se = (gse * gse + dse * dse).sqrt();
        assert!(
            (g - d).abs() <= 3.0 * se.max(1e-9),
            "parameter {k}, coordinate {j}: gradient {g} vs difference {d} (s.e. {se})"
        );
    }
}

#[test]
fn adam_fit_improves_on_its_start() {
    let (data, hyper) = problem(7, 40, 4);
    let init = DVector::from_vec(vec![1.5, 0.0, 0.0, 0.0]);
    let config = MarginalConfig {
        steps: 2_000,
        learning_rate: 0.01,
        n_samples: 8,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let start = MarginalState::from_init(&init, &hyper);
    let fit = fit_marginal(&data, &hyper, start.clone(), &config, &mut rng).unwrap();
    assert_eq!(fit.objective_trace.len(), config.steps);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let before = mc_negative_elbo_marginal(&start, &data, &hyper, 100_000, &mut rng).unwrap();
    let after = mc_negative_elbo_marginal(&fit.state, &data, &hyper, 100_000, &mut rng).unwrap();
    assert!(
        after.value < before.value,
        "{} -> {}",
        before.value,
        after.value
    );
    assert!((fit.state.mu_tilde[0] - 2.0).abs() < 0.5);
}

#[test]
fn comparison_is_deterministic() {
    let config = MarginalConfig {
        steps: 200,
        ..MarginalConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let seed: u64 = rng.random();
    let a = compare_joint_marginal(seed, 0, &config, LassoTuning::Universal).unwrap();
    let b = compare_joint_marginal(seed, 0, &config, LassoTuning::Universal).unwrap();
    assert_eq!(a, b);
    assert!(a.mse_nonzero >= 0.0 && a.mse_zero >= 0.0);
}

#[test]
fn zero_samples_is_a_config_error() {
    let (data, hyper) = problem(2, 10, 2);
    let state = MarginalState::prior(2, &hyper);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(mc_negative_elbo_marginal(&state, &data, &hyper, 0, &mut rng).is_err());
}
