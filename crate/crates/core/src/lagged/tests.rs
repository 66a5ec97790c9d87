use super::*;
use crate::baselines::kalman_filter;
use crate::model::{SsmDefinition, StateSpaceModel, LN_2PI};
use crate::models::linear::linear_gaussian_model;
use crate::models::lorenz96::{lorenz96_model, perturbed_equilibrium};
use crate::rng::stream;
use crate::smc::{TemperMode, WeightedEnsemble};
use approx::assert_abs_diff_eq;

fn twin_data<M: StateSpaceModel>(model: &M, t: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Option<Vec<f64>>>) {
    let mut rng = stream(seed, &[99]);
    let mut xs = vec![model.x0().to_vec()];
    let mut ys = vec![None];
    for n in 1..=t {
        let x = model.sample_transition(n, &mut rng, &xs[n - 1]).unwrap();
        ys.push(if model.is_observed(n) {
            Some(model.sample_observation(&mut rng, &x).unwrap())
        } else {
            None
        });
        xs.push(x);
    }
    (xs, ys)
}

fn rel_l2(est: &[Vec<f64>], reference: &[Vec<f64>]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (e, r) in est.iter().zip(reference) {
        for (a, b) in e.iter().zip(r) {
            num += (a - b) * (a - b);
            den += b * b;
        }
    }
    (num / den).sqrt()
}

fn kalman_mu(model: &SsmDefinition, scale: f64) -> Box<dyn PredictorSource> {
    MuConfig::KalmanPredictor {
        diagonal: false,
        cov_scale: scale,
    }
    .tracker(Some(model), 0)
    .unwrap()
}

fn transition_mu() -> Box<dyn PredictorSource> {
    MuConfig::Transition.tracker(None, 0).unwrap()
}

fn lg_log_n(x: f64, m: f64, v: f64) -> f64 {
    -0.5 * (LN_2PI + v.ln() + (x - m) * (x - m) / v)
}

#[test]
fn transition_mu_gives_bootstrap_increment() {
    let model = linear_gaussian_model(3, 0.5, 0.2, vec![0.0; 3]).unwrap();
    let (a, b, x, y) = ([0.1, 0.2, 0.3], [0.0, 0.5, -0.1], [1.0, 0.0, 0.2], [0.9, 0.1, 0.3]);
    let w = incremental_log_weight(&model, 5, 1, None, &a, &b, &x, &y, 0).unwrap();
    assert_eq!(w, model.likelihood_logpdf(&x, &y).unwrap());
}

#[test]
fn incremental_weight_matches_gaussian_oracle() {
    let (r1, r2) = (0.6f64, 0.3f64);
    let model = linear_gaussian_model(1, r1, r2, vec![0.0]).unwrap();
    let mu = ProposalMu::diagonal(vec![0.4], vec![1.7], MuSource::KalmanPredictor).unwrap();
    let (x_lag, x_next, x_n, y_n) = (0.2, -0.3, 0.8, 1.1);
    let w = incremental_log_weight(&model, 4, 2, Some(&mu), &[x_lag], &[x_next], &[x_n], &[y_n], 0).unwrap();
    let oracle = lg_log_n(x_next, 0.4, 1.7) + lg_log_n(y_n, x_n, r2 * r2) - lg_log_n(x_next, x_lag, r1 * r1);
    assert_abs_diff_eq!(w, oracle, epsilon = 1e-13);
    // Early phase: only the likelihood.
    let early = incremental_log_weight(&model, 2, 2, Some(&mu), &[x_lag], &[x_next], &[x_n], &[y_n], 0).unwrap();
    assert_abs_diff_eq!(early, lg_log_n(y_n, x_n, r2 * r2), epsilon = 1e-13);
}

#[test]
fn non_finite_increment_reports_particle() {
    let model = linear_gaussian_model(1, 1.0, 1.0, vec![0.0]).unwrap();
    let err = incremental_log_weight(&model, 1, 1, None, &[0.0], &[0.0], &[f64::NAN], &[0.0], 7).unwrap_err();
    assert!(matches!(err, crate::Error::DegenerateParticle { index: 7, step: 1, .. }));
}

#[test]
fn unobserved_step_only_propagates() {
    let model = lorenz96_model(8, 0.05, 0.1, 0.1, 3, perturbed_equilibrium(8, 3, 0.01)).unwrap();
    let cfg = LaggedConfig {
        particles: 10,
        n_star: 5.0,
        ..Default::default()
    };
    let mut f = LaggedFilter::new(&model, cfg, transition_mu(), 1).unwrap();
    let before = f.ensemble().log_weights.clone();
    let diag = f.step(None).unwrap();
    assert_eq!(diag.temperatures, 0);
    assert!(!diag.observed);
    assert_eq!(f.ensemble().log_weights, before);
    assert_eq!(f.window_blocks(), 1);
    assert!(f.ensemble().particles[0].newest(8) != model.x0());
    // An observation at an unobserved time is rejected.
    assert!(f.step(Some(&[0.0; 8])).is_err());
}

#[test]
fn tempered_bootstrap_matches_kalman() {
    // L exceeds T, so the filter never leaves the exact-smoother phase.
    let model = linear_gaussian_model(1, 0.7, 0.5, vec![0.0]).unwrap();
    let t = 10;
    let (_, ys) = twin_data(&model, t, 3);
    let kf = kalman_filter(&model, &ys).unwrap();
    let n = 2000;
    let cfg = LaggedConfig {
        particles: n,
        n_star: 0.5 * n as f64,
        lag: t + 5,
        ..Default::default()
    };
    let (means, diags) = run_lagged_filter(&model, cfg, transition_mu(), &ys, 4).unwrap();
    // Posterior variance from the Kalman recursion, for the MC standard error.
    let (mut p, r1, r2) = (0.0, 0.49, 0.25);
    for k in 1..=t {
        let pp: f64 = p + r1;
        p = pp * r2 / (pp + r2);
        let se = (p / n as f64).sqrt();
        let err = (means[k][0] - kf.filter_means[k][0]).abs();
        assert!(err < 3.0 * se * 2f64.sqrt(), "time {k}: err {err}, se {se}");
    }
    assert!(diags.iter().all(|d| d.window_blocks <= t));
}

#[test]
fn kalman_mu_pipeline_tracks_exact_filter() {
    let d = 20;
    let model = linear_gaussian_model(d, 0.5f64.sqrt(), 0.1, vec![1.5; d]).unwrap();
    let (_, ys) = twin_data(&model, 50, 5);
    let kf = kalman_filter(&model, &ys).unwrap();
    let cfg = LaggedConfig {
        particles: 200,
        n_star: 160.0,
        lag: 1,
        ..Default::default()
    };
    let (means, diags) = run_lagged_filter(&model, cfg, kalman_mu(&model, 1.0), &ys, 6).unwrap();
    let err = rel_l2(&means, &kf.filter_means);
    assert!(err < 0.05, "relative L2 error {err}");
    for diag in &diags {
        assert!(diag.window_blocks <= 2);
        assert_eq!(*diag.phis.last().unwrap(), 1.0);
        assert!(diag.phis.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(diag.temperatures, diag.phis.len());
    }
}

#[test]
fn fixed_schedule_uses_requested_temperatures() {
    let d = 4;
    let model = linear_gaussian_model(d, 0.5, 0.3, vec![0.0; d]).unwrap();
    let (_, ys) = twin_data(&model, 5, 8);
    let cfg = LaggedConfig {
        particles: 50,
        n_star: 25.0,
        lag: 2,
        tempering: TemperMode::Fixed { steps: d },
        ..Default::default()
    };
    let (_, diags) = run_lagged_filter(&model, cfg, kalman_mu(&model, 1.0), &ys, 1).unwrap();
    for diag in diags {
        assert_eq!(diag.temperatures, d + 1);
        assert!(diag.window_blocks <= 3);
    }
}

#[test]
fn identical_seeds_are_bit_identical() {
    let model = linear_gaussian_model(5, 0.5, 0.3, vec![0.0; 5]).unwrap();
    let (_, ys) = twin_data(&model, 8, 2);
    let cfg = LaggedConfig {
        particles: 40,
        n_star: 30.0,
        lag: 2,
        ..Default::default()
    };
    let a = run_lagged_filter(&model, cfg.clone(), kalman_mu(&model, 2.0), &ys, 9).unwrap().0;
    let b = run_lagged_filter(&model, cfg.clone(), kalman_mu(&model, 2.0), &ys, 9).unwrap().0;
    let c = run_lagged_filter(&model, cfg, kalman_mu(&model, 2.0), &ys, 10).unwrap().0;
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sparse_observations_with_ensemble_mu() {
    let d = 10;
    let model = lorenz96_model(d, 0.05, 0.1, 0.1, 3, perturbed_equilibrium(d, 4, 0.01)).unwrap();
    let (xs, ys) = twin_data(&model, 30, 4);
    let mu = MuConfig::EtkfSqrtPredictor {
        members: 20,
        var_floor: 1e-8,
        cov_scale: 1.0,
    }
    .tracker(Some(&model), 3)
    .unwrap();
    let cfg = LaggedConfig {
        particles: 50,
        n_star: 40.0,
        lag: 1,
        ..Default::default()
    };
    let (means, diags) = run_lagged_filter(&model, cfg, mu, &ys, 4).unwrap();
    for diag in &diags {
        assert_eq!(diag.observed, diag.n % 3 == 0);
        assert!(diag.window_blocks <= 1 + 3);
        if !diag.observed {
            assert_eq!(diag.temperatures, 0);
        }
    }
    assert!(rel_l2(&means, &xs) < 0.1);
}

#[test]
fn estimate_examples() {
    let d = 2;
    let parts: Vec<WindowParticle> = (0..4)
        .map(|i| WindowParticle {
            data: vec![0.0, 0.0, i as f64, -(i as f64)],
        })
        .collect();
    let mut ens = WeightedEnsemble::uniform(parts).unwrap();
    assert_eq!(filter_estimate(&ens, d, |_| vec![3.5]).unwrap(), vec![3.5]);
    assert_eq!(filter_estimate(&ens, d, |x| x.to_vec()).unwrap(), vec![1.5, -1.5]);

    let mut rng = stream(12, &[]);
    use rand::Rng;
    ens.log_weights = (0..4).map(|_| rng.random::<f64>() * 3.0).collect();
    let est = filter_estimate(&ens, d, |x| vec![x[0] * x[0]]).unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, lw) in ens.log_weights.iter().enumerate() {
        num += lw.exp() * (i * i) as f64;
        den += lw.exp();
    }
    assert_abs_diff_eq!(est[0], num / den, epsilon = 1e-12);
}
