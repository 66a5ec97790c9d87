use lagpf::models::lorenz96::{lorenz96_drift, perturbed_equilibrium, rk4_step};
use lagpf_bench::config::ModelSpec;
use lagpf_bench::data::{generate_for, BuiltModel};

fn linear(obs_frequency: usize) -> BuiltModel {
    BuiltModel::build(&ModelSpec::LinearGaussian {
        d: 3,
        r1_sqrt: 0.5,
        r2_sqrt: 0.1,
        x0: 1.5,
        obs_frequency,
    })
    .unwrap()
}

#[test]
fn every_step_observed_gives_t_observations() {
    let data = generate_for(&linear(1), 10, 4).unwrap();
    assert_eq!(data.truth.len(), 11);
    assert_eq!(data.observation_count(), 10);
    assert!(data.obs[0].is_none());
}

#[test]
fn every_third_step_gives_333_of_1000() {
    let data = generate_for(&linear(3), 1000, 4).unwrap();
    assert_eq!(data.observation_count(), 333);
    for (n, y) in data.obs.iter().enumerate() {
        assert_eq!(y.is_some(), n > 0 && n % 3 == 0, "n = {n}");
    }
}

#[test]
fn shorter_run_is_a_prefix_of_a_longer_one() {
    let a = generate_for(&linear(1), 5, 9).unwrap();
    let b = generate_for(&linear(1), 20, 9).unwrap();
    assert_eq!(a.truth[..], b.truth[..6]);
    assert_eq!(a.obs[..], b.obs[..6]);
    assert_ne!(generate_for(&linear(1), 5, 10).unwrap(), a);
}

#[test]
fn small_noise_truth_follows_the_deterministic_orbit() {
    let (d, dt, eps) = (8, 0.05, 1e-9);
    let model = BuiltModel::build(&ModelSpec::Lorenz96 {
        d,
        dt,
        r1_sqrt: eps,
        r2_sqrt: 0.1,
        obs_frequency: 1,
        perturbed: 3,
        perturbation: 0.5,
    })
    .unwrap();
    let t = 20;
    let data = generate_for(&model, t, 1).unwrap();
    let mut x = perturbed_equilibrium(d, 3, 0.5);
    for n in 1..=t {
        x = rk4_step(lorenz96_drift, &x, dt).unwrap();
        let dist = x
            .iter()
            .zip(&data.truth[n])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        // Noise accumulated over n steps, amplified by the short-time dynamics.
        assert!(dist <= 10.0 * eps * (d as f64).sqrt() * n as f64, "n = {n}: {dist}");
    }
}

#[test]
fn factorized_model_builds_and_simulates() {
    let model = BuiltModel::build(&ModelSpec::Factorized {
        d: 6,
        m: 2,
        rho: 0.5,
        sigma: 1.0,
        tau: 1.0,
        coupling: 0.5,
        x0: 0.0,
    })
    .unwrap();
    assert!(model.gaussian().is_none());
    let data = generate_for(&model, 4, 2).unwrap();
    assert_eq!(data.truth[4].len(), 6);
    assert_eq!(data.obs[1].as_ref().unwrap().len(), model.dim_y());
}
