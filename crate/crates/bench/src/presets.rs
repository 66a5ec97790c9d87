//! Built-in experiment configurations.

use lagpf::lagged::MuConfig;
use lagpf::smc::{ResampleScheme, TemperMode};

use crate::config::{ExperimentConfig, FilterSpec, HistogramSpec, ModelSpec, ReferenceKind};

fn lagged(particles: usize, n_star_fraction: f64, lag: usize, mu: MuConfig) -> FilterSpec {
    FilterSpec::Lagged {
        label: None,
        particles,
        n_star_fraction,
        lag,
        sweeps: 20,
        initial_phi: 0.0,
        tempering: TemperMode::Adaptive,
        scheme: ResampleScheme::default(),
        mu,
    }
}

fn baselines(members: usize) -> Vec<FilterSpec> {
    vec![
        FilterSpec::Enkf { label: None, members },
        FilterSpec::Etkf { label: None, members },
        FilterSpec::EtkfSqrt { label: None, members },
    ]
}

fn base(name: &str, description: &str, steps: usize, seeds: u64, model: ModelSpec, filters: Vec<FilterSpec>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        description: description.into(),
        steps,
        seeds: (0..seeds).collect(),
        reference: ReferenceKind::Auto,
        error_floor: 1e-8,
        histogram: HistogramSpec::default(),
        output_dir: None,
        model,
        filters,
    }
}

fn linear(d: usize) -> ModelSpec {
    ModelSpec::LinearGaussian {
        d,
        r1_sqrt: std::f64::consts::FRAC_1_SQRT_2,
        r2_sqrt: 0.1,
        x0: 1.5,
        obs_frequency: 1,
    }
}

fn kalman_mu() -> MuConfig {
    MuConfig::KalmanPredictor {
        diagonal: false,
        cov_scale: 1.0,
    }
}

fn etkf_sqrt_mu(members: usize) -> MuConfig {
    MuConfig::EtkfSqrtPredictor {
        members,
        var_floor: 1e-8,
        cov_scale: 1.0,
    }
}

fn lorenz(d: usize) -> ModelSpec {
    ModelSpec::Lorenz96 {
        d,
        dt: 0.05,
        r1_sqrt: 0.1,
        r2_sqrt: 0.1,
        obs_frequency: 3,
        perturbed: 19.min(d - 1),
        perturbation: 0.01,
    }
}

fn swe(d_g: usize) -> ModelSpec {
    ModelSpec::ShallowWater {
        d_g,
        a: 2.0,
        g: 9.81,
        cfl: 0.5,
        r1_sqrt: 0.01,
        r2_sqrt: 0.01,
    }
}

/// Every preset, full scale first then desk scale.
pub fn presets() -> Vec<ExperimentConfig> {
    let lg = {
        let mut f = vec![lagged(100, 0.8, 1, kalman_mu())];
        f.extend(baselines(100));
        f.push(FilterSpec::Kalman { label: None });
        base(
            "linear-gaussian",
            "Random walk, d = 500, fully observed every step, 104 runs",
            1000,
            104,
            linear(500),
            f,
        )
    };
    let mut lg_small = lg.clone();
    lg_small.name = "linear-gaussian-small".into();
    lg_small.description = "Random walk shrunk to d = 20, T = 50, lag 2, N = 500".into();
    lg_small.steps = 50;
    lg_small.seeds = (0..5).collect();
    lg_small.model = linear(20);
    lg_small.filters[0] = lagged(500, 0.8, 2, kalman_mu());

    let l96 = {
        let mut f = vec![lagged(100, 0.8, 1, etkf_sqrt_mu(100))];
        f.extend(baselines(100));
        base(
            "lorenz96",
            "Stochastic Lorenz 96, d = 40, observed every third step",
            1000,
            50,
            lorenz(40),
            f,
        )
    };
    let mut l96_small = l96.clone();
    l96_small.name = "lorenz96-small".into();
    l96_small.description = "Lorenz 96, d = 40, T = 150, 5 runs".into();
    l96_small.steps = 150;
    l96_small.seeds = (0..5).collect();

    let sw = {
        let mut f = vec![lagged(100, 0.5, 1, etkf_sqrt_mu(100))];
        f.extend(baselines(1000));
        base(
            "shallow-water",
            "Shallow water dam break, 35 x 35 grid, partial observations",
            500,
            50,
            swe(35),
            f,
        )
    };
    let mut sw_small = sw.clone();
    sw_small.name = "shallow-water-small".into();
    sw_small.description = "Shallow water on an 8 x 8 grid, T = 100, N = N_e = 100, 5 runs".into();
    sw_small.steps = 100;
    sw_small.seeds = (0..5).collect();
    sw_small.model = swe(8);
    sw_small.filters = {
        let mut f = vec![lagged(100, 0.5, 1, etkf_sqrt_mu(100))];
        f.extend(baselines(100));
        f
    };

    let fac = base(
        "factorized",
        "Factorized non-Gaussian model, d = 50, tempered lagged filter against a bootstrap run",
        20,
        5,
        ModelSpec::Factorized {
            d: 50,
            m: 2,
            rho: 0.5,
            sigma: 1.0,
            tau: 1.0,
            coupling: 0.5,
            x0: 0.0,
        },
        vec![
            lagged(200, 0.5, 1, MuConfig::Transition),
            FilterSpec::Lagged {
                label: Some("bootstrap".into()),
                particles: 200,
                n_star_fraction: 0.5,
                lag: 21,
                sweeps: 1,
                initial_phi: 0.0,
                tempering: TemperMode::Fixed { steps: 1 },
                scheme: ResampleScheme::default(),
                mu: MuConfig::Transition,
            },
        ],
    );
    vec![lg, lg_small, l96, l96_small, sw, sw_small, fac]
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    presets().into_iter().find(|c| c.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_have_unique_names() {
        let all = presets();
        let mut names: Vec<_> = all.iter().map(|c| c.name.clone()).collect();
        names.dedup();
        assert_eq!(names.len(), all.len());
        for c in &all {
            c.validate().unwrap_or_else(|e| panic!("{}: {e}", c.name));
        }
    }

    #[test]
    fn full_scale_linear_is_flagged_as_slow() {
        let lg = preset("linear-gaussian").unwrap();
        assert_eq!(lg.seeds.len(), 104);
        assert!(lg.estimated_work() > crate::config::SLOW_RUN_THRESHOLD);
        assert!(preset("linear-gaussian-small").unwrap().estimated_work() < crate::config::SLOW_RUN_THRESHOLD);
    }
}
