//! Experiment configuration (TOML).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use lagpf::baselines::{EnsembleKind, MAX_KALMAN_DIM};
use lagpf::lagged::{LaggedConfig, MuConfig, RwmConfig};
use lagpf::models::swe::SweParams;
use lagpf::smc::{ResampleScheme, TemperMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Number of time steps `T`.
    pub steps: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub reference: ReferenceKind,
    /// Floor `eps` of the relative absolute error denominator.
    #[serde(default = "default_error_floor")]
    pub error_floor: f64,
    #[serde(default)]
    pub histogram: HistogramSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub model: ModelSpec,
    pub filters: Vec<FilterSpec>,
}

fn default_error_floor() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// Kalman filter for linear models, truth otherwise.
    #[default]
    Auto,
    Kalman,
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            bins: 40,
            lo: 0.0,
            hi: 2.0,
        }
    }
}

impl HistogramSpec {
    pub fn edges(&self) -> Vec<f64> {
        let w = (self.hi - self.lo) / self.bins as f64;
        (0..=self.bins).map(|i| self.lo + w * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    LinearGaussian {
        d: usize,
        r1_sqrt: f64,
        r2_sqrt: f64,
        /// Every coordinate of `x_0`.
        x0: f64,
        #[serde(default = "one")]
        obs_frequency: usize,
    },
    Lorenz96 {
        d: usize,
        dt: f64,
        r1_sqrt: f64,
        r2_sqrt: f64,
        obs_frequency: usize,
        /// 0-based coordinate of `x_0` nudged off the equilibrium.
        perturbed: usize,
        perturbation: f64,
    },
    ShallowWater {
        d_g: usize,
        #[serde(default = "default_a")]
        a: f64,
        #[serde(default = "default_g")]
        g: f64,
        #[serde(default = "default_cfl")]
        cfl: f64,
        r1_sqrt: f64,
        r2_sqrt: f64,
    },
    Factorized {
        d: usize,
        m: usize,
        rho: f64,
        sigma: f64,
        tau: f64,
        coupling: f64,
        x0: f64,
    },
}

fn one() -> usize {
    1
}

fn default_a() -> f64 {
    SweParams::default().a
}

fn default_g() -> f64 {
    SweParams::default().g
}

fn default_cfl() -> f64 {
    SweParams::default().cfl
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        match *self {
            ModelSpec::LinearGaussian { d, .. } | ModelSpec::Lorenz96 { d, .. } | ModelSpec::Factorized { d, .. } => d,
            ModelSpec::ShallowWater { d_g, .. } => 3 * d_g * d_g,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, ModelSpec::LinearGaussian { .. })
    }

    pub fn is_gaussian(&self) -> bool {
        !matches!(self, ModelSpec::Factorized { .. })
    }

    pub fn obs_frequency(&self) -> usize {
        match *self {
            ModelSpec::LinearGaussian { obs_frequency, .. } | ModelSpec::Lorenz96 { obs_frequency, .. } => {
                obs_frequency
            }
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FilterSpec {
    Lagged {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        particles: usize,
        /// `N* / N`.
        #[serde(default = "default_n_star")]
        n_star_fraction: f64,
        #[serde(default = "one")]
        lag: usize,
        #[serde(default = "default_sweeps")]
        sweeps: usize,
        #[serde(default)]
        initial_phi: f64,
        #[serde(default)]
        tempering: TemperMode,
        #[serde(default)]
        scheme: ResampleScheme,
        #[serde(default = "default_mu")]
        mu: MuConfig,
    },
    Kalman {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Enkf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        members: usize,
    },
    Etkf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        members: usize,
    },
    EtkfSqrt {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        members: usize,
    },
}

fn default_n_star() -> f64 {
    0.8
}

fn default_sweeps() -> usize {
    RwmConfig::default().sweeps
}

fn default_mu() -> MuConfig {
    MuConfig::Transition
}

impl FilterSpec {
    /// Output name: the label if given, the kind otherwise.
    pub fn name(&self) -> String {
        let (label, kind) = match self {
            FilterSpec::Lagged { label, .. } => (label, "lpf"),
            FilterSpec::Kalman { label } => (label, "kf"),
            FilterSpec::Enkf { label, .. } => (label, "enkf"),
            FilterSpec::Etkf { label, .. } => (label, "etkf"),
            FilterSpec::EtkfSqrt { label, .. } => (label, "etkf-sqrt"),
        };
        label.clone().unwrap_or_else(|| kind.to_string())
    }

    pub fn ensemble_kind(&self) -> Option<(EnsembleKind, usize)> {
        match *self {
            FilterSpec::Enkf { members, .. } => Some((EnsembleKind::Enkf, members)),
            FilterSpec::Etkf { members, .. } => Some((EnsembleKind::Etkf, members)),
            FilterSpec::EtkfSqrt { members, .. } => Some((EnsembleKind::EtkfSqrt, members)),
            _ => None,
        }
    }

    /// Core filter settings for a lagged spec.
    pub fn lagged_config(&self) -> Option<(LaggedConfig, MuConfig)> {
        match self {
            FilterSpec::Lagged {
                particles,
                n_star_fraction,
                lag,
                sweeps,
                initial_phi,
                tempering,
                scheme,
                mu,
                ..
            } => {
                let cfg = LaggedConfig {
                    particles: *particles,
                    n_star: n_star_fraction * *particles as f64,
                    lag: *lag,
                    initial_phi: *initial_phi,
                    tempering: *tempering,
                    scheme: *scheme,
                    rwm: RwmConfig {
                        sweeps: *sweeps,
                        ..RwmConfig::default()
                    },
                    ..LaggedConfig::default()
                };
                Some((cfg, mu.clone()))
            }
            _ => None,
        }
    }
}

/// Above this many particle-coordinate-sweep updates a run is flagged as slow.
pub const SLOW_RUN_THRESHOLD: f64 = 1e11;

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml_str(&s).map_err(|e| match e {
            BenchError::Config(m) => BenchError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| BenchError::Config(e.to_string()))
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml_string()?.as_bytes());
        Ok(format!("{digest:x}"))
    }

    /// Copy with every seed shifted by `offset`.
    pub fn with_seed_offset(&self, offset: u64) -> Self {
        let mut c = self.clone();
        c.seeds.iter_mut().for_each(|s| *s = s.wrapping_add(offset));
        c
    }

    pub fn reference(&self) -> ReferenceKind {
        match self.reference {
            ReferenceKind::Auto if self.model.is_linear() => ReferenceKind::Kalman,
            ReferenceKind::Auto => ReferenceKind::Truth,
            r => r,
        }
    }

    /// Rough work estimate: state coordinates touched by all runs.
    pub fn estimated_work(&self) -> f64 {
        let d = self.model.dim() as f64;
        let t = self.steps as f64;
        let seeds = self.seeds.len() as f64;
        let per_filter: f64 = self
            .filters
            .iter()
            .map(|f| match f {
                FilterSpec::Lagged {
                    particles, sweeps, lag, ..
                } => *particles as f64 * (*lag as f64 + 1.0) * *sweeps as f64 * 10.0,
                FilterSpec::Kalman { .. } => d * d,
                FilterSpec::Enkf { members, .. }
                | FilterSpec::Etkf { members, .. }
                | FilterSpec::EtkfSqrt { members, .. } => *members as f64 * 10.0,
            })
            .sum();
        per_filter * d * t * seeds
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        if self.steps == 0 {
            return bad("steps (T) must be >= 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seed list must not be empty".into());
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if !(self.error_floor > 0.0) {
            return bad("error_floor must be positive".into());
        }
        let h = &self.histogram;
        if h.bins == 0 || !(h.hi > h.lo) {
            return bad("histogram needs bins >= 1 and hi > lo".into());
        }
        self.validate_model()?;
        if self.filters.is_empty() {
            return bad("at least one filter is required".into());
        }
        let mut names = HashSet::new();
        for f in &self.filters {
            if !names.insert(f.name()) {
                return bad(format!("duplicate filter name '{}'", f.name()));
            }
            self.validate_filter(f)?;
        }
        if self.reference() == ReferenceKind::Kalman && !self.model.is_linear() {
            return bad("Kalman reference needs the linear-Gaussian model".into());
        }
        Ok(())
    }

    fn validate_model(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(BenchError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        match self.model {
            ModelSpec::LinearGaussian {
                d,
                r1_sqrt,
                r2_sqrt,
                obs_frequency,
                ..
            } => {
                if d == 0 || obs_frequency == 0 {
                    return bad("d and obs_frequency must be >= 1".into());
                }
                positive("r1_sqrt", r1_sqrt)?;
                positive("r2_sqrt", r2_sqrt)?;
            }
            ModelSpec::Lorenz96 {
                d,
                dt,
                r1_sqrt,
                r2_sqrt,
                obs_frequency,
                ..
            } => {
                if d < 4 || obs_frequency == 0 {
                    return bad("Lorenz 96 needs d >= 4 and obs_frequency >= 1".into());
                }
                positive("dt", dt)?;
                positive("r1_sqrt", r1_sqrt)?;
                positive("r2_sqrt", r2_sqrt)?;
            }
            ModelSpec::ShallowWater {
                d_g,
                a,
                g,
                cfl,
                r1_sqrt,
                r2_sqrt,
            } => {
                SweParams { d_g, a, g, cfl }
                    .validate()
                    .map_err(|e| BenchError::Config(e.to_string()))?;
                positive("r1_sqrt", r1_sqrt)?;
                positive("r2_sqrt", r2_sqrt)?;
            }
            ModelSpec::Factorized { d, m, sigma, tau, .. } => {
                if d == 0 || m > d {
                    return bad(format!("factorized model needs 1 <= m <= d, got m={m}, d={d}"));
                }
                positive("sigma", sigma)?;
                positive("tau", tau)?;
            }
        }
        Ok(())
    }

    fn validate_filter(&self, f: &FilterSpec) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(format!("filter '{}': {m}", f.name())));
        match f {
            FilterSpec::Lagged { mu, .. } => {
                let (cfg, _) = f.lagged_config().expect("lagged spec");
                if let Err(e) = cfg.validate() {
                    return bad(e.to_string());
                }
                if !self.model.is_gaussian() && *mu != MuConfig::Transition {
                    return bad("predictor-based mu needs a Gaussian model".into());
                }
                if matches!(mu, MuConfig::KalmanPredictor { .. }) && !self.model.is_linear() {
                    return bad("Kalman-predictor mu needs the linear-Gaussian model".into());
                }
                if let MuConfig::EtkfSqrtPredictor { members, .. } = mu {
                    if *members < 2 {
                        return bad("ETKF-SQRT predictor needs at least 2 members".into());
                    }
                }
            }
            FilterSpec::Kalman { .. } => {
                if !self.model.is_linear() {
                    return bad("the Kalman filter needs the linear-Gaussian model".into());
                }
                if self.model.dim() > MAX_KALMAN_DIM {
                    return bad(format!("dense Kalman filter limited to d <= {MAX_KALMAN_DIM}"));
                }
            }
            _ => {
                let (_, members) = f.ensemble_kind().expect("ensemble spec");
                if members < 2 {
                    return bad("ensemble filters need at least 2 members".into());
                }
                if !self.model.is_gaussian() {
                    return bad("ensemble filters need a Gaussian model".into());
                }
            }
        }
        Ok(())
    }
}
