//! Scenario configuration: JSON file + command-line overrides.
//!
//! A scenario bundles everything a run needs: parameter overrides, grid,
//! initial state, solver settings, output directory. Flags win over the
//! config file; the `EPI_SEED` environment variable wins over both for the
//! solver seed. All overrides are validated before any run starts.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::TimeGrid;
use crate::model::{ParameterSet, State};
use crate::solver::SolverConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file `{path}`: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config file `{path}` is not valid JSON: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown parameter `{0}` (expected one of the model parameter names)")]
    UnknownParameter(String),
    #[error("bad --param override `{0}`: expected key=value")]
    BadOverride(String),
    #[error("{0}")]
    Model(#[from] crate::model::ModelError),
    #[error("grid: {0}")]
    Grid(#[from] crate::integrator::SimError),
    #[error("solver: {0}")]
    Solver(#[from] crate::solver::SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Optimize,
    Verify,
}

/// Per-field parameter overrides; anything absent keeps its default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamOverrides {
    pub alpha_r: Option<f64>,
    pub alpha_m: Option<f64>,
    pub beta: Option<f64>,
    pub eta: Option<f64>,
    pub mu: Option<f64>,
    pub rho: Option<f64>,
    pub theta: Option<f64>,
    pub tau: Option<f64>,
    pub phi: Option<f64>,
    pub omega: Option<f64>,
    pub p: Option<f64>,
    pub gamma_d: Option<f64>,
    pub gamma_f: Option<f64>,
    pub gamma_e: Option<f64>,
    pub t_final: Option<f64>,
}

impl ParamOverrides {
    pub fn apply(&self, base: &mut ParameterSet) {
        macro_rules! put {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { base.$field = v; })*
            };
        }
        put!(
            alpha_r, alpha_m, beta, eta, mu, rho, theta, tau, phi, omega, p, gamma_d, gamma_f,
            gamma_e, t_final
        );
    }

    /// Parse a `key=value` flag override into this set.
    pub fn set_from_flag(&mut self, flag: &str) -> Result<(), ConfigError> {
        let (key, value) = flag
            .split_once('=')
            .ok_or_else(|| ConfigError::BadOverride(flag.to_string()))?;
        let parsed: f64 = value
            .trim()
            .parse()
            .map_err(|_| ConfigError::BadOverride(flag.to_string()))?;
        let slot = match key.trim() {
            "alpha_r" => &mut self.alpha_r,
            "alpha_m" => &mut self.alpha_m,
            "beta" => &mut self.beta,
            "eta" => &mut self.eta,
            "mu" => &mut self.mu,
            "rho" => &mut self.rho,
            "theta" => &mut self.theta,
            "tau" => &mut self.tau,
            "phi" => &mut self.phi,
            "omega" => &mut self.omega,
            "p" => &mut self.p,
            "gamma_d" => &mut self.gamma_d,
            "gamma_f" => &mut self.gamma_f,
            "gamma_e" => &mut self.gamma_e,
            "t_final" => &mut self.t_final,
            other => return Err(ConfigError::UnknownParameter(other.to_string())),
        };
        *slot = Some(parsed);
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Uniform step length in weeks.
    pub h: f64,
    /// Horizon override; defaults to the parameter set's `t_final`.
    pub t_final: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            h: 0.25,
            t_final: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialStateConfig {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
}

impl Default for InitialStateConfig {
    fn default() -> Self {
        InitialStateConfig {
            x1: 1.0,
            x2: 0.12,
            x3: 0.004,
            x4: 0.05,
        }
    }
}

impl InitialStateConfig {
    pub fn to_state(&self) -> State {
        State::initial(self.x1, self.x2, self.x3, self.x4)
    }
}

/// Solver overrides; anything absent keeps [`SolverConfig`] defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOverrides {
    pub tol_kkt: Option<f64>,
    pub tol_feas: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
    pub penalty_init: Option<f64>,
    pub penalty_growth: Option<f64>,
    pub seed: Option<u64>,
}

impl SolverOverrides {
    pub fn apply(&self, base: &mut SolverConfig) {
        macro_rules! put {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { base.$field = v; })*
            };
        }
        put!(
            tol_kkt, tol_feas, max_outer, max_inner, penalty_init, penalty_growth, seed
        );
    }
}

/// The on-disk scenario file. Every section is optional; defaults reproduce
/// the reference setup (h = 1/4 week, 52-week horizon).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub params: ParamOverrides,
    pub grid: GridConfig,
    pub initial_state: InitialStateConfig,
    pub mode: Option<Mode>,
    pub solver: SolverOverrides,
    pub output_dir: Option<PathBuf>,
    /// Constant control applied in `simulate` mode; zero when absent.
    pub controls: Option<[f64; 2]>,
    /// Lift the `u >= 0` bounds (the model itself imposes none).
    pub allow_negative_controls: bool,
    /// Check names to skip in `verify` mode (e.g. "slow").
    pub skip: Vec<String>,
}

impl ScenarioConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }
}

/// A fully resolved, validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: ParameterSet,
    pub grid: TimeGrid,
    pub initial: State,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    pub controls: [f64; 2],
    pub allow_negative_controls: bool,
    pub skip: Vec<String>,
}

impl Scenario {
    /// Resolve a config against defaults and validate every invariant.
    /// `EPI_SEED`, when set, overrides the solver seed.
    pub fn resolve(config: &ScenarioConfig) -> Result<Self, ConfigError> {
        let mut params = ParameterSet::default();
        config.params.apply(&mut params);
        params.validate()?;

        let t_final = config.grid.t_final.unwrap_or(params.t_final);
        if t_final != params.t_final {
            return Err(ConfigError::Invalid {
                field: "grid.t_final".into(),
                reason: format!(
                    "conflicts with parameter t_final ({} vs {})",
                    t_final, params.t_final
                ),
            });
        }
        let grid = TimeGrid::from_step(config.grid.h, t_final)?;

        let initial = config.initial_state.to_state();
        for (name, v) in [
            ("initial_state.x1", initial.x1),
            ("initial_state.x2", initial.x2),
            ("initial_state.x3", initial.x3),
            ("initial_state.x4", initial.x4),
        ] {
            if !v.is_finite() {
                return Err(ConfigError::Invalid {
                    field: name.into(),
                    reason: "must be finite".into(),
                });
            }
        }

        let mut solver = SolverConfig::default();
        config.solver.apply(&mut solver);
        if let Ok(seed) = std::env::var("EPI_SEED") {
            let seed: u64 = seed.trim().parse().map_err(|_| ConfigError::Invalid {
                field: "EPI_SEED".into(),
                reason: format!("not a valid unsigned integer: `{seed}`"),
            })?;
            solver.seed = seed;
        }
        solver.validate()?;

        let controls = config.controls.unwrap_or([0.0, 0.0]);
        for (j, v) in controls.iter().enumerate() {
            if !v.is_finite() {
                return Err(ConfigError::Invalid {
                    field: format!("controls[{j}]"),
                    reason: "must be finite".into(),
                });
            }
            if *v < 0.0 && !config.allow_negative_controls {
                return Err(ConfigError::Invalid {
                    field: format!("controls[{j}]"),
                    reason: "negative control requires allow_negative_controls".into(),
                });
            }
        }

        Ok(Scenario {
            params,
            grid,
            initial,
            solver,
            output_dir: config.output_dir.clone().unwrap_or_else(|| ".".into()),
            controls,
            allow_negative_controls: config.allow_negative_controls,
            skip: config.skip.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_reference_setup() {
        let scenario = Scenario::resolve(&ScenarioConfig::default()).unwrap();
        assert_eq!(scenario.grid.n_steps(), 208);
        assert_eq!(scenario.grid.h(), 0.25);
        assert_eq!(scenario.params, ParameterSet::default());
        assert_eq!(scenario.initial.x2, 0.12);
        assert_eq!(scenario.controls, [0.0, 0.0]);
    }

    #[test]
    fn flag_overrides_parse_and_apply() {
        let mut config = ScenarioConfig::default();
        config.params.set_from_flag("gamma_f=0.9").unwrap();
        config.params.set_from_flag(" t_final = 26 ").unwrap();
        config.grid.h = 0.5;
        let scenario = Scenario::resolve(&config).unwrap();
        assert_eq!(scenario.params.gamma_f, 0.9);
        assert_eq!(scenario.grid.n_steps(), 52);
        assert!(config.params.set_from_flag("nope=1").is_err());
        assert!(config.params.set_from_flag("gamma_f").is_err());
    }

    #[test]
    fn invalid_overrides_are_rejected() {
        let mut config = ScenarioConfig::default();
        config.params.mu = Some(2.0);
        assert!(Scenario::resolve(&config).is_err());

        let mut config = ScenarioConfig::default();
        config.grid.h = 0.3; // does not divide 52
        assert!(Scenario::resolve(&config).is_err());

        let mut config = ScenarioConfig::default();
        config.controls = Some([-0.1, 0.0]);
        assert!(Scenario::resolve(&config).is_err());
        config.allow_negative_controls = true;
        assert!(Scenario::resolve(&config).is_ok());
    }

    #[test]
    fn scenario_json_rejects_unknown_sections() {
        let ok = r#"{"params": {"gamma_f": 0.5}, "grid": {"h": 0.25}}"#;
        assert!(serde_json::from_str::<ScenarioConfig>(ok).is_ok());
        let bad = r#"{"params": {"gamma_f": 0.5}, "grld": {}}"#;
        assert!(serde_json::from_str::<ScenarioConfig>(bad).is_err());
        let bad_param = r#"{"params": {"gamma_x": 0.5}}"#;
        assert!(serde_json::from_str::<ScenarioConfig>(bad_param).is_err());
    }

    #[test]
    fn env_seed_overrides_config() {
        // Serialized env-var test: set, resolve, restore.
        std::env::set_var("EPI_SEED", "777");
        let mut config = ScenarioConfig::default();
        config.solver.seed = Some(3);
        let scenario = Scenario::resolve(&config).unwrap();
        std::env::remove_var("EPI_SEED");
        assert_eq!(scenario.solver.seed, 777);
    }
}
