//! Scenario files (`"schema": "iccbf/1"`) consumed by the command-line tool.

use std::fmt;
use std::path::PathBuf;

use serde::Deserialize;

use crate::adapt::Adapter;
use crate::cascade::{AlphaVector, DEFAULT_INPUT_RESOLUTION};
use crate::classk::{ClassKFn, ClassKSpec};
use crate::dynamics::{BoxBounds, SystemModel};
use crate::sim::{ConstantInput, GoToGoal, InfeasiblePolicy, NominalController, RolloutOptions};
use crate::validator::ValidationConfig;

pub const SCHEMA: &str = "iccbf/1";

/// A scenario problem located at a field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    DoubleIntegrator {
        dt: f64,
        u_max: f64,
        wall: f64,
        #[serde(default)]
        state_box: Option<Vec<[f64; 2]>>,
    },
    Unicycle {
        dt: f64,
        v_max: f64,
        omega_max: f64,
        obstacle_center: [f64; 2],
        obstacle_radius: f64,
        #[serde(default)]
        state_box: Option<Vec<[f64; 2]>>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    #[serde(default)]
    pub id: Option<String>,
    pub alpha: Vec<ClassKSpec>,
    #[serde(default)]
    pub input_resolution: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidatorSpec {
    #[serde(default = "default_state_res")]
    pub state_res: usize,
    #[serde(default)]
    pub max_evals: Option<u64>,
}

fn default_state_res() -> usize {
    51
}

impl Default for ValidatorSpec {
    fn default() -> Self {
        Self {
            state_res: default_state_res(),
            max_evals: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NominalSpec {
    Constant {
        u: Vec<f64>,
    },
    GoToGoal {
        goal: [f64; 2],
        #[serde(default = "one")]
        k_v: f64,
        #[serde(default = "two")]
        k_omega: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutSpec {
    pub x0: Vec<f64>,
    pub horizon: usize,
    pub nominal: NominalSpec,
    #[serde(default = "yes")]
    pub refine: bool,
    #[serde(default)]
    pub on_infeasible: InfeasiblePolicy,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptSpec {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_dwell")]
    pub dwell: usize,
}

fn default_dwell() -> usize {
    1
}

impl Default for AdaptSpec {
    fn default() -> Self {
        Self {
            enabled: false,
            dwell: 1,
        }
    }
}

/// Linear coefficients to try at each level; candidates are the Cartesian
/// product in row-major order.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub gammas: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    pub system: SystemSpec,
    #[serde(default)]
    pub candidates: Vec<CandidateSpec>,
    #[serde(default = "default_input_res")]
    pub input_resolution: usize,
    #[serde(default)]
    pub validator: ValidatorSpec,
    #[serde(default)]
    pub rollout: Option<RolloutSpec>,
    #[serde(default)]
    pub adapt: AdaptSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_input_res() -> usize {
    DEFAULT_INPUT_RESOLUTION
}

/// A candidate ready for use.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub alpha: AlphaVector<f64>,
    pub input_resolution: usize,
}

impl Scenario {
    /// Parses and checks a scenario. Errors carry the JSON field path.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::at(path, inner)
        })?;
        scenario.check()?;
        Ok(scenario)
    }

    fn check(&self) -> Result<(), ConfigError> {
        if self.schema != SCHEMA {
            return Err(ConfigError::at(
                "schema",
                format!("unsupported schema {:?}, expected {SCHEMA:?}", self.schema),
            ));
        }
        let model = self.model()?;
        if self.input_resolution < 2 {
            return Err(ConfigError::at("input_resolution", "must be at least 2"));
        }
        if self.validator.state_res < 2 {
            return Err(ConfigError::at("validator.state_res", "must be at least 2"));
        }
        self.candidates()?;
        if let Some(r) = &self.rollout {
            if r.x0.len() != model.state_dim() {
                return Err(ConfigError::at(
                    "rollout.x0",
                    format!(
                        "expected {} components, got {}",
                        model.state_dim(),
                        r.x0.len()
                    ),
                ));
            }
            if r.horizon == 0 {
                return Err(ConfigError::at("rollout.horizon", "must be at least 1"));
            }
            if let NominalSpec::Constant { u } = &r.nominal {
                if u.len() != model.input_dim() {
                    return Err(ConfigError::at(
                        "rollout.nominal.u",
                        format!("expected {} components, got {}", model.input_dim(), u.len()),
                    ));
                }
            }
        }
        if self.adapt.dwell == 0 {
            return Err(ConfigError::at("adapt.dwell", "must be at least 1"));
        }
        if self.sweep.is_some() {
            self.sweep_candidates()?;
        }
        Ok(())
    }

    pub fn model(&self) -> Result<SystemModel<f64>, ConfigError> {
        let (model, state_box) = match &self.system {
            SystemSpec::DoubleIntegrator {
                dt,
                u_max,
                wall,
                state_box,
            } => (
                SystemModel::double_integrator(*dt, *u_max, *wall),
                state_box,
            ),
            SystemSpec::Unicycle {
                dt,
                v_max,
                omega_max,
                obstacle_center,
                obstacle_radius,
                state_box,
            } => (
                SystemModel::unicycle(*dt, *v_max, *omega_max, *obstacle_center, *obstacle_radius),
                state_box,
            ),
        };
        let mut model = model.map_err(|e| ConfigError::at("system", e))?;
        if let Some(b) = state_box {
            let bounds = BoxBounds::new(b.iter().map(|[lo, hi]| (*lo, *hi)))
                .map_err(|e| ConfigError::at("system.state_box", e))?;
            model = model
                .with_state_box(bounds)
                .map_err(|e| ConfigError::at("system.state_box", e))?;
        }
        Ok(model)
    }

    pub fn candidates(&self) -> Result<Vec<Candidate>, ConfigError> {
        self.candidates
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let path = format!("candidates[{i}]");
                let alphas = c
                    .alpha
                    .iter()
                    .enumerate()
                    .map(|(j, s)| {
                        ClassKFn::try_from(*s)
                            .map_err(|e| ConfigError::at(format!("{path}.alpha[{j}]"), e))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let id = c.id.clone().unwrap_or_else(|| {
                    format!(
                        "c{i}:{}",
                        alphas
                            .iter()
                            .map(|a| a.label())
                            .collect::<Vec<_>>()
                            .join(",")
                    )
                });
                let alpha = AlphaVector::new(id, alphas)
                    .map_err(|e| ConfigError::at(format!("{path}.alpha"), e))?;
                let input_resolution = c.input_resolution.unwrap_or(self.input_resolution);
                if input_resolution < 2 {
                    return Err(ConfigError::at(
                        format!("{path}.input_resolution"),
                        "must be at least 2",
                    ));
                }
                Ok(Candidate {
                    alpha,
                    input_resolution,
                })
            })
            .collect()
    }

    /// Candidates from the sweep block, in row-major order over the levels.
    pub fn sweep_candidates(&self) -> Result<Vec<AlphaVector<f64>>, ConfigError> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| ConfigError::at("sweep", "missing sweep block"))?;
        if sweep.gammas.is_empty() {
            return Err(ConfigError::at("sweep.gammas", "needs at least one level"));
        }
        for (i, level) in sweep.gammas.iter().enumerate() {
            if level.is_empty() {
                return Err(ConfigError::at(format!("sweep.gammas[{i}]"), "empty level"));
            }
            for (j, &g) in level.iter().enumerate() {
                if !(g > 0.0 && g < 1.0) && !(g == 1.0 && sweep.gammas.len() == 1) {
                    return Err(ConfigError::at(
                        format!("sweep.gammas[{i}][{j}]"),
                        format!("gamma {g} outside (0, 1)"),
                    ));
                }
            }
        }
        let mut combos: Vec<Vec<f64>> = vec![vec![]];
        for level in &sweep.gammas {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    level.iter().map(move |&g| {
                        let mut c = prefix.clone();
                        c.push(g);
                        c
                    })
                })
                .collect();
        }
        combos
            .iter()
            .map(|g| AlphaVector::linear(g).map_err(|e| ConfigError::at("sweep.gammas", e)))
            .collect()
    }

    pub fn validation_config(&self, input_resolution: usize) -> ValidationConfig {
        ValidationConfig {
            state_resolution: self.validator.state_res,
            input_resolution,
            max_evals: self.validator.max_evals,
        }
    }

    pub fn rollout_options(&self) -> RolloutOptions {
        self.rollout
            .as_ref()
            .map(|r| RolloutOptions {
                refine: r.refine,
                on_infeasible: r.on_infeasible,
            })
            .unwrap_or_default()
    }

    pub fn nominal(
        &self,
        model: &SystemModel<f64>,
    ) -> Result<Box<dyn NominalController<f64> + Send + Sync>, ConfigError> {
        let r = self
            .rollout
            .as_ref()
            .ok_or_else(|| ConfigError::at("rollout", "missing rollout block"))?;
        Ok(match &r.nominal {
            NominalSpec::Constant { u } => Box::new(ConstantInput(u.clone())),
            NominalSpec::GoToGoal { goal, k_v, k_omega } => {
                if model.input_dim() != 2 {
                    return Err(ConfigError::at(
                        "rollout.nominal",
                        "go_to_goal needs a unicycle",
                    ));
                }
                let axes = model.input_box().axes();
                Box::new(GoToGoal {
                    goal: *goal,
                    k_v: *k_v,
                    k_omega: *k_omega,
                    v_max: axes[0].hi,
                    omega_max: axes[1].hi,
                })
            }
        })
    }

    pub fn adapter(
        &self,
        set: crate::adapt::CertifiedSet<f64>,
        model: &SystemModel<f64>,
    ) -> Result<Adapter<f64>, ConfigError> {
        Adapter::new(set, model, self.input_resolution, self.adapt.dwell)
            .map_err(|e| ConfigError::at("adapt", e))
    }
}
