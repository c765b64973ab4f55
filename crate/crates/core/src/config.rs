//! Experiment configuration: a JSON object whose keys all have defaults.
//!
//! ```json
//! {
//!   "nx": 48, "cfl": 0.5, "cost_kind": "hm1", "horizon_splits": 2,
//!   "flow_cap": 2.5,
//!   "outer": { "max_outer_iters": 10 },
//!   "solver": { "tol_primal": 1e-6 },
//!   "output_dir": "out/run", "emit_svg": true
//! }
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::conic::SolverSettings;
use crate::cost::CostKind;
use crate::domain::{build_grid, paper_initial_density, DensityCapMode, Grid, InitialSplitMode, Params, ScenarioState};
use crate::error::{Error, Result};
use crate::optimizer::{BudgetPolicy, OuterLoopConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuterSettings {
    pub max_outer_iters: usize,
    pub rel_change_stop: f64,
    pub budget_policy: BudgetPolicy,
}

impl Default for OuterSettings {
    fn default() -> Self {
        let d = OuterLoopConfig::default();
        OuterSettings {
            max_outer_iters: d.max_outer_iters,
            rel_change_stop: d.rel_change_stop,
            budget_policy: d.budget_policy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub domain_length: f64,
    pub horizon: f64,
    pub free_flow_speed: f64,
    pub rho_star: f64,
    pub state_weight: f64,
    pub beta: f64,
    pub horizon_splits: usize,
    pub flow_cap: Option<f64>,
    pub density_cap_mode: DensityCapMode,
    pub initial_split_mode: InitialSplitMode,
    pub nx: usize,
    pub cfl: f64,
    pub cost_kind: CostKind,
    /// `false` runs the uncontrolled baseline only.
    pub controlled: bool,
    /// Cell averages of the initial density; the sinusoidal profile when absent.
    pub initial_density: Option<Vec<f64>>,
    /// Density of incentivizable vehicles; equals the initial density when absent.
    pub incentivizable_density: Option<Vec<f64>>,
    pub outer: OuterSettings,
    pub solver: SolverSettings,
    pub output_dir: PathBuf,
    pub emit_svg: bool,
    pub preset: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let p = Params::default();
        ExperimentConfig {
            domain_length: p.domain_length,
            horizon: p.horizon,
            free_flow_speed: p.free_flow_speed,
            rho_star: p.rho_star,
            state_weight: p.state_weight,
            beta: p.beta,
            horizon_splits: p.horizon_splits,
            flow_cap: p.flow_cap,
            density_cap_mode: p.density_cap_mode,
            initial_split_mode: p.initial_split_mode,
            nx: 48,
            cfl: 0.5,
            cost_kind: CostKind::Hm1,
            controlled: true,
            initial_density: None,
            incentivizable_density: None,
            outer: OuterSettings::default(),
            solver: SolverSettings::default(),
            output_dir: PathBuf::from("out"),
            emit_svg: true,
            preset: None,
        }
    }
}

impl ExperimentConfig {
    pub fn params(&self) -> Params {
        Params {
            domain_length: self.domain_length,
            horizon: self.horizon,
            free_flow_speed: self.free_flow_speed,
            rho_star: self.rho_star,
            state_weight: self.state_weight,
            beta: self.beta,
            horizon_splits: self.horizon_splits,
            flow_cap: self.flow_cap,
            density_cap_mode: self.density_cap_mode,
            initial_split_mode: self.initial_split_mode,
        }
    }

    pub fn outer_loop(&self) -> OuterLoopConfig {
        OuterLoopConfig {
            max_outer_iters: self.outer.max_outer_iters,
            rel_change_stop: self.outer.rel_change_stop,
            cost_kind: self.cost_kind,
            budget_policy: self.outer.budget_policy,
            solver: self.solver,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(&self.params(), self.nx, self.cfl)
    }

    pub fn scenario(&self, grid: &Grid) -> ScenarioState {
        let rho0 = self.initial_density.clone().unwrap_or_else(|| paper_initial_density(grid));
        let hat = self.incentivizable_density.clone().unwrap_or_else(|| rho0.clone());
        ScenarioState::new(rho0, hat, grid)
    }

    /// Every semantic problem with the config, empty when it is usable.
    pub fn violations(&self) -> Vec<String> {
        let params = self.params();
        let mut out = params.violations();
        if self.nx < 8 {
            out.push(format!("nx must be at least 8, got {}", self.nx));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            out.push(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        for (name, field) in [("initial_density", &self.initial_density), ("incentivizable_density", &self.incentivizable_density)] {
            if let Some(v) = field {
                if v.len() != self.nx {
                    out.push(format!("{name} has {} values but nx = {}", v.len(), self.nx));
                }
            }
        }
        if let Err(e) = self.outer_loop().validate() {
            out.push(e.to_string());
        }
        if out.is_empty() {
            if let Ok(grid) = self.grid() {
                if let Err(list) = crate::domain::validate_scenario(&params, &self.scenario(&grid)) {
                    out.extend(list);
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(v))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses and validates a config. Empty text yields the defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = if text.trim().is_empty() {
        ExperimentConfig::default()
    } else {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}
