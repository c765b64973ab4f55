//! One configured run: baseline simulation or the full control pipeline,
//! plus the per-step diagnostics reported for it.

use std::time::Instant;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::cost::{hm1_deviation, normalized_l2_of_total, SpectralWeights};
use crate::domain::{DensityField, FlowField, Grid};
use crate::error::Result;
use crate::optimizer::{receding_horizon, simulate_uncontrolled, IterationRecord, WindowSummary};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub config: ExperimentConfig,
    pub nt: usize,
    pub dt: f64,
    pub normalized_l2: Vec<f64>,
    pub hm1_deviation: Vec<f64>,
    pub terminal_normalized_l2: f64,
    pub terminal_hm1_deviation: f64,
    pub initial_mass: f64,
    pub terminal_mass: f64,
    /// `None` for the uncontrolled baseline.
    pub max_m2: Option<f64>,
    /// Largest AV mass recruited at any window start.
    pub av_mass_used: f64,
    pub outer_iterations: Vec<usize>,
    pub windows: Vec<WindowSummary>,
    pub wall_time_secs: f64,
}

impl RunSummary {
    /// Smallest metric value over the run and the step where it occurs.
    pub fn min_normalized_l2(&self) -> (usize, f64) {
        self.normalized_l2
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (k, v)| if v < best.1 { (k, v) } else { best })
    }
}

/// Trajectories of a run. The baseline has `rho2 = 0` and no flux.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub grid: Grid,
    pub rho1: DensityField,
    pub rho2: DensityField,
    pub m2: Option<FlowField>,
    pub total: DensityField,
    pub summary: RunSummary,
}

pub fn run_experiment(cfg: &ExperimentConfig, label: &str) -> Result<RunOutput> {
    run_experiment_with(cfg, label, &mut |_| {})
}

pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    label: &str,
    sink: &mut dyn FnMut(&IterationRecord),
) -> Result<RunOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let params = cfg.params();
    let grid = cfg.grid()?;
    let scenario = cfg.scenario(&grid);

    let (rho1, rho2, m2, total, windows) = if cfg.controlled {
        let sol = receding_horizon(&scenario, &params, &grid, &cfg.outer_loop(), sink)?;
        (sol.rho1, sol.rho2, Some(sol.m2), sol.total, sol.windows)
    } else {
        let rho1 = simulate_uncontrolled(&scenario, &params, &grid)?;
        let zeros = DensityField::zeros(grid.nx, grid.nt + 1);
        let total = rho1.clone();
        (rho1, zeros, None, total, Vec::new())
    };

    let weights = SpectralWeights::new(grid.nx, grid.domain_length);
    let steps = total.steps();
    let normalized_l2: Vec<f64> = (0..steps).map(|k| normalized_l2_of_total(total.slice(k), &grid)).collect();
    let hm1: Vec<f64> = (0..steps).map(|k| hm1_deviation(total.slice(k), &weights, scenario.rho_bar)).collect();

    let summary = RunSummary {
        label: label.to_string(),
        config: cfg.clone(),
        nt: grid.nt,
        dt: grid.dt,
        terminal_normalized_l2: normalized_l2[steps - 1],
        terminal_hm1_deviation: hm1[steps - 1],
        normalized_l2,
        hm1_deviation: hm1,
        initial_mass: grid.integrate(total.slice(0)),
        terminal_mass: grid.integrate(total.slice(steps - 1)),
        max_m2: m2.as_ref().map(|m| m.max()),
        av_mass_used: windows.iter().map(|w| w.av_mass).fold(0.0, f64::max),
        outer_iterations: windows.iter().map(|w| w.iterations).collect(),
        windows,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { grid, rho1, rho2, m2, total, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_series_cover_every_step() {
        let cfg = ExperimentConfig { nx: 16, controlled: false, ..ExperimentConfig::default() };
        let out = run_experiment(&cfg, "baseline").unwrap();
        let s = &out.summary;
        assert_eq!(s.normalized_l2.len(), out.grid.nt + 1);
        assert_eq!(s.hm1_deviation.len(), out.grid.nt + 1);
        assert!(s.max_m2.is_none());
        assert_eq!(s.av_mass_used, 0.0);
        assert!((s.initial_mass - 7.0).abs() < 1e-10);
        assert!((s.terminal_mass - 7.0).abs() < 1e-9);
        assert_eq!(out.rho2.max(), 0.0);
    }

    #[test]
    fn controlled_run_respects_budget() {
        let cfg = ExperimentConfig {
            nx: 8,
            horizon: 1.0,
            horizon_splits: 2,
            outer: crate::config::OuterSettings { max_outer_iters: 2, ..Default::default() },
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&cfg, "small").unwrap();
        let s = &out.summary;
        assert_eq!(s.normalized_l2.len(), out.grid.nt + 1);
        assert_eq!(s.windows.len(), 2);
        assert!(s.av_mass_used <= 0.2 * 7.0 + 1e-6);
        assert!(out.m2.as_ref().unwrap().min() >= 0.0);
        assert!((s.terminal_mass - 7.0).abs() < 1e-9);
    }
}
