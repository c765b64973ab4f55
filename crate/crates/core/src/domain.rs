//! Physical parameters, the periodic space-time grid and the field containers
//! shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound applied to AV density in the convex subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DensityCapMode {
    /// `rho2 <= rho_star - rho1`.
    #[default]
    MaxDensity,
    /// `rho2 <= rho_bar - rho1`, with `rho_bar` the initial total mass.
    MeanDensity,
}

/// How the initial AV density is treated by the convex subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitialSplitMode {
    /// The initial AV density is a decision variable in `[0, rho0]`.
    #[default]
    Free,
    /// The initial AV density is pinned to `rho0 - rho1_prev(., 0)`.
    PaperLiteral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    /// Ring-road length (mi).
    pub domain_length: f64,
    /// Optimization horizon (min).
    pub horizon: f64,
    /// Free-flow speed (mi/min).
    pub free_flow_speed: f64,
    /// Jam density.
    pub rho_star: f64,
    /// Weight of the state cost against the kinetic cost.
    pub state_weight: f64,
    /// Fraction of the incentivizable mass that may be converted to AVs.
    pub beta: f64,
    /// Receding-horizon split count.
    pub horizon_splits: usize,
    pub flow_cap: Option<f64>,
    pub density_cap_mode: DensityCapMode,
    pub initial_split_mode: InitialSplitMode,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            domain_length: 2.0,
            horizon: 8.0,
            free_flow_speed: 1.0,
            rho_star: 10.0,
            state_weight: 0.1,
            beta: 0.2,
            horizon_splits: 1,
            flow_cap: None,
            density_cap_mode: DensityCapMode::MaxDensity,
            initial_split_mode: InitialSplitMode::Free,
        }
    }
}

impl Params {
    /// Returns every violated parameter invariant.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = [
            ("domain_length", self.domain_length),
            ("horizon", self.horizon),
            ("free_flow_speed", self.free_flow_speed),
            ("rho_star", self.rho_star),
            ("state_weight", self.state_weight),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{name} must be a positive finite number, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.beta) {
            out.push(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if self.horizon_splits == 0 {
            out.push("horizon_splits must be at least 1".into());
        }
        if let Some(cap) = self.flow_cap {
            if !(cap.is_finite() && cap > 0.0) {
                out.push(format!("flow_cap must be positive, got {cap}"));
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

    /// Maximum of the LWR flux, `u0 * rho_star / 4`.
    pub fn max_lwr_flux(&self) -> f64 {
        self.free_flow_speed * self.rho_star / 4.0
    }
}

/// Periodic 1-D grid with a uniform time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    /// Time steps per full horizon.
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
    pub cfl_number: f64,
    pub domain_length: f64,
    pub horizon: f64,
    pub horizon_splits: usize,
}

impl Grid {
    /// Steps implemented per receding-horizon window.
    pub fn steps_per_window(&self) -> usize {
        self.nt / self.horizon_splits
    }

    /// Cell-center coordinate of cell `j`.
    pub fn x(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    #[inline]
    pub fn left(&self, j: usize) -> usize {
        if j == 0 {
            self.nx - 1
        } else {
            j - 1
        }
    }

    #[inline]
    pub fn right(&self, j: usize) -> usize {
        if j + 1 == self.nx {
            0
        } else {
            j + 1
        }
    }

    /// Midpoint-rule integral of a per-cell field.
    pub fn integrate(&self, cells: &[f64]) -> f64 {
        cells.iter().sum::<f64>() * self.dx
    }

    /// Trapezoid weights in time over the knots `0..=steps`.
    pub fn trapezoid_weight(&self, step: usize, steps: usize) -> f64 {
        if step == 0 || step == steps {
            0.5 * self.dt
        } else {
            self.dt
        }
    }
}

/// Builds the grid. `dt` is the largest step not exceeding `cfl * dx / u0`
/// that tiles each receding-horizon window with a whole number of steps.
pub fn build_grid(params: &Params, nx: usize, cfl: f64) -> Result<Grid> {
    if nx < 8 {
        return Err(Error::InvalidParameter(format!("nx must be at least 8, got {nx}")));
    }
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::InvalidParameter(format!("cfl must lie in (0, 1], got {cfl}")));
    }
    params.validate()?;
    let dx = params.domain_length / nx as f64;
    let dt_max = cfl * dx / params.free_flow_speed;
    let window = params.horizon / params.horizon_splits as f64;
    // Guard against `window / dt_max` landing a hair above an integer.
    let per_window = ((window / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let dt = window / per_window as f64;
    Ok(Grid {
        nx,
        nt: per_window * params.horizon_splits,
        dx,
        dt,
        cfl_number: cfl,
        domain_length: params.domain_length,
        horizon: params.horizon,
        horizon_splits: params.horizon_splits,
    })
}

/// Space-time samples stored step-major: `values[step * nx + cell]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    nx: usize,
    steps: usize,
    values: Vec<f64>,
}

/// AV or HV density at the knots `0..=nt`.
pub type DensityField = Field;
/// AV flux on the intervals `0..nt`.
pub type FlowField = Field;

impl Field {
    pub fn zeros(nx: usize, steps: usize) -> Self {
        Field { nx, steps, values: vec![0.0; nx * steps] }
    }

    pub fn from_slices(nx: usize, slices: impl IntoIterator<Item = Vec<f64>>) -> Self {
        let mut values = Vec::new();
        let mut steps = 0;
        for s in slices {
            assert_eq!(s.len(), nx, "slice length must equal nx");
            values.extend_from_slice(&s);
            steps += 1;
        }
        Field { nx, steps, values }
    }

    pub fn from_values(nx: usize, steps: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), nx * steps);
        Field { nx, steps, values }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Number of stored time levels.
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn get(&self, step: usize, cell: usize) -> f64 {
        self.values[step * self.nx + cell]
    }

    #[inline]
    pub fn set(&mut self, step: usize, cell: usize, v: f64) {
        self.values[step * self.nx + cell] = v;
    }

    pub fn slice(&self, step: usize) -> &[f64] {
        &self.values[step * self.nx..(step + 1) * self.nx]
    }

    pub fn slice_mut(&mut self, step: usize) -> &mut [f64] {
        &mut self.values[step * self.nx..(step + 1) * self.nx]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Pointwise sum of two aligned fields.
    pub fn add(&self, other: &Field) -> Field {
        assert_eq!((self.nx, self.steps), (other.nx, other.steps));
        Field {
            nx: self.nx,
            steps: self.steps,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        }
    }

    /// Keeps the time levels `from..to`.
    pub fn window(&self, from: usize, to: usize) -> Field {
        Field {
            nx: self.nx,
            steps: to - from,
            values: self.values[from * self.nx..to * self.nx].to_vec(),
        }
    }

    pub fn push_slice(&mut self, slice: &[f64]) {
        assert_eq!(slice.len(), self.nx);
        self.values.extend_from_slice(slice);
        self.steps += 1;
    }
}

/// Optimized AV control over one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPlan {
    pub rho2_0: Vec<f64>,
    pub m2: FlowField,
    pub rho2: DensityField,
}

impl ControlPlan {
    /// `m2 / rho2` where the density is positive, zero elsewhere.
    pub fn velocity(&self) -> Field {
        let mut v = Field::zeros(self.m2.nx(), self.m2.steps());
        for n in 0..self.m2.steps() {
            for j in 0..self.m2.nx() {
                let r = self.rho2.get(n, j);
                if r > 0.0 {
                    v.set(n, j, self.m2.get(n, j) / r);
                }
            }
        }
        v
    }

    /// AV mass recruited at the start of the horizon.
    pub fn initial_mass(&self, grid: &Grid) -> f64 {
        grid.integrate(&self.rho2_0)
    }
}

/// Initial condition of one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioState {
    pub rho0: Vec<f64>,
    /// Density of vehicles that may be offered the incentive.
    pub rho_hat0: Vec<f64>,
    /// Total mass `int rho0 dx`.
    pub rho_bar: f64,
    pub rho_hat_bar: f64,
}

impl ScenarioState {
    pub fn new(rho0: Vec<f64>, rho_hat0: Vec<f64>, grid: &Grid) -> Self {
        let rho_bar = grid.integrate(&rho0);
        let rho_hat_bar = grid.integrate(&rho_hat0);
        ScenarioState { rho0, rho_hat0, rho_bar, rho_hat_bar }
    }

    /// Every vehicle is incentivizable.
    pub fn all_incentivizable(rho0: Vec<f64>, grid: &Grid) -> Self {
        let hat = rho0.clone();
        Self::new(rho0, hat, grid)
    }

    /// Upper bound on the recruited AV mass, `beta * rho_hat_bar`.
    pub fn budget(&self, params: &Params) -> f64 {
        params.beta * self.rho_hat_bar
    }
}

/// `3.5 + 2 sin(pi x)` sampled at cell centers.
pub fn paper_initial_density(grid: &Grid) -> Vec<f64> {
    (0..grid.nx)
        .map(|j| 3.5 + 2.0 * (std::f64::consts::PI * grid.x(j)).sin())
        .collect()
}

/// Collects every violated bound instead of stopping at the first one.
pub fn validate_scenario(params: &Params, scenario: &ScenarioState) -> std::result::Result<(), Vec<String>> {
    let mut out = params.violations();
    if scenario.rho0.len() != scenario.rho_hat0.len() {
        out.push("rho0 and rho_hat0 have different lengths".into());
    }
    for (j, (&r, &h)) in scenario.rho0.iter().zip(&scenario.rho_hat0).enumerate() {
        if !(r >= 0.0) {
            out.push(format!("rho0[{j}] = {r} is negative"));
        }
        if r > params.rho_star {
            out.push(format!("rho0[{j}] = {r} exceeds rho_star = {}", params.rho_star));
        }
        if !(h >= 0.0) {
            out.push(format!("rho_hat0[{j}] = {h} is negative"));
        }
        if h > r {
            out.push(format!("rho_hat0[{j}] = {h} exceeds rho0[{j}] = {r}"));
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_grid(nx: usize) -> Grid {
        build_grid(&Params::default(), nx, 0.5).unwrap()
    }

    #[test]
    fn grid_spacing_and_step() {
        let g = default_grid(48);
        assert!((g.dx - 1.0 / 24.0).abs() < 1e-15);
        assert!(g.dt <= 1.0 / 48.0 + 1e-15);
        assert_eq!(g.nt, 384);

        let p = Params { horizon_splits: 2, ..Params::default() };
        let g = build_grid(&p, 48, 0.5).unwrap();
        let per = 4.0 / g.dt;
        assert!((per - per.round()).abs() < 1e-9);
        assert!(g.dt <= 1.0 / 48.0 + 1e-15);
        assert_eq!(g.nt % 2, 0);
    }

    #[test]
    fn grid_uneven_window() {
        let p = Params { horizon_splits: 3, ..Params::default() };
        let g = build_grid(&p, 48, 0.5).unwrap();
        assert!(g.dt <= 1.0 / 48.0);
        assert_eq!(g.nt % 3, 0);
        assert!((g.dt * g.nt as f64 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_bad_input() {
        let p = Params::default();
        assert!(build_grid(&p, 4, 0.5).is_err());
        assert!(build_grid(&p, 48, 0.0).is_err());
        assert!(build_grid(&p, 48, 1.5).is_err());
    }

    #[test]
    fn grid_is_deterministic() {
        assert_eq!(default_grid(40), default_grid(40));
    }

    #[test]
    fn initial_density_values() {
        let g = default_grid(48);
        let rho = paper_initial_density(&g);
        // x_j = (j + 1/2)/24: x = 0.5 is not a center, evaluate the closed form directly
        let f = |x: f64| 3.5 + 2.0 * (std::f64::consts::PI * x).sin();
        assert!((f(0.5) - 5.5).abs() < 1e-14);
        assert!((f(1.5) - 1.5).abs() < 1e-14);
        for (j, r) in rho.iter().enumerate() {
            assert_eq!(*r, f(g.x(j)));
        }
    }

    #[test]
    fn initial_mass_is_seven() {
        for nx in (8..=200).step_by(4) {
            let g = default_grid(nx);
            let mass = g.integrate(&paper_initial_density(&g));
            assert!((mass - 7.0).abs() < 1e-10, "nx={nx} mass={mass}");
        }
    }

    #[test]
    fn default_budget() {
        let g = default_grid(48);
        let p = Params::default();
        let s = ScenarioState::all_incentivizable(paper_initial_density(&g), &g);
        assert!((s.budget(&p) - 1.4).abs() < 1e-10);
    }

    #[test]
    fn scenario_validation() {
        let g = default_grid(48);
        let p = Params::default();
        let s = ScenarioState::all_incentivizable(paper_initial_density(&g), &g);
        assert!(validate_scenario(&p, &s).is_ok());

        let mut rho = paper_initial_density(&g);
        rho[3] = 11.0;
        let s = ScenarioState::all_incentivizable(rho, &g);
        let errs = validate_scenario(&p, &s).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("rho0[3]")));

        let bad = Params { beta: 1.2, ..Params::default() };
        let s = ScenarioState::all_incentivizable(paper_initial_density(&g), &g);
        let errs = validate_scenario(&bad, &s).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("beta")));
    }

    #[test]
    fn hat_above_total_is_reported() {
        let g = default_grid(8);
        let rho = vec![1.0; 8];
        let mut hat = rho.clone();
        hat[0] = 2.0;
        let s = ScenarioState::new(rho, hat, &g);
        assert!(validate_scenario(&Params::default(), &s).is_err());
    }

    #[test]
    fn velocity_is_zero_on_empty_cells() {
        let m2 = Field::from_slices(2, [vec![1.0, 1.0]]);
        let rho2 = Field::from_slices(2, [vec![2.0, 0.0], vec![2.0, 0.0]]);
        let plan = ControlPlan { rho2_0: vec![2.0, 0.0], m2, rho2 };
        let v = plan.velocity();
        assert_eq!(v.get(0, 0), 0.5);
        assert_eq!(v.get(0, 1), 0.0);
    }
}
