//! Alternating outer loop, receding-horizon driver and the uncontrolled baseline.

use serde::{Deserialize, Serialize};

use crate::conic::subproblem::{self, ConicProblem, InitialAv};
use crate::conic::{ConicSolution, SolveReport, SolveStatus, SolverSettings};
use crate::cost::{state_cost, CostBreakdown, CostKind};
use crate::domain::{ControlPlan, DensityField, FlowField, Field, Grid, InitialSplitMode, Params, ScenarioState};
use crate::error::{Error, Result};
use crate::godunov::{propagate_coupled, propagate_hv, propagate_single, LwrFlux};
use crate::lax_friedrichs::LaxFriedrichsOperator;

/// What happens to the recruited AVs at a window boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetPolicy {
    /// The AV subset is chosen again under the original budget.
    #[default]
    Renew,
    /// The AV field at the window start is carried over unchanged.
    NoRenew,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuterLoopConfig {
    pub max_outer_iters: usize,
    pub rel_change_stop: f64,
    pub cost_kind: CostKind,
    pub budget_policy: BudgetPolicy,
    pub solver: SolverSettings,
}

impl Default for OuterLoopConfig {
    fn default() -> Self {
        OuterLoopConfig {
            max_outer_iters: 10,
            rel_change_stop: 1e-3,
            cost_kind: CostKind::Hm1,
            budget_policy: BudgetPolicy::Renew,
            solver: SolverSettings::default(),
        }
    }
}

impl OuterLoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidParameter("max_outer_iters must be at least 1".into()));
        }
        if !(self.rel_change_stop >= 0.0) {
            return Err(Error::InvalidParameter("rel_change_stop must be nonnegative".into()));
        }
        let s = &self.solver;
        if !(s.tol_primal > 0.0 && s.tol_dual > 0.0) || s.max_iters == 0 || s.check_every == 0 {
            return Err(Error::InvalidParameter("solver tolerances and iteration limits must be positive".into()));
        }
        if !(s.alpha > 0.0 && s.alpha < 2.0) || !(s.rho > 0.0) || !(s.sigma > 0.0) {
            return Err(Error::InvalidParameter("solver alpha must lie in (0, 2); rho and sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Progress record handed to the caller's sink after every outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub window: usize,
    pub iteration: usize,
    pub cost: CostBreakdown,
    /// Relative L2 change of the HV trajectory against the previous iterate.
    pub rel_change: f64,
    pub solve: SolveReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSolution {
    pub plan: ControlPlan,
    pub rho1_traj: DensityField,
    pub cost_history: Vec<CostBreakdown>,
    pub reports: Vec<SolveReport>,
    pub converged: bool,
    /// Outer iterations whose result was accepted.
    pub iterations: usize,
    /// Set when a subproblem was infeasible and an earlier iterate was returned.
    pub infeasible: bool,
    /// Iteration with the lowest weighted cost (1-based, 0 when none ran).
    pub best_iteration: usize,
}

/// Starting trajectories: AVs take `beta * rho_hat0` and move with the HVs.
pub fn initialize(scenario: &ScenarioState, params: &Params, grid: &Grid) -> Result<(DensityField, DensityField)> {
    let rho2_0: Vec<f64> = scenario.rho_hat0.iter().map(|h| params.beta * h).collect();
    initialize_split(scenario, &rho2_0, params, grid)
}

fn initialize_split(
    scenario: &ScenarioState,
    rho2_0: &[f64],
    params: &Params,
    grid: &Grid,
) -> Result<(DensityField, DensityField)> {
    let rho1_0: Vec<f64> = scenario.rho0.iter().zip(rho2_0).map(|(r, a)| (r - a).max(0.0)).collect();
    propagate_coupled(&rho1_0, rho2_0, grid.nt, grid, &LwrFlux::new(params))
}

/// Velocity-consistent plan of the initialization, used when no subproblem succeeded.
fn plan_from_coupled(rho1: &DensityField, rho2: &DensityField, flux: &LwrFlux) -> ControlPlan {
    let nx = rho2.nx();
    let steps = rho2.steps() - 1;
    let mut m2 = Field::zeros(nx, steps);
    for n in 0..steps {
        for j in 0..nx {
            let r2 = rho2.get(n, j);
            m2.set(n, j, r2 * flux.velocity(rho1.get(n, j), r2));
        }
    }
    ControlPlan { rho2_0: rho2.slice(0).to_vec(), m2, rho2: rho2.clone() }
}

fn relative_change(new: &DensityField, old: &DensityField) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in new.values().iter().zip(old.values()) {
        num += (a - b) * (a - b);
        den += b * b;
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Turns solver output into a physical plan: fluxes and the initial layer are
/// clipped into their bounds (and budget), then the density is rebuilt with a
/// conservative, nonnegative Lax-Friedrichs rollout.
pub fn polish_plan(problem: &ConicProblem, raw: &ControlPlan) -> ControlPlan {
    let grid = &problem.grid;
    let hi = problem.flow_cap.unwrap_or(f64::INFINITY);
    let mut m2 = raw.m2.clone();
    for n in 0..m2.steps() {
        for v in m2.slice_mut(n) {
            *v = v.clamp(0.0, hi);
        }
    }
    let rho2_0: Vec<f64> = match &problem.initial {
        InitialAv::Fixed(f) => f.clone(),
        InitialAv::Free => {
            let mut r: Vec<f64> = (0..grid.nx)
                .map(|j| raw.rho2.get(0, j).clamp(0.0, problem.rho0[j].min(problem.density_upper.get(0, j))))
                .collect();
            let mass = grid.integrate(&r);
            if mass > problem.budget {
                let s = if mass > 0.0 { problem.budget / mass } else { 0.0 };
                r.iter_mut().for_each(|v| *v *= s);
            }
            r
        }
    };
    let rho2 = LaxFriedrichsOperator::new(grid).rollout_nonnegative(&rho2_0, &m2);
    ControlPlan { rho2_0, m2, rho2 }
}

/// Sum of the epigraph variables times `dx dt`.
fn kinetic_from_solution(problem: &ConicProblem, sol: &ConicSolution) -> f64 {
    let l = problem.layout;
    let mut total = 0.0;
    for n in 0..l.nt {
        for j in 0..l.nx {
            total += sol.x[l.epigraph(n, j)];
        }
    }
    total * problem.grid.dx * problem.grid.dt
}

/// Alternates the convex AV subproblem with HV propagation over one full horizon.
pub fn solve_horizon(
    scenario: &ScenarioState,
    params: &Params,
    grid: &Grid,
    cfg: &OuterLoopConfig,
    sink: &mut dyn FnMut(&IterationRecord),
) -> Result<HorizonSolution> {
    solve_window(scenario, params, grid, cfg, None, None, 0, sink).map(|w| w.0)
}

/// Last subproblem of a window and its solution, used to seed the next window.
type Seed = (ConicProblem, ConicSolution);

fn solve_window(
    scenario: &ScenarioState,
    params: &Params,
    grid: &Grid,
    cfg: &OuterLoopConfig,
    carried_av: Option<&[f64]>,
    seed: Option<(&Seed, usize)>,
    window: usize,
    sink: &mut dyn FnMut(&IterationRecord),
) -> Result<(HorizonSolution, Option<Seed>)> {
    cfg.validate()?;
    params.validate()?;
    crate::domain::validate_scenario(params, scenario).map_err(Error::InvalidScenario)?;
    let flux = LwrFlux::new(params);

    let (mut rho1, rho2_init) = match carried_av {
        Some(av) => initialize_split(scenario, av, params, grid)?,
        None => initialize(scenario, params, grid)?,
    };
    let mut plan = plan_from_coupled(&rho1, &rho2_init, &flux);
    let mut history = Vec::new();
    let mut reports = Vec::new();
    let mut warm: Option<ConicSolution> = None;
    let mut converged = false;
    let mut infeasible = false;
    let mut iterations = 0;
    let mut best = (f64::INFINITY, 0usize);
    let mut last: Option<ConicProblem> = None;

    for iter in 1..=cfg.max_outer_iters {
        let initial = match (carried_av, params.initial_split_mode) {
            (Some(av), _) => InitialAv::Fixed(av.to_vec()),
            (None, InitialSplitMode::Free) => InitialAv::Free,
            (None, InitialSplitMode::PaperLiteral) => {
                InitialAv::Fixed(scenario.rho0.iter().zip(rho1.slice(0)).map(|(a, b)| (a - b).max(0.0)).collect())
            }
        };
        let problem = match subproblem::assemble_with_initial(&rho1, scenario, params, grid, cfg.cost_kind, initial) {
            Ok(p) => p,
            Err(Error::Infeasible(_)) => {
                infeasible = true;
                break;
            }
            Err(e) => return Err(e),
        };
        if warm.is_none() {
            warm = seed.and_then(|((p, s), shift)| subproblem::shift_solution(p, s, &problem, shift));
        }
        let (raw, sol, report) = subproblem::solve(&problem, &cfg.solver, warm.as_ref())?;
        if report.status == SolveStatus::Infeasible {
            reports.push(report);
            infeasible = true;
            break;
        }

        let cost = CostBreakdown::new(
            kinetic_from_solution(&problem, &sol),
            state_cost(cfg.cost_kind, &rho1, &raw.rho2, grid, scenario.rho_bar),
            params.state_weight,
        );
        let next_plan = polish_plan(&problem, &raw);
        let rho1_init: Vec<f64> =
            scenario.rho0.iter().zip(&next_plan.rho2_0).map(|(r, a)| (r - a).max(0.0)).collect();
        let next_rho1 = propagate_hv(&rho1_init, &next_plan.rho2, grid, &flux)?;
        let change = relative_change(&next_rho1, &rho1);

        sink(&IterationRecord { window, iteration: iter, cost, rel_change: change, solve: report.clone() });
        if cost.weighted_total < best.0 {
            best = (cost.weighted_total, iter);
        }
        history.push(cost);
        reports.push(report);
        plan = next_plan;
        rho1 = next_rho1;
        warm = Some(sol);
        last = Some(problem);
        iterations = iter;
        if change < cfg.rel_change_stop {
            converged = true;
            break;
        }
    }

    let next_seed = last.zip(warm);
    let solution = HorizonSolution {
        plan,
        rho1_traj: rho1,
        cost_history: history,
        reports,
        converged,
        iterations,
        infeasible,
        best_iteration: best.1,
    };
    Ok((solution, next_seed))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSummary {
    pub index: usize,
    pub start_step: usize,
    pub iterations: usize,
    pub converged: bool,
    pub infeasible: bool,
    pub best_iteration: usize,
    /// AV mass recruited at the window start.
    pub av_mass: f64,
    pub cost_history: Vec<CostBreakdown>,
    pub solver_iterations: Vec<usize>,
}

/// Stitched trajectories over the whole horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct RecedingSolution {
    pub rho1: DensityField,
    pub rho2: DensityField,
    pub m2: FlowField,
    /// Total density; at window boundaries this is exactly the hand-off state.
    pub total: DensityField,
    pub windows: Vec<WindowSummary>,
}

/// Solves `horizon_splits` full-length problems, keeping the first
/// `1 / horizon_splits` of each.
pub fn receding_horizon(
    scenario: &ScenarioState,
    params: &Params,
    grid: &Grid,
    cfg: &OuterLoopConfig,
    sink: &mut dyn FnMut(&IterationRecord),
) -> Result<RecedingSolution> {
    let keep = grid.steps_per_window();
    let nx = grid.nx;
    let mut rho1 = Field::zeros(nx, 0);
    let mut rho2 = Field::zeros(nx, 0);
    let mut m2 = Field::zeros(nx, 0);
    let mut total = Field::zeros(nx, 0);
    let mut windows = Vec::new();
    let budget_mass = scenario.rho_hat_bar;
    let mut state = scenario.clone();
    let mut carried: Option<Vec<f64>> = None;
    let mut seed: Option<Seed> = None;

    for w in 0..grid.horizon_splits {
        let (sol, next_seed) =
            solve_window(&state, params, grid, cfg, carried.as_deref(), seed.as_ref().map(|s| (s, keep)), w, sink)?;
        seed = next_seed;
        let plan = &sol.plan;
        windows.push(WindowSummary {
            index: w,
            start_step: w * keep,
            iterations: sol.iterations,
            converged: sol.converged,
            infeasible: sol.infeasible,
            best_iteration: sol.best_iteration,
            av_mass: grid.integrate(&plan.rho2_0),
            cost_history: sol.cost_history.clone(),
            solver_iterations: sol.reports.iter().map(|r| r.iterations).collect(),
        });

        if w == 0 {
            rho1.push_slice(sol.rho1_traj.slice(0));
            rho2.push_slice(plan.rho2.slice(0));
            total.push_slice(&state.rho0);
        } else {
            // the boundary level takes the new split; its total is unchanged
            rho1.slice_mut(w * keep).copy_from_slice(sol.rho1_traj.slice(0));
            rho2.slice_mut(w * keep).copy_from_slice(plan.rho2.slice(0));
        }
        for n in 0..keep {
            m2.push_slice(plan.m2.slice(n));
            rho1.push_slice(sol.rho1_traj.slice(n + 1));
            rho2.push_slice(plan.rho2.slice(n + 1));
            let t: Vec<f64> = sol.rho1_traj.slice(n + 1).iter().zip(plan.rho2.slice(n + 1)).map(|(a, b)| a + b).collect();
            total.push_slice(&t);
        }

        let handoff = total.slice((w + 1) * keep).to_vec();
        let mass = grid.integrate(&handoff);
        carried = match cfg.budget_policy {
            BudgetPolicy::Renew => None,
            BudgetPolicy::NoRenew => Some(plan.rho2.slice(keep).to_vec()),
        };
        // rescale so the budget stays beta times the original incentivizable mass;
        // capped at 1 so rounding never lifts rho_hat above rho0
        let share = if mass > 0.0 { (budget_mass / mass).min(1.0) } else { 0.0 };
        let hat: Vec<f64> = handoff.iter().map(|v| v * share).collect();
        state = ScenarioState::new(handoff, hat, grid);
    }
    Ok(RecedingSolution { rho1, rho2, m2, total, windows })
}

/// Single-population LWR run of the initial density over the whole horizon.
pub fn simulate_uncontrolled(scenario: &ScenarioState, params: &Params, grid: &Grid) -> Result<DensityField> {
    params.validate()?;
    crate::domain::validate_scenario(params, scenario).map_err(Error::InvalidScenario)?;
    propagate_single(&scenario.rho0, grid.nt, grid, &LwrFlux::new(params))
}
