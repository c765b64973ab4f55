//! The frozen-HV subproblem as a conic program.
//!
//! Variables, in order: AV density at every knot, AV flux on every interval,
//! the kinetic epigraph `t >= m^2 / rho` per interval and, when the initial
//! split is free, the new HV initial layer `h = rho0 - rho2(., 0)`.
//!
//! Rows, in order: Lax-Friedrichs dynamics, initial condition, budget,
//! density bounds, HV-layer bounds, flux bounds, then one rotated cone
//! `(rho, sqrt2 m, t)` per interval and cell.

use std::f64::consts::SQRT_2;
use std::ops::Range;

use super::admm::{self, ConicSolution, SolveReport, SolveStatus, SolverSettings};
use super::program::{ConicProgram, Triplets};
use super::sets::ConstraintSets;
use crate::cost::{CostKind, SpectralWeights};
use crate::domain::{ControlPlan, DensityCapMode, DensityField, Field, Grid, InitialSplitMode, Params, ScenarioState};
use crate::error::{Error, Result};
use crate::lax_friedrichs::{LaxFriedrichsOperator, Term};

/// Slack below zero tolerated on density caps before reporting infeasibility.
const CAP_TOL: f64 = 1e-9;

/// How the initial AV density enters the subproblem.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialAv {
    /// Decision variable in `[0, rho0]`.
    Free,
    /// Pinned to the given field.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub nx: usize,
    pub nt: usize,
    pub has_hv_layer: bool,
}

impl Layout {
    #[inline]
    pub fn rho(&self, step: usize, cell: usize) -> usize {
        step * self.nx + cell
    }
    #[inline]
    pub fn flux(&self, step: usize, cell: usize) -> usize {
        self.nx * (self.nt + 1) + step * self.nx + cell
    }
    #[inline]
    pub fn epigraph(&self, step: usize, cell: usize) -> usize {
        self.nx * (2 * self.nt + 1) + step * self.nx + cell
    }
    #[inline]
    pub fn hv_layer(&self, cell: usize) -> usize {
        debug_assert!(self.has_hv_layer);
        self.nx * (3 * self.nt + 1) + cell
    }
    pub fn num_vars(&self) -> usize {
        self.nx * (3 * self.nt + 1) + if self.has_hv_layer { self.nx } else { 0 }
    }
    /// Auxiliary variables beyond densities, fluxes and epigraphs.
    pub fn auxiliaries(&self) -> usize {
        if self.has_hv_layer {
            self.nx
        } else {
            0
        }
    }
}

/// Row ranges of each constraint block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowBlocks {
    pub dynamics: Range<usize>,
    pub initial: Range<usize>,
    pub budget: Range<usize>,
    pub density_bounds: Range<usize>,
    pub hv_layer_bounds: Range<usize>,
    pub flux_bounds: Range<usize>,
    /// Row range of all cone rows (three per cone).
    pub cones: Range<usize>,
}

impl RowBlocks {
    pub fn named(&self) -> [(&'static str, Range<usize>); 7] {
        [
            ("dynamics", self.dynamics.clone()),
            ("initial", self.initial.clone()),
            ("budget", self.budget.clone()),
            ("density_bounds", self.density_bounds.clone()),
            ("hv_layer_bounds", self.hv_layer_bounds.clone()),
            ("flux_bounds", self.flux_bounds.clone()),
            ("cones", self.cones.clone()),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub program: ConicProgram,
    pub layout: Layout,
    pub blocks: RowBlocks,
    pub cost_kind: CostKind,
    pub grid: Grid,
    pub initial: InitialAv,
    pub rho0: Vec<f64>,
    pub budget: f64,
    pub density_upper: DensityField,
    pub flow_cap: Option<f64>,
}

impl ConicProblem {
    pub fn equality_rows(&self) -> usize {
        (0..self.program.sets.interval_rows())
            .filter(|&i| self.program.sets.is_equality(i))
            .count()
    }

    pub fn num_cones(&self) -> usize {
        self.program.sets.cones
    }
}

/// Builds the subproblem, deriving the initial AV handling from the params.
pub fn assemble(
    rho1_frozen: &DensityField,
    scenario: &ScenarioState,
    params: &Params,
    grid: &Grid,
    cost_kind: CostKind,
) -> Result<ConicProblem> {
    let initial = match params.initial_split_mode {
        InitialSplitMode::Free => InitialAv::Free,
        InitialSplitMode::PaperLiteral => InitialAv::Fixed(
            scenario.rho0.iter().zip(rho1_frozen.slice(0)).map(|(a, b)| a - b).collect(),
        ),
    };
    assemble_with_initial(rho1_frozen, scenario, params, grid, cost_kind, initial)
}

pub fn assemble_with_initial(
    rho1_frozen: &DensityField,
    scenario: &ScenarioState,
    params: &Params,
    grid: &Grid,
    cost_kind: CostKind,
    initial: InitialAv,
) -> Result<ConicProblem> {
    let nx = grid.nx;
    let nt = rho1_frozen.steps() - 1;
    if rho1_frozen.nx() != nx || nt == 0 {
        return Err(Error::InvalidParameter("frozen HV field does not match the grid".into()));
    }
    if rho1_frozen.min() < -CAP_TOL {
        return Err(Error::InvalidParameter("frozen HV density is negative".into()));
    }
    let layout = Layout { nx, nt, has_hv_layer: matches!(initial, InitialAv::Free) };
    let n = layout.num_vars();
    let budget = scenario.budget(params);

    let cap = match params.density_cap_mode {
        DensityCapMode::MaxDensity => params.rho_star,
        DensityCapMode::MeanDensity => scenario.rho_bar,
    };
    let mut density_upper = Field::zeros(nx, nt + 1);
    for s in 0..=nt {
        for j in 0..nx {
            let room = cap - rho1_frozen.get(s, j);
            if room < -CAP_TOL {
                return Err(Error::Infeasible(format!(
                    "density cap {cap} is below the frozen HV density {} at step {s}, cell {j}",
                    rho1_frozen.get(s, j)
                )));
            }
            density_upper.set(s, j, room.max(0.0));
        }
    }
    if let InitialAv::Fixed(f) = &initial {
        if f.len() != nx {
            return Err(Error::InvalidParameter("fixed initial AV field has the wrong length".into()));
        }
        for (j, &v) in f.iter().enumerate() {
            if v < -CAP_TOL || v > density_upper.get(0, j) + CAP_TOL {
                return Err(Error::Infeasible(format!("fixed initial AV density {v} at cell {j} is out of bounds")));
            }
        }
        let mass = grid.integrate(f);
        if mass > budget + CAP_TOL {
            return Err(Error::Infeasible(format!("fixed initial AV mass {mass} exceeds the budget {budget}")));
        }
    }

    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut rows = 0usize;
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut push_row = |terms: &[(usize, f64)], lo: f64, hi: f64, rows: &mut usize| {
        for &(col, v) in terms {
            entries.push((*rows, col, v));
        }
        lower.push(lo);
        upper.push(hi);
        *rows += 1;
    };

    let op = LaxFriedrichsOperator::new(grid);
    let dyn_start = rows;
    for row in op.equality_rows(nt) {
        let terms: Vec<(usize, f64)> = row
            .terms
            .iter()
            .map(|t| match *t {
                Term::Density { step, cell, coef } => (layout.rho(step, cell), coef),
                Term::Flux { step, cell, coef } => (layout.flux(step, cell), coef),
            })
            .collect();
        push_row(&terms, 0.0, 0.0, &mut rows);
    }
    let dynamics = dyn_start..rows;

    let init_start = rows;
    for j in 0..nx {
        match &initial {
            InitialAv::Free => {
                let r = scenario.rho0[j];
                push_row(&[(layout.rho(0, j), 1.0), (layout.hv_layer(j), 1.0)], r, r, &mut rows)
            }
            InitialAv::Fixed(f) => push_row(&[(layout.rho(0, j), 1.0)], f[j], f[j], &mut rows),
        }
    }
    let initial_rows = init_start..rows;

    let budget_start = rows;
    let terms: Vec<(usize, f64)> = (0..nx).map(|j| (layout.rho(0, j), grid.dx)).collect();
    push_row(&terms, f64::NEG_INFINITY, budget, &mut rows);
    let budget_rows = budget_start..rows;

    let dens_start = rows;
    for s in 0..=nt {
        for j in 0..nx {
            push_row(&[(layout.rho(s, j), 1.0)], 0.0, density_upper.get(s, j), &mut rows);
        }
    }
    let density_bounds = dens_start..rows;

    let hv_start = rows;
    if layout.has_hv_layer {
        for j in 0..nx {
            push_row(&[(layout.hv_layer(j), 1.0)], 0.0, f64::INFINITY, &mut rows);
        }
    }
    let hv_layer_bounds = hv_start..rows;

    let flux_start = rows;
    let flux_hi = params.flow_cap.unwrap_or(f64::INFINITY);
    for s in 0..nt {
        for j in 0..nx {
            push_row(&[(layout.flux(s, j), 1.0)], 0.0, flux_hi, &mut rows);
        }
    }
    let flux_bounds = flux_start..rows;

    let cone_start = rows;
    for s in 0..nt {
        for j in 0..nx {
            entries.push((rows, layout.rho(s, j), 1.0));
            entries.push((rows + 1, layout.flux(s, j), SQRT_2));
            entries.push((rows + 2, layout.epigraph(s, j), 1.0));
            rows += 3;
        }
    }
    let cones = cone_start..rows;

    let mut a = Triplets::new(rows, n);
    for (r, c, v) in entries {
        a.push(r, c, v);
    }

    // objective: kinetic epigraph plus weighted state cost on rho1 + rho2
    let mut q = vec![0.0; n];
    for s in 0..nt {
        for j in 0..nx {
            q[layout.epigraph(s, j)] = grid.dx * grid.dt;
        }
    }
    let mut p = Triplets::new(n, n);
    let mut offset = 0.0;
    let c = params.state_weight;
    match cost_kind {
        CostKind::L2 => {
            for s in 0..=nt {
                let alpha = 2.0 * c * grid.trapezoid_weight(s, nt) * grid.dx;
                for j in 0..nx {
                    let r1 = rho1_frozen.get(s, j);
                    p.push(layout.rho(s, j), layout.rho(s, j), alpha);
                    q[layout.rho(s, j)] += alpha * r1;
                    offset += 0.5 * alpha * r1 * r1;
                }
            }
        }
        CostKind::Hm1 => {
            let kernel = SpectralWeights::new(nx, grid.domain_length).gram_kernel();
            for s in 0..=nt {
                let alpha = 2.0 * c * grid.trapezoid_weight(s, nt) / scenario.rho_bar;
                let r1 = rho1_frozen.slice(s);
                for a_ in 0..nx {
                    let mut k_r1 = 0.0;
                    for b in 0..nx {
                        let kab = kernel[(a_ + nx - b) % nx];
                        p.push(layout.rho(s, a_), layout.rho(s, b), alpha * kab);
                        k_r1 += kab * r1[b];
                    }
                    q[layout.rho(s, a_)] += alpha * k_r1;
                    offset += 0.5 * alpha * r1[a_] * k_r1;
                }
            }
        }
    }

    let program = ConicProgram {
        p: p.to_csc(),
        q,
        a: a.to_csc(),
        sets: ConstraintSets { lower, upper, cones: nt * nx },
        offset,
    };
    Ok(ConicProblem {
        program,
        layout,
        blocks: RowBlocks {
            dynamics,
            initial: initial_rows,
            budget: budget_rows,
            density_bounds,
            hv_layer_bounds,
            flux_bounds,
            cones,
        },
        cost_kind,
        grid: *grid,
        initial,
        rho0: scenario.rho0.clone(),
        budget,
        density_upper,
        flow_cap: params.flow_cap,
    })
}

/// Reads the AV fields out of a program solution.
pub fn extract_plan(problem: &ConicProblem, x: &[f64]) -> ControlPlan {
    let l = problem.layout;
    let mut rho2 = Field::zeros(l.nx, l.nt + 1);
    let mut m2 = Field::zeros(l.nx, l.nt);
    for s in 0..=l.nt {
        for j in 0..l.nx {
            rho2.set(s, j, x[l.rho(s, j)]);
            if s < l.nt {
                m2.set(s, j, x[l.flux(s, j)]);
            }
        }
    }
    ControlPlan { rho2_0: rho2.slice(0).to_vec(), m2, rho2 }
}

/// Rebuilds a program vector from a plan. Epigraph values come from `epigraph`
/// when given, otherwise from `m^2 / rho` (zero where `m = 0`).
pub fn plan_to_vector(problem: &ConicProblem, plan: &ControlPlan, epigraph: Option<&[f64]>) -> Vec<f64> {
    let l = problem.layout;
    let mut x = vec![0.0; l.num_vars()];
    for s in 0..=l.nt {
        for j in 0..l.nx {
            x[l.rho(s, j)] = plan.rho2.get(s, j);
        }
    }
    for s in 0..l.nt {
        for j in 0..l.nx {
            let m = plan.m2.get(s, j);
            x[l.flux(s, j)] = m;
            let idx = l.epigraph(s, j);
            x[idx] = match epigraph {
                Some(e) => e[idx],
                None => {
                    let r = plan.rho2.get(s, j);
                    if m == 0.0 {
                        0.0
                    } else if r > 0.0 {
                        m * m / r
                    } else {
                        f64::INFINITY
                    }
                }
            };
        }
    }
    if l.has_hv_layer {
        for j in 0..l.nx {
            x[l.hv_layer(j)] = problem.rho0[j] - plan.rho2.get(0, j);
        }
    }
    x
}

/// Solves the subproblem and extracts the plan.
pub fn solve(
    problem: &ConicProblem,
    settings: &SolverSettings,
    warm: Option<&ConicSolution>,
) -> Result<(ControlPlan, ConicSolution, SolveReport)> {
    let (sol, report) = admm::solve(&problem.program, settings, warm)?;
    let plan = extract_plan(problem, &sol.x);
    Ok((plan, sol, report))
}

/// Warm start for the next receding-horizon window: the solution of `old`
/// advanced by `shift` steps, with the tail padded by the last step.
pub fn shift_solution(old: &ConicProblem, sol: &ConicSolution, new: &ConicProblem, shift: usize) -> Option<ConicSolution> {
    let (lo, ln) = (old.layout, new.layout);
    if lo.nx != ln.nx || lo.nt != ln.nt || sol.x.len() != lo.num_vars() {
        return None;
    }
    let (nx, nt) = (ln.nx, ln.nt);
    let knot = |s: usize| (s + shift).min(nt);
    let interval = |s: usize| (s + shift).min(nt - 1);

    let mut x = vec![0.0; ln.num_vars()];
    for s in 0..=nt {
        for j in 0..nx {
            x[ln.rho(s, j)] = sol.x[lo.rho(knot(s), j)];
        }
    }
    for s in 0..nt {
        for j in 0..nx {
            x[ln.flux(s, j)] = sol.x[lo.flux(interval(s), j)];
            x[ln.epigraph(s, j)] = sol.x[lo.epigraph(interval(s), j)];
        }
    }
    if ln.has_hv_layer {
        for j in 0..nx {
            x[ln.hv_layer(j)] = (new.rho0[j] - x[ln.rho(0, j)]).max(0.0);
        }
    }

    let mut y = vec![0.0; new.program.num_rows()];
    let (bo, bn) = (&old.blocks, &new.blocks);
    let mut copy_steps = |from: &Range<usize>, to: &Range<usize>, per_step: usize, last: usize| {
        let steps = to.len() / per_step;
        for s in 0..steps {
            let src = (s + shift).min(last);
            for k in 0..per_step {
                y[to.start + s * per_step + k] = sol.y[from.start + src * per_step + k];
            }
        }
    };
    copy_steps(&bo.dynamics, &bn.dynamics, nx, nt - 1);
    copy_steps(&bo.density_bounds, &bn.density_bounds, nx, nt);
    copy_steps(&bo.flux_bounds, &bn.flux_bounds, nx, nt - 1);
    copy_steps(&bo.cones, &bn.cones, 3 * nx, nt - 1);
    let z = crate::conic::program::csc_mul(&new.program.a, &x);
    Some(ConicSolution { x, z, y })
}

pub fn is_optimal(report: &SolveReport) -> bool {
    report.status == SolveStatus::Optimal
}
