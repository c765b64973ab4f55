//! Optimality checks recomputed from a candidate point, independent of solver state.

use serde::Serialize;

use super::admm::ConicSolution;
use super::program::{csc_mul, csc_tmul, inf_norm, ConicProgram};
use super::sets::{project_rotated, rotated_distance};
use super::subproblem::{plan_to_vector, ConicProblem, InitialAv};
use crate::domain::ControlPlan;
use crate::lax_friedrichs::LaxFriedrichsOperator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProgramResiduals {
    /// `||A x - Pi_C(A x)||_inf / (1 + max(||A x||, ||Pi_C(A x)||))`.
    pub primal: f64,
    /// `||P x + q + A^T y||_inf / (1 + max(||P x||, ||q||, ||A^T y||))`.
    pub dual: f64,
    /// Normal-cone violation of `y` at `Pi_C(A x)`, scaled by `1 + ||y|| max(1, ||z||)`.
    pub complementarity: f64,
}

/// Residuals of `x` (and duals `y` when given) for a generic conic program.
pub fn program_residuals(prog: &ConicProgram, x: &[f64], y: Option<&[f64]>) -> ProgramResiduals {
    let ax = csc_mul(&prog.a, x);
    let mut z = ax.clone();
    prog.sets.project(&mut z);
    let gap = ax.iter().zip(&z).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let primal = gap / (1.0 + inf_norm(&ax).max(inf_norm(&z)));

    let Some(y) = y else {
        return ProgramResiduals { primal, dual: f64::NAN, complementarity: f64::NAN };
    };
    let px = csc_mul(&prog.p, x);
    let aty = csc_tmul(&prog.a, y);
    let stat = px.iter().zip(&prog.q).zip(&aty).fold(0.0f64, |m, ((a, b), c)| m.max((a + b + c).abs()));
    let dual = stat / (1.0 + inf_norm(&px).max(inf_norm(&prog.q)).max(inf_norm(&aty)));

    let sets = &prog.sets;
    let m = sets.interval_rows();
    let mut comp = 0.0f64;
    for i in 0..m {
        let yi = y[i];
        let v = if yi > 0.0 {
            if sets.upper[i].is_finite() {
                yi * (sets.upper[i] - z[i])
            } else {
                yi
            }
        } else if yi < 0.0 {
            if sets.lower[i].is_finite() {
                -yi * (z[i] - sets.lower[i])
            } else {
                -yi
            }
        } else {
            0.0
        };
        comp = comp.max(v.abs());
    }
    for k in 0..sets.cones {
        let s = sets.cone_start(k);
        let yk = [y[s], y[s + 1], y[s + 2]];
        // -y must lie in the (self-dual) cone and be orthogonal to z
        comp = comp.max(rotated_distance([-yk[0], -yk[1], -yk[2]]));
        comp = comp.max((yk[0] * z[s] + yk[1] * z[s + 1] + yk[2] * z[s + 2]).abs());
    }
    let complementarity = comp / (1.0 + inf_norm(y) * inf_norm(&z).max(1.0));
    ProgramResiduals { primal, dual, complementarity }
}

/// Plan-level and program-level residuals of a subproblem candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktReport {
    /// Max absolute Lax-Friedrichs residual.
    pub dynamics: f64,
    /// Max absolute deviation from the initial condition.
    pub initial: f64,
    /// Budget excess, zero when satisfied.
    pub budget: f64,
    /// Max violation of `0 <= rho2 <= cap - rho1`.
    pub density_bounds: f64,
    /// Max violation of the flux bounds.
    pub flux_bounds: f64,
    pub program: ProgramResiduals,
}

impl KktReport {
    pub fn primal_feasible(&self, tol: f64) -> bool {
        self.program.primal <= tol
    }

    pub fn passes(&self, tol_primal: f64, tol_dual: f64) -> bool {
        self.program.primal <= tol_primal
            && self.program.dual <= tol_dual
            && self.program.complementarity <= tol_dual
    }
}

/// Checks `plan` against `problem`. Dual quantities need the solver's
/// solution for `y` and the epigraph values; without it they are `NaN`.
pub fn kkt_check(problem: &ConicProblem, plan: &ControlPlan, solution: Option<&ConicSolution>) -> KktReport {
    let grid = &problem.grid;
    let l = problem.layout;
    let op = LaxFriedrichsOperator::new(grid);
    let dynamics = op.max_residual(&plan.rho2, &plan.m2);

    let initial = match &problem.initial {
        InitialAv::Free => (0..l.nx).fold(0.0f64, |m, j| {
            let r = plan.rho2.get(0, j);
            m.max((r - plan.rho2_0[j]).abs()).max((r - problem.rho0[j]).max(0.0))
        }),
        InitialAv::Fixed(f) => (0..l.nx).fold(0.0f64, |m, j| m.max((plan.rho2.get(0, j) - f[j]).abs())),
    };
    let budget = (grid.integrate(plan.rho2.slice(0)) - problem.budget).max(0.0);

    let mut density_bounds = 0.0f64;
    for s in 0..=l.nt {
        for j in 0..l.nx {
            let r = plan.rho2.get(s, j);
            density_bounds = density_bounds.max(-r).max(r - problem.density_upper.get(s, j));
        }
    }
    let hi = problem.flow_cap.unwrap_or(f64::INFINITY);
    let flux_bounds = plan.m2.values().iter().fold(0.0f64, |m, &v| m.max(-v).max(v - hi));

    let x = plan_to_vector(problem, plan, solution.map(|s| s.x.as_slice()));
    let program = if x.iter().all(|v| v.is_finite()) {
        program_residuals(&problem.program, &x, solution.map(|s| s.y.as_slice()))
    } else {
        ProgramResiduals { primal: f64::INFINITY, dual: f64::NAN, complementarity: f64::NAN }
    };
    KktReport { dynamics, initial, budget, density_bounds, flux_bounds, program }
}

/// Largest violation of `m^2 <= rho t` over the cones, as a Euclidean distance.
pub fn cone_violation(prog: &ConicProgram, x: &[f64]) -> f64 {
    let ax = csc_mul(&prog.a, x);
    (0..prog.sets.cones).fold(0.0f64, |m, k| {
        let s = prog.sets.cone_start(k);
        let z = [ax[s], ax[s + 1], ax[s + 2]];
        let p = project_rotated(z);
        m.max(((z[0] - p[0]).powi(2) + (z[1] - p[1]).powi(2) + (z[2] - p[2]).powi(2)).sqrt())
    })
}
