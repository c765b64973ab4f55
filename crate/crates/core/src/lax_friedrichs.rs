//! Classical Lax-Friedrichs discretization of the AV continuity equation.
//!
//! The update is linear in `(rho2, m2)`, so it can be exported verbatim as
//! equality rows of the convex subproblem.

use crate::domain::{DensityField, FlowField, Grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaxFriedrichsOperator {
    pub nx: usize,
    pub dx: f64,
    pub dt: f64,
}

/// One coefficient of a sparse equality row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    /// AV density at `(step, cell)`.
    Density { step: usize, cell: usize, coef: f64 },
    /// AV flux at `(step, cell)`.
    Flux { step: usize, cell: usize, coef: f64 },
}

/// `sum(terms) = 0`, encoding one cell of one update.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualityRow {
    pub step: usize,
    pub cell: usize,
    pub terms: Vec<Term>,
}

impl LaxFriedrichsOperator {
    pub fn new(grid: &Grid) -> Self {
        LaxFriedrichsOperator { nx: grid.nx, dx: grid.dx, dt: grid.dt }
    }

    /// `dt / (2 dx)`.
    pub fn flux_weight(&self) -> f64 {
        self.dt / (2.0 * self.dx)
    }

    #[inline]
    fn neighbors(&self, j: usize) -> (usize, usize) {
        ((j + self.nx - 1) % self.nx, (j + 1) % self.nx)
    }

    pub fn step(&self, rho2: &[f64], m2: &[f64]) -> Vec<f64> {
        let k = self.flux_weight();
        (0..self.nx)
            .map(|j| {
                let (l, r) = self.neighbors(j);
                0.5 * (rho2[l] + rho2[r]) - k * (m2[r] - m2[l])
            })
            .collect()
    }

    /// Density trajectory with `m2.steps() + 1` levels.
    pub fn rollout(&self, rho2_0: &[f64], m2: &FlowField) -> DensityField {
        let mut out = DensityField::zeros(self.nx, 0);
        out.push_slice(rho2_0);
        let mut current = rho2_0.to_vec();
        for n in 0..m2.steps() {
            current = self.step(&current, m2.slice(n));
            out.push_slice(&current);
        }
        out
    }

    /// Conservative rollout with donor-cell flux limiting so no density goes
    /// negative. Matches `rollout` wherever the plain update stays nonnegative.
    pub fn rollout_nonnegative(&self, rho2_0: &[f64], m2: &FlowField) -> DensityField {
        let nx = self.nx;
        let lambda = self.dt / self.dx;
        let diffusion = 0.5 * self.dx / self.dt;
        let mut out = DensityField::zeros(nx, 0);
        out.push_slice(rho2_0);
        let mut rho = rho2_0.to_vec();
        let mut face = vec![0.0; nx];
        let mut theta = vec![0.0; nx];
        for n in 0..m2.steps() {
            let m = m2.slice(n);
            // face[j] is the flux through the right edge of cell j
            for j in 0..nx {
                let r = (j + 1) % nx;
                face[j] = 0.5 * (m[j] + m[r]) - diffusion * (rho[r] - rho[j]);
            }
            for j in 0..nx {
                let l = (j + nx - 1) % nx;
                let outflow = lambda * (face[j].max(0.0) + (-face[l]).max(0.0));
                theta[j] = if outflow > rho[j] { rho[j].max(0.0) / outflow } else { 1.0 };
            }
            for j in 0..nx {
                let r = (j + 1) % nx;
                face[j] *= if face[j] >= 0.0 { theta[j] } else { theta[r] };
            }
            let next: Vec<f64> = (0..nx)
                .map(|j| {
                    let l = (j + nx - 1) % nx;
                    (rho[j] - lambda * (face[j] - face[l])).max(0.0)
                })
                .collect();
            rho = next;
            out.push_slice(&rho);
        }
        out
    }

    /// One row per `(cell, step)` for `nt` updates:
    /// `rho[n+1][j] - rho[n][j-1]/2 - rho[n][j+1]/2 + k m[n][j+1] - k m[n][j-1] = 0`.
    pub fn equality_rows(&self, nt: usize) -> Vec<EqualityRow> {
        let k = self.flux_weight();
        let mut rows = Vec::with_capacity(self.nx * nt);
        for n in 0..nt {
            for j in 0..self.nx {
                let (l, r) = self.neighbors(j);
                rows.push(EqualityRow {
                    step: n,
                    cell: j,
                    terms: vec![
                        Term::Density { step: n + 1, cell: j, coef: 1.0 },
                        Term::Density { step: n, cell: l, coef: -0.5 },
                        Term::Density { step: n, cell: r, coef: -0.5 },
                        Term::Flux { step: n, cell: r, coef: k },
                        Term::Flux { step: n, cell: l, coef: -k },
                    ],
                });
            }
        }
        rows
    }

    /// Max absolute defect of `rho2` against the update driven by `m2`.
    pub fn max_residual(&self, rho2: &DensityField, m2: &FlowField) -> f64 {
        let mut worst = 0.0f64;
        for n in 0..m2.steps() {
            let next = self.step(rho2.slice(n), m2.slice(n));
            for (a, b) in next.iter().zip(rho2.slice(n + 1)) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

impl EqualityRow {
    pub fn residual(&self, rho2: &DensityField, m2: &FlowField) -> f64 {
        self.terms
            .iter()
            .map(|t| match *t {
                Term::Density { step, cell, coef } => coef * rho2.get(step, cell),
                Term::Flux { step, cell, coef } => coef * m2.get(step, cell),
            })
            .sum()
    }
}
