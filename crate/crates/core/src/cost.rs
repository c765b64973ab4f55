//! Control and state cost functionals plus the per-slice diagnostics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::domain::{DensityField, FlowField, Grid};

/// Reference density of the normalized L2 metric.
pub const METRIC_REFERENCE_DENSITY: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    L2,
    #[default]
    Hm1,
}

impl std::fmt::Display for CostKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CostKind::L2 => "l2",
            CostKind::Hm1 => "hm1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub kinetic: f64,
    pub state: f64,
    pub weighted_total: f64,
}

impl CostBreakdown {
    pub fn new(kinetic: f64, state: f64, weight: f64) -> Self {
        CostBreakdown { kinetic, state, weighted_total: kinetic + weight * state }
    }
}

/// Inverse-Laplacian weights `(2 pi k / L)^-2` for `k = 1..=nx/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralWeights {
    weights: Vec<f64>,
    nx: usize,
    length: f64,
}

impl SpectralWeights {
    pub fn new(nx: usize, length: f64) -> Self {
        let weights = (0..=nx / 2)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    let wave = 2.0 * PI * k as f64 / length;
                    1.0 / (wave * wave)
                }
            })
            .collect();
        SpectralWeights { weights, nx, length }
    }

    /// Weight of physical wavenumber `k` (0 for the constant mode).
    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    /// Weight of DFT index `idx`, folding `nx - idx` onto `idx`.
    fn index_weight(&self, idx: usize) -> f64 {
        self.weights[idx.min(self.nx - idx)]
    }

    /// `int |(-Laplacian)^(-1/2) (rho - mean)|^2 dx` of one slice, via a direct DFT.
    pub fn seminorm_sq(&self, slice: &[f64]) -> f64 {
        let n = self.nx;
        debug_assert_eq!(slice.len(), n);
        let mut total = 0.0;
        for idx in 1..n {
            let mut re = 0.0;
            let mut im = 0.0;
            for (j, &v) in slice.iter().enumerate() {
                // reduce the phase index first so the angle stays small
                let phase = 2.0 * PI * ((idx * j) % n) as f64 / n as f64;
                re += v * phase.cos();
                im -= v * phase.sin();
            }
            let c2 = (re * re + im * im) / (n * n) as f64;
            total += self.index_weight(idx) * c2;
        }
        self.length * total
    }

    /// First row of the circulant Gram matrix `K` with
    /// `slice^T K slice == seminorm_sq(slice)`.
    pub fn gram_kernel(&self) -> Vec<f64> {
        let n = self.nx;
        let scale = self.length / (n * n) as f64;
        (0..n)
            .map(|d| {
                (1..n)
                    .map(|idx| {
                        let phase = 2.0 * PI * ((idx * d) % n) as f64 / n as f64;
                        self.index_weight(idx) * phase.cos()
                    })
                    .sum::<f64>()
                    * scale
            })
            .collect()
    }
}

/// `sum m^2 / rho dx dt` over the flux intervals, density taken at the
/// interval's left knot. `0^2/0 = 0`; `m^2/0 = inf` for `m != 0`.
pub fn kinetic_cost(rho2: &DensityField, m2: &FlowField, grid: &Grid) -> f64 {
    let mut total = 0.0;
    for n in 0..m2.steps() {
        for j in 0..m2.nx() {
            let m = m2.get(n, j);
            if m == 0.0 {
                continue;
            }
            let r = rho2.get(n, j);
            if r <= 0.0 {
                return f64::INFINITY;
            }
            total += m * m / r;
        }
    }
    total * grid.dx * grid.dt
}

fn total_slice(rho1: &DensityField, rho2: &DensityField, n: usize) -> Vec<f64> {
    rho1.slice(n).iter().zip(rho2.slice(n)).map(|(a, b)| a + b).collect()
}

/// `int (rho1 + rho2)^2 dx` of one slice.
pub fn l2_slice(total: &[f64], grid: &Grid) -> f64 {
    total.iter().map(|v| v * v).sum::<f64>() * grid.dx
}

/// `int int (rho1 + rho2)^2 dx dt`, trapezoid in time.
pub fn l2_density_cost(rho1: &DensityField, rho2: &DensityField, grid: &Grid) -> f64 {
    let last = rho1.steps() - 1;
    (0..=last)
        .map(|n| grid.trapezoid_weight(n, last) * l2_slice(&total_slice(rho1, rho2, n), grid))
        .sum()
}

/// `(1 / rho_bar) int |(-Laplacian)^(-1/2)(rho1 + rho2)|^2 dx dt`, trapezoid in time.
pub fn hm1_density_cost(rho1: &DensityField, rho2: &DensityField, grid: &Grid, rho_bar: f64) -> f64 {
    let weights = SpectralWeights::new(grid.nx, grid.domain_length);
    let last = rho1.steps() - 1;
    let sum: f64 = (0..=last)
        .map(|n| grid.trapezoid_weight(n, last) * weights.seminorm_sq(&total_slice(rho1, rho2, n)))
        .sum();
    sum / rho_bar
}

pub fn state_cost(kind: CostKind, rho1: &DensityField, rho2: &DensityField, grid: &Grid, rho_bar: f64) -> f64 {
    match kind {
        CostKind::L2 => l2_density_cost(rho1, rho2, grid),
        CostKind::Hm1 => hm1_density_cost(rho1, rho2, grid, rho_bar),
    }
}

/// `int (rho1 + rho2)^2 dx / (3.5^2 |Omega|)` of one slice.
pub fn normalized_l2_metric(rho1_slice: &[f64], rho2_slice: &[f64], grid: &Grid) -> f64 {
    let total: Vec<f64> = rho1_slice.iter().zip(rho2_slice).map(|(a, b)| a + b).collect();
    normalized_l2_of_total(&total, grid)
}

pub fn normalized_l2_of_total(total: &[f64], grid: &Grid) -> f64 {
    l2_slice(total, grid) / (METRIC_REFERENCE_DENSITY * METRIC_REFERENCE_DENSITY * grid.domain_length)
}

/// Per-slice `H^-1` deviation divided by the total mass.
pub fn hm1_deviation(total: &[f64], weights: &SpectralWeights, rho_bar: f64) -> f64 {
    weights.seminorm_sq(total) / rho_bar
}
