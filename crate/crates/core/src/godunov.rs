//! First-order Godunov transport of the HV density under the LWR flux, with
//! the AV density frozen in space and time.

use crate::domain::{DensityField, Grid, Params};
use crate::error::{Error, Result};

/// Tolerance on bound violations that are clamped instead of reported.
pub const CLAMP_TOL: f64 = 1e-12;

/// `f(rho1; rho2) = u0 * rho1 * (1 - (rho1 + rho2) / rho_star)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LwrFlux {
    pub u0: f64,
    pub rho_star: f64,
}

impl LwrFlux {
    pub fn new(params: &Params) -> Self {
        LwrFlux { u0: params.free_flow_speed, rho_star: params.rho_star }
    }

    /// HV speed. Negative when the total density exceeds `rho_star`.
    #[inline]
    pub fn velocity(&self, rho1: f64, rho2: f64) -> f64 {
        self.u0 * (1.0 - (rho1 + rho2) / self.rho_star)
    }

    #[inline]
    pub fn flux(&self, rho1: f64, rho2: f64) -> f64 {
        rho1 * self.velocity(rho1, rho2)
    }

    /// Density of maximal flux for a fixed AV density.
    #[inline]
    pub fn critical_density(&self, rho2: f64) -> f64 {
        0.5 * (self.rho_star - rho2)
    }

    /// Exact Riemann flux for the concave flux at fixed `rho2`.
    pub fn interface_flux(&self, rho_l: f64, rho_r: f64, rho2: f64) -> f64 {
        let fl = self.flux(rho_l, rho2);
        let fr = self.flux(rho_r, rho2);
        if rho_l <= rho_r {
            fl.min(fr)
        } else {
            let c = self.critical_density(rho2);
            if rho_r <= c && c <= rho_l {
                self.flux(c, rho2)
            } else {
                fl.max(fr)
            }
        }
    }
}

fn check_cfl(grid: &Grid, flux: &LwrFlux) -> Result<f64> {
    let lambda = grid.dt / grid.dx;
    let ratio = lambda * flux.u0;
    if ratio > 1.0 + 1e-12 {
        return Err(Error::CflViolation { ratio });
    }
    Ok(lambda)
}

fn clamp_physical(values: &mut [f64], upper: f64) -> Result<()> {
    for (cell, v) in values.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -CLAMP_TOL {
                return Err(Error::NonPhysical { cell, value: *v, upper });
            }
            *v = 0.0;
        } else if *v > upper {
            if *v > upper + CLAMP_TOL {
                return Err(Error::NonPhysical { cell, value: *v, upper });
            }
            *v = upper;
        }
    }
    Ok(())
}

/// One conservative update. The AV density at an interface is the mean of the
/// two adjacent cells.
pub fn godunov_step(rho1: &[f64], rho2_now: &[f64], grid: &Grid, flux: &LwrFlux) -> Result<Vec<f64>> {
    let nx = grid.nx;
    debug_assert_eq!(rho1.len(), nx);
    debug_assert_eq!(rho2_now.len(), nx);
    let lambda = check_cfl(grid, flux)?;

    // iface[j] is the flux through the right edge of cell j
    let iface: Vec<f64> = (0..nx)
        .map(|j| {
            let r = grid.right(j);
            let rho2_face = 0.5 * (rho2_now[j] + rho2_now[r]);
            flux.interface_flux(rho1[j], rho1[r], rho2_face)
        })
        .collect();

    let mut next: Vec<f64> = (0..nx)
        .map(|j| rho1[j] - lambda * (iface[j] - iface[grid.left(j)]))
        .collect();
    clamp_physical(&mut next, flux.rho_star)?;
    Ok(next)
}

/// Runs `godunov_step` across the horizon, reading the AV density of the
/// current step. Returns `rho2_traj.steps()` time levels.
pub fn propagate_hv(
    rho1_init: &[f64],
    rho2_traj: &DensityField,
    grid: &Grid,
    flux: &LwrFlux,
) -> Result<DensityField> {
    let steps = rho2_traj.steps();
    let mut out = DensityField::zeros(grid.nx, 0);
    out.push_slice(rho1_init);
    let mut current = rho1_init.to_vec();
    for n in 0..steps.saturating_sub(1) {
        current = godunov_step(&current, rho2_traj.slice(n), grid, flux)?;
        out.push_slice(&current);
    }
    Ok(out)
}

/// Single-population LWR run of `rho0` over `steps` updates.
pub fn propagate_single(rho0: &[f64], steps: usize, grid: &Grid, flux: &LwrFlux) -> Result<DensityField> {
    let zeros = vec![0.0; grid.nx];
    let mut out = DensityField::zeros(grid.nx, 0);
    out.push_slice(rho0);
    let mut current = rho0.to_vec();
    for _ in 0..steps {
        current = godunov_step(&current, &zeros, grid, flux)?;
        out.push_slice(&current);
    }
    Ok(out)
}

/// Both populations driven at the HV speed: the total follows single-population
/// LWR and the AV share is carried upwind with each interface flux.
pub fn propagate_coupled(
    rho1_init: &[f64],
    rho2_init: &[f64],
    steps: usize,
    grid: &Grid,
    flux: &LwrFlux,
) -> Result<(DensityField, DensityField)> {
    let nx = grid.nx;
    let lambda = check_cfl(grid, flux)?;
    let mut rho1 = rho1_init.to_vec();
    let mut rho2 = rho2_init.to_vec();
    let mut out1 = DensityField::zeros(nx, 0);
    let mut out2 = DensityField::zeros(nx, 0);
    out1.push_slice(&rho1);
    out2.push_slice(&rho2);

    let share = |r1: f64, r2: f64| {
        let total = r1 + r2;
        if total > 0.0 {
            r2 / total
        } else {
            0.0
        }
    };

    for _ in 0..steps {
        let total: Vec<f64> = rho1.iter().zip(&rho2).map(|(a, b)| a + b).collect();
        let mut f_total = vec![0.0; nx];
        let mut f_av = vec![0.0; nx];
        for j in 0..nx {
            let r = grid.right(j);
            let f = flux.interface_flux(total[j], total[r], 0.0);
            let up = if f >= 0.0 { j } else { r };
            f_total[j] = f;
            f_av[j] = f * share(rho1[up], rho2[up]);
        }
        let mut next2: Vec<f64> = (0..nx)
            .map(|j| rho2[j] - lambda * (f_av[j] - f_av[grid.left(j)]))
            .collect();
        let mut next1: Vec<f64> = (0..nx)
            .map(|j| {
                let l = grid.left(j);
                rho1[j] - lambda * ((f_total[j] - f_av[j]) - (f_total[l] - f_av[l]))
            })
            .collect();
        clamp_physical(&mut next1, flux.rho_star)?;
        clamp_physical(&mut next2, flux.rho_star)?;
        rho1 = next1;
        rho2 = next2;
        out1.push_slice(&rho1);
        out2.push_slice(&rho2);
    }
    Ok((out1, out2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, paper_initial_density};
    use proptest::prelude::*;

    fn flux() -> LwrFlux {
        LwrFlux { u0: 1.0, rho_star: 10.0 }
    }

    fn grid(nx: usize) -> Grid {
        build_grid(&Params::default(), nx, 0.5).unwrap()
    }

    #[test]
    fn velocity_examples() {
        let f = flux();
        assert_eq!(f.velocity(5.0, 5.0), 0.0);
        assert_eq!(f.velocity(0.0, 0.0), 1.0);
        assert!((f.velocity(3.0, 4.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn interface_flux_examples() {
        let f = flux();
        assert!((f.interface_flux(5.0, 5.0, 0.0) - 2.5).abs() < 1e-15);
        assert!((f.interface_flux(2.0, 8.0, 0.0) - 1.6).abs() < 1e-15);
        assert!((f.interface_flux(8.0, 2.0, 0.0) - 2.5).abs() < 1e-15);
        // critical point outside [rho_r, rho_l]
        assert!((f.interface_flux(9.0, 7.0, 0.0) - f.flux(7.0, 0.0)).abs() < 1e-15);
    }

    #[test]
    fn uniform_state_is_steady() {
        let g = grid(16);
        let rho1 = vec![3.0; 16];
        let rho2 = vec![1.5; 16];
        let next = godunov_step(&rho1, &rho2, &g, &flux()).unwrap();
        assert_eq!(next, rho1);
    }

    #[test]
    fn cfl_violation_is_an_error() {
        let mut g = grid(16);
        g.dt = 2.0 * g.dx;
        let rho = vec![1.0; 16];
        assert!(matches!(godunov_step(&rho, &rho, &g, &flux()), Err(Error::CflViolation { .. })));
    }

    #[test]
    fn large_violation_is_reported() {
        // AV density far above jam density makes the flux strongly negative and drains cell 1
        let g = grid(8);
        let f = LwrFlux { u0: 1.0, rho_star: 1.0 };
        let rho1 = vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let rho2 = vec![5.0; 8];
        assert!(matches!(godunov_step(&rho1, &rho2, &g, &f), Err(Error::NonPhysical { .. })));
    }

    /// Independently coded Godunov update for `u0 r (1 - r / rho_star)`,
    /// using the explicit Riemann fan rather than the min/max formula.
    fn reference_step(rho: &[f64], lambda: f64, u0: f64, rs: f64) -> Vec<f64> {
        let n = rho.len();
        let f = |r: f64| u0 * r * (1.0 - r / rs);
        let fp = |r: f64| u0 * (1.0 - 2.0 * r / rs);
        let riemann = |l: f64, r: f64| -> f64 {
            if l <= r {
                // shock with speed s
                let s = if (r - l).abs() < 1e-300 { fp(l) } else { (f(r) - f(l)) / (r - l) };
                if s >= 0.0 {
                    f(l)
                } else {
                    f(r)
                }
            } else if fp(l) >= 0.0 && fp(r) >= 0.0 {
                f(l)
            } else if fp(l) <= 0.0 && fp(r) <= 0.0 {
                f(r)
            } else {
                // transonic rarefaction
                f(rs / 2.0)
            }
        };
        (0..n)
            .map(|j| {
                let jm = (j + n - 1) % n;
                let jp = (j + 1) % n;
                rho[j] - lambda * (riemann(rho[j], rho[jp]) - riemann(rho[jm], rho[j]))
            })
            .collect()
    }

    #[test]
    fn matches_reference_scheme() {
        let g = grid(48);
        let rho0 = paper_initial_density(&g);
        let zeros = vec![0.0; 48];
        let ours = godunov_step(&rho0, &zeros, &g, &flux()).unwrap();
        let reference = reference_step(&rho0, g.dt / g.dx, 1.0, 10.0);
        for (a, b) in ours.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }

        // and over many steps, including shock formation
        let mut a = rho0.clone();
        let mut b = rho0;
        for _ in 0..200 {
            a = godunov_step(&a, &zeros, &g, &flux()).unwrap();
            b = reference_step(&b, g.dt / g.dx, 1.0, 10.0);
        }
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-11);
        }
    }

    #[test]
    fn uniform_rho1_without_avs_is_constant() {
        let g = grid(16);
        let traj = propagate_hv(&vec![4.0; 16], &DensityField::zeros(16, 11), &g, &flux()).unwrap();
        assert_eq!(traj.steps(), 11);
        for n in 0..11 {
            assert_eq!(traj.slice(n), &[4.0; 16][..]);
        }
    }

    #[test]
    fn coupled_split_matches_single_population() {
        let g = grid(48);
        let f = flux();
        let rho0 = paper_initial_density(&g);
        let beta = 0.2;
        let rho1: Vec<f64> = rho0.iter().map(|r| (1.0 - beta) * r).collect();
        let rho2: Vec<f64> = rho0.iter().map(|r| beta * r).collect();
        let (h, a) = propagate_coupled(&rho1, &rho2, g.nt, &g, &f).unwrap();
        let hv = propagate_hv(&rho1, &a, &g, &f).unwrap();
        let single = propagate_single(&rho0, g.nt, &g, &f).unwrap();
        for n in 0..=g.nt {
            let l1: f64 = (0..48)
                .map(|j| (hv.get(n, j) + a.get(n, j) - single.get(n, j)).abs())
                .sum::<f64>()
                * g.dx;
            let t = g.time(n);
            assert!(l1 <= 2.0 * g.dx * t.max(g.dt), "step {n}: {l1}");
            // the coupled scheme reproduces the single-population total to roundoff
            let coupled: f64 = (0..48)
                .map(|j| (h.get(n, j) + a.get(n, j) - single.get(n, j)).abs())
                .sum();
            assert!(coupled < 1e-10);
        }
    }

    fn field_strategy(max_nx: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (8..=max_nx).prop_flat_map(|nx| {
            (
                proptest::collection::vec(0.0..5.0f64, nx),
                proptest::collection::vec(0.0..5.0f64, nx),
            )
        })
    }

    proptest! {
        #[test]
        fn mass_is_conserved((rho1, rho2) in field_strategy(64)) {
            let g = grid(rho1.len());
            let next = godunov_step(&rho1, &rho2, &g, &flux()).unwrap();
            let before: f64 = rho1.iter().sum();
            let after: f64 = next.iter().sum();
            prop_assert!((before - after).abs() <= 1e-12 * before.max(1e-300));
        }

        #[test]
        fn maximum_principle_for_uniform_avs(rho1 in proptest::collection::vec(0.0..8.0f64, 24), a in 0.0..2.0f64) {
            let g = grid(24);
            let next = godunov_step(&rho1, &vec![a; 24], &g, &flux()).unwrap();
            let lo = rho1.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = rho1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for v in next {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }

        #[test]
        fn scheme_is_monotone((rho1, rho2) in field_strategy(24), cell in 0usize..8, bump in 1e-6..1e-3f64) {
            let g = grid(rho1.len());
            let f = flux();
            let base = godunov_step(&rho1, &rho2, &g, &f).unwrap();
            let mut up = rho1.clone();
            up[cell] += bump;
            let bumped = godunov_step(&up, &rho2, &g, &f).unwrap();
            for (b, u) in base.iter().zip(&bumped) {
                prop_assert!(u >= &(b - 1e-13));
            }
        }

        #[test]
        fn riemann_flux_is_consistent(rho in 0.0..10.0f64, rho2 in 0.0..10.0f64) {
            let f = flux();
            prop_assert_eq!(f.interface_flux(rho, rho, rho2), f.flux(rho, rho2));
        }
    }
}
