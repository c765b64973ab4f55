//! Operator-splitting solver for `min 1/2 x'Px + q'x  s.t.  Ax in C`.
//!
//! ADMM on the splitting `x = x~, z = A x~` with Ruiz equilibration, relaxation
//! and occasional penalty updates. Every iteration solves one quasi-definite
//! KKT system with a cached sparse LDL^T factorization. Rows that are not
//! equalities are folded into the (1,1) block as `A_S^T R_S A_S`, so only the
//! equality rows keep a dual block in the factorized matrix.

use std::time::Instant;

use serde::Serialize;
use sprs::{CsMat, PermOwned, SymmetryCheck};
use sprs_ldl::LdlNumeric;

use super::program::{csc_mul, csc_mul_into, csc_tmul, csc_tmul_into, inf_norm, ConicProgram, Triplets};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_iters: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation parameter in (0, 2).
    pub alpha: f64,
    pub scaling_iters: usize,
    pub check_every: usize,
    pub adaptive_rho: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            max_iters: 50_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iters: 15,
            check_every: 10,
            adaptive_rho: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub objective: f64,
    /// `||Ax - z||_inf / (1 + max(||Ax||_inf, ||z||_inf))`.
    pub primal_residual: f64,
    /// `||Px + q + A'y||_inf / (1 + max(||Px||_inf, ||A'y||_inf, ||q||_inf))`.
    pub dual_residual: f64,
    pub iterations: usize,
    pub rho_updates: usize,
    pub wall_time_secs: f64,
}

/// Primal-dual pair in the unscaled problem. `z` lies in `C` and `y` in its
/// normal cone at `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;
const EQUALITY_RHO_FACTOR: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const INFEASIBILITY_TOL: f64 = 1e-5;

fn clamp_norm(v: f64) -> f64 {
    if v < MIN_SCALING {
        1.0
    } else {
        v.min(MAX_SCALING)
    }
}

struct Scaling {
    /// Column scaling: `x = d .* x_hat`.
    d: Vec<f64>,
    /// Row scaling: `z_hat = e .* z`.
    e: Vec<f64>,
    /// Cost scaling.
    c: f64,
}

fn scale_csc(m: &mut CsMat<f64>, row: &[f64], col: &[f64]) {
    let indptr = m.indptr().raw_storage().to_vec();
    let indices = m.indices().to_vec();
    let data = m.data_mut();
    for j in 0..col.len() {
        for k in indptr[j]..indptr[j + 1] {
            data[k] *= row[indices[k]] * col[j];
        }
    }
}

fn col_inf_norms(m: &CsMat<f64>, out: &mut [f64]) {
    let indptr = m.indptr();
    let indptr = indptr.raw_storage();
    let data = m.data();
    for (j, o) in out.iter_mut().enumerate() {
        for v in &data[indptr[j]..indptr[j + 1]] {
            *o = o.max(v.abs());
        }
    }
}

fn row_inf_norms(m: &CsMat<f64>, out: &mut [f64]) {
    let indptr = m.indptr();
    let indptr = indptr.raw_storage();
    let indices = m.indices();
    let data = m.data();
    for j in 0..m.cols() {
        for k in indptr[j]..indptr[j + 1] {
            let i = indices[k];
            out[i] = out[i].max(data[k].abs());
        }
    }
}

/// Modified Ruiz equilibration. Rows of one cone share a scaling factor.
fn equilibrate(prog: &ConicProgram, iters: usize) -> (CsMat<f64>, Vec<f64>, CsMat<f64>, Scaling) {
    let n = prog.num_vars();
    let m = prog.num_rows();
    let mut p = prog.p.clone();
    let mut q = prog.q.clone();
    let mut a = prog.a.clone();
    let mut s = Scaling { d: vec![1.0; n], e: vec![1.0; m], c: 1.0 };
    let lin = prog.sets.interval_rows();

    for _ in 0..iters {
        let mut dcol = vec![0.0; n];
        col_inf_norms(&p, &mut dcol);
        col_inf_norms(&a, &mut dcol);
        let dcol: Vec<f64> = dcol.into_iter().map(|v| 1.0 / clamp_norm(v).sqrt()).collect();

        let mut erow = vec![0.0; m];
        row_inf_norms(&a, &mut erow);
        let mut erow: Vec<f64> = erow.into_iter().map(|v| 1.0 / clamp_norm(v).sqrt()).collect();
        for k in 0..prog.sets.cones {
            let st = lin + 3 * k;
            let mean = (erow[st] + erow[st + 1] + erow[st + 2]) / 3.0;
            erow[st..st + 3].iter_mut().for_each(|v| *v = mean);
        }

        scale_csc(&mut p, &dcol, &dcol);
        scale_csc(&mut a, &erow, &dcol);
        for j in 0..n {
            q[j] *= dcol[j];
            s.d[j] *= dcol[j];
        }
        for i in 0..m {
            s.e[i] *= erow[i];
        }

        let mut pcol = vec![0.0; n];
        col_inf_norms(&p, &mut pcol);
        let mean_p = if n > 0 { pcol.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let gamma = 1.0 / clamp_norm(mean_p.max(inf_norm(&q)));
        p.data_mut().iter_mut().for_each(|v| *v *= gamma);
        q.iter_mut().for_each(|v| *v *= gamma);
        s.c *= gamma;
    }
    (p, q, a, s)
}

struct Kkt {
    n: usize,
    /// Equality rows kept in the dual block, in KKT order.
    eq_rows: Vec<usize>,
    /// CSR copy of the scaled constraint matrix for folding.
    a_csr: CsMat<f64>,
    factor: LdlNumeric<f64, usize>,
    perm: Vec<usize>,
    work: Vec<f64>,
}

fn kkt_triplets(
    p: &CsMat<f64>,
    a_csr: &CsMat<f64>,
    eq_rows: &[usize],
    is_eq: &[bool],
    sigma: f64,
    r: &[f64],
) -> Triplets {
    let n = p.cols();
    // the LDL backend needs at least two unknowns; pad with an identity block
    let dim = (n + eq_rows.len()).max(2);
    let mut t = Triplets::new(dim, dim);
    for j in n + eq_rows.len()..dim {
        t.push(j, j, 1.0);
    }
    for (v, (i, j)) in p.iter() {
        t.push(i, j, *v);
    }
    for j in 0..n {
        t.push(j, j, sigma);
    }
    let indptr = a_csr.indptr();
    let indptr = indptr.raw_storage();
    let indices = a_csr.indices();
    let data = a_csr.data();
    for i in 0..a_csr.rows() {
        if is_eq[i] {
            continue;
        }
        let span = indptr[i]..indptr[i + 1];
        for k in span.clone() {
            for l in span.clone() {
                t.push(indices[k], indices[l], r[i] * data[k] * data[l]);
            }
        }
    }
    for (e, &i) in eq_rows.iter().enumerate() {
        for k in indptr[i]..indptr[i + 1] {
            t.push_sym(indices[k], n + e, data[k]);
        }
        t.push(n + e, n + e, -1.0 / r[i]);
    }
    t
}

impl Kkt {
    fn new(p: &CsMat<f64>, a: &CsMat<f64>, is_eq: &[bool], sigma: f64, r: &[f64]) -> Result<Self> {
        let n = p.cols();
        let eq_rows: Vec<usize> = (0..a.rows()).filter(|&i| is_eq[i]).collect();
        let a_csr = a.to_csr();
        let kkt = kkt_triplets(p, &a_csr, &eq_rows, is_eq, sigma, r).to_csc();
        let dim = kkt.rows();
        let (perm, _, _) = amd::order::<usize>(
            dim,
            kkt.indptr().raw_storage(),
            kkt.indices(),
            &amd::Control::default(),
        )
        .map_err(|s| Error::Factorization(format!("AMD ordering failed: {s:?}")))?;
        let factor = LdlNumeric::new_perm(kkt.view(), PermOwned::new(perm.clone()), SymmetryCheck::DontCheckSymmetry)
            .map_err(|e| Error::Factorization(e.to_string()))?;
        Ok(Kkt { n, eq_rows, a_csr, factor, perm, work: vec![0.0; dim] })
    }

    fn refactor(&mut self, p: &CsMat<f64>, is_eq: &[bool], sigma: f64, r: &[f64]) -> Result<()> {
        let kkt = kkt_triplets(p, &self.a_csr, &self.eq_rows, is_eq, sigma, r).to_csc();
        self.factor.update(kkt.view()).map_err(|e| Error::Factorization(e.to_string()))
    }

    /// Solves `K out = rhs` with the cached `P K P^T = L D L^T`.
    fn solve_into(&mut self, rhs: &[f64], out: &mut [f64]) {
        let l = self.factor.l();
        let indptr = l.indptr();
        let indptr = indptr.raw_storage();
        let indices = l.indices();
        let data = l.data();
        let d = self.factor.d();
        let x = &mut self.work;
        for (i, &pi) in self.perm.iter().enumerate() {
            x[i] = rhs.get(pi).copied().unwrap_or(0.0);
        }
        for col in 0..x.len() {
            let xc = x[col];
            if xc != 0.0 {
                for k in indptr[col]..indptr[col + 1] {
                    x[indices[k]] -= data[k] * xc;
                }
            }
        }
        for (v, dv) in x.iter_mut().zip(d) {
            *v /= dv;
        }
        for col in (0..x.len()).rev() {
            let mut v = x[col];
            for k in indptr[col]..indptr[col + 1] {
                v -= data[k] * x[indices[k]];
            }
            x[col] = v;
        }
        for (i, &pi) in self.perm.iter().enumerate() {
            if pi < out.len() {
                out[pi] = x[i];
            }
        }
    }

    fn dim(&self) -> usize {
        self.n + self.eq_rows.len()
    }
}

struct Residuals {
    primal: f64,
    dual: f64,
}

/// Normalized residuals of an unscaled iterate.
fn unscaled_residuals(prog: &ConicProgram, x: &[f64], z: &[f64], y: &[f64]) -> Residuals {
    let ax = csc_mul(&prog.a, x);
    let rp = ax.iter().zip(z).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let primal = rp / (1.0 + inf_norm(&ax).max(inf_norm(z)));

    let px = csc_mul(&prog.p, x);
    let aty = csc_tmul(&prog.a, y);
    let rd = (0..x.len()).fold(0.0f64, |m, j| m.max((px[j] + prog.q[j] + aty[j]).abs()));
    let dual = rd / (1.0 + inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&prog.q)));
    Residuals { primal, dual }
}

fn is_primal_infeasible(prog: &ConicProgram, dy: &[f64]) -> bool {
    let norm = inf_norm(dy);
    if norm <= 1e-30 {
        return false;
    }
    let dy: Vec<f64> = dy.iter().map(|v| v / norm).collect();
    let aty = csc_tmul(&prog.a, &dy);
    inf_norm(&aty) <= INFEASIBILITY_TOL && prog.sets.support(&dy, INFEASIBILITY_TOL) < -INFEASIBILITY_TOL
}

pub fn solve(
    prog: &ConicProgram,
    settings: &SolverSettings,
    warm: Option<&ConicSolution>,
) -> Result<(ConicSolution, SolveReport)> {
    let start = Instant::now();
    let n = prog.num_vars();
    let m = prog.num_rows();
    let (p, q, a, sc) = equilibrate(prog, settings.scaling_iters);

    let is_eq: Vec<bool> = (0..m).map(|i| prog.sets.is_equality(i)).collect();
    let mut rho = settings.rho;
    let penalty = |rho: f64| -> Vec<f64> {
        is_eq.iter().map(|&e| if e { EQUALITY_RHO_FACTOR * rho } else { rho }).collect::<Vec<f64>>()
    };
    let mut r = penalty(rho);
    let mut kkt = Kkt::new(&p, &a, &is_eq, settings.sigma, &r)?;

    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m];
    let mut y = vec![0.0; m];
    if let Some(w) = warm {
        if w.x.len() == n && w.y.len() == m {
            for j in 0..n {
                x[j] = w.x[j] / sc.d[j];
            }
            for i in 0..m {
                y[i] = sc.c * w.y[i] / sc.e[i];
            }
            csc_mul_into(&a, &x, &mut z);
        }
    }
    prog.sets.project_scaled(&mut z, &sc.e);

    let unscale = |x: &[f64], z: &[f64], y: &[f64]| -> ConicSolution {
        ConicSolution {
            x: x.iter().zip(&sc.d).map(|(v, d)| v * d).collect(),
            z: z.iter().zip(&sc.e).map(|(v, e)| v / e).collect(),
            y: y.iter().zip(&sc.e).map(|(v, e)| v * e / sc.c).collect(),
        }
    };

    let mut rhs = vec![0.0; kkt.dim()];
    let mut sol = vec![0.0; kkt.dim()];
    let mut w = vec![0.0; m];
    let mut atw = vec![0.0; n];
    let mut z_tilde = vec![0.0; m];
    let mut z_relax = vec![0.0; m];
    let mut y_prev = y.clone();
    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;
    let mut rho_updates = 0;
    let mut best: Option<(f64, ConicSolution, Residuals)> = None;
    let adapt_every = 100;

    for iter in 1..=settings.max_iters {
        iterations = iter;
        // right-hand side of the reduced KKT system
        for i in 0..m {
            w[i] = if is_eq[i] { 0.0 } else { r[i] * z[i] - y[i] };
        }
        csc_tmul_into(&a, &w, &mut atw);
        for j in 0..n {
            rhs[j] = settings.sigma * x[j] - q[j] + atw[j];
        }
        for (e, &i) in kkt.eq_rows.iter().enumerate() {
            rhs[n + e] = z[i] - y[i] / r[i];
        }
        kkt.solve_into(&rhs, &mut sol);
        let x_tilde = &sol[..n];
        csc_mul_into(&a, x_tilde, &mut z_tilde);

        let alpha = settings.alpha;
        for j in 0..n {
            x[j] = alpha * x_tilde[j] + (1.0 - alpha) * x[j];
        }
        y_prev.copy_from_slice(&y);
        for i in 0..m {
            z_relax[i] = alpha * z_tilde[i] + (1.0 - alpha) * z[i];
            z[i] = z_relax[i] + y[i] / r[i];
        }
        prog.sets.project_scaled(&mut z, &sc.e);
        for i in 0..m {
            y[i] += r[i] * (z_relax[i] - z[i]);
        }

        let check = iter % settings.check_every == 0 || iter == settings.max_iters;
        if check {
            let cur = unscale(&x, &z, &y);
            let res = unscaled_residuals(prog, &cur.x, &cur.z, &cur.y);
            if res.primal <= settings.tol_primal && res.dual <= settings.tol_dual {
                best = Some((0.0, cur, res));
                status = SolveStatus::Optimal;
                break;
            }
            let dy: Vec<f64> = (0..m).map(|i| (y[i] - y_prev[i]) * sc.e[i] / sc.c).collect();
            if is_primal_infeasible(prog, &dy) {
                best = Some((f64::INFINITY, cur, res));
                status = SolveStatus::Infeasible;
                break;
            }
            let score = (res.primal / settings.tol_primal).max(res.dual / settings.tol_dual);
            if best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, cur, res));
            }
        }

        if settings.adaptive_rho && iter % adapt_every == 0 {
            // balance the scaled residuals
            let ax = csc_mul(&a, &x);
            let px = csc_mul(&p, &x);
            let aty = csc_tmul(&a, &y);
            let rp = ax.iter().zip(&z).fold(0.0f64, |s, (u, v)| s.max((u - v).abs()));
            let rd = (0..n).fold(0.0f64, |s, j| s.max((px[j] + q[j] + aty[j]).abs()));
            let pn = inf_norm(&ax).max(inf_norm(&z)).max(1e-30);
            let dn = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&q)).max(1e-30);
            let ratio = ((rp / pn) / (rd / dn).max(1e-30)).sqrt();
            let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
            if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                rho = new_rho;
                r = penalty(rho);
                kkt.refactor(&p, &is_eq, settings.sigma, &r)?;
                rho_updates += 1;
            }
        }
    }

    let (_, solution, res) = match best {
        Some(b) => b,
        None => {
            let cur = unscale(&x, &z, &y);
            let res = unscaled_residuals(prog, &cur.x, &cur.z, &cur.y);
            (0.0, cur, res)
        }
    };
    let report = SolveReport {
        status,
        objective: prog.objective(&solution.x),
        primal_residual: res.primal,
        dual_residual: res.dual,
        iterations,
        rho_updates,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((solution, report))
}
