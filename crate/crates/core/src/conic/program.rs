use sprs::{CsMat, TriMat};

use super::sets::ConstraintSets;

/// `minimize 1/2 x^T P x + q^T x + offset  subject to  A x in C`.
///
/// `P` is stored as a full symmetric CSC matrix.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub p: CsMat<f64>,
    pub q: Vec<f64>,
    pub a: CsMat<f64>,
    pub sets: ConstraintSets,
    pub offset: f64,
}

impl ConicProgram {
    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_rows(&self) -> usize {
        self.sets.rows()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let px = csc_mul(&self.p, x);
        0.5 * dot(x, &px) + dot(&self.q, x) + self.offset
    }
}

/// Assembles sparse matrices from `(row, col, value)` triplets; duplicates are summed.
#[derive(Debug, Clone)]
pub struct Triplets {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(rows: usize, cols: usize) -> Self {
        Triplets { rows, cols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.entries.push((row, col, value));
    }

    /// Adds `value` at `(i, j)` and `(j, i)` (once on the diagonal).
    pub fn push_sym(&mut self, i: usize, j: usize, value: f64) {
        self.push(i, j, value);
        if i != j {
            self.push(j, i, value);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_csc(&self) -> CsMat<f64> {
        let mut tri = TriMat::with_capacity((self.rows, self.cols), self.entries.len());
        for &(r, c, v) in &self.entries {
            tri.add_triplet(r, c, v);
        }
        tri.to_csc()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `A x` for a CSC matrix.
pub fn csc_mul(a: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.rows()];
    csc_mul_into(a, x, &mut out);
    out
}

pub fn csc_mul_into(a: &CsMat<f64>, x: &[f64], out: &mut [f64]) {
    debug_assert!(a.is_csc());
    out.iter_mut().for_each(|v| *v = 0.0);
    let indptr = a.indptr();
    let indptr = indptr.raw_storage();
    let indices = a.indices();
    let data = a.data();
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        for k in indptr[j]..indptr[j + 1] {
            out[indices[k]] += data[k] * xj;
        }
    }
}

/// `A^T y` for a CSC matrix.
pub fn csc_tmul(a: &CsMat<f64>, y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.cols()];
    csc_tmul_into(a, y, &mut out);
    out
}

pub fn csc_tmul_into(a: &CsMat<f64>, y: &[f64], out: &mut [f64]) {
    debug_assert!(a.is_csc());
    let indptr = a.indptr();
    let indptr = indptr.raw_storage();
    let indices = a.indices();
    let data = a.data();
    for (j, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for k in indptr[j]..indptr[j + 1] {
            s += data[k] * y[indices[k]];
        }
        *o = s;
    }
}
