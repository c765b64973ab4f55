//! Constraint sets of `A x in C`: per-row intervals and 3-row rotated cones.

use std::f64::consts::FRAC_1_SQRT_2;

/// Standard rotated cone `{(u, w, v) : 2 u v >= w^2, u >= 0, v >= 0}`.
///
/// Projects through the orthogonal map `a = (u + v)/sqrt2, b = (u - v)/sqrt2`
/// onto the Lorentz cone `||(b, w)|| <= a`.
pub fn project_rotated(z: [f64; 3]) -> [f64; 3] {
    let [u, w, v] = z;
    let a = FRAC_1_SQRT_2 * (u + v);
    let b = FRAC_1_SQRT_2 * (u - v);
    let norm = b.hypot(w);
    let (a, b, w) = if norm <= a {
        return z;
    } else if norm <= -a {
        (0.0, 0.0, 0.0)
    } else {
        let alpha = 0.5 * (a + norm);
        let s = alpha / norm;
        (alpha, s * b, s * w)
    };
    [FRAC_1_SQRT_2 * (a + b), w, FRAC_1_SQRT_2 * (a - b)]
}

/// Euclidean distance from `z` to the rotated cone.
pub fn rotated_distance(z: [f64; 3]) -> f64 {
    let p = project_rotated(z);
    ((z[0] - p[0]).powi(2) + (z[1] - p[1]).powi(2) + (z[2] - p[2]).powi(2)).sqrt()
}

/// Row blocks of the constraint vector `z = A x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSets {
    /// Interval rows `lower[i] <= z[i] <= upper[i]`; equal bounds make an equality.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Rows `interval_rows + 3k .. +3` belong to rotated cone `k`.
    pub cones: usize,
}

impl ConstraintSets {
    pub fn interval_rows(&self) -> usize {
        self.lower.len()
    }

    pub fn rows(&self) -> usize {
        self.lower.len() + 3 * self.cones
    }

    pub fn is_equality(&self, row: usize) -> bool {
        row < self.lower.len() && self.lower[row] == self.upper[row]
    }

    pub fn cone_start(&self, k: usize) -> usize {
        self.lower.len() + 3 * k
    }

    /// In-place Euclidean projection onto the product set.
    pub fn project(&self, z: &mut [f64]) {
        let m = self.lower.len();
        for i in 0..m {
            z[i] = z[i].max(self.lower[i]).min(self.upper[i]);
        }
        for k in 0..self.cones {
            let s = m + 3 * k;
            let p = project_rotated([z[s], z[s + 1], z[s + 2]]);
            z[s..s + 3].copy_from_slice(&p);
        }
    }

    /// Projection of a scaled vector: row `i` of the sets is multiplied by `scale[i]`.
    pub fn project_scaled(&self, z: &mut [f64], scale: &[f64]) {
        let m = self.lower.len();
        for i in 0..m {
            let lo = self.lower[i] * scale[i];
            let hi = self.upper[i] * scale[i];
            z[i] = z[i].max(lo).min(hi);
        }
        // cones are invariant under the uniform per-cone scaling
        for k in 0..self.cones {
            let s = m + 3 * k;
            let p = project_rotated([z[s], z[s + 1], z[s + 2]]);
            z[s..s + 3].copy_from_slice(&p);
        }
    }

    /// Support function `sup_{z in C} y^T z`, infinite when `y` is not in the
    /// polar of the recession cone (within `tol`).
    pub fn support(&self, y: &[f64], tol: f64) -> f64 {
        let m = self.lower.len();
        let mut total = 0.0;
        for i in 0..m {
            let yi = y[i];
            if yi > tol {
                if self.upper[i].is_infinite() {
                    return f64::INFINITY;
                }
                total += self.upper[i] * yi;
            } else if yi < -tol {
                if self.lower[i].is_infinite() {
                    return f64::INFINITY;
                }
                total += self.lower[i] * yi;
            }
        }
        for k in 0..self.cones {
            let s = m + 3 * k;
            // polar of a self-dual cone is its negative
            if rotated_distance([-y[s], -y[s + 1], -y[s + 2]]) > tol {
                return f64::INFINITY;
            }
        }
        total
    }
}
