//! Bilinear reference element on the unit square.
//!
//! Local node order is counter-clockwise from the lower-left corner:
//! `(0,0), (1,0), (1,1), (0,1)`. All element integrals in the crate are
//! evaluated with the 2x2 Gauss rule below, which is exact for the
//! biquadratic integrands produced by products of Q1 functions and their
//! derivatives.

use std::sync::LazyLock;

pub const NODES: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

/// Gauss points and weights on the unit square (weights sum to one).
pub static GAUSS: LazyLock<[([f64; 2], f64); 4]> = LazyLock::new(|| {
    let a = 0.5 - 0.5 / 3f64.sqrt();
    let b = 0.5 + 0.5 / 3f64.sqrt();
    [([a, a], 0.25), ([b, a], 0.25), ([b, b], 0.25), ([a, b], 0.25)]
});

pub fn shape(p: [f64; 2]) -> [f64; 4] {
    let [x, y] = p;
    [(1.0 - x) * (1.0 - y), x * (1.0 - y), x * y, (1.0 - x) * y]
}

/// Reference gradients (per unit reference length).
pub fn grad_shape(p: [f64; 2]) -> [[f64; 2]; 4] {
    let [x, y] = p;
    [[-(1.0 - y), -(1.0 - x)], [1.0 - y, -x], [y, x], [-y, 1.0 - x]]
}

/// Shape values at the four Gauss points.
pub static SHAPE_AT_GAUSS: LazyLock<[[f64; 4]; 4]> = LazyLock::new(|| std::array::from_fn(|q| shape(GAUSS[q].0)));

/// Reference gradients at the four Gauss points.
pub static GRAD_AT_GAUSS: LazyLock<[[[f64; 2]; 4]; 4]> =
    LazyLock::new(|| std::array::from_fn(|q| grad_shape(GAUSS[q].0)));

/// Element integrals on the unit square: mass and the three derivative blocks.
pub struct RefMatrices {
    pub mass: [[f64; 4]; 4],
    pub kxx: [[f64; 4]; 4],
    pub kyy: [[f64; 4]; 4],
    /// `∫ ∂x N_a ∂y N_b`
    pub kxy: [[f64; 4]; 4],
}

pub static REF: LazyLock<RefMatrices> = LazyLock::new(|| {
    let mut r = RefMatrices {
        mass: [[0.0; 4]; 4],
        kxx: [[0.0; 4]; 4],
        kyy: [[0.0; 4]; 4],
        kxy: [[0.0; 4]; 4],
    };
    for q in 0..4 {
        let w = GAUSS[q].1;
        let n = SHAPE_AT_GAUSS[q];
        let g = GRAD_AT_GAUSS[q];
        for a in 0..4 {
            for b in 0..4 {
                r.mass[a][b] += w * n[a] * n[b];
                r.kxx[a][b] += w * g[a][0] * g[b][0];
                r.kyy[a][b] += w * g[a][1] * g[b][1];
                r.kxy[a][b] += w * g[a][0] * g[b][1];
            }
        }
    }
    r
});

/// Stiffness block for a constant symmetric coefficient `[a11, a12, a22]`.
/// In two dimensions the Q1 stiffness does not depend on the element size.
pub fn stiffness(c: [f64; 3]) -> [[f64; 4]; 4] {
    let r = &*REF;
    let mut k = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            k[a][b] = c[0] * r.kxx[a][b] + c[2] * r.kyy[a][b] + c[1] * (r.kxy[a][b] + r.kxy[b][a]);
        }
    }
    k
}

/// Gradient of the bilinear interpolant of `vals` at reference point index `q`,
/// scaled to an element of side `h`.
#[inline]
pub fn grad_at_gauss(vals: [f64; 4], q: usize, h: f64) -> [f64; 2] {
    let g = &GRAD_AT_GAUSS[q];
    let mut out = [0.0; 2];
    for a in 0..4 {
        out[0] += g[a][0] * vals[a];
        out[1] += g[a][1] * vals[a];
    }
    [out[0] / h, out[1] / h]
}

#[inline]
pub fn value_at_gauss(vals: [f64; 4], q: usize) -> f64 {
    let n = &SHAPE_AT_GAUSS[q];
    n[0] * vals[0] + n[1] * vals[1] + n[2] * vals[2] + n[3] * vals[3]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_mass_is_closed_form() {
        // ∫ N_a N_b on the unit square: 1/9 on the diagonal, 1/18 for edge
        // neighbours, 1/36 across the diagonal.
        let m = &REF.mass;
        for a in 0..4 {
            assert!((m[a][a] - 1.0 / 9.0).abs() < 1e-15);
            assert!((m[a][(a + 1) % 4] - 1.0 / 18.0).abs() < 1e-15);
            assert!((m[a][(a + 2) % 4] - 1.0 / 36.0).abs() < 1e-15);
        }
    }

    #[test]
    fn stiffness_rows_vanish() {
        let k = stiffness([2.0, 0.3, 1.0]);
        for row in k {
            assert!(row.iter().sum::<f64>().abs() < 1e-14);
        }
    }
}
