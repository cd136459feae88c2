//! Discrete two-scale operators on aligned grids.
//!
//! Because every ε-cell of `Ω_ε` carries a copy of the micro mesh of `Y*`,
//! the periodic unfolding `T_ε` is an index remap, and integrals over
//! `Ω x Y*` reduce to `Σ_ξ ε² vᵀ M_Y v` with the micro mass matrix. The
//! folding `F_ε U` is in general discontinuous across ε-cell faces, so it is
//! kept cell by cell in a [`TwoScaleField`] at ε resolution; unfolding that
//! representation is the identity.

use crate::error::Result;
use crate::fem::assembly::{assemble_mass, assemble_stiffness};
use crate::fem::{solve_spd, CoefficientField, CsrMatrix, SolveStats, SolverOptions};
use crate::fields::{BoundaryField, TwoScaleField};
use crate::geometry::PerforatedGrid;
use crate::mollifier::{LatticeConvolver, Mollifier};

/// `(T_ε u)(ξ, y) = u(εξ + εy)`.
pub fn unfold(grid: &PerforatedGrid, u: &[f64]) -> TwoScaleField {
    assert_eq!(u.len(), grid.n_nodes(), "field does not match grid");
    TwoScaleField {
        cells: grid.cells,
        h: grid.eps(),
        n_micro: grid.cell.n_micro(),
        values: grid.unfold.iter().map(|&g| u[g]).collect(),
        time: 0.0,
    }
}

/// Boundary unfolding of a nodal trace on `∂T_ε`. `u` is indexed by grid
/// node; only pore nodes are read.
pub fn unfold_boundary(grid: &PerforatedGrid, u: &[f64]) -> BoundaryField {
    let cell = &grid.cell;
    let nm = cell.n_micro();
    let mut values = Vec::with_capacity(grid.n_cells() * cell.hole_nodes.len());
    for xi in 0..grid.n_cells() {
        for &k in &cell.hole_nodes {
            values.push(u[grid.unfold[xi * nm + k]]);
        }
    }
    BoundaryField {
        cells: grid.cells,
        h: grid.eps(),
        n_nodes: cell.hole_nodes.len(),
        values,
    }
}

/// `ε ∫_{∂T_ε} u dσ` for a nodal trace.
pub fn pore_integral(grid: &PerforatedGrid, u: &[f64]) -> f64 {
    grid.eps()
        * grid
            .pore_facets
            .iter()
            .map(|f| 0.5 * f.length * (u[f.nodes[0]] + u[f.nodes[1]]))
            .sum::<f64>()
}

/// `‖u‖_{L²(∂T_ε)}` for a nodal trace.
pub fn pore_l2(grid: &PerforatedGrid, u: &[f64]) -> f64 {
    grid.pore_facets
        .iter()
        .map(|f| {
            let (a, b) = (u[f.nodes[0]], u[f.nodes[1]]);
            f.length * (a * a + a * b + b * b) / 3.0
        })
        .sum::<f64>()
        .sqrt()
}

/// Exact folding of a two-scale field that is piecewise constant in `x` on a
/// macro grid refining the ε-cells: each ε-cell receives the average of its
/// sub-cells weighted by their overlap with the perforated part `ε(ξ + Y*)`.
pub fn fold(grid: &PerforatedGrid, u: &TwoScaleField) -> TwoScaleField {
    let k = u.cells[0] / grid.cells[0];
    assert!(
        k >= 1 && u.cells == [grid.cells[0] * k, grid.cells[1] * k],
        "two-scale field must refine the ε-cells"
    );
    let cell = &grid.cell;
    let m = cell.m as f64;
    let kf = k as f64;
    // Overlap fractions of sub-cell (a, b) with Y*, in unit-cell coordinates.
    let mut frac = vec![1.0 / (kf * kf); k * k];
    if let Some(hole) = cell.hole {
        let overlap = |a: usize, axis: usize| {
            let lo = (hole.lo[axis] as f64 / m).max(a as f64 / kf);
            let hi = (hole.hi[axis] as f64 / m).min((a + 1) as f64 / kf);
            (hi - lo).max(0.0)
        };
        for b in 0..k {
            for a in 0..k {
                frac[b * k + a] -= overlap(a, 0) * overlap(b, 1);
            }
        }
    }
    let total: f64 = frac.iter().sum();
    let mut out = TwoScaleField::zeros(grid.cells, grid.eps(), u.n_micro);
    out.time = u.time;
    for xi in 0..grid.n_cells() {
        let (x0, x1) = (xi % grid.cells[0], xi / grid.cells[0]);
        let mut acc = vec![0.0; u.n_micro];
        for b in 0..k {
            for a in 0..k {
                let w = frac[b * k + a] / total;
                if w == 0.0 {
                    continue;
                }
                let sub = (x1 * k + b) * u.cells[0] + x0 * k + a;
                for (s, v) in acc.iter_mut().zip(u.slice(sub)) {
                    *s += w * v;
                }
            }
        }
        out.slice_mut(xi).copy_from_slice(&acc);
    }
    out
}

const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_8),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_8),
];

/// Tensor Gauss–Legendre rule (4x4) on `[a, b]`: points and weights.
pub(crate) fn rect_rule(a: [f64; 2], b: [f64; 2]) -> impl Iterator<Item = ([f64; 2], f64)> {
    let c = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let r = [0.5 * (b[0] - a[0]), 0.5 * (b[1] - a[1])];
    GL4.iter().flat_map(move |&(s, ws)| {
        GL4.iter()
            .map(move |&(t, wt)| ([c[0] + r[0] * s, c[1] + r[1] * t], ws * wt * r[0] * r[1]))
    })
}

/// Folding of a two-scale function `f(x, k)` (`k` a micro node of `Y*`):
/// `(F_ε U)(ξ, y_k)` is the mean of `x ↦ f(x, k)` over `ε(ξ + Y*)`,
/// integrated as cell minus hole with a 4x4 Gauss rule on each.
pub fn fold_fn(grid: &PerforatedGrid, f: impl Fn([f64; 2], usize) -> f64 + Sync) -> TwoScaleField {
    let cell = &grid.cell;
    let eps = grid.eps();
    let nm = cell.n_micro();
    let area = eps * eps * cell.volume;
    let mut out = TwoScaleField::zeros(grid.cells, eps, nm);
    for xi in 0..grid.n_cells() {
        let o = grid.cell_origin(xi);
        let mut pts: Vec<([f64; 2], f64)> = rect_rule(o, [o[0] + eps, o[1] + eps]).collect();
        if let Some(hole) = cell.hole {
            let m = cell.m as f64;
            let lo = [o[0] + eps * hole.lo[0] as f64 / m, o[1] + eps * hole.lo[1] as f64 / m];
            let hi = [o[0] + eps * hole.hi[0] as f64 / m, o[1] + eps * hole.hi[1] as f64 / m];
            pts.extend(rect_rule(lo, hi).map(|(p, w)| (p, -w)));
        }
        let slice = out.slice_mut(xi);
        for (k, v) in slice.iter_mut().enumerate() {
            *v = pts.iter().map(|&(p, w)| w * f(p, k)).sum::<f64>() / area;
        }
    }
    out
}

/// Mass and identity-stiffness matrices of `Ω_ε`.
#[derive(Clone, Debug)]
pub struct GridMatrices {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
}

impl GridMatrices {
    pub fn new(grid: &PerforatedGrid) -> Result<Self> {
        Ok(Self {
            mass: assemble_mass(&grid.mesh),
            stiffness: assemble_stiffness(&grid.mesh, &CoefficientField::identity(), 1.0)?,
        })
    }
}

/// Gradient folding `G_ε`: solves `(M + ε²K) û = Σ_ξ ε² (M_Y + K_Y) F_ε U|_ξ`
/// (scattered through the unfolding map), the Galerkin form of
/// `∫ (û − F U) φ + (ε∇û − F(∇_y U))·ε∇φ = 0`. `folded` is `F_ε U` at ε resolution.
pub fn gradient_fold(
    grid: &PerforatedGrid,
    mats: &GridMatrices,
    folded: &TwoScaleField,
    opts: SolverOptions,
) -> Result<(Vec<f64>, SolveStats)> {
    let eps = grid.eps();
    let cell = &grid.cell;
    let nm = cell.n_micro();
    let a = mats.mass.add_scaled(eps * eps, &mats.stiffness);
    let mut rhs = vec![0.0; grid.n_nodes()];
    for xi in 0..grid.n_cells() {
        let v = folded.slice(xi);
        let mv = cell.mass.mul_vec(v);
        let kv = cell.stiffness.mul_vec(v);
        for k in 0..nm {
            rhs[grid.unfold[xi * nm + k]] += eps * eps * (mv[k] + kv[k]);
        }
    }
    solve_spd(&a, &rhs, None, opts)
}

/// `‖φ‖_ε = ‖φ‖_{L²(Ω_ε)} + ε ‖∇φ‖_{L²(Ω_ε)}`.
pub fn eps_norm(grid: &PerforatedGrid, mats: &GridMatrices, phi: &[f64]) -> f64 {
    mats.mass.quadratic_form(phi).max(0.0).sqrt() + grid.eps() * mats.stiffness.quadratic_form(phi).max(0.0).sqrt()
}

/// Mollified gradient on a node lattice with zero extension outside the
/// active set. Each lattice node carries a quadrature weight in `[0, 1]`
/// (its share of active area over `h²`).
#[derive(Debug)]
pub struct MollifiedGradient {
    pub n: [usize; 2],
    pub h: f64,
    pub weights: Vec<f64>,
    conv: LatticeConvolver,
    /// `‖∇J_δ‖_{L²}` of the discrete kernel.
    pub c_delta: f64,
}

impl MollifiedGradient {
    /// On the lattice of `Ω_ε`, weights from the active cells (lumped mass / h²).
    pub fn for_grid(grid: &PerforatedGrid, moll: &Mollifier) -> Self {
        let n = [grid.lattice[0] + 1, grid.lattice[1] + 1];
        let mut weights = vec![0.0; n[0] * n[1]];
        for e in &grid.mesh.elements {
            let [i, j] = e.cell;
            for (di, dj) in [(0, 0), (1, 0), (1, 1), (0, 1)] {
                weights[(j + dj) * n[0] + i + di] += 0.25;
            }
        }
        Self::with_weights(n, grid.mesh.h, weights, moll)
    }

    /// On a full lattice of `Ω` with `per_unit` intervals per unit length and
    /// trapezoid weights.
    pub fn for_domain(lengths: [usize; 2], per_unit: usize, moll: &Mollifier) -> Self {
        let n = [lengths[0] * per_unit + 1, lengths[1] * per_unit + 1];
        let edge = |i: usize, n: usize| if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
        let weights = (0..n[0] * n[1])
            .map(|k| edge(k % n[0], n[0]) * edge(k / n[0], n[1]))
            .collect();
        Self::with_weights(n, 1.0 / per_unit as f64, weights, moll)
    }

    fn with_weights(n: [usize; 2], h: f64, weights: Vec<f64>, moll: &Mollifier) -> Self {
        let kernel = moll.kernel(h);
        let conv = LatticeConvolver::new(&kernel, n);
        Self {
            n,
            h,
            weights,
            conv,
            c_delta: kernel.grad_l2,
        }
    }

    /// `∇^δ` at every lattice node from values at every lattice node.
    pub fn apply_lattice(&self, values: &[f64]) -> Vec<[f64; 2]> {
        let f: Vec<f64> = values.iter().zip(&self.weights).map(|(v, w)| v * w).collect();
        self.conv.gradient(&f)
    }

    /// `∇^δ u` at the active nodes of `grid` (the lattice must be the grid's).
    pub fn apply_grid(&self, grid: &PerforatedGrid, u: &[f64]) -> Vec<[f64; 2]> {
        let mut lat = vec![0.0; self.n[0] * self.n[1]];
        for (k, &[i, j]) in grid.node_lattice.iter().enumerate() {
            lat[j * self.n[0] + i] = u[k];
        }
        let g = self.apply_lattice(&lat);
        grid.node_lattice.iter().map(|&[i, j]| g[j * self.n[0] + i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CellGeometry, Epsilon, HoleSpec};
    use std::sync::Arc;

    fn grid(n: usize, hole: bool) -> PerforatedGrid {
        let spec = if hole {
            HoleSpec::cube(1.0 / 3.0, 2.0 / 3.0)
        } else {
            HoleSpec::none()
        };
        let m = if hole { 12 } else { 4 };
        let cell = Arc::new(CellGeometry::new(2, spec, m).unwrap());
        PerforatedGrid::new(cell, Epsilon::inverse(n).unwrap(), [1, 1]).unwrap()
    }

    #[test]
    fn unfold_reads_cell_copy() {
        let g = grid(2, false);
        let u = g.mesh.interpolate(|p| p[0]);
        let t = unfold(&g, &u);
        // x = (0.6, 0.3) lies in cell ξ = (1, 0); y = (0.25, 0.5).
        let k = g.cell.lattice_to_node[2 * 5 + 1].unwrap();
        assert!((t.slice(1)[k] - 0.625).abs() < 1e-15);
    }

    #[test]
    fn fold_of_macro_linear_function() {
        let g = grid(2, false);
        let f = fold_fn(&g, |x, _| x[0]);
        assert!(f.slice(1).iter().all(|v| (v - 0.75).abs() < 1e-14));
    }

    #[test]
    fn boundary_integral_of_one() {
        let g = grid(4, true);
        let ones = vec![1.0; g.n_nodes()];
        assert!((pore_integral(&g, &ones) - 4.0 / 3.0).abs() < 1e-12);
        let b = unfold_boundary(&g, &ones);
        assert!((b.integral(&g.cell) - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn eps_norm_of_constant() {
        let g = grid(4, true);
        let mats = GridMatrices::new(&g).unwrap();
        let ones = vec![1.0; g.n_nodes()];
        // the gradient part is the square root of a roundoff-level form
        assert!((eps_norm(&g, &mats, &ones) - (8.0f64 / 9.0).sqrt()).abs() < 1e-7);
    }

    #[test]
    fn gradient_fold_of_constant() {
        let g = grid(4, true);
        let mats = GridMatrices::new(&g).unwrap();
        let folded = fold_fn(&g, |_, _| 2.5);
        let (u, _) = gradient_fold(&g, &mats, &folded, SolverOptions::default()).unwrap();
        assert!(u.iter().all(|v| (v - 2.5).abs() < 1e-8));
    }
}
