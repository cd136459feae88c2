//! Periodic unit-cell problems, the effective tensor and the first-order
//! corrector.
//!
//! For each unit vector `e_j` the corrector `Φ_j` solves
//! `∫_{Y*} 𝔻(∇Φ_j + e_j)·∇ψ = 0` over Y-periodic Q1 functions on `Y*`, and
//! `d_eff,ij = ∫_{Y*} 𝔻(∇Φ_j + e_j)·(∇Φ_i + e_i)`. The integral is over
//! `Y*`, not an average, so perforation lowers `d_eff` below `|Y*| 𝔻` for
//! constant `𝔻`.

use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_mass, assemble_stiffness};
use crate::fem::{q1, solve_spd_singular, CoefficientField, SolverOptions};
use crate::fields::TwoScaleField;
use crate::geometry::{CellGeometry, MacroGrid};
use crate::presets::SourcePreset;

#[derive(Clone, Debug)]
pub struct EffectiveTensor {
    /// `[[d11, d12], [d21, d22]]`, symmetrized.
    pub d_eff: [[f64; 2]; 2],
    /// Mean-zero correctors on the periodic mesh of `Y*`.
    pub corrector_periodic: [Vec<f64>; 2],
    /// The same correctors lifted to the non-periodic micro mesh.
    pub corrector: [Vec<f64>; 2],
    /// Relative residuals of the two cell solves.
    pub residuals: [f64; 2],
    pub iterations: [usize; 2],
    /// `|d12 − d21|` before symmetrization.
    pub asymmetry: f64,
    /// `∫_{Y*} 𝔻 dy` as `[a11, a12, a22]`.
    pub voigt: [f64; 3],
}

impl EffectiveTensor {
    pub fn solve(cell: &CellGeometry, d: &CoefficientField, opts: SolverOptions) -> Result<Self> {
        let mesh = &cell.periodic;
        let k = assemble_stiffness(mesh, d, 1.0)?;
        let mass = assemble_mass(mesh);
        let n = mesh.n_nodes();
        // b_j[a] = ∫ (𝔻 e_j)·∇ψ_a
        let mut b = [vec![0.0; n], vec![0.0; n]];
        for e in &mesh.elements {
            let c = d.at(e.micro_cell);
            let de = [[c[0], c[1]], [c[1], c[2]]];
            for q in 0..4 {
                let w = q1::GAUSS[q].1 * mesh.h;
                let g = q1::GRAD_AT_GAUSS[q];
                for a in 0..4 {
                    for j in 0..2 {
                        b[j][e.nodes[a]] += w * (de[j][0] * g[a][0] + de[j][1] * g[a][1]);
                    }
                }
            }
        }
        let cell_opts = SolverOptions {
            tol: opts.tol.min(1e-12),
            ..opts
        };
        let ones = vec![1.0; n];
        let mut phi: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut residuals = [0.0; 2];
        let mut iterations = [0; 2];
        for j in 0..2 {
            let rhs: Vec<f64> = b[j].iter().map(|v| -v).collect();
            let (mut x, stats) = solve_spd_singular(&k, &rhs, cell_opts)?;
            let mean = mass.bilinear(&ones, &x) / cell.volume;
            x.iter_mut().for_each(|v| *v -= mean);
            phi[j] = x;
            residuals[j] = stats.relative_residual;
            iterations[j] = stats.iterations;
        }
        let voigt = d.integral(&cell.active);
        let vm = [[voigt[0], voigt[1]], [voigt[1], voigt[2]]];
        let mut raw = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                raw[i][j] = k.bilinear(&phi[i], &phi[j]) + dot(&b[j], &phi[i]) + dot(&b[i], &phi[j]) + vm[i][j];
            }
        }
        let asymmetry = (raw[0][1] - raw[1][0]).abs();
        let scale = raw[0][0].abs().max(raw[1][1].abs()).max(1.0);
        if asymmetry > 1e-10 * scale {
            return Err(Error::Assembly(format!(
                "effective tensor is not symmetric: |d12 - d21| = {asymmetry:e}"
            )));
        }
        let off = 0.5 * (raw[0][1] + raw[1][0]);
        let d_eff = [[raw[0][0], off], [off, raw[1][1]]];
        let corrector = [cell.lift_periodic(&phi[0]), cell.lift_periodic(&phi[1])];
        Ok(Self {
            d_eff,
            corrector_periodic: phi,
            corrector,
            residuals,
            iterations,
            asymmetry,
            voigt,
        })
    }

    pub fn as_coefficient(&self) -> [f64; 3] {
        [self.d_eff[0][0], self.d_eff[0][1], self.d_eff[1][1]]
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        crate::fem::assembly::eigenvalues(self.as_coefficient())
    }

    /// `ξ·d_eff ξ`
    pub fn form(&self, x: [f64; 2]) -> f64 {
        let d = &self.d_eff;
        x[0] * (d[0][0] * x[0] + d[0][1] * x[1]) + x[1] * (d[1][0] * x[0] + d[1][1] * x[1])
    }

    /// Corrector slice `Σ_j c_j Φ_j` on the non-periodic micro mesh.
    pub fn combine(&self, c: [f64; 2]) -> Vec<f64> {
        self.corrector[0]
            .iter()
            .zip(&self.corrector[1])
            .map(|(a, b)| c[0] * a + c[1] * b)
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nodal gradient of a macro Q1 field: centred differences inside,
/// second-order one-sided differences on the boundary of `Ω`.
pub fn recover_gradient(grid: &MacroGrid, u: &[f64]) -> Vec<[f64; 2]> {
    let nx = grid.cells[0] + 1;
    let ny = grid.cells[1] + 1;
    assert_eq!(u.len(), nx * ny, "field does not match macro grid");
    let h = grid.h;
    let at = |i: usize, j: usize| u[j * nx + i];
    let diff = |f: &dyn Fn(usize) -> f64, i: usize, n: usize| -> f64 {
        if n < 3 {
            return (f(1) - f(0)) / h;
        }
        if i == 0 {
            (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h)
        } else if i + 1 == n {
            (3.0 * f(n - 1) - 4.0 * f(n - 2) + f(n - 3)) / (2.0 * h)
        } else {
            (f(i + 1) - f(i - 1)) / (2.0 * h)
        }
    };
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let gx = diff(&|ii| at(ii, j), i, nx);
            let gy = diff(&|jj| at(i, jj), j, ny);
            out.push([gx, gy]);
        }
    }
    out
}

/// Bilinear interpolation of nodal macro data at `x`.
pub fn interpolate_nodal<const N: usize>(grid: &MacroGrid, data: &[[f64; N]], x: [f64; 2]) -> [f64; N] {
    let nx = grid.cells[0] + 1;
    let loc = |v: f64, cells: usize| {
        let s = (v / grid.h).clamp(0.0, cells as f64);
        let i = (s.floor() as usize).min(cells - 1);
        (i, s - i as f64)
    };
    let (i, a) = loc(x[0], grid.cells[0]);
    let (j, b) = loc(x[1], grid.cells[1]);
    let w = [(1.0 - a) * (1.0 - b), a * (1.0 - b), a * b, (1.0 - a) * b];
    let idx = [j * nx + i, j * nx + i + 1, (j + 1) * nx + i + 1, (j + 1) * nx + i];
    let mut out = [0.0; N];
    for (wk, &k) in w.iter().zip(&idx) {
        for c in 0..N {
            out[c] += wk * data[k][c];
        }
    }
    out
}

/// `U(x, y) = Σ_j ∂_j u(x) Φ_j(y)` at macro cell centres, with `∇u`
/// recovered at macro nodes and interpolated.
pub fn evaluate_corrector(grid: &MacroGrid, cell: &CellGeometry, u: &[f64], tensor: &EffectiveTensor) -> TwoScaleField {
    let g = recover_gradient(grid, u);
    let mut out = TwoScaleField::zeros(grid.cells, grid.h, cell.n_micro());
    for c in 0..grid.n_cells() {
        let coef = interpolate_nodal(grid, &g, grid.cell_center(c));
        out.slice_mut(c).copy_from_slice(&tensor.combine(coef));
    }
    out
}

/// `v₀(t, x) = (1/|∂T|) ∫_{∂T} 𝕍(t, x, y) dσ(y)` with two-point Gauss on
/// every hole facet. Zero when the cell has no hole.
pub fn boundary_average(cell: &CellGeometry, source: SourcePreset, t: f64, x: [f64; 2]) -> f64 {
    if cell.hole_facets.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for f in &cell.hole_facets {
        for (y, w, _) in crate::fem::assembly::facet_gauss(f) {
            s += w * source.eval(t, x, y);
        }
    }
    s / cell.perimeter
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HoleSpec;
    use crate::presets::TensorPreset;

    #[test]
    fn no_hole_constant_coefficient_is_reproduced() {
        let cell = CellGeometry::new(2, HoleSpec::none(), 8).unwrap();
        let t = EffectiveTensor::solve(&cell, &TensorPreset::Diag23.field(8), SolverOptions::default()).unwrap();
        assert!((t.d_eff[0][0] - 2.0).abs() < 1e-10);
        assert!((t.d_eff[1][1] - 3.0).abs() < 1e-10);
        assert!(t.d_eff[0][1].abs() < 1e-10);
        assert!(t.corrector[0].iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn perforation_lowers_the_tensor() {
        let cell = CellGeometry::new(2, HoleSpec::cube(1.0 / 3.0, 2.0 / 3.0), 12).unwrap();
        let t = EffectiveTensor::solve(&cell, &CoefficientField::identity(), SolverOptions::default()).unwrap();
        let (lo, hi) = t.eigenvalues();
        assert!(lo > 0.0 && hi < 8.0 / 9.0);
        assert!((t.d_eff[0][0] - t.d_eff[1][1]).abs() < 1e-10);
    }

    #[test]
    fn recovered_gradient_is_exact_for_quadratics() {
        let g = MacroGrid::new(8, [1, 1]).unwrap();
        let u = g.mesh().interpolate(|p| p[0] * p[0] + 3.0 * p[1]);
        let grad = recover_gradient(&g, &u);
        for (k, p) in g.mesh().coords.iter().enumerate() {
            assert!((grad[k][0] - 2.0 * p[0]).abs() < 1e-12);
            assert!((grad[k][1] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_source_average() {
        let cell = CellGeometry::new(2, HoleSpec::cube(1.0 / 3.0, 2.0 / 3.0), 6).unwrap();
        let v = boundary_average(&cell, SourcePreset::Default, 0.25, [0.5, 0.0]);
        assert!((v - 1.5).abs() < 1e-14);
    }
}
