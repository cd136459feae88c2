//! Time integration of the two-scale limit system.
//!
//! ```text
//! u̇ = s_d div(d_eff ∇u) + R(u) + σ (|∂T|/|Y*|)(a u + b v₀)      in Ω
//! Θ̇ = div_y(𝕂∇_y Θ) + μ ∇_y Θ · ∇^δ(|Y*| u)                  in Ω x Y*
//! −𝕂∇_y Θ·ν = g Θ on ∂T,  Θ periodic on ∂Y
//! ```
//!
//! `σ` is the exchange sign and `s_d` the diffusion scaling, both
//! configurable. `u` lives on a macro Q1 grid; `Θ` is one periodic micro
//! field per macro cell, evaluated with the drift at the cell centre.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{boundary_average, evaluate_corrector, EffectiveTensor};
use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_mass, assemble_robin_boundary, assemble_stiffness};
use crate::fem::{q1, solve_spd, CoefficientField, CsrBuilder, CsrMatrix, QuadMesh, SolverOptions};
use crate::fields::TwoScaleField;
use crate::geometry::{CellGeometry, MacroGrid};
use crate::micro::{Coupling, TimeGrid};
use crate::mollifier::{interpolate_lattice, Mollifier};
use crate::operators::MollifiedGradient;
use crate::presets::{InitialPreset, ReactionPreset, SourcePreset};

/// Factor in front of `div(d_eff ∇u)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionScaling {
    /// `1 / |Y*|`: the `u`-equation divided by the pore volume fraction.
    #[default]
    VolumeFraction,
    /// `1`
    AsPrinted,
}

impl DiffusionScaling {
    pub fn factor(self, volume: f64) -> f64 {
        match self {
            DiffusionScaling::VolumeFraction => 1.0 / volume,
            DiffusionScaling::AsPrinted => 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LimitProblem {
    pub grid: MacroGrid,
    pub cell: Arc<CellGeometry>,
    pub tensor: Arc<EffectiveTensor>,
    pub conductivity: CoefficientField,
    pub coupling: Coupling,
    pub reaction: ReactionPreset,
    pub source: SourcePreset,
    pub mollifier: Mollifier,
    pub initial: InitialPreset,
    pub time: TimeGrid,
    pub solver: SolverOptions,
    /// `+1` or `−1` in front of the boundary exchange.
    pub exchange_sign: f64,
    pub diffusion_scaling: DiffusionScaling,
    pub tol_pos: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitDiagnostics {
    pub step: usize,
    pub t: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub u_mass: f64,
    /// `∫uⁿ⁺¹ − ∫uⁿ − Δt(∫R(uⁿ) + σ ratio ∫(a uⁿ + b v₀))`.
    pub mass_balance_defect: f64,
    pub u_iterations: usize,
    /// Largest iteration count over the cell solves.
    pub theta_iterations: usize,
    pub u_residual: f64,
    pub theta_residual: f64,
}

#[derive(Clone, Debug)]
pub struct LimitSnapshot {
    pub time: f64,
    pub u: Vec<f64>,
    /// `Θ` on the non-periodic micro mesh, one slice per macro cell.
    pub theta: TwoScaleField,
    /// `U(x, y) = Σ_j ∂_j u(x) Φ_j(y)` at macro cell centres.
    pub corrector: TwoScaleField,
}

#[derive(Clone, Debug)]
pub struct LimitTrajectory {
    pub snapshots: Vec<LimitSnapshot>,
    pub diagnostics: Vec<LimitDiagnostics>,
    pub time: TimeGrid,
    pub exchange_sign: f64,
}

impl LimitTrajectory {
    pub fn min_value(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.u_min.min(d.theta_min))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `C_i[a][b] = ∫ ∂_i φ_b φ_a` on a mesh.
pub fn convection_matrices(mesh: &QuadMesh) -> [CsrMatrix; 2] {
    let h = mesh.h;
    let mut b = [CsrBuilder::new(mesh.n_nodes()), CsrBuilder::new(mesh.n_nodes())];
    for e in &mesh.elements {
        for q in 0..4 {
            let w = q1::GAUSS[q].1 * h;
            let n = q1::SHAPE_AT_GAUSS[q];
            let g = q1::GRAD_AT_GAUSS[q];
            for a in 0..4 {
                for c in 0..4 {
                    for (i, bi) in b.iter_mut().enumerate() {
                        bi.add(e.nodes[a], e.nodes[c], w * g[c][i] * n[a]);
                    }
                }
            }
        }
    }
    b.map(CsrBuilder::build)
}

/// `Θ⁰(x_c, y)` on the periodic micro mesh.
pub fn initial_theta_periodic(cell: &CellGeometry, initial: InitialPreset, x: [f64; 2]) -> Vec<f64> {
    let mut out = vec![0.0; cell.periodic.n_nodes()];
    for (k, &y) in cell.mesh.coords.iter().enumerate() {
        out[cell.to_periodic[k]] = initial.theta0(x, y);
    }
    out
}

pub struct LimitSolver<'a> {
    pub problem: &'a LimitProblem,
    pub mesh: QuadMesh,
    pub mass: CsrMatrix,
    pub u_matrix: CsrMatrix,
    pub cell_mass: CsrMatrix,
    pub theta_matrix: CsrMatrix,
    pub convection: [CsrMatrix; 2],
    pub mollified: MollifiedGradient,
    /// Lattice intervals per macro cell edge used for `∇^δ`.
    pub lattice_per_cell: usize,
}

impl<'a> LimitSolver<'a> {
    pub fn new(problem: &'a LimitProblem) -> Result<Self> {
        problem.coupling.validate()?;
        if problem.exchange_sign.abs() != 1.0 {
            return Err(Error::Parameter(format!(
                "exchange sign must be +1 or -1, got {}",
                problem.exchange_sign
            )));
        }
        let cell = &problem.cell;
        let dt = problem.time.dt;
        let c = &problem.coupling;
        let mesh = problem.grid.mesh();
        let mass = assemble_mass(&mesh);
        let s_d = problem.diffusion_scaling.factor(cell.volume);
        let k = assemble_stiffness(&mesh, &CoefficientField::uniform(problem.tensor.as_coefficient()), 1.0)?;
        let u_matrix = mass.add_scaled(dt * s_d, &k);

        let pm = &cell.periodic;
        let cell_mass = assemble_mass(pm);
        let kk = assemble_stiffness(pm, &problem.conductivity, 1.0)?;
        let robin = assemble_robin_boundary(pm.n_nodes(), &cell.hole_facets_periodic, 1.0);
        let theta_matrix = cell_mass.add_scaled(dt, &kk).add_scaled(dt * c.g, &robin);
        let convection = convection_matrices(pm);

        let lattice_per_cell = cell.m;
        let mollified = MollifiedGradient::for_domain(
            problem.grid.lengths,
            problem.grid.cells_per_unit() * lattice_per_cell,
            &problem.mollifier,
        );
        Ok(Self {
            problem,
            mesh,
            mass,
            u_matrix,
            cell_mass,
            theta_matrix,
            convection,
            mollified,
            lattice_per_cell,
        })
    }

    pub fn initial_state(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let p = self.problem;
        let u = self.mesh.interpolate(|x| p.initial.u0(x));
        let theta = (0..p.grid.n_cells())
            .map(|c| initial_theta_periodic(&p.cell, p.initial, p.grid.cell_center(c)))
            .collect();
        (u, theta)
    }

    /// `∇^δ(|Y*| u)` at every macro cell centre.
    pub fn drift(&self, u: &[f64]) -> Vec<[f64; 2]> {
        let p = self.problem;
        let n = self.mollified.n;
        let hl = self.mollified.h;
        let nx = p.grid.cells[0] + 1;
        let per = self.lattice_per_cell;
        let vol = p.cell.volume;
        // bilinear interpolation of the macro field onto the lattice
        let mut lat = vec![0.0; n[0] * n[1]];
        for j in 0..n[1] {
            let (cj, b) = split(j, per, p.grid.cells[1]);
            for i in 0..n[0] {
                let (ci, a) = split(i, per, p.grid.cells[0]);
                let k = cj * nx + ci;
                let v = (1.0 - a) * (1.0 - b) * u[k]
                    + a * (1.0 - b) * u[k + 1]
                    + a * b * u[k + nx + 1]
                    + (1.0 - a) * b * u[k + nx];
                lat[j * n[0] + i] = vol * v;
            }
        }
        let g = self.mollified.apply_lattice(&lat);
        (0..p.grid.n_cells())
            .map(|c| interpolate_lattice(&g, n, hl, p.grid.cell_center(c)))
            .collect()
    }

    pub fn step(
        &self,
        step: usize,
        u: &[f64],
        theta: &[Vec<f64>],
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>, LimitDiagnostics)> {
        let p = self.problem;
        let c = &p.coupling;
        let dt = p.time.dt;
        let t = p.time.time(step);
        let ratio = p.cell.surface_ratio();
        let hole = !p.cell.hole_facets.is_empty();

        let load: Vec<f64> = u
            .iter()
            .zip(&self.mesh.coords)
            .map(|(&s, &x)| {
                let exchange = if hole {
                    p.exchange_sign * ratio * (c.a * s + c.b * boundary_average(&p.cell, p.source, t, x))
                } else {
                    0.0
                };
                p.reaction.eval(s) + exchange
            })
            .collect();
        let ml = self.mass.mul_vec(&load);
        let mut rhs = self.mass.mul_vec(u);
        for (r, v) in rhs.iter_mut().zip(&ml) {
            *r += dt * v;
        }
        let (u_new, su) = solve_spd(&self.u_matrix, &rhs, Some(u), p.solver)?;

        let drift = if c.mu != 0.0 { Some(self.drift(u)) } else { None };
        let results: Vec<Result<(Vec<f64>, crate::fem::SolveStats)>> = theta
            .par_iter()
            .enumerate()
            .map(|(cell_id, th)| {
                let mut rhs = self.cell_mass.mul_vec(th);
                if let Some(d) = &drift {
                    let [g1, g2] = d[cell_id];
                    let c1 = self.convection[0].mul_vec(th);
                    let c2 = self.convection[1].mul_vec(th);
                    for k in 0..rhs.len() {
                        rhs[k] += dt * c.mu * (g1 * c1[k] + g2 * c2[k]);
                    }
                }
                solve_spd(&self.theta_matrix, &rhs, Some(th), p.solver).map_err(|e| Error::MacroCell {
                    cell: cell_id,
                    source: Box::new(e),
                })
            })
            .collect();
        let mut theta_new = Vec::with_capacity(theta.len());
        let mut theta_iterations = 0;
        let mut theta_residual: f64 = 0.0;
        for r in results {
            let (v, s) = r?;
            theta_iterations = theta_iterations.max(s.iterations);
            theta_residual = theta_residual.max(s.relative_residual);
            theta_new.push(v);
        }

        let ones = vec![1.0; u.len()];
        let mass_old = self.mass.bilinear(&ones, u);
        let u_mass = self.mass.bilinear(&ones, &u_new);
        let source_mass = self.mass.bilinear(&ones, &load);
        let fold = |f: fn(f64, f64) -> f64, init: f64, v: &[f64]| v.iter().copied().fold(init, f);
        let theta_min = theta_new
            .iter()
            .map(|v| fold(f64::min, f64::INFINITY, v))
            .fold(f64::INFINITY, f64::min);
        let theta_max = theta_new
            .iter()
            .map(|v| fold(f64::max, f64::NEG_INFINITY, v))
            .fold(f64::NEG_INFINITY, f64::max);
        let diag = LimitDiagnostics {
            step: step + 1,
            t: p.time.time(step + 1),
            u_min: fold(f64::min, f64::INFINITY, &u_new),
            u_max: fold(f64::max, f64::NEG_INFINITY, &u_new),
            theta_min,
            theta_max,
            u_mass,
            mass_balance_defect: u_mass - mass_old - dt * source_mass,
            u_iterations: su.iterations,
            theta_iterations,
            u_residual: su.relative_residual,
            theta_residual,
        };
        Ok((u_new, theta_new, diag))
    }

    fn snapshot(&self, time: f64, u: &[f64], theta: &[Vec<f64>]) -> LimitSnapshot {
        let p = self.problem;
        let n_micro = p.cell.n_micro();
        let mut th = TwoScaleField::zeros(p.grid.cells, p.grid.h, n_micro);
        th.time = time;
        for (c, v) in theta.iter().enumerate() {
            th.slice_mut(c).copy_from_slice(&p.cell.lift_periodic(v));
        }
        let mut corrector = evaluate_corrector(&p.grid, &p.cell, u, &p.tensor);
        corrector.time = time;
        LimitSnapshot {
            time,
            u: u.to_vec(),
            theta: th,
            corrector,
        }
    }

    pub fn run(&self) -> Result<LimitTrajectory> {
        let p = self.problem;
        let (mut u, mut theta) = self.initial_state();
        let mut snapshots = vec![self.snapshot(0.0, &u, &theta)];
        let mut diagnostics = Vec::with_capacity(p.time.steps);
        for n in 0..p.time.steps {
            let (un, tn, d) = self.step(n, &u, &theta)?;
            diagnostics.push(d);
            u = un;
            theta = tn;
            if (n + 1) % p.time.snapshot_every == 0 {
                snapshots.push(self.snapshot(p.time.time(n + 1), &u, &theta));
            }
        }
        Ok(LimitTrajectory {
            snapshots,
            diagnostics,
            time: p.time,
            exchange_sign: p.exchange_sign,
        })
    }
}

/// Lattice index `i` with `per` lattice intervals per macro cell to
/// (macro cell index, local coordinate in `[0, 1]`).
fn split(i: usize, per: usize, cells: usize) -> (usize, f64) {
    let c = (i / per).min(cells - 1);
    (c, (i - c * per) as f64 / per as f64)
}

pub fn run(problem: &LimitProblem) -> Result<LimitTrajectory> {
    LimitSolver::new(problem)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HoleSpec;
    use crate::presets::TensorPreset;

    fn problem(coupling: Coupling, reaction: ReactionPreset) -> LimitProblem {
        let cell = Arc::new(CellGeometry::new(2, HoleSpec::cube(1.0 / 3.0, 2.0 / 3.0), 6).unwrap());
        let tensor =
            Arc::new(EffectiveTensor::solve(&cell, &CoefficientField::identity(), SolverOptions::default()).unwrap());
        LimitProblem {
            grid: MacroGrid::new(8, [1, 1]).unwrap(),
            cell,
            tensor,
            conductivity: TensorPreset::Identity.field(6),
            coupling,
            reaction,
            source: SourcePreset::Default,
            mollifier: Mollifier::new(0.25).unwrap(),
            initial: InitialPreset::Default,
            time: TimeGrid::new(0.01, 1e-3, 2).unwrap(),
            solver: SolverOptions::default(),
            exchange_sign: 1.0,
            diffusion_scaling: DiffusionScaling::VolumeFraction,
            tol_pos: 1e-10,
        }
    }

    #[test]
    fn convection_rows_annihilate_constants() {
        let mesh = QuadMesh::rectangle([3, 3], 1.0 / 3.0);
        let [c1, _] = convection_matrices(&mesh);
        let ones = vec![1.0; mesh.n_nodes()];
        assert!(c1.mul_vec(&ones).iter().all(|v| v.abs() < 1e-14));
        let x = mesh.interpolate(|p| p[0]);
        let total: f64 = c1.mul_vec(&x).iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn decoupled_mass_is_conserved() {
        let p = problem(Coupling::off(), ReactionPreset::None);
        let tr = run(&p).unwrap();
        let m0 = tr.diagnostics[0].u_mass;
        for d in &tr.diagnostics {
            assert!((d.u_mass - m0).abs() < 1e-10);
            assert!(d.mass_balance_defect.abs() < 1e-10);
        }
    }

    #[test]
    fn default_limit_stays_nonnegative() {
        let p = problem(Coupling::default(), ReactionPreset::Logistic);
        let tr = run(&p).unwrap();
        assert!(tr.min_value() > -1e-10);
        assert_eq!(tr.snapshots.len(), 3);
        for d in &tr.diagnostics {
            assert!(d.mass_balance_defect.abs() < 1e-9);
        }
    }

    #[test]
    fn drift_vanishes_for_constant_far_from_boundary() {
        let mut p = problem(Coupling::default(), ReactionPreset::None);
        p.grid = MacroGrid::new(8, [2, 2]).unwrap();
        p.mollifier = Mollifier::new(0.2).unwrap();
        let s = LimitSolver::new(&p).unwrap();
        let u = vec![1.0; s.mesh.n_nodes()];
        let g = s.drift(&u);
        // centre cell of [0, 2]², more than δ from ∂Ω
        let c = 8 * 16 + 8;
        assert!(g[c][0].abs() < 1e-12 && g[c][1].abs() < 1e-12);
    }
}
