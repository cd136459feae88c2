//! Time integration of the microscale system on `Ω_ε`.
//!
//! ```text
//! u̇ = div(𝔻(x/ε)∇u) + τ ε^α ∇u·∇^δθ + R(u)
//! θ̇ = div(ε² 𝕂(x/ε)∇θ) + μ ε^β ∇θ·∇^δu
//! −𝔻∇u·ν = ε(a u + b v_ε),  −ε²𝕂∇θ·ν = ε g θ   on ∂T_ε
//! ```
//!
//! with homogeneous Neumann conditions on `∂Ω`. Each step is backward Euler
//! for diffusion and Robin terms with the cross terms and the reaction taken
//! at the old level, so the two unknowns are updated by independent SPD
//! solves.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_mass, assemble_robin_boundary, assemble_stiffness, facet_load, gradient_dot_load};
use crate::fem::{solve_spd, CoefficientField, CsrMatrix, SolverOptions};
use crate::geometry::PerforatedGrid;
use crate::mollifier::Mollifier;
use crate::operators::MollifiedGradient;
use crate::presets::{InitialPreset, ReactionPreset, SourcePreset};

/// Scalar couplings and exponents shared by the micro and limit problems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Coupling {
    pub tau: f64,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Coupling {
    fn default() -> Self {
        Self {
            tau: 1.0,
            mu: 1.0,
            a: 1.0,
            b: 0.5,
            g: 1.0,
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl Coupling {
    /// All couplings and exchange rates off.
    pub fn off() -> Self {
        Self {
            tau: 0.0,
            mu: 0.0,
            a: 0.0,
            b: 0.0,
            g: 0.0,
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau", self.tau),
            ("mu", self.mu),
            ("a", self.a),
            ("b", self.b),
            ("g", self.g),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!(
                    "{name} must be a nonnegative number, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Time grid: `steps` steps of size `dt`, a snapshot every `snapshot_every` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
    pub snapshot_every: usize,
}

impl TimeGrid {
    /// `horizon / dt` must be an integer and divisible by `snapshots`.
    pub fn new(horizon: f64, dt: f64, snapshots: usize) -> Result<Self> {
        if !(horizon > 0.0 && dt > 0.0) || snapshots == 0 {
            return Err(Error::Parameter(
                "horizon, time step and snapshot count must be positive".into(),
            ));
        }
        let steps = (horizon / dt).round() as usize;
        if steps == 0 || (steps as f64 * dt - horizon).abs() > 1e-9 * horizon {
            return Err(Error::Parameter(format!(
                "horizon {horizon} is not a multiple of dt = {dt}"
            )));
        }
        if !steps.is_multiple_of(snapshots) {
            return Err(Error::Parameter(format!(
                "{steps} time steps cannot be split into {snapshots} snapshot intervals"
            )));
        }
        Ok(Self {
            dt,
            steps,
            snapshot_every: steps / snapshots,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    pub fn cadence(&self) -> f64 {
        self.dt * self.snapshot_every as f64
    }
}

#[derive(Clone, Debug)]
pub struct MicroProblem {
    pub grid: Arc<PerforatedGrid>,
    pub diffusion: CoefficientField,
    pub conductivity: CoefficientField,
    pub coupling: Coupling,
    pub reaction: ReactionPreset,
    pub source: SourcePreset,
    pub mollifier: Mollifier,
    pub u0: Vec<f64>,
    pub theta0: Vec<f64>,
    pub time: TimeGrid,
    pub solver: SolverOptions,
    /// Values below `-tol_pos` count as positivity violations.
    pub tol_pos: f64,
    /// Abort at the first positivity violation instead of recording it.
    pub fail_on_positivity: bool,
    /// When false `θ` is frozen at its initial value.
    pub evolve_theta: bool,
}

/// `u⁰_ε = u⁰|_{Ω_ε}` and `θ⁰_ε(x) = Θ⁰(x, {x/ε})` at the grid nodes.
pub fn initial_fields(grid: &PerforatedGrid, initial: InitialPreset) -> (Vec<f64>, Vec<f64>) {
    let m = grid.cell.m;
    let u0 = grid.mesh.coords.iter().map(|&x| initial.u0(x)).collect();
    let theta0 = grid
        .mesh
        .coords
        .iter()
        .zip(&grid.node_lattice)
        .map(|(&x, &[i, j])| initial.theta0(x, [(i % m) as f64 / m as f64, (j % m) as f64 / m as f64]))
        .collect();
    (u0, theta0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub u_mass: f64,
    pub theta_mass: f64,
    pub u_iterations: usize,
    pub theta_iterations: usize,
    pub u_residual: f64,
    pub theta_residual: f64,
    pub positivity_violation: bool,
}

#[derive(Clone, Debug)]
pub struct MicroSnapshot {
    pub time: f64,
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MicroTrajectory {
    pub snapshots: Vec<MicroSnapshot>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Steps at which a value dropped below `-tol_pos`.
    pub positivity_flags: Vec<usize>,
    /// `‖u‖_{H¹(Ω_ε)} + ε‖∇θ‖_{L²(Ω_ε)}` at each snapshot.
    pub energy: Vec<f64>,
    /// `Δt C_δ (τ ε^α ‖θ⁰‖ + μ ε^β ‖u⁰‖) / h`, recorded, not enforced.
    pub stability_indicator: f64,
    pub c_delta: f64,
    pub time: TimeGrid,
}

impl MicroTrajectory {
    pub fn min_value(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.u_min.min(d.theta_min))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.u_max.max(d.theta_max))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Assembled operators of one micro problem.
pub struct MicroSolver<'a> {
    pub problem: &'a MicroProblem,
    pub mass: CsrMatrix,
    pub laplace: CsrMatrix,
    pub u_matrix: CsrMatrix,
    pub theta_matrix: CsrMatrix,
    pub mollified: MollifiedGradient,
    eps_alpha: f64,
    eps_beta: f64,
}

impl<'a> MicroSolver<'a> {
    pub fn new(problem: &'a MicroProblem) -> Result<Self> {
        problem.coupling.validate()?;
        let grid = &problem.grid;
        let mesh = &grid.mesh;
        let eps = grid.eps();
        let dt = problem.time.dt;
        let c = &problem.coupling;
        if problem.u0.len() != grid.n_nodes() || problem.theta0.len() != grid.n_nodes() {
            return Err(Error::Parameter("initial fields do not match the grid".into()));
        }
        let mass = assemble_mass(mesh);
        let laplace = assemble_stiffness(mesh, &CoefficientField::identity(), 1.0)?;
        let kd = assemble_stiffness(mesh, &problem.diffusion, 1.0)?;
        let kk = assemble_stiffness(mesh, &problem.conductivity, eps * eps)?;
        let robin = assemble_robin_boundary(grid.n_nodes(), &grid.pore_facets, eps);
        let u_matrix = mass.add_scaled(dt, &kd).add_scaled(dt * c.a, &robin);
        let theta_matrix = mass.add_scaled(dt, &kk).add_scaled(dt * c.g, &robin);
        let mollified = MollifiedGradient::for_grid(grid, &problem.mollifier);
        Ok(Self {
            problem,
            mass,
            laplace,
            u_matrix,
            theta_matrix,
            mollified,
            eps_alpha: eps.powf(c.alpha),
            eps_beta: eps.powf(c.beta),
        })
    }

    /// `ε ∫_{∂T_ε} v_ε φ dσ` with `v_ε(x) = 𝕍(t, x, {x/ε})`.
    pub fn source_load(&self, t: f64) -> Vec<f64> {
        let grid = &self.problem.grid;
        let eps = grid.eps();
        let source = self.problem.source;
        facet_load(grid.n_nodes(), &grid.pore_facets, eps, |f, x| {
            let o = grid.cell_origin(f.cell);
            source.eval(t, x, [(x[0] - o[0]) / eps, (x[1] - o[1]) / eps])
        })
    }

    /// `‖u‖_{H¹} + ε‖∇θ‖`
    pub fn energy(&self, u: &[f64], theta: &[f64]) -> f64 {
        let eps = self.problem.grid.eps();
        (self.mass.quadratic_form(u) + self.laplace.quadratic_form(u))
            .max(0.0)
            .sqrt()
            + eps * self.laplace.quadratic_form(theta).max(0.0).sqrt()
    }

    /// One IMEX step from `t = step · dt`.
    pub fn step(&self, step: usize, u: &[f64], theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>, StepDiagnostics)> {
        let p = self.problem;
        let c = &p.coupling;
        let dt = p.time.dt;
        let t = p.time.time(step);
        let grid = &p.grid;
        let mesh = &grid.mesh;

        let r: Vec<f64> = u.iter().map(|&s| p.reaction.eval(s)).collect();
        let mut rhs_u = self.mass.mul_vec(u);
        let mr = self.mass.mul_vec(&r);
        for (x, y) in rhs_u.iter_mut().zip(&mr) {
            *x += dt * y;
        }
        if c.tau != 0.0 {
            let g_theta = self.mollified.apply_grid(grid, theta);
            let cross = gradient_dot_load(mesh, u, &g_theta);
            let w = dt * c.tau * self.eps_alpha;
            for (x, y) in rhs_u.iter_mut().zip(&cross) {
                *x += w * y;
            }
        }
        if c.b != 0.0 {
            let load = self.source_load(t);
            for (x, y) in rhs_u.iter_mut().zip(&load) {
                *x -= dt * c.b * y;
            }
        }
        let (u_new, su) = solve_spd(&self.u_matrix, &rhs_u, Some(u), p.solver)?;

        let (theta_new, st) = if p.evolve_theta {
            let mut rhs_t = self.mass.mul_vec(theta);
            if c.mu != 0.0 {
                let g_u = self.mollified.apply_grid(grid, u);
                let cross = gradient_dot_load(mesh, theta, &g_u);
                let w = dt * c.mu * self.eps_beta;
                for (x, y) in rhs_t.iter_mut().zip(&cross) {
                    *x += w * y;
                }
            }
            solve_spd(&self.theta_matrix, &rhs_t, Some(theta), p.solver)?
        } else {
            (theta.to_vec(), Default::default())
        };

        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ones = vec![1.0; u.len()];
        let u_min = min(&u_new);
        let theta_min = min(&theta_new);
        let diag = StepDiagnostics {
            step: step + 1,
            t: p.time.time(step + 1),
            u_min,
            u_max: max(&u_new),
            theta_min,
            theta_max: max(&theta_new),
            u_mass: self.mass.bilinear(&ones, &u_new),
            theta_mass: self.mass.bilinear(&ones, &theta_new),
            u_iterations: su.iterations,
            theta_iterations: st.iterations,
            u_residual: su.relative_residual,
            theta_residual: st.relative_residual,
            positivity_violation: u_min.min(theta_min) < -p.tol_pos,
        };
        Ok((u_new, theta_new, diag))
    }

    pub fn run(&self) -> Result<MicroTrajectory> {
        let p = self.problem;
        let mut u = p.u0.clone();
        let mut theta = p.theta0.clone();
        let mut snapshots = vec![MicroSnapshot {
            time: 0.0,
            u: u.clone(),
            theta: theta.clone(),
        }];
        let mut energy = vec![self.energy(&u, &theta)];
        let mut diagnostics = Vec::with_capacity(p.time.steps);
        let mut positivity_flags = Vec::new();
        for n in 0..p.time.steps {
            let (un, tn, d) = self.step(n, &u, &theta)?;
            if d.positivity_violation {
                if p.fail_on_positivity {
                    return Err(Error::Positivity {
                        step: d.step,
                        min: d.u_min.min(d.theta_min),
                    });
                }
                positivity_flags.push(d.step);
            }
            diagnostics.push(d);
            u = un;
            theta = tn;
            if (n + 1) % p.time.snapshot_every == 0 {
                energy.push(self.energy(&u, &theta));
                snapshots.push(MicroSnapshot {
                    time: p.time.time(n + 1),
                    u: u.clone(),
                    theta: theta.clone(),
                });
            }
        }
        Ok(MicroTrajectory {
            snapshots,
            diagnostics,
            positivity_flags,
            energy,
            stability_indicator: self.stability_indicator(),
            c_delta: self.mollified.c_delta,
            time: p.time,
        })
    }

    pub fn stability_indicator(&self) -> f64 {
        let p = self.problem;
        let c = &p.coupling;
        let l2 = |v: &[f64]| self.mass.quadratic_form(v).max(0.0).sqrt();
        p.time.dt * self.mollified.c_delta * (c.tau * self.eps_alpha * l2(&p.theta0) + c.mu * self.eps_beta * l2(&p.u0))
            / p.grid.mesh.h
    }
}

/// Convenience wrapper: assemble and run.
pub fn run(problem: &MicroProblem) -> Result<MicroTrajectory> {
    MicroSolver::new(problem)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CellGeometry, Epsilon, HoleSpec};
    use crate::presets::TensorPreset;

    fn problem(n: usize, coupling: Coupling, reaction: ReactionPreset) -> MicroProblem {
        let cell = Arc::new(CellGeometry::new(2, HoleSpec::cube(1.0 / 3.0, 2.0 / 3.0), 6).unwrap());
        let grid = Arc::new(PerforatedGrid::new(cell, Epsilon::inverse(n).unwrap(), [1, 1]).unwrap());
        let (u0, theta0) = initial_fields(&grid, InitialPreset::Default);
        MicroProblem {
            grid,
            diffusion: TensorPreset::Identity.field(6),
            conductivity: TensorPreset::Identity.field(6),
            coupling,
            reaction,
            source: SourcePreset::Default,
            mollifier: Mollifier::new(0.25).unwrap(),
            u0,
            theta0,
            time: TimeGrid::new(0.01, 1e-3, 5).unwrap(),
            solver: SolverOptions::default(),
            tol_pos: 1e-10,
            fail_on_positivity: false,
            evolve_theta: true,
        }
    }

    #[test]
    fn time_grid_rejects_uneven_snapshots() {
        assert!(TimeGrid::new(0.1, 1e-3, 20).is_ok());
        assert!(TimeGrid::new(0.1, 1e-3, 30).is_err());
        assert!(TimeGrid::new(0.1, 3e-3, 1).is_err());
    }

    #[test]
    fn neumann_mass_is_conserved() {
        let p = problem(4, Coupling::off(), ReactionPreset::None);
        let tr = run(&p).unwrap();
        let ones = vec![1.0; p.u0.len()];
        let m0 = assemble_mass(&p.grid.mesh).bilinear(&ones, &p.u0);
        for d in &tr.diagnostics {
            assert!((d.u_mass - m0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_theta_is_stationary() {
        let mut p = problem(4, Coupling::off(), ReactionPreset::None);
        p.theta0 = vec![0.7; p.theta0.len()];
        let tr = run(&p).unwrap();
        for s in &tr.snapshots {
            assert!(s.theta.iter().all(|v| (v - 0.7).abs() < 1e-10));
        }
    }

    #[test]
    fn u_ignores_theta_without_tau() {
        let mut c = Coupling::default();
        c.tau = 0.0;
        let mut p = problem(4, c, ReactionPreset::Logistic);
        let a = run(&p).unwrap();
        p.evolve_theta = false;
        let b = run(&p).unwrap();
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(x.u, y.u);
        }
    }

    #[test]
    fn default_run_is_nonnegative() {
        let p = problem(4, Coupling::default(), ReactionPreset::Logistic);
        let tr = run(&p).unwrap();
        assert!(tr.positivity_flags.is_empty());
        assert!(tr.min_value() > -1e-10);
        assert_eq!(tr.snapshots.len(), 6);
        assert_eq!(tr.energy.len(), 6);
    }
}
