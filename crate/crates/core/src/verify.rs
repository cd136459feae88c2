//! Error functionals between unfolded micro solutions and the two-scale
//! limit, rate fits, and the operator and lemma check suites.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cell::{interpolate_nodal, recover_gradient, EffectiveTensor};
use crate::error::{Error, Result};
use crate::fem::{q1, SolverOptions};
use crate::fields::TwoScaleField;
use crate::geometry::{CellGeometry, MacroGrid, PerforatedGrid};
use crate::limit::LimitTrajectory;
use crate::micro::MicroTrajectory;
use crate::mollifier::Mollifier;
use crate::operators::{
    eps_norm, fold_fn, gradient_fold, pore_integral, rect_rule, unfold, unfold_boundary, GridMatrices,
    MollifiedGradient,
};
use crate::presets::{InitialPreset, ReactionPreset};

/// Quadrature of the `L²(0, T)` norms over the snapshot times.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeQuadrature {
    /// Rectangle rule on `[t_j, t_{j+1})` with the value at `t_j`.
    #[default]
    LeftEndpoint,
    /// Rectangle rule with the value at `t_{j+1}`.
    RightEndpoint,
    Trapezoid,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ErrorFunctional {
    /// `max_t ‖T u_ε − u‖`
    pub e1: f64,
    /// `‖T(∇u_ε) − ∇u − ∇_y U‖` in `L²(0, T)`
    pub e2: f64,
    /// `max_t ‖T θ_ε − Θ‖`
    pub e3: f64,
    /// `‖T(ε∇θ_ε) − ∇_y Θ‖` in `L²(0, T)`
    pub e4: f64,
    pub total: f64,
}

impl ErrorFunctional {
    pub fn components(&self) -> [f64; 4] {
        [self.e1, self.e2, self.e3, self.e4]
    }
}

/// Reusable cell-level data for [`snapshot_errors`].
pub struct Pairing<'a> {
    pub grid: &'a PerforatedGrid,
    pub macro_grid: &'a MacroGrid,
    pub tensor: &'a EffectiveTensor,
    /// Macro cells per ε-cell edge.
    pub ratio: usize,
    mass_ones: Vec<f64>,
    /// `Φ_iᵀ K Φ_j`
    phi_k_phi: [[f64; 2]; 2],
    /// `k_i · Φ_j` with `k_i = ∫ ∂_i φ`
    moment_phi: [[f64; 2]; 2],
}

impl<'a> Pairing<'a> {
    pub fn new(grid: &'a PerforatedGrid, macro_grid: &'a MacroGrid, tensor: &'a EffectiveTensor) -> Result<Self> {
        let n = grid.epsilon.n();
        let per = macro_grid.cells_per_unit();
        if macro_grid.lengths != grid.lengths {
            return Err(Error::Pairing("micro and limit domains differ".into()));
        }
        if !per.is_multiple_of(n) {
            return Err(Error::Pairing(format!(
                "macro spacing 1/{per} does not divide ε = 1/{n}"
            )));
        }
        let cell = &grid.cell;
        let ones = vec![1.0; cell.n_micro()];
        let kp = [
            cell.stiffness.mul_vec(&tensor.corrector[0]),
            cell.stiffness.mul_vec(&tensor.corrector[1]),
        ];
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut phi_k_phi = [[0.0; 2]; 2];
        let mut moment_phi = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                phi_k_phi[i][j] = dot(&tensor.corrector[i], &kp[j]);
                moment_phi[i][j] = dot(&cell.grad_moments[i], &tensor.corrector[j]);
            }
        }
        Ok(Self {
            grid,
            macro_grid,
            tensor,
            ratio: per / n,
            mass_ones: cell.mass.mul_vec(&ones),
            phi_k_phi,
            moment_phi,
        })
    }

    fn parent(&self, c: usize) -> usize {
        let (i, j) = (c % self.macro_grid.cells[0], c / self.macro_grid.cells[0]);
        (j / self.ratio) * self.grid.cells[0] + i / self.ratio
    }

    /// Squared `[e1, e2, e3, e4]` integrands at one time.
    pub fn snapshot_errors(
        &self,
        u_eps: &[f64],
        theta_eps: &[f64],
        u: &[f64],
        corrector_gradient: &[[f64; 2]],
        theta: &TwoScaleField,
    ) -> [f64; 4] {
        let grid = self.grid;
        let cell = &grid.cell;
        let nm = cell.n_micro();
        let eps = grid.eps();
        let mg = self.macro_grid;
        let h = mg.h;
        let nx = mg.cells[0] + 1;
        let phi = &self.tensor.corrector;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

        // per ε-cell scalars of the unfolded u_ε
        struct CellData {
            vmv: f64,
            m1v: f64,
            vkv: f64,
            phikv: [f64; 2],
            mom: [f64; 2],
        }
        let per_cell: Vec<CellData> = (0..grid.n_cells())
            .map(|xi| {
                let v: Vec<f64> = (0..nm).map(|k| u_eps[grid.unfold[xi * nm + k]]).collect();
                let kv = cell.stiffness.mul_vec(&v);
                CellData {
                    vmv: cell.mass.quadratic_form(&v),
                    m1v: dot(&self.mass_ones, &v),
                    vkv: dot(&v, &kv),
                    phikv: [dot(&phi[0], &kv), dot(&phi[1], &kv)],
                    mom: [dot(&cell.grad_moments[0], &v), dot(&cell.grad_moments[1], &v)],
                }
            })
            .collect();

        let mut out = [0.0; 4];
        let mut d = vec![0.0; nm];
        for c in 0..mg.n_cells() {
            let xi = self.parent(c);
            let cd = &per_cell[xi];
            let (i, j) = (c % mg.cells[0], c / mg.cells[0]);
            let a = j * nx + i;
            let vals = [u[a], u[a + 1], u[a + nx + 1], u[a + nx]];
            let o = mg.cell_origin(c);
            for q in 0..4 {
                let (r, wq) = q1::GAUSS[q];
                let w = wq * h * h;
                let uq = q1::value_at_gauss(vals, q);
                let g = q1::grad_at_gauss(vals, q, h);
                let cq = interpolate_nodal(mg, corrector_gradient, [o[0] + r[0] * h, o[1] + r[1] * h]);
                out[0] += w * (cd.vmv - 2.0 * uq * cd.m1v + uq * uq * cell.volume);
                // f = V/ε − c₁Φ₁ − c₂Φ₂
                let s = [1.0 / eps, -cq[0], -cq[1]];
                let gram = [
                    [cd.vkv, cd.phikv[0], cd.phikv[1]],
                    [cd.phikv[0], self.phi_k_phi[0][0], self.phi_k_phi[0][1]],
                    [cd.phikv[1], self.phi_k_phi[1][0], self.phi_k_phi[1][1]],
                ];
                let mut quad = 0.0;
                for x in 0..3 {
                    for y in 0..3 {
                        quad += s[x] * gram[x][y] * s[y];
                    }
                }
                let mut lin = 0.0;
                for dim in 0..2 {
                    let moments = [cd.mom[dim], self.moment_phi[dim][0], self.moment_phi[dim][1]];
                    lin += g[dim] * (0..3).map(|x| s[x] * moments[x]).sum::<f64>();
                }
                out[1] += w * (quad - 2.0 * lin + (g[0] * g[0] + g[1] * g[1]) * cell.volume);
            }
            let th = theta.slice(c);
            for k in 0..nm {
                d[k] = theta_eps[grid.unfold[xi * nm + k]] - th[k];
            }
            out[2] += h * h * cell.mass.quadratic_form(&d);
            out[3] += h * h * cell.stiffness.quadratic_form(&d);
        }
        out.map(|v| v.max(0.0))
    }
}

/// Sup norms as max over snapshots, `L²` norms with the chosen quadrature.
pub fn aggregate(times: &[f64], squared: &[[f64; 4]], quad: TimeQuadrature) -> ErrorFunctional {
    let sup = |k: usize| squared.iter().map(|s| s[k].sqrt()).fold(0.0, f64::max);
    let l2 = |k: usize| {
        let mut acc = 0.0;
        for j in 0..times.len().saturating_sub(1) {
            let dt = times[j + 1] - times[j];
            acc += match quad {
                TimeQuadrature::LeftEndpoint => dt * squared[j][k],
                TimeQuadrature::RightEndpoint => dt * squared[j + 1][k],
                TimeQuadrature::Trapezoid => 0.5 * dt * (squared[j][k] + squared[j + 1][k]),
            };
        }
        acc.sqrt()
    };
    let (e1, e2, e3, e4) = (sup(0), l2(1), sup(2), l2(3));
    ErrorFunctional {
        e1,
        e2,
        e3,
        e4,
        total: e1 + e2 + e3 + e4,
    }
}

/// Error functional of a paired micro and limit run.
pub fn error_functional(
    grid: &PerforatedGrid,
    micro: &MicroTrajectory,
    macro_grid: &MacroGrid,
    limit: &LimitTrajectory,
    tensor: &EffectiveTensor,
    quad: TimeQuadrature,
) -> Result<ErrorFunctional> {
    if micro.snapshots.len() != limit.snapshots.len() {
        return Err(Error::Pairing(format!(
            "{} micro snapshots against {} limit snapshots",
            micro.snapshots.len(),
            limit.snapshots.len()
        )));
    }
    for (a, b) in micro.snapshots.iter().zip(&limit.snapshots) {
        if (a.time - b.time).abs() > 1e-12 * (1.0 + a.time.abs()) {
            return Err(Error::Pairing(format!(
                "snapshot times {} and {} differ",
                a.time, b.time
            )));
        }
    }
    let pairing = Pairing::new(grid, macro_grid, tensor)?;
    let mut times = Vec::with_capacity(micro.snapshots.len());
    let mut squared = Vec::with_capacity(micro.snapshots.len());
    for (a, b) in micro.snapshots.iter().zip(&limit.snapshots) {
        let cg = recover_gradient(macro_grid, &b.u);
        times.push(a.time);
        squared.push(pairing.snapshot_errors(&a.u, &a.theta, &b.u, &cg, &b.theta));
    }
    Ok(aggregate(&times, &squared, quad))
}

/// `‖W − f‖_{L²(Ω x Y*)}` for a two-scale field `W` at ε resolution against
/// a function `f(x, y)`: 4x4 Gauss points in `x` per ε-cell, nodal
/// interpolation of `f(x, ·)` on the micro mesh.
pub fn two_scale_gap(grid: &PerforatedGrid, w: &TwoScaleField, f: impl Fn([f64; 2], [f64; 2]) -> f64) -> f64 {
    let cell = &grid.cell;
    let eps = grid.eps();
    let mut d = vec![0.0; cell.n_micro()];
    let mut acc = 0.0;
    for xi in 0..grid.n_cells() {
        let o = grid.cell_origin(xi);
        let slice = w.slice(xi);
        for (x, wq) in rect_rule(o, [o[0] + eps, o[1] + eps]) {
            for (k, &y) in cell.mesh.coords.iter().enumerate() {
                d[k] = slice[k] - f(x, y);
            }
            acc += wq * cell.mass.quadratic_form(&d);
        }
    }
    acc.max(0.0).sqrt()
}

/// `‖T u⁰_ε − u⁰‖ + ‖T θ⁰_ε − Θ⁰‖` for the initial recipes of a preset.
pub fn initial_gap(grid: &PerforatedGrid, u0: &[f64], theta0: &[f64], initial: InitialPreset) -> f64 {
    two_scale_gap(grid, &unfold(grid, u0), |x, _| initial.u0(x))
        + two_scale_gap(grid, &unfold(grid, theta0), |x, y| initial.theta0(x, y))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the log residuals.
    pub residual: f64,
    /// `exp(intercept)`: `E ≈ prefactor · ε^slope`.
    pub prefactor: f64,
    pub points: usize,
    pub notes: Vec<String>,
}

/// Least squares line through `(log ε, log E)`. Nonpositive or non-finite
/// `E` are dropped with a note; fewer than three survivors is an error.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    let mut notes = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(eps, e) in points {
        if e > 0.0 && e.is_finite() && eps > 0.0 {
            xs.push(eps.ln());
            ys.push(e.ln());
        } else {
            notes.push(format!("dropped point eps = {eps}, E = {e}"));
        }
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::Fit(n));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Parameter("rate fit needs distinct epsilon values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(RateFit {
        slope,
        intercept,
        residual: (ss / nf).sqrt(),
        prefactor: intercept.exp(),
        points: n,
        notes,
    })
}

/// Test data of the operator rate suites.
pub mod data {
    use super::PI;

    /// `U(x, y) = (1 + x₁x₂)(1 + ½cos(2πy₁))`
    pub fn two_scale(x: [f64; 2], y: [f64; 2]) -> f64 {
        (1.0 + x[0] * x[1]) * (1.0 + 0.5 * (2.0 * PI * y[0]).cos())
    }

    /// `u(x) = cos(πx₁)cos(πx₂)`
    pub fn macro_field(x: [f64; 2]) -> f64 {
        (PI * x[0]).cos() * (PI * x[1]).cos()
    }

    /// `u(x) = sin²(πx₁)sin²(πx₂)`, whose zero extension is C¹.
    pub fn interior_field(x: [f64; 2]) -> f64 {
        ((PI * x[0]).sin() * (PI * x[1]).sin()).powi(2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaRow {
    pub epsilon: f64,
    /// `‖T F U − U‖`
    pub fold_error: f64,
    /// `‖T u − u‖`
    pub unfold_error: f64,
    /// `‖G U − F U‖ + ‖ε∇G U − F(∇_y U)‖`
    pub mismatch: f64,
    /// `sup |T(∇^δ u) − ∇^δ u|` for [`data::interior_field`]
    pub mollifier_sup: f64,
    /// The same sup for [`data::macro_field`], whose zero extension jumps at `∂Ω`
    pub mollifier_sup_jump: f64,
}

/// `‖T F U − U‖` and `‖T u − u‖` on one grid.
pub fn lemma1(
    grid: &PerforatedGrid,
    big_u: impl Fn([f64; 2], [f64; 2]) -> f64 + Sync,
    u: impl Fn([f64; 2]) -> f64,
) -> (f64, f64) {
    let coords = &grid.cell.mesh.coords;
    let folded = fold_fn(grid, |x, k| big_u(x, coords[k]));
    let fold_error = two_scale_gap(grid, &folded, &big_u);
    let nodal = grid.mesh.interpolate(&u);
    let unfold_error = two_scale_gap(grid, &unfold(grid, &nodal), |x, _| u(x));
    (fold_error, unfold_error)
}

/// `‖G U − F U‖_{L²(Ω_ε)} + ‖ε∇G U − F(∇_y U)‖_{L²(Ω_ε)}`, both evaluated
/// through the unfolding with the micro matrices.
pub fn theorem3(
    grid: &PerforatedGrid,
    mats: &GridMatrices,
    big_u: impl Fn([f64; 2], [f64; 2]) -> f64 + Sync,
    opts: SolverOptions,
) -> Result<f64> {
    let cell = &grid.cell;
    let coords = &cell.mesh.coords;
    let folded = fold_fn(grid, |x, k| big_u(x, coords[k]));
    let (g, _) = gradient_fold(grid, mats, &folded, opts)?;
    let tg = unfold(grid, &g);
    let diff = tg.sub(&folded);
    Ok(diff.l2_norm(cell) + diff.grad_y_norm(cell))
}

/// `sup_{x, y} |∇^δu(εξ + εy) − ∇^δu(x)|` with `∇^δu` computed once on a
/// lattice of `per_unit` intervals per unit length (a multiple of `n m`).
pub struct MollifierSup {
    pub per_unit: usize,
    pub lengths: [usize; 2],
    pub gradient: Vec<[f64; 2]>,
    pub n: [usize; 2],
    pub c_delta: f64,
    pub u_l2: f64,
}

impl MollifierSup {
    pub fn new(lengths: [usize; 2], per_unit: usize, moll: &Mollifier, u: impl Fn([f64; 2]) -> f64) -> Self {
        let mg = MollifiedGradient::for_domain(lengths, per_unit, moll);
        let h = mg.h;
        let values: Vec<f64> = (0..mg.n[0] * mg.n[1])
            .map(|k| u([(k % mg.n[0]) as f64 * h, (k / mg.n[0]) as f64 * h]))
            .collect();
        let u_l2 = values
            .iter()
            .zip(&mg.weights)
            .map(|(v, w)| w * h * h * v * v)
            .sum::<f64>()
            .sqrt();
        Self {
            per_unit,
            lengths,
            gradient: mg.apply_lattice(&values),
            n: mg.n,
            c_delta: mg.c_delta,
            u_l2,
        }
    }

    pub fn sup(&self, cell: &CellGeometry, n_eps: usize) -> Result<f64> {
        let m = cell.m;
        if !self.per_unit.is_multiple_of(n_eps * m) {
            return Err(Error::Parameter(format!(
                "lattice 1/{} does not resolve the micro nodes of eps = 1/{n_eps}",
                self.per_unit
            )));
        }
        let r = self.per_unit / n_eps;
        let step = r / m;
        let at = |i: usize, j: usize| self.gradient[j * self.n[0] + i];
        let mut sup: f64 = 0.0;
        let mut ys = Vec::with_capacity(cell.n_micro());
        for cj in 0..self.lengths[1] * n_eps {
            for ci in 0..self.lengths[0] * n_eps {
                ys.clear();
                ys.extend(
                    cell.node_lattice
                        .iter()
                        .map(|&[a, b]| at(ci * r + a * step, cj * r + b * step)),
                );
                for j in cj * r..=(cj + 1) * r {
                    for i in ci * r..=(ci + 1) * r {
                        let gx = at(i, j);
                        for gy in &ys {
                            let d = (gy[0] - gx[0]).hypot(gy[1] - gx[1]);
                            sup = sup.max(d);
                        }
                    }
                }
            }
        }
        Ok(sup)
    }
}

/// One line of the operator identity suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub identity: String,
    pub epsilon: String,
    pub lhs: f64,
    pub rhs: f64,
    pub relative_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityCheck {
    fn new(identity: &str, grid: &PerforatedGrid, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let relative_error = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        let relative_error = if lhs == rhs { 0.0 } else { relative_error };
        Self {
            identity: identity.to_string(),
            epsilon: grid.epsilon.to_string(),
            lhs,
            rhs,
            relative_error,
            tolerance,
            pass: relative_error <= tolerance,
        }
    }
}

/// Exactness suite of the discrete unfolding algebra on one grid, with
/// random nodal fields from a seeded generator.
pub fn ops_check(grid: &PerforatedGrid, seed: u64) -> Result<Vec<IdentityCheck>> {
    const TOL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_nodes();
    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
    let cell = &grid.cell;
    let mats = GridMatrices::new(grid)?;
    let ones = vec![1.0; n];
    let tu = unfold(grid, &u);
    let tv = unfold(grid, &v);
    let mut out = Vec::new();

    out.push(IdentityCheck::new(
        "norm preservation ||T u|| = ||u||",
        grid,
        tu.l2_norm(cell),
        mats.mass.quadratic_form(&u).sqrt(),
        TOL,
    ));
    out.push(IdentityCheck::new(
        "integration formula for T",
        grid,
        tu.integral(cell),
        mats.mass.bilinear(&ones, &u),
        TOL,
    ));
    out.push(IdentityCheck::new(
        "integration formula for T^b",
        grid,
        unfold_boundary(grid, &u).integral(cell),
        pore_integral(grid, &u),
        TOL,
    ));

    let uv: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a * b).collect();
    let prod = tu.zip_with(&tv, |a, b| a * b);
    let tuv = unfold(grid, &uv);
    let defect = tuv.sub(&prod).max_abs();
    out.push(IdentityCheck::new(
        "product rule T(uv) = T u T v",
        grid,
        defect + 1.0,
        1.0,
        TOL,
    ));
    let bu = unfold_boundary(grid, &u);
    let bv = unfold_boundary(grid, &v);
    let bprod = bu.zip_with(&bv, |a, b| a * b);
    let buv = unfold_boundary(grid, &uv);
    let bdefect = buv
        .values
        .iter()
        .zip(&bprod.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    out.push(IdentityCheck::new(
        "product rule for T^b",
        grid,
        bdefect + 1.0,
        1.0,
        TOL,
    ));

    // gradients at Gauss points of matched elements
    let eps = grid.eps();
    let m = cell.m;
    let mut micro_element = vec![usize::MAX; m * m];
    for (k, e) in cell.mesh.elements.iter().enumerate() {
        micro_element[e.cell[1] * m + e.cell[0]] = k;
    }
    let mut grad_defect: f64 = 0.0;
    let mut grad_scale: f64 = 0.0;
    for e in &grid.mesh.elements {
        let [i, j] = e.cell;
        let xi = (j / m) * grid.cells[0] + i / m;
        let me = &cell.mesh.elements[micro_element[(j % m) * m + i % m]];
        let vals = e.nodes.map(|k| u[k]);
        let tvals = me.nodes.map(|k| tu.slice(xi)[k]);
        for q in 0..4 {
            let g = q1::grad_at_gauss(vals, q, grid.mesh.h);
            let gy = q1::grad_at_gauss(tvals, q, cell.mesh.h);
            for c in 0..2 {
                grad_defect = grad_defect.max((eps * g[c] - gy[c]).abs());
                grad_scale = grad_scale.max(gy[c].abs());
            }
        }
    }
    out.push(IdentityCheck::new(
        "T(eps grad u) = grad_y T u",
        grid,
        grad_scale + grad_defect,
        grad_scale,
        TOL,
    ));

    let reaction = ReactionPreset::Logistic;
    let ru: Vec<f64> = u.iter().map(|&s| reaction.eval(s)).collect();
    let lhs = unfold(grid, &ru);
    let rhs = tu.map(|s| reaction.eval(s));
    out.push(IdentityCheck::new(
        "T[R(u)] = R(T u)",
        grid,
        lhs.sub(&rhs).max_abs() + 1.0,
        1.0,
        TOL,
    ));

    out.push(IdentityCheck::new(
        "eps-norm identity",
        grid,
        tu.h1y_norm(cell),
        eps_norm(grid, &mats, &u),
        TOL,
    ));
    Ok(out)
}
