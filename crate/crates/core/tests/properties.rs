use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use twoscale::cell::EffectiveTensor;
use twoscale::config::RunConfig;
use twoscale::fem::{
    assemble_mass, assemble_stiffness, solve_spd, CoefficientField, CsrMatrix, QuadMesh, SolverOptions,
};
use twoscale::fields::TwoScaleField;
use twoscale::geometry::{CellGeometry, Epsilon, HoleSpec, MacroGrid, PerforatedGrid};
use twoscale::mollifier::Mollifier;
use twoscale::operators::fold_fn;
use twoscale::verify::{self, fit_rate, Pairing};

fn hole_cell(m: usize) -> Arc<CellGeometry> {
    Arc::new(CellGeometry::new(2, HoleSpec::cube(1.0 / 3.0, 2.0 / 3.0), m).unwrap())
}

fn grid(cell: &Arc<CellGeometry>, n: usize) -> PerforatedGrid {
    PerforatedGrid::new(cell.clone(), Epsilon::inverse(n).unwrap(), [1, 1]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fit_recovers_power_laws_and_ignores_scale(slope in 0.1f64..2.0, c in 0.01f64..100.0, lambda in 0.001f64..1000.0) {
        let pts: Vec<(f64, f64)> = [4.0f64, 8.0, 16.0, 32.0].iter().map(|&n| (1.0 / n, c * n.powf(-slope))).collect();
        let a = fit_rate(&pts).unwrap();
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(e, v)| (e, lambda * v)).collect();
        let b = fit_rate(&scaled).unwrap();
        prop_assert!((a.slope - slope).abs() < 1e-10);
        prop_assert!((a.prefactor - c).abs() < 1e-8 * c);
        prop_assert!(a.residual < 1e-10);
        prop_assert!((b.slope - a.slope).abs() < 1e-10);
        prop_assert!((b.intercept - a.intercept - lambda.ln()).abs() < 1e-9);
    }

    #[test]
    fn operator_identities_hold_for_any_seed(seed in any::<u64>(), n in 2usize..7) {
        let cell = hole_cell(6);
        for c in verify::ops_check(&grid(&cell, n), seed).unwrap() {
            prop_assert!(c.pass, "{} at {}: {:e}", c.identity, c.epsilon, c.relative_error);
        }
    }

    #[test]
    fn fold_of_affine_field_is_its_centroid_value(c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, n in 2usize..6) {
        let cell = hole_cell(6);
        let g = grid(&cell, n);
        let f = fold_fn(&g, |x, _| c0 + c1 * x[0] + c2 * x[1]);
        let e = g.eps();
        for xi in 0..g.n_cells() {
            let o = g.cell_origin(xi);
            // the centred hole keeps the centroid of the perforated cell at the cell centre
            let expect = c0 + c1 * (o[0] + 0.5 * e) + c2 * (o[1] + 0.5 * e);
            for v in f.slice(xi) {
                prop_assert!((v - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn effective_tensor_is_symmetric_and_below_the_voigt_bound(d11 in 0.2f64..5.0, d22 in 0.2f64..5.0, r in -0.9f64..0.9) {
        let d12 = r * (d11 * d22).sqrt();
        let cell = hole_cell(6);
        let t = EffectiveTensor::solve(&cell, &CoefficientField::uniform([d11, d12, d22]), SolverOptions::default()).unwrap();
        let d = t.d_eff;
        prop_assert!(t.asymmetry < 1e-8);
        let v = [[t.voigt[0], t.voigt[1]], [t.voigt[1], t.voigt[2]]];
        // Voigt average minus d_eff and d_eff itself are positive definite
        let diff = [[v[0][0] - d[0][0], v[0][1] - d[0][1]], [v[1][0] - d[1][0], v[1][1] - d[1][1]]];
        let pd = |a: [[f64; 2]; 2]| a[0][0] > 0.0 && a[0][0] * a[1][1] - a[0][1] * a[1][0] > 0.0;
        prop_assert!(pd(d));
        prop_assert!(pd(diff));
        prop_assert!((t.voigt[0] - d11 * 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn conjugate_gradients_match_a_dense_solve(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 50;
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = b.transpose() * &b + DMatrix::identity(n, n) * n as f64;
        let rhs = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
        let (x, stats) = solve_spd(&CsrMatrix::from_dense(&rows), rhs.as_slice(), None, SolverOptions { tol: 1e-13, max_iter: 500 }).unwrap();
        let expect = a.cholesky().unwrap().solve(&rhs);
        prop_assert!(stats.relative_residual <= 1e-13);
        for i in 0..n {
            prop_assert!((x[i] - expect[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn discrete_kernel_has_unit_mass(delta in 0.05f64..0.5, per_unit in prop::sample::select(vec![48usize, 96, 192])) {
        let k = Mollifier::new(delta).unwrap().kernel(1.0 / per_unit as f64);
        prop_assert!((k.mass() - 1.0).abs() < 1e-12);
        prop_assert!(k.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn config_round_trips(tau in 0.0f64..3.0, mu in 0.0f64..3.0, g in 0.0f64..3.0, delta in 0.2f64..1.0, snapshots in 1usize..40) {
        let mut c = RunConfig::default();
        c.physics.tau = tau;
        c.physics.mu = mu;
        c.physics.g = g;
        c.physics.delta = delta;
        c.discretization.snapshots = snapshots;
        let back = RunConfig::parse_toml(&c.to_toml()).unwrap();
        prop_assert_eq!(back.to_toml(), c.to_toml());
        prop_assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn injected_offsets_show_up_in_e1_and_e3_only(cu in -1.0f64..1.0, ct in -1.0f64..1.0) {
        let cell = hole_cell(6);
        let g = grid(&cell, 4);
        let mg = MacroGrid::new(4, [1, 1]).unwrap();
        let tensor = EffectiveTensor::solve(&cell, &CoefficientField::identity(), SolverOptions::default()).unwrap();
        let pairing = Pairing::new(&g, &mg, &tensor).unwrap();
        let z = |y: [f64; 2]| (2.0 * std::f64::consts::PI * y[0]).cos() * (2.0 * std::f64::consts::PI * y[1]).cos();
        let theta = TwoScaleField::from_fn(mg.cells, mg.h, &cell, |_, y| z(y));
        let eps = g.eps();
        let theta_eps: Vec<f64> = g.mesh.coords.iter().map(|x| z([x[0] / eps, x[1] / eps]) + ct).collect();
        let u_eps = vec![1.0 + cu; g.n_nodes()];
        let u = vec![1.0; (mg.cells[0] + 1) * (mg.cells[1] + 1)];
        let grads = vec![[0.0, 0.0]; u.len()];
        let s = pairing.snapshot_errors(&u_eps, &theta_eps, &u, &grads, &theta);
        let vol = 8.0 / 9.0;
        prop_assert!((s[0] - cu * cu * vol).abs() < 1e-12);
        prop_assert!(s[1].abs() < 1e-12);
        prop_assert!((s[2] - ct * ct * vol).abs() < 1e-12);
        prop_assert!(s[3].abs() < 1e-12);
    }
}

#[test]
fn neumann_reaction_diffusion_converges_at_second_order() {
    // -Δu + u = f on the unit square with u = cos(πx)cos(πy), natural boundary condition
    let pi = std::f64::consts::PI;
    let exact = |x: [f64; 2]| (pi * x[0]).cos() * (pi * x[1]).cos();
    let pts: Vec<(f64, f64)> = [8usize, 16, 32, 64]
        .iter()
        .map(|&n| {
            let mesh = QuadMesh::rectangle([n, n], 1.0 / n as f64);
            let m = assemble_mass(&mesh);
            let k = assemble_stiffness(&mesh, &CoefficientField::identity(), 1.0).unwrap();
            let f = mesh.interpolate(|x| (2.0 * pi * pi + 1.0) * exact(x));
            let (u, _) = solve_spd(
                &m.add_scaled(1.0, &k),
                &m.mul_vec(&f),
                None,
                SolverOptions {
                    tol: 1e-13,
                    max_iter: 10_000,
                },
            )
            .unwrap();
            let e: Vec<f64> = u.iter().zip(mesh.interpolate(exact)).map(|(a, b)| a - b).collect();
            (1.0 / n as f64, m.quadratic_form(&e).sqrt())
        })
        .collect();
    let fit = fit_rate(&pts).unwrap();
    assert!(fit.slope > 1.9, "slope {}", fit.slope);
}

#[test]
fn mismatched_macro_grid_is_a_pairing_error() {
    let cell = hole_cell(6);
    let g = grid(&cell, 4);
    let mg = MacroGrid::new(6, [1, 1]).unwrap();
    let tensor = EffectiveTensor::solve(&cell, &CoefficientField::identity(), SolverOptions::default()).unwrap();
    assert!(matches!(
        Pairing::new(&g, &mg, &tensor),
        Err(twoscale::Error::Pairing(_))
    ));
}
