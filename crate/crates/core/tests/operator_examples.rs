use std::sync::Arc;

use twoscale::fem::SolverOptions;
use twoscale::geometry::{CellGeometry, Epsilon, HoleSpec, PerforatedGrid};
use twoscale::mollifier::Mollifier;
use twoscale::operators::{eps_norm, fold_fn, gradient_fold, unfold, GridMatrices, MollifiedGradient};

fn grid(hole: HoleSpec, m: usize, n: usize) -> PerforatedGrid {
    let cell = Arc::new(CellGeometry::new(2, hole, m).unwrap());
    PerforatedGrid::new(cell, Epsilon::inverse(n).unwrap(), [1, 1]).unwrap()
}

#[test]
fn eps_norm_of_first_coordinate_without_holes() {
    let g = grid(HoleSpec::none(), 12, 4);
    let mats = GridMatrices::new(&g).unwrap();
    let phi: Vec<f64> = g.mesh.coords.iter().map(|x| x[0]).collect();
    let expect = (1.0f64 / 3.0).sqrt() + 0.25;
    // Q1 mass of x₁² is exact up to O(h²)
    assert!((eps_norm(&g, &mats, &phi) - expect).abs() < 1e-3);
}

#[test]
fn y_only_gradient_mismatch_vanishes() {
    let two_pi = 2.0 * std::f64::consts::PI;
    let pts: Vec<(f64, f64)> = [4, 8, 16, 32]
        .iter()
        .map(|&n| {
            let g = grid(HoleSpec::cube(1.0 / 3.0, 2.0 / 3.0), 12, n);
            let mats = GridMatrices::new(&g).unwrap();
            let coords = g.cell.mesh.coords.clone();
            let folded = fold_fn(&g, |_, k| (two_pi * coords[k][0]).sin());
            let (gu, _) = gradient_fold(&g, &mats, &folded, SolverOptions::default()).unwrap();
            let diff = unfold(&g, &gu).sub(&folded);
            (g.eps(), diff.grad_y_norm(&g.cell))
        })
        .collect();
    // periodic in y alone, so the folded field is reproduced up to solver tolerance
    for &(e, v) in &pts {
        assert!(v < 1e-8, "eps {e}: {v:e}");
    }
}

#[test]
fn mollified_gradient_of_a_constant_vanishes_away_from_the_boundary() {
    let moll = Mollifier::new(0.25).unwrap();
    let mg = MollifiedGradient::for_domain([1, 1], 64, &moll);
    let ones = vec![1.0; mg.n[0] * mg.n[1]];
    let g = mg.apply_lattice(&ones);
    let h = mg.h;
    for j in 0..mg.n[1] {
        for i in 0..mg.n[0] {
            let x = [i as f64 * h, j as f64 * h];
            let dist = x[0].min(x[1]).min(1.0 - x[0]).min(1.0 - x[1]);
            if dist > 0.25 + 1e-12 {
                let v = g[j * mg.n[0] + i];
                assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12, "{x:?}: {v:?}");
            }
        }
    }
}

#[test]
fn mollified_gradient_is_bounded_by_the_kernel_constant() {
    let moll = Mollifier::new(0.25).unwrap();
    let mg = MollifiedGradient::for_domain([1, 1], 64, &moll);
    let h = mg.h;
    let u: Vec<f64> = (0..mg.n[0] * mg.n[1])
        .map(|k| {
            let x = [(k % mg.n[0]) as f64 * h, (k / mg.n[0]) as f64 * h];
            (5.0 * x[0]).sin() + x[1] * x[1]
        })
        .collect();
    let l2 = u
        .iter()
        .zip(&mg.weights)
        .map(|(v, w)| w * h * h * v * v)
        .sum::<f64>()
        .sqrt();
    let sup = mg
        .apply_lattice(&u)
        .iter()
        .map(|g| g[0].hypot(g[1]))
        .fold(0.0, f64::max);
    assert!(sup <= mg.c_delta * l2 * (1.0 + 1e-12), "{sup} > {} * {l2}", mg.c_delta);
}
