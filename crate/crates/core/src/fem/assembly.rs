//! Global Q1 assembly: mass, stiffness with a matrix coefficient, Robin
//! boundary mass, and a few load helpers.

use super::mesh::{Facet, QuadMesh};
use super::q1;
use super::sparse::{CsrBuilder, CsrMatrix};
use crate::error::{Error, Result};

/// Piecewise-constant symmetric 2x2 coefficient, one `[a11, a12, a22]` per
/// micro cell of an `m x m` unit-cell lattice. Elements select their entry via
/// [`super::mesh::Element::micro_cell`].
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    pub m: usize,
    pub values: Vec<[f64; 3]>,
}

impl CoefficientField {
    /// The same matrix on every cell (`m = 1`).
    pub fn uniform(c: [f64; 3]) -> Self {
        Self { m: 1, values: vec![c] }
    }

    pub fn identity() -> Self {
        Self::uniform([1.0, 0.0, 1.0])
    }

    /// Sample `f(y)` at the centres of the `m x m` micro cells.
    pub fn sampled(m: usize, f: impl Fn([f64; 2]) -> [f64; 3]) -> Self {
        let h = 1.0 / m as f64;
        let values = (0..m * m)
            .map(|k| {
                let (i, j) = (k % m, k / m);
                f([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h])
            })
            .collect();
        Self { m, values }
    }

    #[inline]
    pub fn at(&self, micro_cell: usize) -> [f64; 3] {
        if self.m == 1 {
            self.values[0]
        } else {
            self.values[micro_cell]
        }
    }

    /// Smallest and largest eigenvalue over all cells.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in &self.values {
            let (l1, l2) = eigenvalues(*c);
            lo = lo.min(l1);
            hi = hi.max(l2);
        }
        (lo, hi)
    }

    /// Fails unless every cell matrix is positive definite.
    pub fn check_elliptic(&self) -> Result<()> {
        for (k, c) in self.values.iter().enumerate() {
            if c.iter().any(|v| !v.is_finite()) || eigenvalues(*c).0 <= 0.0 {
                return Err(Error::Assembly(format!(
                    "coefficient in cell {k} is not positive definite: {c:?}"
                )));
            }
        }
        Ok(())
    }

    /// `∫ 𝔻 dy` over the active cells of a unit-cell mask.
    pub fn integral(&self, active: &[bool]) -> [f64; 3] {
        let w = 1.0 / active.len() as f64;
        let mut s = [0.0; 3];
        for (k, &on) in active.iter().enumerate() {
            if on {
                let c = self.at(k);
                for r in 0..3 {
                    s[r] += w * c[r];
                }
            }
        }
        s
    }
}

/// Eigenvalues `(λ_min, λ_max)` of `[[a, b], [b, c]]`.
pub fn eigenvalues(m: [f64; 3]) -> (f64, f64) {
    let [a, b, c] = m;
    let mean = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mean - r, mean + r)
}

pub fn assemble_mass(mesh: &QuadMesh) -> CsrMatrix {
    let h2 = mesh.h * mesh.h;
    let mref = &q1::REF.mass;
    let mut b = CsrBuilder::new(mesh.n_nodes());
    for e in &mesh.elements {
        for a in 0..4 {
            for c in 0..4 {
                b.add(e.nodes[a], e.nodes[c], h2 * mref[a][c]);
            }
        }
    }
    b.build()
}

/// `scale · ∫ 𝔻∇u·∇φ`.
pub fn assemble_stiffness(mesh: &QuadMesh, coeff: &CoefficientField, scale: f64) -> Result<CsrMatrix> {
    coeff.check_elliptic()?;
    let mut b = CsrBuilder::new(mesh.n_nodes());
    let mut cache: Option<([f64; 3], [[f64; 4]; 4])> = None;
    for e in &mesh.elements {
        let c = coeff.at(e.micro_cell);
        let k = match cache {
            Some((cc, k)) if cc == c => k,
            _ => {
                let k = q1::stiffness(c);
                cache = Some((c, k));
                k
            }
        };
        for a in 0..4 {
            for d in 0..4 {
                b.add(e.nodes[a], e.nodes[d], scale * k[a][d]);
            }
        }
    }
    Ok(b.build())
}

/// `weight · ∫_facets u φ dσ`, exact for linear traces.
pub fn assemble_robin_boundary(n_nodes: usize, facets: &[Facet], weight: f64) -> CsrMatrix {
    let mut b = CsrBuilder::new(n_nodes);
    if weight == 0.0 {
        return b.build();
    }
    for f in facets {
        let [p, q] = f.nodes;
        let d = weight * f.length / 3.0;
        let o = weight * f.length / 6.0;
        b.add(p, p, d);
        b.add(q, q, d);
        b.add(p, q, o);
        b.add(q, p, o);
    }
    b.build()
}

/// Two-point Gauss rule on a facet: physical points and weights.
pub fn facet_gauss(f: &Facet) -> [([f64; 2], f64, [f64; 2]); 2] {
    let g = 0.5 / 3f64.sqrt();
    let [a, b] = f.ends;
    std::array::from_fn(|k| {
        let s = if k == 0 { 0.5 - g } else { 0.5 + g };
        let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
        (p, 0.5 * f.length, [1.0 - s, s])
    })
}

/// `weight · ∫_facets g φ dσ` for a pointwise datum `g`.
pub fn facet_load(n_nodes: usize, facets: &[Facet], weight: f64, g: impl Fn(&Facet, [f64; 2]) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; n_nodes];
    if weight == 0.0 {
        return out;
    }
    for f in facets {
        for (p, w, n) in facet_gauss(f) {
            let v = weight * w * g(f, p);
            out[f.nodes[0]] += v * n[0];
            out[f.nodes[1]] += v * n[1];
        }
    }
    out
}

/// `∫ f φ` with `f` evaluated at Gauss points (2x2 per element).
pub fn volume_load(mesh: &QuadMesh, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let h = mesh.h;
    let mut out = vec![0.0; mesh.n_nodes()];
    for e in &mesh.elements {
        let o = mesh.coords[e.nodes[0]];
        for q in 0..4 {
            let (r, w) = q1::GAUSS[q];
            let v = f([o[0] + r[0] * h, o[1] + r[1] * h]) * w * h * h;
            let n = q1::SHAPE_AT_GAUSS[q];
            for a in 0..4 {
                out[e.nodes[a]] += v * n[a];
            }
        }
    }
    out
}

/// `∫ (∇w · G) φ` where `w` and the vector field `G` are both nodal Q1
/// fields, integrated with the 2x2 Gauss rule.
pub fn gradient_dot_load(mesh: &QuadMesh, w: &[f64], g: &[[f64; 2]]) -> Vec<f64> {
    let h = mesh.h;
    let mut out = vec![0.0; mesh.n_nodes()];
    for e in &mesh.elements {
        let vals = e.nodes.map(|n| w[n]);
        let gv = e.nodes.map(|n| g[n]);
        for q in 0..4 {
            let grad = q1::grad_at_gauss(vals, q, h);
            let n = q1::SHAPE_AT_GAUSS[q];
            let mut gq = [0.0; 2];
            for a in 0..4 {
                gq[0] += n[a] * gv[a][0];
                gq[1] += n[a] * gv[a][1];
            }
            let v = q1::GAUSS[q].1 * h * h * (grad[0] * gq[0] + grad[1] * gq[1]);
            for a in 0..4 {
                out[e.nodes[a]] += v * n[a];
            }
        }
    }
    out
}

/// `(∫ ∂₁φ_a, ∫ ∂₂φ_a)` for every node.
pub fn gradient_moments(mesh: &QuadMesh) -> [Vec<f64>; 2] {
    let h = mesh.h;
    let mut out = [vec![0.0; mesh.n_nodes()], vec![0.0; mesh.n_nodes()]];
    for e in &mesh.elements {
        for q in 0..4 {
            let w = q1::GAUSS[q].1;
            let g = q1::GRAD_AT_GAUSS[q];
            for a in 0..4 {
                out[0][e.nodes[a]] += w * g[a][0] * h;
                out[1][e.nodes[a]] += w * g[a][1] * h;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_element_mass_scales_with_area() {
        let h = 0.25;
        let mesh = QuadMesh::rectangle([1, 1], h);
        let m = assemble_mass(&mesh);
        assert!((m.get(0, 0) - h * h / 9.0).abs() < 1e-16);
        assert!((m.entry_sum() - h * h).abs() < 1e-15);
    }

    #[test]
    fn diag_coefficient_energy_of_second_coordinate() {
        let mesh = QuadMesh::rectangle([4, 4], 0.25);
        let k = assemble_stiffness(&mesh, &CoefficientField::uniform([2.0, 0.0, 1.0]), 1.0).unwrap();
        let x2 = mesh.interpolate(|p| p[1]);
        assert!((k.quadratic_form(&x2) - 1.0).abs() < 1e-12);
        let x1 = mesh.interpolate(|p| p[0]);
        assert!((k.quadratic_form(&x1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn indefinite_coefficient_rejected() {
        let mesh = QuadMesh::rectangle([1, 1], 1.0);
        let err = assemble_stiffness(&mesh, &CoefficientField::uniform([1.0, 2.0, 1.0]), 1.0);
        assert!(matches!(err, Err(Error::Assembly(_))));
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        assert_eq!(eigenvalues([2.0, 0.0, 3.0]), (2.0, 3.0));
    }
}
