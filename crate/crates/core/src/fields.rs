//! Discrete one-scale and two-scale fields.

use crate::geometry::CellGeometry;

/// Nodal values on a one-scale mesh (`Ω_ε` or the macro grid of `Ω`).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub values: Vec<f64>,
    pub time: f64,
}

impl ScalarField {
    pub fn new(values: Vec<f64>, time: f64) -> Self {
        Self { values, time }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Field on `Ω x Y*`: one micro slice per macro cell.
///
/// Macro cells form a uniform `cells[0] x cells[1]` grid of side `h`, and the
/// field is constant in `x` on each cell. Slices are indexed by the nodes of
/// the non-periodic micro mesh of `Y*`. Unfolded fields use the ε-cells as
/// macro cells (`h = ε`).
#[derive(Clone, Debug, PartialEq)]
pub struct TwoScaleField {
    pub cells: [usize; 2],
    pub h: f64,
    pub n_micro: usize,
    pub values: Vec<f64>,
    pub time: f64,
}

impl TwoScaleField {
    pub fn zeros(cells: [usize; 2], h: f64, n_micro: usize) -> Self {
        Self {
            cells,
            h,
            n_micro,
            values: vec![0.0; cells[0] * cells[1] * n_micro],
            time: 0.0,
        }
    }

    /// `f(cell centre, micro node coordinate)`.
    pub fn from_fn(cells: [usize; 2], h: f64, cell: &CellGeometry, f: impl Fn([f64; 2], [f64; 2]) -> f64) -> Self {
        let mut out = Self::zeros(cells, h, cell.n_micro());
        for c in 0..out.n_cells() {
            let x = out.cell_center(c);
            for (v, &y) in out.slice_mut(c).iter_mut().zip(&cell.mesh.coords) {
                *v = f(x, y);
            }
        }
        out
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, c: usize) -> &[f64] {
        &self.values[c * self.n_micro..(c + 1) * self.n_micro]
    }

    pub fn slice_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * self.n_micro..(c + 1) * self.n_micro]
    }

    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        [
            ((c % self.cells[0]) as f64 + 0.5) * self.h,
            ((c / self.cells[0]) as f64 + 0.5) * self.h,
        ]
    }

    pub fn cell_origin(&self, c: usize) -> [f64; 2] {
        [(c % self.cells[0]) as f64 * self.h, (c / self.cells[0]) as f64 * self.h]
    }

    /// Split every cell into `k x k` sub-cells carrying the same slice.
    pub fn refine(&self, k: usize) -> TwoScaleField {
        let cells = [self.cells[0] * k, self.cells[1] * k];
        let mut out = Self::zeros(cells, self.h / k as f64, self.n_micro);
        out.time = self.time;
        for c in 0..out.n_cells() {
            let (i, j) = (c % cells[0], c / cells[0]);
            let parent = (j / k) * self.cells[0] + i / k;
            out.slice_mut(c).copy_from_slice(self.slice(parent));
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TwoScaleField {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn zip_with(&self, other: &TwoScaleField, f: impl Fn(f64, f64) -> f64) -> TwoScaleField {
        assert_eq!(self.cells, other.cells, "two-scale layouts differ");
        assert_eq!(self.n_micro, other.n_micro, "two-scale layouts differ");
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v = f(*v, *w);
        }
        out
    }

    pub fn sub(&self, other: &TwoScaleField) -> TwoScaleField {
        self.zip_with(other, |a, b| a - b)
    }

    /// `∫∫_{Ω x Y*} U dx dy`.
    pub fn integral(&self, cell: &CellGeometry) -> f64 {
        let ones = vec![1.0; self.n_micro];
        let w = self.h * self.h;
        (0..self.n_cells())
            .map(|c| w * cell.mass.bilinear(&ones, self.slice(c)))
            .sum()
    }

    /// `‖U‖_{L²(Ω x Y*)}`.
    pub fn l2_norm(&self, cell: &CellGeometry) -> f64 {
        let w = self.h * self.h;
        (0..self.n_cells())
            .map(|c| w * cell.mass.quadratic_form(self.slice(c)))
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }

    /// `‖∇_y U‖_{L²(Ω x Y*)}`.
    pub fn grad_y_norm(&self, cell: &CellGeometry) -> f64 {
        let w = self.h * self.h;
        (0..self.n_cells())
            .map(|c| w * cell.stiffness.quadratic_form(self.slice(c)))
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }

    /// `‖U‖_{L²(Ω;H¹(Y*))}` written as `‖U‖ + ‖∇_y U‖`.
    pub fn h1y_norm(&self, cell: &CellGeometry) -> f64 {
        self.l2_norm(cell) + self.grad_y_norm(cell)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Field on `Ω x ∂T`: one slice per macro cell, indexed by the hole nodes
/// of the reference cell (`CellGeometry::hole_nodes`).
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryField {
    pub cells: [usize; 2],
    pub h: f64,
    pub n_nodes: usize,
    pub values: Vec<f64>,
}

impl BoundaryField {
    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn slice(&self, c: usize) -> &[f64] {
        &self.values[c * self.n_nodes..(c + 1) * self.n_nodes]
    }

    pub fn zip_with(&self, other: &BoundaryField, f: impl Fn(f64, f64) -> f64) -> BoundaryField {
        assert_eq!(self.values.len(), other.values.len(), "boundary layouts differ");
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v = f(*v, *w);
        }
        out
    }

    fn local_facets(cell: &CellGeometry) -> Vec<([usize; 2], f64)> {
        let pos = |n: usize| cell.hole_nodes.binary_search(&n).expect("hole node");
        cell.hole_facets
            .iter()
            .map(|f| ([pos(f.nodes[0]), pos(f.nodes[1])], f.length))
            .collect()
    }

    /// `∫∫_{Ω x ∂T} U dx dσ(y)` with linear traces on facets.
    pub fn integral(&self, cell: &CellGeometry) -> f64 {
        let facets = Self::local_facets(cell);
        let w = self.h * self.h;
        let mut s = 0.0;
        for c in 0..self.n_cells() {
            let v = self.slice(c);
            for &([a, b], l) in &facets {
                s += w * 0.5 * l * (v[a] + v[b]);
            }
        }
        s
    }

    /// `‖U‖_{L²(Ω x ∂T)}`.
    pub fn l2_norm(&self, cell: &CellGeometry) -> f64 {
        let facets = Self::local_facets(cell);
        let w = self.h * self.h;
        let mut s = 0.0;
        for c in 0..self.n_cells() {
            let v = self.slice(c);
            for &([a, b], l) in &facets {
                s += w * l * (v[a] * v[a] + v[a] * v[b] + v[b] * v[b]) / 3.0;
            }
        }
        s.sqrt()
    }
}
