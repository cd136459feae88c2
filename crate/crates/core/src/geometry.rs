//! Unit cell, perforated reference cell and the ε-periodic perforated domain
//! on axis-aligned structured grids.
//!
//! The reference cell `Y = [0,1)²` carries an `m x m` lattice of micro cells.
//! A hole is an axis-aligned box whose faces lie on lattice lines, so the
//! perforated cell `Y*` and every ε-copy of it are resolved exactly. The grid
//! of `Ω_ε` has spacing `ε/m`; node `(I, J)` sits at `(I, J) / (n m)` with
//! `ε = 1/n`, computed from integers so every ε-copy of a micro node has
//! bit-identical coordinates.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_mass, assemble_robin_boundary, assemble_stiffness, gradient_moments};
use crate::fem::{CoefficientField, CsrMatrix, Element, Facet, QuadMesh};

const ALIGN_TOL: f64 = 1e-9;

/// `diam(Y)` for the unit square.
pub const DIAM_Y: f64 = std::f64::consts::SQRT_2;

/// Hole description as given by the user, in unit-cell coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HoleSpec {
    /// `"none"`
    None(NoHole),
    /// `[lo, hi]`, the same interval on every axis.
    Cube([f64; 2]),
    /// Separate bounds per axis.
    Box { lo: [f64; 2], hi: [f64; 2] },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoHole {
    None,
}

impl HoleSpec {
    pub fn none() -> Self {
        HoleSpec::None(NoHole::None)
    }

    pub fn cube(lo: f64, hi: f64) -> Self {
        HoleSpec::Cube([lo, hi])
    }

    fn bounds(&self) -> Option<([f64; 2], [f64; 2])> {
        match *self {
            HoleSpec::None(_) => None,
            HoleSpec::Cube([lo, hi]) => Some(([lo, lo], [hi, hi])),
            HoleSpec::Box { lo, hi } => Some((lo, hi)),
        }
    }
}

/// Hole as a half-open range of micro cells per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HoleBox {
    pub lo: [usize; 2],
    pub hi: [usize; 2],
}

impl HoleBox {
    pub fn contains_cell(&self, i: usize, j: usize) -> bool {
        (self.lo[0]..self.hi[0]).contains(&i) && (self.lo[1]..self.hi[1]).contains(&j)
    }
}

fn align(value: f64, m: usize) -> Result<usize> {
    let s = value * m as f64;
    let r = s.round();
    if (s - r).abs() > ALIGN_TOL * m as f64 || r < 0.0 {
        return Err(Error::Alignment { value, m });
    }
    Ok(r as usize)
}

/// Validated unit cell with its perforated micro mesh and cached matrices.
#[derive(Clone, Debug)]
pub struct CellGeometry {
    pub dim: usize,
    pub hole_spec: HoleSpec,
    pub m: usize,
    pub hole: Option<HoleBox>,
    /// `m x m` micro cells, row-major; `true` for cells of `Y*`.
    pub active: Vec<bool>,
    /// Non-periodic mesh of `Y*` (faces of `Y` carry separate nodes).
    pub mesh: QuadMesh,
    /// Lattice index `j (m+1) + i` to mesh node.
    pub lattice_to_node: Vec<Option<usize>>,
    pub node_lattice: Vec<[usize; 2]>,
    /// Mesh of `Y*` with opposite faces identified.
    pub periodic: QuadMesh,
    /// Non-periodic node to periodic node.
    pub to_periodic: Vec<usize>,
    /// Facets of `∂T` in non-periodic numbering.
    pub hole_facets: Vec<Facet>,
    /// Facets of `∂T` in periodic numbering.
    pub hole_facets_periodic: Vec<Facet>,
    /// Sorted non-periodic nodes on `∂T`.
    pub hole_nodes: Vec<usize>,
    pub volume: f64,
    pub perimeter: f64,
    /// `∫_{Y*} φ_a φ_b`
    pub mass: CsrMatrix,
    /// `∫_{Y*} ∇φ_a·∇φ_b`
    pub stiffness: CsrMatrix,
    /// `∫_{∂T} φ_a φ_b`
    pub boundary_mass: CsrMatrix,
    /// `∫_{Y*} ∂_i φ_a`
    pub grad_moments: [Vec<f64>; 2],
}

impl CellGeometry {
    pub fn new(dim: usize, hole_spec: HoleSpec, m: usize) -> Result<Self> {
        if dim != 2 {
            return Err(Error::Geometry(format!("only d = 2 is supported, got d = {dim}")));
        }
        if m < 2 {
            return Err(Error::Geometry(format!("micro resolution must be at least 2, got {m}")));
        }
        let hole = match hole_spec.bounds() {
            None => None,
            Some((lo, hi)) => {
                let b = HoleBox {
                    lo: [align(lo[0], m)?, align(lo[1], m)?],
                    hi: [align(hi[0], m)?, align(hi[1], m)?],
                };
                for a in 0..2 {
                    if b.lo[a] >= b.hi[a] {
                        return Err(Error::Geometry(format!("empty hole along axis {a}: {lo:?}..{hi:?}")));
                    }
                    if b.lo[a] == 0 || b.hi[a] >= m {
                        return Err(Error::Geometry(format!(
                            "hole {lo:?}..{hi:?} touches the cell boundary; holes must lie strictly inside Y"
                        )));
                    }
                }
                Some(b)
            }
        };
        let active: Vec<bool> = (0..m * m)
            .map(|k| !hole.is_some_and(|b| b.contains_cell(k % m, k / m)))
            .collect();
        if !cells_connected(&active, m) {
            return Err(Error::Geometry("perforated cell is not connected".into()));
        }

        let h = 1.0 / m as f64;
        let nl = m + 1;
        let mut lattice_to_node = vec![None; nl * nl];
        let mut node_lattice = Vec::new();
        let mut coords = Vec::new();
        for j in 0..nl {
            for i in 0..nl {
                if node_touches_active(&active, m, m, i, j, |c, r| r * m + c) {
                    lattice_to_node[j * nl + i] = Some(coords.len());
                    node_lattice.push([i, j]);
                    coords.push([i as f64 * h, j as f64 * h]);
                }
            }
        }
        let node = |i: usize, j: usize| lattice_to_node[j * nl + i].expect("active corner");
        let mut elements = Vec::new();
        for j in 0..m {
            for i in 0..m {
                if active[j * m + i] {
                    elements.push(Element {
                        nodes: [node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)],
                        cell: [i, j],
                        micro_cell: j * m + i,
                    });
                }
            }
        }
        let mesh = QuadMesh { h, coords, elements };

        // Periodic identification: lattice index modulo m.
        let mut periodic_id = vec![usize::MAX; m * m];
        let mut pcoords = Vec::new();
        for &[i, j] in &node_lattice {
            let (pi, pj) = (i % m, j % m);
            if periodic_id[pj * m + pi] == usize::MAX {
                periodic_id[pj * m + pi] = pcoords.len();
                pcoords.push(mesh.coords[lattice_to_node[pj * nl + pi].expect("wrapped node active")]);
            }
        }
        let to_periodic: Vec<usize> = node_lattice
            .iter()
            .map(|&[i, j]| periodic_id[(j % m) * m + i % m])
            .collect();
        let periodic = QuadMesh {
            h,
            coords: pcoords,
            elements: mesh
                .elements
                .iter()
                .map(|e| Element {
                    nodes: e.nodes.map(|n| to_periodic[n]),
                    ..e.clone()
                })
                .collect(),
        };

        let hole_facets = enumerate_pore_facets(&active, m, m, h, [0.0, 0.0], |c, r| r * m + c, node, |_, _| 0);
        let hole_facets_periodic: Vec<Facet> = hole_facets
            .iter()
            .map(|f| Facet {
                nodes: f.nodes.map(|n| to_periodic[n]),
                ..f.clone()
            })
            .collect();
        let mut hole_nodes: Vec<usize> = hole_facets.iter().flat_map(|f| f.nodes).collect();
        hole_nodes.sort_unstable();
        hole_nodes.dedup();

        let volume = mesh.elements.len() as f64 * h * h;
        let perimeter = hole_facets.iter().map(|f| f.length).sum();
        let mass = assemble_mass(&mesh);
        let stiffness = assemble_stiffness(&mesh, &CoefficientField::identity(), 1.0)?;
        let boundary_mass = assemble_robin_boundary(mesh.n_nodes(), &hole_facets, 1.0);
        let grad_moments = gradient_moments(&mesh);
        Ok(Self {
            dim,
            hole_spec,
            m,
            hole,
            active,
            mesh,
            lattice_to_node,
            node_lattice,
            periodic,
            to_periodic,
            hole_facets,
            hole_facets_periodic,
            hole_nodes,
            volume,
            perimeter,
            mass,
            stiffness,
            boundary_mass,
            grad_moments,
        })
    }

    pub fn n_micro(&self) -> usize {
        self.mesh.n_nodes()
    }

    /// `|∂T| / |Y*|`
    pub fn surface_ratio(&self) -> f64 {
        self.perimeter / self.volume
    }

    /// Lift a periodic nodal field to the non-periodic micro mesh.
    pub fn lift_periodic(&self, v: &[f64]) -> Vec<f64> {
        self.to_periodic.iter().map(|&p| v[p]).collect()
    }
}

/// 4-connectivity flood fill over active cells.
fn cells_connected(active: &[bool], m: usize) -> bool {
    let Some(start) = active.iter().position(|&a| a) else {
        return false;
    };
    let mut seen = vec![false; active.len()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 0;
    while let Some(k) = stack.pop() {
        count += 1;
        let (i, j) = (k % m, k / m);
        let mut push = |ii: usize, jj: usize| {
            let kk = jj * m + ii;
            if active[kk] && !seen[kk] {
                seen[kk] = true;
                stack.push(kk);
            }
        };
        if i > 0 {
            push(i - 1, j);
        }
        if i + 1 < m {
            push(i + 1, j);
        }
        if j > 0 {
            push(i, j - 1);
        }
        if j + 1 < m {
            push(i, j + 1);
        }
    }
    count == active.iter().filter(|&&a| a).count()
}

/// Whether lattice node `(i, j)` is a corner of an active cell in an
/// `nx x ny` cell lattice.
fn node_touches_active(
    active: &[bool],
    nx: usize,
    ny: usize,
    i: usize,
    j: usize,
    cell_index: impl Fn(usize, usize) -> usize,
) -> bool {
    let is_active = |c: usize, r: usize| active[cell_index(c, r)];
    let cols = [i.checked_sub(1), (i < nx).then_some(i)];
    let rows = [j.checked_sub(1), (j < ny).then_some(j)];
    cols.iter()
        .flatten()
        .any(|&c| rows.iter().flatten().any(|&r| is_active(c, r)))
}

/// Edges between an active and an inactive cell. Horizontal edges first
/// (row-major), then vertical edges.
#[allow(clippy::too_many_arguments)]
fn enumerate_pore_facets(
    active: &[bool],
    nx: usize,
    ny: usize,
    h: f64,
    origin: [f64; 2],
    cell_index: impl Fn(usize, usize) -> usize,
    node: impl Fn(usize, usize) -> usize,
    owner: impl Fn(usize, usize) -> usize,
) -> Vec<Facet> {
    let is_active = |c: usize, r: usize| active[cell_index(c, r)];
    let mut out = Vec::new();
    let pt = |i: usize, j: usize| [origin[0] + i as f64 * h, origin[1] + j as f64 * h];
    // Horizontal edge (i, j) runs from node (i, j) to (i+1, j), between cells (i, j-1) and (i, j).
    for j in 1..ny {
        for i in 0..nx {
            let below = is_active(i, j - 1);
            let above = is_active(i, j);
            if below != above {
                let inactive_row = if below { j } else { j - 1 };
                out.push(Facet {
                    nodes: [node(i, j), node(i + 1, j)],
                    length: h,
                    ends: [pt(i, j), pt(i + 1, j)],
                    micro_facet: 0,
                    cell: owner(i, inactive_row),
                });
            }
        }
    }
    for j in 0..ny {
        for i in 1..nx {
            let left = is_active(i - 1, j);
            let right = is_active(i, j);
            if left != right {
                let inactive_col = if left { i } else { i - 1 };
                out.push(Facet {
                    nodes: [node(i, j), node(i, j + 1)],
                    length: h,
                    ends: [pt(i, j), pt(i, j + 1)],
                    micro_facet: 0,
                    cell: owner(inactive_col, j),
                });
            }
        }
    }
    for (k, f) in out.iter_mut().enumerate() {
        f.micro_facet = k;
    }
    out
}

/// `ε = 1/n` with integer `n ≥ 2`. Serialized as the string `"1/n"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Epsilon {
    n: usize,
}

impl Epsilon {
    pub fn inverse(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter(format!("epsilon must be 1/n with n >= 2, got 1/{n}")));
        }
        Ok(Self { n })
    }

    /// Accepts values whose reciprocal is an integer to within 1e-9.
    pub fn from_value(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Parameter(format!("epsilon must be positive, got {eps}")));
        }
        let inv = 1.0 / eps;
        let n = inv.round();
        if (inv - n).abs() > 1e-9 * inv {
            return Err(Error::Parameter(format!("1/epsilon must be an integer, got 1/{inv}")));
        }
        Self::inverse(n as usize)
    }

    pub fn n(self) -> usize {
        self.n
    }

    pub fn value(self) -> f64 {
        1.0 / self.n as f64
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "1/{}", self.n)
    }
}

impl FromStr for Epsilon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("1/") {
            let n: usize = rest
                .trim()
                .parse()
                .map_err(|_| Error::Parameter(format!("1/epsilon must be an integer, got `{s}`")))?;
            return Self::inverse(n);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::Parameter(format!("cannot read epsilon from `{s}`")))?;
        Self::from_value(v)
    }
}

impl Serialize for Epsilon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            S(String),
            F(f64),
        }
        match Raw::deserialize(d)? {
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::F(v) => Epsilon::from_value(v).map_err(serde::de::Error::custom),
        }
    }
}

/// The perforated domain `Ω_ε` for `Ω = [0, l₁) x [0, l₂)`.
#[derive(Clone, Debug)]
pub struct PerforatedGrid {
    pub cell: Arc<CellGeometry>,
    pub epsilon: Epsilon,
    pub lengths: [usize; 2],
    /// Number of ε-cells per axis.
    pub cells: [usize; 2],
    /// Number of lattice intervals per axis (`cells · m`).
    pub lattice: [usize; 2],
    pub mesh: QuadMesh,
    /// Lattice index `J (N₁+1) + I` to active node, `usize::MAX` if inactive.
    pub lattice_to_node: Vec<usize>,
    pub node_lattice: Vec<[usize; 2]>,
    /// Facets on `∂T_ε`, owned by the ε-cell in `Facet::cell`.
    pub pore_facets: Vec<Facet>,
    /// Facets on `∂Ω`.
    pub exterior_facets: Vec<Facet>,
    /// Sorted nodes on `∂T_ε`.
    pub pore_nodes: Vec<usize>,
    /// `unfold[ξ · n_micro + k]` is the node at `ε(ξ + y_k)`.
    pub unfold: Vec<usize>,
    /// `pore_unfold[ξ · n_hole_facets + f]` is the pore facet matching micro facet `f` in cell `ξ`.
    pub pore_unfold: Vec<usize>,
}

impl PerforatedGrid {
    pub fn new(cell: Arc<CellGeometry>, epsilon: Epsilon, lengths: [usize; 2]) -> Result<Self> {
        if lengths.contains(&0) {
            return Err(Error::Parameter(format!(
                "domain lengths must be positive integers, got {lengths:?}"
            )));
        }
        let m = cell.m;
        let n = epsilon.n();
        let cells = [n * lengths[0], n * lengths[1]];
        let lattice = [cells[0] * m, cells[1] * m];
        let denom = (n * m) as f64;
        let nx = lattice[0] + 1;
        let micro_active = |c: usize, r: usize| (r % m) * m + c % m;
        let active_global: Vec<bool> = (0..lattice[0] * lattice[1])
            .map(|k| cell.active[micro_active(k % lattice[0], k / lattice[0])])
            .collect();
        let gcell = |c: usize, r: usize| r * lattice[0] + c;

        let mut lattice_to_node = vec![usize::MAX; nx * (lattice[1] + 1)];
        let mut node_lattice = Vec::new();
        let mut coords = Vec::new();
        for j in 0..=lattice[1] {
            for i in 0..=lattice[0] {
                if node_touches_active(&active_global, lattice[0], lattice[1], i, j, gcell) {
                    lattice_to_node[j * nx + i] = coords.len();
                    node_lattice.push([i, j]);
                    coords.push([i as f64 / denom, j as f64 / denom]);
                }
            }
        }
        let node = |i: usize, j: usize| lattice_to_node[j * nx + i];
        let mut elements = Vec::with_capacity(cells[0] * cells[1] * cell.mesh.elements.len());
        for j in 0..lattice[1] {
            for i in 0..lattice[0] {
                if active_global[gcell(i, j)] {
                    elements.push(Element {
                        nodes: [node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)],
                        cell: [i, j],
                        micro_cell: micro_active(i, j),
                    });
                }
            }
        }
        let h = 1.0 / denom;
        let mesh = QuadMesh { h, coords, elements };

        let owner = |c: usize, r: usize| (r / m) * cells[0] + c / m;
        let mut pore_facets = enumerate_pore_facets(
            &active_global,
            lattice[0],
            lattice[1],
            h,
            [0.0, 0.0],
            gcell,
            node,
            owner,
        );
        // Match each pore facet with its reference facet.
        let nf = cell.hole_facets.len();
        let mut pore_unfold = vec![usize::MAX; cells[0] * cells[1] * nf];
        {
            let mut lookup = std::collections::HashMap::new();
            for (k, f) in cell.hole_facets.iter().enumerate() {
                let a = cell.node_lattice[f.nodes[0]];
                let b = cell.node_lattice[f.nodes[1]];
                lookup.insert((a, b), k);
            }
            for (g, f) in pore_facets.iter_mut().enumerate() {
                let [i0, j0] = node_lattice[f.nodes[0]];
                let [i1, j1] = node_lattice[f.nodes[1]];
                let xi = [f.cell % cells[0], f.cell / cells[0]];
                let base = [xi[0] * m, xi[1] * m];
                let key = ([i0 - base[0], j0 - base[1]], [i1 - base[0], j1 - base[1]]);
                let k = *lookup
                    .get(&key)
                    .ok_or_else(|| Error::Geometry("pore facet without reference facet".into()))?;
                f.micro_facet = k;
                pore_unfold[f.cell * nf + k] = g;
            }
        }
        if pore_unfold.contains(&usize::MAX) {
            return Err(Error::Geometry("incomplete boundary unfolding map".into()));
        }
        let mut pore_nodes: Vec<usize> = pore_facets.iter().flat_map(|f| f.nodes).collect();
        pore_nodes.sort_unstable();
        pore_nodes.dedup();

        let mut exterior_facets = Vec::new();
        let pt = |i: usize, j: usize| [i as f64 / denom, j as f64 / denom];
        let mut push_ext = |a: [usize; 2], b: [usize; 2], c: [usize; 2]| {
            exterior_facets.push(Facet {
                nodes: [node(a[0], a[1]), node(b[0], b[1])],
                length: h,
                ends: [pt(a[0], a[1]), pt(b[0], b[1])],
                micro_facet: usize::MAX,
                cell: owner(c[0], c[1]),
            });
        };
        for i in 0..lattice[0] {
            push_ext([i, 0], [i + 1, 0], [i, 0]);
            push_ext([i, lattice[1]], [i + 1, lattice[1]], [i, lattice[1] - 1]);
        }
        for j in 0..lattice[1] {
            push_ext([0, j], [0, j + 1], [0, j]);
            push_ext([lattice[0], j], [lattice[0], j + 1], [lattice[0] - 1, j]);
        }

        let nm = cell.n_micro();
        let mut unfold = Vec::with_capacity(cells[0] * cells[1] * nm);
        for x2 in 0..cells[1] {
            for x1 in 0..cells[0] {
                for &[i, j] in &cell.node_lattice {
                    let g = node(x1 * m + i, x2 * m + j);
                    debug_assert_ne!(g, usize::MAX);
                    unfold.push(g);
                }
            }
        }

        Ok(Self {
            cell,
            epsilon,
            lengths,
            cells,
            lattice,
            mesh,
            lattice_to_node,
            node_lattice,
            pore_facets,
            exterior_facets,
            pore_nodes,
            unfold,
            pore_unfold,
        })
    }

    pub fn eps(&self) -> f64 {
        self.epsilon.value()
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn domain_area(&self) -> f64 {
        (self.lengths[0] * self.lengths[1]) as f64
    }

    /// `|Ω_ε|` by cell summation.
    pub fn perforated_area(&self) -> f64 {
        self.mesh.area()
    }

    /// `|T_ε|` by cell summation.
    pub fn hole_area(&self) -> f64 {
        let inactive = self.lattice[0] * self.lattice[1] - self.mesh.elements.len();
        inactive as f64 * self.mesh.h * self.mesh.h
    }

    pub fn pore_perimeter(&self) -> f64 {
        self.pore_facets.iter().map(|f| f.length).sum()
    }

    /// Lower-left corner `εξ` of ε-cell `ξ`.
    pub fn cell_origin(&self, xi: usize) -> [f64; 2] {
        let e = self.eps();
        [(xi % self.cells[0]) as f64 * e, (xi / self.cells[0]) as f64 * e]
    }

    /// Plain-text listing: lattice id, coordinates, active flag, node id.
    pub fn debug_listing(&self) -> String {
        let nx = self.lattice[0] + 1;
        let denom = (self.epsilon.n() * self.cell.m) as f64;
        let mut s = String::new();
        for (k, &id) in self.lattice_to_node.iter().enumerate() {
            let (i, j) = (k % nx, k / nx);
            let active = id != usize::MAX;
            let id = if active { id as i64 } else { -1 };
            s.push_str(&format!(
                "{k} {:.12} {:.12} {} {id}\n",
                i as f64 / denom,
                j as f64 / denom,
                u8::from(active)
            ));
        }
        s
    }
}

/// Uniform macro grid of `Ω` with `cells` intervals per axis, used by the
/// limit problem. Spacing is `lengths[a] / cells[a]`, equal on both axes.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroGrid {
    pub cells: [usize; 2],
    pub lengths: [usize; 2],
    pub h: f64,
}

impl MacroGrid {
    pub fn new(cells_per_unit: usize, lengths: [usize; 2]) -> Result<Self> {
        if cells_per_unit == 0 {
            return Err(Error::Parameter("macro grid needs at least one cell per unit".into()));
        }
        Ok(Self {
            cells: [cells_per_unit * lengths[0], cells_per_unit * lengths[1]],
            lengths,
            h: 1.0 / cells_per_unit as f64,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn cells_per_unit(&self) -> usize {
        self.cells[0] / self.lengths[0]
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

    /// Q1 mesh of the macro grid, nodes row-major.
    pub fn mesh(&self) -> QuadMesh {
        QuadMesh::rectangle(self.cells, self.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hole_cell(m: usize) -> Arc<CellGeometry> {
        Arc::new(CellGeometry::new(2, HoleSpec::cube(1.0 / 3.0, 2.0 / 3.0), m).unwrap())
    }

    #[test]
    fn perforated_volume_and_perimeter() {
        let c = hole_cell(12);
        assert!((c.volume - 8.0 / 9.0).abs() < 1e-14);
        assert!((c.perimeter - 4.0 / 3.0).abs() < 1e-14);
        assert_eq!(c.hole_facets.len(), 16);
        let free = CellGeometry::new(2, HoleSpec::none(), 8).unwrap();
        assert_eq!(free.volume, 1.0);
        assert!(free.hole_facets.is_empty());
    }

    #[test]
    fn boundary_hole_rejected() {
        let err = CellGeometry::new(2, HoleSpec::cube(0.0, 0.5), 8).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
        let err = CellGeometry::new(2, HoleSpec::cube(0.3, 0.6), 8).unwrap_err();
        assert!(matches!(err, Error::Alignment { .. }));
    }

    #[test]
    fn periodic_mesh_identifies_faces() {
        let c = hole_cell(6);
        // (m+1)² − 1 interior hole node, then 2m+1 nodes folded onto m.
        assert_eq!(c.n_micro(), 49 - 1);
        assert_eq!(c.periodic.n_nodes(), 36 - 1);
        let corner = c.lattice_to_node[6 * 7 + 6].unwrap();
        assert_eq!(c.to_periodic[corner], c.to_periodic[0]);
    }

    #[test]
    fn grid_tiles_cells() {
        let g = PerforatedGrid::new(hole_cell(12), Epsilon::inverse(4).unwrap(), [1, 1]).unwrap();
        assert_eq!(g.n_cells(), 16);
        assert!((g.perforated_area() - 8.0 / 9.0).abs() < 1e-12);
        assert!((g.perforated_area() + g.hole_area() - 1.0).abs() < 1e-12);
        assert!((g.pore_perimeter() - 16.0 / 3.0).abs() < 1e-12);
        assert_eq!(g.pore_facets.len(), 16 * 16);
        assert_eq!(g.exterior_facets.len(), 4 * 48);
    }

    #[test]
    fn unfolded_coordinates_are_exact() {
        let g = PerforatedGrid::new(hole_cell(6), Epsilon::inverse(3).unwrap(), [1, 1]).unwrap();
        let nm = g.cell.n_micro();
        for xi in 0..g.n_cells() {
            let x = [xi % 3, xi / 3];
            for (k, &[i, j]) in g.cell.node_lattice.iter().enumerate() {
                let p = g.mesh.coords[g.unfold[xi * nm + k]];
                let expect = [(x[0] * 6 + i) as f64 / 18.0, (x[1] * 6 + j) as f64 / 18.0];
                assert_eq!(p, expect);
            }
        }
    }

    #[test]
    fn epsilon_parsing() {
        assert_eq!("1/8".parse::<Epsilon>().unwrap().n(), 8);
        assert_eq!("0.25".parse::<Epsilon>().unwrap().n(), 4);
        assert!("0.3".parse::<Epsilon>().is_err());
        assert!("1/1".parse::<Epsilon>().is_err());
        assert_eq!(Epsilon::inverse(16).unwrap().to_string(), "1/16");
    }
}
