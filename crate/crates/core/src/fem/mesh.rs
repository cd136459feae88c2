//! Structured quadrilateral meshes.

/// One Q1 element: node ids in local counter-clockwise order.
#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    pub nodes: [usize; 4],
    /// Lattice position of the lower-left corner.
    pub cell: [usize; 2],
    /// Index of the micro cell in the `m x m` unit-cell lattice (coefficient lookup).
    pub micro_cell: usize,
}

/// A boundary edge between two mesh nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    pub nodes: [usize; 2],
    pub length: f64,
    /// Physical end points, in the order of `nodes`.
    pub ends: [[f64; 2]; 2],
    /// Index of the matching facet in the reference cell.
    pub micro_facet: usize,
    /// Index of the periodicity cell that owns the facet.
    pub cell: usize,
}

#[derive(Clone, Debug)]
pub struct QuadMesh {
    pub h: f64,
    pub coords: Vec<[f64; 2]>,
    pub elements: Vec<Element>,
}

impl QuadMesh {
    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    /// Total area covered by elements.
    pub fn area(&self) -> f64 {
        self.elements.len() as f64 * self.h * self.h
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.coords.iter().map(|&p| f(p)).collect()
    }

    /// Uniform Q1 mesh of `[0, n1 h] x [0, n2 h]`, nodes row-major.
    pub fn rectangle(n: [usize; 2], h: f64) -> QuadMesh {
        let nx = n[0] + 1;
        let coords = (0..=n[1])
            .flat_map(|j| (0..=n[0]).map(move |i| [i as f64 * h, j as f64 * h]))
            .collect();
        let mut elements = Vec::with_capacity(n[0] * n[1]);
        for j in 0..n[1] {
            for i in 0..n[0] {
                let a = j * nx + i;
                elements.push(Element {
                    nodes: [a, a + 1, a + nx + 1, a + nx],
                    cell: [i, j],
                    micro_cell: 0,
                });
            }
        }
        QuadMesh { h, coords, elements }
    }

    /// Plain-text listing of node ids and coordinates.
    pub fn debug_listing(&self) -> String {
        let mut s = String::new();
        for (k, p) in self.coords.iter().enumerate() {
            s.push_str(&format!("{k} {:.12} {:.12}\n", p[0], p[1]));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_counts() {
        let m = QuadMesh::rectangle([3, 2], 0.5);
        assert_eq!(m.n_nodes(), 12);
        assert_eq!(m.elements.len(), 6);
        assert_eq!(m.coords[11], [1.5, 1.0]);
        assert!((m.area() - 1.5).abs() < 1e-15);
    }
}
