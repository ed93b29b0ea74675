//! Structured triangulations of the unit square.

use crate::error::{PodError, Result};

/// Which parts of the boundary carry Dirichlet conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryLayout {
    /// Homogeneous Dirichlet data on the whole boundary.
    DirichletAll,
    /// Dirichlet on `{x = 1} ∪ {y = 1}` (Γ₁), homogeneous Neumann on the rest (Γ₂).
    BrusselatorMixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Gamma1,
    Gamma2,
    DirichletAll,
}

impl BoundaryTag {
    pub fn is_dirichlet(self) -> bool {
        matches!(self, Self::Gamma1 | Self::DirichletAll)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// Uniform `n × n` mesh with each square split along its southwest–northeast diagonal.
///
/// Nodes are numbered row by row: node `(i, j)` sits at `(i/n, j/n)` and has index `j (n+1) + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub n_subdiv: usize,
    pub layout: BoundaryLayout,
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
}

impl Mesh {
    pub fn uniform(n: usize, layout: BoundaryLayout) -> Result<Self> {
        if n == 0 {
            return Err(PodError::invalid("mesh needs at least one subdivision per side"));
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let h = 1.0 / n as f64;
        let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                // Exact endpoints so boundary detection never depends on rounding.
                let x = if i == n { 1.0 } else { i as f64 * h };
                let y = if j == n { 1.0 } else { j as f64 * h };
                nodes.push([x, y]);
            }
        }

        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let sw = id(i, j);
                let se = id(i + 1, j);
                let ne = id(i + 1, j + 1);
                let nw = id(i, j + 1);
                triangles.push([sw, se, ne]);
                triangles.push([sw, ne, nw]);
            }
        }

        let tag = |side_is_gamma1: bool| match layout {
            BoundaryLayout::DirichletAll => BoundaryTag::DirichletAll,
            BoundaryLayout::BrusselatorMixed if side_is_gamma1 => BoundaryTag::Gamma1,
            BoundaryLayout::BrusselatorMixed => BoundaryTag::Gamma2,
        };
        let mut boundary_edges = Vec::with_capacity(4 * n);
        for k in 0..n {
            // bottom y = 0, right x = 1, top y = 1, left x = 0
            boundary_edges.push(BoundaryEdge { nodes: [id(k, 0), id(k + 1, 0)], tag: tag(false) });
            boundary_edges.push(BoundaryEdge { nodes: [id(n, k), id(n, k + 1)], tag: tag(true) });
            boundary_edges.push(BoundaryEdge { nodes: [id(k + 1, n), id(k, n)], tag: tag(true) });
            boundary_edges.push(BoundaryEdge { nodes: [id(0, k + 1), id(0, k)], tag: tag(false) });
        }

        Ok(Self { n_subdiv: n, layout, nodes, triangles, boundary_edges })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].map(|k| self.nodes[k])
    }

    /// Longest edge over all triangles.
    pub fn diameter(&self) -> f64 {
        std::f64::consts::SQRT_2 / self.n_subdiv as f64
    }
}

pub fn signed_area(v: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_formula() {
        for (n, nodes, tris) in [(1, 4, 2), (2, 9, 8), (80, 6561, 12800)] {
            let m = Mesh::uniform(n, BoundaryLayout::DirichletAll).unwrap();
            assert_eq!(m.node_count(), nodes);
            assert_eq!(m.triangle_count(), tris);
            assert_eq!(m.boundary_edges.len(), 4 * n);
        }
    }

    #[test]
    fn zero_subdivisions_rejected() {
        assert!(matches!(Mesh::uniform(0, BoundaryLayout::DirichletAll), Err(PodError::InvalidArgument(_))));
    }

    #[test]
    fn triangles_positive_with_sw_ne_diagonal() {
        let m = Mesh::uniform(5, BoundaryLayout::BrusselatorMixed).unwrap();
        for t in 0..m.triangle_count() {
            let v = m.vertices(t);
            assert!(signed_area(&v) > 0.0);
            // The shared edge of each cell pair runs from its SW corner to its NE corner.
            let sw = v[0];
            assert!(v.iter().any(|p| (p[0] - sw[0] - 0.2).abs() < 1e-12 && (p[1] - sw[1] - 0.2).abs() < 1e-12));
        }
    }

    #[test]
    fn mixed_layout_tags_top_and_right_as_gamma1() {
        let m = Mesh::uniform(4, BoundaryLayout::BrusselatorMixed).unwrap();
        for e in &m.boundary_edges {
            let [a, b] = e.nodes.map(|k| m.nodes[k]);
            let on_gamma1 = (a[0] == 1.0 && b[0] == 1.0) || (a[1] == 1.0 && b[1] == 1.0);
            assert_eq!(e.tag == BoundaryTag::Gamma1, on_gamma1);
            assert!(matches!(e.tag, BoundaryTag::Gamma1 | BoundaryTag::Gamma2));
        }
        let all = Mesh::uniform(4, BoundaryLayout::DirichletAll).unwrap();
        assert!(all.boundary_edges.iter().all(|e| e.tag == BoundaryTag::DirichletAll));
    }
}
