//! P1 finite-element spaces, operator assembly and quadrature-based load vectors.
//!
//! Constrained (Dirichlet) dofs are eliminated: every vector and matrix here lives on
//! the free dofs only. Systems with several components interleave them per node, so
//! free node `i`, component `c` is entry `i * n_components + c`.

use crate::error::{PodError, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::{signed_area, Mesh};

/// Degree-5, 7-point Dunavant rule on the reference triangle: barycentric coordinates and weights
/// (weights sum to one and are scaled by the triangle area).
const QUAD_POINTS: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_770;
    const B1: f64 = 0.470_142_064_105_115;
    const A2: f64 = 0.797_426_985_353_087;
    const B2: f64 = 0.101_286_507_323_456;
    const W0: f64 = 0.225;
    const W1: f64 = 0.132_394_152_788_506;
    const W2: f64 = 0.125_939_180_544_827;
    const C: f64 = 1.0 / 3.0;
    [
        ([C, C, C], W0),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

#[derive(Debug, Clone, PartialEq)]
pub struct FemSpace {
    pub mesh: Mesh,
    pub degree: u8,
    pub dof_coords: Vec<[f64; 2]>,
    /// Per mesh node; `true` where the dof is constrained.
    pub dirichlet_mask: Vec<bool>,
    pub h: f64,
    free_nodes: Vec<usize>,
    node_to_free: Vec<Option<usize>>,
}

impl FemSpace {
    pub fn new(mesh: Mesh, degree: u8) -> Result<Self> {
        if degree != 1 {
            return Err(PodError::invalid(format!("only P1 elements are available, got degree {degree}")));
        }
        let mut dirichlet_mask = vec![false; mesh.node_count()];
        for e in &mesh.boundary_edges {
            if e.tag.is_dirichlet() {
                for &k in &e.nodes {
                    dirichlet_mask[k] = true;
                }
            }
        }
        let mut node_to_free = vec![None; mesh.node_count()];
        let mut free_nodes = Vec::new();
        for (k, &fixed) in dirichlet_mask.iter().enumerate() {
            if !fixed {
                node_to_free[k] = Some(free_nodes.len());
                free_nodes.push(k);
            }
        }
        Ok(Self {
            h: mesh.diameter(),
            dof_coords: mesh.nodes.clone(),
            mesh,
            degree,
            dirichlet_mask,
            free_nodes,
            node_to_free,
        })
    }

    pub fn p1(mesh: Mesh) -> Self {
        Self::new(mesh, 1).expect("P1 is always available")
    }

    pub fn total_dofs(&self) -> usize {
        self.dof_coords.len()
    }

    pub fn free_dofs(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn constrained_dofs(&self) -> usize {
        self.total_dofs() - self.free_dofs()
    }

    /// Mesh node of each free dof.
    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn free_index(&self, node: usize) -> Option<usize> {
        self.node_to_free[node]
    }

    /// Nodal interpolant of `f` on the free dofs.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.free_nodes.iter().map(|&k| f(self.dof_coords[k][0], self.dof_coords[k][1])).collect()
    }

    /// Interleaved interpolant of a multi-component field.
    pub fn interpolate_components(&self, n_components: usize, f: impl Fn(f64, f64, &mut [f64])) -> Vec<f64> {
        let mut out = vec![0.0; self.free_dofs() * n_components];
        for (i, &k) in self.free_nodes.iter().enumerate() {
            let [x, y] = self.dof_coords[k];
            f(x, y, &mut out[i * n_components..(i + 1) * n_components]);
        }
        out
    }

    /// Expands free-dof values of one component to all mesh nodes (constrained nodes get 0).
    pub fn expand(&self, free_values: &[f64], n_components: usize, component: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.total_dofs()];
        for (i, &k) in self.free_nodes.iter().enumerate() {
            out[k] = free_values[i * n_components + component];
        }
        out
    }
}

/// Exact P1 element matrices of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMatrices {
    pub area: f64,
    pub stiffness: [[f64; 3]; 3],
    pub mass: [[f64; 3]; 3],
}

pub fn local_p1(v: &[[f64; 2]; 3]) -> Result<LocalMatrices> {
    let area = signed_area(v);
    let scale = (0..3)
        .map(|k| {
            let d = [v[(k + 1) % 3][0] - v[k][0], v[(k + 1) % 3][1] - v[k][1]];
            d[0] * d[0] + d[1] * d[1]
        })
        .fold(0.0, f64::max);
    if !(area > 1e-14 * scale) {
        return Err(PodError::AssemblyFailure(format!("degenerate triangle {v:?} (area {area:e})")));
    }
    // ∇λ_k = (y_{k+1} - y_{k+2}, x_{k+2} - x_{k+1}) / (2|T|)
    let grads: [[f64; 2]; 3] = std::array::from_fn(|k| {
        let a = v[(k + 1) % 3];
        let b = v[(k + 2) % 3];
        [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)]
    });
    let mut stiffness = [[0.0; 3]; 3];
    let mut mass = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            stiffness[i][j] = area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
            mass[i][j] = area / 12.0 * if i == j { 2.0 } else { 1.0 };
        }
    }
    Ok(LocalMatrices { area, stiffness, mass })
}

/// Mass (L² inner product) and stiffness (H¹₀ inner product) on the free dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledOperators {
    pub n_components: usize,
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
}

impl AssembledOperators {
    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    fn check(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.dim() {
            return Err(PodError::invalid(format!(
                "coefficient vector has length {}, operators act on {} dofs",
                c.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `√(cᵀ M c)`; for systems this is the combined norm `√(Σ ‖c_k‖₀²)`.
    pub fn l2_norm(&self, c: &[f64]) -> Result<f64> {
        self.check(c)?;
        Ok(self.mass.bilinear(c, c).max(0.0).sqrt())
    }

    /// `√(cᵀ A c)`
    pub fn h1_seminorm(&self, c: &[f64]) -> Result<f64> {
        self.check(c)?;
        Ok(self.stiffness.bilinear(c, c).max(0.0).sqrt())
    }

    /// H¹₀ inner product `(∇a, ∇b)`.
    pub fn h1_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.stiffness.bilinear(a, b)
    }

    /// L² norm of a single component of an interleaved vector.
    pub fn component_l2_norm(&self, c: &[f64], component: usize) -> Result<f64> {
        self.check(c)?;
        let masked = mask_component(c, self.n_components, component);
        Ok(self.mass.bilinear(&masked, &masked).max(0.0).sqrt())
    }

    pub fn component_h1_seminorm(&self, c: &[f64], component: usize) -> Result<f64> {
        self.check(c)?;
        let masked = mask_component(c, self.n_components, component);
        Ok(self.stiffness.bilinear(&masked, &masked).max(0.0).sqrt())
    }
}

fn mask_component(c: &[f64], n_components: usize, component: usize) -> Vec<f64> {
    c.iter().enumerate().map(|(i, &v)| if i % n_components == component { v } else { 0.0 }).collect()
}

/// Unconstrained mass and stiffness over all mesh nodes.
pub fn assemble_unconstrained(space: &FemSpace) -> Result<(CsrMatrix, CsrMatrix)> {
    let mesh = &space.mesh;
    let n = space.total_dofs();
    let mut mt = Vec::with_capacity(9 * mesh.triangle_count());
    let mut at = Vec::with_capacity(9 * mesh.triangle_count());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let local = local_p1(&mesh.vertices(t))?;
        for a in 0..3 {
            for b in 0..3 {
                mt.push((tri[a], tri[b], local.mass[a][b]));
                at.push((tri[a], tri[b], local.stiffness[a][b]));
            }
        }
    }
    Ok((CsrMatrix::from_triplets(n, n, &mt), CsrMatrix::from_triplets(n, n, &at)))
}

/// Assembles operators on the free dofs for a field with `n_components` components.
pub fn assemble_operators(space: &FemSpace, n_components: usize) -> Result<AssembledOperators> {
    if n_components == 0 {
        return Err(PodError::invalid("need at least one component"));
    }
    let mesh = &space.mesh;
    let n = space.free_dofs();
    let mut mt = Vec::with_capacity(9 * mesh.triangle_count());
    let mut at = Vec::with_capacity(9 * mesh.triangle_count());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let local = local_p1(&mesh.vertices(t))?;
        for a in 0..3 {
            let Some(fa) = space.free_index(tri[a]) else { continue };
            for b in 0..3 {
                let Some(fb) = space.free_index(tri[b]) else { continue };
                mt.push((fa, fb, local.mass[a][b]));
                at.push((fa, fb, local.stiffness[a][b]));
            }
        }
    }
    let mass = CsrMatrix::from_triplets(n, n, &mt).kron_identity(n_components);
    let stiffness = CsrMatrix::from_triplets(n, n, &at).kron_identity(n_components);
    Ok(AssembledOperators { n_components, mass, stiffness })
}

/// Upper limit on the number of coupled fields handled by [`FieldAssembler`].
pub const MAX_COMPONENTS: usize = 4;

#[derive(Debug, Clone)]
struct ElementData {
    area: f64,
    free: [Option<usize>; 3],
    points: [[f64; 2]; 7],
}

/// Quadrature-based assembly of nonlinear reaction terms, their Jacobians and source loads.
#[derive(Debug, Clone)]
pub struct FieldAssembler {
    n_components: usize,
    dim: usize,
    elements: Vec<ElementData>,
    jac_pattern: CsrMatrix,
    /// Storage index of entry `(free_a·nc + c, free_b·nc)` per element, `a`, `b`, `c`.
    jac_pos: Vec<usize>,
}

/// A pointwise reaction `R(u) ∈ ℝⁿ` with its Jacobian (row-major `n × n`).
pub trait PointwiseReaction {
    fn n_components(&self) -> usize;
    fn eval(&self, u: &[f64], out: &mut [f64]);
    fn jacobian(&self, u: &[f64], out: &mut [f64]);
}

impl FieldAssembler {
    pub fn new(space: &FemSpace, n_components: usize) -> Result<Self> {
        let mesh = &space.mesh;
        let nc = n_components;
        if nc == 0 || nc > MAX_COMPONENTS {
            return Err(PodError::invalid(format!("{nc} components, supported range is 1..={MAX_COMPONENTS}")));
        }
        let mut elements = Vec::with_capacity(mesh.triangle_count());
        let mut triplets = Vec::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let v = mesh.vertices(t);
            let local = local_p1(&v)?;
            let points = QUAD_POINTS.map(|(l, _)| {
                [l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0], l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1]]
            });
            let free = tri.map(|k| space.free_index(k));
            for fa in free.iter().flatten() {
                for fb in free.iter().flatten() {
                    for c in 0..nc {
                        for d in 0..nc {
                            triplets.push((fa * nc + c, fb * nc + d, 0.0));
                        }
                    }
                }
            }
            elements.push(ElementData { area: local.area, free, points });
        }
        let dim = space.free_dofs() * nc;
        let jac_pattern = CsrMatrix::from_triplets(dim, dim, &triplets);
        let mut jac_pos = vec![usize::MAX; elements.len() * 9 * nc];
        for (e, el) in elements.iter().enumerate() {
            for a in 0..3 {
                let Some(fa) = el.free[a] else { continue };
                for b in 0..3 {
                    let Some(fb) = el.free[b] else { continue };
                    for c in 0..nc {
                        jac_pos[((e * 3 + a) * 3 + b) * nc + c] =
                            jac_pattern.position(fa * nc + c, fb * nc).expect("pattern covers element block");
                    }
                }
            }
        }
        Ok(Self { n_components, dim, elements, jac_pattern, jac_pos })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `∫ R(u_h) φ_i` for every free test function.
    pub fn reaction_load<R: PointwiseReaction + ?Sized>(&self, reaction: &R, state: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.add_reaction_load(reaction, state, 1.0, &mut out);
        out
    }

    /// `out += scale · ∫ R(u_h) φ_i`
    pub fn add_reaction_load<R: PointwiseReaction + ?Sized>(
        &self,
        reaction: &R,
        state: &[f64],
        scale: f64,
        out: &mut [f64],
    ) {
        let nc = self.n_components;
        assert_eq!(reaction.n_components(), nc);
        assert_eq!(state.len(), self.dim);
        assert!(nc <= MAX_COMPONENTS);
        let mut nodal = [[0.0; MAX_COMPONENTS]; 3];
        let mut u = [0.0; MAX_COMPONENTS];
        let mut r = [0.0; MAX_COMPONENTS];
        for el in &self.elements {
            for a in 0..3 {
                nodal[a] = [0.0; MAX_COMPONENTS];
                if let Some(fa) = el.free[a] {
                    nodal[a][..nc].copy_from_slice(&state[fa * nc..fa * nc + nc]);
                }
            }
            let mut local = [[0.0; MAX_COMPONENTS]; 3];
            for (l, w) in QUAD_POINTS.iter() {
                for c in 0..nc {
                    u[c] = l[0] * nodal[0][c] + l[1] * nodal[1][c] + l[2] * nodal[2][c];
                }
                reaction.eval(&u[..nc], &mut r[..nc]);
                for a in 0..3 {
                    for c in 0..nc {
                        local[a][c] += w * l[a] * r[c];
                    }
                }
            }
            let wq = scale * el.area;
            for a in 0..3 {
                if let Some(fa) = el.free[a] {
                    for c in 0..nc {
                        out[fa * nc + c] += wq * local[a][c];
                    }
                }
            }
        }
    }

    /// Jacobian of [`Self::reaction_load`] with respect to the state.
    pub fn reaction_jacobian<R: PointwiseReaction + ?Sized>(&self, reaction: &R, state: &[f64]) -> CsrMatrix {
        let nc = self.n_components;
        let mut jac = self.jac_pattern.zeros_like();
        let mut nodal = [[0.0; MAX_COMPONENTS]; 3];
        let mut u = [0.0; MAX_COMPONENTS];
        let mut dr = [0.0; MAX_COMPONENTS * MAX_COMPONENTS];
        let vals = jac.values_mut();
        for (e, el) in self.elements.iter().enumerate() {
            for a in 0..3 {
                nodal[a] = [0.0; MAX_COMPONENTS];
                if let Some(fa) = el.free[a] {
                    nodal[a][..nc].copy_from_slice(&state[fa * nc..fa * nc + nc]);
                }
            }
            // local[a][b][c*nc+d] = ∫ ∂R_c/∂u_d φ_a φ_b
            let mut local = [[[0.0; MAX_COMPONENTS * MAX_COMPONENTS]; 3]; 3];
            for (l, w) in QUAD_POINTS.iter() {
                for c in 0..nc {
                    u[c] = l[0] * nodal[0][c] + l[1] * nodal[1][c] + l[2] * nodal[2][c];
                }
                reaction.jacobian(&u[..nc], &mut dr[..nc * nc]);
                for a in 0..3 {
                    for b in 0..3 {
                        let phi = w * l[a] * l[b];
                        for k in 0..nc * nc {
                            local[a][b][k] += phi * dr[k];
                        }
                    }
                }
            }
            for a in 0..3 {
                if el.free[a].is_none() {
                    continue;
                }
                for b in 0..3 {
                    if el.free[b].is_none() {
                        continue;
                    }
                    for c in 0..nc {
                        let pos = self.jac_pos[((e * 3 + a) * 3 + b) * nc + c];
                        for d in 0..nc {
                            vals[pos + d] += el.area * local[a][b][c * nc + d];
                        }
                    }
                }
            }
        }
        jac
    }

    /// `∫ f(t, x) φ_i` for a source evaluated pointwise (`f` writes one value per component).
    pub fn source_load(&self, f: impl Fn(f64, f64, &mut [f64])) -> Vec<f64> {
        let nc = self.n_components;
        let mut out = vec![0.0; self.dim];
        let mut val = vec![0.0; nc];
        for el in &self.elements {
            for (q, (l, w)) in QUAD_POINTS.iter().enumerate() {
                let [x, y] = el.points[q];
                f(x, y, &mut val);
                let wq = w * el.area;
                for a in 0..3 {
                    if let Some(fa) = el.free[a] {
                        for c in 0..nc {
                            out[fa * nc + c] += wq * val[c] * l[a];
                        }
                    }
                }
            }
        }
        out
    }

    /// `‖u_h − f‖₀` by quadrature over all components, with constrained dofs taken as zero.
    pub fn l2_distance(&self, state: &[f64], f: impl Fn(f64, f64, &mut [f64])) -> f64 {
        let nc = self.n_components;
        let mut val = vec![0.0; nc];
        let mut total = 0.0;
        for el in &self.elements {
            for (q, (l, w)) in QUAD_POINTS.iter().enumerate() {
                let [x, y] = el.points[q];
                f(x, y, &mut val);
                for c in 0..nc {
                    let uh: f64 = (0..3).filter_map(|a| el.free[a].map(|fa| l[a] * state[fa * nc + c])).sum();
                    total += w * el.area * (uh - val[c]).powi(2);
                }
            }
        }
        total.sqrt()
    }
}
