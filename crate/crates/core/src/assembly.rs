//! Discrete bilinear form
//!
//! ```text
//! a_h(v, w) = ∫ ∇_h v : ∇_h w dx + ∫ I_h(g_γ(v, w)) dx,   ∂ᵢʰ v = ∂ᵢ v + κ v × eᵢ
//! ```
//!
//! on vector-valued P1 functions, together with the energies built from it.
//! The helical term (including its `κ²` part) is integrated exactly with the
//! edge-midpoint rule; the anisotropy term is mass-lumped.

use nalgebra::SMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{is_in_mh, NodalVectorField, Vec3};
use crate::mesh::{Mesh, Point};
use crate::quadrature::{Rule, DEGREE5, EDGE_MIDPOINT};
use crate::sparse::BlockCsr;

pub type Block3 = SMatrix<f64, 3, 3>;
pub type ElementMatrix = SMatrix<f64, 9, 9>;

/// Helical exchange strength `κ` and anisotropy coefficient `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub kappa: f64,
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(kappa: f64, gamma: f64) -> Result<Self> {
        if !(kappa.is_finite() && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "model parameters must be finite (kappa = {kappa}, gamma = {gamma})"
            )));
        }
        Ok(Self { kappa, gamma })
    }

    /// Anisotropy coefficient `μ = γ + κ²` of the physical energy.
    pub fn mu(&self) -> f64 {
        self.gamma + self.kappa * self.kappa
    }

    /// `g_γ(w, v)`: `γ w₃v₃` for `γ ≥ 0`, `|γ| (w × e₃)·(v × e₃)` otherwise.
    pub fn g(&self, w: &Vec3, v: &Vec3) -> f64 {
        let d = self.g_diagonal();
        d.x * w.x * v.x + d.y * w.y * v.y + d.z * w.z * v.z
    }

    /// The diagonal matrix representing `g_γ`.
    pub fn g_diagonal(&self) -> Vec3 {
        if self.gamma >= 0.0 {
            Vec3::new(0.0, 0.0, self.gamma)
        } else {
            let a = self.gamma.abs();
            Vec3::new(a, a, 0.0)
        }
    }

    /// Riesz representative `g_γ(v)` with `g_γ(v)·w = g_γ(v, w)`.
    pub fn g_vector(&self, v: &Vec3) -> Vec3 {
        self.g_diagonal().component_mul(v)
    }

    /// Constant `(κ² + max(0, −γ))/2` by which `J` exceeds `E` per unit
    /// area on unit-length fields.
    pub fn offset_density(&self) -> f64 {
        0.5 * (self.kappa * self.kappa + (-self.gamma).max(0.0))
    }
}

/// Area and barycentric gradients of a P1 triangle.
#[derive(Debug, Clone, Copy)]
pub struct P1Element {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

impl P1Element {
    pub fn new(v: [Point; 3]) -> Result<Self> {
        let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
        if !(det.abs() > 0.0) {
            return Err(Error::DegenerateTriangle { triangle: 0, area: 0.5 * det });
        }
        let mut grads = [[0.0; 2]; 3];
        for (i, g) in grads.iter_mut().enumerate() {
            let p = v[(i + 1) % 3];
            let q = v[(i + 2) % 3];
            *g = [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
        }
        Ok(Self { area: 0.5 * det.abs(), grads })
    }

    pub fn of(mesh: &Mesh, t: usize) -> Self {
        Self::new(mesh.vertices(t)).expect("mesh triangles are non-degenerate")
    }
}

fn unit(i: usize) -> Vec3 {
    let mut e = Vec3::zeros();
    e[i] = 1.0;
    e
}

/// Nodal values of one element.
fn local(field: &NodalVectorField, tri: [usize; 3]) -> [Vec3; 3] {
    let v = field.values();
    [v[tri[0]], v[tri[1]], v[tri[2]]]
}

/// `(∂₁v, ∂₂v)` of the P1 interpolant on an element.
fn gradient(el: &P1Element, vals: &[Vec3; 3]) -> [Vec3; 2] {
    let mut d = [Vec3::zeros(); 2];
    for (a, val) in vals.iter().enumerate() {
        for (k, dk) in d.iter_mut().enumerate() {
            *dk += val * el.grads[a][k];
        }
    }
    d
}

fn interpolate(vals: &[Vec3; 3], bary: [f64; 3]) -> Vec3 {
    vals[0] * bary[0] + vals[1] * bary[1] + vals[2] * bary[2]
}

/// `∂ₖʰ v = ∂ₖ v + κ v × eₖ` at a point with value `v`.
fn helical(grad: &[Vec3; 2], v: &Vec3, kappa: f64) -> [Vec3; 2] {
    [
        grad[0] + kappa * v.cross(&unit(0)),
        grad[1] + kappa * v.cross(&unit(1)),
    ]
}

/// `∫_T ∇_h(φ_a e_j) : ∇_h(φ_b e_l) dx`, indexed `(3a + j, 3b + l)`.
pub fn element_helical_stiffness(el: &P1Element, kappa: f64) -> ElementMatrix {
    let mut k = ElementMatrix::zeros();
    let cross: [[Vec3; 2]; 3] = [0, 1, 2].map(|j| [unit(j).cross(&unit(0)), unit(j).cross(&unit(1))]);
    for (bary, w) in EDGE_MIDPOINT.iter() {
        // helical derivatives of the 9 basis functions at this point
        let mut d = [[Vec3::zeros(); 2]; 9];
        for a in 0..3 {
            for j in 0..3 {
                for dir in 0..2 {
                    d[3 * a + j][dir] = unit(j) * el.grads[a][dir] + kappa * bary[a] * cross[j][dir];
                }
            }
        }
        for p in 0..9 {
            for q in p..9 {
                let s = w * el.area * (d[p][0].dot(&d[q][0]) + d[p][1].dot(&d[q][1]));
                k[(p, q)] += s;
                if p != q {
                    k[(q, p)] += s;
                }
            }
        }
    }
    k
}

/// Mass-lumped `∫_T I_h(g_γ(φ_a e_j, φ_b e_l))`, non-zero only for `a = b`.
pub fn element_lumped_anisotropy(el: &P1Element, params: &ModelParams) -> ElementMatrix {
    let d = params.g_diagonal() * (el.area / 3.0);
    let mut m = ElementMatrix::zeros();
    for a in 0..3 {
        for j in 0..3 {
            m[(3 * a + j, 3 * a + j)] = d[j];
        }
    }
    m
}

/// Symmetric operator plus optional dense constraint rows (a saddle-point
/// block when non-empty).
#[derive(Debug, Clone)]
pub struct SparseSystem<const B: usize> {
    pub matrix: BlockCsr<B>,
    pub constraints: Vec<Vec<f64>>,
}

impl<const B: usize> SparseSystem<B> {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// The assembled pieces of `a_h` on a mesh.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub params: ModelParams,
    /// Helical stiffness `∫ ∇_h φ : ∇_h φ`.
    pub helical: BlockCsr<3>,
    /// Per-node diagonal of the lumped anisotropy term.
    pub lumped: Vec<Vec3>,
    /// `helical + lumped`.
    pub full: SparseSystem<3>,
    /// `∫ φ_z dx`.
    pub node_weights: Vec<f64>,
}

const CHUNK: usize = 512;

fn assemble_blocks<F>(mesh: &Mesh, element: F) -> BlockCsr<3>
where
    F: Fn(&P1Element) -> ElementMatrix + Sync,
{
    let tris = mesh.triangles();
    let chunks: Vec<Vec<(usize, usize, Block3)>> = (0..tris.len())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|ts| {
            let mut out = Vec::with_capacity(ts.len() * 9);
            for &t in ts {
                let k = element(&P1Element::of(mesh, t));
                let tri = tris[t];
                for a in 0..3 {
                    for b in 0..3 {
                        out.push((tri[a], tri[b], k.fixed_view::<3, 3>(3 * a, 3 * b).into_owned()));
                    }
                }
            }
            out
        })
        .collect();
    BlockCsr::from_triplets(mesh.num_nodes(), chunks.into_iter().flatten().collect())
}

impl DiscreteOperator {
    pub fn assemble(mesh: &Mesh, params: ModelParams) -> Self {
        let helical = assemble_blocks(mesh, |el| element_helical_stiffness(el, params.kappa));
        let node_weights = mesh.lumped_weights();
        let g = params.g_diagonal();
        let lumped: Vec<Vec3> = node_weights.iter().map(|w| g * *w).collect();
        let matrix = helical.map_blocks(|r, c, b| {
            if r == c {
                b + Block3::from_diagonal(&lumped[r])
            } else {
                *b
            }
        });
        Self {
            params,
            helical,
            lumped,
            full: SparseSystem { matrix, constraints: Vec::new() },
            node_weights,
        }
    }

    pub fn matrix(&self) -> &BlockCsr<3> {
        &self.full.matrix
    }

    /// `a_h(v, w)`.
    pub fn a(&self, v: &NodalVectorField, w: &NodalVectorField) -> f64 {
        self.matrix().bilinear(&v.to_flat(), &w.to_flat())
    }

    /// `J_h(v) = ½ a_h(v, v)`.
    pub fn energy(&self, v: &NodalVectorField) -> f64 {
        0.5 * self.a(v, v)
    }

    /// `A v` as a flat `3N` vector.
    pub fn apply(&self, v: &NodalVectorField) -> Vec<f64> {
        self.matrix().mul(&v.to_flat())
    }

    /// `Σ_z ω_z |v(z)|²`.
    pub fn lumped_norm_sq(&self, v: &NodalVectorField) -> f64 {
        lumped_norm_sq(&self.node_weights, v)
    }
}

/// Assembles `a_h` as a `3N × 3N` symmetric block-sparse matrix.
pub fn assemble_a(mesh: &Mesh, params: ModelParams) -> SparseSystem<3> {
    DiscreteOperator::assemble(mesh, params).full
}

/// Scalar P1 stiffness `∫ ∇φ_z · ∇φ_z'`, from the κ = 0 helical blocks.
pub fn scalar_stiffness(mesh: &Mesh) -> BlockCsr<1> {
    let k = assemble_blocks(mesh, |el| element_helical_stiffness(el, 0.0));
    k.map_blocks(|_, _, b| SMatrix::<f64, 1, 1>::new(b[(0, 0)]))
}

pub fn lumped_norm_sq(weights: &[f64], v: &NodalVectorField) -> f64 {
    weights.iter().zip(v.values()).map(|(w, x)| w * x.norm_squared()).sum()
}

/// Per-term split of `J_h` and the physical energy `E` of the same field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    /// `∫ |∇_h v|²`.
    pub helical_term: f64,
    /// `∫ I_h(g_γ(v, v))`.
    pub anisotropy_term: f64,
    /// `J_h(v) = ½ (helical_term + anisotropy_term)`.
    pub total_j: f64,
    /// `∫ ½|∇v|² + κ v·curl v + μ/2 (v·e₃)²` with `μ = γ + κ²`, not lumped.
    pub original_e: f64,
    pub offset_check: f64,
}

fn integrate<F>(mesh: &Mesh, rule: &Rule, f: F) -> f64
where
    F: Fn(&P1Element, usize, [f64; 3]) -> f64 + Sync,
{
    (0..mesh.num_triangles())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|ts| {
            ts.iter()
                .map(|&t| {
                    let el = P1Element::of(mesh, t);
                    rule.iter().map(|(b, w)| w * el.area * f(&el, t, b)).sum::<f64>()
                })
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .sum()
}

/// 2D curl `e₁ × ∂₁v + e₂ × ∂₂v`.
pub fn curl(grad: &[Vec3; 2]) -> Vec3 {
    unit(0).cross(&grad[0]) + unit(1).cross(&grad[1])
}

pub fn energy_breakdown(mesh: &Mesh, field: &NodalVectorField, params: &ModelParams) -> Result<EnergyBreakdown> {
    field.check_mesh(mesh)?;
    let tris = mesh.triangles();
    let helical_term = integrate(mesh, &EDGE_MIDPOINT, |el, t, b| {
        let vals = local(field, tris[t]);
        let g = gradient(el, &vals);
        let h = helical(&g, &interpolate(&vals, b), params.kappa);
        h[0].norm_squared() + h[1].norm_squared()
    });
    let anisotropy_term: f64 = mesh
        .lumped_weights()
        .iter()
        .zip(field.values())
        .map(|(w, v)| w * params.g(v, v))
        .sum();
    let original_e = physical_energy(mesh, field, params);
    let total_j = 0.5 * (helical_term + anisotropy_term);
    Ok(EnergyBreakdown {
        helical_term,
        anisotropy_term,
        total_j,
        original_e,
        offset_check: total_j - original_e,
    })
}

/// Physical energy `∫ ½|∇v|² + κ v·curl v + μ/2 |v·e₃|²`, `μ = γ + κ²`,
/// integrated exactly.
pub fn physical_energy(mesh: &Mesh, field: &NodalVectorField, params: &ModelParams) -> f64 {
    let tris = mesh.triangles();
    let mu = params.mu();
    integrate(mesh, &EDGE_MIDPOINT, |el, t, b| {
        let vals = local(field, tris[t]);
        let g = gradient(el, &vals);
        let v = interpolate(&vals, b);
        0.5 * (g[0].norm_squared() + g[1].norm_squared()) + params.kappa * v.dot(&curl(&g)) + 0.5 * mu * v.z * v.z
    })
}

/// `‖∇v‖²_{L²}`.
pub fn dirichlet_seminorm_sq(mesh: &Mesh, field: &NodalVectorField) -> f64 {
    let tris = mesh.triangles();
    (0..mesh.num_triangles())
        .map(|t| {
            let el = P1Element::of(mesh, t);
            let g = gradient(&el, &local(field, tris[t]));
            el.area * (g[0].norm_squared() + g[1].norm_squared())
        })
        .sum()
}

/// Exact `‖v‖²_{L²}` of the P1 interpolant.
pub fn l2_norm_sq(mesh: &Mesh, field: &NodalVectorField) -> f64 {
    let tris = mesh.triangles();
    integrate(mesh, &EDGE_MIDPOINT, |_, t, b| interpolate(&local(field, tris[t]), b).norm_squared())
}

/// Weak Euler–Lagrange residual
///
/// ```text
/// r(v) = ∫ (u × ∇_h u) : ∇_h v + I_h(g_γ(u, v × u)) dx
/// ```
///
/// evaluated on all nodal basis directions `v = φ_z eᵢ`. The volume term is
/// cubic on each element and integrated with a degree-5 rule.
pub fn el_residual_vector(mesh: &Mesh, u: &NodalVectorField, params: &ModelParams) -> Result<Vec<f64>> {
    u.check_mesh(mesh)?;
    if !is_in_mh(u) {
        return Err(Error::InvalidArgument("residual requires a field in M_h".into()));
    }
    let kappa = params.kappa;
    let tris = mesh.triangles();
    let mut r = vec![0.0; 3 * mesh.num_nodes()];
    for (t, tri) in tris.iter().enumerate() {
        let el = P1Element::of(mesh, t);
        let vals = local(u, *tri);
        let g = gradient(&el, &vals);
        for (b, w) in DEGREE5.iter() {
            let x = interpolate(&vals, b);
            let h = helical(&g, &x, kappa);
            let c = [x.cross(&h[0]), x.cross(&h[1])];
            for a in 0..3 {
                let mut contrib = Vec3::zeros();
                for (k, ck) in c.iter().enumerate() {
                    contrib += ck * el.grads[a][k] + kappa * b[a] * unit(k).cross(ck);
                }
                let z = tri[a];
                for i in 0..3 {
                    r[3 * z + i] += w * el.area * contrib[i];
                }
            }
        }
    }
    for (z, (w, x)) in mesh.lumped_weights().iter().zip(u.values()).enumerate() {
        let lump = x.cross(&params.g_vector(x)) * *w;
        for i in 0..3 {
            r[3 * z + i] += lump[i];
        }
    }
    Ok(r)
}

pub fn el_residual(mesh: &Mesh, u: &NodalVectorField, params: &ModelParams) -> Result<f64> {
    Ok(crate::sparse::norm(&el_residual_vector(mesh, u, params)?))
}
