//! The tangential update: find `w ∈ K_h[u]` with
//! `a_h(w, v) = a_h(u, v)` for all `v ∈ K_h[u]`.
//!
//! The tangent space is parametrized node by node with Householder frames,
//! giving a symmetric `2N × 2N` system. When `κ = 0` and the nodal values of
//! `u` (together with the anisotropy axes) do not span `R³`, the update is
//! only determined up to a constant; zero-mean constraints along the missing
//! directions are then appended as Lagrange multipliers.

use nalgebra::{Matrix2, SMatrix, Vector2};
use rand::{Rng, SeedableRng};

use crate::assembly::{DiscreteOperator, ModelParams};
use crate::error::{Error, Result};
use crate::fields::{householder, is_in_mh, tangency_residual, HouseholderFrame, NodalVectorField, Vec3};
use crate::krylov::{minres, LinearOperator, MinresConfig};
use crate::mesh::Mesh;
use crate::sparse::{norm, BlockCsr};

/// Relative threshold below which a cross product or projection counts as
/// zero when measuring `span B`.
pub const SPAN_TOLERANCE: f64 = 1e-8;

/// Largest true relative residual accepted from the iterative solver.
pub const TRUE_RESIDUAL_LIMIT: f64 = 1e-6;

/// Refinement restarts kick in above `REFINE_TRIGGER · rtol`.
const REFINE_TRIGGER: f64 = 100.0;
const MAX_REFINEMENTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    Zero,
    /// Uniform random coefficients in `[-1, 1]` from the given seed.
    Random(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub rtol: f64,
    /// Defaults to `10 · (2N + m)` when `None`.
    pub max_iters: Option<usize>,
    /// Append the zero-mean constraints when they are needed. Turning this
    /// off reproduces the non-unique `κ = 0` problem.
    pub uniqueness_constraints: bool,
    pub initial_guess: InitialGuess,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            max_iters: None,
            uniqueness_constraints: true,
            initial_guess: InitialGuess::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintProvenance {
    /// `κ ≠ 0`: the update is unique, nothing to add.
    Helical,
    /// All spanning vectors are parallel; two constraints.
    Collinear,
    /// All spanning vectors lie in a plane; one constraint along its normal.
    Coplanar,
    /// The spanning vectors fill `R³`.
    FullSpan,
}

/// Orthonormal basis of `(span B)^⊥`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBasis {
    pub vectors: Vec<Vec3>,
    pub provenance: ConstraintProvenance,
}

impl ConstraintBasis {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// The set `B`: nodal values of `u`, plus `e₃` for `γ > 0` or `e₁, e₂` for `γ < 0`.
pub fn spanning_set(u: &NodalVectorField, params: &ModelParams) -> Vec<Vec3> {
    let mut b = u.values().to_vec();
    if params.gamma > 0.0 {
        b.push(Vec3::z());
    } else if params.gamma < 0.0 {
        b.push(Vec3::x());
        b.push(Vec3::y());
    }
    b
}

/// Determines the constraint directions `B_⊥` by the cross-product test:
/// with `p_s = b₀ × s` over the spanning set, all `p_s ≈ 0` leaves two
/// directions orthogonal to `b₀`; otherwise with `p` the largest of them, if
/// every `s` is orthogonal to `p` the single constraint is `p/|p|`.
pub fn detect_constraints(u: &NodalVectorField, params: &ModelParams) -> ConstraintBasis {
    if params.kappa != 0.0 {
        return ConstraintBasis {
            vectors: Vec::new(),
            provenance: ConstraintProvenance::Helical,
        };
    }
    let set: Vec<Vec3> = spanning_set(u, params)
        .into_iter()
        .filter(|s| s.norm() > 0.0)
        .map(|s| s.normalize())
        .collect();
    let Some(b0) = set.first().copied() else {
        return ConstraintBasis {
            vectors: vec![Vec3::x(), Vec3::y(), Vec3::z()],
            provenance: ConstraintProvenance::Collinear,
        };
    };
    let p = set
        .iter()
        .map(|s| b0.cross(s))
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or_else(Vec3::zeros);
    if p.norm() < SPAN_TOLERANCE {
        let q = householder(&b0);
        return ConstraintBasis {
            vectors: vec![q.column(0).into_owned(), q.column(1).into_owned()],
            provenance: ConstraintProvenance::Collinear,
        };
    }
    let p = p.normalize();
    if set.iter().all(|s| p.dot(s).abs() < SPAN_TOLERANCE) {
        ConstraintBasis {
            vectors: vec![p],
            provenance: ConstraintProvenance::Coplanar,
        }
    } else {
        ConstraintBasis {
            vectors: Vec::new(),
            provenance: ConstraintProvenance::FullSpan,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TangentSolveResult {
    pub w: NodalVectorField,
    /// Frame coefficients `ŵ` with `w = Q_h ŵ`.
    pub coefficients: Vec<Vector2<f64>>,
    pub lambda: Vec<f64>,
    pub constraints: ConstraintBasis,
    pub iterations: usize,
    /// Relative residual of the reduced (saddle-point) system.
    pub residual: f64,
}

/// Reduced operator `[K̂ Cᵀ; C 0]` with `K̂ = Q_hᵀ A Q_h`.
pub struct ReducedSystem {
    pub stiffness: BlockCsr<2>,
    /// One row of length `2N` per constraint.
    pub constraints: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub frame: HouseholderFrame,
}

impl ReducedSystem {
    pub fn build(op: &DiscreteOperator, u: &NodalVectorField, constraints: &ConstraintBasis) -> Result<Self> {
        let frame = HouseholderFrame::new(u)?;
        let t: Vec<SMatrix<f64, 3, 2>> = (0..frame.len())
            .map(|z| frame.matrix(z).fixed_columns::<2>(0).into_owned())
            .collect();
        let stiffness = op
            .matrix()
            .map_blocks::<2, _>(|r, c, b| -> Matrix2<f64> { t[r].transpose() * b * t[c] });

        let au = op.apply(u);
        let rhs: Vec<f64> = au
            .chunks_exact(3)
            .zip(&t)
            .flat_map(|(a, tz)| {
                let r = tz.transpose() * Vec3::from_column_slice(a);
                [r.x, r.y]
            })
            .collect();

        let rows = constraints
            .vectors
            .iter()
            .map(|b| {
                t.iter()
                    .zip(&op.node_weights)
                    .flat_map(|(tz, w)| {
                        let r = tz.transpose() * b * *w;
                        [r.x, r.y]
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            stiffness,
            constraints: rows,
            rhs,
            frame,
        })
    }

    pub fn reduced_dim(&self) -> usize {
        self.stiffness.dim()
    }

    /// Jacobi preconditioner; constraint rows use the diagonal of
    /// `C diag(K̂)⁻¹ Cᵀ`.
    fn inverse_diagonal(&self) -> Vec<f64> {
        let d = self.stiffness.diagonal();
        let scale = d.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let d: Vec<f64> = d.iter().map(|x| if *x > 1e-14 * scale { *x } else { scale }).collect();
        let mut inv: Vec<f64> = d.iter().map(|x| 1.0 / x).collect();
        for row in &self.constraints {
            let s: f64 = row.iter().zip(&d).map(|(c, x)| c * c / x).sum();
            inv.push(if s > 0.0 { 1.0 / s } else { 1.0 });
        }
        inv
    }
}

impl LinearOperator for ReducedSystem {
    fn dim(&self) -> usize {
        self.stiffness.dim() + self.constraints.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.stiffness.dim();
        let (xw, xl) = x.split_at(n);
        let (yw, yl) = y.split_at_mut(n);
        self.stiffness.matvec(xw, yw);
        for (i, row) in self.constraints.iter().enumerate() {
            let l = xl[i];
            yw.iter_mut().zip(row).for_each(|(a, c)| *a += c * l);
            yl[i] = row.iter().zip(xw).map(|(c, v)| c * v).sum();
        }
    }
}

/// Solves the tangential update with a pre-assembled operator.
pub fn solve_with_operator(
    op: &DiscreteOperator,
    u: &NodalVectorField,
    cfg: &SolverConfig,
) -> Result<TangentSolveResult> {
    if u.len() != op.node_weights.len() {
        return Err(Error::SizeMismatch {
            expected: op.node_weights.len(),
            found: u.len(),
        });
    }
    if !is_in_mh(u) {
        return Err(Error::InvalidArgument("tangent update requires a field in M_h".into()));
    }
    let constraints = if cfg.uniqueness_constraints {
        detect_constraints(u, &op.params)
    } else {
        ConstraintBasis {
            vectors: Vec::new(),
            provenance: detect_constraints(u, &op.params).provenance,
        }
    };
    let sys = ReducedSystem::build(op, u, &constraints)?;
    let n = sys.reduced_dim();
    let m = sys.constraints.len();
    let mut b = sys.rhs.clone();
    b.resize(n + m, 0.0);

    let x0 = match cfg.initial_guess {
        InitialGuess::Zero => None,
        InitialGuess::Random(seed) => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            Some((0..n + m).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>())
        }
    };
    let max_iters = cfg.max_iters.unwrap_or(10 * (n + m));
    let mcfg = MinresConfig { rtol: cfg.rtol, max_iters };
    let inv_diag = sys.inverse_diagonal();
    let out = minres(&sys, &inv_diag, &b, x0.as_deref(), mcfg);
    let (mut x, mut residual, mut iterations) = (out.x, out.residual, out.iterations);
    if !out.converged {
        return Err(Error::SolverDiverged { iterations, residual });
    }
    // On nearly singular systems the short recurrence can drift away from
    // the true residual; restart on the true residual until it is small.
    let b_norm = norm(&b);
    let mut rounds = 0;
    while residual > REFINE_TRIGGER * cfg.rtol && rounds < MAX_REFINEMENTS {
        let mut ax = vec![0.0; n + m];
        sys.apply(&x, &mut ax);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let corr = minres(&sys, &inv_diag, &r, None, mcfg);
        iterations += corr.iterations;
        let trial: Vec<f64> = x.iter().zip(&corr.x).map(|(a, c)| a + c).collect();
        sys.apply(&trial, &mut ax);
        let rn = norm(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>());
        let trial_residual = if b_norm > 0.0 { rn / b_norm } else { rn };
        rounds += 1;
        if !(trial_residual < residual) {
            break;
        }
        x = trial;
        residual = trial_residual;
    }
    if !(residual <= TRUE_RESIDUAL_LIMIT) {
        return Err(Error::SolverDiverged { iterations, residual });
    }
    let coefficients: Vec<Vector2<f64>> = x[..n].chunks_exact(2).map(|c| Vector2::new(c[0], c[1])).collect();
    let w = sys.frame.prolong(&coefficients)?;
    let tangency = tangency_residual(&w, u);
    if tangency > 1e-10 * (1.0 + w.values().iter().map(|v| v.norm()).fold(0.0, f64::max)) {
        return Err(Error::ConstraintViolation {
            node: 0,
            message: format!("tangential update leaves the tangent space (residual {tangency:e})"),
        });
    }
    Ok(TangentSolveResult {
        w,
        coefficients,
        lambda: x[n..].to_vec(),
        constraints,
        iterations,
        residual,
    })
}

/// Assembles `a_h` and solves the tangential update at `u`.
pub fn solve_tangent_update(
    mesh: &Mesh,
    u: &NodalVectorField,
    params: ModelParams,
    cfg: &SolverConfig,
) -> Result<TangentSolveResult> {
    u.check_mesh(mesh)?;
    let op = DiscreteOperator::assemble(mesh, params);
    solve_with_operator(&op, u, cfg)
}
