//! Nodal P1 vector fields and the constraint sets built on them.
//!
//! The unit-length constraint and tangency are imposed at mesh nodes only:
//! a field is in `M_h` when every nodal value has unit length, in `M_h⁺`
//! when every nodal value has length at least one, and tangent to `u` when
//! `v(z)·u(z) = 0` at every node.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

pub type Vec3 = Vector3<f64>;

/// Tolerance for classifying nodal constraints.
pub const UNIT_TOLERANCE: f64 = 1e-10;

/// Below this `|u + e₃|` the Householder frame uses the fixed reflection
/// `diag(-1, -1, 1)`.
pub const ANTIPODAL_THRESHOLD: f64 = 1e-8;

/// One `R³` value per mesh node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalVectorField {
    values: Vec<Vec3>,
}

impl NodalVectorField {
    pub fn new(values: Vec<Vec3>) -> Result<Self> {
        if let Some(node) = values.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite { node });
        }
        Ok(Self { values })
    }

    pub fn constant(n: usize, value: Vec3) -> Self {
        Self { values: vec![value; n] }
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, Vec3::zeros())
    }

    /// Reads a field from a flat `[x0, y0, z0, x1, ...]` coefficient vector.
    pub fn from_flat(flat: &[f64]) -> Self {
        assert_eq!(flat.len() % 3, 0);
        Self {
            values: flat.chunks_exact(3).map(Vec3::from_column_slice).collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec3] {
        &mut self.values
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        check_len(mesh.num_nodes(), self.len())
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len());
        Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }

    /// Value of the P1 interpolant at barycentric coordinates `bary` in triangle `t`.
    pub fn eval(&self, mesh: &Mesh, t: usize, bary: [f64; 3]) -> Vec3 {
        let tri = mesh.triangles()[t];
        self.values[tri[0]] * bary[0] + self.values[tri[1]] * bary[1] + self.values[tri[2]] * bary[2]
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::SizeMismatch { expected, found });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintClass {
    /// Unit length at every node.
    InMh,
    /// Length at least one at every node.
    InMhPlus,
    /// Orthogonal to the supplied base field at every node.
    Tangent,
    Unconstrained,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub class: ConstraintClass,
    pub tolerance: f64,
}

/// Strongest constraint class the field satisfies. Tangency takes precedence
/// and is only tested when `base` is given.
pub fn classify(field: &NodalVectorField, base: Option<&NodalVectorField>) -> Result<Classification> {
    let tol = UNIT_TOLERANCE;
    let class = if let Some(base) = base {
        check_len(base.len(), field.len())?;
        if tangency_residual(field, base) <= tol {
            ConstraintClass::Tangent
        } else {
            norm_class(field, tol)
        }
    } else {
        norm_class(field, tol)
    };
    Ok(Classification { class, tolerance: tol })
}

fn norm_class(field: &NodalVectorField, tol: f64) -> ConstraintClass {
    let norms = field.values.iter().map(|v| v.norm());
    let (mut unit, mut plus) = (true, true);
    for n in norms {
        unit &= (n - 1.0).abs() <= tol;
        plus &= n >= 1.0 - tol;
    }
    match (unit, plus) {
        (true, _) => ConstraintClass::InMh,
        (false, true) => ConstraintClass::InMhPlus,
        _ => ConstraintClass::Unconstrained,
    }
}

pub fn is_in_mh(field: &NodalVectorField) -> bool {
    norm_class(field, UNIT_TOLERANCE) == ConstraintClass::InMh
}

/// `max_z |v(z)·u(z)|`.
pub fn tangency_residual(v: &NodalVectorField, u: &NodalVectorField) -> f64 {
    v.values
        .iter()
        .zip(&u.values)
        .map(|(a, b)| a.dot(b).abs())
        .fold(0.0, f64::max)
}

/// Nodal unit-length projection `v(z) ↦ v(z)/|v(z)|`.
pub fn nodal_project(v: &NodalVectorField) -> Result<NodalVectorField> {
    let values = v
        .values
        .iter()
        .enumerate()
        .map(|(node, x)| {
            let n = x.norm();
            if n < 1.0 - UNIT_TOLERANCE {
                Err(Error::ConstraintViolation {
                    node,
                    message: format!("|v(z)| = {n} < 1, projection needs a field in M_h+"),
                })
            } else {
                Ok(x / n)
            }
        })
        .collect::<Result<_>>()?;
    Ok(NodalVectorField { values })
}

/// Normalizes every nodal value without the `|v(z)| ≥ 1` precondition.
/// Zero vectors are rejected.
pub fn normalize(v: &NodalVectorField) -> Result<NodalVectorField> {
    let values = v
        .values
        .iter()
        .enumerate()
        .map(|(node, x)| {
            let n = x.norm();
            if n == 0.0 {
                Err(Error::ConstraintViolation {
                    node,
                    message: "cannot normalize a zero vector".into(),
                })
            } else {
                Ok(x / n)
            }
        })
        .collect::<Result<_>>()?;
    Ok(NodalVectorField { values })
}

/// `I_h f`: samples `f` at the mesh nodes.
pub fn nodal_interpolate<F>(mesh: &Mesh, f: F) -> Result<NodalVectorField>
where
    F: Fn(Point) -> Vec3,
{
    let values: Vec<Vec3> = mesh.nodes().iter().map(|&p| f(p)).collect();
    NodalVectorField::new(values)
}

pub fn nodal_interpolate_scalar<F>(mesh: &Mesh, f: F) -> Result<Vec<f64>>
where
    F: Fn(Point) -> f64,
{
    mesh.nodes()
        .iter()
        .enumerate()
        .map(|(node, &p)| {
            let v = f(p);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite { node })
            }
        })
        .collect()
}

/// Orthogonal `Q` with `Q e₃ = -u`, so that `Q e₁, Q e₂` span the tangent
/// plane at the unit vector `u`.
pub fn householder(u: &Vec3) -> Matrix3<f64> {
    let w = u + Vec3::z();
    let n = w.norm();
    if n < ANTIPODAL_THRESHOLD {
        Matrix3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0))
    } else {
        let v = w / n;
        Matrix3::identity() - 2.0 * v * v.transpose()
    }
}

/// Per-node Householder matrices of a field in `M_h`.
#[derive(Debug, Clone)]
pub struct HouseholderFrame {
    matrices: Vec<Matrix3<f64>>,
}

impl HouseholderFrame {
    pub fn new(u: &NodalVectorField) -> Result<Self> {
        let matrices = u
            .values
            .iter()
            .enumerate()
            .map(|(node, x)| {
                if (x.norm() - 1.0).abs() > UNIT_TOLERANCE {
                    Err(Error::ConstraintViolation {
                        node,
                        message: format!("frame needs a unit vector, |u(z)| = {}", x.norm()),
                    })
                } else {
                    Ok(householder(x))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { matrices })
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrix(&self, node: usize) -> &Matrix3<f64> {
        &self.matrices[node]
    }

    /// First two columns `[Q e₁, Q e₂]` at `node`.
    pub fn tangent_basis(&self, node: usize) -> [Vec3; 2] {
        let q = &self.matrices[node];
        [q.column(0).into_owned(), q.column(1).into_owned()]
    }

    /// `ŵ ↦ Σ_z (ŵ₁(z) Q e₁ + ŵ₂(z) Q e₂) φ_z`.
    pub fn prolong(&self, coeffs: &[Vector2<f64>]) -> Result<NodalVectorField> {
        check_len(self.len(), coeffs.len())?;
        let values = coeffs
            .iter()
            .enumerate()
            .map(|(z, c)| {
                let [t1, t2] = self.tangent_basis(z);
                t1 * c.x + t2 * c.y
            })
            .collect();
        Ok(NodalVectorField { values })
    }

    /// Same as [`prolong`](Self::prolong) on a flat `[ŵ₁(0), ŵ₂(0), ŵ₁(1), ...]` vector.
    pub fn prolong_flat(&self, flat: &[f64]) -> Result<NodalVectorField> {
        let coeffs: Vec<Vector2<f64>> = flat.chunks_exact(2).map(|c| Vector2::new(c[0], c[1])).collect();
        if !flat.len().is_multiple_of(2) {
            return Err(Error::SizeMismatch { expected: 2 * self.len(), found: flat.len() });
        }
        self.prolong(&coeffs)
    }

    /// Inverse of [`prolong`](Self::prolong) on tangent fields.
    pub fn restrict(&self, v: &NodalVectorField) -> Result<Vec<Vector2<f64>>> {
        check_len(self.len(), v.len())?;
        v.values
            .iter()
            .enumerate()
            .map(|(z, x)| {
                let q = &self.matrices[z];
                let c = q.transpose() * x;
                // Q e₃ = -u, so the third coefficient is -v·u
                if c.z.abs() > UNIT_TOLERANCE * x.norm().max(1.0) {
                    return Err(Error::ConstraintViolation {
                        node: z,
                        message: format!("field is not tangent (v·u = {:e})", -c.z),
                    });
                }
                Ok(Vector2::new(c.x, c.y))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_structured_square;
    use proptest::prelude::*;

    fn field(v: &[[f64; 3]]) -> NodalVectorField {
        NodalVectorField::new(v.iter().map(|x| Vec3::from(*x)).collect()).unwrap()
    }

    #[test]
    fn classification() {
        let e3 = NodalVectorField::constant(4, Vec3::z());
        assert_eq!(classify(&e3, None).unwrap().class, ConstraintClass::InMh);
        let two = NodalVectorField::constant(4, Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(classify(&two, None).unwrap().class, ConstraintClass::InMhPlus);
        let e1 = NodalVectorField::constant(4, Vec3::x());
        assert_eq!(classify(&e1, Some(&e3)).unwrap().class, ConstraintClass::Tangent);
        let small = NodalVectorField::constant(4, Vec3::new(0.5, 0.0, 0.0));
        assert_eq!(classify(&small, None).unwrap().class, ConstraintClass::Unconstrained);
        assert!(classify(&e1, Some(&NodalVectorField::constant(3, Vec3::z()))).is_err());
    }

    #[test]
    fn projection() {
        let v = field(&[[2.0, 0.0, 0.0], [0.0, 3.0, 0.0]]);
        let p = nodal_project(&v).unwrap();
        assert_eq!(p.values()[0], Vec3::x());
        assert_eq!(p.values()[1], Vec3::y());

        let small = field(&[[0.5, 0.0, 0.0]]);
        assert!(matches!(nodal_project(&small), Err(Error::ConstraintViolation { node: 0, .. })));
    }

    #[test]
    fn projection_of_anisotropy_counterexample_corner() {
        let eps = 1.0;
        let delta = (2.0f64 - eps * eps / 2.0).sqrt();
        let v = field(&[[delta, delta, -eps]]);
        assert!((v.values()[0].norm() - 2.0).abs() < 1e-15);
        let p = nodal_project(&v).unwrap();
        let expect = Vec3::new(delta / 2.0, delta / 2.0, -0.5);
        assert!((p.values()[0] - expect).amax() < 1e-15);
    }

    #[test]
    fn interpolation() {
        let mesh = generate_structured_square(3).unwrap();
        let c = nodal_interpolate(&mesh, |_| Vec3::z()).unwrap();
        assert!(c.values().iter().all(|v| *v == Vec3::z()));

        let affine = |p: Point| Vec3::new(1.0 + 2.0 * p[0], p[1] - p[0], 3.0 * p[1]);
        let f = nodal_interpolate(&mesh, affine).unwrap();
        for (z, p) in mesh.nodes().iter().enumerate() {
            assert_eq!(f.values()[z], affine(*p));
        }
        // P1 reproduces affine functions inside elements too
        for t in 0..mesh.num_triangles() {
            let [a, b, c] = mesh.vertices(t);
            let bary = [0.2, 0.3, 0.5];
            let x = [
                a[0] * 0.2 + b[0] * 0.3 + c[0] * 0.5,
                a[1] * 0.2 + b[1] * 0.3 + c[1] * 0.5,
            ];
            assert!((f.eval(&mesh, t, bary) - affine(x)).amax() < 1e-14);
        }

        let bad = nodal_interpolate(&mesh, |p| Vec3::new(1.0 / p[0], 0.0, 0.0));
        assert!(matches!(bad, Err(Error::NonFinite { node: 0 })));
        let bad = nodal_interpolate_scalar(&mesh, |p| (p[0] - 1.0).ln());
        assert!(bad.is_err());
    }

    #[test]
    fn householder_special_cases() {
        let q = householder(&(-Vec3::z()));
        assert_eq!(q, Matrix3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0)));
        let q = householder(&Vec3::z());
        assert!((q - Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0))).amax() < 1e-15);
        assert!((q * Vec3::z() + Vec3::z()).amax() < 1e-15);

        let u = Vec3::x();
        let q = householder(&u);
        assert!((q.transpose() * q - Matrix3::identity()).amax() < 1e-12);
        assert!((q * Vec3::z() + u).amax() < 1e-12);
        assert!((q * Vec3::x()).dot(&u).abs() < 1e-12);
        assert!((q * Vec3::y()).dot(&u).abs() < 1e-12);
    }

    #[test]
    fn frame_rejects_non_unit() {
        let v = NodalVectorField::constant(2, Vec3::new(0.0, 0.0, 2.0));
        assert!(HouseholderFrame::new(&v).is_err());
    }

    #[test]
    fn prolong_basics() {
        let u = NodalVectorField::constant(3, Vec3::z());
        let frame = HouseholderFrame::new(&u).unwrap();
        let zero = frame.prolong(&[Vector2::zeros(); 3]).unwrap();
        assert!(zero.values().iter().all(|v| *v == Vec3::zeros()));
        let w = frame.prolong(&[Vector2::new(1.0, 0.0); 3]).unwrap();
        for v in w.values() {
            assert!((v - Vec3::x()).amax() < 1e-15);
        }
        assert!(frame.prolong(&[Vector2::zeros(); 2]).is_err());
        assert!(frame.restrict(&NodalVectorField::constant(3, Vec3::z())).is_err());
    }

    #[test]
    fn p1_modulus_bounded_inside_elements() {
        use rand::{Rng, SeedableRng};
        let mesh = generate_structured_square(6).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let values = (0..mesh.num_nodes())
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let u = normalize(&NodalVectorField::new(values).unwrap()).unwrap();
        let pts = [
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            [0.5, 0.5, 0.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
        ];
        for t in 0..mesh.num_triangles() {
            for b in pts {
                assert!(u.eval(&mesh, t, b).norm() <= 1.0 + 1e-12);
            }
        }
    }

    fn unit() -> impl Strategy<Value = Vec3> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("nonzero", |(a, b, c)| a * a + b * b + c * c > 1e-3)
            .prop_map(|(a, b, c)| Vec3::new(a, b, c).normalize())
    }

    proptest! {
        #[test]
        fn frame_is_orthonormal(u in unit()) {
            let q = householder(&u);
            prop_assert!((q.transpose() * q - Matrix3::identity()).amax() < 1e-12);
            prop_assert!((q * Vec3::z() + u).amax() < 1e-12);
            prop_assert!((q * Vec3::x()).dot(&u).abs() < 1e-12);
            prop_assert!((q * Vec3::y()).dot(&u).abs() < 1e-12);
        }

        #[test]
        fn prolong_restrict_bijection(
            us in proptest::collection::vec(unit(), 5),
            cs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 5),
        ) {
            let u = NodalVectorField::new(us).unwrap();
            let frame = HouseholderFrame::new(&u).unwrap();
            let coeffs: Vec<_> = cs.iter().map(|&(a, b)| Vector2::new(a, b)).collect();
            let w = frame.prolong(&coeffs).unwrap();
            prop_assert_eq!(classify(&w, Some(&u)).unwrap().class, ConstraintClass::Tangent);
            prop_assert!(tangency_residual(&w, &u) < 1e-12);
            let back = frame.restrict(&w).unwrap();
            for (a, b) in back.iter().zip(&coeffs) {
                prop_assert!((a - b).amax() < 1e-12);
            }
            let again = frame.prolong(&back).unwrap();
            prop_assert!(again.max_abs_diff(&w) < 1e-12);
        }

        #[test]
        fn projection_is_idempotent(vs in proptest::collection::vec((-4.0f64..4.0, -4.0f64..4.0, -4.0f64..4.0), 6)) {
            let raw: Vec<Vec3> = vs.iter().map(|&(a, b, c)| Vec3::new(a, b, c)).filter(|v| v.norm() > 1e-3).collect();
            let v = normalize(&NodalVectorField::new(raw).unwrap()).unwrap();
            let once = nodal_project(&v).unwrap();
            let twice = nodal_project(&once).unwrap();
            prop_assert!(once.max_abs_diff(&twice) <= 1e-15);
            prop_assert_eq!(classify(&once, None).unwrap().class, ConstraintClass::InMh);
        }

        #[test]
        fn normalization_is_one_lipschitz(
            a in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
            b in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
        ) {
            let a = Vec3::new(a.0, a.1, a.2);
            let b = Vec3::new(b.0, b.1, b.2);
            prop_assume!(a.norm() >= 1.0 && b.norm() >= 1.0);
            prop_assert!((a / a.norm() - b / b.norm()).norm() <= (a - b).norm() + 1e-15);
        }
    }
}
