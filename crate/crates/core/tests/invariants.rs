//! Property tests of the structural invariants across modules.

use helimin::assembly::{
    dirichlet_seminorm_sq, energy_breakdown, lumped_norm_sq, scalar_stiffness, DiscreteOperator, ModelParams,
};
use helimin::experiments::{
    initial_random, nondimensionalize, run_single, InitialCondition, MaterialParams, StateClass, SweepConfig,
};
use helimin::fields::{nodal_interpolate, nodal_project, NodalVectorField, Vec3};
use helimin::mesh::{generate_disk, generate_structured_square, Mesh};
use helimin::tangent::{solve_tangent_update, SolverConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field_with(n: usize, seed: u64, min_norm: f64) -> NodalVectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n)
        .map(|_| {
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let len = v.norm().max(1e-3);
            v / len * rng.gen_range(min_norm..min_norm + 1.5)
        })
        .collect();
    NodalVectorField::new(values).unwrap()
}

/// Area of a boundary polygon that is star-shaped about the origin, as the
/// sum of the fan triangles over its (unoriented) edges.
fn star_polygon_area(mesh: &Mesh) -> f64 {
    mesh.boundary_edges()
        .iter()
        .map(|&[a, b]| {
            let (p, q) = (mesh.nodes()[a], mesh.nodes()[b]);
            0.5 * (p[0] * q[1] - q[0] * p[1]).abs()
        })
        .sum()
}

#[test]
fn structured_squares_satisfy_the_angle_condition_exactly() {
    for n in 1..=12 {
        let report = generate_structured_square(n).unwrap().check_angle_condition();
        assert!(report.satisfied);
        assert!(report.worst_value >= 0.0, "n={n}: {}", report.worst_value);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn disks_are_weakly_acute_with_positive_areas(radius in 0.8f64..6.0, h in 0.2f64..1.0) {
        let mesh = generate_disk(radius, h).unwrap();
        prop_assert!(mesh.check_angle_condition().satisfied);
        prop_assert!((0..mesh.num_triangles()).all(|t| mesh.area(t) > 0.0));
        let polygon = star_polygon_area(&mesh);
        prop_assert!((mesh.total_area() - polygon).abs() <= 1e-10 * polygon);
        prop_assert!(mesh.max_edge_length() <= 1.25 * h.min(radius));
    }

    #[test]
    fn normalization_is_one_lipschitz_outside_the_ball(
        a in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
        b in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
    ) {
        let (a, b) = (Vec3::new(a.0, a.1, a.2), Vec3::new(b.0, b.1, b.2));
        prop_assume!(a.norm() >= 1.0 && b.norm() >= 1.0);
        prop_assert!((a.normalize() - b.normalize()).norm() <= (a - b).norm() + 1e-15);
    }

    #[test]
    fn bilinear_form_is_symmetric_and_nonnegative(
        seed in any::<u64>(), kappa in -3.0f64..3.0, gamma in -3.0f64..3.0, n in 1usize..6,
    ) {
        let mesh = generate_structured_square(n).unwrap();
        let op = DiscreteOperator::assemble(&mesh, ModelParams::new(kappa, gamma).unwrap());
        let v = field_with(mesh.num_nodes(), seed, 0.0);
        let w = field_with(mesh.num_nodes(), seed ^ 0x9e37, 0.0);
        let scale = v.to_flat().iter().map(|x| x * x).sum::<f64>().sqrt()
            * w.to_flat().iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((op.a(&v, &w) - op.a(&w, &v)).abs() <= 1e-12 * scale.max(1.0));
        prop_assert!(op.energy(&v) >= 0.0);
    }

    #[test]
    fn energy_split_holds_for_tangent_updates(
        seed in any::<u64>(), kappa in -2.0f64..2.0, gamma in -2.0f64..2.0, n in 1usize..5,
    ) {
        let mesh = generate_structured_square(n).unwrap();
        let params = ModelParams::new(kappa, gamma).unwrap();
        let u = initial_random(&mesh, seed);
        let step = solve_tangent_update(&mesh, &u, params, &SolverConfig::default()).unwrap();
        let op = DiscreteOperator::assemble(&mesh, params);
        let (ju, jw, jd) = (op.energy(&u), op.energy(&step.w), op.energy(&u.sub(&step.w)));
        prop_assert!((jd - (ju - jw)).abs() <= 1e-10 * ju.max(1.0));
        let tangency = u.values().iter().zip(step.w.values()).map(|(a, b)| a.dot(b).abs()).fold(0.0, f64::max);
        prop_assert!(tangency <= 1e-10);
    }

    #[test]
    fn stated_lower_energy_bound_holds(
        seed in any::<u64>(), kappa in -3.0f64..3.0, gamma in -3.0f64..3.0,
    ) {
        let mesh = generate_structured_square(4).unwrap();
        let u = field_with(mesh.num_nodes(), seed, 0.0);
        let j = DiscreteOperator::assemble(&mesh, ModelParams::new(kappa, gamma).unwrap()).energy(&u);
        let grad = dirichlet_seminorm_sq(&mesh, &u);
        let l = lumped_norm_sq(&mesh.lumped_weights(), &u);
        prop_assert!(grad <= 4.0 * j + 4.0 * kappa * kappa * l + 1e-10);
        // the upper bound that holds uniformly carries 2κ²
        prop_assert!(j <= grad + (2.0 * kappa * kappa + gamma.abs() / 2.0) * l + 1e-10);
    }

    #[test]
    fn dimensionless_setup_matches_independent_formulas(
        a in 1e-12f64..1e-10, k in 0.0f64..1e7, ms in 1e5f64..2e6, d in 0.0f64..1e-2, diameter in 1e-8f64..1e-6,
    ) {
        let mat = MaterialParams { a, k, ms, mu0: MaterialParams::MU0, d };
        let s = nondimensionalize(&mat, diameter).unwrap();
        let mu0 = 4e-7 * std::f64::consts::PI;
        let demag = mu0 * ms.powi(2);
        let ell = (2.0 * a / demag).sqrt();
        let kappa = d / (2.0 * a) * ell;
        let gamma = 1.0 - 2.0 * k / demag - kappa.powi(2);
        prop_assert!((s.ell_ex - ell).abs() <= 1e-12 * ell);
        prop_assert!((s.kappa - kappa).abs() <= 1e-12 * kappa.max(1e-300));
        prop_assert!((s.gamma - gamma).abs() <= 1e-12 * gamma.abs().max(1.0));
        prop_assert!((s.disk_radius - diameter / (2.0 * ell)).abs() <= 1e-12 * s.disk_radius);
    }
}

/// Nodal projection of fields with nodal moduli ≥ 1 never increases the
/// κ = 0 energy on a weakly acute mesh.
#[test]
fn projection_decreases_energy_without_helicity() {
    let mesh = generate_structured_square(6).unwrap();
    for (i, gamma) in [-1.5, -0.3, 0.0, 0.7, 2.0].into_iter().enumerate() {
        let op = DiscreteOperator::assemble(&mesh, ModelParams::new(0.0, gamma).unwrap());
        for seed in 0..200 {
            let v = field_with(mesh.num_nodes(), 1000 * i as u64 + seed, 1.0);
            let p = nodal_project(&v).unwrap();
            assert!(op.energy(&p) <= op.energy(&v) + 1e-12, "gamma {gamma}, seed {seed}");
        }
    }
}

/// The stated upper bound with κ² fails for a twisted field whose
/// derivative lines up with the helical term.
#[test]
fn stated_upper_bound_fails_for_a_helix() {
    let mesh = generate_structured_square(32).unwrap();
    for kappa in [0.5f64, 1.0, 2.0] {
        let u = nodal_interpolate(&mesh, |x| Vec3::new(0.0, (kappa * x[0]).sin(), (kappa * x[0]).cos())).unwrap();
        let j = DiscreteOperator::assemble(&mesh, ModelParams::new(kappa, 0.0).unwrap()).energy(&u);
        let grad = dirichlet_seminorm_sq(&mesh, &u);
        let l = lumped_norm_sq(&mesh.lumped_weights(), &u);
        assert!(j > grad + kappa * kappa * l, "kappa {kappa}");
        assert!(j <= grad + 2.0 * kappa * kappa * l);
    }
}

/// `J_h − E` equals `(κ² + max(0, −γ))/2 · |Ω|` on unit fields up to the
/// lumping error, which shrinks under refinement.
#[test]
fn surrogate_offset_converges_under_refinement() {
    let params = ModelParams::new(0.7, -0.4).unwrap();
    let expected = 0.5 * (0.7f64.powi(2) + 0.4);
    let errors: Vec<f64> = [4, 8, 16, 32]
        .into_iter()
        .map(|n| {
            let mesh = generate_structured_square(n).unwrap();
            let u = nodal_interpolate(&mesh, |x| {
                let t = 1.3 * x[0] + 0.4 * x[1];
                Vec3::new(t.sin() * x[1].cos(), t.cos() * x[1].cos(), x[1].sin())
            })
            .unwrap();
            let b = energy_breakdown(&mesh, &u, &params).unwrap();
            (b.offset_check - expected * mesh.total_area()).abs()
        })
        .collect();
    for w in errors.windows(2) {
        assert!(w[1] < 0.6 * w[0], "{errors:?}");
    }
    assert!(errors[3] < 1e-2, "{errors:?}");
}

#[test]
fn scalar_stiffness_has_nonpositive_off_diagonals_on_disks() {
    let mesh = generate_disk(3.0, 0.3).unwrap();
    let k = scalar_stiffness(&mesh);
    for z in 0..mesh.num_nodes() {
        for (c, b) in k.row(z) {
            if c != z {
                assert!(b[(0, 0)] <= 1e-14, "({z}, {c}) = {}", b[(0, 0)]);
            }
        }
    }
}

#[test]
fn sweep_runs_are_deterministic() {
    let cfg = SweepConfig {
        h: 1.0,
        ..Default::default()
    };
    let setup = nondimensionalize(&cfg.material, cfg.disk_diameter).unwrap();
    let mesh = generate_disk(setup.disk_radius, cfg.h).unwrap();
    let a = run_single(&mesh, 4e-3, InitialCondition::Skyrmion, &cfg).unwrap();
    let b = run_single(&mesh, 4e-3, InitialCondition::Skyrmion, &cfg).unwrap();
    assert_eq!(a.field, b.field);
    assert_eq!(a.trace.iterations, b.trace.iterations);
    assert_eq!(a.classification, b.classification);
}

/// Regression: the skyrmion state at `D = 4e-3` on the desk-scale disk.
#[test]
fn desk_scale_skyrmion_at_d4() {
    let cfg = SweepConfig::default();
    let setup = nondimensionalize(&cfg.material, cfg.disk_diameter).unwrap();
    let mesh = generate_disk(setup.disk_radius, cfg.h).unwrap();
    assert_eq!(mesh.num_nodes(), 2523);
    let r = run_single(&mesh, 4e-3, InitialCondition::Skyrmion, &cfg).unwrap();
    assert!(r.trace.converged());
    assert_eq!(r.trace.energy_increases, 0);
    assert_eq!(r.classification, StateClass::Skyrmion);
    let last = r.trace.rows.last().unwrap();
    assert!(last.j_w <= cfg.tol);
    let centre = r
        .field
        .values()
        .iter()
        .zip(mesh.nodes())
        .filter(|(_, p)| p[0].hypot(p[1]) < 0.5)
        .map(|(v, _)| v.z)
        .fold(f64::INFINITY, f64::min);
    assert!(centre < -0.9, "core not reversed: {centre}");
}
