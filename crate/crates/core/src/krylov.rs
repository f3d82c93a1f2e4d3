//! Preconditioned MINRES for symmetric (possibly indefinite or singular)
//! systems, after Paige & Saunders (1975).
//!
//! The preconditioner is a positive diagonal. For a consistent singular
//! system the iterates converge to a solution whose null-space component is
//! inherited from the initial guess.

use crate::sparse::{dot, norm};

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinresConfig {
    /// Stop once the preconditioned residual estimate drops below
    /// `rtol · ‖b‖` (or `rtol · ‖r₀‖` when `b = 0`).
    pub rtol: f64,
    pub max_iters: usize,
}

#[derive(Debug, Clone)]
pub struct MinresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True relative residual `‖b − Ax‖ / ‖b‖` (absolute when `b = 0`).
    pub residual: f64,
    pub converged: bool,
}

pub fn minres<A: LinearOperator + ?Sized>(
    op: &A,
    inv_diag: &[f64],
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: MinresConfig,
) -> MinresOutcome {
    let n = op.dim();
    assert_eq!(b.len(), n);
    assert_eq!(inv_diag.len(), n);
    let precond = |r: &[f64]| -> Vec<f64> { r.iter().zip(inv_diag).map(|(a, d)| a * d).collect() };

    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut tmp = vec![0.0; n];
    op.apply(&x, &mut tmp);
    let mut r1: Vec<f64> = b.iter().zip(&tmp).map(|(bi, ai)| bi - ai).collect();
    let mut y = precond(&r1);
    let beta1 = dot(&r1, &y).max(0.0).sqrt();

    let b_norm_m = dot(b, &precond(b)).max(0.0).sqrt();
    let target = cfg.rtol * if b_norm_m > 0.0 { b_norm_m } else { beta1 };

    if beta1 <= target || beta1 == 0.0 {
        return finish(op, b, x, 0, true);
    }

    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = vec![0.0; n];
    let mut w1;
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];

    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        let s = 1.0 / beta;
        v.iter_mut().zip(&y).for_each(|(vi, yi)| *vi = s * yi);
        op.apply(&v, &mut y);
        if iterations >= 2 {
            let f = beta / oldb;
            y.iter_mut().zip(&r1).for_each(|(yi, ri)| *yi -= f * ri);
        }
        let alfa = dot(&v, &y);
        let f = alfa / beta;
        y.iter_mut().zip(&r2).for_each(|(yi, ri)| *yi -= f * ri);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        y = precond(&r2);
        oldb = beta;
        beta = dot(&r2, &y).max(0.0).sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        w1 = std::mem::take(&mut w2);
        w2 = std::mem::take(&mut w);
        w = (0..n)
            .map(|i| (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma)
            .collect();
        x.iter_mut().zip(&w).for_each(|(xi, wi)| *xi += phi * wi);

        if phibar <= target || beta == 0.0 {
            converged = true;
            break;
        }
    }
    finish(op, b, x, iterations, converged)
}

fn finish<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
) -> MinresOutcome {
    let mut ax = vec![0.0; b.len()];
    op.apply(&x, &mut ax);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
    let bn = norm(b);
    let residual = if bn > 0.0 { norm(&r) / bn } else { norm(&r) };
    MinresOutcome {
        x,
        iterations,
        residual,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};

    struct Dense(DMatrix<f64>);

    impl LinearOperator for Dense {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            let r = &self.0 * DVector::from_column_slice(x);
            y.copy_from_slice(r.as_slice());
        }
    }

    fn cfg() -> MinresConfig {
        MinresConfig { rtol: 1e-12, max_iters: 500 }
    }

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &m + m.transpose()
    }

    #[test]
    fn spd_system() {
        let m = random_symmetric(30, 1);
        let a = &m * &m + DMatrix::identity(30, 30);
        let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let inv: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
        let out = minres(&Dense(a.clone()), &inv, &b, None, cfg());
        assert!(out.converged);
        let exact = a.lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let err = (DVector::from_column_slice(&out.x) - exact).amax();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn indefinite_system() {
        let a = random_symmetric(25, 2);
        let b: Vec<f64> = (0..25).map(|i| 1.0 + i as f64 * 0.1).collect();
        let out = minres(&Dense(a.clone()), &[1.0; 25], &b, None, cfg());
        assert!(out.converged);
        assert!(out.residual < 1e-9, "{}", out.residual);
    }

    #[test]
    fn singular_consistent_keeps_nullspace_of_guess() {
        // graph Laplacian of a path: null space = constants
        let n = 10;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            a[(i, i)] += 1.0;
            a[(i + 1, i + 1)] += 1.0;
            a[(i, i + 1)] -= 1.0;
            a[(i + 1, i)] -= 1.0;
        }
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        b[n - 1] = -1.0;
        let x0 = vec![5.0; n];
        let out = minres(&Dense(a), &vec![1.0; n], &b, Some(&x0), cfg());
        assert!(out.converged && out.residual < 1e-10);
        let mean: f64 = out.x.iter().sum::<f64>() / n as f64;
        assert!((mean - 5.0).abs() < 1e-10);
    }

    #[test]
    fn zero_rhs_zero_guess() {
        let a = DMatrix::identity(4, 4);
        let out = minres(&Dense(a), &[1.0; 4], &[0.0; 4], None, cfg());
        assert_eq!(out.iterations, 0);
        assert!(out.x.iter().all(|&v| v == 0.0));
    }
}
