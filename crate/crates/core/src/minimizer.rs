//! The outer iteration: tangential update, termination test on `J_h(w)`,
//! nodal projection of `u − w`.

use log::{debug, info, warn};

use crate::assembly::{el_residual, DiscreteOperator, ModelParams};
use crate::error::{Error, Result};
use crate::fields::{classify, is_in_mh, nodal_project, ConstraintClass, NodalVectorField, Vec3};
use crate::mesh::{Mesh, Point};
use crate::tangent::{solve_with_operator, SolverConfig};

/// Slack allowed when flagging an energy increase between two iterates.
pub const MONOTONICITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeConfig {
    /// Terminate once `J_h(w) ≤ tol`.
    pub tol: f64,
    pub max_outer: usize,
    pub params: ModelParams,
    pub solver: SolverConfig,
    /// Record the Euler–Lagrange residual every `log_every` iterations
    /// (and always at the final iterate); `0` disables the periodic log.
    pub log_every: usize,
}

impl MinimizeConfig {
    pub fn new(params: ModelParams) -> Self {
        Self {
            tol: 1e-8,
            max_outer: 100_000,
            params,
            solver: SolverConfig::default(),
            log_every: 25,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidArgument("max_outer must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub n: usize,
    pub j_u: f64,
    /// `J_h(w^n)`; on a row where `J_h(u^n) ≤ tol` the update is not
    /// computed and this holds the bound `J_h(u^n)` instead.
    pub j_w: f64,
    pub el_residual: Option<f64>,
    /// `J_h(u^{n}) > J_h(u^{n-1}) + MONOTONICITY_SLACK`.
    pub energy_increase: bool,
    /// `|J_h(u − w) − (J_h(u) − J_h(w))|` for this step's update.
    pub split_defect: f64,
    pub solver_iterations: usize,
    /// True relative residual of the reduced linear system.
    pub solver_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// `J_h(w) ≤ tol` was reached.
    Converged,
    /// `max_outer` iterations without reaching the tolerance.
    MaxOuter,
}

#[derive(Debug, Clone)]
pub struct MinimizeTrace {
    pub rows: Vec<TraceRow>,
    /// Number of projection steps performed.
    pub iterations: usize,
    pub termination: Termination,
    pub angle_condition: bool,
    pub energy_increases: usize,
    pub final_energy: f64,
    pub final_el_residual: f64,
}

impl MinimizeTrace {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// Largest single-step increase of `J_h(u^n)` (negative if strictly decreasing).
    pub fn max_energy_step(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[1].j_u - w[0].j_u)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_split_defect_ratio(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.split_defect / r.j_u.max(1.0))
            .fold(0.0, f64::max)
    }

    /// CSV with columns `n,J_u,J_w,el_residual,energy_increase`; the
    /// residual column is empty on rows where it was not computed.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,J_u,J_w,el_residual,energy_increase\n");
        for r in &self.rows {
            let el = r.el_residual.map(|e| format!("{e:e}")).unwrap_or_default();
            s.push_str(&format!(
                "{},{:e},{:e},{},{}\n",
                r.n, r.j_u, r.j_w, el, r.energy_increase as u8
            ));
        }
        s
    }
}

/// Runs the tangent-plane iteration from `u0 ∈ M_h`.
///
/// Exceeding `max_outer` is not an error: the last iterate is returned with
/// [`Termination::MaxOuter`].
pub fn minimize(mesh: &Mesh, u0: &NodalVectorField, cfg: &MinimizeConfig) -> Result<(NodalVectorField, MinimizeTrace)> {
    cfg.validate()?;
    u0.check_mesh(mesh)?;
    if !is_in_mh(u0) {
        return Err(Error::InvalidArgument("initial field is not nodally unit length".into()));
    }
    let report = mesh.check_angle_condition();
    if !report.satisfied {
        warn!(
            "mesh violates the angle condition on {} edges (worst {:e}); energy decrease is not guaranteed",
            report.num_violations(),
            report.worst_value
        );
    }

    let op = DiscreteOperator::assemble(mesh, cfg.params);
    let mut u = u0.clone();
    let mut rows = Vec::new();
    let mut increases = 0;
    let mut prev_energy: Option<f64> = None;
    let mut n = 0;
    let termination = loop {
        let j_u = op.energy(&u);
        let energy_increase = prev_energy.is_some_and(|p| j_u > p + MONOTONICITY_SLACK);
        if energy_increase {
            increases += 1;
            debug!("energy increase at n = {n}: {:e}", j_u - prev_energy.unwrap_or(j_u));
        }
        prev_energy = Some(j_u);

        // The exact update satisfies J_h(u − w) = J_h(u) − J_h(w) ≥ 0, so
        // J_h(w) ≤ J_h(u): once J_h(u) ≤ tol the termination test holds
        // without solving (near-constant fields make that solve singular).
        if j_u <= cfg.tol {
            let el = (cfg.log_every > 0 && n % cfg.log_every == 0)
                .then(|| el_residual(mesh, &u, &cfg.params))
                .transpose()?;
            rows.push(TraceRow {
                n,
                j_u,
                j_w: j_u,
                el_residual: el,
                energy_increase,
                split_defect: 0.0,
                solver_iterations: 0,
                solver_residual: 0.0,
            });
            break Termination::Converged;
        }

        let solve = solve_with_operator(&op, &u, &cfg.solver)?;
        let w = solve.w;
        let j_w = op.energy(&w);
        let step = u.sub(&w);
        let split_defect = (op.energy(&step) - (j_u - j_w)).abs();

        let el = (cfg.log_every > 0 && n % cfg.log_every == 0)
            .then(|| el_residual(mesh, &u, &cfg.params))
            .transpose()?;
        rows.push(TraceRow {
            n,
            j_u,
            j_w,
            el_residual: el,
            energy_increase,
            split_defect,
            solver_iterations: solve.iterations,
            solver_residual: solve.residual,
        });

        if j_w <= cfg.tol {
            break Termination::Converged;
        }
        if n >= cfg.max_outer {
            break Termination::MaxOuter;
        }
        let class = classify(&step, None)?;
        if !matches!(class.class, ConstraintClass::InMhPlus | ConstraintClass::InMh) {
            return Err(Error::ConstraintViolation {
                node: 0,
                message: format!("u - w classified as {:?}", class.class),
            });
        }
        u = nodal_project(&step)?;
        n += 1;
    };

    let final_el_residual = match rows.last() {
        Some(TraceRow { el_residual: Some(e), .. }) => *e,
        _ => el_residual(mesh, &u, &cfg.params)?,
    };
    if let Some(last) = rows.last_mut() {
        last.el_residual = Some(final_el_residual);
    }
    let final_energy = op.energy(&u);
    match termination {
        Termination::Converged => info!("terminated after {n} iterations, J_h = {final_energy:e}"),
        Termination::MaxOuter => warn!("no convergence after {n} iterations, J_h = {final_energy:e}"),
    }
    if increases > 0 {
        info!("{increases} energy increases observed");
    }
    Ok((
        u,
        MinimizeTrace {
            rows,
            iterations: n,
            termination,
            angle_condition: report.satisfied,
            energy_increases: increases,
            final_energy,
            final_el_residual,
        },
    ))
}

/// Replaces node values inside `region` by `normalize(ε·(x, y, 0) − e₃)`,
/// a small divergent perturbation of the `−e₃` state.
pub fn perturb_divergent<F>(mesh: &Mesh, u: &NodalVectorField, eps: f64, region: F) -> Result<NodalVectorField>
where
    F: Fn(Point) -> bool,
{
    u.check_mesh(mesh)?;
    let values = mesh
        .nodes()
        .iter()
        .zip(u.values())
        .map(|(p, v)| {
            if region(*p) {
                Vec3::new(eps * p[0], eps * p[1], -1.0).normalize()
            } else {
                *v
            }
        })
        .collect();
    NodalVectorField::new(values)
}
