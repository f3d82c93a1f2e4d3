//! Subcommand implementations. Each returns the process exit code; errors
//! are mapped to codes by [`exit_code_for`].

use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use helimin::experiments::{
    counterexample_projection_aniso, default_helical_scan, helical_scan, initial_constant, initial_random,
    initial_skyrmion, nondimensionalize, run_dsweep, skyrmion_chirality, DimensionlessSetup, InitialCondition,
    MaterialParams, SweepConfig, HELICAL_REPORTED_INCREASE, HELICAL_VECTORS,
};
use helimin::fields::{NodalVectorField, Vec3};
use helimin::io::{load_field_for, save_field, write_trace, write_vtk};
use helimin::mesh::{generate_disk, generate_structured_square, Mesh};
use helimin::{minimize as run_minimize, Error, MinimizeConfig, ModelParams, Termination};
use log::info;

use crate::config::ConfigFile;
use crate::exit;
use crate::{CounterexampleArgs, ExportArgs, MeshCheckArgs, MeshSource, MinimizeArgs, ParamArgs, SweepArgs};

const DEFAULT_H: f64 = 0.25;
const DEFAULT_DIAMETER: f64 = 80e-9;
const DEFAULT_SKYRMION_RADIUS: f64 = 15e-9;
const DEFAULT_LAYER_WIDTH: f64 = 2e-9;

/// Non-convergence of the linear solver counts as non-convergence of the
/// run; everything else is an input error.
pub fn exit_code_for(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::SolverDiverged { .. }) => exit::NOT_CONVERGED,
        _ => exit::INPUT,
    }
}

enum MeshChoice {
    Square(usize),
    File(PathBuf),
    Disk(f64),
}

fn mesh_choice(src: &MeshSource, config: &ConfigFile) -> Result<Option<MeshChoice>> {
    let from_flags = match (src.square, &src.mesh, src.disk) {
        (Some(n), _, _) => Some(MeshChoice::Square(n)),
        (_, Some(p), _) => Some(MeshChoice::File(p.clone())),
        (_, _, Some(r)) => Some(MeshChoice::Disk(r)),
        _ => None,
    };
    if from_flags.is_some() {
        return Ok(from_flags);
    }
    let mut found = Vec::new();
    if let Some(n) = config.get::<usize>("square")? {
        found.push(MeshChoice::Square(n));
    }
    if let Some(p) = config.get::<PathBuf>("mesh")? {
        found.push(MeshChoice::File(p));
    }
    if let Some(r) = config.get::<f64>("disk")? {
        found.push(MeshChoice::Disk(r));
    }
    if found.len() > 1 {
        bail!("config file gives more than one of 'square', 'mesh', 'disk'");
    }
    Ok(found.pop())
}

fn build_mesh(choice: MeshChoice, h: f64) -> Result<Mesh> {
    Ok(match choice {
        MeshChoice::Square(n) => generate_structured_square(n)?,
        MeshChoice::File(p) => Mesh::load(&p).with_context(|| format!("loading mesh {}", p.display()))?,
        MeshChoice::Disk(r) => generate_disk(r, h)?,
    })
}

fn mesh_width(src: &MeshSource, config: &ConfigFile) -> Result<f64> {
    Ok(config.merge(src.h, "h")?.unwrap_or(DEFAULT_H))
}

fn require_mesh(src: &MeshSource, config: &ConfigFile) -> Result<Mesh> {
    let choice = mesh_choice(src, config)?.ok_or_else(|| anyhow!("no mesh given: use --square, --mesh or --disk"))?;
    build_mesh(choice, mesh_width(src, config)?)
}

/// Resolved model parameters, with the scaling when they came from a material.
struct Model {
    params: ModelParams,
    setup: Option<DimensionlessSetup>,
}

fn material(name: &str) -> Result<MaterialParams> {
    match name.to_ascii_lowercase().as_str() {
        "cobalt" | "co" => Ok(MaterialParams::cobalt(0.0)),
        other => bail!("unknown material '{other}' (supported: cobalt)"),
    }
}

/// Either `(κ, γ)` or a material, never both. Flags win over the config
/// file as a group: any parameter flag hides the config's parameter keys
/// of the other kind.
fn resolve_model(p: &ParamArgs, config: &ConfigFile) -> Result<Model> {
    let flag_direct = p.kappa.is_some() || p.gamma.is_some();
    let flag_material = p.material.is_some();
    let (direct, mat) = if flag_direct || flag_material {
        (flag_direct, flag_material)
    } else {
        let direct = config.contains("kappa") || config.contains("gamma");
        let mat = config.contains("material");
        if direct && mat {
            bail!("config file gives both kappa/gamma and a material; use exactly one");
        }
        (direct, mat)
    };
    if direct {
        let kappa = config.merge(p.kappa, "kappa")?.unwrap_or(0.0);
        let gamma = config.merge(p.gamma, "gamma")?.unwrap_or(0.0);
        return Ok(Model {
            params: ModelParams::new(kappa, gamma)?,
            setup: None,
        });
    }
    if mat {
        let name: String = config.merge(p.material.clone(), "material")?.unwrap_or_default();
        let d = config.merge(p.d, "D")?.unwrap_or(0.0);
        let diameter = config.merge(p.diameter, "diameter")?.unwrap_or(DEFAULT_DIAMETER);
        let setup = nondimensionalize(&material(&name)?.with_d(d), diameter)?;
        info!(
            "{name} at D = {d:e}: ℓ_ex = {:e} m, κ = {}, γ = {}, disk radius {}",
            setup.ell_ex, setup.kappa, setup.gamma, setup.disk_radius
        );
        return Ok(Model {
            params: setup.params()?,
            setup: Some(setup),
        });
    }
    bail!("no model parameters: give --kappa/--gamma or --material")
}

pub fn mesh_check(args: &MeshCheckArgs, config: &ConfigFile) -> Result<u8> {
    let mesh = require_mesh(&args.source, config)?;
    if let Some(path) = &args.save {
        mesh.save(path).with_context(|| format!("writing mesh {}", path.display()))?;
    }
    println!("nodes:          {}", mesh.num_nodes());
    println!("triangles:      {}", mesh.num_triangles());
    println!("max edge:       {:.6}", mesh.max_edge_length());
    println!("area:           {:.6}", mesh.total_area());
    let report = mesh.check_angle_condition();
    println!("{report}");
    if let Some(path) = &args.save {
        println!("mesh written to {}", path.display());
    }
    Ok(if report.satisfied { exit::OK } else { exit::ANGLE_CONDITION })
}

fn initial_state(
    ic: &str,
    mesh: &Mesh,
    model: &Model,
    args: &MinimizeArgs,
    config: &ConfigFile,
) -> Result<NodalVectorField> {
    Ok(match ic {
        "e1" => NodalVectorField::constant(mesh.num_nodes(), Vec3::x()),
        "e2" => NodalVectorField::constant(mesh.num_nodes(), Vec3::y()),
        "e3" | "constant" => initial_constant(mesh),
        "random" => initial_random(mesh, config.merge(args.seed, "seed")?.unwrap_or(0)),
        "skyrmion" => {
            let setup = match model.setup {
                Some(s) => s,
                None => nondimensionalize(&MaterialParams::cobalt(0.0), DEFAULT_DIAMETER)?,
            };
            let r0 = config
                .merge(args.skyrmion_radius, "skyrmion-radius")?
                .unwrap_or_else(|| setup.scale(DEFAULT_SKYRMION_RADIUS));
            let eps = config
                .merge(args.layer_width, "layer-width")?
                .unwrap_or_else(|| setup.scale(DEFAULT_LAYER_WIDTH));
            initial_skyrmion(mesh, r0, eps, skyrmion_chirality(model.params.kappa))?
        }
        path => load_field_for(path, mesh).with_context(|| {
            format!("initial state '{path}' is neither e1, e2, e3, skyrmion, random nor a readable field file")
        })?,
    })
}

pub fn minimize(args: &MinimizeArgs, config: &ConfigFile) -> Result<u8> {
    let model = resolve_model(&args.params, config)?;
    let mesh = match mesh_choice(&args.source, config)? {
        Some(choice) => build_mesh(choice, mesh_width(&args.source, config)?)?,
        None => match model.setup {
            Some(setup) => generate_disk(setup.disk_radius, mesh_width(&args.source, config)?)?,
            None => bail!("no mesh given: use --square, --mesh or --disk"),
        },
    };
    let ic: String = config.merge(args.ic.clone(), "ic")?.unwrap_or_else(|| "e3".into());
    let u0 = initial_state(&ic, &mesh, &model, args, config)?;

    let mut cfg = MinimizeConfig::new(model.params);
    if let Some(tol) = config.merge(args.tol, "tol")? {
        cfg.tol = tol;
    }
    if let Some(n) = config.merge(args.max_iters, "max-iters")? {
        cfg.max_outer = n;
    }
    if let Some(rtol) = config.merge(args.rtol, "rtol")? {
        cfg.solver.rtol = rtol;
    }
    if let Some(n) = config.merge(args.solver_max_iters, "solver-max-iters")? {
        cfg.solver.max_iters = Some(n);
    }
    cfg.solver.uniqueness_constraints = !(args.no_uniqueness_constraints || config.flag("no-uniqueness-constraints")?);

    info!(
        "minimizing on {} nodes with κ = {}, γ = {}, ic = {ic}",
        mesh.num_nodes(),
        model.params.kappa,
        model.params.gamma
    );
    let (u, trace) = run_minimize(&mesh, &u0, &cfg)?;

    let out: PathBuf = config.merge(args.out.clone(), "out")?.unwrap_or_else(|| "helimin-out".into());
    let name: String = config.merge(args.name.clone(), "name")?.unwrap_or_else(|| "run".into());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let file = |ext: &str| out.join(format!("{name}.{ext}"));
    save_field(file("field"), &u)?;
    write_trace(file("trace.csv"), &trace)?;
    if !(args.no_vtk || config.flag("no-vtk")?) {
        write_vtk(file("vtk"), &mesh, &u)?;
    }

    println!("final J_h:      {:.12e}", trace.final_energy);
    println!("iterations:     {}", trace.iterations);
    println!("EL residual:    {:.6e}", trace.final_el_residual);
    println!("angle condition: {}", if trace.angle_condition { "satisfied" } else { "violated" });
    println!("outputs:        {}", out.join(&name).display());
    Ok(match trace.termination {
        Termination::Converged => exit::OK,
        Termination::MaxOuter => {
            eprintln!("no convergence within {} iterations", cfg.max_outer);
            exit::NOT_CONVERGED
        }
    })
}

pub fn counterexamples(args: &CounterexampleArgs, config: &ConfigFile) -> Result<u8> {
    let eps = config.merge(args.eps, "eps")?.unwrap_or(1.0);
    let c = counterexample_projection_aniso(eps)?;
    println!("anisotropy counterexample, eps = {eps}");
    println!("  {:<22} {:>18} {:>18}", "", "quadrature ×48", "closed form ×48");
    println!("  {:<22} {:>18.12} {:>18.12}", "‖v_h·e3‖²", 48.0 * c.before, 48.0 * c.closed_before);
    println!("  {:<22} {:>18.12} {:>18.12}", "‖Π_h v_h·e3‖²", 48.0 * c.after, 48.0 * c.closed_after);
    let closed = c.matches_closed_forms(1e-13);
    let increases = c.increases();
    println!("  closed forms match: {closed}; projection increases: {increases}");

    let [a, b, cc] = HELICAL_VECTORS.map(Vec3::from);
    let scan = if args.helical_scan || config.flag("helical-scan")? {
        helical_scan(a, b, cc, &[-2.0, -1.0, -0.5, 0.5, 1.0, 2.0], &[-1.0, 0.0, 1.0])?
    } else {
        default_helical_scan()?
    };
    println!("helical counterexample (reference increase {HELICAL_REPORTED_INCREASE:e})");
    println!("  {:>6} {:>6} {:>16} {:>16} {:>13}", "kappa", "gamma", "J_h(v)", "J_h(Π v)", "delta");
    for h in &scan {
        println!(
            "  {:>6} {:>6} {:>16.10} {:>16.10} {:>13.4e}{}",
            h.params.kappa,
            h.params.gamma,
            h.energy_before,
            h.energy_after,
            h.delta(),
            if h.delta() > 0.0 { "  increase" } else { "" }
        );
    }
    let helical_positive = scan.iter().any(|h| h.delta() > 0.0);
    println!("  energy increase found: {helical_positive}");

    let ok = closed && (increases || eps >= 4.0 / 3.0) && helical_positive;
    Ok(if ok { exit::OK } else { exit::ASSERTION })
}

/// Parses `START:END:UNIT` into `k·UNIT` for `k = START, START+1, ..., END`.
fn parse_d_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [start, end, unit] = parts[..] else {
        bail!("--D-range must have the form START:END:UNIT, got '{s}'");
    };
    let num = |t: &str| t.trim().parse::<f64>().with_context(|| format!("invalid number '{t}' in --D-range"));
    let (start, end, unit) = (num(start)?, num(end)?, num(unit)?);
    if unit.is_nan() || unit <= 0.0 || end < start || !start.is_finite() || !end.is_finite() {
        bail!("--D-range needs START ≤ END and UNIT > 0, got '{s}'");
    }
    let count = (end - start + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| (start + k as f64) * unit).collect())
}

pub fn sweep(args: &SweepArgs, config: &ConfigFile) -> Result<u8> {
    let mut cfg = SweepConfig::default();
    let name: String = config.merge(args.material.clone(), "material")?.unwrap_or_else(|| "cobalt".into());
    cfg.material = material(&name)?;
    if let Some(r) = config.merge(args.d_range.clone(), "D-range")? {
        cfg.d_values = parse_d_range(&r)?;
    }
    let ics: Vec<String> = if args.ic.is_empty() {
        config
            .get::<String>("ic")?
            .map(|s| s.split(',').map(|t| t.trim().to_string()).collect())
            .unwrap_or_default()
    } else {
        args.ic.clone()
    };
    if !ics.is_empty() {
        cfg.ics = ics.iter().map(|s| s.parse::<InitialCondition>()).collect::<Result<_, _>>()?;
    }
    if let Some(h) = config.merge(args.h, "h")? {
        cfg.h = h;
    }
    if let Some(d) = config.merge(args.diameter, "diameter")? {
        cfg.disk_diameter = d;
    }
    if let Some(t) = config.merge(args.tol, "tol")? {
        cfg.tol = t;
    }
    if let Some(n) = config.merge(args.max_iters, "max-iters")? {
        cfg.max_outer = n;
    }
    let out: PathBuf = config.merge(args.out.clone(), "out")?.unwrap_or_else(|| "sweep-out".into());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    cfg.out_dir = Some(out.clone());

    let (mesh, results) = run_dsweep(&cfg)?;
    println!("disk mesh: {} nodes, {} triangles", mesh.num_nodes(), mesh.num_triangles());
    println!("{:>10} {:>10} {:>18} {:>16} {:>10}", "D", "ic", "classification", "final J_h", "iterations");
    for r in &results {
        println!(
            "{:>10.1e} {:>10} {:>18} {:>16.8e} {:>10}",
            r.d,
            r.ic.as_str(),
            r.classification.as_str(),
            r.trace.final_energy,
            r.trace.iterations
        );
    }
    println!("summary written to {}", out.join("summary.csv").display());
    Ok(if results.iter().all(|r| r.trace.converged()) {
        exit::OK
    } else {
        exit::NOT_CONVERGED
    })
}

pub fn export(args: &ExportArgs, config: &ConfigFile) -> Result<u8> {
    let mesh = require_mesh(&args.source, config)?;
    let field_path: PathBuf = config
        .merge(args.field.clone(), "field")?
        .ok_or_else(|| anyhow!("no field given: use --field"))?;
    let out: PathBuf = config
        .merge(args.out.clone(), "out")?
        .ok_or_else(|| anyhow!("no output file given: use --out"))?;
    let field = load_field_for(&field_path, &mesh).with_context(|| format!("loading field {}", field_path.display()))?;
    write_vtk(&out, &mesh, &field).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(exit::OK)
}
