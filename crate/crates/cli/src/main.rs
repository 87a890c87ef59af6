#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use viscofem::audit::certify;
use viscofem::mesh::{audit_mesh, Point, SimplicialMesh};
use viscofem::scenarios::{cavity_force, cavity_vortex, random_spd_stress};
use viscofem::scheme::{DiscreteState, InitialStress, Scheme};
use viscofem::stepper::{delta_continuation, run, ContinuationReport, Trajectory};
use viscofem::tensor::{RegParams, Regime, SymMat};

use config::{ForcingSpec, InitialSpec, RunConfig};

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_STEP: u8 = 3;

#[derive(Parser)]
#[command(name = "viscofem", version, about = "Free-energy-audited Oldroyd-B finite element runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured simulation (or delta continuation) and certify it.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Element-parallel assembly.
        #[arg(long)]
        parallel_assembly: bool,
        /// Write a VTK snapshot every k steps (and at the end).
        #[arg(long, value_name = "K")]
        snapshots: Option<usize>,
    },
    /// Check a mesh file against the mesh hypotheses.
    MeshAudit {
        #[arg(long)]
        mesh: PathBuf,
    },
    /// Run a named property suite and print its report.
    Props {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

fn io_fail(path: &Path, e: std::io::Error) -> Failure {
    fail(EXIT_FAIL, format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| io_fail(path, e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, parallel_assembly, snapshots } => cmd_run(&config, out, parallel_assembly, snapshots),
        Command::MeshAudit { mesh } => cmd_mesh_audit(&mesh),
        Command::Props { suite, seed } => cmd_props(&suite, seed),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_props(suite: &str, seed: u64) -> Result<u8, Failure> {
    let report = viscofem::props::run_suite(suite, seed)
        .ok_or_else(|| fail(EXIT_CONFIG, format!("unknown suite `{suite}` (known: {})", viscofem::props::SUITES.join(", "))))?
        .map_err(|e| fail(EXIT_FAIL, e.to_string()))?;
    print!("{}", report.to_text());
    Ok(if report.passed() { 0 } else { EXIT_FAIL })
}

fn cmd_mesh_audit(path: &Path) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    let mesh: SimplicialMesh<f64> =
        SimplicialMesh::from_text(&text).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    let a = audit_mesh(&mesh);
    println!("vertices = {}", mesh.n_vertices());
    println!("elements = {}", mesh.n_elements());
    println!("internal_facets = {}", mesh.internal_facets.len());
    println!("mesh_size = {:.16e}", mesh.mesh_size());
    println!("max_shape_ratio = {:.16e}", a.max_shape_ratio);
    println!("quasi_uniformity = {:.16e}", a.quasi_uniformity);
    println!("max_angle = {:.16e}", a.max_angle);
    println!("non_obtuse = {}", a.non_obtuse);
    for (k, angle) in &a.violations {
        println!("obtuse.{k} = {angle:.16e}");
    }
    println!("all_boundary_elements = {}", a.all_boundary_elements.len());
    let ok = a.non_obtuse && a.all_boundary_elements.is_empty();
    println!("verdict = {}", if ok { "pass" } else { "fail" });
    Ok(if ok { 0 } else { EXIT_FAIL })
}

fn initial_state(cfg: &RunConfig, scheme: &Scheme<f64>) -> Result<DiscreteState<f64>, Failure> {
    match cfg.initial {
        InitialSpec::Equilibrium => Ok(scheme.equilibrium(0.0)),
        InitialSpec::Cavity { vortex } => {
            let identity = |_: Point<f64>| SymMat::identity(2);
            scheme.initial_state(cavity_vortex(vortex), &InitialStress::Function(&identity), cfg.grid.dt0())
        }
        InitialSpec::RandomSpd { min, max, seed } => {
            scheme.initial_state(|_| [0.0, 0.0], &random_spd_stress(scheme, min, max, seed), cfg.grid.dt0())
        }
    }
    .map_err(|e| fail(EXIT_FAIL, format!("initial projection failed: {e}")))
}

fn continuation_text(rep: &ContinuationReport<f64>) -> String {
    let mut s = String::new();
    for (k, leg) in rep.legs.iter().enumerate() {
        let k = k + 1;
        s += &format!("continuation.{k}.delta = {:.16e}\n", leg.delta);
        s += &format!("continuation.{k}.completed_steps = {}\n", leg.completed_steps);
        s += &format!("continuation.{k}.negative_part = {:.16e}\n", leg.negative_part);
        s += &format!("continuation.{k}.min_eigenvalue = {:.16e}\n", leg.min_eigenvalue);
        s += &format!("continuation.{k}.min_slack = {:.16e}\n", leg.min_slack);
    }
    for (k, d) in rep.differences.iter().enumerate() {
        s += &format!("continuation.difference.{} = {d:.16e}\n", k + 1);
    }
    match &rep.unregularized_residual {
        Ok(r) => s += &format!("continuation.unregularized_residual = {r:.16e}\n"),
        Err(e) => s += &format!("continuation.unregularized_residual = none ({e})\n"),
    }
    s
}

fn cmd_run(path: &Path, out: Option<PathBuf>, parallel: bool, snapshots: Option<usize>) -> Result<u8, Failure> {
    let mut cfg = config::load(path).map_err(|e| fail(EXIT_CONFIG, e.to_string()))?;
    cfg.solver.parallel = parallel;
    if snapshots == Some(0) {
        return Err(fail(EXIT_CONFIG, "--snapshots must be >= 1"));
    }
    let scheme = Scheme::new(cfg.mesh.clone(), cfg.kind, cfg.velocity, cfg.params, cfg.regime)
        .map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    let out_dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&out_dir).map_err(|e| io_fail(&out_dir, e))?;

    let cavity = match cfg.forcing {
        ForcingSpec::Cavity { amplitude } => Some(cavity_force(amplitude)),
        _ => None,
    };
    let constant = match cfg.forcing {
        ForcingSpec::Constant { fx, fy } => Some(move |_: f64, _: Point<f64>| [fx, fy]),
        _ => None,
    };
    let forcing: Option<&(dyn Fn(f64, Point<f64>) -> Point<f64> + Sync)> = match (&cavity, &constant) {
        (Some(f), _) => Some(f),
        (_, Some(f)) => Some(f),
        _ => None,
    };

    let init = initial_state(&cfg, &scheme)?;
    let (traj, cert_scheme, extra, legs_ok): (Trajectory<f64>, Scheme<f64>, String, bool) = match &cfg.continuation {
        Some(schedule) => {
            let rep = delta_continuation(&scheme, &init, &cfg.grid, forcing, schedule, &cfg.solver)
                .map_err(|e| fail(EXIT_FAIL, e.to_string()))?;
            let last = *schedule.last().expect("validated non-empty");
            let leg_scheme = scheme.with_regime(Regime::Regularized(
                RegParams::new(last, cfg.regime.cutoff()).map_err(|e| fail(EXIT_CONFIG, e.to_string()))?,
            ));
            let legs_ok = rep.legs.iter().all(|l| l.failure.is_none() && !(l.min_slack < -cfg.solver.audit_tol));
            let text = continuation_text(&rep);
            (rep.final_trajectory, leg_scheme, text, legs_ok)
        }
        None => {
            let t = run(&scheme, init, &cfg.grid, forcing, &cfg.solver, None).map_err(|e| fail(EXIT_FAIL, e.to_string()))?;
            (t, scheme.clone(), String::new(), true)
        }
    };

    let mut cert = certify(&cert_scheme, &traj, cfg.grid.n_steps(), &cfg.hash, cfg.solver.audit_tol)
        .map_err(|e| fail(EXIT_FAIL, e.to_string()))?;
    cert.scheme = cfg.scheme_label.clone();
    cert.passed &= legs_ok;
    let csv = output::trace_csv(&cert_scheme, &traj).map_err(|e| fail(EXIT_FAIL, e.to_string()))?;
    write(&out_dir.join("trace.csv"), &csv)?;
    write(&out_dir.join("certificate.txt"), &(cert.to_text() + &extra))?;
    if let Some(k) = snapshots {
        let last = traj.states.len() - 1;
        for (n, st) in traj.states.iter().enumerate() {
            if n % k == 0 || n == last {
                let title = format!("{} step {n} t {:.6e}", cfg.scheme_label, st.t);
                write(&out_dir.join(format!("snapshot_{n:04}.vtk")), &output::vtk_snapshot(&cert_scheme, st, &title))?;
            }
        }
    }

    if let Some(f) = &traj.failure {
        let report = out_dir.join("failure.txt");
        let mut text = format!("step = {}\nmessage = {}\n", f.step, f.message);
        for (i, r) in f.residual_history.iter().enumerate() {
            text += &format!("residual.{i} = {r:.16e}\n");
        }
        write(&report, &text)?;
        eprintln!("error: {} (report: {})", f.message, report.display());
        return Ok(EXIT_STEP);
    }
    println!(
        "{}: {} steps, min slack {:.3e}, verdict {} ({})",
        cfg.scheme_label,
        traj.audits.len(),
        cert.min_slack,
        if cert.passed { "pass" } else { "fail" },
        out_dir.join("certificate.txt").display()
    );
    Ok(if cert.passed { 0 } else { EXIT_FAIL })
}
