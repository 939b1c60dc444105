//! `evoctl`: checks, solves, boundary-data reports and the visco-elastic
//! demo, driven by JSON configs and CSV signals.
//!
//! Exit codes: 0 pass, 1 a check failed (or the numerics refused), 2 usage
//! or configuration error.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use evocore::boundary_data::{build_bd_spaces, dtn_boundary_coordinates, DEFAULT_NULL_TOL};
use evocore::config::{build_system, run_checks, BuiltSystem, RunConfig, SystemConfig};
use evocore::discrete_ops::{
    build_grid_ops_2d, build_interval_ops, build_sym_elasticity_ops, verify_duality,
};
use evocore::evo_solver::{residual, DeltaSource};
use evocore::io::{read_quartet_bundle, write_json, write_quartet_bundle, MatrixJson};
use evocore::linalg::CVec;
use evocore::viscoelastic::{memory_effect, run_demo, MemoryKernel, DemoReport};
use evocore::weighted_time::{causality_defect, TimeSignal};
use evocore::EvoError;
use num_complex::Complex64;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "evoctl", version, about = "Evolutionary equations at desk scale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed of the randomized suites.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Contour samples for positivity checks.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Overrides the weight `nu` of the config.
    #[arg(long)]
    pub nu: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Runs the check suites of a config and writes report.json.
    Check {
        #[arg(long)]
        config: PathBuf,
        /// Report path (default: report.json next to the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Solves `(∂₀M(∂₀⁻¹) + A)U = F` for a CSV forcing.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `t0,v0,v1,...` adds a δ source at `t0` (real amplitudes).
        #[arg(long, value_parser = parse_impulse)]
        impulse: Vec<(f64, Vec<f64>)>,
        #[command(flatten)]
        common: Common,
    },
    /// Boundary data report of an operator quartet bundle.
    Bdspace {
        #[arg(long)]
        ops: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Exports an operator quartet as a bundle.
    Ops {
        #[arg(long, value_parser = ["interval", "grid2d", "elasticity2d"])]
        kind: String,
        /// Cells per direction.
        #[arg(long, num_args = 1..=2, required = true)]
        cells: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        length: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Example systems.
    Demo {
        #[command(subcommand)]
        demo: Demo,
    },
}

#[derive(Subcommand, Debug)]
pub enum Demo {
    /// Visco-elastic rod with boundary control and observation.
    Visco {
        #[arg(long)]
        config: PathBuf,
        /// Control CSV with two components (default: a smooth pulse).
        #[arg(long)]
        control: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_impulse(s: &str) -> Result<(f64, Vec<f64>), String> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if vals.len() < 2 {
        return Err("expected t0,v0[,v1...]".into());
    }
    Ok((vals[0], vals[1..].to_vec()))
}

/// A failed run: the message and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<EvoError> for Failure {
    fn from(e: EvoError) -> Self {
        let code = match e {
            EvoError::Config(_)
            | EvoError::Json(_)
            | EvoError::Io(_)
            | EvoError::Csv(_)
            | EvoError::Dimension(_)
            | EvoError::InvalidGrid(_)
            | EvoError::IncompatibleGrid(_) => EXIT_USAGE,
            _ => EXIT_FAIL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<i32, Failure>;

fn load_config(path: &Path, common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path).map_err(|e| Failure {
        code: EXIT_USAGE,
        message: format!("{}: {e}", path.display()),
    })?;
    if let Some(nu) = common.nu {
        cfg.set_nu(nu);
        cfg.validate()?;
    }
    Ok(cfg)
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn read_signal(path: &Path, cfg: &RunConfig) -> Result<TimeSignal, Failure> {
    let f = File::open(path).map_err(|e| Failure {
        code: EXIT_USAGE,
        message: format!("{}: {e}", path.display()),
    })?;
    let mut s = TimeSignal::read_csv(BufReader::new(f), cfg.grid.nu)?;
    s.grid = s.grid.with_symbol(cfg.grid.symbol);
    Ok(s)
}

fn write_signal(path: &Path, s: &TimeSignal) -> Result<(), Failure> {
    s.write_csv(File::create(path).map_err(EvoError::from)?)?;
    Ok(())
}

pub fn cmd_check(config: &Path, out: Option<&Path>, common: &Common) -> Outcome {
    let cfg = load_config(config, common)?;
    let report = run_checks(&cfg, &base_dir(config), common.seed, common.samples)?;
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| base_dir(config).join("report.json"));
    write_json(&out, &report)?;
    for c in &report.checks {
        println!(
            "{:<12} {}  value = {:.3e} (threshold {:.1e})",
            format!("{:?}", c.suite),
            if c.passed { "pass" } else { "FAIL" },
            c.value,
            c.threshold
        );
    }
    Ok(if report.passed { EXIT_PASS } else { EXIT_FAIL })
}

#[derive(Serialize)]
struct SolveOutput {
    residual: f64,
    margin: f64,
    causality_defect: f64,
    seed: u64,
    impulses: usize,
}

pub fn cmd_solve(
    config: &Path,
    input: &Path,
    out: &Path,
    impulses: &[(f64, Vec<f64>)],
    common: &Common,
) -> Outcome {
    let cfg = load_config(config, common)?;
    let f = read_signal(input, &cfg)?;
    let sys = build_system(&cfg.system, &base_dir(config), f.grid.nu)?;
    let evo = sys.evolutionary(f.grid.nu)?;
    let deltas: Vec<DeltaSource> = impulses
        .iter()
        .map(|(t, v)| DeltaSource {
            t_impulse: *t,
            amplitude: CVec::from_iterator(v.len(), v.iter().map(|x| Complex64::new(*x, 0.0))),
        })
        .collect();
    let margin = sys.positivity_margin(f.grid.nu, common.samples)?;
    if margin.is_nan() || margin <= 0.0 {
        eprintln!("sampled positivity margin {margin:e} is not positive");
        return Ok(EXIT_FAIL);
    }
    let u = match &sys {
        BuiltSystem::Visco(v) if deltas.is_empty() => v.solve(&f)?,
        _ => evocore::evo_solver::solve_frequency(&evo, &f, &deltas)?,
    };
    let res = residual(&evo, &u, &f, &deltas)?;
    let cd = causality_defect(|g| sys.solve(g), &f, f.grid.midpoint())?;
    let scale = f.norm();
    write_signal(out, &u)?;
    let report = SolveOutput {
        residual: res,
        margin,
        causality_defect: if scale > 0.0 { cd / scale } else { cd },
        seed: common.seed,
        impulses: deltas.len(),
    };
    write_json(&base_dir(out).join("report.json"), &report)?;
    println!("residual {res:.3e}  margin {margin:.4}");
    Ok(if res <= 1e-10 { EXIT_PASS } else { EXIT_FAIL })
}

#[derive(Serialize)]
struct BdReport {
    kind: String,
    n0: usize,
    n1: usize,
    dim_bd_g: usize,
    dim_bd_d: usize,
    duality: evocore::discrete_ops::DualityReport,
    hat: evocore::boundary_data::HatReport,
    angle_g: f64,
    angle_d: f64,
    /// DtN in BD coordinates.
    dtn: MatrixJson,
    /// Boundary values to flux.
    dtn_boundary: MatrixJson,
    passed: bool,
}

pub fn cmd_bdspace(ops: &Path, report: &Path) -> Outcome {
    let q = read_quartet_bundle(ops)?;
    let duality = verify_duality(&q);
    let bd = build_bd_spaces(&q, DEFAULT_NULL_TOL)?;
    let hat = bd.report();
    let dtn_b = dtn_boundary_coordinates(&q, &bd.metric)?;
    let passed = !duality.flagged
        && hat.inverse_defect.max(hat.adjoint_defect).max(hat.unitarity_defect)
            <= evocore::boundary_data::HAT_TOL
        && hat.dtn_unitarity_defect <= 1e-9
        && bd.angle_g.max(bd.angle_d) <= evocore::boundary_data::ANGLE_TOL;
    let r = BdReport {
        kind: q.meta.kind.clone(),
        n0: q.n0(),
        n1: q.n1(),
        dim_bd_g: bd.dim_bdg(),
        dim_bd_d: bd.dim_bdd(),
        duality,
        hat,
        angle_g: bd.angle_g,
        angle_d: bd.angle_d,
        dtn: MatrixJson::from(&bd.dtn),
        dtn_boundary: MatrixJson::from(&dtn_b),
        passed,
    };
    write_json(report, &r)?;
    println!(
        "BD(G) {}  BD(D) {}  unitarity {:.2e}  duality {:.2e}",
        r.dim_bd_g, r.dim_bd_d, hat.unitarity_defect, duality.max_defect
    );
    Ok(if passed { EXIT_PASS } else { EXIT_FAIL })
}

pub fn cmd_ops(kind: &str, cells: &[usize], length: f64, out: &Path) -> Outcome {
    let nx = cells[0];
    let ny = *cells.get(1).unwrap_or(&nx);
    let q = match kind {
        "interval" => build_interval_ops(nx, length / nx as f64)?,
        "grid2d" => build_grid_ops_2d(nx, ny, length / nx as f64)?,
        _ => build_sym_elasticity_ops(2, &[nx, ny], length / nx as f64)?,
    };
    write_quartet_bundle(&q, out)?;
    Ok(EXIT_PASS)
}

#[derive(Serialize)]
struct DemoBundle<'a> {
    #[serde(flatten)]
    report: &'a DemoReport,
    /// Relative difference to the run with the kernel switched off.
    memory_effect: Option<f64>,
    seed: u64,
    /// `domain_condition_ok` does not enter the exit code; see the docs.
    note: &'static str,
}

pub fn cmd_demo_visco(config: &Path, control: Option<&Path>, out: &Path, common: &Common) -> Outcome {
    let cfg = load_config(config, common)?;
    let SystemConfig::Viscoelastic { visco } = &cfg.system else {
        return Err(Failure {
            code: EXIT_USAGE,
            message: "demo visco needs a config with system kind \"viscoelastic\"".into(),
        });
    };
    let grid = cfg.grid.to_grid()?;
    let u = match control {
        Some(p) => read_signal(p, &cfg)?,
        None => TimeSignal::from_fn(grid, 2, |t, d| {
            let c = grid.t0 + grid.window() * (0.4 + 0.02 * d as f64);
            let w = grid.window() / 40.0;
            Complex64::new((-((t - c) / w).powi(2)).exp(), 0.0)
        }),
    };
    let sys = evocore::viscoelastic::assemble_visco_system(visco)?;
    let demo = run_demo(&sys, &u, None)?;
    let memory = if visco.kernel != MemoryKernel::zero() && u.norm() > 0.0 {
        Some(memory_effect(visco, &u)?)
    } else {
        None
    };
    fs::create_dir_all(out).map_err(EvoError::from)?;
    write_signal(&out.join("u.csv"), &u)?;
    write_signal(&out.join("v.csv"), &demo.v)?;
    write_signal(&out.join("T.csv"), &demo.t)?;
    write_signal(&out.join("w.csv"), &demo.w)?;
    write_signal(&out.join("y.csv"), &demo.y)?;
    let mut energy = csv::Writer::from_path(out.join("energy.csv")).map_err(EvoError::from)?;
    energy.write_record(["t", "energy"]).map_err(EvoError::from)?;
    for (k, e) in demo.energy.iter().enumerate() {
        energy
            .write_record([format!("{:?}", u.grid.time(k)), format!("{e:?}")])
            .map_err(EvoError::from)?;
    }
    energy.flush().map_err(EvoError::from)?;
    let r = &demo.report;
    write_json(
        &out.join("report.json"),
        &DemoBundle {
            report: r,
            memory_effect: memory,
            seed: common.seed,
            note: "exit code reflects the consistency checks",
        },
    )?;
    println!(
        "consistent {}  domain defect {:.3e}  residual {:.2e}  margin {:.4}",
        r.consistent, r.domain_condition_defect, r.residual, r.positivity_margin
    );
    Ok(if r.consistent { EXIT_PASS } else { EXIT_FAIL })
}

pub fn run(cli: Cli) -> i32 {
    let outcome = match &cli.command {
        Command::Check {
            config,
            out,
            common,
        } => cmd_check(config, out.as_deref(), common),
        Command::Solve {
            config,
            input,
            out,
            impulse,
            common,
        } => cmd_solve(config, input, out, impulse, common),
        Command::Bdspace { ops, report } => cmd_bdspace(ops, report),
        Command::Ops {
            kind,
            cells,
            length,
            out,
        } => cmd_ops(kind, cells, *length, out),
        Command::Demo {
            demo:
                Demo::Visco {
                    config,
                    control,
                    out,
                    common,
                },
        } => cmd_demo_visco(config, control.as_deref(), out, common),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
