//! Batch front end: workspace clouds, dexterity maps, statics, scripted
//! simulation and the HTTP service. Angles are degrees at this boundary.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rtr_core::dexterity::{
    dexterity_map, division_table_csv, max_dexterity_over_divisions, service_region_3d, DexterityOptions,
    SegmentDivision, DEFAULT_MAP_SAMPLES, REFERENCE_SEED,
};
use rtr_core::kinematics::{LockPattern, RobotConfig};
use rtr_core::sequencer::{presets, PhysicsMode, Session, SessionOptions, StepScript};
use rtr_core::statics::{
    solve_with_payload, ExternalLoad, FrictionModel, JointStiffness, StaticsOptions, TendonTensions,
};
use rtr_core::workspace::{
    sample_workspace_rtr, sample_workspace_tdr, OccupancyGrid, SamplingMode, SamplingOptions, DEFAULT_BUDGET,
    DEFAULT_CELL_MM,
};
use rtr_core::Error;
use serde_json::json;

use crate::api::{self, AppState, ServiceOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_SCRIPT: i32 = 4;
pub const EXIT_SERVICE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "rtr", version, about = "Reconfigurable tendon-driven robot toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WorkspaceMode {
    Rtr,
    Tdr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Physics {
    Ideal,
    Static,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the tip workspace and write the point cloud.
    Workspace {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "rtr")]
        mode: WorkspaceMode,
        /// Segment count for tdr mode.
        #[arg(long, default_value_t = 2)]
        segments: usize,
        #[arg(long, default_value_t = 6.0)]
        resolution_deg: f64,
        #[arg(long, default_value_t = DEFAULT_CELL_MM)]
        grid_mm: f64,
        /// Random sampling with this many samples instead of the exhaustive grid.
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Fraction of the inner cloud's grid cells occupied by the outer cloud.
    Compare {
        #[arg(long)]
        inner: PathBuf,
        #[arg(long)]
        outer: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CELL_MM)]
        grid_mm: f64,
    },
    /// Dexterity map over random divisions, or the max-over-divisions table.
    Dexterity {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Target point "x,y" (planar) or "x,y,z" (mm).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        target: Vec<f64>,
        /// One count writes a map; several write the table.
        #[arg(long, value_delimiter = ',', default_value = "3")]
        divisions: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_MAP_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = REFERENCE_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Static equilibrium under tendon tensions and an optional pulley payload.
    Statics {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Tensions "f1,f2,f3,f4" (N).
        #[arg(long, value_delimiter = ',', default_value = "0,0,0,0")]
        tensions: Vec<f64>,
        /// Payload weight (N) hanging over a pulley at --anchor.
        #[arg(long, default_value_t = 0.0)]
        payload: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,-150,70")]
        anchor: Vec<f64>,
        /// Locked joints "joint:deg", e.g. "1:0,2:0".
        #[arg(long, value_delimiter = ',')]
        lock: Vec<String>,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long)]
        stiffness: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a step script and write the joint trajectory.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Script file, or "preset:<name>".
        #[arg(long)]
        script: String,
        #[arg(long, value_enum, default_value = "ideal")]
        physics: Physics,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Device trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Keep JSON snapshots of every session here.
        #[arg(long)]
        snapshot_dir: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn validation(m: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: m.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig(_)
            | Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::MismatchedGrids(_)
            | Error::BudgetExceeded { .. }
            | Error::ConfigMismatch => EXIT_VALIDATION,
            Error::InvalidStep(_) | Error::SelectorBusy(_) => EXIT_SCRIPT,
            _ => EXIT_SOLVER,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn execute(command: Command) -> CliResult {
    match command {
        Command::Workspace {
            config,
            mode,
            segments,
            resolution_deg,
            grid_mm,
            samples,
            seed,
            out,
            format,
        } => cmd_workspace(config.as_deref(), mode, segments, resolution_deg, grid_mm, samples, seed, out.as_deref(), format),
        Command::Compare { inner, outer, grid_mm } => cmd_compare(&inner, &outer, grid_mm),
        Command::Dexterity {
            config,
            target,
            divisions,
            samples,
            seed,
            out,
        } => cmd_dexterity(config.as_deref(), &target, &divisions, samples, seed, out.as_deref()),
        Command::Statics {
            config,
            tensions,
            payload,
            anchor,
            lock,
            mu,
            stiffness,
            out,
        } => cmd_statics(config.as_deref(), &tensions, payload, &anchor, &lock, mu, stiffness, out.as_deref()),
        Command::Simulate {
            config,
            script,
            physics,
            mu,
            out,
            format,
            trace,
        } => cmd_simulate(config.as_deref(), &script, physics, mu, out.as_deref(), format, trace.as_deref()),
        Command::Serve { host, port, snapshot_dir } => cmd_serve(&host, port, snapshot_dir),
    }
}

/// Robot from a JSON file, or the default 7-joint spatial robot.
pub fn load_config(path: Option<&Path>) -> std::result::Result<RobotConfig, Failure> {
    match path {
        None => Ok(RobotConfig::spatial(7)?),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::validation(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: invalid config: {e}", p.display())))
        }
    }
}

fn write_out(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::validation(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_workspace(
    config: Option<&Path>,
    mode: WorkspaceMode,
    segments: usize,
    resolution_deg: f64,
    grid_mm: f64,
    samples: Option<u64>,
    seed: u64,
    out: Option<&Path>,
    format: Format,
) -> CliResult {
    let cfg = load_config(config)?;
    let opts = SamplingOptions {
        resolution_rad: resolution_deg.to_radians(),
        mode: match samples {
            Some(n) => SamplingMode::Random { samples: n, seed },
            None => SamplingMode::Exhaustive,
        },
        budget: DEFAULT_BUDGET,
        cell_mm: grid_mm,
        fallback_seed: seed,
    };
    let cloud = match mode {
        WorkspaceMode::Rtr => sample_workspace_rtr(&cfg, &opts)?,
        WorkspaceMode::Tdr => sample_workspace_tdr(&cfg, segments, &opts)?,
    };
    if cloud.info.fell_back_to_random {
        eprintln!("warning: exhaustive grid over budget, sampled randomly instead");
    }
    let unit = if cloud.dims == 2 { "mm^2" } else { "mm^3" };
    eprintln!("occupied cells: {}", cloud.grid.len());
    eprintln!("estimate: {} {unit}", cloud.grid.measure());
    let text = match format {
        Format::Csv => cloud.to_csv(),
        Format::Json => serde_json::to_string_pretty(&cloud.occupancy_json()).expect("json") + "\n",
    };
    write_out(out, &text)
}

/// Points of a workspace CSV written by the workspace command.
pub fn read_cloud_csv(path: &Path) -> std::result::Result<(usize, Vec<[f64; 3]>), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let dims = match lines.next() {
        Some("x_mm,y_mm") => 2,
        Some("x_mm,y_mm,z_mm") => 3,
        other => return Err(Failure::validation(format!("{}: unexpected header {other:?}", path.display()))),
    };
    let mut pts = Vec::new();
    for (i, line) in lines.enumerate() {
        let v: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Failure::validation(format!("{}:{}: {e}", path.display(), i + 2)))?;
        if v.len() != dims {
            return Err(Failure::validation(format!("{}:{}: expected {dims} values", path.display(), i + 2)));
        }
        pts.push([v[0], v[1], if dims == 3 { v[2] } else { 0.0 }]);
    }
    Ok((dims, pts))
}

fn cmd_compare(inner: &Path, outer: &Path, grid_mm: f64) -> CliResult {
    let (da, a) = read_cloud_csv(inner)?;
    let (db, b) = read_cloud_csv(outer)?;
    if da != db {
        return Err(Failure::validation(format!("{da}D cloud compared with {db}D cloud")));
    }
    let ga = OccupancyGrid::from_points(&a, da, grid_mm)?;
    let gb = OccupancyGrid::from_points(&b, db, grid_mm)?;
    let f = ga.fraction_within(&gb)?;
    println!(
        "{}",
        json!({ "inner_cells": ga.len(), "outer_cells": gb.len(), "contained_fraction": f })
    );
    Ok(())
}

fn cmd_dexterity(
    config: Option<&Path>,
    target: &[f64],
    divisions: &[usize],
    samples: usize,
    seed: u64,
    out: Option<&Path>,
) -> CliResult {
    let cfg = load_config(config)?;
    let opts = DexterityOptions::default();
    if divisions.is_empty() {
        return Err(Failure::validation("--divisions needs at least one count"));
    }
    let text = match target.len() {
        2 => {
            let t = [target[0], target[1]];
            if let [k] = divisions {
                let map = dexterity_map(t, &cfg, *k, samples, seed, &opts)?;
                if map.max() == 0.0 {
                    eprintln!("warning: target unreachable for every sampled division, D_p = 0");
                }
                map.to_csv()
            } else {
                let table = max_dexterity_over_divisions(t, &cfg, divisions, samples, seed, &opts)?;
                if table.iter().all(|r| r.d_p == 0.0) {
                    eprintln!("warning: target unreachable, D_p = 0");
                }
                division_table_csv(&table)
            }
        }
        3 => {
            let q = [target[0], target[1], target[2]].into();
            let mut s = String::from("divisions,ds_percent\n");
            for &k in divisions {
                let r = service_region_3d(q, &cfg, &SegmentDivision::equal(k)?, &opts)?;
                let ds = r.d_s.unwrap_or(0.0);
                if ds == 0.0 {
                    eprintln!("warning: target unreachable with {k} equal segments, D_s = 0");
                }
                let _ = writeln!(s, "{k},{ds}");
            }
            s
        }
        n => return Err(Failure::validation(format!("--target takes 2 or 3 coordinates, got {n}"))),
    };
    write_out(out, &text)
}

fn parse_locks(n: usize, specs: &[String]) -> std::result::Result<LockPattern, Failure> {
    let mut locked = Vec::new();
    for s in specs.iter().filter(|s| !s.is_empty()) {
        let (j, deg) = s
            .split_once(':')
            .ok_or_else(|| Failure::validation(format!("lock {s:?} is not joint:deg")))?;
        let j: usize = j.trim().parse().map_err(|_| Failure::validation(format!("bad joint in {s:?}")))?;
        let deg: f64 = deg.trim().parse().map_err(|_| Failure::validation(format!("bad angle in {s:?}")))?;
        if j == 0 || j > n {
            return Err(Failure::validation(format!("joint {j} outside 1..={n}")));
        }
        locked.push((j - 1, deg.to_radians()));
    }
    Ok(LockPattern::with_locked(n, &locked)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_statics(
    config: Option<&Path>,
    tensions: &[f64],
    payload: f64,
    anchor: &[f64],
    lock: &[String],
    mu: f64,
    stiffness: Option<f64>,
    out: Option<&Path>,
) -> CliResult {
    let cfg = load_config(config)?;
    let [f1, f2, f3, f4] = tensions else {
        return Err(Failure::validation("--tensions takes four values"));
    };
    let [ax, ay, az] = anchor else {
        return Err(Failure::validation("--anchor takes three values"));
    };
    let lock = parse_locks(cfg.n_joints, lock)?;
    let load = if payload == 0.0 {
        ExternalLoad::none()
    } else {
        ExternalLoad::pulley(payload, [*ax, *ay, *az].into())
    };
    let options = StaticsOptions {
        stiffness: stiffness.map_or_else(JointStiffness::default, |k| JointStiffness { k_free: k }),
        ..StaticsOptions::default()
    };
    let friction = if mu == 0.0 { FrictionModel::frictionless() } else { FrictionModel::new(mu) };
    let t = TendonTensions::new(*f1, *f2, *f3, *f4);
    let r = match solve_with_payload(&cfg, &t, &load, &lock, &friction, &options) {
        Ok(r) => r,
        Err(e) => {
            if let Error::MaxIterationsExceeded { max_residual, residuals, .. } = &e {
                eprintln!("max residual {max_residual:e} N*mm; per joint {residuals:?}");
            }
            return Err(e.into());
        }
    };
    let tip = r.posture.tip();
    let body = json!({
        "angles_deg": r.posture.angles.iter().map(|a| a.to_degrees()).collect::<Vec<_>>(),
        "residuals_nmm": r.residuals,
        "max_residual_nmm": r.max_residual(),
        "lock_moments_nmm": r.lock_moments,
        "iterations": r.iterations,
        "theta_fe_deg": r.payload_direction.map(f64::to_degrees),
        "payload_error_rad": r.payload_error,
        "tip_mm": [tip.x, tip.y, tip.z],
    });
    write_out(out, &(serde_json::to_string_pretty(&body).expect("json") + "\n"))
}

/// Step script from a file, or a bundled preset via `preset:<name>`.
pub fn load_script(spec: &str) -> std::result::Result<StepScript, Failure> {
    if let Some(name) = spec.strip_prefix("preset:") {
        return presets::by_name(name).map_err(|e| Failure {
            code: EXIT_SCRIPT,
            message: e.to_string(),
        });
    }
    let text = std::fs::read_to_string(spec).map_err(|e| Failure {
        code: EXIT_SCRIPT,
        message: format!("{spec}: {e}"),
    })?;
    serde_json::from_str(&text).map_err(|e| Failure {
        code: EXIT_SCRIPT,
        message: format!("{spec}: invalid script: {e}"),
    })
}

fn cmd_simulate(
    config: Option<&Path>,
    script: &str,
    physics: Physics,
    mu: f64,
    out: Option<&Path>,
    format: Format,
    trace: Option<&Path>,
) -> CliResult {
    let cfg = load_config(config)?;
    let script = load_script(script)?;
    let physics = match physics {
        Physics::Ideal => PhysicsMode::Ideal,
        Physics::Static => PhysicsMode::Static {
            friction: if mu == 0.0 { FrictionModel::frictionless() } else { FrictionModel::new(mu) },
            stiffness: JointStiffness::default(),
            payload: None,
        },
    };
    let mut session = Session::new(
        cfg,
        None,
        SessionOptions {
            physics,
            ..SessionOptions::default()
        },
    )?;
    let mut rows = vec![session.posture.angles.clone()];
    let mut failure = None;
    for (i, step) in script.steps.iter().enumerate() {
        match session.execute_step(step) {
            Ok(p) => rows.push(p.angles.clone()),
            Err(e) => {
                failure = Some(Failure {
                    code: EXIT_SCRIPT,
                    message: format!("step {} failed: {e}; trajectory is partial", i + 1),
                });
                break;
            }
        }
    }
    let text = match format {
        Format::Csv => {
            let mut s = String::from("step,joint,angle_deg\n");
            for (k, angles) in rows.iter().enumerate() {
                for (j, a) in angles.iter().enumerate() {
                    let _ = writeln!(s, "{k},{},{}", j + 1, a.to_degrees());
                }
            }
            s
        }
        Format::Json => {
            let body = json!({
                "complete": failure.is_none(),
                "failed_step": failure.as_ref().map(|_| rows.len()),
                "steps": rows.iter().enumerate().map(|(k, a)| json!({
                    "step": k,
                    "angles_deg": a.iter().map(|x| x.to_degrees()).collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
            });
            serde_json::to_string_pretty(&body).expect("json") + "\n"
        }
    };
    write_out(out, &text)?;
    if let Some(p) = trace {
        std::fs::write(p, session.trace_jsonl()).map_err(|e| Failure::validation(format!("{}: {e}", p.display())))?;
    }
    match failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn cmd_serve(host: &str, port: u16, snapshot_dir: Option<PathBuf>) -> CliResult {
    let service = |m: String| Failure {
        code: EXIT_SERVICE,
        message: m,
    };
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| service(e.to_string()))?;
    rt.block_on(async {
        let state = Arc::new(AppState::new(ServiceOptions {
            snapshot_dir: snapshot_dir.clone(),
            ..ServiceOptions::default()
        }));
        if let Some(dir) = &snapshot_dir {
            std::fs::create_dir_all(dir).map_err(|e| service(format!("{}: {e}", dir.display())))?;
            let n = state.restore_snapshots().map_err(|e| service(e.to_string()))?;
            if n > 0 {
                eprintln!("restored {n} sessions");
            }
        }
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| service(format!("cannot bind {host}:{port}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| service(e.to_string()))?;
        println!("listening on http://{addr}");
        api::serve(listener, state).await.map_err(|e| service(e.to_string()))
    })
}
