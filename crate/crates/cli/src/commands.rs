//! Subcommand implementations, callable from tests without a process.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use nar_core::diagnostics::{convergence_study, measure, ConvergenceRow, ConvergenceSpec};
use nar_core::driver::run;
use nar_core::schemes::{MultiplierRecord, SchemeKind};
use nar_core::State;

use crate::config::{load_config, parse_plan, write_config, ImageFormat, ScenarioConfig};
use crate::error::{CliError, CliResult};
use crate::output::{format_real, DiagnosticsWriter};
use crate::render;
use crate::snapshot;

/// Command-line overrides of a scenario.
#[derive(Clone, Debug, Default)]
pub struct RunOverrides {
    pub output_dir: Option<PathBuf>,
    pub scheme: Option<String>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
}

impl RunOverrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) -> CliResult<()> {
        if let Some(d) = &self.output_dir {
            cfg.output.directory = Some(d.clone());
        }
        if let Some(s) = &self.scheme {
            cfg.scheme.plan = s.clone();
            if s.contains("-then-") && cfg.scheme.switch_at.is_none() {
                cfg.scheme.switch_at = Some(cfg.schedules.t0);
            }
        }
        if let Some(dt) = self.dt {
            cfg.time.dt = dt;
        }
        if let Some(t) = self.t_max {
            cfg.time.t_max = t;
        }
        cfg.validate()
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub steps: usize,
    pub halvings: usize,
    pub final_state: State,
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Run metadata lives here, never in the data files.
struct RunLog {
    file: fs::File,
    path: PathBuf,
}

impl RunLog {
    fn create(path: PathBuf) -> CliResult<Self> {
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(Self { file, path })
    }

    fn line(&mut self, text: &str) -> CliResult<()> {
        info!("{text}");
        writeln!(self.file, "{text}").map_err(|e| CliError::io(&self.path, e))
    }
}

pub fn run_config_file(path: &Path, overrides: &RunOverrides) -> CliResult<RunSummary> {
    let mut cfg = load_config(path)?;
    overrides.apply(&mut cfg)?;
    run_scenario(&cfg)
}

/// Runs a validated scenario and writes everything into its output
/// directory: `config.toml` (fully resolved), `run.log`,
/// `diagnostics.csv`, `snapshots/`, `images/`, `final.nars`, and
/// `failed_state.nars` if the run stops early.
pub fn run_scenario(cfg: &ScenarioConfig) -> CliResult<RunSummary> {
    let out = cfg.output_dir();
    create_dir(&out)?;
    let resolved = write_config(cfg)?;
    let config_path = out.join("config.toml");
    fs::write(&config_path, &resolved).map_err(|e| CliError::io(&config_path, e))?;
    let mut log = RunLog::create(out.join("run.log"))?;
    log.line(&format!("nar {} scenario {}", env!("CARGO_PKG_VERSION"), cfg.name))?;
    log.line("resolved configuration, defaults included:")?;
    for l in resolved.lines() {
        log.line(&format!("  {l}"))?;
    }

    let (problem, initial) = cfg.build()?;
    let run_config = cfg.run_config()?;
    let params = problem.params.clone();
    let snap_dir = out.join("snapshots");
    let img_dir = out.join("images");
    if cfg.output.snapshots {
        create_dir(&snap_dir)?;
    }
    if cfg.output.images != ImageFormat::None {
        create_dir(&img_dir)?;
    }
    let mut csv = DiagnosticsWriter::create(&out.join("diagnostics.csv"), initial.n_chromosomes())?;
    let mut prev_energy: Option<f64> = None;
    let started = Instant::now();
    let mut io_error: Option<CliError> = None;

    let mut observer = |step: usize, state: &State, record: Option<&MultiplierRecord<f64>>| {
        let result = (|| -> CliResult<()> {
            let row = measure(state, record, &params, &problem.volumes, prev_energy)?;
            prev_energy = Some(row.e_total);
            if step > 0 {
                csv.write(step, &row)?;
            }
            let stem = format!("step_{step:08}");
            if cfg.output.snapshots {
                snapshot::write_state(&snap_dir.join(format!("{stem}.nars")), state)?;
            }
            write_images(cfg.output.images, &img_dir, &stem, state)?;
            Ok(())
        })();
        result.map_err(|e| {
            let message = e.to_string();
            io_error = Some(e);
            nar_core::NarError::Precondition(format!("output failed: {message}"))
        })
    };
    let outcome = run(&problem, initial, &run_config, &mut observer);
    if let Some(e) = io_error {
        return Err(e);
    }
    match outcome {
        Ok(o) => {
            snapshot::write_state(&out.join("final.nars"), &o.state)?;
            log.line(&format!(
                "finished: {} steps to t = {}, {} halvings, {:.3} s",
                o.steps,
                o.state.t,
                o.halvings,
                started.elapsed().as_secs_f64()
            ))?;
            Ok(RunSummary {
                output_dir: out,
                steps: o.steps,
                halvings: o.halvings,
                final_state: o.state,
            })
        }
        Err(f) => {
            let dump = out.join("failed_state.nars");
            snapshot::write_state(&dump, &f.last_state)?;
            let msg = format!("{f}; last good state written to {}", dump.display());
            log.line(&format!("failed: {msg}"))?;
            Err(CliError::Run(msg))
        }
    }
}

fn write_images(format: ImageFormat, dir: &Path, stem: &str, state: &State) -> CliResult<()> {
    if format == ImageFormat::None {
        return Ok(());
    }
    let img = render::composite(state);
    if matches!(format, ImageFormat::Ppm | ImageFormat::Both) {
        render::write_ppm(&dir.join(format!("{stem}.ppm")), &img)?;
    }
    if matches!(format, ImageFormat::Png | ImageFormat::Both) {
        render::write_png(&dir.join(format!("{stem}.png")), &img)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ConvergenceArgs {
    pub dts: Vec<f64>,
    pub reference_dt: f64,
    pub t_end: f64,
    pub scheme: SchemeKind,
    pub reference_scheme: SchemeKind,
    pub max_halvings: usize,
    pub output_dir: Option<PathBuf>,
}

pub fn convergence_table_text(rows: &[ConvergenceRow<f64>]) -> String {
    let mut s = String::from("dt           error_phi    error_psi    order_phi  order_psi\n");
    let order = |o: Option<f64>| o.map_or("-".to_string(), |v| format!("{v:.3}"));
    for r in rows {
        let _ = writeln!(
            s,
            "{:<12.4e} {:<12.4e} {:<12.4e} {:<10} {}",
            r.dt,
            r.error_phi,
            r.error_psi,
            order(r.order_phi),
            order(r.order_psi)
        );
    }
    s
}

pub fn convergence_csv(rows: &[ConvergenceRow<f64>]) -> String {
    let mut s = String::from("dt,error_phi,error_psi,order_phi,order_psi\n");
    let order = |o: Option<f64>| o.map_or(String::new(), format_real);
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            format_real(r.dt),
            format_real(r.error_phi),
            format_real(r.error_psi),
            order(r.order_phi),
            order(r.order_psi)
        );
    }
    s
}

/// Runs the study, prints the table and writes `convergence.csv`.
pub fn convergence(cfg: &ScenarioConfig, args: &ConvergenceArgs) -> CliResult<Vec<ConvergenceRow<f64>>> {
    let (problem, initial) = cfg.build()?;
    let spec = ConvergenceSpec {
        kind: args.scheme,
        reference_kind: args.reference_scheme,
        dts: args.dts.clone(),
        reference_dt: args.reference_dt,
        t_end: args.t_end,
        max_halvings: args.max_halvings,
        tolerances: cfg.tolerances(),
        options: cfg.scheme_options(),
    };
    let (_, rows) = convergence_study(&problem, &initial, &spec)?;
    print!("{}", convergence_table_text(&rows));
    let out = args.output_dir.clone().unwrap_or_else(|| cfg.output_dir());
    create_dir(&out)?;
    let path = out.join("convergence.csv");
    fs::write(&path, convergence_csv(&rows)).map_err(|e| CliError::io(&path, e))?;
    Ok(rows)
}

/// Single scheme letter for the convergence command.
pub fn parse_scheme(s: &str) -> CliResult<SchemeKind> {
    let mut chars = s.trim().chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => SchemeKind::from_letter(c),
        _ => None,
    }
    .ok_or_else(|| CliError::Config(format!("scheme must be A, B or C, got {s:?}")))
}

pub fn render_snapshot(snapshot_path: &Path, out: &Path) -> CliResult<()> {
    let snap = snapshot::read(snapshot_path)?;
    let l = 2.0 * std::f64::consts::PI;
    let grid = nar_core::Grid::new(snap.nx, snap.ny, l, l)?;
    let state = snap.to_state(&grid)?;
    render::write_image(out, &render::composite(&state))
}

/// Parses and validates only.
pub fn validate(path: &Path) -> CliResult<ScenarioConfig> {
    let cfg = load_config(path)?;
    parse_plan(&cfg.scheme.plan, cfg.scheme.switch_at.unwrap_or(cfg.schedules.t0))?;
    Ok(cfg)
}
