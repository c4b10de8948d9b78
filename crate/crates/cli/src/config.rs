//! Scenario files: TOML with every physical quantity under an explicit key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nar_core::driver::{RunConfig, SchemePlan};
use nar_core::geometry::{build_initial_state, EllipseSpec, Nucleus, NucleusShape, ScenarioLayout};
use nar_core::model::{hetero_volume, nucleus_volume, volume, ModelParams};
use nar_core::schedules::{HeteroSchedule, RampSchedule, VolumeSchedules};
use nar_core::schemes::{
    EnergyBalance, MultiplierCoupling, Problem, SchemeKind, SchemeOptions, Tolerances,
};
use nar_core::spectral::Grid2D;
use nar_core::{Grid, State};

use crate::error::{CliError, CliResult};
use crate::snapshot;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridConfig,
    pub params: ParamsConfig,
    pub layout: LayoutConfig,
    #[serde(default)]
    pub nucleus: NucleusConfig,
    #[serde(default)]
    pub schedules: SchedulesConfig,
    pub scheme: SchemeConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub initial: InitialConfig,
}

/// The domain is always `[-pi, pi)^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub eps2_phi: f64,
    pub eps2_psi: f64,
    pub beta0: f64,
    pub beta_phi: f64,
    pub beta_psi: f64,
    pub gamma: f64,
    #[serde(default = "one")]
    pub mobility: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipseConfig {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
}

impl From<EllipseConfig> for EllipseSpec<f64> {
    fn from(e: EllipseConfig) -> Self {
        EllipseSpec {
            cx: e.cx,
            cy: e.cy,
            rx: e.rx,
            ry: e.ry,
        }
    }
}

/// Initial placement. Widths are in scaled elliptical radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    pub eps_phi: f64,
    pub eps_psi: f64,
    pub eps_nucleus: f64,
    pub nucleus: EllipseConfig,
    pub chromosomes: Vec<EllipseConfig>,
    pub heterochromatin: Vec<EllipseConfig>,
}

/// Optional shrinking of the nucleus radii toward `target_rx`, `target_ry`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NucleusConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_rx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_ry: Option<f64>,
    #[serde(default = "one")]
    pub alpha1: f64,
    #[serde(default = "shrink_rate")]
    pub alpha2: f64,
    #[serde(default = "one")]
    pub alpha3: f64,
    #[serde(default = "shrink_rate")]
    pub alpha4: f64,
    #[serde(default = "one")]
    pub t0: f64,
}

impl Default for NucleusConfig {
    fn default() -> Self {
        Self {
            target_rx: None,
            target_ry: None,
            alpha1: 1.0,
            alpha2: shrink_rate(),
            alpha3: 1.0,
            alpha4: shrink_rate(),
            t0: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// `V = nucleus volume / N` and `v = hetero_fraction * V`, reached at `t0`.
    #[default]
    Growth,
    /// Targets held at the initial volumes.
    Frozen,
    /// `volume_targets` and `hetero_targets` given per chromosome.
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulesConfig {
    #[serde(default)]
    pub kind: TargetKind,
    #[serde(default = "one")]
    pub t0: f64,
    #[serde(default = "one")]
    pub alpha1: f64,
    #[serde(default = "growth_rate")]
    pub alpha2: f64,
    #[serde(default = "hetero_fraction")]
    pub hetero_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_targets: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hetero_targets: Option<Vec<f64>>,
    /// Per-chromosome conversion-rate increase on top of `hetero_fraction`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_increase: Option<Vec<f64>>,
    #[serde(default = "rate_alpha1")]
    pub rate_alpha1: f64,
    #[serde(default = "rate_alpha2")]
    pub rate_alpha2: f64,
}

impl Default for SchedulesConfig {
    fn default() -> Self {
        Self {
            kind: TargetKind::Growth,
            t0: 1.0,
            alpha1: 1.0,
            alpha2: growth_rate(),
            hetero_fraction: hetero_fraction(),
            volume_targets: None,
            hetero_targets: None,
            rate_increase: None,
            rate_alpha1: rate_alpha1(),
            rate_alpha2: rate_alpha2(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingConfig {
    #[default]
    Full,
    PerM,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceConfig {
    #[default]
    Exact,
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    /// `A`, `B`, `C`, `A-then-B` or `A-then-C`.
    pub plan: String,
    /// Switch time of a two-phase plan; the schedule `t0` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_at: Option<f64>,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub energy_balance: BalanceConfig,
    #[serde(default)]
    pub dealias: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_max: f64,
    #[serde(default = "max_halvings")]
    pub max_halvings: usize,
}

/// Absent tolerances default to `1e-12 |Omega|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton: Option<f64>,
    #[serde(default = "max_newton_iters")]
    pub max_newton_iters: usize,
    #[serde(default = "max_sweeps")]
    pub max_sweeps: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            constraint: None,
            newton: None,
            max_newton_iters: max_newton_iters(),
            max_sweeps: max_sweeps(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    Ppm,
    #[default]
    Png,
    Both,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Relative paths are taken from the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(default = "cadence")]
    pub cadence: usize,
    #[serde(default = "yes")]
    pub snapshots: bool,
    #[serde(default)]
    pub images: ImageFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            cadence: cadence(),
            snapshots: true,
            images: ImageFormat::default(),
        }
    }
}

/// Start from a snapshot instead of the layout.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Relative paths are taken from the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<PathBuf>,
    /// Restart the clock at zero.
    #[serde(default = "yes")]
    pub reset_time: bool,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn shrink_rate() -> f64 {
    0.01
}
fn growth_rate() -> f64 {
    10.0
}
fn hetero_fraction() -> f64 {
    0.23
}
fn rate_alpha1() -> f64 {
    150.0
}
fn rate_alpha2() -> f64 {
    0.3
}
fn max_halvings() -> usize {
    4
}
fn max_newton_iters() -> usize {
    50
}
fn max_sweeps() -> usize {
    25
}
fn cadence() -> usize {
    100
}

/// Parses `plan` strings such as `A-then-C`.
pub fn parse_plan(plan: &str, switch_at: f64) -> CliResult<SchemePlan<f64>> {
    let letter = |s: &str| {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => SchemeKind::from_letter(c),
            _ => None,
        }
    };
    let bad = || CliError::Config(format!("scheme.plan: unknown plan {plan:?}"));
    match plan.split_once("-then-") {
        None => letter(plan).map(SchemePlan::Single).ok_or_else(bad),
        Some((a, b)) => {
            let before = letter(a).ok_or_else(bad)?;
            let after = letter(b).ok_or_else(bad)?;
            if before != SchemeKind::VolumePreserving || after == SchemeKind::VolumePreserving {
                return Err(bad());
            }
            Ok(SchemePlan::Switch {
                before,
                after,
                at: switch_at,
            })
        }
    }
}

pub fn load_config(path: &Path) -> CliResult<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg = parse_config(&text).map_err(|e| match e {
        CliError::Parse(msg) => CliError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    if let Some(snap) = &cfg.initial.snapshot {
        if snap.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.initial.snapshot = Some(base.join(snap));
        }
    }
    Ok(cfg)
}

/// Parses and validates; defaults that depend on other sections are filled
/// in so the result is fully explicit.
pub fn parse_config(text: &str) -> CliResult<ScenarioConfig> {
    let mut cfg: ScenarioConfig =
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string().trim().replace('\n', " ")))?;
    cfg.resolve_defaults();
    cfg.validate()?;
    Ok(cfg)
}

/// Canonical writer; [`parse_config`] inverts it.
pub fn write_config(cfg: &ScenarioConfig) -> CliResult<String> {
    toml::to_string(cfg).map_err(|e| CliError::Config(e.to_string()))
}

impl ScenarioConfig {
    fn resolve_defaults(&mut self) {
        if self.scheme.plan.contains("-then-") && self.scheme.switch_at.is_none() {
            self.scheme.switch_at = Some(self.schedules.t0);
        }
        let area = (2.0 * std::f64::consts::PI).powi(2);
        let tol = 1e-12 * area;
        self.tolerances.constraint.get_or_insert(tol);
        self.tolerances.newton.get_or_insert(tol);
        if self.output.directory.is_none() {
            self.output.directory = Some(PathBuf::from("out").join(&self.name));
        }
    }

    pub fn n_chromosomes(&self) -> usize {
        self.layout.chromosomes.len()
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |field: &str, why: &str| Err(CliError::Config(format!("{field}: {why}")));
        if self.name.trim().is_empty() {
            return bad("name", "must not be empty");
        }
        if self.grid.nx < 4 || self.grid.ny < 4 || self.grid.nx % 2 != 0 || self.grid.ny % 2 != 0 {
            return bad("grid", "nx and ny must be even and >= 4");
        }
        let n = self.n_chromosomes();
        if self.layout.heterochromatin.len() != n {
            return bad("layout.heterochromatin", "needs one seed per chromosome");
        }
        let s = &self.schedules;
        if !(s.t0 > 0.0) {
            return bad("schedules.t0", "must be positive");
        }
        if !(0.0..=1.0).contains(&s.hetero_fraction) {
            return bad("schedules.hetero_fraction", "must lie in [0, 1]");
        }
        for (field, list) in [
            ("schedules.volume_targets", &s.volume_targets),
            ("schedules.hetero_targets", &s.hetero_targets),
            ("schedules.rate_increase", &s.rate_increase),
        ] {
            if list.as_ref().is_some_and(|l| l.len() != n) {
                return bad(field, &format!("needs {n} entries"));
            }
        }
        if s.kind == TargetKind::Explicit && (s.volume_targets.is_none() || s.hetero_targets.is_none()) {
            return bad("schedules", "explicit targets need volume_targets and hetero_targets");
        }
        let nuc = &self.nucleus;
        if nuc.target_rx.is_some() != nuc.target_ry.is_some() {
            return bad("nucleus", "target_rx and target_ry go together");
        }
        if nuc.target_rx.is_some() && !(nuc.t0 > 0.0) {
            return bad("nucleus.t0", "must be positive");
        }
        parse_plan(&self.scheme.plan, self.scheme.switch_at.unwrap_or(s.t0))?;
        let t = &self.time;
        if !(t.dt > 0.0 && t.dt.is_finite()) {
            return bad("time.dt", "must be positive");
        }
        if !(t.t_max >= 0.0 && t.t_max.is_finite()) {
            return bad("time.t_max", "must be nonnegative");
        }
        if self.output.cadence == 0 {
            return bad("output.cadence", "must be >= 1");
        }
        self.model_params().validate().map_err(|e| CliError::Config(format!("params: {e}")))?;
        self.scenario_layout()
            .validate(&*self.grid()?)
            .map_err(|e| CliError::Config(format!("layout: {e}")))?;
        self.tolerances()
            .validate()
            .map_err(|e| CliError::Config(format!("tolerances: {e}")))?;
        Ok(())
    }

    pub fn grid(&self) -> CliResult<std::sync::Arc<Grid>> {
        let l = 2.0 * std::f64::consts::PI;
        Ok(Grid2D::new(self.grid.nx, self.grid.ny, l, l)?)
    }

    pub fn model_params(&self) -> ModelParams<f64> {
        let p = &self.params;
        ModelParams {
            eps2_phi: p.eps2_phi,
            eps2_psi: p.eps2_psi,
            beta0: p.beta0,
            beta_phi: p.beta_phi,
            beta_psi: p.beta_psi,
            gamma: p.gamma,
            mobility: p.mobility,
            n_chromosomes: self.n_chromosomes(),
        }
    }

    pub fn scenario_layout(&self) -> ScenarioLayout<f64> {
        let l = &self.layout;
        ScenarioLayout {
            nucleus: l.nucleus.into(),
            chromosomes: l.chromosomes.iter().map(|&e| e.into()).collect(),
            heterochromatin: l.heterochromatin.iter().map(|&e| e.into()).collect(),
            eps_phi: l.eps_phi,
            eps_psi: l.eps_psi,
            eps_nucleus: l.eps_nucleus,
        }
    }

    pub fn nucleus_shape(&self) -> CliResult<NucleusShape<f64>> {
        let e = self.layout.nucleus;
        let n = &self.nucleus;
        Ok(match (n.target_rx, n.target_ry) {
            (Some(tx), Some(ty)) => NucleusShape::Ellipse {
                cx: e.cx,
                cy: e.cy,
                rx: RampSchedule::new(e.rx, tx, n.alpha1, n.alpha2, n.t0)?,
                ry: RampSchedule::new(e.ry, ty, n.alpha3, n.alpha4, n.t0)?,
                eps: self.layout.eps_nucleus,
            },
            _ => NucleusShape::fixed(e.into(), self.layout.eps_nucleus),
        })
    }

    pub fn tolerances(&self) -> Tolerances<f64> {
        let t = &self.tolerances;
        Tolerances {
            constraint: t.constraint.unwrap_or(f64::NAN),
            newton: t.newton.unwrap_or(f64::NAN),
            max_newton_iters: t.max_newton_iters,
            max_sweeps: t.max_sweeps,
        }
    }

    pub fn scheme_options(&self) -> SchemeOptions {
        SchemeOptions {
            coupling: match self.scheme.coupling {
                CouplingConfig::Full => MultiplierCoupling::Full,
                CouplingConfig::PerM => MultiplierCoupling::PerM,
            },
            energy_balance: match self.scheme.energy_balance {
                BalanceConfig::Exact => EnergyBalance::Exact,
                BalanceConfig::Literal => EnergyBalance::Literal,
            },
            dealias: self.scheme.dealias,
        }
    }

    pub fn plan(&self) -> CliResult<SchemePlan<f64>> {
        parse_plan(&self.scheme.plan, self.scheme.switch_at.unwrap_or(self.schedules.t0))
    }

    pub fn run_config(&self) -> CliResult<RunConfig<f64>> {
        Ok(RunConfig {
            dt: self.time.dt,
            t_max: self.time.t_max,
            cadence: self.output.cadence,
            max_halvings: self.time.max_halvings,
            plan: self.plan()?,
            tolerances: self.tolerances(),
            options: self.scheme_options(),
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .directory
            .clone()
            .unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }

    /// Initial state and the fixed problem data of the run.
    pub fn build(&self) -> CliResult<(Problem<f64>, State)> {
        let grid = self.grid()?;
        let shape = self.nucleus_shape()?;
        let nucleus = Nucleus::new(shape.clone(), &grid);
        let mut initial = match &self.initial.snapshot {
            Some(path) => {
                let mut s = snapshot::read_state(path, &grid)?;
                if s.n_chromosomes() != self.n_chromosomes() {
                    return Err(CliError::Config(format!(
                        "initial.snapshot: {} chromosome fields, layout has {}",
                        s.n_chromosomes(),
                        self.n_chromosomes()
                    )));
                }
                if self.initial.reset_time {
                    s.t = 0.0;
                }
                s
            }
            None => build_initial_state(&self.scenario_layout(), &grid)?,
        };
        initial.phi0 = nucleus.field_at(initial.t)?;
        let volumes = self.volume_schedules(&initial, &shape, &grid)?;
        let problem = Problem {
            params: self.model_params(),
            volumes,
            nucleus,
        };
        problem.validate()?;
        Ok((problem, initial))
    }

    fn volume_schedules(
        &self,
        initial: &State,
        shape: &NucleusShape<f64>,
        grid: &std::sync::Arc<Grid>,
    ) -> CliResult<VolumeSchedules<f64>> {
        let n = self.n_chromosomes();
        let s = &self.schedules;
        let v0 = (0..n).map(|m| volume(m, initial)).collect::<Result<Vec<_>, _>>()?;
        let w0 = (0..n).map(|m| hetero_volume(m, initial)).collect::<Result<Vec<_>, _>>()?;
        let (v_bar, w_bar) = match s.kind {
            TargetKind::Frozen => (v0.clone(), w0.clone()),
            TargetKind::Explicit => (
                s.volume_targets.clone().unwrap_or_default(),
                s.hetero_targets.clone().unwrap_or_default(),
            ),
            TargetKind::Growth => {
                // Far past every clamp time the nucleus has its final shape.
                let t_final = s.t0.max(self.nucleus.t0) + 1.0;
                let share = nucleus_volume(&shape.field(t_final, grid)?) / n.max(1) as f64;
                (vec![share; n], vec![s.hetero_fraction * share; n])
            }
        };
        let start = initial.t;
        let ramp = |f0: f64, target: f64| -> CliResult<RampSchedule<f64>> {
            if start >= s.t0 {
                Ok(RampSchedule::constant(target))
            } else {
                Ok(RampSchedule::new(f0, target, s.alpha1, s.alpha2, s.t0)?)
            }
        };
        let volume = (0..n).map(|m| ramp(v0[m], v_bar[m])).collect::<CliResult<Vec<_>>>()?;
        let hetero = (0..n)
            .map(|m| {
                let base = ramp(w0[m], w_bar[m])?;
                Ok(match &s.rate_increase {
                    Some(r) => HeteroSchedule::Rate {
                        base,
                        rho_bar: r[m],
                        alpha1: s.rate_alpha1,
                        alpha2: s.rate_alpha2,
                    },
                    None => HeteroSchedule::Ramp(base),
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(VolumeSchedules::new(volume, hetero)?)
    }
}
