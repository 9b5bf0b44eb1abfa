//! Scenario harness: builds the grid, damping, data and constants from a
//! config, runs the solver with a [`Tracker`], runs every analysis on the
//! series and persists the results.
//!
//! Outputs for a scenario `name` in the output directory:
//! `name.series.csv`, `name.report.json` and `name.fit-<model>.dat`. Files
//! are written to a temporary name and renamed, so a file under its final
//! name is always complete. A failed run leaves `name.report.json.failed`
//! and, when sampling had started, `name.series.csv.failed`.

pub mod config;
pub mod presets;
pub mod suite;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decay::{
    fit_decay, theorem_verdict, truncation_contamination, DecayError, DecayFit, DecayModel,
    Verdict,
};
use crate::functionals::{
    bundle_registry, data_functionals, high_energy_check, observability_ratio,
    prop1_inequality_check, BundleMember, DataFunctionals, FunctionalError, FunctionalSeries,
    HighEnergyReport, IdentityDefect, MemberKind, ObservabilityReport, PhiSpec, Prop1Report,
    Tracker, TrackerConfig,
};
use crate::grid::{
    build_damping, build_grid_1d, build_grid_2d_disk, build_psi, DampingProfile, ExteriorGrid,
    GridError, GridSummary,
};
use crate::solver::{
    make_initial_compact, make_initial_weighted, prepare_initial, reference_solve, run,
    RunOptions, SolverError, SolverParams, SupportCheck,
};
use crate::weights::{sobolev_p, Theorem, TheoremConstants, WeightError, WeightFamily};

pub use config::{load_config, load_config_file, ConeCheck, ConfigError, DataKind, PhiFamilyKind, ScenarioConfig, ScenarioKind};
pub use presets::{preset, preset_names, preset_text, PRESETS};
pub use suite::{run_suite, run_weight_suite, WeightSuiteReport};

/// Version of the JSON report layout.
pub const REPORT_SCHEMA: u32 = 1;

/// Threshold of `|u| + |v|` used by the support-cone check.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Decay(#[from] DecayError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("duplicate scenario name `{0}`")]
    DuplicateName(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub h: f64,
    pub dt: f64,
    pub cfl: f64,
    pub steps: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub h: f64,
    pub dt: f64,
    pub identity: IdentityDefect,
    /// Final defect of the previous level over this one.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSummary {
    pub name: String,
    pub kind: MemberKind,
    pub final_value: f64,
    pub max_value: f64,
    pub ln_scale: f64,
    pub finite: bool,
    /// Growth over `[T_max/10, T_max]` as a fraction of the final value.
    pub last_decade_fraction: Option<f64>,
    pub bounded: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XSummary {
    pub max_abs: f64,
    pub max_abs_first_half: f64,
    pub max_abs_last_half: f64,
    /// `max_abs_last_half <= 1.05 max_abs_first_half`.
    pub stabilized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub divisor: usize,
    /// `max_t |E - E_ref| / E_ref(0)`.
    pub max_rel_diff: f64,
    pub worst_t: f64,
    pub max_iterations: usize,
}

/// A named pass/fail measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema: u32,
    pub name: String,
    pub config: ScenarioConfig,
    pub grid: Option<GridSummary>,
    pub damping: Option<DampingProfile>,
    pub solver: Option<SolverSummary>,
    pub constants: Option<TheoremConstants>,
    pub data_functionals: Option<DataFunctionals>,
    pub series_file: Option<String>,
    pub fits: Vec<DecayFit>,
    pub verdicts: Vec<Verdict>,
    /// Why no fit was made, when none was.
    pub fit_note: Option<String>,
    pub identity: Option<IdentityDefect>,
    pub refinement: Vec<RefinementLevel>,
    pub prop1: Option<Prop1Report>,
    pub high_energy: Option<HighEnergyReport>,
    pub observability: Option<ObservabilityReport>,
    pub bundle: Vec<BundleSummary>,
    pub x_functional: Option<XSummary>,
    pub truncation_contamination: Option<f64>,
    pub support_excess: Option<f64>,
    pub cross_check: Option<CrossCheck>,
    pub weight_suite: Option<WeightSuiteReport>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub wall_clock_s: f64,
}

impl ScenarioReport {
    fn empty(cfg: &ScenarioConfig) -> Self {
        Self {
            schema: REPORT_SCHEMA,
            name: cfg.name.clone(),
            config: cfg.clone(),
            grid: None,
            damping: None,
            solver: None,
            constants: None,
            data_functionals: None,
            series_file: None,
            fits: Vec::new(),
            verdicts: Vec::new(),
            fit_note: None,
            identity: None,
            refinement: Vec::new(),
            prop1: None,
            high_energy: None,
            observability: None,
            bundle: Vec::new(),
            x_functional: None,
            truncation_contamination: None,
            support_excess: None,
            cross_check: None,
            weight_suite: None,
            checks: Vec::new(),
            passed: false,
            wall_clock_s: 0.0,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String, ScenarioError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A finished scenario: its report and, for PDE runs, the tracked series.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: ScenarioReport,
    pub series: Option<FunctionalSeries>,
}

/// Everything one solver run produced.
struct Simulation {
    grid: ExteriorGrid,
    damping: DampingProfile,
    constants: Option<TheoremConstants>,
    data_family: Option<WeightFamily>,
    u0: Vec<f64>,
    u1: Vec<f64>,
    params: SolverParams,
    stride: usize,
    members: Vec<BundleMember>,
    series: FunctionalSeries,
    support_excess: Option<f64>,
}

struct Failure {
    error: ScenarioError,
    partial: Option<Box<FunctionalSeries>>,
}

impl<E: Into<ScenarioError>> From<E> for Failure {
    fn from(e: E) -> Self {
        Self {
            error: e.into(),
            partial: None,
        }
    }
}

fn build_grid(cfg: &ScenarioConfig, h: f64) -> Result<ExteriorGrid, ScenarioError> {
    let geo = cfg.geometry()?;
    Ok(if cfg.dim == 1 {
        let cells = ((geo.outer - geo.inner) / h).round() as usize;
        build_grid_1d(geo.inner, geo.outer, cells)?
    } else {
        build_grid_2d_disk(geo.inner, geo.outer, h)?
    })
}

fn phi_family(cfg: &ScenarioConfig) -> Result<WeightFamily, WeightError> {
    let beta = cfg.analysis.prop1_gamma - 1.0;
    match cfg.analysis.prop1_family {
        PhiFamilyKind::Poly => WeightFamily::poly(beta, None),
        PhiFamilyKind::Log => WeightFamily::log_practical(beta, cfg.weights.practical_b, None),
    }
}

fn cone_mode(cfg: &ScenarioConfig) -> ConeCheck {
    let compact = cfg.data.as_ref().map(|d| d.kind) == Some(DataKind::Compact);
    match cfg.analysis.cone_check {
        Some(c) => c,
        None if !compact => ConeCheck::Off,
        None if cfg.dim == 1 && cfg.time.cfl == 1.0 => ConeCheck::Strict,
        None => ConeCheck::Report,
    }
}

/// Runs the solver for `cfg` at spacing `h`, sampling every `stride` steps.
fn simulate(cfg: &ScenarioConfig, h: f64, stride: usize) -> Result<Simulation, Failure> {
    let r = cfg.r.ok_or(ConfigError::Missing("r"))?;
    let t_max = cfg.t_max()?;
    let data = cfg.data.as_ref().ok_or(ConfigError::Missing("data"))?;
    let grid = build_grid(cfg, h)?;
    let damping = build_damping(&grid, cfg.damping_kind, cfg.epsilon0, cfg.l, cfg.a_max)?;
    let psi = build_psi(&grid, cfg.l)?;
    let constants = cfg.constants()?;
    let support = cfg.support_radius()?;
    let radius = support.unwrap_or(1.0).max(1.0);

    let practical = cfg.weights.use_practical_b.then_some(cfg.weights.practical_b);
    let (family, honest) = match &constants {
        Some(c) => (
            Some(c.family(radius, practical)?),
            Some(c.family(radius, None)?),
        ),
        None => (None, None),
    };
    let phi = phi_family(cfg)?;

    let (u0, u1) = match data.kind {
        DataKind::Compact => make_initial_compact(
            &grid,
            data.center.as_deref().unwrap_or(&[]),
            data.radius.unwrap_or(0.0),
            data.amplitude,
            data.mode.into(),
        )?,
        DataKind::Weighted => make_initial_weighted(
            &grid,
            data.sigma.unwrap_or(0.0),
            data.amplitude,
            honest.as_ref().unwrap_or(&phi),
        )?,
    };

    let mut params = SolverParams::new(&grid, cfg.time.cfl, r, t_max)?;
    let steps = params.steps();
    let rounded = steps.div_ceil(stride) * stride;
    if rounded != steps {
        params = params.with_dt(t_max / rounded as f64);
    }
    let initial = prepare_initial(u0.clone(), u1.clone(), &grid, &damping, &params)?;

    let mut members = Vec::new();
    if let (Some(c), Some(h_fam)) = (&constants, &honest) {
        let label = match c.theorem {
            Theorem::T1 => "thm1",
            Theorem::T2 => "thm2",
            Theorem::T3 => "thm3",
        };
        members.extend(bundle_registry(c.theorem, h_fam, label)?);
        if c.theorem == Theorem::T1 {
            let pb = c.family(radius, Some(cfg.weights.practical_b))?;
            members.extend(bundle_registry(Theorem::T1, &pb, "thm1_pb")?);
        }
    }
    let tracker_cfg = TrackerConfig {
        r,
        dt: params.dt,
        theorem: constants.clone().zip(family),
        members: members.clone(),
        phi: PhiSpec {
            family: phi,
            mu: cfg.analysis.prop1_mu,
            lambda: cfg.analysis.prop1_lambda,
        },
        per_step_phi: cfg.analysis.prop1_per_step,
        chi_radius: cfg.chi_radius(),
    };
    let mut tracker = Tracker::new(&grid, &damping, &psi, tracker_cfg)?;
    let support_check = match cone_mode(cfg) {
        ConeCheck::Off => None,
        mode => support.map(|radius| SupportCheck {
            radius,
            threshold: SUPPORT_THRESHOLD,
            strict: mode == ConeCheck::Strict,
        }),
    };
    let options = RunOptions {
        sample_stride: stride,
        support: support_check,
    };
    let outcome = run(&grid, &damping, &initial, &params, &options, &mut tracker);
    let tracker_error = tracker.take_error();
    let summary = match (outcome, tracker_error) {
        (Ok(s), None) => s,
        (Ok(_), Some(e)) | (Err(_), Some(e)) => {
            return Err(Failure {
                error: e.into(),
                partial: Some(Box::new(tracker.into_series())),
            })
        }
        (Err(e), None) => {
            return Err(Failure {
                error: e.into(),
                partial: Some(Box::new(tracker.into_series())),
            })
        }
    };
    let series = tracker.into_series();
    Ok(Simulation {
        data_family: honest,
        grid,
        damping,
        constants,
        u0,
        u1,
        params,
        stride,
        members,
        series,
        support_excess: summary.support_excess,
    })
}

fn bundle_summaries(sim: &Simulation, t_max: f64, tolerance: f64) -> Vec<BundleSummary> {
    let s = &sim.series;
    let decade = t_max / 10.0;
    let start = s
        .samples
        .iter()
        .rposition(|x| x.t <= decade * (1.0 + 1e-12))
        .unwrap_or(0);
    sim.members
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let values: Vec<f64> = s.samples.iter().map(|x| x.bundle[i]).collect();
            let final_value = values.last().copied().unwrap_or(0.0);
            let max_value = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let finite = values.iter().all(|v| v.is_finite());
            let fraction = (m.kind == MemberKind::Cumulative).then(|| {
                if final_value > 0.0 {
                    (final_value - values[start]) / final_value
                } else {
                    0.0
                }
            });
            BundleSummary {
                name: m.name.clone(),
                kind: m.kind,
                final_value,
                max_value,
                ln_scale: m.ln_scale,
                finite,
                last_decade_fraction: fraction,
                bounded: fraction.map(|f| finite && f <= tolerance),
            }
        })
        .collect()
}

fn x_summary(series: &FunctionalSeries, t_max: f64) -> Option<XSummary> {
    let half = 0.5 * t_max;
    let mut out = XSummary {
        max_abs: 0.0,
        max_abs_first_half: 0.0,
        max_abs_last_half: 0.0,
        stabilized: true,
    };
    for s in &series.samples {
        if s.x.is_nan() {
            return None;
        }
        let x = s.x.abs();
        out.max_abs = out.max_abs.max(x);
        if s.t <= half {
            out.max_abs_first_half = out.max_abs_first_half.max(x);
        }
        if s.t >= half {
            out.max_abs_last_half = out.max_abs_last_half.max(x);
        }
    }
    out.stabilized = out.max_abs_last_half <= 1.05 * out.max_abs_first_half;
    Some(out)
}

fn cross_check(sim: &Simulation, divisor: usize) -> Result<CrossCheck, ScenarioError> {
    let reference = reference_solve(
        &sim.grid,
        &sim.damping,
        &sim.u0,
        &sim.u1,
        sim.params.r,
        sim.params.dt / divisor as f64,
        sim.params.t_max,
    )?;
    let e0 = reference.energy[0];
    let mut out = CrossCheck {
        divisor,
        max_rel_diff: 0.0,
        worst_t: 0.0,
        max_iterations: reference.max_iterations,
    };
    for (i, s) in sim.series.samples.iter().enumerate() {
        let j = i * sim.stride * divisor;
        let Some(e_ref) = reference.energy.get(j) else {
            break;
        };
        let d = (s.e - e_ref).abs() / e0;
        if d > out.max_rel_diff {
            out.max_rel_diff = d;
            out.worst_t = s.t;
        }
    }
    Ok(out)
}

fn analyse(cfg: &ScenarioConfig, sim: &Simulation, report: &mut ScenarioReport) -> Result<(), ScenarioError> {
    let t_max = cfg.t_max()?;
    let r = sim.params.r;
    let series = &sim.series;
    let compact = cfg.data.as_ref().map(|d| d.kind) == Some(DataKind::Compact);

    report.grid = Some(sim.grid.summary());
    report.damping = Some(sim.damping.clone());
    report.solver = Some(SolverSummary {
        h: sim.grid.h(),
        dt: sim.params.dt,
        cfl: sim.params.cfl,
        steps: sim.params.steps(),
        samples: series.samples.len(),
    });
    report.constants = sim.constants.clone();

    let identity = series.identity_defect();
    report.identity = Some(identity);
    // damped theorem runs are first order in time, so only the identity
    // study holds the defect to a threshold
    if cfg.theorem == ScenarioKind::IdentityOnly {
        report.checks.push(Check::at_most("identity_defect", identity.final_defect, 1e-3));
    }
    report.checks.push(Check::at_most(
        "energy_monotone",
        identity.max_relative_increase,
        1e-12,
    ));

    let prop1 = prop1_inequality_check(
        series,
        cfg.analysis.prop1_mu,
        cfg.analysis.prop1_lambda,
        cfg.t_window()?,
    )?;
    report.checks.push(Check::at_most("prop1_defect", prop1.max_defect, 2e-2));
    report.prop1 = Some(prop1);

    let theorem = sim.constants.as_ref().map(|c| c.theorem);
    let df = data_functionals(
        &sim.u0,
        &sim.u1,
        &sim.grid,
        sim.data_family.as_ref(),
        theorem.unwrap_or(Theorem::T3),
        r,
        sobolev_p(r, cfg.dim),
    )?;
    let he = high_energy_check(series, &df, sim.damping.a_inf, 1.1);
    report.checks.push(Check::at_most("high_energy_ratio", he.ratio, 1.1));
    report.high_energy = Some(he);
    report.data_functionals = Some(df);

    if let Some(c) = &sim.constants {
        report.observability = Some(observability_ratio(
            series,
            cfg.t_window()?,
            cfg.chi_radius(),
            cfg.t1_threshold()?,
            cfg.analysis.observability_windows,
        )?);
        let model = DecayModel::for_theorem(c.theorem);
        let param = match c.theorem {
            Theorem::T1 if cfg.weights.use_practical_b => Some(cfg.weights.practical_b),
            Theorem::T1 => None,
            Theorem::T2 => Some(0.0),
            Theorem::T3 => cfg.support_radius()?,
        };
        match param {
            Some(p) => {
                let fit = fit_decay(&series.times(), &series.energies(), model, p, cfg.fit_window()?)?;
                let verdict = theorem_verdict(&fit, c, cfg.margin)?;
                report.fits.push(fit);
                report.verdicts.push(verdict);
            }
            None => {
                report.fit_note = Some(
                    "ln(b+t) is flat at reachable times for the theorem's b; only bundle boundedness is checked"
                        .into(),
                )
            }
        }
        report.x_functional = x_summary(series, t_max);
        if let Some(x) = &report.x_functional {
            report.checks.push(Check::at_most(
                "x_stabilized",
                x.max_abs_last_half / x.max_abs_first_half.max(f64::MIN_POSITIVE),
                1.05,
            ));
        }
        report.bundle = bundle_summaries(sim, t_max, cfg.analysis.bundle_tolerance);
        let worst = report
            .bundle
            .iter()
            .filter_map(|b| b.last_decade_fraction.map(|f| if b.finite { f } else { f64::INFINITY }))
            .fold(0.0, f64::max);
        report.checks.push(Check::at_most("bundle_last_decade", worst, cfg.analysis.bundle_tolerance));
    }

    let tc = truncation_contamination(series);
    report.truncation_contamination = Some(tc);
    report.checks.push(Check::at_most(
        "truncation_contamination",
        tc,
        if compact { 1e-6 } else { 1e-4 },
    ));
    report.support_excess = sim.support_excess;
    if cone_mode(cfg) == ConeCheck::Strict {
        if let Some(e) = sim.support_excess {
            report.checks.push(Check::at_most("support_cone_excess", e, 0.0));
        }
    }

    if cfg.analysis.reference_divisor > 0 {
        let cc = cross_check(sim, cfg.analysis.reference_divisor)?;
        report.checks.push(Check::at_most("reference_energy_gap", cc.max_rel_diff, 5e-3));
        report.cross_check = Some(cc);
    }
    Ok(())
}

fn refine(cfg: &ScenarioConfig, base: &Simulation, report: &mut ScenarioReport) -> Result<(), Failure> {
    let levels = cfg.analysis.refinements;
    if levels <= 1 {
        return Ok(());
    }
    let mut prev = base.series.identity_defect();
    report.refinement.push(RefinementLevel {
        h: base.grid.h(),
        dt: base.params.dt,
        identity: prev,
        ratio: None,
    });
    let h0 = cfg.geometry()?.h;
    for j in 1..levels {
        let scale = 1usize << j;
        let sim = simulate(cfg, h0 / scale as f64, base.stride * scale)?;
        let id = sim.series.identity_defect();
        let ratio = prev.final_defect / id.final_defect;
        report.refinement.push(RefinementLevel {
            h: sim.grid.h(),
            dt: sim.params.dt,
            identity: id,
            ratio: Some(ratio),
        });
        report
            .checks
            .push(Check::at_least(&format!("identity_ratio_level{j}"), ratio, 1.8));
        prev = id;
    }
    Ok(())
}

fn finish(mut report: ScenarioReport, start: Instant) -> ScenarioReport {
    report.passed = report.verdicts.iter().all(|v| v.pass) && report.checks.iter().all(|c| c.pass);
    report.wall_clock_s = start.elapsed().as_secs_f64();
    report
}

fn execute(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, Failure> {
    let start = Instant::now();
    cfg.validate()?;
    let mut report = ScenarioReport::empty(cfg);
    if !cfg.is_pde() {
        let suite = run_weight_suite(cfg.seed, &cfg.suite)?;
        report.checks.push(Check::at_most(
            "t2_identity_rel_error",
            suite.identity.max_rel_error_t2,
            1e-9,
        ));
        report
            .checks
            .push(Check::at_least("t3_identity_slack", suite.identity.min_slack_t3, -1e-12));
        report
            .checks
            .push(Check::at_least("weight_inequality_margin", suite.inequalities.min_margin, 0.0));
        report.checks.push(Check::at_most(
            "derivative_rel_error",
            suite.derivatives.max_rel_error,
            1e-5,
        ));
        report.weight_suite = Some(suite);
        return Ok(ScenarioOutcome {
            report: finish(report, start),
            series: None,
        });
    }
    let h = cfg.geometry()?.h;
    let sim = simulate(cfg, h, cfg.time.sample_stride)?;
    analyse(cfg, &sim, &mut report).map_err(|error| Failure {
        error,
        partial: Some(Box::new(sim.series.clone())),
    })?;
    refine(cfg, &sim, &mut report)?;
    Ok(ScenarioOutcome {
        report: finish(report, start),
        series: Some(sim.series),
    })
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ScenarioError> {
    let io = |source: std::io::Error| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn series_path(out: &Path, name: &str) -> PathBuf {
    out.join(format!("{name}.series.csv"))
}

pub fn report_path(out: &Path, name: &str) -> PathBuf {
    out.join(format!("{name}.report.json"))
}

pub fn fit_path(out: &Path, name: &str, model: DecayModel) -> PathBuf {
    out.join(format!("{name}.fit-{}.dat", model.slug()))
}

fn persist(outcome: &mut ScenarioOutcome, out: &Path) -> Result<(), ScenarioError> {
    let name = outcome.report.name.clone();
    if let Some(series) = &outcome.series {
        let path = series_path(out, &name);
        write_atomic(&path, series.to_csv().as_bytes())?;
        outcome.report.series_file = path.file_name().map(|f| f.to_string_lossy().into_owned());
    }
    for fit in &outcome.report.fits {
        write_atomic(&fit_path(out, &name, fit.model), fit.to_dat().as_bytes())?;
    }
    write_atomic(&report_path(out, &name), outcome.report.to_json()?.as_bytes())
}

#[derive(Serialize)]
struct FailedReport<'a> {
    schema: u32,
    name: &'a str,
    error: String,
    config: &'a ScenarioConfig,
}

fn persist_failure(cfg: &ScenarioConfig, failure: &Failure, out: &Path) -> Result<(), ScenarioError> {
    if let Some(series) = &failure.partial {
        let mut p = series_path(out, &cfg.name).into_os_string();
        p.push(".failed");
        write_atomic(Path::new(&p), series.to_csv().as_bytes())?;
    }
    let body = FailedReport {
        schema: REPORT_SCHEMA,
        name: &cfg.name,
        error: failure.error.to_string(),
        config: cfg,
    };
    let mut p = report_path(out, &cfg.name).into_os_string();
    p.push(".failed");
    write_atomic(Path::new(&p), serde_json::to_string_pretty(&body)?.as_bytes())
}

/// Runs one scenario and, with `out` given, persists its outputs there.
pub fn run_scenario(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<ScenarioOutcome, ScenarioError> {
    match execute(cfg) {
        Ok(mut outcome) => {
            if let Some(dir) = out {
                persist(&mut outcome, dir)?;
            }
            Ok(outcome)
        }
        Err(failure) => {
            if let Some(dir) = out {
                persist_failure(cfg, &failure, dir)?;
            }
            Err(failure.error)
        }
    }
}
