//! Scenario configuration: a TOML document with a few flat sections.
//!
//! ```toml
//! name = "t3-compact-1d"
//! theorem = "T3"            # T1 | T2 | T3 | identity_only | weight_suite
//! dim = 1
//! r = 1.5
//! delta0 = 0.01
//! gamma_fraction = 0.9      # or `gamma = ...`
//! epsilon0 = 0.5
//! L = 1.0
//! a_max = 1.0
//! damping_kind = "exterior_smooth"
//!
//! [grid]
//! alpha = 1.0               # 1D obstacle; `rho` in 2D
//! x_max = 510.0             # 1D truncation; `r_out` in 2D
//! h = 0.05
//!
//! [data]
//! kind = "compact"          # or "weighted" with `sigma`
//! center = [1.5]
//! radius = 0.5
//! R = 2.0
//!
//! [time]
//! T_max = 500.0
//! cfl = 1.0
//! ```
//!
//! Unknown keys are rejected. Every theorem hypothesis is checked when the
//! document is loaded.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::DampingKind;
use crate::solver::BumpMode;
use crate::weights::{compute_constants, default_k1, Theorem, TheoremConstants, WeightError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid `{key}` = {value}: {reason}")]
    Invalid {
        key: &'static str,
        value: String,
        reason: String,
    },
    #[error("`gamma` = {gamma} is not admissible for {theorem}: violates {violated}")]
    Inadmissible {
        theorem: Theorem,
        gamma: f64,
        violated: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn bad(key: &'static str, value: impl ToString, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        value: value.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    T1,
    T2,
    T3,
    #[serde(rename = "identity_only")]
    IdentityOnly,
    #[serde(rename = "weight_suite")]
    WeightSuite,
}

impl ScenarioKind {
    pub fn theorem(&self) -> Option<Theorem> {
        match self {
            Self::T1 => Some(Theorem::T1),
            Self::T2 => Some(Theorem::T2),
            Self::T3 => Some(Theorem::T3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub alpha: Option<f64>,
    pub rho: Option<f64>,
    pub x_max: Option<f64>,
    pub r_out: Option<f64>,
    pub h: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Compact,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpModeConfig {
    BumpU,
    BumpV,
    Both,
}

impl From<BumpModeConfig> for BumpMode {
    fn from(m: BumpModeConfig) -> Self {
        match m {
            BumpModeConfig::BumpU => BumpMode::BumpU,
            BumpModeConfig::BumpV => BumpMode::BumpV,
            BumpModeConfig::Both => BumpMode::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DataKind,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Support radius of compact data; defaults to `|center| + radius`.
    #[serde(rename = "R")]
    pub support_radius: Option<f64>,
    #[serde(default = "default_mode")]
    pub mode: BumpModeConfig,
    pub sigma: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_mode() -> BumpModeConfig {
    BumpModeConfig::BumpU
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T_max")]
    pub t_max: Option<f64>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    /// Window length for the weighted energy inequality and the
    /// observability ratio; defaults to `T_max/10`.
    #[serde(rename = "T_window")]
    pub t_window: Option<f64>,
    /// Start of the post-transient analysis; defaults to `T_max/10`.
    #[serde(rename = "T1_threshold")]
    pub t1_threshold: Option<f64>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_max: None,
            cfl: default_cfl(),
            sample_stride: default_stride(),
            t_window: None,
            t1_threshold: None,
        }
    }
}

fn default_cfl() -> f64 {
    0.9
}

fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(default)]
    pub use_practical_b: bool,
    #[serde(default = "default_practical_b")]
    pub practical_b: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            use_practical_b: false,
            practical_b: default_practical_b(),
        }
    }
}

fn default_practical_b() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiFamilyKind {
    Poly,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeCheck {
    /// Abort the run on a violation.
    Strict,
    /// Record the worst excess only.
    Report,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Fit window; defaults to `[T1_threshold, T_max]`.
    pub fit_window: Option<[f64; 2]>,
    #[serde(default = "default_phi_family")]
    pub prop1_family: PhiFamilyKind,
    #[serde(default = "one")]
    pub prop1_gamma: f64,
    #[serde(default = "one")]
    pub prop1_mu: f64,
    #[serde(default = "one")]
    pub prop1_lambda: f64,
    #[serde(default = "yes")]
    pub prop1_per_step: bool,
    /// Observability ball radius; defaults to `2L`.
    pub chi_radius: Option<f64>,
    #[serde(default = "default_starts")]
    pub observability_windows: usize,
    /// Number of resolutions `h, h/2, ...` for the identity study.
    #[serde(default = "one_usize")]
    pub refinements: usize,
    /// Compare against the implicit reference at `dt / divisor` (0: off).
    #[serde(default)]
    pub reference_divisor: usize,
    /// Defaults to strict in 1D and report in 2D for compact data.
    pub cone_check: Option<ConeCheck>,
    /// Fraction of total growth allowed in the last decade of time.
    #[serde(default = "default_decade")]
    pub bundle_tolerance: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            fit_window: None,
            prop1_family: default_phi_family(),
            prop1_gamma: 1.0,
            prop1_mu: 1.0,
            prop1_lambda: 1.0,
            prop1_per_step: true,
            chi_radius: None,
            observability_windows: default_starts(),
            refinements: 1,
            reference_divisor: 0,
            cone_check: None,
            bundle_tolerance: default_decade(),
        }
    }
}

fn default_phi_family() -> PhiFamilyKind {
    PhiFamilyKind::Poly
}

fn yes() -> bool {
    true
}

fn default_starts() -> usize {
    10
}

fn one_usize() -> usize {
    1
}

fn default_decade() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    /// Random `(r, δ0)` pairs for the constant identities.
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    /// Random `(β, r)` cases for the weight inequalities.
    #[serde(default = "default_cases")]
    pub cases: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_s_max")]
    pub s_max: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            pairs: default_pairs(),
            cases: default_cases(),
            samples: default_samples(),
            s_max: default_s_max(),
        }
    }
}

fn default_pairs() -> usize {
    200
}

fn default_cases() -> usize {
    20
}

fn default_samples() -> usize {
    10_000
}

fn default_s_max() -> f64 {
    1e9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub theorem: ScenarioKind,
    #[serde(default = "default_dim")]
    pub dim: u32,
    pub r: Option<f64>,
    pub delta0: Option<f64>,
    pub gamma: Option<f64>,
    /// `γ = fraction · (smallest admissibility bound)`.
    pub gamma_fraction: Option<f64>,
    #[serde(default = "default_eps0")]
    pub epsilon0: f64,
    #[serde(rename = "L", default = "one")]
    pub l: f64,
    #[serde(default = "one")]
    pub a_max: f64,
    #[serde(default = "default_kind")]
    pub damping_kind: DampingKind,
    /// Defaults to `8 (2/ε0 + 1)`.
    pub k1: Option<f64>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub suite: SuiteConfig,
}

fn default_dim() -> u32 {
    1
}

fn default_eps0() -> f64 {
    0.5
}

fn default_kind() -> DampingKind {
    DampingKind::ExteriorSmooth
}

fn default_margin() -> f64 {
    0.8
}

/// Parses and validates a config document.
pub fn load_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and validates a config file.
pub fn load_config_file(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_config(&text)
}

fn positive(key: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, v, "must be a positive finite number"))
    }
}

fn need<T: Copy>(v: Option<T>, key: &'static str) -> Result<T, ConfigError> {
    v.ok_or(ConfigError::Missing(key))
}

/// Resolved geometry of a PDE scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    /// `α` in 1D, `ρ` in 2D.
    pub inner: f64,
    /// `x_max` in 1D, `r_out` in 2D.
    pub outer: f64,
    pub h: f64,
}

impl ScenarioConfig {
    pub fn is_pde(&self) -> bool {
        self.theorem != ScenarioKind::WeightSuite
    }

    pub fn t_max(&self) -> Result<f64, ConfigError> {
        positive("time.T_max", need(self.time.t_max, "time.T_max")?)
    }

    pub fn t1_threshold(&self) -> Result<f64, ConfigError> {
        Ok(self.time.t1_threshold.unwrap_or(self.t_max()? / 10.0))
    }

    pub fn t_window(&self) -> Result<f64, ConfigError> {
        Ok(self.time.t_window.unwrap_or(self.t_max()? / 10.0))
    }

    pub fn fit_window(&self) -> Result<[f64; 2], ConfigError> {
        match self.analysis.fit_window {
            Some(w) => Ok(w),
            None => Ok([self.t1_threshold()?, self.t_max()?]),
        }
    }

    pub fn chi_radius(&self) -> f64 {
        self.analysis.chi_radius.unwrap_or(2.0 * self.l)
    }

    pub fn k1(&self) -> f64 {
        self.k1.unwrap_or_else(|| default_k1(self.epsilon0))
    }

    pub fn geometry(&self) -> Result<Geometry, ConfigError> {
        let g = &self.grid;
        let h = positive("grid.h", need(g.h, "grid.h")?)?;
        let (inner, outer) = match self.dim {
            1 => {
                if g.rho.is_some() || g.r_out.is_some() {
                    return Err(bad("grid", "rho/r_out", "1D grids take `alpha` and `x_max`"));
                }
                (g.alpha.unwrap_or(0.0), need(g.x_max, "grid.x_max")?)
            }
            2 => {
                if g.alpha.is_some() || g.x_max.is_some() {
                    return Err(bad("grid", "alpha/x_max", "2D grids take `rho` and `r_out`"));
                }
                (
                    positive("grid.rho", need(g.rho, "grid.rho")?)?,
                    need(g.r_out, "grid.r_out")?,
                )
            }
            d => return Err(bad("dim", d, "only dimensions 1 and 2 are supported")),
        };
        if !(inner >= 0.0) {
            return Err(bad("grid.alpha", inner, "must be >= 0"));
        }
        if !(outer > inner) {
            return Err(bad("grid.x_max", outer, format!("must exceed the obstacle radius {inner}")));
        }
        if h > (outer - inner) / 16.0 {
            return Err(bad("grid.h", h, "too coarse for the domain"));
        }
        Ok(Geometry { inner, outer, h })
    }

    /// Support radius `R` of compact data.
    pub fn support_radius(&self) -> Result<Option<f64>, ConfigError> {
        let Some(data) = &self.data else {
            return Ok(None);
        };
        if data.kind != DataKind::Compact {
            return Ok(None);
        }
        let center = data.center.as_ref().ok_or(ConfigError::Missing("data.center"))?;
        let radius = need(data.radius, "data.radius")?;
        let reach = center.iter().fold(0.0_f64, |a, c| a.hypot(*c)) + radius;
        match data.support_radius {
            Some(r) if r + 1e-12 < reach => Err(bad(
                "data.R",
                r,
                format!("the bump reaches |x| = {reach}, outside B_R"),
            )),
            Some(r) => Ok(Some(r)),
            None => Ok(Some(reach)),
        }
    }

    /// Theorem constants with γ resolved from `gamma` or `gamma_fraction`.
    pub fn constants(&self) -> Result<Option<TheoremConstants>, ConfigError> {
        let Some(theorem) = self.theorem.theorem() else {
            return Ok(None);
        };
        let r = need(self.r, "r")?;
        let delta0 = need(self.delta0, "delta0")?;
        let k1 = self.k1();
        let map = |e: WeightError| match e {
            WeightError::InadmissibleGamma {
                theorem,
                gamma,
                violated,
            } => ConfigError::Inadmissible {
                theorem,
                gamma,
                violated,
            },
            WeightError::InvalidParameter { name, value, reason } => ConfigError::Invalid {
                key: name,
                value: value.to_string(),
                reason,
            },
            other => bad("theorem", theorem, other.to_string()),
        };
        let gamma = match (self.gamma, self.gamma_fraction) {
            (Some(g), None) => g,
            (None, Some(frac)) => {
                if !(frac > 0.0 && frac < 1.0) {
                    return Err(bad("gamma_fraction", frac, "need 0 < fraction < 1"));
                }
                let probe = compute_constants(theorem, r, self.dim, delta0, 1e-9, k1).map_err(map)?;
                let upper = probe.gamma_upper();
                if !upper.is_finite() {
                    return Err(bad(
                        "gamma_fraction",
                        frac,
                        format!("{theorem} puts no upper bound on gamma here; give `gamma`"),
                    ));
                }
                frac * upper
            }
            (Some(_), Some(_)) => {
                return Err(bad("gamma", "gamma_fraction", "give either gamma or gamma_fraction"))
            }
            (None, None) => return Err(ConfigError::Missing("gamma")),
        };
        compute_constants(theorem, r, self.dim, delta0, gamma, k1)
            .map(Some)
            .map_err(map)
    }

    /// Checks every cross-field constraint.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        {
            return Err(bad("name", &self.name, "use letters, digits, '-', '_' or '.'"));
        }
        positive("margin", self.margin)?;
        if !self.is_pde() {
            let s = &self.suite;
            if s.pairs == 0 || s.cases == 0 || s.samples < 2 {
                return Err(bad("suite", s.samples, "pairs, cases >= 1 and samples >= 2"));
            }
            positive("suite.s_max", s.s_max)?;
            return Ok(());
        }
        let r = need(self.r, "r")?;
        if !(r > 1.0) {
            return Err(bad("r", r, "need r > 1"));
        }
        positive("epsilon0", self.epsilon0)?;
        positive("L", self.l)?;
        if !(self.a_max >= self.epsilon0) {
            return Err(bad("a_max", self.a_max, format!("need a_max >= epsilon0 = {}", self.epsilon0)));
        }
        let geo = self.geometry()?;
        if 2.0 * self.l > geo.outer {
            return Err(bad("L", self.l, format!("need 2L <= truncation radius {}", geo.outer)));
        }
        let t_max = self.t_max()?;
        let cfl = self.time.cfl;
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(bad("time.cfl", cfl, "need 0 < cfl <= 1"));
        }
        if self.time.sample_stride == 0 {
            return Err(bad("time.sample_stride", 0, "need stride >= 1"));
        }
        let t1 = self.t1_threshold()?;
        let tw = positive("time.T_window", self.t_window()?)?;
        if !(t1 >= 0.0 && t1 + tw <= t_max) {
            return Err(bad(
                "time.T1_threshold",
                t1,
                format!("need T1_threshold + T_window <= T_max = {t_max}"),
            ));
        }
        let fw = self.fit_window()?;
        if !(fw[0] >= 0.0 && fw[0] < fw[1] && fw[1] <= t_max * (1.0 + 1e-12)) {
            return Err(bad("analysis.fit_window", format!("{fw:?}"), format!("need 0 <= lo < hi <= T_max = {t_max}")));
        }
        let a = &self.analysis;
        positive("analysis.prop1_gamma", a.prop1_gamma)?;
        if a.prop1_family == PhiFamilyKind::Poly && a.prop1_gamma > 1.0 {
            return Err(bad(
                "analysis.prop1_gamma",
                a.prop1_gamma,
                "polynomial weights need gamma <= 1 for bounded derivatives",
            ));
        }
        if !(a.prop1_mu >= 0.0 && a.prop1_lambda >= 0.0) {
            return Err(bad("analysis.prop1_mu", a.prop1_mu, "need mu, lambda >= 0"));
        }
        positive("analysis.chi_radius", self.chi_radius())?;
        if a.refinements == 0 || a.refinements > 4 {
            return Err(bad("analysis.refinements", a.refinements, "need 1..=4"));
        }
        if !(a.bundle_tolerance > 0.0 && a.bundle_tolerance < 1.0) {
            return Err(bad("analysis.bundle_tolerance", a.bundle_tolerance, "need a fraction in (0, 1)"));
        }
        if !(self.weights.practical_b >= std::f64::consts::E) {
            return Err(bad("weights.practical_b", self.weights.practical_b, "need b >= e"));
        }

        let data = self.data.as_ref().ok_or(ConfigError::Missing("data"))?;
        positive("data.amplitude", data.amplitude)?;
        match data.kind {
            DataKind::Compact => {
                let center = data.center.as_ref().ok_or(ConfigError::Missing("data.center"))?;
                if center.len() != self.dim as usize {
                    return Err(bad("data.center", format!("{center:?}"), format!("need {} coordinates", self.dim)));
                }
                positive("data.radius", need(data.radius, "data.radius")?)?;
                let big_r = self.support_radius()?.unwrap_or(0.0);
                // the support cone, plus the truncation band, must stay inside
                let reach = big_r + t_max + 8.0 * geo.h;
                if reach > geo.outer {
                    return Err(bad(
                        "grid.x_max",
                        geo.outer,
                        format!("compact data needs a cone-safe truncation: R + T_max + 8h = {reach}"),
                    ));
                }
                if self.theorem == ScenarioKind::T3 && !(big_r >= 1.0 && big_r >= geo.inner) {
                    return Err(bad("data.R", big_r, "T3 needs R >= 1 with the obstacle inside B_R"));
                }
            }
            DataKind::Weighted => {
                positive("data.sigma", need(data.sigma, "data.sigma")?)?;
                if self.theorem == ScenarioKind::T3 {
                    return Err(bad("data.kind", "weighted", "T3 needs compactly supported data"));
                }
            }
        }
        self.constants()?;
        Ok(())
    }
}
