//! Decay-exponent fits in the coordinates of each predicted rate, and the
//! one-sided verdict against a theorem's exponent.
//!
//! A fit is an ordinary least-squares line through `(x(t), ln E(t))` with
//! `x = ln ln(b+t)`, `ln(1+t)` or `ln((R+t)/R)`; the slope is `-γ̂`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functionals::FunctionalSeries;
use crate::weights::{GammaBound, Theorem, TheoremConstants};

/// Fewest samples a fit accepts.
pub const MIN_FIT_SAMPLES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecayError {
    #[error("fit needs at least {MIN_FIT_SAMPLES} samples with E > 0 in the window, found {found}")]
    TooFewSamples { found: usize },
    #[error("energy {value} at t = {t} is not positive")]
    NonPositiveEnergy { t: f64, value: f64 },
    #[error("{model:?} fits cannot be judged against {theorem}")]
    ModelMismatch { model: DecayModel, theorem: Theorem },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },
    #[error("time and energy columns differ in length ({t} vs {e})")]
    LengthMismatch { t: usize, e: usize },
}

fn invalid(name: &'static str, value: f64, reason: impl Into<String>) -> DecayError {
    DecayError::InvalidParameter {
        name,
        value,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecayModel {
    /// `E ~ C ln(b+t)^{-γ}`
    LogDecay,
    /// `E ~ C (1+t)^{-γ}`
    PolyDecay,
    /// `E ~ C (R/(R+t))^{γ}`
    CompactDecay,
}

impl DecayModel {
    pub fn for_theorem(theorem: Theorem) -> Self {
        match theorem {
            Theorem::T1 => Self::LogDecay,
            Theorem::T2 => Self::PolyDecay,
            Theorem::T3 => Self::CompactDecay,
        }
    }

    /// Short name used in file names.
    pub fn slug(&self) -> &'static str {
        match self {
            Self::LogDecay => "log",
            Self::PolyDecay => "poly",
            Self::CompactDecay => "compact",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        match s {
            "log" | "LogDecay" => Some(Self::LogDecay),
            "poly" | "PolyDecay" => Some(Self::PolyDecay),
            "compact" | "CompactDecay" => Some(Self::CompactDecay),
            _ => None,
        }
    }

    /// Transformed abscissa; `param` is `b` (log) or `R` (compact).
    fn abscissa(&self, t: f64, param: f64) -> f64 {
        match self {
            Self::LogDecay => (param + t).ln().ln(),
            Self::PolyDecay => t.ln_1p(),
            Self::CompactDecay => (t / param).ln_1p(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    /// `b` for log fits, `R` for compact fits, unused for polynomial fits.
    pub param: f64,
    pub gamma_hat: f64,
    /// Fitted prefactor as `ln C`.
    pub ln_c: f64,
    pub r_squared: f64,
    pub window: [f64; 2],
    pub residual_max: f64,
    pub samples: usize,
    /// Set when trailing zero energies shortened the window.
    pub note: Option<String>,
    /// `(x, ln E)` pairs the line was fitted to.
    #[serde(skip)]
    pub points: Vec<(f64, f64)>,
}

impl DecayFit {
    /// Two-column plot data: transformed abscissa and `ln E`.
    pub fn to_dat(&self) -> String {
        let mut out = format!("# {:?} gamma_hat={:.16e} ln_c={:.16e}\n", self.model, self.gamma_hat, self.ln_c);
        for (x, y) in &self.points {
            let _ = writeln!(out, "{x:.16e} {y:.16e}");
        }
        out
    }
}

/// Least-squares fit of `ln E` against the model's abscissa over samples
/// with `t` in `window`.
pub fn fit_decay(
    t: &[f64],
    e: &[f64],
    model: DecayModel,
    param: f64,
    window: [f64; 2],
) -> Result<DecayFit, DecayError> {
    if t.len() != e.len() {
        return Err(DecayError::LengthMismatch { t: t.len(), e: e.len() });
    }
    if !(window[0] < window[1]) || window[0] < 0.0 {
        return Err(invalid("window", window[0], format!("need 0 <= t_lo < t_hi, got {window:?}")));
    }
    match model {
        DecayModel::LogDecay if !(param > 1.0) => {
            return Err(invalid("b", param, "log fits need b > 1"))
        }
        DecayModel::CompactDecay if !(param > 0.0) => {
            return Err(invalid("R", param, "compact fits need R > 0"))
        }
        _ => {}
    }
    let idx: Vec<usize> = (0..t.len())
        .filter(|&i| t[i] >= window[0] && t[i] <= window[1])
        .collect();
    let mut note = None;
    let mut used = idx.len();
    if let Some(p) = idx.iter().position(|&i| !(e[i] > 0.0)) {
        let tail_zero = idx[p..].iter().all(|&i| e[i] == 0.0);
        if !tail_zero {
            let i = idx[p];
            return Err(DecayError::NonPositiveEnergy { t: t[i], value: e[i] });
        }
        note = Some(format!("energy vanishes from t = {}; window truncated", t[idx[p]]));
        used = p;
    }
    let idx = &idx[..used];
    if idx.len() < MIN_FIT_SAMPLES {
        return Err(DecayError::TooFewSamples { found: idx.len() });
    }
    let points: Vec<(f64, f64)> = idx
        .iter()
        .map(|&i| (model.abscissa(t[i], param), e[i].ln()))
        .collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("window", window[0], "abscissa does not vary over the window"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    let mut residual_max = 0.0_f64;
    for (x, y) in &points {
        let res = y - (intercept + slope * x);
        ss_res += res * res;
        residual_max = residual_max.max(res.abs());
    }
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(DecayFit {
        model,
        param,
        gamma_hat: -slope,
        ln_c: intercept,
        r_squared,
        window: [t[idx[0]], t[idx[idx.len() - 1]]],
        residual_max,
        samples: idx.len(),
        note,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub theorem: Theorem,
    pub model: DecayModel,
    pub gamma_hat: f64,
    /// The scenario's admissible γ.
    pub gamma_pred: f64,
    pub margin: f64,
    pub pass: bool,
    /// Smallest admissibility bound on γ and its name.
    pub binding_bound: Option<GammaBound>,
}

/// PASS when `γ̂ >= margin · γ`: the theorems bound the energy from above,
/// so faster numerical decay is consistent.
pub fn theorem_verdict(
    fit: &DecayFit,
    constants: &TheoremConstants,
    margin: f64,
) -> Result<Verdict, DecayError> {
    if fit.model != DecayModel::for_theorem(constants.theorem) {
        return Err(DecayError::ModelMismatch {
            model: fit.model,
            theorem: constants.theorem,
        });
    }
    if !(margin > 0.0) || !margin.is_finite() {
        return Err(invalid("margin", margin, "need margin > 0"));
    }
    Ok(Verdict {
        theorem: constants.theorem,
        model: fit.model,
        gamma_hat: fit.gamma_hat,
        gamma_pred: constants.gamma,
        margin,
        pass: fit.gamma_hat >= margin * constants.gamma,
        binding_bound: constants.binding_bound().cloned(),
    })
}

/// `∫ edge_energy dt / D_cum(T)`: energy that came within four cells of
/// the truncation boundary, relative to everything dissipated.
pub fn truncation_contamination(series: &FunctionalSeries) -> f64 {
    let s = &series.samples;
    let edge: f64 = s
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].edge_energy + w[1].edge_energy))
        .sum();
    let total = s.last().map_or(0.0, |x| x.d_cum);
    if edge == 0.0 {
        0.0
    } else if total > 0.0 {
        edge / total
    } else {
        f64::INFINITY
    }
}
