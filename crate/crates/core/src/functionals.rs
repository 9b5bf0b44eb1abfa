//! Energies, weighted energies, the auxiliary functional `X(t)` and the
//! bundle of weighted integrals tracked along a run.
//!
//! Space integrals are node sums times `h^d`. Time integrals of the bundle
//! use the trapezoid rule over samples; the two time integrals of the
//! weighted energy inequality are accumulated at every step instead, since
//! they are compared against an energy that changes by `O(dt)` per step.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CutoffPsi, DampingProfile, ExteriorGrid};
use crate::solver::{staggered_energy, RunObserver, SolverError, WaveState};
use crate::weights::{
    eval_q, LogWeight, Monomial, Regime, Theorem, TheoremConstants, WeightError, WeightFamily,
    WeightFn,
};

pub use crate::solver::energy;

#[derive(Debug, Error)]
pub enum FunctionalError {
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error("field has {found} nodes, grid has {expected}")]
    Mismatch { expected: usize, found: usize },
    #[error("{theorem} needs a {expected:?} weight family, got {found:?}")]
    RegimeMismatch {
        theorem: Theorem,
        expected: Regime,
        found: Regime,
    },
    #[error("samples are not uniformly spaced: step {found} before t = {t}, expected {expected}")]
    StrideMismatch { t: f64, expected: f64, found: f64 },
    #[error("window {window} does not fit in the series span {span}")]
    WindowTooLong { window: f64, span: f64 },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },
    #[error("{0} is not finite")]
    NonFinite(String),
    #[error("series csv: {0}")]
    Csv(String),
}

fn invalid(name: &'static str, value: f64, reason: impl Into<String>) -> FunctionalError {
    FunctionalError::InvalidParameter {
        name,
        value,
        reason: reason.into(),
    }
}

fn check_len(grid: &ExteriorGrid, field: &[f64]) -> Result<(), FunctionalError> {
    if field.len() != grid.node_count() {
        return Err(FunctionalError::Mismatch {
            expected: grid.node_count(),
            found: field.len(),
        });
    }
    Ok(())
}

fn gradient(grid: &ExteriorGrid, u: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; grid.node_count()];
    grid.gradient_density(u, &mut g);
    g
}

/// `q(x_k)` for every node.
pub fn node_q(grid: &ExteriorGrid) -> Vec<f64> {
    (0..grid.node_count()).map(|k| eval_q(grid.point(k))).collect()
}

/// Argument of a family's weights at a node: `q + t`, or `t` alone for
/// compact-support weights.
pub fn weight_argument(family: &WeightFamily, q: f64, t: f64) -> f64 {
    match family.regime {
        Regime::CompactPoly => t,
        _ => q + t,
    }
}

/// `(φ(s), φ'(s))` as plain numbers, with a direct path for the families
/// whose base fits in an `f64`.
pub fn phi_pair(family: &WeightFamily, s: f64) -> Result<(f64, f64), FunctionalError> {
    let g = family.beta + 1.0;
    let base = match family.regime {
        Regime::Poly => Some(1.0 + s),
        Regime::CompactPoly => Some(family.radius + s),
        Regime::Log if family.practical_b => Some(family.ln_b.exp() + s),
        Regime::Log => None,
    };
    match (family.regime, base) {
        (Regime::Log, Some(base)) => {
            let l = base.ln();
            let phi = l.powf(g);
            Ok((phi, g * phi / (l * base)))
        }
        (_, Some(base)) => {
            let phi = base.powf(g);
            Ok((phi, g * phi / base))
        }
        _ => Ok((
            family.value(WeightFn::Phi, s)?,
            family.value(WeightFn::PhiPrime, s)?,
        )),
    }
}

/// Energy tracked along runs: the staggered energy minus
/// `(dt/2) h^d Σ a|v|^{r+1}/(r+1)`.
///
/// With `v` lagging half a step, its balance with the cumulative
/// dissipation is exact without damping and first order in `dt` with it.
pub fn tracked_energy(
    state: &WaveState,
    grid: &ExteriorGrid,
    damping: &DampingProfile,
    r: f64,
    dt: f64,
) -> f64 {
    tracked_weighted_energy(state, grid, damping, r, dt, None)
}

/// [`tracked_energy`] with per-node weights `φ_k` on every density.
/// `None` means `φ ≡ 1` and reproduces [`tracked_energy`] exactly.
pub fn tracked_weighted_energy(
    state: &WaveState,
    grid: &ExteriorGrid,
    damping: &DampingProfile,
    r: f64,
    dt: f64,
    phi: Option<&[f64]>,
) -> f64 {
    let a = &damping.values;
    let correction: f64 = grid
        .fluid_nodes()
        .iter()
        .map(|&k| {
            let w = phi.map_or(1.0, |p| p[k]);
            w * a[k] * state.v[k].abs().powf(r + 1.0)
        })
        .sum();
    let base = match phi {
        None => staggered_energy(state, grid, dt),
        Some(p) => {
            let lagged: Vec<f64> = state
                .u
                .iter()
                .zip(&state.v)
                .map(|(u, v)| u - dt * v)
                .collect();
            let mut prod = vec![0.0; grid.node_count()];
            grid.gradient_product_density(&state.u, &lagged, &mut prod);
            let s: f64 = grid
                .fluid_nodes()
                .iter()
                .map(|&k| p[k] * (state.v[k] * state.v[k] + prod[k]))
                .sum();
            0.5 * grid.cell_volume() * s
        }
    };
    base - 0.5 * dt * grid.cell_volume() * correction / (r + 1.0)
}

/// A weighted energy together with its logarithm, which stays meaningful
/// when the value itself leaves the `f64` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedEnergy {
    /// `+inf` on overflow.
    pub value: f64,
    pub ln_value: f64,
    pub overflow: bool,
}

/// `E_φ(t) = (h^d/2) Σ φ(μ q(x_k) + λ t)(|∇_h u|^2 + v^2)`, summed in log
/// space.
pub fn weighted_energy(
    state: &WaveState,
    grid: &ExteriorGrid,
    family: &WeightFamily,
    mu: f64,
    lambda: f64,
) -> Result<WeightedEnergy, FunctionalError> {
    if !(mu >= 0.0) || !(lambda >= 0.0) {
        return Err(invalid("mu/lambda", mu.min(lambda), "need mu, lambda >= 0"));
    }
    check_len(grid, &state.u)?;
    check_len(grid, &state.v)?;
    let g = gradient(grid, &state.u);
    let mut logs = Vec::with_capacity(grid.fluid_nodes().len());
    for &k in grid.fluid_nodes() {
        let density = g[k] + state.v[k] * state.v[k];
        if density == 0.0 {
            continue;
        }
        let s = mu * eval_q(grid.point(k)) + lambda * state.t;
        let w = family.eval(WeightFn::Phi, s)?;
        logs.push(w.ln_abs() + density.ln());
    }
    if logs.is_empty() {
        return Ok(WeightedEnergy {
            value: 0.0,
            ln_value: f64::NEG_INFINITY,
            overflow: false,
        });
    }
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().map(|l| (l - m).exp()).sum();
    let ln_value = m + sum.ln() + (0.5 * grid.cell_volume()).ln();
    let overflow = ln_value > f64::MAX.ln();
    Ok(WeightedEnergy {
        value: if overflow { f64::INFINITY } else { ln_value.exp() },
        ln_value,
        overflow,
    })
}

/// The four terms of `X(t)`, already multiplied by their coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct XTerms {
    /// `∫ f v ∂t v` with `v = (1-ψ)u`.
    pub cross: f64,
    /// `(k1/2) ∫ f1 a |u|^2`.
    pub damped_square: f64,
    /// `k2 ∫ a f2 |u|^{r+1}` (`k2 = 1` for T1).
    pub damped_power: f64,
    /// `(k/2) ∫ φ (|∇u|^2 + |∂t u|^2)`.
    pub energy: f64,
}

impl XTerms {
    pub fn total(&self) -> f64 {
        self.cross + self.damped_square + self.damped_power + self.energy
    }
}

fn expected_regime(theorem: Theorem) -> Regime {
    match theorem {
        Theorem::T1 => Regime::Log,
        Theorem::T2 => Regime::Poly,
        Theorem::T3 => Regime::CompactPoly,
    }
}

fn check_family(constants: &TheoremConstants, family: &WeightFamily) -> Result<f64, FunctionalError> {
    let expected = expected_regime(constants.theorem);
    if family.regime != expected {
        return Err(FunctionalError::RegimeMismatch {
            theorem: constants.theorem,
            expected,
            found: family.regime,
        });
    }
    if (family.beta - constants.beta).abs() > 1e-12 * (1.0 + constants.beta.abs()) {
        return Err(invalid(
            "beta",
            family.beta,
            format!("family exponent differs from the constant pack's beta = {}", constants.beta),
        ));
    }
    family.r.ok_or(FunctionalError::Weight(WeightError::UnboundExponent))
}

/// The auxiliary functional of the active theorem, term by term.
pub fn x_terms(
    state: &WaveState,
    grid: &ExteriorGrid,
    psi: &CutoffPsi,
    damping: &DampingProfile,
    constants: &TheoremConstants,
    family: &WeightFamily,
) -> Result<XTerms, FunctionalError> {
    let r = check_family(constants, family)?;
    for f in [&state.u, &state.v, &psi.values, &damping.values] {
        check_len(grid, f)?;
    }
    let g = gradient(grid, &state.u);
    let a = &damping.values;
    let t = state.t;
    let roles = |s: f64| -> Result<[f64; 4], FunctionalError> {
        Ok([
            family.value(WeightFn::F, s)?,
            family.value(WeightFn::F1, s)?,
            family.value(WeightFn::F2, s)?,
            family.value(WeightFn::Phi, s)?,
        ])
    };
    let fixed = match family.regime {
        Regime::CompactPoly => Some(roles(t)?),
        _ => None,
    };
    let mut sums = [0.0; 4];
    for &k in grid.fluid_nodes() {
        let w = match fixed {
            Some(w) => w,
            None => roles(eval_q(grid.point(k)) + t)?,
        };
        let cut = 1.0 - psi.values[k];
        let (u, v) = (state.u[k], state.v[k]);
        sums[0] += w[0] * (cut * u) * (cut * v);
        sums[1] += w[1] * a[k] * u * u;
        sums[2] += w[2] * a[k] * u.abs().powf(r + 1.0);
        sums[3] += w[3] * (g[k] + v * v);
    }
    let hv = grid.cell_volume();
    Ok(XTerms {
        cross: hv * sums[0],
        damped_square: 0.5 * constants.k1 * hv * sums[1],
        damped_power: constants.k2 * hv * sums[2],
        energy: 0.5 * constants.k * hv * sums[3],
    })
}

/// `X(t)` of the active theorem.
pub fn x_functional(
    state: &WaveState,
    grid: &ExteriorGrid,
    psi: &CutoffPsi,
    damping: &DampingProfile,
    constants: &TheoremConstants,
    family: &WeightFamily,
) -> Result<f64, FunctionalError> {
    Ok(x_terms(state, grid, psi, damping, constants, family)?.total())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberKind {
    /// Evaluated afresh at every sample.
    Instantaneous,
    /// Time integral from 0, accumulated by the trapezoid rule.
    Cumulative,
}

/// Nodal density a bundle weight multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    /// `½(|∇u|^2 + |∂t u|^2)`
    Energy,
    /// `a |∂t u|^{r+1}`
    Dissipation,
    /// `a |u|^2`
    DampedSquare,
    /// `a |u|^{r+1}`
    DampedPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMember {
    pub name: String,
    pub kind: MemberKind,
    pub density: Density,
    /// Weight `ln^{a}(base) base^{e}` at `q + t` (or `t` for compact support).
    pub weight: Monomial,
    /// Reported values are the true values times `exp(-ln_scale)`. Nonzero
    /// only for logarithmic weights with the theorem's own `b`, where the
    /// factor `b^{e}` is far outside the `f64` range.
    pub ln_scale: f64,
    #[serde(skip)]
    pub family: Option<WeightFamily>,
}

/// Registry of the weighted quantities the active theorem bounds.
///
/// Names are `<label>.<member>`; `label` is `thm1`, `thm2` or `thm3`
/// (`thm1_pb` for the practical-`b` copy of the logarithmic bundle).
///
/// T1 (weights at `b + q + t`, `L = ln(b+q+t)`, `B = b+q+t`):
/// `energy_inst` `L^γ`·energy, `energy_f_cum` `L^{γ-1}/B`·energy,
/// `disp_weighted` `L^γ`·dissipation, `au2_inst` `L^{γ-1}/B^2`·`a|u|^2`,
/// `au2_cum` `L^{γ-1}/B^3`·`a|u|^2`, `aur_inst` `L^{γ-r}/B^r`·`a|u|^{r+1}`,
/// `aur_cum` `L^{γ-r}/B^{r+1}`·`a|u|^{r+1}`. Each of the four `|u|` members
/// is also tracked in the other reading: `*_inst_integrated` and
/// `*_cum_pointwise`.
///
/// T2 (weights `(1+q+t)^e`): `energy_inst` γ, `energy_cum` γ-1,
/// `disp_weighted` γ, `au2_inst` γ-2, `au2_cum` γ-3, `aur_inst` γ-r,
/// `aur_cum` γ-r-1.
///
/// T3 (weights `(R+t)^e`): `energy_tail` γ-1 (integrated), `disp_weighted`
/// γ, `au2_inst` γ-2, `aur_inst` γ-r, `au2_cum` γ-3, `aur_cum` γ-r-1.
pub fn bundle_registry(
    theorem: Theorem,
    family: &WeightFamily,
    label: &str,
) -> Result<Vec<BundleMember>, FunctionalError> {
    let expected = expected_regime(theorem);
    if family.regime != expected {
        return Err(FunctionalError::RegimeMismatch {
            theorem,
            expected,
            found: family.regime,
        });
    }
    let r = family.r.ok_or(FunctionalError::Weight(WeightError::UnboundExponent))?;
    let g = family.gamma();
    use Density::*;
    use MemberKind::*;
    let entries: Vec<(&str, MemberKind, Density, f64, f64)> = match theorem {
        Theorem::T1 => vec![
            ("energy_inst", Instantaneous, Energy, g, 0.0),
            ("energy_f_cum", Cumulative, Energy, g - 1.0, -1.0),
            ("disp_weighted", Cumulative, Dissipation, g, 0.0),
            ("au2_inst", Instantaneous, DampedSquare, g - 1.0, -2.0),
            ("au2_cum", Cumulative, DampedSquare, g - 1.0, -3.0),
            ("aur_inst", Instantaneous, DampedPower, g - r, -r),
            ("aur_cum", Cumulative, DampedPower, g - r, -(r + 1.0)),
            ("au2_inst_integrated", Cumulative, DampedSquare, g - 1.0, -2.0),
            ("au2_cum_pointwise", Instantaneous, DampedSquare, g - 1.0, -3.0),
            ("aur_inst_integrated", Cumulative, DampedPower, g - r, -r),
            ("aur_cum_pointwise", Instantaneous, DampedPower, g - r, -(r + 1.0)),
        ],
        Theorem::T2 => vec![
            ("energy_inst", Instantaneous, Energy, 0.0, g),
            ("energy_cum", Cumulative, Energy, 0.0, g - 1.0),
            ("disp_weighted", Cumulative, Dissipation, 0.0, g),
            ("au2_inst", Instantaneous, DampedSquare, 0.0, g - 2.0),
            ("au2_cum", Cumulative, DampedSquare, 0.0, g - 3.0),
            ("aur_inst", Instantaneous, DampedPower, 0.0, g - r),
            ("aur_cum", Cumulative, DampedPower, 0.0, g - r - 1.0),
        ],
        Theorem::T3 => vec![
            ("energy_tail", Cumulative, Energy, 0.0, g - 1.0),
            ("disp_weighted", Cumulative, Dissipation, 0.0, g),
            ("au2_inst", Instantaneous, DampedSquare, 0.0, g - 2.0),
            ("aur_inst", Instantaneous, DampedPower, 0.0, g - r),
            ("au2_cum", Cumulative, DampedSquare, 0.0, g - 3.0),
            ("aur_cum", Cumulative, DampedPower, 0.0, g - r - 1.0),
        ],
    };
    let honest = family.regime == Regime::Log && !family.practical_b;
    Ok(entries
        .into_iter()
        .map(|(name, kind, density, ln_exp, base_exp)| BundleMember {
            name: format!("{label}.{name}"),
            kind,
            density,
            weight: Monomial::new(ln_exp, base_exp),
            ln_scale: if honest { base_exp * family.ln_b } else { 0.0 },
            family: Some(*family),
        })
        .collect())
}

impl BundleMember {
    fn weight_at(&self, s: f64) -> Result<f64, FunctionalError> {
        let family = self
            .family
            .as_ref()
            .ok_or_else(|| invalid("family", f64::NAN, format!("member {} has no family", self.name)))?;
        let w: LogWeight = family.eval_monomial(self.weight, s)?;
        if self.ln_scale != 0.0 {
            Ok(w.scaled_value())
        } else {
            Ok(w.value()?)
        }
    }
}

/// Nodal fields a bundle integrand is built from.
pub struct FieldView<'a> {
    pub u: &'a [f64],
    pub v: &'a [f64],
    /// `|∇_h u|^2` per node.
    pub grad: &'a [f64],
    pub a: &'a [f64],
    pub q: &'a [f64],
    pub r: f64,
    pub t: f64,
}

/// `h^d Σ w(s_k) ρ_k` for every member.
pub fn bundle_integrands(
    members: &[BundleMember],
    grid: &ExteriorGrid,
    fields: &FieldView<'_>,
) -> Result<Vec<f64>, FunctionalError> {
    let r = fields.r;
    let hv = grid.cell_volume();
    let density = |d: Density, k: usize| -> f64 {
        let (u, v, a) = (fields.u[k], fields.v[k], fields.a[k]);
        match d {
            Density::Energy => 0.5 * (fields.grad[k] + v * v),
            Density::Dissipation => a * v.abs().powf(r + 1.0),
            Density::DampedSquare => a * u * u,
            Density::DampedPower => a * u.abs().powf(r + 1.0),
        }
    };
    let mut out = Vec::with_capacity(members.len());
    for m in members {
        let compact = m.family.map(|f| f.regime) == Some(Regime::CompactPoly);
        let mut sum = 0.0;
        if compact {
            let w = m.weight_at(fields.t)?;
            let mut inner = 0.0;
            for &k in grid.fluid_nodes() {
                inner += density(m.density, k);
            }
            sum = w * inner;
        } else {
            for &k in grid.fluid_nodes() {
                let rho = density(m.density, k);
                if rho != 0.0 {
                    sum += m.weight_at(fields.q[k] + fields.t)? * rho;
                }
            }
        }
        out.push(hv * sum);
    }
    Ok(out)
}

/// Folds per-sample integrands into member values: instantaneous members
/// take the latest integrand, cumulative ones a trapezoid sum.
#[derive(Debug, Clone)]
pub struct BundleAccumulator {
    kinds: Vec<MemberKind>,
    values: Vec<f64>,
    prev: Option<(f64, Vec<f64>)>,
    stride: Option<f64>,
}

impl BundleAccumulator {
    pub fn new(members: &[BundleMember]) -> Self {
        Self {
            kinds: members.iter().map(|m| m.kind).collect(),
            values: vec![0.0; members.len()],
            prev: None,
            stride: None,
        }
    }

    /// Adds the sample at time `t`. Samples must be equally spaced.
    pub fn push(&mut self, t: f64, integrands: &[f64]) -> Result<&[f64], FunctionalError> {
        if integrands.len() != self.kinds.len() {
            return Err(FunctionalError::Mismatch {
                expected: self.kinds.len(),
                found: integrands.len(),
            });
        }
        if let Some((t0, prev)) = &self.prev {
            let dt = t - t0;
            match self.stride {
                None => self.stride = Some(dt),
                Some(s) if (dt - s).abs() > 1e-9 * s.max(1e-300) => {
                    return Err(FunctionalError::StrideMismatch {
                        t,
                        expected: s,
                        found: dt,
                    })
                }
                _ => {}
            }
            for (i, kind) in self.kinds.iter().enumerate() {
                self.values[i] = match kind {
                    MemberKind::Instantaneous => integrands[i],
                    MemberKind::Cumulative => self.values[i] + 0.5 * dt * (prev[i] + integrands[i]),
                };
            }
        } else {
            for (i, kind) in self.kinds.iter().enumerate() {
                self.values[i] = match kind {
                    MemberKind::Instantaneous => integrands[i],
                    MemberKind::Cumulative => 0.0,
                };
            }
        }
        self.prev = Some((t, integrands.to_vec()));
        Ok(&self.values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One row of the tracked series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSample {
    pub t: f64,
    /// Tracked energy, see [`tracked_energy`].
    pub e: f64,
    /// Tracked weighted energy with the configured `φ(μq + λt)`.
    pub e_phi: f64,
    /// `X(t)`; NaN when the run has no theorem attached.
    pub x: f64,
    pub d_cum: f64,
    pub d_weighted_cum: f64,
    /// Bundle member values in registry order.
    pub bundle: Vec<f64>,
    /// `‖∇_h v‖^2 + ‖Δ_h u - a|v|^{r-1}v‖^2`.
    pub high_energy: f64,
    /// Energy within four cells of the truncation boundary.
    pub edge_energy: f64,
}

/// Per-sample quantities used by the window analyses but not persisted.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SampleDiagnostics {
    /// `∫_0^t ∫ a φ |∂t u|^{r+1}`, accumulated per step.
    pub phi_dissipation_cum: f64,
    /// `∫_0^t ∫ |φ'| (|∇u|^2 + |∂t u|^2)`, accumulated per step.
    pub phi_flux_cum: f64,
    /// `∫_{B_{R0}} f (|∇u|^2 + |∂t u|^2)`.
    pub obs_local: f64,
    /// `∫ a f (|∂t u|^2 + |∂t u|^{2r})`.
    pub obs_damping: f64,
    /// `∫ a |f1'| |u|^2`.
    pub obs_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FunctionalSeries {
    pub bundle_names: Vec<String>,
    pub samples: Vec<FunctionalSample>,
    #[serde(skip)]
    pub diagnostics: Vec<SampleDiagnostics>,
}

const FIXED_HEAD: [&str; 6] = ["t", "E", "E_phi", "X", "D_cum", "D_weighted_cum"];
const FIXED_TAIL: [&str; 2] = ["high_energy", "edge_energy"];

impl FunctionalSeries {
    pub fn header(&self) -> Vec<String> {
        FIXED_HEAD
            .iter()
            .map(|s| s.to_string())
            .chain(self.bundle_names.iter().cloned())
            .chain(FIXED_TAIL.iter().map(|s| s.to_string()))
            .collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.e).collect()
    }

    /// Values of a named column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let pick: Box<dyn Fn(&FunctionalSample) -> f64> = match name {
            "t" => Box::new(|s| s.t),
            "E" => Box::new(|s| s.e),
            "E_phi" => Box::new(|s| s.e_phi),
            "X" => Box::new(|s| s.x),
            "D_cum" => Box::new(|s| s.d_cum),
            "D_weighted_cum" => Box::new(|s| s.d_weighted_cum),
            "high_energy" => Box::new(|s| s.high_energy),
            "edge_energy" => Box::new(|s| s.edge_energy),
            _ => {
                let i = self.bundle_names.iter().position(|n| n == name)?;
                Box::new(move |s| s.bundle[i])
            }
        };
        Some(self.samples.iter().map(pick).collect())
    }

    /// CSV with a header row and every float at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        for s in &self.samples {
            let row = [s.t, s.e, s.e_phi, s.x, s.d_cum, s.d_weighted_cum]
                .into_iter()
                .chain(s.bundle.iter().copied())
                .chain([s.high_energy, s.edge_energy]);
            let mut first = true;
            for x in row {
                if !first {
                    out.push(',');
                }
                first = false;
                let _ = write!(out, "{x:.16e}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the output of [`Self::to_csv`]. Diagnostics are not stored in
    /// the file and come back empty.
    pub fn from_csv(text: &str) -> Result<Self, FunctionalError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| FunctionalError::Csv("empty file".into()))?
            .split(',')
            .map(str::trim)
            .collect();
        let n = header.len();
        if n < FIXED_HEAD.len() + FIXED_TAIL.len()
            || header[..FIXED_HEAD.len()] != FIXED_HEAD
            || header[n - FIXED_TAIL.len()..] != FIXED_TAIL
        {
            return Err(FunctionalError::Csv(format!(
                "unexpected header, need {} ... {}",
                FIXED_HEAD.join(","),
                FIXED_TAIL.join(",")
            )));
        }
        let bundle_names: Vec<String> = header[FIXED_HEAD.len()..n - FIXED_TAIL.len()]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut samples = Vec::new();
        for (line_no, line) in lines.enumerate() {
            let row: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| FunctionalError::Csv(format!("row {}: {e}", line_no + 2)))?;
            if row.len() != n {
                return Err(FunctionalError::Csv(format!(
                    "row {} has {} fields, header has {n}",
                    line_no + 2,
                    row.len()
                )));
            }
            samples.push(FunctionalSample {
                t: row[0],
                e: row[1],
                e_phi: row[2],
                x: row[3],
                d_cum: row[4],
                d_weighted_cum: row[5],
                bundle: row[6..n - 2].to_vec(),
                high_energy: row[n - 2],
                edge_energy: row[n - 1],
            });
        }
        Ok(Self {
            bundle_names,
            samples,
            diagnostics: Vec::new(),
        })
    }

    /// `max_t |E(t) + D(t) - E(0)| / E(0)` and the same at the last sample.
    pub fn identity_defect(&self) -> IdentityDefect {
        let Some(first) = self.samples.first() else {
            return IdentityDefect::default();
        };
        let e0 = first.e;
        if e0 == 0.0 {
            return IdentityDefect::default();
        }
        let rel = |s: &FunctionalSample| (s.e + s.d_cum - e0).abs() / e0;
        let mut out = IdentityDefect::default();
        for s in &self.samples {
            let d = rel(s);
            if d > out.max {
                out.max = d;
                out.worst_t = s.t;
            }
        }
        out.final_defect = rel(self.samples.last().unwrap());
        out.max_relative_increase = self
            .samples
            .windows(2)
            .map(|w| if w[0].e > 0.0 { w[1].e / w[0].e - 1.0 } else { w[1].e })
            .fold(f64::NEG_INFINITY, f64::max);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IdentityDefect {
    pub max: f64,
    pub worst_t: f64,
    pub final_defect: f64,
    /// Largest `E(t_{n+1}) / E(t_n) - 1` between consecutive samples.
    pub max_relative_increase: f64,
}

/// Initial-data functional of a theorem and its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFunctionals {
    pub theorem: Theorem,
    /// `I_0`, `I_1` or `I_2`.
    pub value: f64,
    pub components: BTreeMap<String, f64>,
}

impl DataFunctionals {
    /// `‖u_0‖²_{H²} + ‖u_1‖²_{H¹} + ‖u_1‖^{2r}_{H¹}`.
    pub fn sobolev_core(&self) -> f64 {
        self.components["h2_u0"] + self.components["h1_u1"] + self.components["h1_u1_pow_r"]
    }
}

/// Assembles `I_0` (T1), `I_1` (T2) or `I_2` (T3) from discrete norms:
/// `H²` as `Σ(u² + |∇_h u|² + |Δ_h u|²)`, `H¹` as `Σ(u² + |∇_h u|²)`, all
/// times `h^d`. The weighted norms of T1 and T2 use `φ(q)`.
pub fn data_functionals(
    u0: &[f64],
    u1: &[f64],
    grid: &ExteriorGrid,
    family: Option<&WeightFamily>,
    theorem: Theorem,
    r: f64,
    p: f64,
) -> Result<DataFunctionals, FunctionalError> {
    check_len(grid, u0)?;
    check_len(grid, u1)?;
    let hv = grid.cell_volume();
    let g0 = gradient(grid, u0);
    let g1 = gradient(grid, u1);
    let mut lap = vec![0.0; grid.node_count()];
    grid.laplacian(u0, &mut lap);
    let mut h2 = 0.0;
    let mut h1 = 0.0;
    let mut lr = 0.0;
    for &k in grid.fluid_nodes() {
        h2 += u0[k] * u0[k] + g0[k] + lap[k] * lap[k];
        h1 += u1[k] * u1[k] + g1[k];
        lr += u0[k].abs().powf(r + 1.0);
    }
    let (h2, h1, lr) = (hv * h2, hv * h1, hv * lr);
    let mut c = BTreeMap::new();
    c.insert("h2_u0".to_string(), h2);
    c.insert("h1_u1".to_string(), h1);
    c.insert("h1_u1_pow_r".to_string(), h1.powf(r));
    c.insert("lr1_u0".to_string(), lr);
    if theorem != Theorem::T3 {
        let family = family.ok_or_else(|| invalid("family", f64::NAN, "weighted norms need a family"))?;
        let expected = expected_regime(theorem);
        if family.regime != expected {
            return Err(FunctionalError::RegimeMismatch {
                theorem,
                expected,
                found: family.regime,
            });
        }
        let mut wg = 0.0;
        let mut wu = 0.0;
        for &k in grid.fluid_nodes() {
            let phi = family.value(WeightFn::Phi, eval_q(grid.point(k)))?;
            wg += phi * g0[k];
            wu += phi * u1[k] * u1[k];
        }
        if !(wg.is_finite() && wu.is_finite()) {
            return Err(FunctionalError::NonFinite("weighted data norm".into()));
        }
        c.insert("weighted_grad_u0".to_string(), hv * wg);
        c.insert("weighted_u1".to_string(), hv * wu);
    }
    let core = h2 + h1 + h1.powf(r);
    c.insert("power_p_half".to_string(), core.powf(0.5 * p));
    c.insert("one".to_string(), 1.0);
    let value: f64 = c.values().sum();
    if !value.is_finite() {
        return Err(FunctionalError::NonFinite("data functional".into()));
    }
    Ok(DataFunctionals {
        theorem,
        value,
        components: c,
    })
}

/// Worst violation of the weighted energy inequality over all windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub mu: f64,
    pub lambda: f64,
    pub window: f64,
    pub windows: usize,
    /// `max(0, max_t (LHS - RHS)) / E_φ(0)`.
    pub max_defect: f64,
    /// `max_t (LHS - RHS) / E_φ(0)`, negative when every window has slack.
    pub max_signed: f64,
    pub worst_t: f64,
}

fn window_samples(t: &[f64], window: f64) -> Result<usize, FunctionalError> {
    let span = t.last().copied().unwrap_or(0.0) - t.first().copied().unwrap_or(0.0);
    if t.len() < 2 || !(window > 0.0) || window > span * (1.0 + 1e-12) {
        return Err(FunctionalError::WindowTooLong { window, span });
    }
    let dt = t[1] - t[0];
    let w = ((window / dt).round() as usize).max(1);
    if w >= t.len() {
        return Err(FunctionalError::WindowTooLong { window, span });
    }
    Ok(w)
}

/// Checks `E_φ(t+T) + ∫∫ aφ|∂t u|^{r+1} ≤ E_φ(t) + ((λ+μ)/2) ∫∫ |φ'|(|∇u|² +
/// |∂t u|²)` over every window start in the series.
pub fn prop1_inequality_check(
    series: &FunctionalSeries,
    mu: f64,
    lambda: f64,
    window: f64,
) -> Result<Prop1Report, FunctionalError> {
    if series.diagnostics.len() != series.samples.len() {
        return Err(FunctionalError::Mismatch {
            expected: series.samples.len(),
            found: series.diagnostics.len(),
        });
    }
    let t = series.times();
    let w = window_samples(&t, window)?;
    let s = &series.samples;
    let d = &series.diagnostics;
    let norm = s[0].e_phi;
    let mut max_signed = f64::NEG_INFINITY;
    let mut worst_t = t[0];
    for i in 0..t.len() - w {
        let j = i + w;
        let lhs = s[j].e_phi + (d[j].phi_dissipation_cum - d[i].phi_dissipation_cum);
        let rhs = s[i].e_phi + 0.5 * (lambda + mu) * (d[j].phi_flux_cum - d[i].phi_flux_cum);
        let defect = if norm > 0.0 { (lhs - rhs) / norm } else { lhs - rhs };
        if defect > max_signed {
            max_signed = defect;
            worst_t = t[i];
        }
    }
    Ok(Prop1Report {
        mu,
        lambda,
        window,
        windows: t.len() - w,
        max_defect: max_signed.max(0.0),
        max_signed,
        worst_t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityReport {
    pub window: f64,
    pub chi_radius: f64,
    /// `(window start, ratio)`; the ratio is `+inf` when only the right-hand
    /// side vanishes.
    pub ratios: Vec<(f64, f64)>,
    pub max: f64,
    pub min: f64,
    /// `max / min` over the finite ratios.
    pub spread: f64,
    /// Every window had both sides zero.
    pub degenerate: bool,
}

fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(tt, yy)| 0.5 * (tt[1] - tt[0]) * (yy[0] + yy[1]))
        .sum()
}

/// Ratio of the local weighted energy in `B_{R0}` to the damping terms that
/// control it, over `starts` window starts spread evenly in
/// `[t_start, t_end - window]`.
pub fn observability_ratio(
    series: &FunctionalSeries,
    window: f64,
    chi_radius: f64,
    t_start: f64,
    starts: usize,
) -> Result<ObservabilityReport, FunctionalError> {
    if series.diagnostics.len() != series.samples.len() {
        return Err(FunctionalError::Mismatch {
            expected: series.samples.len(),
            found: series.diagnostics.len(),
        });
    }
    let t = series.times();
    let w = window_samples(&t, window)?;
    let dt = t[1] - t[0];
    let first = (((t_start - t[0]) / dt).round().max(0.0)) as usize;
    let last = t.len() - 1 - w;
    if first > last {
        return Err(FunctionalError::WindowTooLong {
            window: window + t_start,
            span: t[t.len() - 1] - t[0],
        });
    }
    let n = starts.max(1);
    let lhs_y: Vec<f64> = series.diagnostics.iter().map(|d| d.obs_local).collect();
    let rhs_y: Vec<f64> = series
        .diagnostics
        .iter()
        .map(|d| d.obs_damping + d.obs_f1)
        .collect();
    let mut ratios = Vec::with_capacity(n);
    let mut degenerate = true;
    for m in 0..n {
        let i = if n == 1 {
            first
        } else {
            first + ((last - first) as f64 * m as f64 / (n - 1) as f64).round() as usize
        };
        let lhs = trapezoid(&t[i..=i + w], &lhs_y[i..=i + w]);
        let rhs = trapezoid(&t[i..=i + w], &rhs_y[i..=i + w]);
        let ratio = if rhs > 0.0 {
            degenerate = false;
            lhs / rhs
        } else if lhs > 0.0 {
            degenerate = false;
            f64::INFINITY
        } else {
            f64::NAN
        };
        ratios.push((t[i], ratio));
    }
    let finite: Vec<f64> = ratios.iter().map(|r| r.1).filter(|x| x.is_finite()).collect();
    let max = ratios
        .iter()
        .map(|r| r.1)
        .filter(|x| !x.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let fmax = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ObservabilityReport {
        window,
        chi_radius,
        ratios,
        max,
        min,
        spread: if min > 0.0 { fmax / min } else { f64::NAN },
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighEnergyReport {
    pub max_value: f64,
    pub worst_t: f64,
    /// `2 (1 + ‖a‖_∞)(‖u_0‖²_{H²} + ‖u_1‖²_{H¹} + ‖u_1‖^{2r}_{H¹})`.
    pub bound: f64,
    /// `max_value - bound`.
    pub excess: f64,
    /// `max_value / bound` (0 when both vanish).
    pub ratio: f64,
    /// `max_value <= slack * bound`.
    pub holds: bool,
    pub slack: f64,
}

/// Compares the tracked second-order energy against the a-priori bound.
pub fn high_energy_check(
    series: &FunctionalSeries,
    data: &DataFunctionals,
    a_inf: f64,
    slack: f64,
) -> HighEnergyReport {
    let bound = 2.0 * (1.0 + a_inf) * data.sobolev_core();
    let (mut max_value, mut worst_t) = (0.0_f64, 0.0);
    for s in &series.samples {
        if s.high_energy > max_value {
            max_value = s.high_energy;
            worst_t = s.t;
        }
    }
    HighEnergyReport {
        max_value,
        worst_t,
        bound,
        excess: max_value - bound,
        ratio: if bound > 0.0 { max_value / bound } else { 0.0 },
        holds: max_value <= slack * bound,
        slack,
    }
}

/// `φ(μ q + λ t)` used for `E_φ` and the weighted energy inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiSpec {
    pub family: WeightFamily,
    pub mu: f64,
    pub lambda: f64,
}

/// Everything a [`Tracker`] needs besides the grid and damping.
#[derive(Debug, Clone)]
pub struct TrackerConfig {
    pub r: f64,
    pub dt: f64,
    /// Theorem constants and weight family for `X(t)` and the observability
    /// ratio; `None` for identity-only runs.
    pub theorem: Option<(TheoremConstants, WeightFamily)>,
    pub members: Vec<BundleMember>,
    pub phi: PhiSpec,
    /// Accumulate the weighted energy inequality terms at every step.
    pub per_step_phi: bool,
    /// Radius `R0` of the observability ball.
    pub chi_radius: f64,
}

/// Run observer that builds the [`FunctionalSeries`].
pub struct Tracker<'a> {
    grid: &'a ExteriorGrid,
    damping: &'a DampingProfile,
    psi: &'a CutoffPsi,
    cfg: TrackerConfig,
    q: Vec<f64>,
    band: Vec<usize>,
    chi: Vec<bool>,
    grad: Vec<f64>,
    lap: Vec<f64>,
    phi_w: Vec<f64>,
    bundle: BundleAccumulator,
    phi_dissipation_cum: f64,
    phi_flux_cum: f64,
    phi_flux_prev: Option<f64>,
    series: FunctionalSeries,
    error: Option<FunctionalError>,
}

impl<'a> Tracker<'a> {
    pub fn new(
        grid: &'a ExteriorGrid,
        damping: &'a DampingProfile,
        psi: &'a CutoffPsi,
        cfg: TrackerConfig,
    ) -> Result<Self, FunctionalError> {
        check_len(grid, &damping.values)?;
        check_len(grid, &psi.values)?;
        if !(cfg.dt > 0.0) {
            return Err(invalid("dt", cfg.dt, "need dt > 0"));
        }
        let q = node_q(grid);
        let band = grid.truncation_band(4.0 * grid.h());
        let chi = grid.radii().iter().map(|&r| r <= cfg.chi_radius).collect();
        let n = grid.node_count();
        let names = cfg.members.iter().map(|m| m.name.clone()).collect();
        Ok(Self {
            grid,
            damping,
            psi,
            bundle: BundleAccumulator::new(&cfg.members),
            cfg,
            q,
            band,
            chi,
            grad: vec![0.0; n],
            lap: vec![0.0; n],
            phi_w: vec![0.0; n],
            phi_dissipation_cum: 0.0,
            phi_flux_cum: 0.0,
            phi_flux_prev: None,
            series: FunctionalSeries {
                bundle_names: names,
                ..Default::default()
            },
            error: None,
        })
    }

    /// The first error raised while sampling, if any.
    pub fn take_error(&mut self) -> Option<FunctionalError> {
        self.error.take()
    }

    pub fn series(&self) -> &FunctionalSeries {
        &self.series
    }

    pub fn into_series(self) -> FunctionalSeries {
        self.series
    }

    fn fill_phi(&mut self, t: f64, derivative: bool) -> Result<(), FunctionalError> {
        let PhiSpec { family, mu, lambda } = self.cfg.phi;
        for &k in self.grid.fluid_nodes() {
            let (p, dp) = phi_pair(&family, mu * self.q[k] + lambda * t)?;
            self.phi_w[k] = if derivative { dp.abs() } else { p };
        }
        Ok(())
    }

    /// `h^d Σ |φ'| (|∇u|^2 + v^2)` with `self.grad` holding `|∇u|^2`.
    fn flux_integrand(&mut self, state: &WaveState) -> Result<f64, FunctionalError> {
        self.fill_phi(state.t, true)?;
        let s: f64 = self
            .grid
            .fluid_nodes()
            .iter()
            .map(|&k| self.phi_w[k] * (self.grad[k] + state.v[k] * state.v[k]))
            .sum();
        Ok(self.grid.cell_volume() * s)
    }

    fn try_sample(&mut self, state: &WaveState, d_cum: f64) -> Result<(), FunctionalError> {
        let grid = self.grid;
        let (r, dt) = (self.cfg.r, self.cfg.dt);
        let a = &self.damping.values;
        let hv = grid.cell_volume();
        grid.gradient_density(&state.u, &mut self.grad);

        if self.phi_flux_prev.is_none() {
            self.phi_flux_prev = Some(self.flux_integrand(state)?);
        }
        if !self.cfg.per_step_phi && !self.series.samples.is_empty() {
            // sample-level fallback: trapezoid between samples
            let prev_t = self.series.samples.last().unwrap().t;
            let flux = self.flux_integrand(state)?;
            let prev = self.phi_flux_prev.replace(flux).unwrap_or(flux);
            self.phi_flux_cum += 0.5 * (state.t - prev_t) * (prev + flux);
        }

        let e = tracked_energy(state, grid, self.damping, r, dt);
        self.fill_phi(state.t, false)?;
        let e_phi = tracked_weighted_energy(state, grid, self.damping, r, dt, Some(&self.phi_w));
        if !self.cfg.per_step_phi && !self.series.samples.is_empty() {
            let prev = self.series.samples.last().unwrap();
            let diss: f64 = grid
                .fluid_nodes()
                .iter()
                .map(|&k| self.phi_w[k] * a[k] * state.v[k].abs().powf(r + 1.0))
                .sum();
            self.phi_dissipation_cum += (state.t - prev.t) * hv * diss;
        }

        let (x, obs) = match &self.cfg.theorem {
            Some((constants, family)) => {
                let x = x_functional(state, grid, self.psi, self.damping, constants, family)?;
                let mut obs = [0.0; 3];
                for &k in grid.fluid_nodes() {
                    let s = weight_argument(family, self.q[k], state.t);
                    let v = state.v[k];
                    let f = family.eval(WeightFn::F, s)?;
                    let f1p = family.eval(WeightFn::F1Prime, s)?;
                    // common scale: strip the b-power of f from both sides
                    let shift = f.b_power() * family.ln_b;
                    let fv = scaled(&f, shift);
                    let f1v = scaled(&f1p, shift).abs();
                    if self.chi[k] {
                        obs[0] += fv * (self.grad[k] + v * v);
                    }
                    obs[1] += a[k] * fv * (v * v + v.abs().powf(2.0 * r));
                    obs[2] += a[k] * f1v * state.u[k] * state.u[k];
                }
                (x, obs.map(|o| hv * o))
            }
            None => (f64::NAN, [0.0; 3]),
        };

        let fields = FieldView {
            u: &state.u,
            v: &state.v,
            grad: &self.grad,
            a,
            q: &self.q,
            r,
            t: state.t,
        };
        let integrands = bundle_integrands(&self.cfg.members, grid, &fields)?;
        let bundle = self.bundle.push(state.t, &integrands)?.to_vec();
        let d_weighted_cum = self
            .cfg
            .members
            .iter()
            .position(|m| m.density == Density::Dissipation && m.kind == MemberKind::Cumulative)
            .map_or(0.0, |i| bundle[i]);

        // ∂t² u from the equation, ∇ ∂t u from v
        grid.laplacian(&state.u, &mut self.lap);
        let mut gv = vec![0.0; grid.node_count()];
        grid.gradient_density(&state.v, &mut gv);
        let mut high = 0.0;
        for &k in grid.fluid_nodes() {
            let v = state.v[k];
            let utt = self.lap[k] - a[k] * v.abs().powf(r - 1.0) * v;
            high += gv[k] + utt * utt;
        }
        let edge: f64 = self
            .band
            .iter()
            .map(|&k| 0.5 * (self.grad[k] + state.v[k] * state.v[k]))
            .sum();

        let sample = FunctionalSample {
            t: state.t,
            e,
            e_phi,
            x,
            d_cum,
            d_weighted_cum,
            bundle,
            high_energy: hv * high,
            edge_energy: hv * edge,
        };
        for (name, val) in [("E", e), ("E_phi", e_phi), ("high_energy", sample.high_energy)] {
            if !val.is_finite() {
                return Err(FunctionalError::NonFinite(format!("{name} at t = {}", state.t)));
            }
        }
        self.series.samples.push(sample);
        self.series.diagnostics.push(SampleDiagnostics {
            phi_dissipation_cum: self.phi_dissipation_cum,
            phi_flux_cum: self.phi_flux_cum,
            obs_local: obs[0],
            obs_damping: obs[1],
            obs_f1: obs[2],
        });
        Ok(())
    }

    fn try_step(&mut self, state: &WaveState, dissipation: &[f64]) -> Result<(), FunctionalError> {
        let grid = self.grid;
        let dt = self.cfg.dt;
        let hv = grid.cell_volume();
        // the new velocity lives at the half step
        self.fill_phi(state.t - 0.5 * dt, false)?;
        let diss: f64 = grid
            .fluid_nodes()
            .iter()
            .map(|&k| self.phi_w[k] * dissipation[k])
            .sum();
        self.phi_dissipation_cum += dt * hv * diss;
        grid.gradient_density(&state.u, &mut self.grad);
        let flux = self.flux_integrand(state)?;
        let prev = self.phi_flux_prev.replace(flux).unwrap_or(flux);
        self.phi_flux_cum += 0.5 * dt * (prev + flux);
        Ok(())
    }
}

fn scaled(w: &LogWeight, shift: f64) -> f64 {
    if w.is_zero() {
        0.0
    } else {
        w.sign() * (w.ln_abs() + shift).exp()
    }
}

impl RunObserver for Tracker<'_> {
    fn sample(&mut self, state: &WaveState, d_cum: f64) -> Result<(), SolverError> {
        if self.error.is_some() {
            return Err(SolverError::Observer("tracker already failed".into()));
        }
        self.try_sample(state, d_cum).map_err(|e| {
            let msg = e.to_string();
            self.error = Some(e);
            SolverError::Observer(msg)
        })
    }

    fn step(&mut self, state: &WaveState, dissipation: &[f64], _increment: f64) {
        if !self.cfg.per_step_phi || self.error.is_some() {
            return;
        }
        if let Err(e) = self.try_step(state, dissipation) {
            self.error = Some(e);
        }
    }
}
