//! Weight functions of the three decay regimes, the theorem constant packs,
//! and pointwise verification of the weight inequalities that the
//! auxiliary-functional estimates rely on.
//!
//! Logarithmic weights carry a base `b` whose logarithm routinely runs into
//! the thousands, so every weight value is a [`LogWeight`]: a sign, a
//! logarithm and an explicit power of `b` that is kept apart until the value
//! is materialized.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest `x` with `exp(x)` finite.
const LN_F64_MAX: f64 = 709.782_712_893_384;

/// Slack used when testing `r` against the critical exponent `1 + 2/d`.
const CRITICAL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("weight argument must be a nonnegative finite number, got s = {0}")]
    NegativeArgument(f64),
    #[error("f2 and its derivative need the damping exponent r bound into the family")]
    UnboundExponent,
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },
    #[error("gamma = {gamma} is not admissible for {theorem}: violates {violated}")]
    InadmissibleGamma {
        theorem: Theorem,
        gamma: f64,
        violated: String,
    },
    #[error("expected a {expected:?} weight family, got {found:?}")]
    WrongRegime { expected: Regime, found: Regime },
    #[error("value exceeds the f64 range (ln|value| = {0})")]
    Overflow(f64),
}

fn invalid(name: &'static str, value: f64, reason: impl Into<String>) -> WeightError {
    WeightError::InvalidParameter {
        name,
        value,
        reason: reason.into(),
    }
}

/// `q(x) = (1 + |x|^2)^{1/2}`.
pub fn eval_q(x: &[f64]) -> f64 {
    let norm = x.iter().fold(0.0_f64, |acc, c| acc.hypot(*c));
    1.0_f64.hypot(norm)
}

/// A real number stored as `sign * exp(ln_rel) * b^(-b_power)`.
///
/// `ln_b` is carried along so that the value can be materialized; two
/// weights from the same family with equal `b_power` compare without ever
/// touching `ln_b`, which keeps comparisons exact when `ln_b` is huge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogWeight {
    sign: f64,
    ln_rel: f64,
    b_power: f64,
    ln_b: f64,
}

impl LogWeight {
    pub fn zero() -> Self {
        Self {
            sign: 0.0,
            ln_rel: f64::NEG_INFINITY,
            b_power: 0.0,
            ln_b: 0.0,
        }
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            return Self::zero();
        }
        Self {
            sign: x.signum(),
            ln_rel: x.abs().ln(),
            b_power: 0.0,
            ln_b: 0.0,
        }
    }

    fn build(coef: f64, ln_rest: f64, b_power: f64, ln_b: f64) -> Self {
        if coef == 0.0 {
            return Self {
                b_power,
                ln_b,
                ..Self::zero()
            };
        }
        Self {
            sign: coef.signum(),
            ln_rel: coef.abs().ln() + ln_rest,
            b_power,
            ln_b,
        }
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0.0
    }

    /// Exponent of `b^{-1}` kept outside `ln_rel`.
    pub fn b_power(&self) -> f64 {
        self.b_power
    }

    /// `ln|value|`; `-inf` for zero.
    pub fn ln_abs(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else if self.b_power == 0.0 {
            self.ln_rel
        } else {
            self.ln_rel - self.b_power * self.ln_b
        }
    }

    /// The value as an `f64`. Underflow returns zero; overflow is an error.
    pub fn value(&self) -> Result<f64, WeightError> {
        let ln = self.ln_abs();
        if ln > LN_F64_MAX {
            return Err(WeightError::Overflow(ln));
        }
        Ok(self.sign * ln.exp())
    }

    /// `value * b^{b_power}`: the value with the `b` scale stripped off.
    pub fn scaled_value(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.sign * self.ln_rel.exp()
        }
    }

    pub fn scale(self, c: f64) -> Self {
        if c == 0.0 || self.is_zero() {
            return Self {
                b_power: self.b_power,
                ln_b: self.ln_b,
                ..Self::zero()
            };
        }
        Self {
            sign: self.sign * c.signum(),
            ln_rel: self.ln_rel + c.abs().ln(),
            ..self
        }
    }

    pub fn powi(self, n: i32) -> Self {
        if self.is_zero() {
            return Self {
                b_power: self.b_power * n as f64,
                ..self
            };
        }
        Self {
            sign: if n % 2 == 0 { 1.0 } else { self.sign },
            ln_rel: self.ln_rel * n as f64,
            b_power: self.b_power * n as f64,
            ln_b: self.ln_b,
        }
    }

    /// Relative margin `(other - self) / max(|self|, |other|)`, in `[-2, 2]`.
    ///
    /// Nonnegative iff `self <= other`.
    pub fn margin_to(&self, other: &LogWeight) -> f64 {
        if self.is_zero() && other.is_zero() {
            return 0.0;
        }
        let ln_b = if self.b_power != 0.0 { self.ln_b } else { other.ln_b };
        let p_min = self.b_power.min(other.b_power);
        let shifted = |w: &LogWeight| {
            if w.is_zero() {
                f64::NEG_INFINITY
            } else if w.b_power == p_min {
                w.ln_rel
            } else {
                w.ln_rel - (w.b_power - p_min) * ln_b
            }
        };
        let (la, lb) = (shifted(self), shifted(other));
        let m = la.max(lb);
        let a = if self.is_zero() { 0.0 } else { self.sign * (la - m).exp() };
        let b = if other.is_zero() { 0.0 } else { other.sign * (lb - m).exp() };
        b - a
    }
}

impl std::ops::Neg for LogWeight {
    type Output = Self;

    fn neg(self) -> Self {
        Self {
            sign: -self.sign,
            ..self
        }
    }
}

impl std::ops::Mul for LogWeight {
    type Output = Self;

    fn mul(self, other: Self) -> Self {
        let ln_b = if self.b_power != 0.0 { self.ln_b } else { other.ln_b };
        if self.is_zero() || other.is_zero() {
            return Self {
                b_power: self.b_power + other.b_power,
                ln_b,
                ..Self::zero()
            };
        }
        Self {
            sign: self.sign * other.sign,
            ln_rel: self.ln_rel + other.ln_rel,
            b_power: self.b_power + other.b_power,
            ln_b,
        }
    }
}

impl std::ops::Div for LogWeight {
    type Output = Self;

    fn div(self, other: Self) -> Self {
        assert!(!other.is_zero(), "LogWeight division by zero");
        let ln_b = if self.b_power != 0.0 { self.ln_b } else { other.ln_b };
        Self {
            sign: self.sign * other.sign,
            ln_rel: self.ln_rel - other.ln_rel,
            b_power: self.b_power - other.b_power,
            ln_b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// `ln^β(b+s)/(b+s)` and companions.
    Log,
    /// `(1+s)^β` and companions.
    Poly,
    /// `(R+s)^β` and companions; `s` is time only.
    CompactPoly,
}

/// Selects one function of a weight family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightFn {
    F,
    FPrime,
    FSecond,
    F1,
    F1Prime,
    F2,
    F2Prime,
    Phi,
    PhiPrime,
}

/// `ln^{ln_exp}(base(s)) * base(s)^{base_exp}`, where `base(s)` is `b+s`,
/// `1+s` or `R+s` depending on the regime. Polynomial regimes require
/// `ln_exp == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub ln_exp: f64,
    pub base_exp: f64,
}

impl Monomial {
    pub const fn new(ln_exp: f64, base_exp: f64) -> Self {
        Self { ln_exp, base_exp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFamily {
    pub regime: Regime,
    /// `β = γ - 1`.
    pub beta: f64,
    /// `ln b` (Log only).
    pub ln_b: f64,
    /// Initial-data support radius `R` (CompactPoly only).
    pub radius: f64,
    /// Damping exponent, needed by `f2`.
    pub r: Option<f64>,
    /// Set when `b` was chosen by hand instead of from the theorem's bound.
    pub practical_b: bool,
}

impl WeightFamily {
    /// Logarithmic family with a given `ln b >= 1`.
    pub fn log(beta: f64, ln_b: f64, r: Option<f64>) -> Result<Self, WeightError> {
        if !(beta > -1.0) || !beta.is_finite() {
            return Err(invalid("beta", beta, "logarithmic weights need beta > -1"));
        }
        if !(ln_b >= 1.0) || !ln_b.is_finite() {
            return Err(invalid("ln_b", ln_b, "need b >= e"));
        }
        Self::check_r(r)?;
        Ok(Self {
            regime: Regime::Log,
            beta,
            ln_b,
            radius: 0.0,
            r,
            practical_b: false,
        })
    }

    /// Logarithmic family with a hand-picked `b >= e`, outside the theorem's
    /// lower bound on `ln b`. For illustration runs only.
    pub fn log_practical(beta: f64, b: f64, r: Option<f64>) -> Result<Self, WeightError> {
        if !(b >= std::f64::consts::E) {
            return Err(invalid("practical_b", b, "need b >= e"));
        }
        let mut fam = Self::log(beta, b.ln().max(1.0), r)?;
        fam.practical_b = true;
        Ok(fam)
    }

    pub fn poly(beta: f64, r: Option<f64>) -> Result<Self, WeightError> {
        if !(-1.0..=0.0).contains(&beta) {
            return Err(invalid("beta", beta, "polynomial weights need -1 <= beta <= 0"));
        }
        Self::check_r(r)?;
        Ok(Self {
            regime: Regime::Poly,
            beta,
            ln_b: 0.0,
            radius: 0.0,
            r,
            practical_b: false,
        })
    }

    pub fn compact(beta: f64, radius: f64, r: Option<f64>) -> Result<Self, WeightError> {
        if !(-1.0..=0.0).contains(&beta) {
            return Err(invalid("beta", beta, "compact-support weights need -1 <= beta <= 0"));
        }
        if !(radius >= 1.0) || !radius.is_finite() {
            return Err(invalid("R", radius, "need R >= 1"));
        }
        Self::check_r(r)?;
        Ok(Self {
            regime: Regime::CompactPoly,
            beta,
            ln_b: 0.0,
            radius,
            r,
            practical_b: false,
        })
    }

    fn check_r(r: Option<f64>) -> Result<(), WeightError> {
        match r {
            Some(r) if !(r > 1.0) || !r.is_finite() => {
                Err(invalid("r", r, "damping exponent must exceed 1"))
            }
            _ => Ok(()),
        }
    }

    pub fn with_exponent(mut self, r: f64) -> Result<Self, WeightError> {
        Self::check_r(Some(r))?;
        self.r = Some(r);
        Ok(self)
    }

    pub fn gamma(&self) -> f64 {
        self.beta + 1.0
    }

    /// Recomputes the lower bound on `ln b` and reports whether this family's
    /// `b` satisfies it.
    pub fn satisfies_b_bound(&self, delta0: f64, variant: BVariant) -> Result<bool, WeightError> {
        let r = self.r.ok_or(WeightError::UnboundExponent)?;
        let b = compute_b(r, self.gamma(), delta0, variant)?;
        Ok(self.regime == Regime::Log && self.ln_b >= b.ln_b)
    }

    fn role(&self, which: WeightFn) -> Result<(f64, Monomial), WeightError> {
        let beta = self.beta;
        let r = || self.r.ok_or(WeightError::UnboundExponent);
        if self.regime != Regime::Log {
            // base^{e} with derivative e * base^{e-1}
            let (c, e) = match which {
                WeightFn::F => (1.0, beta),
                WeightFn::FPrime => (beta, beta - 1.0),
                WeightFn::FSecond => (beta * (beta - 1.0), beta - 2.0),
                WeightFn::F1 => (1.0, beta - 1.0),
                WeightFn::F1Prime => (beta - 1.0, beta - 2.0),
                WeightFn::F2 => (1.0, beta - r()? + 1.0),
                WeightFn::F2Prime => {
                    let m = beta - r()? + 1.0;
                    (m, m - 1.0)
                }
                WeightFn::Phi => (1.0, beta + 1.0),
                WeightFn::PhiPrime => (beta + 1.0, beta),
            };
            return Ok((c, Monomial::new(0.0, e)));
        }
        // Log roles have polynomial-in-ln coefficients; those are handled in
        // `eval_log_shift`, here only the non-derivative roles appear.
        Ok(match which {
            WeightFn::F => (1.0, Monomial::new(beta, -1.0)),
            WeightFn::F1 => (1.0, Monomial::new(beta, -2.0)),
            WeightFn::F2 => {
                let r = r()?;
                (1.0, Monomial::new(beta - r + 1.0, -r))
            }
            WeightFn::Phi => (1.0, Monomial::new(beta + 1.0, 0.0)),
            _ => unreachable!("derivative roles are evaluated in eval_log_shift"),
        })
    }

    fn check_s(s: f64) -> Result<(), WeightError> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(WeightError::NegativeArgument(s));
        }
        Ok(())
    }

    /// `ln((b+s)/b)` for the logarithmic regime.
    fn log_shift(&self, s: f64) -> f64 {
        (s * (-self.ln_b).exp()).ln_1p()
    }

    /// Evaluates one weight role at `s >= 0`.
    pub fn eval(&self, which: WeightFn, s: f64) -> Result<LogWeight, WeightError> {
        Self::check_s(s)?;
        match self.regime {
            Regime::Log => self.eval_log_shift(which, self.log_shift(s)),
            _ => {
                let (c, m) = self.role(which)?;
                Ok(self.poly_monomial(c, m, s))
            }
        }
    }

    /// Evaluates a Log-regime role at `ln(b+s) = ln b + delta`.
    ///
    /// Working in `delta` keeps neighbouring arguments distinguishable even
    /// when `b + s` is far beyond the `f64` range.
    pub fn eval_log_shift(&self, which: WeightFn, delta: f64) -> Result<LogWeight, WeightError> {
        if self.regime != Regime::Log {
            return Err(WeightError::WrongRegime {
                expected: Regime::Log,
                found: self.regime,
            });
        }
        let beta = self.beta;
        let l = self.ln_b + delta;
        let ln_l = l.ln();
        let mk = |coef: f64, l_exp: f64, n: f64| {
            LogWeight::build(coef, l_exp * ln_l - n * delta, n, self.ln_b)
        };
        let r = || self.r.ok_or(WeightError::UnboundExponent);
        Ok(match which {
            WeightFn::F => mk(1.0, beta, 1.0),
            WeightFn::FPrime => mk(beta - l, beta - 1.0, 2.0),
            WeightFn::FSecond => mk(
                2.0 * l * l - 3.0 * beta * l + beta * (beta - 1.0),
                beta - 2.0,
                3.0,
            ),
            WeightFn::F1 => mk(1.0, beta, 2.0),
            WeightFn::F1Prime => mk(beta - 2.0 * l, beta - 1.0, 3.0),
            WeightFn::F2 => {
                let r = r()?;
                mk(1.0, beta - r + 1.0, r)
            }
            WeightFn::F2Prime => {
                let r = r()?;
                let m = beta - r + 1.0;
                mk(m - r * l, m - 1.0, r + 1.0)
            }
            WeightFn::Phi => mk(1.0, beta + 1.0, 0.0),
            WeightFn::PhiPrime => mk(beta + 1.0, beta, 1.0),
        })
    }

    /// Evaluates `ln^{a}(base) * base^{e}` at `s >= 0`.
    pub fn eval_monomial(&self, m: Monomial, s: f64) -> Result<LogWeight, WeightError> {
        Self::check_s(s)?;
        match self.regime {
            Regime::Log => {
                let delta = self.log_shift(s);
                let l = self.ln_b + delta;
                let n = -m.base_exp;
                Ok(LogWeight::build(
                    1.0,
                    m.ln_exp * l.ln() - n * delta,
                    n,
                    self.ln_b,
                ))
            }
            _ => {
                if m.ln_exp != 0.0 {
                    return Err(invalid(
                        "ln_exp",
                        m.ln_exp,
                        "polynomial regimes have no logarithmic factor",
                    ));
                }
                Ok(self.poly_monomial(1.0, m, s))
            }
        }
    }

    fn poly_monomial(&self, coef: f64, m: Monomial, s: f64) -> LogWeight {
        let base = match self.regime {
            Regime::Poly => 1.0 + s,
            _ => self.radius + s,
        };
        LogWeight::build(coef, m.base_exp * base.ln(), 0.0, 0.0)
    }

    /// Evaluates a role directly as `f64`.
    pub fn value(&self, which: WeightFn, s: f64) -> Result<f64, WeightError> {
        self.eval(which, s)?.value()
    }

    /// Monomial for a role in the non-derivative subset (`F`, `F1`, `F2`, `Phi`).
    pub fn role_monomial(&self, which: WeightFn) -> Result<Monomial, WeightError> {
        match which {
            WeightFn::F | WeightFn::F1 | WeightFn::F2 | WeightFn::Phi => Ok(self.role(which)?.1),
            _ => Err(invalid(
                "which",
                f64::NAN,
                "derivative roles have no single-monomial form",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Theorem {
    T1,
    T2,
    T3,
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Theorem::T1 => "T1",
            Theorem::T2 => "T2",
            Theorem::T3 => "T3",
        };
        f.write_str(s)
    }
}

/// Which final coefficient the `ln b` lower bound uses: 4 in the theorem's
/// statement, 8 in the auxiliary-functional lemma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum BVariant {
    Theorem1,
    #[default]
    Lemma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BConstant {
    pub ln_b: f64,
    /// The five candidates of the max, in formula order.
    pub terms: [f64; 5],
    pub variant: BVariant,
    /// `b = exp(ln_b)` is not representable as `f64`.
    pub overflow: bool,
}

impl BConstant {
    pub fn b(&self) -> Option<f64> {
        (!self.overflow).then(|| self.ln_b.exp())
    }
}

/// Lower bound on `ln b` for the logarithmic regime.
pub fn compute_b(r: f64, gamma: f64, delta0: f64, variant: BVariant) -> Result<BConstant, WeightError> {
    if !(r > 1.0) || !r.is_finite() {
        return Err(invalid("r", r, "need r > 1"));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid("gamma", gamma, "need gamma > 0"));
    }
    if !(delta0 > 0.0 && delta0 < 1.0) {
        return Err(invalid("delta0", delta0, "need 0 < delta0 < 1"));
    }
    let beta = gamma - 1.0;
    let coef = match variant {
        BVariant::Theorem1 => 4.0,
        BVariant::Lemma => 8.0,
    };
    let terms = [
        (2.0 * (r + 1.0)).powf(r + 1.0),
        beta,
        (beta + (beta * beta + 4.0 * beta).abs().sqrt()) / 2.0,
        (beta + 1.0 - r) / (r - 1.0),
        (coef * (r + 1.0) * gamma / (1.0 - delta0)).powf(r + 1.0),
    ];
    let ln_b = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BConstant {
        ln_b,
        terms,
        variant,
        overflow: ln_b > LN_F64_MAX,
    })
}

/// One admissibility bound `gamma < value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaBound {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub theorem: Theorem,
    pub r: f64,
    pub d: u32,
    pub delta0: f64,
    pub gamma: f64,
    pub beta: f64,
    /// `ln b` from the lemma variant (T1 only).
    pub ln_b: Option<f64>,
    /// `b` when representable (T1 only).
    pub b: Option<f64>,
    pub b_overflow: bool,
    pub k: f64,
    pub k1: f64,
    /// Coefficient of the `|u|^{r+1}` term of the auxiliary functional
    /// (identically 1 for T1).
    pub k2: f64,
    pub p: f64,
    pub gamma_bounds: Vec<GammaBound>,
}

/// Sobolev exponent `p`.
pub fn sobolev_p(r: f64, d: u32) -> f64 {
    if d <= 3 {
        2.0 * (r + 1.0)
    } else {
        2.0 * d as f64 / (d as f64 - 2.0)
    }
}

/// Default `k1` for a given damping floor `ε0`: `8 (2/ε0 + 1)`.
pub fn default_k1(epsilon0: f64) -> f64 {
    8.0 * (2.0 / epsilon0 + 1.0)
}

/// Largest root of `5 r (r+1) k^2 - B k + 8 (1+δ0) c r = 0` with
/// `B = 5 (1+δ0) r^2 + 8 c (r+1) + 8 (8/3)^r (1+δ0)`.
fn k_root(r: f64, delta0: f64, c: f64) -> f64 {
    let bq = 5.0 * (1.0 + delta0) * r * r
        + 8.0 * c * (r + 1.0)
        + 8.0 * (8.0_f64 / 3.0).powf(r) * (1.0 + delta0);
    let disc = bq * bq - 160.0 * (1.0 + delta0) * c * r * r * (r + 1.0);
    (bq + disc.max(0.0).sqrt()) / (10.0 * r * (r + 1.0))
}

/// The quantity `c` of the k-quadratic: `1/2 - δ0` (T2) or `1 - δ0` (T3).
fn k_quadratic_c(theorem: Theorem, delta0: f64) -> f64 {
    match theorem {
        Theorem::T2 => 0.5 - delta0,
        _ => 1.0 - delta0,
    }
}

/// Fills the full constant pack for one theorem and checks that `gamma` is
/// admissible. Errors name every violated bound.
pub fn compute_constants(
    theorem: Theorem,
    r: f64,
    d: u32,
    delta0: f64,
    gamma: f64,
    k1_seed: f64,
) -> Result<TheoremConstants, WeightError> {
    if d == 0 {
        return Err(invalid("d", 0.0, "dimension must be at least 1"));
    }
    let r_crit = 1.0 + 2.0 / d as f64;
    let critical = (r - r_crit).abs() <= CRITICAL_TOL;
    if !(r > 1.0) || r > r_crit + CRITICAL_TOL || (theorem != Theorem::T1 && critical) {
        let reason = match theorem {
            Theorem::T1 => format!("need 1 < r <= 1 + 2/d = {r_crit}"),
            _ => format!("need 1 < r < 1 + 2/d = {r_crit}"),
        };
        return Err(invalid("r", r, reason));
    }
    let delta_hi = if theorem == Theorem::T2 { 0.5 } else { 1.0 };
    if !(delta0 > 0.0 && delta0 < delta_hi) {
        return Err(invalid("delta0", delta0, format!("need 0 < delta0 < {delta_hi}")));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid("gamma", gamma, "need gamma > 0"));
    }
    if !(k1_seed > 0.0) || !k1_seed.is_finite() {
        return Err(invalid("k1", k1_seed, "need k1 > 0"));
    }
    let p = sobolev_p(r, d);
    let df = d as f64;
    let beta = gamma - 1.0;

    let (k, k2, ln_b, gamma_bounds) = match theorem {
        Theorem::T1 => {
            let k = (1.0 - delta0) / (2.0 * gamma);
            let bounds = if critical {
                vec![GammaBound {
                    name: "2/(r-1)".into(),
                    value: 2.0 / (r - 1.0),
                }]
            } else {
                Vec::new()
            };
            let b = compute_b(r, gamma, delta0, BVariant::Lemma)?;
            (k, 1.0, Some(b), bounds)
        }
        Theorem::T2 | Theorem::T3 => {
            let c = k_quadratic_c(theorem, delta0);
            let k = k_root(r, delta0, c);
            let denom = 5.0 * k * r - 8.0 * c;
            if !(denom > 0.0) {
                return Err(invalid("k", k, "5kr - 8c must be positive for k2"));
            }
            let k2 = 8.0 * k * (1.0 + delta0) / ((r + 1.0) * denom);
            let first = match theorem {
                Theorem::T2 => "(1/2-delta0)/k",
                _ => "(1-delta0)/k",
            };
            let bounds = vec![
                GammaBound {
                    name: first.into(),
                    value: c / k,
                },
                GammaBound {
                    name: "(d+2-dr)/(r-1)".into(),
                    value: (df + 2.0 - df * r) / (r - 1.0),
                },
                GammaBound {
                    name: "(p-2r)/(r-1)".into(),
                    value: (p - 2.0 * r) / (r - 1.0),
                },
            ];
            (k, k2, None, bounds)
        }
    };

    let violated: Vec<String> = gamma_bounds
        .iter()
        .filter(|b| !(gamma < b.value))
        .map(|b| format!("{}={}", b.name, b.value))
        .collect();
    if !violated.is_empty() {
        return Err(WeightError::InadmissibleGamma {
            theorem,
            gamma,
            violated: violated.join(", "),
        });
    }
    if !(k > 0.0 && k2 > 0.0) {
        return Err(invalid("k", k, "auxiliary coefficients must be positive"));
    }

    Ok(TheoremConstants {
        theorem,
        r,
        d,
        delta0,
        gamma,
        beta,
        ln_b: ln_b.map(|b| b.ln_b),
        b: ln_b.and_then(|b| b.b()),
        b_overflow: ln_b.map(|b| b.overflow).unwrap_or(false),
        k,
        k1: k1_seed,
        k2,
        p,
        gamma_bounds,
    })
}

impl TheoremConstants {
    /// Smallest admissibility bound on `gamma` (`+inf` when unbounded).
    pub fn gamma_upper(&self) -> f64 {
        self.gamma_bounds
            .iter()
            .map(|b| b.value)
            .fold(f64::INFINITY, f64::min)
    }

    /// Name of the bound attaining [`Self::gamma_upper`].
    pub fn binding_bound(&self) -> Option<&GammaBound> {
        self.gamma_bounds
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
    }

    /// `k - r/(r+1) - k2 (8/3)^r - δ0 r/(r+1)`; zero for T2 and T3 up to
    /// rounding. Meaningless for T1.
    pub fn identity_gap(&self) -> f64 {
        let r = self.r;
        self.k - r / (r + 1.0) - self.k2 * (8.0_f64 / 3.0).powf(r) - self.delta0 * r / (r + 1.0)
    }

    /// Residual of the k-quadratic relative to its largest term.
    pub fn k_quadratic_residual(&self) -> f64 {
        let (r, d0, k) = (self.r, self.delta0, self.k);
        let c = k_quadratic_c(self.theorem, d0);
        let a = 5.0 * k * k * r * (r + 1.0);
        let bq = k
            * (5.0 * (1.0 + d0) * r * r
                + 8.0 * c * (r + 1.0)
                + 8.0 * (8.0_f64 / 3.0).powf(r) * (1.0 + d0));
        let c0 = 8.0 * (1.0 + d0) * c * r;
        (a - bq + c0).abs() / a.max(bq).max(c0)
    }

    /// Sign conditions the lemma places on `k1` for damping floor `ε0`; every
    /// entry must be positive.
    pub fn k1_conditions(&self, epsilon0: f64) -> Vec<(String, f64)> {
        let k1 = self.k1;
        match self.theorem {
            Theorem::T1 => vec![("k1/4 - 2/eps0".into(), k1 / 4.0 - 2.0 / epsilon0)],
            Theorem::T2 => vec![(
                "k1/4 - beta(beta-1)/(2 eps0)".into(),
                k1 / 4.0 - self.beta * (self.beta - 1.0) / (2.0 * epsilon0),
            )],
            Theorem::T3 => vec![("k1/4".into(), k1 / 4.0)],
        }
    }

    /// The weight family matching this constant pack. `radius` is used by T3,
    /// `practical_b` (when given) replaces the theorem's `b` for T1.
    pub fn family(&self, radius: f64, practical_b: Option<f64>) -> Result<WeightFamily, WeightError> {
        match self.theorem {
            Theorem::T1 => match practical_b {
                Some(b) => WeightFamily::log_practical(self.beta, b, Some(self.r)),
                None => WeightFamily::log(self.beta, self.ln_b.unwrap_or(1.0), Some(self.r)),
            },
            Theorem::T2 => WeightFamily::poly(self.beta, Some(self.r)),
            Theorem::T3 => WeightFamily::compact(self.beta, radius, Some(self.r)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub passed: bool,
    /// Smallest relative margin `(rhs - lhs) / max(|lhs|, |rhs|)` seen.
    pub worst_margin: f64,
    pub worst_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightInequalityReport {
    pub beta: f64,
    pub ln_b: f64,
    pub r: f64,
    pub samples: usize,
    pub checks: Vec<InequalityCheck>,
}

impl WeightInequalityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn worst_margin(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.worst_margin)
            .fold(f64::INFINITY, f64::min)
    }
}

pub const INEQUALITY_NAMES: [&str; 5] = [
    "f' <= 0",
    "f'' <= -4 f1'",
    "(f')^2/f <= (1+|beta|)(-f1')",
    "f1^2/f <= -f1'",
    "-f2' >= ln^(beta-r+1)(b+s)/(b+s)^(r+1)",
];

/// Checks the five pointwise inequalities of the logarithmic weights on
/// every sample.
pub fn verify_weight_inequalities(
    family: &WeightFamily,
    r: f64,
    samples: &[f64],
) -> Result<WeightInequalityReport, WeightError> {
    if family.regime != Regime::Log {
        return Err(WeightError::WrongRegime {
            expected: Regime::Log,
            found: family.regime,
        });
    }
    let fam = family.with_exponent(r)?;
    let beta = fam.beta;
    let mut worst = [(f64::INFINITY, f64::NAN); 5];

    for &s in samples {
        let f = fam.eval(WeightFn::F, s)?;
        let fp = fam.eval(WeightFn::FPrime, s)?;
        let fpp = fam.eval(WeightFn::FSecond, s)?;
        let f1 = fam.eval(WeightFn::F1, s)?;
        let f1p = fam.eval(WeightFn::F1Prime, s)?;
        let f2p = fam.eval(WeightFn::F2Prime, s)?;
        let lower_v = fam.eval_monomial(Monomial::new(beta - r + 1.0, -(r + 1.0)), s)?;

        let margins = [
            fp.margin_to(&LogWeight::zero()),
            fpp.margin_to(&f1p.scale(-4.0)),
            (fp.powi(2) / f).margin_to(&f1p.scale(-(1.0 + beta.abs()))),
            (f1.powi(2) / f).margin_to(&-f1p),
            lower_v.margin_to(&-f2p),
        ];
        for (slot, m) in worst.iter_mut().zip(margins) {
            if m < slot.0 || m.is_nan() {
                *slot = (m, s);
            }
        }
    }

    let checks = INEQUALITY_NAMES
        .iter()
        .zip(worst)
        .map(|(name, (m, s))| InequalityCheck {
            name: (*name).to_string(),
            passed: m >= 0.0,
            worst_margin: m,
            worst_s: s,
        })
        .collect();
    Ok(WeightInequalityReport {
        beta,
        ln_b: fam.ln_b,
        r,
        samples: samples.len(),
        checks,
    })
}

/// `0` followed by `n - 1` log-spaced points in `[1e-3, max]`.
pub fn log_spaced_samples(n: usize, max: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push(0.0);
    if n == 1 {
        return out;
    }
    let (lo, hi) = (1e-3_f64.ln(), max.ln());
    let m = n - 1;
    for i in 0..m {
        let frac = if m == 1 { 1.0 } else { i as f64 / (m - 1) as f64 };
        out.push((lo + frac * (hi - lo)).exp());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn q_examples() {
        assert_eq!(eval_q(&[0.0]), 1.0);
        assert!((eval_q(&[1.0, 0.0]) - 2f64.sqrt()).abs() < 1e-15);
        // √(1+x²) − x = 1/(√(1+x²)+x) ≈ 5e-7 at x = 1e6
        let q = eval_q(&[1e6]);
        assert!(q > 1e6 && q < 1e6 + 1e-6);
        let q = eval_q(&[6e5, 8e5]);
        assert!(q > 1e6 && q < 1e6 + 1e-6);
    }

    #[test]
    fn log_weight_examples() {
        let fam = WeightFamily::log(0.0, 1.0, None).unwrap();
        assert!(rel(fam.value(WeightFn::F, 0.0).unwrap(), (-1.0f64).exp()) < 1e-15);

        let fam = WeightFamily::log(1.0, 1.0, Some(1.5)).unwrap();
        assert!(rel(fam.value(WeightFn::F1, 0.0).unwrap(), (-2.0f64).exp()) < 1e-15);

        // ln(b+s) = 2, exponent β−r+1 = 0.5, (b+s)^r = e³
        let s = E * E - E;
        let expected = 2f64.powf(0.5) / E.powi(3);
        assert!(rel(fam.value(WeightFn::F2, s).unwrap(), expected) < 1e-14);
    }

    #[test]
    fn f2_needs_r() {
        let fam = WeightFamily::log(1.0, 1.0, None).unwrap();
        assert_eq!(fam.eval(WeightFn::F2, 1.0), Err(WeightError::UnboundExponent));
        assert!(fam.eval(WeightFn::F, -1.0).is_err());
    }

    #[test]
    fn poly_and_compact_roles() {
        let fam = WeightFamily::poly(-0.5, Some(1.5)).unwrap();
        assert!(rel(fam.value(WeightFn::F, 3.0).unwrap(), 4f64.powf(-0.5)) < 1e-15);
        assert!(rel(fam.value(WeightFn::Phi, 3.0).unwrap(), 4f64.powf(0.5)) < 1e-15);
        assert!(rel(fam.value(WeightFn::F2, 3.0).unwrap(), 4f64.powf(-1.0)) < 1e-15);
        let fam = WeightFamily::compact(-0.25, 2.0, Some(1.5)).unwrap();
        assert!(rel(fam.value(WeightFn::F1, 1.0).unwrap(), 3f64.powf(-1.25)) < 1e-15);
        assert!(WeightFamily::compact(-0.25, 0.5, None).is_err());
        assert!(WeightFamily::poly(0.5, None).is_err());
    }

    #[test]
    fn huge_b_is_representable_in_log_space() {
        let b = compute_b(2.0, 1.0, 0.5, BVariant::Lemma).unwrap();
        let fam = WeightFamily::log(0.0, b.ln_b, Some(2.0)).unwrap();
        let f = fam.eval(WeightFn::F, 10.0).unwrap();
        assert_eq!(f.value().unwrap(), 0.0);
        assert!((f.ln_abs() + b.ln_b).abs() < 1e-9);
        let phi = fam.eval(WeightFn::Phi, 0.0).unwrap();
        assert!(rel(phi.value().unwrap(), b.ln_b) < 1e-15);
        let big = WeightFamily::log(200.0, 1e5, None).unwrap();
        assert!(matches!(
            big.eval(WeightFn::Phi, 0.0).unwrap().value(),
            Err(WeightError::Overflow(_))
        ));
    }

    #[test]
    fn compute_b_examples() {
        let t = compute_b(2.0, 1.0, 0.5, BVariant::Theorem1).unwrap();
        // terms computed by hand: 6³, 0, 0, −1, 24³
        assert_eq!(t.terms, [216.0, 0.0, 0.0, -1.0, 13824.0]);
        assert_eq!(t.ln_b, 13824.0);
        assert!(t.overflow && t.b().is_none());
        let l = compute_b(2.0, 1.0, 0.5, BVariant::Lemma).unwrap();
        assert_eq!(l.ln_b, 110592.0);
        assert!(compute_b(1.0, 1.0, 0.5, BVariant::Lemma).is_err());
        assert!(compute_b(2.0, 0.0, 0.5, BVariant::Lemma).is_err());
        assert!(compute_b(2.0, 1.0, 1.0, BVariant::Lemma).is_err());
    }

    #[test]
    fn t1_constants() {
        let c = compute_constants(Theorem::T1, 1.5, 2, 0.5, 1.0, 10.0).unwrap();
        assert_eq!(c.k, 0.25);
        assert_eq!(c.k2, 1.0);
        assert!(c.ln_b.unwrap() > 1000.0);
        assert!(c.gamma_bounds.is_empty());
        // critical exponent r = 1 + 2/d caps gamma at 2/(r-1)
        let c = compute_constants(Theorem::T1, 2.0, 2, 0.5, 1.5, 10.0).unwrap();
        assert_eq!(c.gamma_upper(), 2.0);
        assert!(compute_constants(Theorem::T1, 2.0, 2, 0.5, 2.5, 10.0).is_err());
    }

    #[test]
    fn t2_t3_quadratics() {
        for th in [Theorem::T2, Theorem::T3] {
            let c = compute_constants(th, 1.5, 1, 0.01, 0.1, 10.0).unwrap();
            assert!(c.k_quadratic_residual() < 1e-9, "{th}: {}", c.k_quadratic_residual());
            assert!(c.identity_gap().abs() < 1e-12, "{th}: {}", c.identity_gap());
            assert_eq!(c.p, 5.0);
        }
    }

    #[test]
    fn t2_gamma_rejection_names_bounds() {
        let err = compute_constants(Theorem::T2, 1.5, 1, 0.01, 5.0, 10.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(d+2-dr)/(r-1)=3"), "{msg}");
        assert!(msg.contains("(p-2r)/(r-1)=4"), "{msg}");
    }

    #[test]
    fn t3_binding_bound() {
        let c = compute_constants(Theorem::T3, 1.5, 1, 0.01, 0.1, 10.0).unwrap();
        let bound = c.binding_bound().unwrap();
        // (1-δ0)/k ≈ 0.296 beats 3 and 4
        assert_eq!(bound.name, "(1-delta0)/k");
        assert!(bound.value < 1.0);
        assert_eq!(c.gamma_upper(), bound.value);
    }

    #[test]
    fn default_k1_meets_lemma_signs() {
        for eps in [0.1, 0.5, 1.0] {
            for th in [Theorem::T1, Theorem::T2, Theorem::T3] {
                let c = compute_constants(th, 1.5, 1, 0.01, 0.1, default_k1(eps)).unwrap();
                assert!(c.k1_conditions(eps).iter().all(|(_, v)| *v > 0.0));
            }
        }
    }

    #[test]
    fn beta_zero_coefficient_collapse() {
        let b = compute_b(1.5, 1.0, 0.1, BVariant::Lemma).unwrap();
        let fam = WeightFamily::log(0.0, b.ln_b, Some(1.5)).unwrap();
        let rep = verify_weight_inequalities(&fam, 1.5, &log_spaced_samples(50, 1e9)).unwrap();
        assert!(rep.all_passed());
        assert_eq!(rep.checks[2].worst_margin, rep.checks[3].worst_margin);
    }

    #[test]
    fn inequality_checks_reject_polynomial_family() {
        let fam = WeightFamily::poly(0.0, None).unwrap();
        assert!(verify_weight_inequalities(&fam, 1.5, &[0.0]).is_err());
    }

    #[test]
    fn log_weight_margin_is_exact_for_shared_b_power() {
        let fam = WeightFamily::log(1.0, 1e8, Some(2.0)).unwrap();
        let a = fam.eval(WeightFn::F1, 0.0).unwrap();
        let b = a.scale(1.0 + 1e-12);
        assert!(a.margin_to(&b) > 0.0);
        assert!(b.margin_to(&a) < 0.0);
    }

    #[test]
    fn samples_shape() {
        let s = log_spaced_samples(10_000, 1e9);
        assert_eq!(s.len(), 10_000);
        assert_eq!(s[0], 0.0);
        assert!((s[9999] - 1e9).abs() / 1e9 < 1e-12);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
    }
}
