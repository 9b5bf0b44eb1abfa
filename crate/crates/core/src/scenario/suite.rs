//! Randomized checks of the constant identities and weight inequalities,
//! and the parallel runner for batches of scenarios.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ScenarioConfig, SuiteConfig};
use super::{run_scenario, ScenarioError, ScenarioOutcome};
use crate::weights::{
    compute_b, compute_constants, log_spaced_samples, verify_weight_inequalities, BVariant,
    Theorem, WeightError, WeightFamily, WeightFn,
};

/// Relative change `η` of a role across one finite-difference step.
pub const DERIVATIVE_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentitySuite {
    pub pairs: usize,
    /// Largest `|k - r/(r+1) - k2 (8/3)^r - δ0 r/(r+1)| / (δ0 r/(r+1))` for T2.
    pub max_rel_error_t2: f64,
    /// Smallest `(k - r/(r+1) - k2 (8/3)^r - δ0 r/(r+1)) / k` for T3.
    pub min_slack_t3: f64,
    pub worst_pair_t2: (u32, f64, f64),
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCase {
    pub beta: f64,
    pub r: f64,
    pub ln_b: f64,
    pub min_margin: f64,
    /// Name of the inequality with the smallest margin.
    pub binding: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalitySuite {
    pub samples: usize,
    pub s_max: f64,
    pub cases: Vec<InequalityCase>,
    pub min_margin: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeSuite {
    pub step: f64,
    pub points: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSuiteReport {
    pub seed: u64,
    pub identity: IdentitySuite,
    pub inequalities: InequalitySuite,
    pub derivatives: DerivativeSuite,
}

fn identity_suite(rng: &mut ChaCha8Rng, pairs: usize) -> Result<IdentitySuite, WeightError> {
    let start = Instant::now();
    let mut out = IdentitySuite {
        pairs,
        max_rel_error_t2: 0.0,
        min_slack_t3: f64::INFINITY,
        worst_pair_t2: (1, f64::NAN, f64::NAN),
        seconds: 0.0,
    };
    for _ in 0..pairs {
        let d: u32 = rng.gen_range(1..=2);
        let r_crit = 1.0 + 2.0 / d as f64;
        let r = rng.gen_range(1.0..r_crit).max(1.0 + 1e-9);
        let r = r.min(r_crit - 1e-6);
        let delta0 = rng.gen_range(0.0..0.05_f64).max(1e-12);
        for theorem in [Theorem::T2, Theorem::T3] {
            let probe = compute_constants(theorem, r, d, delta0, 1e-9, 1.0)?;
            let gamma = 0.5 * probe.gamma_upper();
            let c = compute_constants(theorem, r, d, delta0, gamma, 1.0)?;
            let gap = c.identity_gap();
            match theorem {
                Theorem::T2 => {
                    let rel = gap.abs() / (delta0 * r / (r + 1.0));
                    if rel > out.max_rel_error_t2 {
                        out.max_rel_error_t2 = rel;
                        out.worst_pair_t2 = (d, r, delta0);
                    }
                }
                _ => out.min_slack_t3 = out.min_slack_t3.min(gap / c.k),
            }
        }
    }
    out.seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

fn inequality_suite(
    rng: &mut ChaCha8Rng,
    cfg: &SuiteConfig,
) -> Result<(InequalitySuite, Vec<WeightFamily>), WeightError> {
    let start = Instant::now();
    let samples = log_spaced_samples(cfg.samples, cfg.s_max);
    let mut cases = Vec::with_capacity(cfg.cases);
    let mut families = Vec::with_capacity(cfg.cases);
    for _ in 0..cfg.cases {
        // β ∈ (-1, 3]
        let beta = 3.0 - rng.gen_range(0.0..4.0_f64);
        let r = rng.gen_range(1.0..3.0_f64).max(1.0 + 1e-6);
        let delta0 = rng.gen_range(0.0..1.0_f64).clamp(1e-6, 1.0 - 1e-6);
        let b = compute_b(r, beta + 1.0, delta0, BVariant::Lemma)?;
        let family = WeightFamily::log(beta, b.ln_b, Some(r))?;
        let report = verify_weight_inequalities(&family, r, &samples)?;
        let binding = report
            .checks
            .iter()
            .min_by(|a, b| a.worst_margin.total_cmp(&b.worst_margin))
            .map(|c| c.name.clone())
            .unwrap_or_default();
        cases.push(InequalityCase {
            beta,
            r,
            ln_b: b.ln_b,
            min_margin: report.worst_margin(),
            binding,
        });
        families.push(family);
    }
    let min_margin = cases.iter().map(|c| c.min_margin).fold(f64::INFINITY, f64::min);
    Ok((
        InequalitySuite {
            samples: samples.len(),
            s_max: cfg.s_max,
            cases,
            min_margin,
            seconds: start.elapsed().as_secs_f64(),
        },
        families,
    ))
}

/// Central differences in δ of the `b`-scaled roles. A role carrying
/// `b^{-n}` satisfies `d/dδ scaled(G) = e^δ scaled(G')`. The step is chosen
/// so that `G` changes by a relative `η` across it, which for `F` and its
/// companions is a step of about `η (b+s)` in `s`.
fn derivative_suite(families: &[WeightFamily], points: &[f64]) -> Result<DerivativeSuite, WeightError> {
    const PAIRS: [(WeightFn, WeightFn); 5] = [
        (WeightFn::F, WeightFn::FPrime),
        (WeightFn::FPrime, WeightFn::FSecond),
        (WeightFn::F1, WeightFn::F1Prime),
        (WeightFn::F2, WeightFn::F2Prime),
        (WeightFn::Phi, WeightFn::PhiPrime),
    ];
    let eta = DERIVATIVE_STEP;
    let mut out = DerivativeSuite {
        step: eta,
        points: 0,
        max_rel_error: 0.0,
        worst: String::new(),
    };
    for fam in families {
        for &s in points {
            let delta = (s * (-fam.ln_b).exp()).ln_1p();
            let l = fam.ln_b + delta;
            for (g, gp) in PAIRS {
                let exact = fam.eval_log_shift(gp, delta)?.scaled_value() * delta.exp();
                let mid = fam.eval_log_shift(g, delta)?.scaled_value();
                // a relative change of η per step; Phi varies like l^{β+1},
                // far too slowly for a fixed step in δ once ln b is large
                let log_rate = (exact / mid).abs();
                let step = (eta / log_rate).min(1e-3 * l);
                let hi = fam.eval_log_shift(g, delta + step)?.scaled_value();
                let lo = fam.eval_log_shift(g, delta - step)?.scaled_value();
                let fd = (hi - lo) / (2.0 * step);
                let rel = (fd - exact).abs() / exact.abs().max(fd.abs()).max(f64::MIN_POSITIVE);
                out.points += 1;
                if rel > out.max_rel_error {
                    out.max_rel_error = rel;
                    out.worst = format!("{g:?} at s = {s:e}, beta = {}, ln b = {}", fam.beta, fam.ln_b);
                }
            }
        }
    }
    Ok(out)
}

/// Runs the identity, inequality and derivative checks from `seed`.
pub fn run_weight_suite(seed: u64, cfg: &SuiteConfig) -> Result<WeightSuiteReport, WeightError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let identity = identity_suite(&mut rng, cfg.pairs)?;
    let (inequalities, families) = inequality_suite(&mut rng, cfg)?;
    let hi = cfg.s_max.log10();
    let points: Vec<f64> = (0..1000).map(|_| 10f64.powf(rng.gen_range(-3.0..hi))).collect();
    let derivatives = derivative_suite(&families, &points)?;
    Ok(WeightSuiteReport {
        seed,
        identity,
        inequalities,
        derivatives,
    })
}

/// Runs scenarios on a pool of `parallelism` threads (0: all cores) and
/// returns their results in input order. Names must be unique since they
/// key the output files.
pub fn run_suite(
    configs: &[ScenarioConfig],
    parallelism: usize,
    out: Option<&Path>,
) -> Result<Vec<Result<ScenarioOutcome, ScenarioError>>, ScenarioError> {
    let mut seen = HashSet::new();
    for c in configs {
        if !seen.insert(c.name.as_str()) {
            return Err(ScenarioError::DuplicateName(c.name.clone()));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| ScenarioError::Pool(e.to_string()))?;
    Ok(pool.install(|| configs.par_iter().map(|c| run_scenario(c, out)).collect()))
}
