//! Time stepping for `u_tt - Δu + a(x)|u_t|^{r-1}u_t = 0`.
//!
//! The main scheme is explicit in the Laplacian and implicit in the
//! damping, solved node by node:
//!
//! ```text
//! w      = v^n + dt Δ_h u^n
//! v^{n+1} + dt a |v^{n+1}|^{r-1} v^{n+1} = w
//! u^{n+1} = u^n + dt v^{n+1}
//! ```
//!
//! `v^n` approximates `u_t(t_n - dt/2)`; [`prepare_initial`] turns
//! `(u_0, u_1)` into that staggered layout. The quantity conserved by the
//! undamped scheme is the staggered energy
//! `½|v|^2 + ½<D u, D(u - dt v)>`, see [`staggered_energy`].

use std::io::{Read, Write};

use thiserror::Error;

use crate::grid::{DampingProfile, ExteriorGrid};
use crate::weights::{Regime, WeightFamily};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },
    #[error("time step {dt} exceeds the stability limit {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("state has {found} nodes, grid has {expected}")]
    StateMismatch { expected: usize, found: usize },
    #[error("non-finite value at node {node} at t = {t}")]
    NonFinite { t: f64, node: usize },
    #[error("support radius {radius} exceeds the propagation cone {bound} at t = {t}")]
    SupportViolation { t: f64, radius: f64, bound: f64 },
    #[error("implicit reference iteration did not converge within {iterations} iterations at t = {t}")]
    FixedPointDiverged { t: f64, iterations: usize },
    #[error("initial data: {0}")]
    InitialData(String),
    #[error("initial data decays too slowly for the {norm} norm: sigma = {sigma}, need sigma > {required}")]
    InsufficientDecay {
        norm: &'static str,
        sigma: f64,
        required: f64,
    },
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error("run observer failed: {0}")]
    Observer(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(name: &'static str, value: f64, reason: impl Into<String>) -> SolverError {
    SolverError::InvalidParameter {
        name,
        value,
        reason: reason.into(),
    }
}

/// Displacement, staggered velocity and clock.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl WaveState {
    pub fn zeros(grid: &ExteriorGrid) -> Self {
        let n = grid.node_count();
        Self {
            u: vec![0.0; n],
            v: vec![0.0; n],
            t: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn check(&self, grid: &ExteriorGrid) -> Result<(), SolverError> {
        let expected = grid.node_count();
        if self.u.len() != expected || self.v.len() != expected {
            return Err(SolverError::StateMismatch {
                expected,
                found: self.u.len().min(self.v.len()),
            });
        }
        Ok(())
    }

    /// Largest `|x|` over nodes with `|u| + |v| > threshold`; 0 if none.
    pub fn support_radius(&self, grid: &ExteriorGrid, threshold: f64) -> f64 {
        grid.fluid_nodes()
            .iter()
            .filter(|&&k| self.u[k].abs() + self.v[k].abs() > threshold)
            .map(|&k| grid.radii()[k])
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(&self.v)
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub dt: f64,
    pub cfl: f64,
    pub r: f64,
    /// Residual tolerance of the nodal damping solve.
    pub damping_tol: f64,
    pub t_max: f64,
}

/// Stability limit `h / sqrt(d)`.
pub fn cfl_limit(grid: &ExteriorGrid) -> f64 {
    grid.h() / (grid.dim() as f64).sqrt()
}

impl SolverParams {
    /// `dt = cfl h / sqrt(d)`, shrunk so that `t_max` is a whole number of
    /// steps.
    pub fn new(grid: &ExteriorGrid, cfl: f64, r: f64, t_max: f64) -> Result<Self, SolverError> {
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(invalid("cfl", cfl, "need 0 < cfl <= 1"));
        }
        if !(t_max >= 0.0) || !t_max.is_finite() {
            return Err(invalid("T_max", t_max, "need T_max >= 0"));
        }
        let mut dt = cfl * cfl_limit(grid);
        if t_max > 0.0 {
            dt = t_max / (t_max / dt).ceil();
        }
        let params = Self {
            dt,
            cfl,
            r,
            damping_tol: 1e-13,
            t_max,
        };
        params.validate(grid)?;
        Ok(params)
    }

    /// Same run with a different step, keeping `t_max` a whole number of steps.
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = if self.t_max > 0.0 {
            self.t_max / (self.t_max / dt).round().max(1.0)
        } else {
            dt
        };
        self
    }

    pub fn validate(&self, grid: &ExteriorGrid) -> Result<(), SolverError> {
        if !(self.r > 1.0) || !self.r.is_finite() {
            return Err(invalid("r", self.r, "need r > 1"));
        }
        if !(self.damping_tol > 0.0) {
            return Err(invalid("damping_tol", self.damping_tol, "need tol > 0"));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt", self.dt, "need dt > 0"));
        }
        let limit = self.cfl * cfl_limit(grid);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(SolverError::Cfl { dt: self.dt, limit });
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Unique root `v` of `v + c|v|^{r-1}v = w`.
///
/// `g(y) = y + c y^r - |w|` is convex and increasing on `y >= 0`, so Newton
/// started from the upper end of the bracket `[0, min(|w|, (|w|/c)^{1/r})]`
/// descends monotonically onto the root; bisection guards against rounding.
pub fn solve_damping_scalar(c: f64, w: f64, r: f64, tol: f64) -> Result<f64, SolverError> {
    if !(tol > 0.0) {
        return Err(invalid("tol", tol, "need tol > 0"));
    }
    if !(c >= 0.0) {
        return Err(invalid("c", c, "need c >= 0"));
    }
    if !(r > 1.0) {
        return Err(invalid("r", r, "need r > 1"));
    }
    if c == 0.0 || w == 0.0 {
        return Ok(w);
    }
    let target = w.abs();
    let mut lo = 0.0_f64;
    let mut hi = target.min((target / c).powf(1.0 / r));
    let mut y = hi;
    for _ in 0..200 {
        let yr1 = y.powf(r - 1.0);
        let g = y + c * yr1 * y - target;
        if g.abs() <= tol {
            break;
        }
        if g > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let mut next = y - g / (1.0 + c * r * yr1);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == y {
            break;
        }
        y = next;
    }
    Ok(w.signum() * y)
}

/// Reusable buffers for the main scheme.
pub struct Stepper<'a> {
    grid: &'a ExteriorGrid,
    damping: &'a DampingProfile,
    params: SolverParams,
    lap: Vec<f64>,
    dissipation: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        grid: &'a ExteriorGrid,
        damping: &'a DampingProfile,
        params: SolverParams,
    ) -> Result<Self, SolverError> {
        params.validate(grid)?;
        if damping.values.len() != grid.node_count() {
            return Err(SolverError::StateMismatch {
                expected: grid.node_count(),
                found: damping.values.len(),
            });
        }
        let n = grid.node_count();
        Ok(Self {
            grid,
            damping,
            params,
            lap: vec![0.0; n],
            dissipation: vec![0.0; n],
        })
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    /// `a |v|^{r+1}` per node from the last step.
    pub fn dissipation_density(&self) -> &[f64] {
        &self.dissipation
    }

    /// Advances one step in place and returns `dt h^d Σ a |v'|^{r+1}`.
    pub fn advance(&mut self, state: &mut WaveState) -> Result<f64, SolverError> {
        let SolverParams { dt, r, damping_tol, .. } = self.params;
        let grid = self.grid;
        grid.laplacian(&state.u, &mut self.lap);
        let a = &self.damping.values;
        let mut total = 0.0;
        for &k in grid.fluid_nodes() {
            let w = state.v[k] + dt * self.lap[k];
            let vk = solve_damping_scalar(dt * a[k], w, r, damping_tol)?;
            let uk = state.u[k] + dt * vk;
            if !uk.is_finite() || !vk.is_finite() {
                return Err(SolverError::NonFinite { t: state.t + dt, node: k });
            }
            state.v[k] = vk;
            state.u[k] = uk;
            let d = a[k] * vk.abs().powf(r + 1.0);
            self.dissipation[k] = d;
            total += d;
        }
        state.t += dt;
        Ok(dt * grid.cell_volume() * total)
    }
}

/// One step of the main scheme, returning the new state and its
/// dissipation increment.
pub fn step(
    state: &WaveState,
    grid: &ExteriorGrid,
    damping: &DampingProfile,
    params: &SolverParams,
) -> Result<(WaveState, f64), SolverError> {
    state.check(grid)?;
    let mut next = state.clone();
    let d = Stepper::new(grid, damping, *params)?.advance(&mut next)?;
    Ok((next, d))
}

/// Shifts initial velocity `u_1` back half a step, `v = u_1 - (dt/2) u_tt(0)`,
/// with `u_tt` taken from the equation. The result is the state the main
/// scheme expects at `t = 0`.
pub fn prepare_initial(
    u0: Vec<f64>,
    u1: Vec<f64>,
    grid: &ExteriorGrid,
    damping: &DampingProfile,
    params: &SolverParams,
) -> Result<WaveState, SolverError> {
    let mut v = u1;
    let mut lap = vec![0.0; grid.node_count()];
    grid.laplacian(&u0, &mut lap);
    let half = 0.5 * params.dt;
    for &k in grid.fluid_nodes() {
        let damp = damping.values[k] * v[k].abs().powf(params.r - 1.0) * v[k];
        v[k] -= half * (lap[k] - damp);
    }
    let state = WaveState { u: u0, v, t: 0.0 };
    state.check(grid)?;
    Ok(state)
}

/// `E = (h^d/2) Σ (|∇_h u|^2 + v^2)` over fluid nodes.
pub fn energy(state: &WaveState, grid: &ExteriorGrid) -> f64 {
    let mut grad = vec![0.0; grid.node_count()];
    grid.gradient_density(&state.u, &mut grad);
    let s: f64 = grid
        .fluid_nodes()
        .iter()
        .map(|&k| grad[k] + state.v[k] * state.v[k])
        .sum();
    0.5 * grid.cell_volume() * s
}

/// `(h^d/2) (Σ v^2 + <D u, D(u - dt v)>)`: the energy that the undamped
/// scheme conserves exactly. A damped step changes it by
/// `-(dt/2) h^d Σ a |v'|^{r-1} v' (v' + v)`.
pub fn staggered_energy(state: &WaveState, grid: &ExteriorGrid, dt: f64) -> f64 {
    let lagged: Vec<f64> = state
        .u
        .iter()
        .zip(&state.v)
        .map(|(u, v)| u - dt * v)
        .collect();
    let mut lap = vec![0.0; grid.node_count()];
    grid.laplacian(&lagged, &mut lap);
    // <D u, D w> = -Σ u Δ_h w for Dirichlet data
    let s: f64 = grid
        .fluid_nodes()
        .iter()
        .map(|&k| state.v[k] * state.v[k] - state.u[k] * lap[k])
        .sum();
    0.5 * grid.cell_volume() * s
}

/// Finite-speed check applied at every sample of a compact-data run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportCheck {
    /// Initial support radius `R`.
    pub radius: f64,
    /// Absolute threshold on `|u| + |v|`.
    pub threshold: f64,
    /// Abort on violation; otherwise only the worst excess is recorded.
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub sample_stride: usize,
    pub support: Option<SupportCheck>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            sample_stride: 1,
            support: None,
        }
    }
}

/// Receives the trajectory of a run.
pub trait RunObserver {
    /// Called at `t = 0` and every `sample_stride` steps with the cumulative
    /// plain dissipation.
    fn sample(&mut self, _state: &WaveState, _d_cum: f64) -> Result<(), SolverError> {
        Ok(())
    }

    /// Called after every step with `a|v|^{r+1}` per node and the step's
    /// dissipation increment.
    fn step(&mut self, _state: &WaveState, _dissipation: &[f64], _increment: f64) {}
}

impl RunObserver for () {}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub final_state: WaveState,
    pub d_cum: f64,
    pub steps: usize,
    pub samples: usize,
    /// Largest `support_radius - (R + t + 2h + 2dt)` seen (negative when the
    /// cone is respected); `None` without a support check.
    pub support_excess: Option<f64>,
}

/// Iterates the main scheme to `t_max`. Sampling never feeds back into the
/// trajectory.
pub fn run(
    grid: &ExteriorGrid,
    damping: &DampingProfile,
    initial: &WaveState,
    params: &SolverParams,
    options: &RunOptions,
    observer: &mut dyn RunObserver,
) -> Result<RunSummary, SolverError> {
    initial.check(grid)?;
    if options.sample_stride == 0 {
        return Err(invalid("sample_stride", 0.0, "need stride >= 1"));
    }
    let mut stepper = Stepper::new(grid, damping, *params)?;
    let mut state = initial.clone();
    let steps = params.steps();
    let mut d_cum = 0.0;
    let mut samples = 0;
    let mut excess: Option<f64> = None;

    let mut take_sample = |state: &WaveState, d_cum: f64, obs: &mut dyn RunObserver| {
        if let Some(check) = options.support {
            let radius = state.support_radius(grid, check.threshold);
            let bound = check.radius + state.t + 2.0 * grid.h() + 2.0 * params.dt;
            let e = radius - bound;
            excess = Some(excess.map_or(e, |m: f64| m.max(e)));
            if check.strict && e > 0.0 {
                return Err(SolverError::SupportViolation {
                    t: state.t,
                    radius,
                    bound,
                });
            }
        }
        samples += 1;
        obs.sample(state, d_cum)
    };

    take_sample(&state, d_cum, observer)?;
    for n in 1..=steps {
        let inc = stepper.advance(&mut state)?;
        d_cum += inc;
        // pin the clock to n dt so long runs do not accumulate drift
        state.t = n as f64 * params.dt;
        observer.step(&state, stepper.dissipation_density(), inc);
        if n % options.sample_stride == 0 {
            take_sample(&state, d_cum, observer)?;
        }
    }
    Ok(RunSummary {
        final_state: state,
        d_cum,
        steps,
        samples,
        support_excess: excess,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BumpMode {
    BumpU,
    BumpV,
    Both,
}

/// `amplitude (1 - (|x - c|/radius)^2)^3` inside the ball, 0 outside.
pub fn bump_profile(grid: &ExteriorGrid, center: &[f64], radius: f64, amplitude: f64) -> Vec<f64> {
    (0..grid.node_count())
        .map(|k| {
            if !grid.is_fluid(k) {
                return 0.0;
            }
            let p = grid.point(k);
            let d2: f64 = p.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
            let s = 1.0 - d2 / (radius * radius);
            if s > 0.0 {
                amplitude * s * s * s
            } else {
                0.0
            }
        })
        .collect()
}

/// Compactly supported `(u_0, u_1)` in the ball `B(center, radius)`.
///
/// The ball must lie in the closure of the fluid region, i.e. it may touch
/// the obstacle but not cross it, and must stay clear of the truncation.
pub fn make_initial_compact(
    grid: &ExteriorGrid,
    center: &[f64],
    radius: f64,
    amplitude: f64,
    mode: BumpMode,
) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
    if center.len() != grid.dim() {
        return Err(SolverError::InitialData(format!(
            "center has {} coordinates, grid is {}-dimensional",
            center.len(),
            grid.dim()
        )));
    }
    if !(radius > 0.0) {
        return Err(invalid("radius", radius, "need radius > 0"));
    }
    let c_norm = center.iter().fold(0.0_f64, |a, c| a.hypot(*c));
    let slack = 1e-12 * (1.0 + c_norm + radius);
    let (inner_gap, outer_gap) = if grid.dim() == 1 {
        (center[0] - radius - grid.obstacle_radius(), grid.outer_radius() - center[0] - radius)
    } else {
        (c_norm - radius - grid.obstacle_radius(), grid.outer_radius() - c_norm - radius)
    };
    if inner_gap < -slack {
        return Err(SolverError::InitialData(format!(
            "support ball (center {center:?}, radius {radius}) intersects the obstacle"
        )));
    }
    if outer_gap <= 0.0 {
        return Err(SolverError::InitialData(format!(
            "support ball (center {center:?}, radius {radius}) reaches the truncation boundary"
        )));
    }
    let bump = bump_profile(grid, center, radius, amplitude);
    let zero = vec![0.0; grid.node_count()];
    Ok(match mode {
        BumpMode::BumpU => (bump, zero),
        BumpMode::BumpV => (zero, bump),
        BumpMode::Both => (bump.clone(), bump),
    })
}

/// Smallest decay rate σ for which the weighted norms attached to `family`
/// are finite on the untruncated domain.
pub fn required_sigma(family: &WeightFamily, dim: usize) -> f64 {
    match family.regime {
        Regime::Log => dim as f64 / 2.0,
        _ => (dim as f64 + family.gamma()) / 2.0,
    }
}

/// Oscillating data with algebraic decay:
/// `u_0 = A sin(|x| - ρ) (1+|x|^2)^{-σ/2}`,
/// `u_1 = (A/2) sin(2(|x| - ρ)) (1+|x|^2)^{-σ/2}`, where ρ is the obstacle
/// radius so both vanish on the obstacle.
pub fn make_initial_weighted(
    grid: &ExteriorGrid,
    sigma: f64,
    amplitude: f64,
    family: &WeightFamily,
) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
    let required = required_sigma(family, grid.dim());
    if !(sigma > required) {
        let norm = match family.regime {
            Regime::Log => "ln^gamma(b+q)-weighted gradient",
            _ => "(1+q)^gamma-weighted gradient",
        };
        return Err(SolverError::InsufficientDecay {
            norm,
            sigma,
            required,
        });
    }
    let rho = grid.obstacle_radius();
    let mut u0 = vec![0.0; grid.node_count()];
    let mut u1 = vec![0.0; grid.node_count()];
    for &k in grid.fluid_nodes() {
        let rad = grid.radii()[k];
        let env = amplitude * (1.0 + rad * rad).powf(-0.5 * sigma);
        let phase = if grid.dim() == 1 { grid.obstacle_distance(k) } else { rad - rho };
        u0[k] = env * phase.sin();
        u1[k] = 0.5 * env * (2.0 * phase).sin();
    }
    Ok((u0, u1))
}

/// Energy trace of the implicit-midpoint reference.
#[derive(Debug, Clone)]
pub struct ReferenceSeries {
    pub t: Vec<f64>,
    pub energy: Vec<f64>,
    pub final_u: Vec<f64>,
    pub final_v: Vec<f64>,
    pub max_iterations: usize,
}

/// Implicit midpoint rule from `(u_0, u_1)` with step `dt` and the damping
/// evaluated at the midpoint velocity. The nonlinear system is solved by a
/// fixed-point iteration whose inner step is the exact nodal damping solve.
pub fn reference_solve(
    grid: &ExteriorGrid,
    damping: &DampingProfile,
    u0: &[f64],
    u1: &[f64],
    r: f64,
    dt: f64,
    t_max: f64,
) -> Result<ReferenceSeries, SolverError> {
    const TOL: f64 = 1e-12;
    const MAX_ITER: usize = 200;
    let n = grid.node_count();
    if grid.fluid_nodes().len() > 10_000 {
        return Err(invalid(
            "nodes",
            grid.fluid_nodes().len() as f64,
            "the reference integrator is for small grids (<= 1e4 nodes)",
        ));
    }
    if u0.len() != n || u1.len() != n {
        return Err(SolverError::StateMismatch {
            expected: n,
            found: u0.len().min(u1.len()),
        });
    }
    if !(dt > 0.0) {
        return Err(invalid("dt", dt, "need dt > 0"));
    }
    let steps = (t_max / dt - 1e-9).ceil().max(0.0) as usize;
    let mut u = u0.to_vec();
    let mut v = u1.to_vec();
    let mut vbar = v.clone();
    let mut ubar = vec![0.0; n];
    let mut lap = vec![0.0; n];
    let plain = |u: &[f64], v: &[f64]| {
        energy(
            &WaveState {
                u: u.to_vec(),
                v: v.to_vec(),
                t: 0.0,
            },
            grid,
        )
    };
    let mut out = ReferenceSeries {
        t: vec![0.0],
        energy: vec![plain(&u, &v)],
        final_u: Vec::new(),
        final_v: Vec::new(),
        max_iterations: 0,
    };
    let a = &damping.values;
    for step in 1..=steps {
        let t = step as f64 * dt;
        let mut converged = false;
        for it in 1..=MAX_ITER {
            for &k in grid.fluid_nodes() {
                ubar[k] = u[k] + 0.5 * dt * vbar[k];
            }
            grid.laplacian(&ubar, &mut lap);
            let mut change = 0.0_f64;
            let mut scale = 1.0_f64;
            for &k in grid.fluid_nodes() {
                let w = v[k] + 0.5 * dt * lap[k];
                let next = solve_damping_scalar(0.5 * dt * a[k], w, r, 1e-15)?;
                change = change.max((next - vbar[k]).abs());
                scale = scale.max(next.abs());
                vbar[k] = next;
            }
            if change <= TOL * scale {
                out.max_iterations = out.max_iterations.max(it);
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SolverError::FixedPointDiverged {
                t,
                iterations: MAX_ITER,
            });
        }
        for &k in grid.fluid_nodes() {
            u[k] += dt * vbar[k];
            v[k] = 2.0 * vbar[k] - v[k];
            if !u[k].is_finite() || !v[k].is_finite() {
                return Err(SolverError::NonFinite { t, node: k });
            }
        }
        out.t.push(t);
        out.energy.push(plain(&u, &v));
    }
    out.final_u = u;
    out.final_v = v;
    Ok(out)
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"WDSNAP01";

/// Writes `state` as a 32-byte header (magic, dim `u32`, reserved `u32`,
/// node count `u64`, `t` as `f64`) followed by `u` then `v`, all
/// little-endian.
pub fn write_snapshot<W: Write>(mut w: W, dim: u32, state: &WaveState) -> Result<(), SolverError> {
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&dim.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    w.write_all(&(state.u.len() as u64).to_le_bytes())?;
    w.write_all(&state.t.to_le_bytes())?;
    for x in state.u.iter().chain(&state.v) {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot`], returning `(dim, state)`.
pub fn read_snapshot<R: Read>(mut r: R) -> Result<(u32, WaveState), SolverError> {
    let mut header = [0u8; 32];
    r.read_exact(&mut header)?;
    if &header[..8] != SNAPSHOT_MAGIC {
        return Err(SolverError::Snapshot("bad magic".into()));
    }
    let dim = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let n = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    let t = f64::from_le_bytes(header[24..32].try_into().unwrap());
    let mut buf = vec![0u8; 16 * n];
    r.read_exact(&mut buf)?;
    let vals: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (u, v) = vals.split_at(n);
    Ok((
        dim,
        WaveState {
            u: u.to_vec(),
            v: v.to_vec(),
            t,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_damping, build_grid_1d, DampingKind};

    fn bisect(c: f64, w: f64, r: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, w.abs());
        while hi - lo > 1e-15 {
            let mid = 0.5 * (lo + hi);
            if mid + c * mid.powf(r) > w.abs() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        w.signum() * 0.5 * (lo + hi)
    }

    #[test]
    fn damping_solve_examples() {
        assert_eq!(solve_damping_scalar(0.0, 3.7, 2.0, 1e-12).unwrap(), 3.7);
        let v = solve_damping_scalar(1.0, 2.0, 2.0, 1e-14).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        assert!((v - bisect(1.0, 2.0, 2.0)).abs() < 1e-13);
        let v = solve_damping_scalar(1e6, 1.0, 1.5, 1e-12).unwrap();
        assert!(v > 0.9e-4 && v < 1.1e-4, "{v}");
        let v = solve_damping_scalar(3.0, -2.0, 1.5, 1e-12).unwrap();
        assert!(v < 0.0 && v > -2.0);
        assert!(solve_damping_scalar(1.0, 1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn zero_state_is_fixed() {
        let g = build_grid_1d(0.0, 10.0, 100).unwrap();
        let d = build_damping(&g, DampingKind::Constant, 1.0, 2.0, 1.0).unwrap();
        let p = SolverParams::new(&g, 0.9, 2.0, 1.0).unwrap();
        let s = WaveState::zeros(&g);
        let (next, diss) = step(&s, &g, &d, &p).unwrap();
        assert!(next.u.iter().chain(&next.v).all(|x| *x == 0.0));
        assert_eq!(diss, 0.0);
    }

    #[test]
    fn uniform_velocity_step_matches_scalar_solve() {
        // zero displacement means Δ_h u = 0, so every node solves the same
        // scalar equation
        let g = build_grid_1d(0.0, 10.0, 100).unwrap();
        let d = build_damping(&g, DampingKind::Constant, 2.0, 2.0, 2.0).unwrap();
        let p = SolverParams::new(&g, 0.9, 2.0, 1.0).unwrap();
        let mut s = WaveState::zeros(&g);
        for &k in g.fluid_nodes() {
            s.v[k] = 0.7;
        }
        let (next, _) = step(&s, &g, &d, &p).unwrap();
        let want = solve_damping_scalar(p.dt * 2.0, 0.7, 2.0, p.damping_tol).unwrap();
        assert!(g.fluid_nodes().iter().all(|&k| next.v[k] == want));
    }

    #[test]
    fn cfl_violation_rejected() {
        let g = build_grid_1d(0.0, 10.0, 100).unwrap();
        let mut p = SolverParams::new(&g, 0.9, 2.0, 1.0).unwrap();
        p.dt = 0.2;
        assert!(matches!(p.validate(&g), Err(SolverError::Cfl { .. })));
    }

    #[test]
    fn params_divide_t_max() {
        let g = build_grid_1d(0.0, 10.0, 100).unwrap();
        let p = SolverParams::new(&g, 0.9, 2.0, 5.0).unwrap();
        assert!(p.dt <= 0.09);
        assert_eq!(p.steps() as f64 * p.dt, 5.0);
    }

    #[test]
    fn snapshot_round_trip() {
        let s = WaveState {
            u: vec![1.0, -2.5, 3.25],
            v: vec![0.0, 1e-300, f64::MAX],
            t: 0.125,
        };
        let mut buf = Vec::new();
        write_snapshot(&mut buf, 1, &s).unwrap();
        assert_eq!(buf.len(), 32 + 48);
        assert_eq!(&buf[..8], b"WDSNAP01");
        let (dim, back) = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(dim, 1);
        assert_eq!(back, s);
    }

    #[test]
    fn compact_data_rejects_bad_support() {
        let g = build_grid_1d(1.0, 20.0, 380).unwrap();
        assert!(make_initial_compact(&g, &[1.5], 0.5, 1.0, BumpMode::BumpU).is_ok());
        assert!(make_initial_compact(&g, &[1.2], 0.5, 1.0, BumpMode::BumpU).is_err());
        assert!(make_initial_compact(&g, &[19.8], 0.5, 1.0, BumpMode::BumpU).is_err());
    }
}
