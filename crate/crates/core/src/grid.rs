//! Uniform grids on truncated exterior domains, damping profiles that
//! satisfy the exterior lower bound `a >= ε0` on `|x| >= L`, and the cutoff ψ.
//!
//! Two geometries are supported: the half-line `(α, x_max)` and a square
//! `[-r_out, r_out]^2` with a closed disk obstacle of radius ρ removed and
//! everything at `|x| >= r_out` frozen. Non-fluid nodes carry homogeneous
//! Dirichlet values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },
    #[error("obstacle of radius {rho} is resolved by only {nodes} nodes across (need 8)")]
    ObstacleUnderResolved { rho: f64, nodes: usize },
    #[error("exterior damping without an obstacle collar is not emitted in 2D; use annulus_plus_exterior")]
    MissingCollar,
}

fn invalid(name: &'static str, value: f64, reason: impl Into<String>) -> GridError {
    GridError::InvalidParameter {
        name,
        value,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Fluid,
    /// Inside the obstacle or on its boundary.
    Obstacle,
    /// At or beyond the truncation radius.
    Truncation,
}

#[derive(Debug, Clone)]
pub struct ExteriorGrid {
    dim: usize,
    h: f64,
    alpha: f64,
    rho: f64,
    outer: f64,
    nx: usize,
    ny: usize,
    kinds: Vec<NodeKind>,
    coords: Vec<[f64; 2]>,
    radius: Vec<f64>,
    fluid: Vec<usize>,
}

/// Geometry summary stored in scenario reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub dim: usize,
    pub h: f64,
    pub alpha: Option<f64>,
    pub rho: Option<f64>,
    pub outer_radius: f64,
    pub nodes: usize,
    pub fluid_nodes: usize,
}

/// Builds the half-line grid `x_i = α + i h`, `h = (x_max - α)/n_cells`,
/// with Dirichlet nodes at both ends.
pub fn build_grid_1d(alpha: f64, x_max: f64, n_cells: usize) -> Result<ExteriorGrid, GridError> {
    if !alpha.is_finite() || !x_max.is_finite() || x_max <= alpha {
        return Err(invalid("x_max", x_max, format!("must exceed alpha = {alpha}")));
    }
    if n_cells < 16 {
        return Err(invalid("n_cells", n_cells as f64, "need at least 16 cells"));
    }
    let h = (x_max - alpha) / n_cells as f64;
    let n = n_cells + 1;
    let mut kinds = vec![NodeKind::Fluid; n];
    kinds[0] = NodeKind::Obstacle;
    kinds[n_cells] = NodeKind::Truncation;
    let coords: Vec<[f64; 2]> = (0..n).map(|i| [alpha + i as f64 * h, 0.0]).collect();
    let radius = coords.iter().map(|c| c[0].abs()).collect();
    let fluid = (1..n_cells).collect();
    Ok(ExteriorGrid {
        dim: 1,
        h,
        alpha,
        rho: 0.0,
        outer: x_max,
        nx: n,
        ny: 1,
        kinds,
        coords,
        radius,
        fluid,
    })
}

/// Builds the Cartesian grid on `[-r_out, r_out]^2` with spacing close to
/// `h` (adjusted so that `2 r_out / h` is an integer).
pub fn build_grid_2d_disk(rho: f64, r_out: f64, h: f64) -> Result<ExteriorGrid, GridError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid("h", h, "spacing must be positive"));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(invalid("rho", rho, "obstacle radius must be positive"));
    }
    if !(r_out > rho + 4.0 * h) || !r_out.is_finite() {
        return Err(invalid("r_out", r_out, format!("must exceed rho + 4h = {}", rho + 4.0 * h)));
    }
    let cells = (2.0 * r_out / h).round().max(2.0) as usize;
    let h = 2.0 * r_out / cells as f64;
    let across = (2.0 * rho / h).floor() as usize + 1;
    if across < 8 {
        return Err(GridError::ObstacleUnderResolved { rho, nodes: across });
    }
    let n = cells + 1;
    let mut kinds = Vec::with_capacity(n * n);
    let mut coords = Vec::with_capacity(n * n);
    let mut radius = Vec::with_capacity(n * n);
    let mut fluid = Vec::new();
    // integer offsets keep the coordinates exactly antisymmetric
    let half_h = r_out / cells as f64;
    let coord = |i: usize| (2 * i as i64 - cells as i64) as f64 * half_h;
    for j in 0..n {
        let y = coord(j);
        for i in 0..n {
            let x = coord(i);
            let rad = x.hypot(y);
            let kind = if rad <= rho {
                NodeKind::Obstacle
            } else if rad >= r_out || i == 0 || j == 0 || i == cells || j == cells {
                NodeKind::Truncation
            } else {
                NodeKind::Fluid
            };
            if kind == NodeKind::Fluid {
                fluid.push(coords.len());
            }
            kinds.push(kind);
            coords.push([x, y]);
            radius.push(rad);
        }
    }
    Ok(ExteriorGrid {
        dim: 2,
        h,
        alpha: 0.0,
        rho,
        outer: r_out,
        nx: n,
        ny: n,
        kinds,
        coords,
        radius,
        fluid,
    })
}

impl ExteriorGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn fluid_nodes(&self) -> &[usize] {
        &self.fluid
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn is_fluid(&self, node: usize) -> bool {
        self.kinds[node] == NodeKind::Fluid
    }

    pub fn coords(&self, node: usize) -> [f64; 2] {
        self.coords[node]
    }

    /// Point of `node` as a slice of length `dim`.
    pub fn point(&self, node: usize) -> &[f64] {
        &self.coords[node][..self.dim]
    }

    /// `|x|` of every node.
    pub fn radii(&self) -> &[f64] {
        &self.radius
    }

    /// Truncation radius (`x_max` in 1D, `r_out` in 2D).
    pub fn outer_radius(&self) -> f64 {
        self.outer
    }

    /// Obstacle boundary: `α` in 1D, ρ in 2D.
    pub fn obstacle_radius(&self) -> f64 {
        if self.dim == 1 {
            self.alpha
        } else {
            self.rho
        }
    }

    /// Distance from `node` to the obstacle.
    pub fn obstacle_distance(&self, node: usize) -> f64 {
        if self.dim == 1 {
            self.coords[node][0] - self.alpha
        } else {
            self.radius[node] - self.rho
        }
    }

    /// Distance from `node` to the truncation boundary.
    pub fn truncation_distance(&self, node: usize) -> f64 {
        if self.dim == 1 {
            self.outer - self.coords[node][0]
        } else {
            self.outer - self.radius[node]
        }
    }

    /// Stencil neighbours of a node (2 in 1D, 4 in 2D), or `None` at the
    /// array border.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = (node % self.nx, node / self.nx);
        let mut out = [usize::MAX; 4];
        if i > 0 {
            out[0] = node - 1;
        }
        if i + 1 < self.nx {
            out[1] = node + 1;
        }
        if self.dim == 2 {
            if j > 0 {
                out[2] = node - self.nx;
            }
            if j + 1 < self.ny {
                out[3] = node + self.nx;
            }
        }
        out.into_iter().filter(|n| *n != usize::MAX)
    }

    /// Grid Laplacian at a fluid node. Non-fluid neighbours contribute
    /// through their stored (zero) values.
    #[inline]
    pub fn laplacian_at(&self, u: &[f64], k: usize) -> f64 {
        let inv_h2 = 1.0 / (self.h * self.h);
        if self.dim == 1 {
            (u[k - 1] - 2.0 * u[k] + u[k + 1]) * inv_h2
        } else {
            let nx = self.nx;
            (u[k - 1] + u[k + 1] + u[k - nx] + u[k + nx] - 4.0 * u[k]) * inv_h2
        }
    }

    /// Writes `Δ_h u` at fluid nodes into `out` (other entries untouched).
    pub fn laplacian(&self, u: &[f64], out: &mut [f64]) {
        for &k in &self.fluid {
            out[k] = self.laplacian_at(u, k);
        }
    }

    /// Per-node gradient density `|∇_h u|^2` at fluid nodes, zero elsewhere.
    ///
    /// Each grid edge `((u_j - u_i)/h)^2` is split evenly between two fluid
    /// endpoints and assigned wholly to the fluid endpoint of a boundary
    /// edge, so `h^d Σ_k g_k` is exactly `-h^d Σ u Δ_h u`.
    pub fn gradient_density(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        let inv_h2 = 1.0 / (self.h * self.h);
        for &k in &self.fluid {
            let mut g = 0.0;
            for n in self.neighbors(k) {
                let d = u[n] - u[k];
                let w = if self.kinds[n] == NodeKind::Fluid { 0.5 } else { 1.0 };
                g += w * d * d;
            }
            out[k] = g * inv_h2;
        }
    }

    /// Bilinear companion of [`Self::gradient_density`]: per-node share of
    /// `D u · D w` with the same edge weights, so `h^d Σ_k out_k = -h^d Σ u Δ_h w`.
    pub fn gradient_product_density(&self, u: &[f64], w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        let inv_h2 = 1.0 / (self.h * self.h);
        for &k in &self.fluid {
            let mut g = 0.0;
            for n in self.neighbors(k) {
                let wt = if self.kinds[n] == NodeKind::Fluid { 0.5 } else { 1.0 };
                g += wt * (u[n] - u[k]) * (w[n] - w[k]);
            }
            out[k] = g * inv_h2;
        }
    }

    /// Nodes whose distance to the truncation boundary is at most `width`.
    pub fn truncation_band(&self, width: f64) -> Vec<usize> {
        self.fluid
            .iter()
            .copied()
            .filter(|&k| self.truncation_distance(k) <= width)
            .collect()
    }

    /// True when every fluid node's stencil neighbours exist and are
    /// classified; fluid nodes never sit on the array border.
    pub fn mask_consistent(&self) -> bool {
        let want = 2 * self.dim;
        self.fluid.iter().all(|&k| self.neighbors(k).count() == want)
    }

    pub fn summary(&self) -> GridSummary {
        GridSummary {
            dim: self.dim,
            h: self.h,
            alpha: (self.dim == 1).then_some(self.alpha),
            rho: (self.dim == 2).then_some(self.rho),
            outer_radius: self.outer,
            nodes: self.node_count(),
            fluid_nodes: self.fluid.len(),
        }
    }
}

/// Quintic smoothstep `6t^5 - 15t^4 + 10t^3` on `[0, 1]`, clamped outside.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingKind {
    Constant,
    ExteriorSmooth,
    AnnulusPlusExterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingProfile {
    /// `a(x_i)` at every node; zero at non-fluid nodes.
    #[serde(skip)]
    pub values: Vec<f64>,
    pub epsilon0: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub a_max: f64,
    pub kind: DampingKind,
    /// `max_i a(x_i)`.
    pub a_inf: f64,
    /// `{a >= ε0}` contains `{|x| >= L}` and, in 2D, a collar of the obstacle.
    pub gcc_by_construction: bool,
}

/// Builds `a(x)` on the grid.
///
/// * `constant`: `a = a_max`.
/// * `exterior_smooth`: `ε0 S(|x|/L)` inside `B_L`, then
///   `ε0 + (a_max - ε0) S((|x| - L)/L)`.
/// * `annulus_plus_exterior`: the above, raised to at least ε0 within `L/2`
///   of the obstacle and decaying smoothly to 0 over the next `L/2`.
pub fn build_damping(
    grid: &ExteriorGrid,
    kind: DampingKind,
    epsilon0: f64,
    l: f64,
    a_max: f64,
) -> Result<DampingProfile, GridError> {
    if !(l > 0.0) || !(l < grid.outer_radius()) {
        return Err(invalid("L", l, "need 0 < L < truncation radius"));
    }
    if !(epsilon0 > 0.0) || !epsilon0.is_finite() {
        return Err(invalid("epsilon0", epsilon0, "need epsilon0 > 0"));
    }
    if !(a_max >= epsilon0) || !a_max.is_finite() {
        return Err(invalid("a_max", a_max, format!("need a_max >= epsilon0 = {epsilon0}")));
    }
    if grid.dim() == 2 && kind == DampingKind::ExteriorSmooth {
        return Err(GridError::MissingCollar);
    }
    let exterior = |rad: f64| {
        if rad < l {
            epsilon0 * smoothstep(rad / l)
        } else {
            epsilon0 + (a_max - epsilon0) * smoothstep((rad - l) / l)
        }
    };
    let mut values = vec![0.0; grid.node_count()];
    for &k in grid.fluid_nodes() {
        let rad = grid.radii()[k];
        values[k] = match kind {
            DampingKind::Constant => a_max,
            DampingKind::ExteriorSmooth => exterior(rad),
            DampingKind::AnnulusPlusExterior => {
                let dist = grid.obstacle_distance(k);
                let collar = epsilon0 * (1.0 - smoothstep((dist - 0.5 * l) / (0.5 * l)));
                exterior(rad).max(collar)
            }
        };
    }
    let a_inf = values.iter().copied().fold(0.0, f64::max);
    Ok(DampingProfile {
        values,
        epsilon0,
        l,
        a_max,
        kind,
        a_inf,
        gcc_by_construction: true,
    })
}

impl DampingProfile {
    /// Smallest `a` over fluid nodes with `|x| >= L`; `+inf` if there are none.
    pub fn exterior_minimum(&self, grid: &ExteriorGrid) -> f64 {
        grid.fluid_nodes()
            .iter()
            .filter(|&&k| grid.radii()[k] >= self.l)
            .map(|&k| self.values[k])
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffPsi {
    pub values: Vec<f64>,
    pub l: f64,
}

/// `ψ(x) = 1 - S((|x| - L)/L)`: 1 on `B_L`, 0 outside `B_{2L}`.
pub fn build_psi(grid: &ExteriorGrid, l: f64) -> Result<CutoffPsi, GridError> {
    if !(l > 0.0) || 2.0 * l > grid.outer_radius() {
        return Err(invalid("L", l, format!(
            "need 0 < 2L <= truncation radius {}",
            grid.outer_radius()
        )));
    }
    let values = grid
        .radii()
        .iter()
        .map(|&rad| 1.0 - smoothstep((rad - l) / l))
        .collect();
    Ok(CutoffPsi { values, l })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_1d_examples() {
        let g = build_grid_1d(0.0, 10.0, 10);
        assert!(g.is_err(), "fewer than 16 cells is rejected");
        let g = build_grid_1d(0.0, 1.0, 16).unwrap();
        assert_eq!(g.node_count(), 17);
        assert_eq!(g.fluid_nodes().len(), 15);
        assert_eq!(g.h(), 1.0 / 16.0);
        assert!(build_grid_1d(1.0, 1.0, 32).is_err());
        assert!(g.mask_consistent());
    }

    #[test]
    fn grid_2d_obstacle_count() {
        let g = build_grid_2d_disk(1.0, 8.0, 0.05).unwrap();
        let masked = (0..g.node_count())
            .filter(|&k| g.kind(k) == NodeKind::Obstacle)
            .count() as f64;
        let expected = std::f64::consts::PI / (0.05 * 0.05);
        assert!((masked - expected).abs() / expected < 0.02, "{masked} vs {expected}");
        assert!(g.mask_consistent());
        assert!(build_grid_2d_disk(1.0, 1.05, 0.05).is_err());
        assert!(matches!(
            build_grid_2d_disk(0.1, 8.0, 0.05),
            Err(GridError::ObstacleUnderResolved { .. })
        ));
    }

    #[test]
    fn boundary_point_is_masked() {
        // h = 0.25 puts grid points exactly on |x| = 1
        let g = build_grid_2d_disk(1.0, 4.0, 0.25).unwrap();
        let on_circle = (0..g.node_count())
            .find(|&k| g.coords(k) == [1.0, 0.0])
            .unwrap();
        assert_eq!(g.kind(on_circle), NodeKind::Obstacle);
    }

    #[test]
    fn mask_rotation_symmetry() {
        let g = build_grid_2d_disk(1.0, 3.0, 0.1).unwrap();
        let n = (g.node_count() as f64).sqrt() as usize;
        for j in 0..n {
            for i in 0..n {
                // rotation by 90 degrees: (i, j) -> (n-1-j, i)
                let a = g.kind(j * n + i);
                let b = g.kind(i * n + (n - 1 - j));
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn damping_examples() {
        let g = build_grid_1d(0.0, 10.0, 100).unwrap();
        let c = build_damping(&g, DampingKind::Constant, 0.5, 2.0, 1.0).unwrap();
        assert!(g.fluid_nodes().iter().all(|&k| c.values[k] == 1.0));
        assert_eq!(c.a_inf, 1.0);

        let e = build_damping(&g, DampingKind::ExteriorSmooth, 0.5, 2.0, 1.0).unwrap();
        let at_l = g.fluid_nodes().iter().find(|&&k| g.radii()[k] == 2.0).unwrap();
        assert_eq!(e.values[*at_l], 0.5);
        assert!(e.exterior_minimum(&g) >= 0.5);
        // exterior_smooth at |x| = 0 is zero by construction
        let g0 = build_grid_1d(-1.0, 10.0, 110).unwrap();
        let e0 = build_damping(&g0, DampingKind::ExteriorSmooth, 0.5, 2.0, 1.0).unwrap();
        let origin = g0.fluid_nodes().iter().find(|&&k| g0.coords(k)[0].abs() < 1e-12).unwrap();
        assert_eq!(e0.values[*origin], 0.0);
    }

    #[test]
    fn collar_covers_obstacle_neighbourhood() {
        let g = build_grid_2d_disk(1.0, 6.0, 0.1).unwrap();
        let d = build_damping(&g, DampingKind::AnnulusPlusExterior, 0.3, 2.0, 1.0).unwrap();
        for &k in g.fluid_nodes() {
            if g.obstacle_distance(k) <= 1.0 || g.radii()[k] >= 2.0 {
                assert!(d.values[k] >= 0.3);
            }
        }
        assert!(matches!(
            build_damping(&g, DampingKind::ExteriorSmooth, 0.3, 2.0, 1.0),
            Err(GridError::MissingCollar)
        ));
    }

    #[test]
    fn psi_examples() {
        let g = build_grid_1d(0.0, 8.0, 80).unwrap();
        let psi = build_psi(&g, 2.0).unwrap();
        let at = |x: f64| {
            let k = (0..g.node_count()).find(|&k| (g.coords(k)[0] - x).abs() < 1e-9).unwrap();
            psi.values[k]
        };
        assert_eq!(at(2.0), 1.0);
        assert_eq!(at(4.0), 0.0);
        assert!((at(3.0) - 0.5).abs() < 1e-15);
        assert!(build_psi(&g, 5.0).is_err());
    }

    #[test]
    fn gradient_density_sums_to_dirichlet_form() {
        let g = build_grid_2d_disk(1.0, 3.0, 0.1).unwrap();
        let u: Vec<f64> = (0..g.node_count())
            .map(|k| {
                if g.is_fluid(k) {
                    let [x, y] = g.coords(k);
                    (x * 1.3).sin() * (y * 0.7).cos()
                } else {
                    0.0
                }
            })
            .collect();
        let mut grad = vec![0.0; g.node_count()];
        let mut lap = vec![0.0; g.node_count()];
        g.gradient_density(&u, &mut grad);
        g.laplacian(&u, &mut lap);
        let lhs: f64 = grad.iter().sum();
        let rhs: f64 = g.fluid_nodes().iter().map(|&k| -u[k] * lap[k]).sum();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs());
    }
}
