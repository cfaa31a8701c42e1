//! Cauchy problem `u_t = Δu + f(x,u)` on a box: IMEX time stepping with a
//! cosine-transform Neumann solve, bubble initial data, level-set tracking
//! along rays and spreading-speed estimates.
//!
//! Box nodes are cell centred, `x_i = -W + (i + 1/2) h` with `h = 2W/n`;
//! the 2-D field index is `i1 * n + i2`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};
use thiserror::Error;

use crate::cylinder::ProfileInterp;
use crate::front::{linear_regression, PulsatingFront};
use crate::medium::{reaction_at, ReactionModel};

/// Round-off allowance on the invariant region `[0, 1]`.
pub const RANGE_SLACK: f64 = 1e-6;
/// Records closer than this many cells to the box edge are excluded from speed fits.
pub const BOUNDARY_CELLS: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CauchyError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("initial levels violate 0 < alpha < min theta <= max theta < beta < 1: {0}")]
    InvalidLevels(String),
    #[error("non-finite field value at t = {0}")]
    NonFiniteField(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("insufficient window: {0}")]
    InsufficientWindow(String),
    #[error("relation time (k.e)/c = {0} is negative")]
    NegativeTime(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxGrid {
    pub half_width: f64,
    /// Nodes per dimension.
    pub n: usize,
    pub dim: usize,
}

impl BoxGrid {
    pub fn new(half_width: f64, n: usize, dim: usize) -> Result<Self, CauchyError> {
        if !(dim == 1 || dim == 2) {
            return Err(CauchyError::InvalidBox(format!("dim must be 1 or 2, got {dim}")));
        }
        if n < 8 {
            return Err(CauchyError::InvalidBox(format!("need at least 8 nodes per dimension, got {n}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(CauchyError::InvalidBox(format!("half-width must be positive, got {half_width}")));
        }
        Ok(Self { half_width, n, dim })
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.h()
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.x(idx), 0.0]
        } else {
            [self.x(idx / self.n), self.x(idx % self.n)]
        }
    }

    /// Soft sizing rules: spacing at most 1/16 of the unit cell and a box
    /// at least twice the expected final radius.
    pub fn sizing_warnings(&self, expected_radius: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.h() > 1.0 / 16.0 + 1e-15 {
            out.push(format!("box spacing {:.4} exceeds 1/16 of the unit cell", self.h()));
        }
        if self.half_width < 2.0 * expected_radius {
            out.push(format!(
                "box half-width {:.3} below twice the expected radius {:.3}",
                self.half_width, expected_radius
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CauchyState {
    pub t: f64,
    pub grid: BoxGrid,
    pub u: Vec<f64>,
}

impl CauchyState {
    pub fn from_fn(grid: &BoxGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let u = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { t: 0.0, grid: grid.clone(), u }
    }

    pub fn max(&self) -> f64 {
        self.u.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.u.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Bilinear interpolation, clamped to the node range.
    pub fn sample(&self, x: [f64; 2]) -> f64 {
        let g = &self.grid;
        let n = g.n;
        let locate = |v: f64| {
            let s = ((v + g.half_width) / g.h() - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (s.floor() as usize).min(n - 2);
            (i, s - i as f64)
        };
        let (i, a) = locate(x[0]);
        if g.dim == 1 {
            return (1.0 - a) * self.u[i] + a * self.u[i + 1];
        }
        let (j, b) = locate(x[1]);
        let at = |p: usize, q: usize| self.u[p * n + q];
        (1.0 - a) * ((1.0 - b) * at(i, j) + b * at(i, j + 1)) + a * ((1.0 - b) * at(i + 1, j) + b * at(i + 1, j + 1))
    }
}

fn check_box_model(grid: &BoxGrid, model: &ReactionModel) -> Result<(), CauchyError> {
    if grid.dim != model.dim {
        return Err(CauchyError::DimensionMismatch(format!("box dim {}, medium dim {}", grid.dim, model.dim)));
    }
    Ok(())
}

fn indicator(grid: &BoxGrid, r: f64, inside: f64, outside: f64) -> CauchyState {
    CauchyState::from_fn(grid, |x| if (x[0] * x[0] + x[1] * x[1]).sqrt() < r { inside } else { outside })
}

/// `v_R(0,x) = β` for `|x| < R`, zero elsewhere.
pub fn init_vr(grid: &BoxGrid, model: &ReactionModel, r: f64, beta: f64) -> Result<CauchyState, CauchyError> {
    check_box_model(grid, model)?;
    if !(beta > model.theta_max && beta < 1.0) {
        return Err(CauchyError::InvalidLevels(format!("beta = {beta}, max theta = {:.6}", model.theta_max)));
    }
    check_radius(grid, r)?;
    Ok(indicator(grid, r, beta, 0.0))
}

/// `ω_R(0,x) = α` for `|x| < R`, one elsewhere.
pub fn init_omega_r(grid: &BoxGrid, model: &ReactionModel, r: f64, alpha: f64) -> Result<CauchyState, CauchyError> {
    check_box_model(grid, model)?;
    if !(alpha > 0.0 && alpha < model.theta_min) {
        return Err(CauchyError::InvalidLevels(format!("alpha = {alpha}, min theta = {:.6}", model.theta_min)));
    }
    check_radius(grid, r)?;
    Ok(indicator(grid, r, alpha, 1.0))
}

fn check_radius(grid: &BoxGrid, r: f64) -> Result<(), CauchyError> {
    if !(r > 0.0 && r <= grid.half_width / 2.0) {
        return Err(CauchyError::InvalidBox(format!("radius {r} not in (0, W/2 = {}]", grid.half_width / 2.0)));
    }
    Ok(())
}

/// Planar front data `u(0,x) = U(x·e - shift, x)`.
pub fn init_front(grid: &BoxGrid, front: &PulsatingFront, shift: f64) -> Result<CauchyState, CauchyError> {
    if front.e.len() != grid.dim {
        return Err(CauchyError::DimensionMismatch(format!("front dim {}, box dim {}", front.e.len(), grid.dim)));
    }
    let interp = ProfileInterp::new(&front.profile);
    let e = front.e.clone();
    Ok(CauchyState::from_fn(grid, |x| {
        let xs = &x[..grid.dim];
        let xi: f64 = xs.iter().zip(&e).map(|(a, b)| a * b).sum();
        interp.eval(xi - shift, xs)
    }))
}

/// Default step `min(0.25, 0.5/L)`.
pub fn default_dt(model: &ReactionModel) -> f64 {
    0.25f64.min(0.5 / model.lipschitz_l)
}

/// Lie-split IMEX stepper: explicit reaction, then `(I - dt Δ_h)⁻¹` with the
/// Neumann five-point Laplacian diagonalized by DCT-II / DCT-III.
pub struct Stepper {
    grid: BoxGrid,
    pub dt: f64,
    theta: Vec<f64>,
    dct: Arc<dyn TransformType2And3<f64>>,
    /// Inverse symbol including the transform normalization.
    symbol: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: &BoxGrid, model: &ReactionModel, dt: f64) -> Result<Self, CauchyError> {
        check_box_model(grid, model)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CauchyError::InvalidBox(format!("time step must be positive, got {dt}")));
        }
        let n = grid.n;
        let h = grid.h();
        let lam: Vec<f64> = (0..n)
            .map(|k| {
                let s = (PI * k as f64 / (2.0 * n as f64)).sin();
                4.0 * s * s / (h * h)
            })
            .collect();
        let norm = 2.0 / n as f64;
        let symbol = if grid.dim == 1 {
            lam.iter().map(|l| norm / (1.0 + dt * l)).collect()
        } else {
            let mut s = Vec::with_capacity(n * n);
            for l1 in &lam {
                for l2 in &lam {
                    s.push(norm * norm / (1.0 + dt * (l1 + l2)));
                }
            }
            s
        };
        let theta = (0..grid.len())
            .map(|i| {
                let p = grid.point(i);
                model.theta_at(&p[..grid.dim])
            })
            .collect();
        let dct = DctPlanner::new().plan_dct2(n);
        Ok(Self { grid: grid.clone(), dt, theta, dct, symbol })
    }

    fn transform(&self, u: &mut [f64], forward: bool) {
        let n = self.grid.n;
        let run = |row: &mut [f64]| {
            if forward {
                self.dct.process_dct2(row)
            } else {
                self.dct.process_dct3(row)
            }
        };
        if self.grid.dim == 1 {
            run(u);
            return;
        }
        for row in u.chunks_mut(n) {
            run(row);
        }
        let mut col = vec![0.0; n];
        for j in 0..n {
            for i in 0..n {
                col[i] = u[i * n + j];
            }
            run(&mut col);
            for i in 0..n {
                u[i * n + j] = col[i];
            }
        }
    }

    /// Solves `(I - dt Δ_h) w = u` in place.
    pub fn implicit_diffusion(&self, u: &mut [f64]) {
        self.transform(u, true);
        u.iter_mut().zip(&self.symbol).for_each(|(v, s)| *v *= s);
        self.transform(u, false);
    }

    pub fn step(&self, state: &mut CauchyState) -> Result<(), CauchyError> {
        let dt = self.dt;
        state.u.iter_mut().zip(&self.theta).for_each(|(v, &th)| *v += dt * reaction_at(th, *v).f);
        self.implicit_diffusion(&mut state.u);
        state.t += dt;
        if state.u.iter().any(|v| !v.is_finite()) {
            return Err(CauchyError::NonFiniteField(state.t));
        }
        Ok(())
    }

    /// Advances by `steps` steps.
    pub fn advance(&self, state: &mut CauchyState, steps: usize) -> Result<(), CauchyError> {
        for _ in 0..steps {
            self.step(state)?;
        }
        Ok(())
    }
}

/// Interface position on every ray at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceRecord {
    pub t: f64,
    /// Outermost crossing radius per ray; `None` where no crossing was found.
    pub radii: Vec<Option<f64>>,
    /// Largest gap between the 0.05 and 0.95 crossings over rays.
    pub width: Option<f64>,
    /// Some crossing lies within [`BOUNDARY_CELLS`] cells of the box edge.
    pub near_boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceTrack {
    pub center: [f64; 2],
    pub angles: Vec<f64>,
    pub level: f64,
    pub records: Vec<InterfaceRecord>,
}

/// `K` equally spaced ray angles; a line box has the two rays `0` and `π`.
pub fn ray_angles(dim: usize, k: usize) -> Vec<f64> {
    if dim == 1 {
        return vec![0.0, PI];
    }
    (0..k).map(|j| 2.0 * PI * j as f64 / k as f64).collect()
}

/// Distance from `center` along `angle` to the outermost node line.
fn ray_extent(grid: &BoxGrid, center: [f64; 2], angle: f64) -> f64 {
    let edge = grid.half_width - 0.5 * grid.h();
    let dir = [angle.cos(), angle.sin()];
    let mut r = f64::INFINITY;
    for d in 0..grid.dim {
        if dir[d].abs() > 1e-14 {
            let bound = if dir[d] > 0.0 { edge } else { -edge };
            r = r.min((bound - center[d]) / dir[d]);
        }
    }
    r.max(0.0)
}

/// Outermost radius along the ray where the field crosses `level` downwards.
pub fn ray_crossing(state: &CauchyState, center: [f64; 2], angle: f64, level: f64) -> Option<f64> {
    let g = &state.grid;
    let extent = ray_extent(g, center, angle);
    let ds = 0.5 * g.h();
    let steps = (extent / ds).floor() as usize;
    let at = |s: f64| state.sample([center[0] + s * angle.cos(), center[1] + s * angle.sin()]);
    let mut outer = at(steps as f64 * ds);
    if outer >= level {
        return None;
    }
    for i in (0..steps).rev() {
        let s = i as f64 * ds;
        let v = at(s);
        if v >= level {
            return Some(s + ds * (v - level) / (v - outer));
        }
        outer = v;
    }
    None
}

/// Interface positions of one state along the given rays.
pub fn record_interface(state: &CauchyState, center: [f64; 2], angles: &[f64], level: f64) -> InterfaceRecord {
    let g = &state.grid;
    let margin = BOUNDARY_CELLS * g.h();
    let mut near_boundary = false;
    let mut width: Option<f64> = None;
    let radii = angles
        .iter()
        .map(|&a| {
            let r = ray_crossing(state, center, a, level);
            if let Some(r) = r {
                if ray_extent(g, center, a) - r < margin {
                    near_boundary = true;
                }
            }
            if let (Some(hi), Some(lo)) = (ray_crossing(state, center, a, 0.95), ray_crossing(state, center, a, 0.05)) {
                width = Some(width.map_or(lo - hi, |w: f64| w.max(lo - hi)));
            }
            r
        })
        .collect();
    InterfaceRecord { t: state.t, radii, width, near_boundary }
}

/// Level-set track of a sequence of states.
pub fn track_interface(states: &[CauchyState], center: [f64; 2], level: f64, k: usize) -> InterfaceTrack {
    let dim = states.first().map_or(2, |s| s.grid.dim);
    let angles = ray_angles(dim, k);
    let records = states.iter().map(|s| record_interface(s, center, &angles, level)).collect();
    InterfaceTrack { center, angles, level, records }
}

/// Evolves `state` to `t_end`, recording the interface every `record_every` time units.
pub fn evolve_tracked(
    stepper: &Stepper,
    state: &mut CauchyState,
    t_end: f64,
    record_every: f64,
    center: [f64; 2],
    level: f64,
    k: usize,
) -> Result<InterfaceTrack, CauchyError> {
    let angles = ray_angles(state.grid.dim, k);
    let stride = ((record_every / stepper.dt).round() as usize).max(1);
    let total = ((t_end - state.t) / stepper.dt).round().max(0.0) as usize;
    let mut records = vec![record_interface(state, center, &angles, level)];
    for s in 1..=total {
        stepper.step(state)?;
        if s % stride == 0 || s == total {
            records.push(record_interface(state, center, &angles, level));
        }
    }
    Ok(InterfaceTrack { center, angles, level, records })
}

impl InterfaceTrack {
    /// Point of ray `j` at record `r`.
    fn point(&self, r: &InterfaceRecord, j: usize) -> [f64; 2] {
        let rad = r.radii[j].unwrap_or(f64::NAN);
        [self.center[0] + rad * self.angles[j].cos(), self.center[1] + rad * self.angles[j].sin()]
    }

    /// Ray-sampled `d(Γ_a, Γ_b)`.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (ra, rb) = (&self.records[a], &self.records[b]);
        let mut best = f64::INFINITY;
        for j in 0..self.angles.len() {
            let p = self.point(ra, j);
            for k in 0..self.angles.len() {
                let q = self.point(rb, k);
                best = best.min(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedReport {
    pub window: (f64, f64),
    pub records_used: usize,
    /// Least-squares slope of `r_t(φ_k)` per ray.
    pub ray_speeds: Vec<f64>,
    /// Least-squares slope of the min-pair distance against the time gap.
    pub min_pair_rate: f64,
    pub max_width: f64,
}

impl SpeedReport {
    pub fn min_ray_speed(&self) -> f64 {
        self.ray_speeds.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_ray_speed(&self) -> f64 {
        self.ray_speeds.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Radial and min-pair spreading rates on `[t1, t2]`.
pub fn estimate_speeds(track: &InterfaceTrack, t1: f64, t2: f64) -> Result<SpeedReport, CauchyError> {
    let tol = 1e-9 * t2.abs().max(1.0);
    let used: Vec<usize> = (0..track.records.len())
        .filter(|&i| {
            let r = &track.records[i];
            r.t >= t1 - tol && r.t <= t2 + tol && !r.near_boundary && r.radii.iter().all(Option::is_some)
        })
        .collect();
    if used.len() < 10 {
        return Err(CauchyError::InsufficientWindow(format!(
            "{} usable records in [{t1}, {t2}], need 10",
            used.len()
        )));
    }
    let ray_speeds = (0..track.angles.len())
        .map(|j| {
            let pts: Vec<(f64, f64)> =
                used.iter().map(|&i| (track.records[i].t, track.records[i].radii[j].unwrap())).collect();
            linear_regression(&pts).0
        })
        .collect();
    let min_gap = 0.5 * (t2 - t1);
    let mut pairs = Vec::new();
    for (p, &a) in used.iter().enumerate() {
        for &b in &used[p + 1..] {
            let gap = track.records[b].t - track.records[a].t;
            if gap >= min_gap - tol {
                pairs.push((gap, track.distance(a, b)));
            }
        }
    }
    let distinct_gaps = pairs.iter().any(|p| (p.0 - pairs[0].0).abs() > tol);
    if !distinct_gaps {
        return Err(CauchyError::InsufficientWindow("min-pair fit needs at least two distinct time gaps".into()));
    }
    let min_pair_rate = linear_regression(&pairs).0;
    let max_width = used.iter().filter_map(|&i| track.records[i].width).fold(0.0, f64::max);
    Ok(SpeedReport { window: (t1, t2), records_used: used.len(), ray_speeds, min_pair_rate, max_width })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpreadVerdict {
    pub lower: f64,
    pub upper: f64,
    pub tol: f64,
    pub pass: bool,
}

/// `min c_e - tol ≤ every rate ≤ max c_e + tol`.
pub fn sandwich_verdict(report: &SpeedReport, c_min: f64, c_max: f64, tol: f64) -> SpreadVerdict {
    let (lower, upper) = (c_min - tol, c_max + tol);
    let inside = |v: f64| v >= lower && v <= upper;
    let pass = report.ray_speeds.iter().all(|&v| inside(v)) && inside(report.min_pair_rate);
    SpreadVerdict { lower, upper, tol, pass }
}

/// `max |u(t*, x) - u(0, x - k)|` over the central half of the box, with
/// `t* = (k·e)/c` and `u(0, x) = U(x·e, x)`.
pub fn check_pulsating_relation(
    front: &PulsatingFront,
    model: &ReactionModel,
    k: &[i32],
    grid: &BoxGrid,
    dt: f64,
) -> Result<f64, CauchyError> {
    check_box_model(grid, model)?;
    if k.len() != grid.dim || front.e.len() != grid.dim {
        return Err(CauchyError::DimensionMismatch(format!(
            "k has {} components, front {}, box {}",
            k.len(),
            front.e.len(),
            grid.dim
        )));
    }
    let ke: f64 = k.iter().zip(&front.e).map(|(&a, b)| a as f64 * b).sum();
    let t_star = if ke == 0.0 { 0.0 } else { ke / front.c };
    if t_star < 0.0 {
        return Err(CauchyError::NegativeTime(t_star));
    }
    let interp = ProfileInterp::new(&front.profile);
    let e = front.e.clone();
    let u0 = |x: &[f64]| {
        let xi: f64 = x.iter().zip(&e).map(|(a, b)| a * b).sum();
        interp.eval(xi, x)
    };
    let mut state = CauchyState::from_fn(grid, |x| u0(&x[..grid.dim]));
    if t_star > 0.0 {
        let steps = (t_star / dt).ceil() as usize;
        let stepper = Stepper::new(grid, model, t_star / steps as f64)?;
        stepper.advance(&mut state, steps)?;
    }
    let half = 0.5 * grid.half_width;
    let mut defect: f64 = 0.0;
    for i in 0..grid.len() {
        let p = grid.point(i);
        let x = &p[..grid.dim];
        if x.iter().any(|v| v.abs() > half) {
            continue;
        }
        let shifted: Vec<f64> = x.iter().zip(k).map(|(a, &b)| a - b as f64).collect();
        defect = defect.max((state.u[i] - u0(&shifted)).abs());
    }
    Ok(defect)
}
