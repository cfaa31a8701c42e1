//! Sub/supersolution barriers assembled from a direction sweep, and
//! finite-difference certificates of the parabolic inequality
//! `L v = v_t - Δv - f(x,v)`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::cylinder::{xi_derivative, ProfileField, ProfileInterp, SliceOps};
use crate::medium::ReactionModel;
use crate::spline::PeriodicCardinal;
use crate::sweep::SpeedSweep;

/// Time step of the centred difference in `v_t`.
pub const CHECK_DT: f64 = 1e-3;
/// Safety factor on the finite-difference norm estimates of the profile family.
const NORM_SAFETY: f64 = 2.0;
/// Safety factor on the calibrated discretization error.
const TOL_SAFETY: f64 = 10.0;
/// Buffer around the clamp locus, in grid cells.
const CLAMP_BUFFER: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error("glue width xi_eps = {0} below 2")]
    GlueTooNarrow(f64),
    #[error("constants infeasible: {0}")]
    ConstantsInfeasible(String),
    #[error("time {t} outside the barrier domain [{lo}, {hi}]")]
    OutsideDomain { t: f64, lo: f64, hi: f64 },
    #[error("sample at t = {t}, |x| = {r} lies within the clamp buffer")]
    RegionTouchesClamp { t: f64, r: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Quintic smoothstep `h_ε` rising from 0 at `-ξ_ε - C` to 1 at `-C`, or
/// its mirror image falling from 1 at `C` to 0 at `C + ξ_ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Glue {
    pub xi_eps: f64,
    pub c: f64,
    pub mirrored: bool,
}

impl Glue {
    pub fn new(xi_eps: f64, c: f64, mirrored: bool) -> Result<Self, BarrierError> {
        if !(xi_eps >= 2.0) {
            return Err(BarrierError::GlueTooNarrow(xi_eps));
        }
        Ok(Self { xi_eps, c, mirrored })
    }

    /// `(h, h', h'')` at `ξ`.
    pub fn eval(&self, xi: f64) -> (f64, f64, f64) {
        let (arg, sign) = if self.mirrored { (-xi, -1.0) } else { (xi, 1.0) };
        let s = (arg + self.xi_eps + self.c) / self.xi_eps;
        if s <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        if s >= 1.0 {
            return (1.0, 0.0, 0.0);
        }
        let w = self.xi_eps;
        let h = s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
        let d = 30.0 * s * s * (1.0 - s) * (1.0 - s) / w;
        let dd = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (w * w);
        (h, sign * d, dd)
    }

    pub fn max_slope(&self) -> f64 {
        15.0 / (8.0 * self.xi_eps)
    }

    pub fn max_curvature(&self) -> f64 {
        10.0 * 3f64.sqrt() / 3.0 / (self.xi_eps * self.xi_eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierKind {
    Subsolution,
    Supersolution,
}

/// Constants of the barrier constructions, all derived from measured sweep data.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSpec {
    pub kind: BarrierKind,
    pub eps: f64,
    pub delta: f64,
    pub delta_eps: f64,
    /// Uniform abscissa with `U ≥ 1 - δ` left of `-C` and `U ≤ δ` right of `C`.
    pub c: f64,
    /// Same with `δ_ε` in place of `δ`.
    pub c_prime: f64,
    pub c_eps: f64,
    pub xi_eps: f64,
    /// `min -∂_ξU` over `[-C, C]` and all directions.
    pub k: f64,
    pub gamma: f64,
    pub lipschitz_l: f64,
    pub c_low: f64,
    pub c_high: f64,
    /// Start time: `T` for the subsolution, `τ_ε` for the supersolution.
    pub t_start: f64,
    /// Collar `B` (or `B_ε`).
    pub b: f64,
    /// Bubble radius `R` the barrier is built for.
    pub radius: f64,
    /// End of the time domain (`+∞` for the subsolution).
    pub t_end: f64,
    /// Smallest ξ where some profile drops to `δ_ε`, and largest ξ where some profile still exceeds `1 - δ_ε`.
    pub clamp_band: (f64, f64),
    /// Sup-norm estimates `(‖U'‖, ‖∂_ξU'‖, Σ‖∂_{y_i}U'‖, ‖U''‖)` with the safety factor applied.
    pub family_norms: [f64; 4],
}

/// Measured profile quantities over a sweep.
struct SweepMeasures {
    c: f64,
    c_prime: f64,
    k: f64,
    grad_sup: f64,
    clamp_band: (f64, f64),
    norms: [f64; 4],
}

/// Largest |ξ| beyond which every profile is within `level` of its limits.
fn level_abscissa(u: &ProfileField, level: f64) -> f64 {
    let g = &u.grid;
    let (mins, maxs) = (u.slice_min(), u.slice_max());
    let mut left = -g.half_length;
    for i in 0..g.n_xi {
        if mins[i] < 1.0 - level {
            left = g.xi(i);
            break;
        }
    }
    let mut right = g.half_length;
    for i in (0..g.n_xi).rev() {
        if maxs[i] > level {
            right = g.xi(i);
            break;
        }
    }
    (-left).max(right) + g.h()
}

fn sup_diff(a: &[f64], b: &[f64], scale: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) * scale
}

fn y_gradients(u: &ProfileField) -> Vec<Vec<f64>> {
    let g = &u.grid;
    let ops = SliceOps::new(g);
    let m = g.m();
    (0..g.dim)
        .map(|d| {
            let mut out = vec![0.0; u.values.len()];
            if g.n_y > 1 {
                for i in 0..g.n_xi {
                    ops.partial(d, u.slice(i), &mut out[i * m..(i + 1) * m]);
                }
            }
            out
        })
        .collect()
}

fn measure_sweep(sweep: &SpeedSweep, delta: f64, delta_eps_of_k: impl Fn(f64) -> f64) -> SweepMeasures {
    let fronts: Vec<&ProfileField> = sweep.entries.iter().map(|e| &e.front.profile).collect();
    let c = fronts.iter().map(|u| level_abscissa(u, delta)).fold(0.0, f64::max);
    let derivs: Vec<Vec<f64>> = fronts.iter().map(|u| xi_derivative(u)).collect();
    let mut k = f64::INFINITY;
    let mut grad_sup: f64 = 0.0;
    let grads: Vec<Vec<Vec<f64>>> = fronts.iter().map(|u| y_gradients(u)).collect();
    for (j, u) in fronts.iter().enumerate() {
        let g = &u.grid;
        let m = g.m();
        for i in 1..g.n_xi - 1 {
            let xi = g.xi(i);
            for l in 0..m {
                let idx = i * m + l;
                let dxi = derivs[j][idx];
                if xi.abs() <= c {
                    k = k.min(-dxi);
                }
                let gy: f64 = grads[j].iter().map(|gd| gd[idx] * gd[idx]).sum::<f64>().sqrt();
                grad_sup = grad_sup.max(dxi.abs() + gy);
            }
        }
    }
    let delta_eps = delta_eps_of_k(k);
    let c_prime = fronts.iter().map(|u| level_abscissa(u, delta_eps)).fold(0.0, f64::max);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for u in &fronts {
        let g = &u.grid;
        let (mins, maxs) = (u.slice_min(), u.slice_max());
        if let Some(i) = (0..g.n_xi).find(|&i| mins[i] <= delta_eps) {
            lo = lo.min(g.xi(i));
        }
        if let Some(i) = (0..g.n_xi).rev().find(|&i| maxs[i] >= 1.0 - delta_eps) {
            hi = hi.max(g.xi(i));
        }
    }
    // finite-difference norms of the direction derivatives across adjacent entries
    let n = fronts.len();
    let dphi = 2.0 * PI / n as f64;
    let mut norms = [0.0f64; 4];
    for j in 0..n {
        let (p, q) = ((j + n - 1) % n, (j + 1) % n);
        norms[0] = norms[0].max(sup_diff(&fronts[q].values, &fronts[p].values, 0.5 / dphi));
        norms[1] = norms[1].max(sup_diff(&derivs[q], &derivs[p], 0.5 / dphi));
        let gy: f64 = (0..grads[j].len()).map(|d| sup_diff(&grads[q][d], &grads[p][d], 0.5 / dphi)).sum();
        norms[2] = norms[2].max(gy);
        let second = fronts[q]
            .values
            .iter()
            .zip(&fronts[j].values)
            .zip(&fronts[p].values)
            .map(|((a, b), c)| (a - 2.0 * b + c).abs())
            .fold(0.0, f64::max)
            / (dphi * dphi);
        norms[3] = norms[3].max(second);
    }
    norms.iter_mut().for_each(|v| *v *= NORM_SAFETY);
    SweepMeasures { c, c_prime, k, grad_sup, clamp_band: (lo, hi), norms }
}

/// Time for `w' = w(1-w)(w-θ*)` to move from `w0` to `target`, by RK4.
fn ode_time(theta: f64, w0: f64, target: f64) -> f64 {
    let f = |w: f64| w * (1.0 - w) * (w - theta);
    let dt = 1e-3;
    let (mut w, mut t) = (w0, 0.0);
    let rising = target > w0;
    while (rising && w < target) || (!rising && w > target) {
        let k1 = f(w);
        let k2 = f(w + 0.5 * dt * k1);
        let k3 = f(w + 0.5 * dt * k2);
        let k4 = f(w + dt * k3);
        w += dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        t += dt;
        if t > 1e7 {
            break;
        }
    }
    t
}

/// Collar with `e^{LT} (4πT)^{-N/2} ∫_{|z|≥B} e^{-|z|²/4T} dz ≤ δ_ε/2`.
fn collar(lipschitz_l: f64, t: f64, delta_eps: f64) -> f64 {
    (4.0 * t * (lipschitz_l * t + (2.0 / delta_eps).ln())).sqrt()
}

/// Derives the barrier constants for speed offset `eps` (`α` or `β` is the
/// initial level of the bubble the barrier is compared with).
pub fn derive_constants(
    sweep: &SpeedSweep,
    model: &ReactionModel,
    eps: f64,
    kind: BarrierKind,
    level: f64,
) -> Result<BarrierSpec, BarrierError> {
    if sweep.entries.len() < 4 {
        return Err(BarrierError::Invalid("sweep needs at least 4 directions".into()));
    }
    if !(eps > 0.0) {
        return Err(BarrierError::Invalid(format!("eps must be positive, got {eps}")));
    }
    let n_dim = model.dim as f64;
    let delta = model.sigma / 2.0;
    let (gamma, ll) = (model.gamma, model.lipschitz_l);
    let delta_eps_of_k = |k: f64| delta.min(eps * k / (8.0 * ll));
    let meas = measure_sweep(sweep, delta, delta_eps_of_k);
    if !(meas.k >= 1e-6) {
        return Err(BarrierError::ConstantsInfeasible(format!("measured k = {:.3e} below 1e-6", meas.k)));
    }
    let delta_eps = delta_eps_of_k(meas.k);
    let target = (gamma * delta_eps / 3.0).min(eps * meas.k / 8.0);
    // N√N z (3a + 2b + (2/N) s) + N² z² d ≤ target with z = 1/C_ε
    let [a, b, s, d] = meas.norms;
    let lin = n_dim * n_dim.sqrt() * (3.0 * a + 2.0 * b + 2.0 / n_dim * s);
    let quad = n_dim * n_dim * d;
    let z = if quad > 0.0 {
        (-lin + (lin * lin + 4.0 * quad * target).sqrt()) / (2.0 * quad)
    } else if lin > 0.0 {
        target / lin
    } else {
        f64::INFINITY
    };
    let c_eps = 3f64.max(4.0 * (n_dim - 1.0) / eps).max(1.0 / z);
    let third = gamma * delta_eps / 3.0;
    let xi_eps = 2f64
        .max(2.0 * meas.grad_sup * 15.0 / 8.0 / third)
        .max((delta * 10.0 * 3f64.sqrt() / 3.0 / third).sqrt());
    let (c_low, c_high) = (sweep.min_speed(), sweep.max_speed());
    let (t_start, b, radius, t_end) = match kind {
        BarrierKind::Subsolution => {
            if !(level > model.theta_max && level < 1.0) {
                return Err(BarrierError::Invalid(format!("beta = {level} not in (max theta, 1)")));
            }
            let t = ode_time(model.theta_max, level, 1.0 - delta_eps / 2.0);
            let b = collar(ll, t, delta_eps);
            (t, b, xi_eps + meas.c + c_eps + meas.c_prime + b, f64::INFINITY)
        }
        BarrierKind::Supersolution => {
            if !(level > 0.0 && level < model.theta_min) {
                return Err(BarrierError::Invalid(format!("alpha = {level} not in (0, min theta)")));
            }
            let tau = ode_time(model.theta_min, level, delta_eps / 2.0);
            let b = collar(ll, tau, delta_eps);
            let t_eps = tau.max(2.0 * (meas.c + xi_eps + b + meas.c_prime) / eps);
            let speed = c_high + eps;
            let r = b.max(speed * t_eps).max(2.0 * speed * (b + meas.c + xi_eps + meas.c_prime + c_eps) / eps);
            (tau, b, r, r / speed)
        }
    };
    Ok(BarrierSpec {
        kind,
        eps,
        delta,
        delta_eps,
        c: meas.c,
        c_prime: meas.c_prime,
        c_eps,
        xi_eps,
        k: meas.k,
        gamma,
        lipschitz_l: ll,
        c_low,
        c_high,
        t_start,
        b,
        radius,
        t_end,
        clamp_band: meas.clamp_band,
        family_norms: meas.norms,
    })
}

/// Profiles of a sweep interpolated in direction (periodic cubic spline in
/// angle) and in `(ξ, y)`.
pub struct DirectionalProfiles {
    cardinal: PeriodicCardinal,
    profiles: Vec<ProfileInterp>,
}

impl DirectionalProfiles {
    pub fn new(sweep: &SpeedSweep) -> Self {
        let n = sweep.entries.len();
        Self {
            cardinal: PeriodicCardinal::new(n, 2.0 * PI),
            profiles: sweep.entries.iter().map(|e| ProfileInterp::new(&e.front.profile)).collect(),
        }
    }

    /// `U_e(ξ, y)` for `e = (cos φ, sin φ)`.
    pub fn eval(&self, phi: f64, xi: f64, y: &[f64]) -> f64 {
        let wy = self.profiles[0].weights(y);
        self.cardinal
            .weights(phi)
            .iter()
            .zip(&self.profiles)
            .filter(|(w, _)| w.abs() > 1e-15)
            .map(|(w, p)| w * p.eval_weighted(xi, &wy))
            .sum()
    }
}

/// Barrier field evaluator.
pub struct BarrierField {
    pub spec: BarrierSpec,
    glue: Glue,
    profiles: DirectionalProfiles,
    /// Sign of the `δ_ε` offset; `-1` gives the sign-flip control.
    offset_sign: f64,
}

impl BarrierField {
    /// Subsolution `max{U_x̂(ζ) h(ζ) + (1-δ)(1-h(ζ)) - δ_ε, 0}`.
    pub fn subsolution(sweep: &SpeedSweep, spec: &BarrierSpec) -> Result<Self, BarrierError> {
        Self::build(sweep, spec, BarrierKind::Subsolution)
    }

    /// Supersolution `min{U_x̃(ζ̄) h(ζ̄) + δ(1-h(ζ̄)) + δ_ε, 1}`.
    pub fn supersolution(sweep: &SpeedSweep, spec: &BarrierSpec) -> Result<Self, BarrierError> {
        Self::build(sweep, spec, BarrierKind::Supersolution)
    }

    fn build(sweep: &SpeedSweep, spec: &BarrierSpec, kind: BarrierKind) -> Result<Self, BarrierError> {
        if spec.kind != kind {
            return Err(BarrierError::Invalid(format!("spec built for {:?}", spec.kind)));
        }
        if sweep.entries.len() < 32 {
            return Err(BarrierError::Invalid(format!("need at least 32 directions, got {}", sweep.entries.len())));
        }
        let glue = Glue::new(spec.xi_eps, spec.c, kind == BarrierKind::Supersolution)?;
        Ok(Self { spec: spec.clone(), glue, profiles: DirectionalProfiles::new(sweep), offset_sign: 1.0 })
    }

    /// Same field with `δ_ε` replaced by `-δ_ε`.
    pub fn sign_flipped(mut self) -> Self {
        self.offset_sign = -self.offset_sign;
        self
    }

    pub fn kind(&self) -> BarrierKind {
        self.spec.kind
    }

    fn check_time(&self, t: f64) -> Result<(), BarrierError> {
        let (lo, hi) = (self.spec.t_start, self.spec.t_end);
        if t < lo || t > hi {
            return Err(BarrierError::OutsideDomain { t, lo, hi });
        }
        Ok(())
    }

    /// Moving coordinate `ζ(t,x)` (or `ζ̄`).
    pub fn zeta(&self, t: f64, r: f64) -> f64 {
        let s = &self.spec;
        match s.kind {
            BarrierKind::Subsolution => r - (s.c_low - s.eps / 2.0) * (t - s.t_start) - s.xi_eps - s.c - s.c_eps,
            BarrierKind::Supersolution => -r - (s.c_high + s.eps / 2.0) * (t - s.t_start) + s.radius - s.b - s.c_prime,
        }
    }

    /// Barrier formula before the clamp.
    pub fn unclamped(&self, t: f64, x: [f64; 2]) -> Result<f64, BarrierError> {
        self.check_time(t)?;
        let s = &self.spec;
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let z = self.zeta(t, r);
        let (h, _, _) = self.glue.eval(z);
        let off = self.offset_sign * s.delta_eps;
        let phi = match s.kind {
            BarrierKind::Subsolution => x[1].atan2(x[0]),
            BarrierKind::Supersolution => (-x[1]).atan2(-x[0]),
        };
        let u = if h > 0.0 { self.profiles.eval(phi, z, &x) } else { 0.0 };
        Ok(match s.kind {
            BarrierKind::Subsolution => u * h + (1.0 - s.delta) * (1.0 - h) - off,
            BarrierKind::Supersolution => u * h + s.delta * (1.0 - h) + off,
        })
    }

    pub fn value(&self, t: f64, x: [f64; 2]) -> Result<f64, BarrierError> {
        let v = self.unclamped(t, x)?;
        Ok(match self.spec.kind {
            BarrierKind::Subsolution => v.max(0.0),
            BarrierKind::Supersolution => v.min(1.0),
        })
    }

    fn clamped(&self, v: f64) -> bool {
        match self.spec.kind {
            BarrierKind::Subsolution => v <= 0.0,
            BarrierKind::Supersolution => v >= 1.0,
        }
    }
}

impl BarrierField {
    /// Front window (profile active, away from the clamp) plus glue window
    /// over `[t_start, t_start + duration]`.
    pub fn standard_region(&self, duration: f64, nt: usize, nr_front: usize, nr_glue: usize, n_phi: usize) -> Result<Region, BarrierError> {
        let s = &self.spec;
        let (t0, t1) = (s.t_start, (s.t_start + duration).min(s.t_end));
        let (front, glue) = match s.kind {
            BarrierKind::Subsolution => (
                Region::in_zeta(self, t0, t1, nt, -s.c - 2.0, s.clamp_band.0 - 1.0, nr_front, n_phi),
                Region::in_zeta(self, t0, t1, nt, -s.c - s.xi_eps - 2.0, -s.c, nr_glue, n_phi),
            ),
            BarrierKind::Supersolution => (
                Region::in_zeta(self, t0, t1, nt, s.clamp_band.1 + 1.0, s.c + 2.0, nr_front, n_phi),
                Region::in_zeta(self, t0, t1, nt, s.c, s.c + s.xi_eps + 2.0, nr_glue, n_phi),
            ),
        };
        front.union(&glue)
    }
}

/// Polar sample lattice `[t0, t1] × {radii} × {angles}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub t0: f64,
    pub t1: f64,
    pub nt: usize,
    pub radii: Vec<f64>,
    pub n_phi: usize,
}

impl Region {
    /// Radii covering `ζ ∈ [z0, z1]` over the whole time window, `nr` samples.
    pub fn in_zeta(field: &BarrierField, t0: f64, t1: f64, nt: usize, z0: f64, z1: f64, nr: usize, n_phi: usize) -> Self {
        // ζ is monotone in r and t; take the radii valid at both ends of the window
        let s = &field.spec;
        let r_of = |t: f64, z: f64| match s.kind {
            BarrierKind::Subsolution => z + (s.c_low - s.eps / 2.0) * (t - s.t_start) + s.xi_eps + s.c + s.c_eps,
            BarrierKind::Supersolution => -z - (s.c_high + s.eps / 2.0) * (t - s.t_start) + s.radius - s.b - s.c_prime,
        };
        let ends = [r_of(t0, z0), r_of(t0, z1), r_of(t1, z0), r_of(t1, z1)];
        let (lo, hi) = match s.kind {
            BarrierKind::Subsolution => (ends[2].max(ends[0]), ends[1].min(ends[3])),
            BarrierKind::Supersolution => (ends[1].max(ends[3]), ends[0].min(ends[2])),
        };
        let radii = if nr < 2 || hi <= lo {
            vec![0.5 * (lo + hi)]
        } else {
            (0..nr).map(|i| lo + (hi - lo) * i as f64 / (nr - 1) as f64).collect()
        };
        Self { t0, t1, nt, radii, n_phi }
    }

    /// Same window with the radii of both regions.
    pub fn union(mut self, other: &Region) -> Result<Self, BarrierError> {
        if self.t0 != other.t0 || self.t1 != other.t1 || self.nt != other.nt || self.n_phi != other.n_phi {
            return Err(BarrierError::Invalid("regions differ in time window or angles".into()));
        }
        self.radii.extend_from_slice(&other.radii);
        self.radii.sort_by(f64::total_cmp);
        self.radii.dedup();
        Ok(self)
    }

    fn times(&self) -> Vec<f64> {
        if self.nt < 2 {
            return vec![self.t0];
        }
        (0..self.nt).map(|i| self.t0 + (self.t1 - self.t0) * i as f64 / (self.nt - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub kind: BarrierKind,
    pub samples: usize,
    pub skipped_clamped: usize,
    /// Largest `L v` (subsolution) or `-L ω̄` (supersolution) over the samples.
    pub max_violation: f64,
    pub tol_disc: f64,
    pub pass: bool,
}

impl Certificate {
    pub fn report(&self, region: &Region) -> String {
        format!(
            "kind = {:?}\nwindow = [{}, {}]\nradii = [{}, {}]\nsamples = {}\nskipped_clamped = {}\nmax_violation = {}\ntol_disc = {}\nverdict = {}\n",
            self.kind,
            crate::io::fmt9(region.t0),
            crate::io::fmt9(region.t1),
            crate::io::fmt9(region.radii.first().cloned().unwrap_or(0.0)),
            crate::io::fmt9(region.radii.last().cloned().unwrap_or(0.0)),
            self.samples,
            self.skipped_clamped,
            crate::io::fmt9(self.max_violation),
            crate::io::fmt9(self.tol_disc),
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Centred-difference `L v` at one point; `None` if any stencil value is clamped.
fn parabolic_operator(
    field: &BarrierField,
    model: &ReactionModel,
    t: f64,
    x: [f64; 2],
    dx: f64,
) -> Result<Option<f64>, BarrierError> {
    let v = field.unclamped(t, x)?;
    let mut stencil = vec![v];
    // centred in time, one-sided second order at the ends of the time domain
    let (lo, hi) = (field.spec.t_start, field.spec.t_end);
    let vt = if t - CHECK_DT < lo {
        let (a, b) = (field.unclamped(t + CHECK_DT, x)?, field.unclamped(t + 2.0 * CHECK_DT, x)?);
        stencil.extend([a, b]);
        (-3.0 * v + 4.0 * a - b) / (2.0 * CHECK_DT)
    } else if t + CHECK_DT > hi {
        let (a, b) = (field.unclamped(t - CHECK_DT, x)?, field.unclamped(t - 2.0 * CHECK_DT, x)?);
        stencil.extend([a, b]);
        (3.0 * v - 4.0 * a + b) / (2.0 * CHECK_DT)
    } else {
        let (a, b) = (field.unclamped(t + CHECK_DT, x)?, field.unclamped(t - CHECK_DT, x)?);
        stencil.extend([a, b]);
        (a - b) / (2.0 * CHECK_DT)
    };
    let mut lap = 0.0;
    for d in 0..2 {
        let mut xp = x;
        let mut xm = x;
        xp[d] += dx;
        xm[d] -= dx;
        let (a, b) = (field.unclamped(t, xp)?, field.unclamped(t, xm)?);
        stencil.push(a);
        stencil.push(b);
        lap += (a - 2.0 * v + b) / (dx * dx);
    }
    if stencil.iter().all(|&s| field.clamped(s)) {
        return Ok(None);
    }
    if stencil.iter().any(|&s| field.clamped(s)) {
        return Err(BarrierError::RegionTouchesClamp { t, r: (x[0] * x[0] + x[1] * x[1]).sqrt() });
    }
    Ok(Some(vt - lap - model.eval_f(&x, v)))
}

/// Max signed violation of the sub/supersolution inequality on `region`;
/// passes when it is at most `tol_disc`.
pub fn check_parabolic_inequality(
    field: &BarrierField,
    model: &ReactionModel,
    region: &Region,
    dx: f64,
    tol_disc: f64,
) -> Result<Certificate, BarrierError> {
    if model.dim != 2 {
        return Err(BarrierError::Invalid("barrier checks need a two-dimensional medium".into()));
    }
    let orientation = match field.kind() {
        BarrierKind::Subsolution => 1.0,
        BarrierKind::Supersolution => -1.0,
    };
    let buffer = CLAMP_BUFFER * dx;
    let mut max_violation = f64::NEG_INFINITY;
    let (mut samples, mut skipped) = (0, 0);
    for t in region.times() {
        for &r in &region.radii {
            for j in 0..region.n_phi {
                // irrational angular offset keeps samples off the lattice axes
                let phi = 2.0 * PI * (j as f64 + 0.5 * (5f64.sqrt() - 1.0)) / region.n_phi as f64;
                let x = [r * phi.cos(), r * phi.sin()];
                let near = [r - buffer, r + buffer].iter().any(|&rr| {
                    let p = [rr * phi.cos(), rr * phi.sin()];
                    field.unclamped(t, p).map(|v| field.clamped(v)).unwrap_or(false)
                });
                match parabolic_operator(field, model, t, x, dx)? {
                    None => skipped += 1,
                    Some(_) if near => return Err(BarrierError::RegionTouchesClamp { t, r }),
                    Some(lv) => {
                        samples += 1;
                        max_violation = max_violation.max(orientation * lv);
                    }
                }
            }
        }
    }
    if samples == 0 {
        return Err(BarrierError::Invalid("no unclamped samples in the region".into()));
    }
    Ok(Certificate {
        kind: field.kind(),
        samples,
        skipped_clamped: skipped,
        max_violation,
        tol_disc,
        pass: max_violation <= tol_disc,
    })
}

/// Exponential tail `ω = σ exp(-μ(x·e - c t - A))` with `μ = √γ`; the linear
/// functional `ω_t - Δω + γω` equals `μ c ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpTail {
    pub sigma: f64,
    pub mu: f64,
    pub c: f64,
    pub e: [f64; 2],
    pub shift: f64,
    pub gamma: f64,
}

impl ExpTail {
    pub fn new(model: &ReactionModel, c: f64, e: [f64; 2], shift: f64) -> Self {
        Self { sigma: model.sigma, mu: model.gamma.sqrt(), c, e, shift, gamma: model.gamma }
    }

    pub fn value(&self, t: f64, x: [f64; 2]) -> f64 {
        let s = x[0] * self.e[0] + x[1] * self.e[1] - self.c * t - self.shift;
        self.sigma * (-self.mu * s).exp()
    }

    /// `ω_t - Δω + γω` by centred differences.
    pub fn functional_fd(&self, t: f64, x: [f64; 2], dx: f64) -> f64 {
        let v = self.value(t, x);
        let vt = (self.value(t + CHECK_DT, x) - self.value(t - CHECK_DT, x)) / (2.0 * CHECK_DT);
        let mut lap = 0.0;
        for d in 0..2 {
            let (mut xp, mut xm) = (x, x);
            xp[d] += dx;
            xm[d] -= dx;
            lap += (self.value(t, xp) - 2.0 * v + self.value(t, xm)) / (dx * dx);
        }
        vt - lap + self.gamma * v
    }

    pub fn functional_exact(&self, t: f64, x: [f64; 2]) -> f64 {
        self.mu * self.c * self.value(t, x)
    }
}

/// Result of the exp-tail calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub max_error: f64,
    pub min_exact: f64,
    pub k_tol: f64,
    pub tol_disc: f64,
}

/// Measures the finite-difference error of the exp-tail functional on a
/// lattice and fixes `tol_disc = K_tol (dx² + Δt)`.
pub fn calibrate_tolerance(tail: &ExpTail, dx: f64) -> Calibration {
    let mut max_error: f64 = 0.0;
    let mut min_exact = f64::INFINITY;
    for it in 0..5 {
        let t = it as f64;
        for ix in 0..21 {
            for iy in 0..5 {
                let x = [-5.0 + 0.5 * ix as f64, 0.37 * iy as f64];
                let exact = tail.functional_exact(t, x);
                max_error = max_error.max((tail.functional_fd(t, x, dx) - exact).abs());
                min_exact = min_exact.min(exact);
            }
        }
    }
    let scale = dx * dx + CHECK_DT;
    let k_tol = TOL_SAFETY * max_error / scale;
    Calibration { max_error, min_exact, k_tol, tol_disc: k_tol * scale }
}
