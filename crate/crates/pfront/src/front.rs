//! Pulsating front solver and per-front diagnostics: normalization, the
//! speed/mass identity, exponential decay fits and the directional speed
//! derivative.

use std::f64::consts::SQRT_2;

use thiserror::Error;

use crate::cylinder::{
    check_direction, half_line_integral, residual_with, theta_on_slice, xi_derivative, CylinderError, CylinderGrid,
    ProfileField, SliceOps,
};
use crate::linear::{gmres, norm2, phase_weights, BorderedFactor, Linearization};
use crate::medium::ReactionModel;
use crate::spline::UniformSpline;

/// Below this |mass integral| the medium is treated as near-stationary.
pub const NEAR_STATIONARY_MASS: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum FrontError {
    #[error(transparent)]
    Cylinder(#[from] CylinderError),
    #[error("near-stationary medium: |mass integral| = {0:.3e}; set force to solve anyway")]
    NearStationary(f64),
    #[error("Newton did not converge after {iterations} iterations (residual {residual:.3e}): {reason}")]
    NonConvergence { iterations: usize, residual: f64, reason: String },
    #[error("converged profile is not monotone: forward difference {value:.3e} at xi-node {node}")]
    NonMonotoneProfile { node: usize, value: f64 },
    #[error("normalization unreachable: total integral of U^2 is {0:.6} < 1 (increase L)")]
    TargetUnreachable(f64),
    #[error("decay fit window on the {side} side has {nodes} nodes, need 20 (increase L)")]
    WindowTooShort { side: &'static str, nodes: usize },
    #[error("decay rate {side} = {rate:.5} below sqrt(gamma) - 0.02 = {bound:.5}")]
    DecayBelowBound { side: &'static str, rate: f64, bound: f64 },
    #[error("adjoint pairing |<psi, dU>| = {0:.3e} below 1e-10")]
    AdjointDegenerate(f64),
}

/// Newton–Krylov settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub min_step: f64,
    pub krylov_rtol: f64,
    pub krylov_restart: usize,
    /// Krylov iterations after which the preconditioner is refactored.
    pub refactor_after: usize,
    /// Refactor before a solve when the previous one needed more Krylov iterations than this.
    pub stale_limit: usize,
    pub force: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            min_step: (2.0f64).powi(-20),
            krylov_rtol: 1e-11,
            krylov_restart: 40,
            refactor_after: 30,
            stale_limit: 15,
            force: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PulsatingFront {
    pub e: Vec<f64>,
    pub c: f64,
    pub profile: ProfileField,
    pub model_hash: u64,
    pub residual_norm: f64,
    pub newton_iters: usize,
    pub warnings: Vec<String>,
}

/// Stateful solver that keeps the last factorization as a preconditioner.
pub struct FrontSolver<'a> {
    pub model: &'a ReactionModel,
    pub grid: CylinderGrid,
    pub opts: SolverOptions,
    theta: Vec<f64>,
    ops: SliceOps,
    factor: Option<BorderedFactor>,
    last_krylov: usize,
    pub factorizations: usize,
    pub krylov_iterations: usize,
}

impl<'a> FrontSolver<'a> {
    pub fn new(model: &'a ReactionModel, grid: &CylinderGrid, opts: SolverOptions) -> Result<Self, FrontError> {
        grid.validate()?;
        grid.check_model(model)?;
        Ok(Self {
            model,
            grid: grid.clone(),
            opts,
            theta: theta_on_slice(grid, model),
            ops: SliceOps::new(grid),
            factor: None,
            last_krylov: 0,
            factorizations: 0,
            krylov_iterations: 0,
        })
    }

    /// Default initial speed `(1 - 2θ̄)/√2`.
    pub fn default_speed(&self) -> f64 {
        (1.0 - 2.0 * self.model.theta_mean()) / SQRT_2
    }

    fn residual(&self, e: &[f64], c: f64, u: &ProfileField, phase: &[f64], reference: &ProfileField) -> Vec<f64> {
        let mut r = residual_with(&self.grid, &self.ops, &self.theta, e, c, u).values;
        let ph: f64 = phase.iter().zip(u.values.iter().zip(&reference.values)).map(|(p, (a, b))| p * (a - b)).sum();
        r.push(ph);
        r
    }

    fn linearize(&self, e: &[f64], c: f64, u: &ProfileField, phase: &[f64]) -> Linearization {
        let mut lin = Linearization::with_theta(&self.grid, &self.theta, e, c, u);
        lin.phase = phase.to_vec();
        lin
    }

    fn refactor(&mut self, lin: &Linearization) {
        self.factor = Some(BorderedFactor::new(lin));
        self.factorizations += 1;
    }

    /// Solves `K x = b` by preconditioned GMRES, refactoring when the stale factor is weak.
    fn krylov_solve(&mut self, lin: &Linearization, b: &[f64]) -> Vec<f64> {
        self.krylov(lin, b, false)
    }

    /// Transposed counterpart of [`Self::krylov_solve`].
    fn krylov_solve_transpose(&mut self, lin: &Linearization, b: &[f64]) -> Vec<f64> {
        self.krylov(lin, b, true)
    }

    fn krylov(&mut self, lin: &Linearization, b: &[f64], transpose: bool) -> Vec<f64> {
        if self.factor.is_none() || self.last_krylov > self.opts.stale_limit {
            self.refactor(lin);
        }
        let (rtol, restart, cap) = (self.opts.krylov_rtol, self.opts.krylov_restart, self.opts.refactor_after);
        let run = |f: &BorderedFactor, max_iter: usize| {
            if transpose {
                gmres(|v| lin.apply_transpose(v), |v| f.solve_transpose(v), b, rtol, restart, max_iter)
            } else {
                gmres(|v| lin.apply(v), |v| f.solve(v), b, rtol, restart, max_iter)
            }
        };
        let (x, stats) = run(self.factor.as_ref().unwrap(), cap);
        self.krylov_iterations += stats.iterations;
        self.last_krylov = stats.iterations;
        if stats.relative_residual <= rtol * 10.0 {
            return x;
        }
        self.refactor(lin);
        let (x, stats) = run(self.factor.as_ref().unwrap(), 4 * cap);
        self.krylov_iterations += stats.iterations;
        self.last_krylov = stats.iterations;
        x
    }

    /// Damped Newton on the bordered system with integral phase condition
    /// anchored at the initial guess.
    pub fn solve(&mut self, e: &[f64], init: Option<(&ProfileField, f64)>) -> Result<PulsatingFront, FrontError> {
        check_direction(e, &self.grid)?;
        let mut warnings = Vec::new();
        let mass = self.model.mass_integral();
        if mass.abs() < NEAR_STATIONARY_MASS {
            if !self.opts.force {
                return Err(FrontError::NearStationary(mass));
            }
            warnings.push(format!("near-stationary medium: |mass integral| = {:.3e}", mass.abs()));
        }
        let (mut u, mut c) = match init {
            Some((p, c0)) => {
                if p.grid != self.grid {
                    return Err(CylinderError::DimensionMismatch("initial profile on a different grid".into()).into());
                }
                (p.clone(), c0)
            }
            None => (ProfileField::logistic(&self.grid), self.default_speed()),
        };
        // exact Dirichlet values
        let (m, n) = (self.grid.m(), self.grid.n_xi);
        for j in 0..m {
            u.values[j] = 1.0;
            u.values[(n - 1) * m + j] = 0.0;
        }
        let reference = u.clone();
        let phase = phase_weights(&reference);
        let mut r = self.residual(e, c, &u, &phase, &reference);
        let mut rn = max_abs(&r);
        let mut iters = 0;
        while rn > self.opts.tol {
            if iters >= self.opts.max_iter {
                return Err(FrontError::NonConvergence { iterations: iters, residual: rn, reason: "iteration cap".into() });
            }
            iters += 1;
            let lin = self.linearize(e, c, &u, &phase);
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let dx = self.krylov_solve(&lin, &rhs);
            let mut lam = 1.0;
            let mut accepted = false;
            while lam >= self.opts.min_step {
                let trial = ProfileField {
                    grid: self.grid.clone(),
                    values: u.values.iter().zip(&dx).map(|(a, d)| a + lam * d).collect(),
                };
                let tc = c + lam * dx[self.grid.len()];
                let tr = self.residual(e, tc, &trial, &phase, &reference);
                let tn = max_abs(&tr);
                if tn < rn && tn.is_finite() {
                    u = trial;
                    c = tc;
                    r = tr;
                    rn = tn;
                    accepted = true;
                    break;
                }
                lam *= 0.5;
            }
            if !accepted {
                return Err(FrontError::NonConvergence { iterations: iters, residual: rn, reason: "line search stagnation".into() });
            }
        }
        check_monotone(&u)?;
        if let Ok(fit) = fit_decay_raw(&u) {
            let need = adaptive_half_length(&fit);
            if self.grid.half_length < need {
                warnings.push(format!("half-length {} below the decay bound {need:.3}", self.grid.half_length));
            }
        }
        Ok(PulsatingFront {
            e: e.to_vec(),
            c,
            profile: u,
            model_hash: self.model.model_hash(),
            residual_norm: rn,
            newton_iters: iters,
            warnings,
        })
    }

    /// Speed derivative along the tangent `h` by the discrete adjoint, plus the
    /// forward bordered solve of the same quantity.
    pub fn speed_derivative(&mut self, front: &PulsatingFront, h: &[f64]) -> Result<SpeedDerivative, FrontError> {
        let e = &front.e;
        let u = &front.profile;
        let eh: f64 = e.iter().zip(h).map(|(a, b)| a * b).sum();
        let hperp: Vec<f64> = h.iter().zip(e).map(|(hv, ev)| hv - eh * ev).collect();
        let phase = phase_weights(u);
        let lin = self.linearize(e, front.c, u, &phase);
        let len = self.grid.len();
        // adjoint: Kᵀ [ψ; μ] = [0; 1]
        let mut rhs = vec![0.0; len + 1];
        rhs[len] = 1.0;
        let psi = self.krylov_solve_transpose(&lin, &rhs);
        let forcing = direction_forcing(&self.grid, &self.ops, u, &hperp);
        let pair_scale = self.grid.h() / self.grid.m() as f64;
        let psi_max = psi[..len].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let pairing: f64 = psi[..len].iter().zip(&lin.dc).map(|(p, d)| p * d).sum::<f64>() * pair_scale / psi_max.max(f64::MIN_POSITIVE);
        if pairing.abs() < 1e-10 {
            return Err(FrontError::AdjointDegenerate(pairing.abs()));
        }
        let num: f64 = psi[..len].iter().zip(&forcing).map(|(p, f)| p * f).sum();
        let den: f64 = psi[..len].iter().zip(&lin.dc).map(|(p, d)| p * d).sum();
        let adjoint = -num / den;
        let mut b: Vec<f64> = forcing.iter().map(|v| -v).collect();
        b.push(0.0);
        let sol = if norm2(&b) == 0.0 { vec![0.0; len + 1] } else { self.krylov_solve(&lin, &b) };
        Ok(SpeedDerivative { adjoint, bordered: sol[len], pairing })
    }
}

/// `∂R/∂e [g] = 2 (g · ∇_y) D0 U` at interior nodes.
fn direction_forcing(grid: &CylinderGrid, ops: &SliceOps, u: &ProfileField, g: &[f64]) -> Vec<f64> {
    let m = grid.m();
    let d0 = xi_derivative(u);
    let mut out = vec![0.0; grid.len()];
    if g.iter().all(|v| *v == 0.0) {
        return out;
    }
    let mut tmp = vec![0.0; m];
    for i in 1..grid.n_xi - 1 {
        ops.directional(g, &d0[i * m..(i + 1) * m], &mut tmp);
        for j in 0..m {
            out[i * m + j] = 2.0 * tmp[j];
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct SpeedDerivative {
    pub adjoint: f64,
    pub bordered: f64,
    /// Normalized pairing `⟨ψ/‖ψ‖∞, ∂_ξU⟩`.
    pub pairing: f64,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| if x.is_nan() { f64::NAN } else { a.max(x.abs()) })
}

fn check_monotone(u: &ProfileField) -> Result<(), FrontError> {
    let (m, n) = (u.grid.m(), u.grid.n_xi);
    let mut worst = (0usize, f64::NEG_INFINITY);
    for i in 0..n - 1 {
        for j in 0..m {
            let d = u.values[(i + 1) * m + j] - u.values[i * m + j];
            if d > worst.1 {
                worst = (i, d);
            }
        }
    }
    if worst.1 >= 0.0 {
        return Err(FrontError::NonMonotoneProfile { node: worst.0, value: worst.1 });
    }
    Ok(())
}

/// Solves for the front in direction `e` from `init` (default: logistic guess).
pub fn solve_front(
    model: &ReactionModel,
    e: &[f64],
    grid: &CylinderGrid,
    init: Option<(&ProfileField, f64)>,
    opts: &SolverOptions,
) -> Result<PulsatingFront, FrontError> {
    FrontSolver::new(model, grid, opts.clone())?.solve(e, init)
}

/// Resamples `U(· + s)` per y-line with natural cubic splines; constant beyond the grid.
pub fn shift_profile(u: &ProfileField, s: f64) -> ProfileField {
    let g = &u.grid;
    let (m, n) = (g.m(), g.n_xi);
    let mut out = vec![0.0; g.len()];
    for j in 0..m {
        let sp = UniformSpline::new(-g.half_length, g.h(), &u.line(j));
        for i in 0..n {
            out[i * m + j] = sp.eval(g.xi(i) + s);
        }
    }
    ProfileField { grid: g.clone(), values: out }
}

/// `∫_{ξ>a} U² dξ dy`.
fn tail_mass(u: &ProfileField, a: f64) -> f64 {
    let sq: Vec<f64> = u.values.iter().map(|v| v * v).collect();
    half_line_integral(&sq, &u.grid, a)
}

/// Shift `τ` such that `∫_{ξ>0} U(ξ+τ, y)² = 1`, found by bisection.
pub fn normalization_shift(u: &ProfileField) -> Result<f64, FrontError> {
    let g = &u.grid;
    let total = tail_mass(u, -g.half_length);
    if total < 1.0 {
        return Err(FrontError::TargetUnreachable(total));
    }
    let (mut lo, mut hi) = (-g.half_length, g.half_length);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail_mass(u, mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Returns the normalized front and the applied shift.
pub fn shift_to_normalization(front: &PulsatingFront) -> Result<(PulsatingFront, f64), FrontError> {
    let tau = normalization_shift(&front.profile)?;
    let mut out = front.clone();
    out.profile = shift_profile(&front.profile, tau);
    Ok((out, tau))
}

/// Value of the normalization functional `∫_{ξ>0} U²`.
pub fn normalization_value(u: &ProfileField) -> f64 {
    tail_mass(u, 0.0)
}

/// `c ∫|∂_ξU|²` with central differences and trapezoid weights.
pub fn gradient_energy(u: &ProfileField) -> f64 {
    let g = &u.grid;
    let d = xi_derivative(u);
    d.iter().map(|v| v * v).sum::<f64>() * g.h() / g.m() as f64
}

/// `|c ∫|∂_ξU|² − ∫∫f| / max(|∫∫f|, 1e-12)`.
pub fn speed_identity_residual(front: &PulsatingFront, model: &ReactionModel) -> f64 {
    let mass = model.mass_integral();
    (front.c * gradient_energy(&front.profile) - mass).abs() / mass.abs().max(1e-12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub window_plus: (f64, f64),
    pub window_minus: (f64, f64),
    pub r2_plus: f64,
    pub r2_minus: f64,
}

const FIT_LO: f64 = 1e-8;
const FIT_HI: f64 = 1e-3;
const FIT_MIN_NODES: usize = 20;

/// Regression of `log(max_y U)` (right tail) and `log(max_y (1-U))` (left tail) on ξ.
pub fn fit_decay_raw(u: &ProfileField) -> Result<DecayFit, FrontError> {
    let g = &u.grid;
    let upper = u.slice_max();
    let lower: Vec<f64> = u.slice_min().iter().map(|v| 1.0 - v).collect();
    let fit = |vals: &[f64], side: &'static str| -> Result<(f64, (f64, f64), f64), FrontError> {
        let pts: Vec<(f64, f64)> = vals
            .iter()
            .enumerate()
            .filter(|(_, &v)| (FIT_LO..=FIT_HI).contains(&v))
            .map(|(i, &v)| (g.xi(i), v.ln()))
            .collect();
        if pts.len() < FIT_MIN_NODES {
            return Err(FrontError::WindowTooShort { side, nodes: pts.len() });
        }
        let (slope, r2) = linear_regression(&pts);
        Ok((slope, (pts[0].0, pts[pts.len() - 1].0), r2))
    };
    let (sp, wp, rp) = fit(&upper, "plus")?;
    let (sm, wm, rm) = fit(&lower, "minus")?;
    Ok(DecayFit { mu_plus: -sp, mu_minus: sm, window_plus: wp, window_minus: wm, r2_plus: rp, r2_minus: rm })
}

/// Smallest half-length `10/μ̂ + 10` for which the Dirichlet truncation is negligible.
pub fn adaptive_half_length(fit: &DecayFit) -> f64 {
    10.0 / fit.mu_plus.min(fit.mu_minus) + 10.0
}

/// Decay fit with the lower bound `μ ≥ √γ − 0.02` enforced.
pub fn fit_decay(front: &PulsatingFront, model: &ReactionModel) -> Result<DecayFit, FrontError> {
    let fit = fit_decay_raw(&front.profile)?;
    let bound = model.gamma.sqrt() - 0.02;
    if fit.mu_plus < bound {
        return Err(FrontError::DecayBelowBound { side: "mu_plus", rate: fit.mu_plus, bound });
    }
    if fit.mu_minus < bound {
        return Err(FrontError::DecayBelowBound { side: "mu_minus", rate: fit.mu_minus, bound });
    }
    Ok(fit)
}

/// Least-squares slope and R².
pub fn linear_regression(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { slope * sxy / syy };
    (slope, r2)
}

/// Directional derivative `c′_e(h)` of the speed for a converged front.
pub fn directional_speed_derivative(
    front: &PulsatingFront,
    model: &ReactionModel,
    grid: &CylinderGrid,
    h: &[f64],
    opts: &SolverOptions,
) -> Result<SpeedDerivative, FrontError> {
    let mut solver = FrontSolver::new(model, grid, opts.clone())?;
    // polish on the discrete solution manifold before linearizing
    let polished = solver.solve(&front.e, Some((&front.profile, front.c)))?;
    solver.speed_derivative(&polished, h)
}
