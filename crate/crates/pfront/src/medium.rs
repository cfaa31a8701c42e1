//! Periodic bistable cubic reaction terms `f(x,u) = u(1-u)(u-θ(x))`.
//!
//! `θ` is a finite trigonometric sum on the unit torus. Stability constants
//! (`γ`, `σ`) and the Lipschitz bound are computed on a sampling lattice.

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

/// Half-width of the region where the exact cubic is used beyond `[0,1]`.
pub const U0: f64 = 0.1;
/// Width of the C¹ blend between the cubic and its linear extension.
pub const BLEND: f64 = 0.05;

/// Admissible open range for `θ(x)`.
const THETA_LO: f64 = 0.05;
const THETA_HI: f64 = 0.95;
/// Fraction of `min θ` (and of `1 - max θ`) used as the initial `σ`.
const SIGMA_FRACTION: f64 = 0.45;
/// Smallest accepted value of `min(-f_u)` on the stability strips.
const STRIP_FLOOR: f64 = 1e-3;
/// Sampling lattice points per dimension for range and strip checks.
const SAMPLES_1D: usize = 512;
const SAMPLES_2D: usize = 128;
/// Quadrature sizes for the mass integral.
const MASS_GL_NODES: usize = 32;
const MASS_X_NODES: usize = 128;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MediumError {
    #[error("dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("base level theta0 = {0} is not in (0,1)")]
    BadBase(f64),
    #[error("mode wave-vector {k:?} has length {len}, expected {dim}")]
    ModeDimension { k: Vec<i32>, len: usize, dim: usize },
    #[error("theta leaves ({lo}, {hi}): sampled range [{min:.6}, {max:.6}]")]
    ThetaRange { lo: f64, hi: f64, min: f64, max: f64 },
    #[error("no admissible sigma: stability strip minimum {0:.3e} below floor")]
    NoStabilityMargin(f64),
    #[error("sigma = {0} is not below 1/2")]
    SigmaTooLarge(f64),
}

/// One Fourier mode `amp · cos(2π k·x + phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub k: Vec<i32>,
    pub amp: f64,
    pub phase: f64,
}

/// `θ(x) = θ₀ + Σ amp · cos(2π k·x + phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaField {
    pub theta0: f64,
    pub modes: Vec<Mode>,
}

impl ThetaField {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut th = self.theta0;
        for m in &self.modes {
            let arg: f64 = m.k.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
            th += m.amp * (2.0 * PI * arg + m.phase).cos();
        }
        th
    }

    pub fn is_constant(&self) -> bool {
        self.modes.iter().all(|m| m.amp == 0.0 || m.k.iter().all(|&k| k == 0))
    }

    /// True when `θ` does not depend on coordinate `d`.
    pub fn independent_of(&self, d: usize) -> bool {
        self.modes.iter().all(|m| m.amp == 0.0 || m.k[d] == 0)
    }
}

/// Periodic cubic bistable medium with derived stability constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionModel {
    pub dim: usize,
    pub theta: ThetaField,
    pub gamma: f64,
    pub sigma: f64,
    pub lipschitz_l: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

/// Values of `f`, `f_u`, `f_uu` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reaction {
    pub f: f64,
    pub fu: f64,
    pub fuu: f64,
}

/// Builds the cubic medium and computes `γ`, `σ` and `L`.
pub fn make_cubic_medium(dim: usize, theta0: f64, modes: Vec<Mode>) -> Result<ReactionModel, MediumError> {
    if dim != 1 && dim != 2 {
        return Err(MediumError::BadDimension(dim));
    }
    if !(theta0 > 0.0 && theta0 < 1.0) {
        return Err(MediumError::BadBase(theta0));
    }
    for m in &modes {
        if m.k.len() != dim {
            return Err(MediumError::ModeDimension { k: m.k.clone(), len: m.k.len(), dim });
        }
    }
    let theta = ThetaField { theta0, modes };
    let samples = sample_theta(&theta, dim);
    let (tmin, tmax) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    if !(tmin > THETA_LO && tmax < THETA_HI) {
        return Err(MediumError::ThetaRange { lo: THETA_LO, hi: THETA_HI, min: tmin, max: tmax });
    }

    let strip_min = |sigma: f64| samples.iter().map(|&t| strip_minimum(t, sigma)).fold(f64::INFINITY, f64::min);
    let sigma_max = SIGMA_FRACTION * tmin.min(1.0 - tmax);
    let sigma = if strip_min(sigma_max) >= STRIP_FLOOR {
        sigma_max
    } else {
        // strip minimum decreases in sigma; bisect for the largest admissible value
        let (mut lo, mut hi) = (0.0, sigma_max);
        if strip_min(1e-6) < STRIP_FLOOR {
            return Err(MediumError::NoStabilityMargin(strip_min(1e-6)));
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if strip_min(mid) >= STRIP_FLOOR {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    if sigma >= 0.5 {
        return Err(MediumError::SigmaTooLarge(sigma));
    }
    let gamma = 0.5 * strip_min(sigma);
    let lipschitz_l = samples.iter().map(|&t| max_abs_fu(t)).fold(0.0, f64::max);
    Ok(ReactionModel { dim, theta, gamma, sigma, lipschitz_l, theta_min: tmin, theta_max: tmax })
}

fn sample_theta(theta: &ThetaField, dim: usize) -> Vec<f64> {
    if dim == 1 {
        (0..SAMPLES_1D).map(|i| theta.eval(&[i as f64 / SAMPLES_1D as f64])).collect()
    } else {
        let n = SAMPLES_2D;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(theta.eval(&[i as f64 / n as f64, j as f64 / n as f64]));
            }
        }
        out
    }
}

/// `-f_u(u) = 3u² - 2(1+θ)u + θ` for the unextended cubic.
fn neg_fu_cubic(th: f64, u: f64) -> f64 {
    3.0 * u * u - 2.0 * (1.0 + th) * u + th
}

/// Exact minimum of the quadratic `-f_u` over `[a,b]`.
fn min_neg_fu(th: f64, a: f64, b: f64) -> f64 {
    let v = (1.0 + th) / 3.0;
    let mut m = neg_fu_cubic(th, a).min(neg_fu_cubic(th, b));
    if v > a && v < b {
        m = m.min(neg_fu_cubic(th, v));
    }
    m
}

/// Minimum of `-f_u` over `[0,σ] ∪ [1-σ,1]`.
fn strip_minimum(th: f64, sigma: f64) -> f64 {
    min_neg_fu(th, 0.0, sigma).min(min_neg_fu(th, 1.0 - sigma, 1.0))
}

fn max_abs_fu(th: f64) -> f64 {
    let v = (1.0 + th) / 3.0;
    [0.0, 1.0, v].iter().map(|&u| neg_fu_cubic(th, u).abs()).fold(0.0, f64::max)
}

/// Cubic values on the exact region.
fn cubic(th: f64, u: f64) -> Reaction {
    Reaction {
        f: u * (1.0 - u) * (u - th),
        fu: -3.0 * u * u + 2.0 * (1.0 + th) * u - th,
        fuu: -6.0 * u + 2.0 * (1.0 + th),
    }
}

/// Cubic Hermite interpolant on `[a,b]` through `(p0,m0)` and `(p1,m1)`.
fn hermite(a: f64, b: f64, p0: f64, m0: f64, p1: f64, m1: f64, u: f64) -> Reaction {
    let w = b - a;
    let s = (u - a) / w;
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let d00 = 6.0 * s2 - 6.0 * s;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = -6.0 * s2 + 6.0 * s;
    let d11 = 3.0 * s2 - 2.0 * s;
    let e00 = 12.0 * s - 6.0;
    let e10 = 6.0 * s - 4.0;
    let e01 = -12.0 * s + 6.0;
    let e11 = 6.0 * s - 2.0;
    Reaction {
        f: h00 * p0 + h10 * w * m0 + h01 * p1 + h11 * w * m1,
        fu: (d00 * p0 + d10 * w * m0 + d01 * p1 + d11 * w * m1) / w,
        fuu: (e00 * p0 + e10 * w * m0 + e01 * p1 + e11 * w * m1) / (w * w),
    }
}

/// Reaction at level `θ` with the linear extension outside `[-U0-BLEND, 1+U0+BLEND]`.
pub fn reaction_at(th: f64, u: f64) -> Reaction {
    let lo_in = -U0;
    let lo_out = -U0 - BLEND;
    let hi_in = 1.0 + U0;
    let hi_out = 1.0 + U0 + BLEND;
    if u >= lo_in && u <= hi_in {
        cubic(th, u)
    } else if u < lo_out {
        Reaction { f: -th * u, fu: -th, fuu: 0.0 }
    } else if u > hi_out {
        let s = th - 1.0;
        Reaction { f: s * (u - 1.0), fu: s, fuu: 0.0 }
    } else if u < lo_in {
        let c = cubic(th, lo_in);
        hermite(lo_out, lo_in, -th * lo_out, -th, c.f, c.fu, u)
    } else {
        let c = cubic(th, hi_in);
        let s = th - 1.0;
        hermite(hi_in, hi_out, c.f, c.fu, s * (hi_out - 1.0), s, u)
    }
}

impl ReactionModel {
    pub fn theta_at(&self, x: &[f64]) -> f64 {
        self.theta.eval(x)
    }

    pub fn eval(&self, x: &[f64], u: f64) -> Reaction {
        reaction_at(self.theta.eval(x), u)
    }

    pub fn eval_f(&self, x: &[f64], u: f64) -> f64 {
        self.eval(x, u).f
    }

    pub fn eval_fu(&self, x: &[f64], u: f64) -> f64 {
        self.eval(x, u).fu
    }

    pub fn eval_fuu(&self, x: &[f64], u: f64) -> f64 {
        self.eval(x, u).fuu
    }

    pub fn is_homogeneous(&self) -> bool {
        self.theta.is_constant()
    }

    /// x-average of `θ`, which is exactly `θ₀` for a trigonometric sum with no zero modes.
    pub fn theta_mean(&self) -> f64 {
        let zero_modes: f64 = self
            .theta
            .modes
            .iter()
            .filter(|m| m.k.iter().all(|&k| k == 0))
            .map(|m| m.amp * m.phase.cos())
            .sum();
        self.theta.theta0 + zero_modes
    }

    /// `∫_{T^N×[0,1]} f dx du` by Gauss–Legendre in `u` and periodic trapezoid in `x`.
    pub fn mass_integral(&self) -> f64 {
        let (nodes, weights) = gauss_legendre_unit(MASS_GL_NODES);
        let u_int = |th: f64| -> f64 {
            nodes.iter().zip(&weights).map(|(&u, &w)| w * reaction_at(th, u).f).sum()
        };
        let n = MASS_X_NODES;
        let mut acc = 0.0;
        if self.dim == 1 {
            for i in 0..n {
                acc += u_int(self.theta.eval(&[i as f64 / n as f64]));
            }
            acc / n as f64
        } else {
            for i in 0..n {
                let mut row = 0.0;
                for j in 0..n {
                    row += u_int(self.theta.eval(&[i as f64 / n as f64, j as f64 / n as f64]));
                }
                acc += row;
            }
            acc / (n * n) as f64
        }
    }

    /// `sup |f|` over `[0,1]` at the sampled `θ` range.
    pub fn max_abs_f(&self) -> f64 {
        let mut m: f64 = 0.0;
        for th in [self.theta_min, self.theta_max] {
            for i in 0..=200 {
                m = m.max(reaction_at(th, i as f64 / 200.0).f.abs());
            }
        }
        m
    }

    /// Canonical description used for hashing and file headers.
    pub fn canonical(&self) -> String {
        let mut s = format!("dim={};theta0={:.17e}", self.dim, self.theta.theta0);
        for m in &self.theta.modes {
            let _ = write!(s, ";mode=");
            for k in &m.k {
                let _ = write!(s, "{k},");
            }
            let _ = write!(s, "{:.17e},{:.17e}", m.amp, m.phase);
        }
        s
    }

    pub fn model_hash(&self) -> u64 {
        fnv1a(self.canonical().as_bytes())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Gauss–Legendre nodes and weights on `[0,1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn homogeneous(th: f64) -> ReactionModel {
        make_cubic_medium(1, th, vec![]).unwrap()
    }

    #[test]
    fn symmetric_cubic_has_zero_mass() {
        assert!(homogeneous(0.5).mass_integral().abs() < 1e-15);
    }

    #[test]
    fn fu_at_zero_is_minus_theta() {
        let m = homogeneous(0.3);
        assert!((m.eval_fu(&[0.7], 0.0) + 0.3).abs() < 1e-15);
        assert!(m.gamma <= 0.3);
    }

    #[test]
    fn cosine_mode_range() {
        let m = make_cubic_medium(1, 0.3, vec![Mode { k: vec![1], amp: 0.1, phase: 0.0 }]).unwrap();
        assert!((m.theta_min - 0.2).abs() < 1e-12);
        assert!((m.theta_max - 0.4).abs() < 1e-12);
    }

    #[test]
    fn point_values() {
        let m = homogeneous(0.3);
        assert!((m.eval_f(&[0.0], 0.5) - 0.05).abs() < 1e-15);
        assert_eq!(m.eval_f(&[0.3], 0.0), 0.0);
        assert!(m.eval_f(&[0.0], 0.3).abs() < 1e-17);
        assert_eq!(m.eval_f(&[0.0], 1.0), 0.0);
    }

    #[test]
    fn mass_closed_forms() {
        assert!((homogeneous(0.3).mass_integral() - 1.0 / 30.0).abs() < 1e-15);
        let m = make_cubic_medium(1, 0.3, vec![Mode { k: vec![1], amp: 0.1, phase: 0.0 }]).unwrap();
        assert!((m.mass_integral() - 1.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_wide_modes() {
        let r = make_cubic_medium(1, 0.3, vec![Mode { k: vec![1], amp: 0.3, phase: 0.0 }]);
        assert!(matches!(r, Err(MediumError::ThetaRange { .. })));
        assert!(make_cubic_medium(3, 0.3, vec![]).is_err());
        assert!(make_cubic_medium(1, 1.2, vec![]).is_err());
    }

    #[test]
    fn extension_is_c1() {
        for th in [0.2, 0.5, 0.8] {
            for &b in &[-U0, -U0 - BLEND, 1.0 + U0, 1.0 + U0 + BLEND] {
                let l = reaction_at(th, b - 1e-12);
                let r = reaction_at(th, b + 1e-12);
                assert!((l.f - r.f).abs() < 1e-10);
                assert!((l.fu - r.fu).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre_unit(32);
        let s: f64 = x.iter().zip(&w).map(|(&x, &w)| w * x.powi(9)).sum();
        assert!((s - 0.1).abs() < 1e-15);
    }

    #[test]
    fn strip_check_holds() {
        let m = make_cubic_medium(2, 0.3, vec![
            Mode { k: vec![1, 0], amp: 0.08, phase: 0.0 },
            Mode { k: vec![0, 1], amp: 0.05, phase: 0.0 },
        ])
        .unwrap();
        let n = 64;
        let mut worst = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                let x = [i as f64 / n as f64, j as f64 / n as f64];
                for s in 0..=50 {
                    let u = m.sigma * s as f64 / 50.0;
                    worst = worst.min(-m.eval_fu(&x, u)).min(-m.eval_fu(&x, 1.0 - u));
                }
            }
        }
        assert!(worst >= m.gamma);
        assert!(m.sigma < m.theta_min && 1.0 - m.sigma > m.theta_max);
    }
}
