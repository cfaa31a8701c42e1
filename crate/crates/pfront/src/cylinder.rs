//! Truncated cylinder `[-L, L] × T^N`, profile fields, the discrete profile
//! operator and cylinder quadrature.
//!
//! Field layout: node `(i, j)` with `i` the ξ index and `j` the row-major
//! y multi-index lives at `values[i * m + j]`, `m = n_y^N`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::medium::ReactionModel;
use crate::spline::{trig_weights, UniformSpline};

const MIN_NXI: usize = 64;
const MIN_NY: usize = 16;
const MAX_H: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CylinderError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("direction is not a unit vector (|e| = {0})")]
    NotUnit(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylinderGrid {
    pub half_length: f64,
    pub n_xi: usize,
    pub n_y: usize,
    pub dim: usize,
}

impl CylinderGrid {
    pub fn new(half_length: f64, n_xi: usize, n_y: usize, dim: usize) -> Result<Self, CylinderError> {
        let g = Self { half_length, n_xi, n_y, dim };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), CylinderError> {
        if self.dim != 1 && self.dim != 2 {
            return Err(CylinderError::InvalidGrid(format!("dimension {} not in {{1,2}}", self.dim)));
        }
        if self.n_xi < MIN_NXI {
            return Err(CylinderError::InvalidGrid(format!("n_xi = {} < {MIN_NXI}", self.n_xi)));
        }
        if self.n_y != 1 && self.n_y < MIN_NY {
            return Err(CylinderError::InvalidGrid(format!("n_y = {} must be 1 or >= {MIN_NY}", self.n_y)));
        }
        if !(self.half_length > 0.0) || self.h() > MAX_H {
            return Err(CylinderError::InvalidGrid(format!("spacing {} exceeds {MAX_H}", self.h())));
        }
        Ok(())
    }

    /// Checks that the grid can represent fronts of `model`.
    pub fn check_model(&self, model: &ReactionModel) -> Result<(), CylinderError> {
        if model.dim != self.dim {
            return Err(CylinderError::DimensionMismatch(format!(
                "medium dim {} vs grid dim {}",
                model.dim, self.dim
            )));
        }
        if self.n_y == 1 && !model.is_homogeneous() {
            return Err(CylinderError::InvalidGrid("n_y = 1 requires a homogeneous medium".into()));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_length / (self.n_xi - 1) as f64
    }

    pub fn xi(&self, i: usize) -> f64 {
        -self.half_length + i as f64 * self.h()
    }

    /// Points per ξ-slice.
    pub fn m(&self) -> usize {
        self.n_y.pow(self.dim as u32)
    }

    pub fn len(&self) -> usize {
        self.n_xi * self.m()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of the y multi-index `j`.
    pub fn y_point(&self, j: usize) -> Vec<f64> {
        let n = self.n_y as f64;
        if self.dim == 1 {
            vec![j as f64 / n]
        } else {
            vec![(j / self.n_y) as f64 / n, (j % self.n_y) as f64 / n]
        }
    }
}

/// Discrete profile values on a cylinder grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileField {
    pub grid: CylinderGrid,
    pub values: Vec<f64>,
}

impl ProfileField {
    pub fn zeros(grid: &CylinderGrid) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: &CylinderGrid, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let m = grid.m();
        let ys: Vec<Vec<f64>> = (0..m).map(|j| grid.y_point(j)).collect();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n_xi {
            let xi = grid.xi(i);
            for y in &ys {
                values.push(f(xi, y));
            }
        }
        Self { grid: grid.clone(), values }
    }

    /// `1 / (1 + exp(ξ/√2))` on every y line.
    pub fn logistic(grid: &CylinderGrid) -> Self {
        Self::from_fn(grid, |xi, _| logistic(xi))
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let m = self.grid.m();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &v| a.max(v.abs()))
    }

    /// ξ-profile at y multi-index `j`.
    pub fn line(&self, j: usize) -> Vec<f64> {
        let m = self.grid.m();
        (0..self.grid.n_xi).map(|i| self.values[i * m + j]).collect()
    }

    /// Maximum over y of each ξ-slice.
    pub fn slice_max(&self) -> Vec<f64> {
        (0..self.grid.n_xi).map(|i| self.slice(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect()
    }

    pub fn slice_min(&self) -> Vec<f64> {
        (0..self.grid.n_xi).map(|i| self.slice(i).iter().cloned().fold(f64::INFINITY, f64::min)).collect()
    }

    /// CSV text of the ξ-profile at y multi-index `j`.
    pub fn line_csv(&self, j: usize) -> String {
        let mut s = String::from("xi,u\n");
        for (i, v) in self.line(j).iter().enumerate() {
            s.push_str(&format!("{},{}\n", crate::io::fmt9(self.grid.xi(i)), crate::io::fmt9(*v)));
        }
        s
    }
}

/// Off-grid evaluation of a profile: natural cubic spline in ξ on each
/// y line, trigonometric interpolation in y.
#[derive(Debug, Clone)]
pub struct ProfileInterp {
    n_y: usize,
    dim: usize,
    lines: Vec<UniformSpline>,
}

impl ProfileInterp {
    pub fn new(u: &ProfileField) -> Self {
        let g = &u.grid;
        let lines = (0..g.m()).map(|j| UniformSpline::new(-g.half_length, g.h(), &u.line(j))).collect();
        Self { n_y: g.n_y, dim: g.dim, lines }
    }

    /// Interpolation weights over the y nodes at `y`.
    pub fn weights(&self, y: &[f64]) -> Vec<f64> {
        if self.n_y == 1 {
            return vec![1.0];
        }
        let w1 = trig_weights(self.n_y, y[0]);
        if self.dim == 1 {
            return w1;
        }
        let w2 = trig_weights(self.n_y, y[1]);
        w1.iter().flat_map(|a| w2.iter().map(move |b| a * b)).collect()
    }

    /// `U(ξ, y)`; constant extension beyond the truncation.
    pub fn eval(&self, xi: f64, y: &[f64]) -> f64 {
        self.weights(y).iter().zip(&self.lines).map(|(w, l)| w * l.eval(xi)).sum()
    }

    /// `U(ξ, ·)` with precomputed y weights.
    pub fn eval_weighted(&self, xi: f64, weights: &[f64]) -> f64 {
        weights.iter().zip(&self.lines).map(|(w, l)| w * l.eval(xi)).sum()
    }

    /// `(U, ∂_ξU, ∂_ξξU)` at `(ξ, y)`.
    pub fn eval3(&self, xi: f64, y: &[f64]) -> (f64, f64, f64) {
        self.weights(y).iter().zip(&self.lines).fold((0.0, 0.0, 0.0), |acc, (w, l)| {
            let (v, d, dd) = l.eval3(xi);
            (acc.0 + w * v, acc.1 + w * d, acc.2 + w * dd)
        })
    }
}

pub fn logistic(xi: f64) -> f64 {
    1.0 / (1.0 + (xi / std::f64::consts::SQRT_2).exp())
}

/// Dense differentiation matrices along one periodic dimension of period 1.
#[derive(Debug, Clone)]
pub struct PeriodicDiff {
    pub n: usize,
    /// row-major `n × n`
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub spectral: bool,
}

impl PeriodicDiff {
    pub fn new(n: usize) -> Self {
        let mut d1 = vec![0.0; n * n];
        let mut d2 = vec![0.0; n * n];
        let spectral = n.is_power_of_two() && n >= 2;
        if n == 1 {
            return Self { n, d1, d2, spectral: true };
        }
        let nf = n as f64;
        if spectral {
            let hh = 2.0 * PI / nf;
            for j in 0..n {
                for l in 0..n {
                    let k = j as i64 - l as i64;
                    if k != 0 {
                        let sgn = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                        let half = k as f64 * hh / 2.0;
                        d1[j * n + l] = 2.0 * PI * 0.5 * sgn / half.tan();
                        d2[j * n + l] = -(2.0 * PI).powi(2) * sgn / (2.0 * half.sin().powi(2));
                    }
                }
                // diagonal from the row sum, so constants are annihilated to round-off
                let off: f64 = (0..n).filter(|&l| l != j).map(|l| d2[j * n + l]).sum();
                d2[j * n + j] = -off;
            }
        } else {
            let hy = 1.0 / nf;
            let c1 = [(-2i64, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)];
            let c2 = [(-2i64, -1.0), (-1, 16.0), (0, -30.0), (1, 16.0), (2, -1.0)];
            for j in 0..n {
                for &(o, w) in &c1 {
                    let l = (j as i64 + o).rem_euclid(n as i64) as usize;
                    d1[j * n + l] += w / (12.0 * hy);
                }
                for &(o, w) in &c2 {
                    let l = (j as i64 + o).rem_euclid(n as i64) as usize;
                    d2[j * n + l] += w / (12.0 * hy * hy);
                }
            }
        }
        Self { n, d1, d2, spectral }
    }

    fn apply(mat: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
        for j in 0..n {
            let row = &mat[j * n..(j + 1) * n];
            out[j] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// y-operators on one ξ-slice of `m = n_y^N` points.
#[derive(Debug, Clone)]
pub struct SliceOps {
    pub dim: usize,
    pub n_y: usize,
    pub diff: PeriodicDiff,
}

impl SliceOps {
    pub fn new(grid: &CylinderGrid) -> Self {
        Self { dim: grid.dim, n_y: grid.n_y, diff: PeriodicDiff::new(grid.n_y) }
    }

    pub fn m(&self) -> usize {
        self.n_y.pow(self.dim as u32)
    }

    /// `out = ∂_{y_d} x`.
    pub fn partial(&self, d: usize, x: &[f64], out: &mut [f64]) {
        self.apply_along(&self.diff.d1, d, x, out);
    }

    /// `out = ∂²_{y_d} x`.
    pub fn partial2(&self, d: usize, x: &[f64], out: &mut [f64]) {
        self.apply_along(&self.diff.d2, d, x, out);
    }

    fn apply_along(&self, mat: &[f64], d: usize, x: &[f64], out: &mut [f64]) {
        let n = self.n_y;
        if n == 1 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        if self.dim == 1 {
            PeriodicDiff::apply(mat, n, x, out);
            return;
        }
        let mut line = vec![0.0; n];
        let mut res = vec![0.0; n];
        for a in 0..n {
            for b in 0..n {
                line[b] = if d == 0 { x[b * n + a] } else { x[a * n + b] };
            }
            PeriodicDiff::apply(mat, n, &line, &mut res);
            for b in 0..n {
                if d == 0 {
                    out[b * n + a] = res[b];
                } else {
                    out[a * n + b] = res[b];
                }
            }
        }
    }

    /// `out = Δ_y x`.
    pub fn laplacian(&self, x: &[f64], out: &mut [f64]) {
        self.partial2(0, x, out);
        if self.dim == 2 {
            let mut tmp = vec![0.0; x.len()];
            self.partial2(1, x, &mut tmp);
            out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
        }
    }

    /// `out = (g · ∇_y) x`.
    pub fn directional(&self, g: &[f64], x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut tmp = vec![0.0; x.len()];
        for (d, &gd) in g.iter().enumerate().take(self.dim) {
            if gd == 0.0 {
                continue;
            }
            self.partial(d, x, &mut tmp);
            out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += gd * t);
        }
    }

    /// Dense row-major `m × m` matrix of `Δ_y`.
    pub fn laplacian_matrix(&self) -> Vec<f64> {
        self.dense_of(|x, out| self.laplacian(x, out))
    }

    /// Dense row-major `m × m` matrix of `(g · ∇_y)`.
    pub fn directional_matrix(&self, g: &[f64]) -> Vec<f64> {
        self.dense_of(|x, out| self.directional(g, x, out))
    }

    fn dense_of(&self, op: impl Fn(&[f64], &mut [f64])) -> Vec<f64> {
        let m = self.m();
        let mut mat = vec![0.0; m * m];
        let mut e = vec![0.0; m];
        let mut col = vec![0.0; m];
        for l in 0..m {
            e[l] = 1.0;
            op(&e, &mut col);
            for j in 0..m {
                mat[j * m + l] = col[j];
            }
            e[l] = 0.0;
        }
        mat
    }
}

pub fn check_direction(e: &[f64], grid: &CylinderGrid) -> Result<(), CylinderError> {
    if e.len() != grid.dim {
        return Err(CylinderError::DimensionMismatch(format!(
            "direction has {} components, grid dim {}",
            e.len(),
            grid.dim
        )));
    }
    let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(CylinderError::NotUnit(norm));
    }
    Ok(())
}

/// `θ` sampled at every y node of the grid.
pub fn theta_on_slice(grid: &CylinderGrid, model: &ReactionModel) -> Vec<f64> {
    (0..grid.m()).map(|j| model.theta_at(&grid.y_point(j))).collect()
}

/// Central ξ-difference `D0 U` at interior nodes (zero on boundary slices).
pub fn xi_derivative(u: &ProfileField) -> Vec<f64> {
    let g = &u.grid;
    let (m, n, h) = (g.m(), g.n_xi, g.h());
    let mut out = vec![0.0; g.len()];
    for i in 1..n - 1 {
        for j in 0..m {
            out[i * m + j] = (u.values[(i + 1) * m + j] - u.values[(i - 1) * m + j]) / (2.0 * h);
        }
    }
    out
}

/// Pointwise residual of the discrete profile equation; boundary slices carry `U - 1` and `U`.
pub fn front_residual(
    grid: &CylinderGrid,
    model: &ReactionModel,
    e: &[f64],
    c: f64,
    u: &ProfileField,
) -> Result<ProfileField, CylinderError> {
    check_direction(e, grid)?;
    grid.check_model(model)?;
    if u.grid != *grid {
        return Err(CylinderError::DimensionMismatch("field grid differs from operator grid".into()));
    }
    let ops = SliceOps::new(grid);
    let theta = theta_on_slice(grid, model);
    Ok(residual_with(grid, &ops, &theta, e, c, u))
}

pub(crate) fn residual_with(
    grid: &CylinderGrid,
    ops: &SliceOps,
    theta: &[f64],
    e: &[f64],
    c: f64,
    u: &ProfileField,
) -> ProfileField {
    let (m, n, h) = (grid.m(), grid.n_xi, grid.h());
    let mut out = vec![0.0; grid.len()];
    let mut d0 = vec![0.0; m];
    let mut mixed = vec![0.0; m];
    let mut lap = vec![0.0; m];
    let v = &u.values;
    for i in 1..n - 1 {
        let (lo, mid, hi) = ((i - 1) * m, i * m, (i + 1) * m);
        for j in 0..m {
            d0[j] = (v[hi + j] - v[lo + j]) / (2.0 * h);
        }
        ops.directional(e, &d0, &mut mixed);
        ops.laplacian(&v[mid..mid + m], &mut lap);
        for j in 0..m {
            let uij = v[mid + j];
            let d2 = (v[hi + j] - 2.0 * uij + v[lo + j]) / (h * h);
            let f = crate::medium::reaction_at(theta[j], uij).f;
            out[mid + j] = c * d0[j] + d2 + 2.0 * mixed[j] + lap[j] + f;
        }
    }
    for j in 0..m {
        out[j] = v[j] - 1.0;
        out[(n - 1) * m + j] = v[(n - 1) * m + j];
    }
    ProfileField { grid: grid.clone(), values: out }
}

/// Fourth-order end-corrected trapezoid weights on `k` uniformly spaced nodes.
fn corrected_weights(k: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; k];
    if k >= 8 {
        let ends = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
        for (q, &c) in ends.iter().enumerate() {
            w[q] = c * h;
            w[k - 1 - q] = c * h;
        }
    } else if k >= 2 {
        w[0] = 0.5 * h;
        w[k - 1] = 0.5 * h;
    } else if k == 1 {
        w[0] = 0.0;
    }
    w
}

/// y-average of every slice (exact cell average for resolved trigonometric data).
pub fn slice_means(values: &[f64], grid: &CylinderGrid) -> Vec<f64> {
    let m = grid.m();
    (0..grid.n_xi).map(|i| values[i * m..(i + 1) * m].iter().sum::<f64>() / m as f64).collect()
}

/// `∫ g dξ dy` over the cylinder.
pub fn cylinder_integral(values: &[f64], grid: &CylinderGrid) -> f64 {
    half_line_integral(values, grid, -grid.half_length)
}

/// `∫_{ξ > a} g dξ dy` on the truncated cylinder.
pub fn half_line_integral(values: &[f64], grid: &CylinderGrid, a: f64) -> f64 {
    let means = slice_means(values, grid);
    half_line_1d(&means, -grid.half_length, grid.h(), a)
}

/// `∫_a^{x_max}` of uniformly sampled 1-D data; partial cells use cubic Lagrange interpolation.
pub fn half_line_1d(g: &[f64], x0: f64, h: f64, a: f64) -> f64 {
    let n = g.len();
    let s = (a - x0) / h;
    if s <= 0.0 {
        let w = corrected_weights(n, h);
        return w.iter().zip(g).map(|(w, v)| w * v).sum();
    }
    if s >= (n - 1) as f64 {
        return 0.0;
    }
    let k = s.ceil() as usize;
    let mut total = 0.0;
    if (k as f64 - s) > 1e-12 {
        // partial cell [a, x_k] inside cell [k-1, k]
        let base = (k as i64 - 2).clamp(0, n as i64 - 4) as usize;
        let t0 = s - base as f64;
        let t1 = k as f64 - base as f64;
        for q in 0..4 {
            total += g[base + q] * h * lagrange_integral(q, t0, t1);
        }
    }
    let rest = &g[k..];
    let w = corrected_weights(rest.len(), h);
    total + w.iter().zip(rest).map(|(w, v)| w * v).sum::<f64>()
}

/// `∫_{t0}^{t1} ℓ_q(t) dt` for the cubic Lagrange basis on nodes 0..3.
fn lagrange_integral(q: usize, t0: f64, t1: f64) -> f64 {
    // monomial coefficients of ℓ_q on nodes {0,1,2,3}
    let nodes = [0.0, 1.0, 2.0, 3.0];
    let mut poly = [1.0, 0.0, 0.0, 0.0];
    let mut denom = 1.0;
    let mut deg = 0;
    for (r, &xr) in nodes.iter().enumerate() {
        if r == q {
            continue;
        }
        denom *= nodes[q] - xr;
        let mut next = [0.0; 4];
        for d in 0..=deg {
            next[d + 1] += poly[d];
            next[d] -= xr * poly[d];
        }
        poly = next;
        deg += 1;
    }
    let prim = |t: f64| poly.iter().enumerate().map(|(d, c)| c * t.powi(d as i32 + 1) / (d as f64 + 1.0)).sum::<f64>();
    (prim(t1) - prim(t0)) / denom
}
