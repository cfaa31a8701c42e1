//! Interpolation helpers: natural cubic splines on uniform grids, periodic
//! cubic cardinal weights, and trigonometric cardinal functions.

use std::f64::consts::PI;

/// Natural cubic spline through uniformly spaced samples.
#[derive(Debug, Clone)]
pub struct UniformSpline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl UniformSpline {
    pub fn new(x0: f64, h: f64, y: &[f64]) -> Self {
        let n = y.len();
        assert!(n >= 2, "spline needs at least two samples");
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for interior second derivatives (Thomas algorithm)
            let k = n - 2;
            let mut c = vec![0.0; k];
            let mut d = vec![0.0; k];
            for i in 0..k {
                let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]) / (h * h);
                let (sub, diag) = (1.0, 4.0);
                if i == 0 {
                    c[i] = 1.0 / diag;
                    d[i] = rhs / diag;
                } else {
                    let den = diag - sub * c[i - 1];
                    c[i] = 1.0 / den;
                    d[i] = (rhs - sub * d[i - 1]) / den;
                }
            }
            for i in (0..k).rev() {
                let next = if i + 1 < k { m[i + 2] } else { 0.0 };
                m[i + 1] = d[i] - c[i] * next;
            }
        }
        Self { x0, h, y: y.to_vec(), m }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn x_min(&self) -> f64 {
        self.x0
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + self.h * (self.y.len() - 1) as f64
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.y.len();
        let s = (x - self.x0) / self.h;
        let i = (s.floor().max(0.0) as usize).min(n - 2);
        (i, s - i as f64)
    }

    /// Value, first and second derivative; constant extension outside the range.
    pub fn eval3(&self, x: f64) -> (f64, f64, f64) {
        if x <= self.x0 {
            return (self.y[0], 0.0, 0.0);
        }
        if x >= self.x_max() {
            return (self.y[self.y.len() - 1], 0.0, 0.0);
        }
        let (i, t) = self.locate(x);
        let h = self.h;
        let (a, b) = (1.0 - t, t);
        let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.m[i], self.m[i + 1]);
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d = (y1 - y0) / h + ((1.0 - 3.0 * a * a) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        let dd = a * m0 + b * m1;
        (v, d, dd)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval3(x).0
    }

    /// Exact integral of the spline over `[a, b]` within the sample range.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        let a = a.clamp(self.x0, self.x_max());
        let b = b.clamp(self.x0, self.x_max());
        if b <= a {
            return -self.integrate(b, a);
        }
        let prim = |i: usize, t: f64| -> f64 {
            // integral over [x_i, x_i + t h] of the cell polynomial
            let h = self.h;
            let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.m[i], self.m[i + 1]);
            let a_int = t - t * t / 2.0; // ∫ (1-s) ds
            let b_int = t * t / 2.0;
            let a3 = (1.0 - (1.0 - t).powi(4)) / 4.0 - a_int;
            let b3 = t.powi(4) / 4.0 - b_int;
            h * (y0 * a_int + y1 * b_int + (a3 * m0 + b3 * m1) * h * h / 6.0)
        };
        let (ia, ta) = self.locate(a);
        let (ib, tb) = self.locate(b);
        if ia == ib {
            return prim(ia, tb) - prim(ia, ta);
        }
        let mut s = prim(ia, 1.0) - prim(ia, ta);
        for i in ia + 1..ib {
            s += prim(i, 1.0);
        }
        s + prim(ib, tb)
    }
}

/// Cardinal weights of the periodic cubic spline through `n` equally spaced
/// nodes on a circle of circumference `period`.
#[derive(Debug, Clone)]
pub struct PeriodicCardinal {
    n: usize,
    period: f64,
    /// `second[j][k]`: second derivative at node `k` of the cardinal spline for node `j`.
    second: Vec<Vec<f64>>,
}

impl PeriodicCardinal {
    pub fn new(n: usize, period: f64) -> Self {
        assert!(n >= 3, "periodic spline needs at least three nodes");
        let h = period / n as f64;
        // circulant system M_{k-1} + 4 M_k + M_{k+1} = 6 (y_{k-1} - 2 y_k + y_{k+1}) / h²,
        // diagonalized by the discrete Fourier transform
        let mut second = vec![vec![0.0; n]; n];
        for (j, row) in second.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for q in 0..n {
                    let w = 2.0 * PI * q as f64 / n as f64;
                    let lam = 6.0 * (2.0 * w.cos() - 2.0) / (h * h) / (4.0 + 2.0 * w.cos());
                    s += lam * (w * (k as f64 - j as f64)).cos();
                }
                *v = s / n as f64;
            }
        }
        Self { n, period, second }
    }

    /// Weights `w_j(φ)` so that the interpolant equals `Σ w_j y_j`.
    pub fn weights(&self, phi: f64) -> Vec<f64> {
        let n = self.n;
        let h = self.period / n as f64;
        let s = phi.rem_euclid(self.period) / h;
        let i = (s.floor() as usize).min(n - 1);
        let t = s - i as f64;
        let i1 = (i + 1) % n;
        let (a, b) = (1.0 - t, t);
        (0..n)
            .map(|j| {
                let y0 = if j == i { 1.0 } else { 0.0 };
                let y1 = if j == i1 { 1.0 } else { 0.0 };
                let (m0, m1) = (self.second[j][i], self.second[j][i1]);
                a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0
            })
            .collect()
    }
}

/// Trigonometric cardinal function for `n` nodes on a unit period, evaluated at offset `x`.
pub fn trig_cardinal(n: usize, x: f64) -> f64 {
    if n == 1 {
        return 1.0;
    }
    let x = x - x.round();
    if x.abs() < 1e-14 {
        return 1.0;
    }
    let nf = n as f64;
    if n % 2 == 0 {
        (nf * PI * x).sin() / (nf * (PI * x).tan())
    } else {
        (nf * PI * x).sin() / (nf * (PI * x).sin())
    }
}

/// Trigonometric interpolation weights at `y` for `n` nodes `j/n` on the unit torus.
pub fn trig_weights(n: usize, y: f64) -> Vec<f64> {
    (0..n).map(|j| trig_cardinal(n, y - j as f64 / n as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spline_reproduces_cubic_interior() {
        let h = 0.01;
        let y: Vec<f64> = (0..401).map(|i| (i as f64 * h).sin()).collect();
        let s = UniformSpline::new(0.0, h, &y);
        let (v, d, dd) = s.eval3(2.0 + 0.3 * h);
        let x = 2.0 + 0.3 * h;
        assert!((v - x.sin()).abs() < 1e-9);
        assert!((d - x.cos()).abs() < 1e-6);
        assert!((dd + x.sin()).abs() < 1e-3);
        let exact = 3.0f64.cos() - 0.5f64.cos();
        assert!((s.integrate(0.5, 3.0) + exact).abs() < 1e-9);
    }

    #[test]
    fn periodic_weights_partition_unity() {
        let p = PeriodicCardinal::new(16, 2.0 * PI);
        let w = p.weights(1.234);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let w0 = p.weights(2.0 * PI * 3.0 / 16.0);
        assert!((w0[3] - 1.0).abs() < 1e-12);
        let nodes: Vec<f64> = (0..16).map(|j| (2.0 * PI * j as f64 / 16.0).cos()).collect();
        let v: f64 = p.weights(0.5).iter().zip(&nodes).map(|(a, b)| a * b).sum();
        assert!((v - 0.5f64.cos()).abs() < 2e-4);
    }

    #[test]
    fn trig_interpolation_exact_for_low_modes() {
        let n = 16;
        let vals: Vec<f64> = (0..n).map(|j| (2.0 * PI * 3.0 * j as f64 / n as f64).cos()).collect();
        let y = 0.3217;
        let v: f64 = trig_weights(n, y).iter().zip(&vals).map(|(a, b)| a * b).sum();
        assert!((v - (2.0 * PI * 3.0 * y).cos()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn spline_interpolates_nodes(vals in proptest::collection::vec(-1.0f64..1.0, 3..40), k in 0usize..40) {
            let s = UniformSpline::new(-1.0, 0.5, &vals);
            let k = k % vals.len();
            prop_assert!((s.eval(-1.0 + 0.5 * k as f64) - vals[k]).abs() < 1e-12);
        }
    }
}
