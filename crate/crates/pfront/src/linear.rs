//! Linearization of the discrete profile operator and its bordered
//! block-tridiagonal factorization.
//!
//! Unknown vectors have length `n_xi * m + 1`: the full field followed by the
//! speed. Boundary slices carry identity rows; the last row is the phase
//! functional `Σ p_k x_k`.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::PartialPivLu;
use faer::prelude::*;
use faer::linalg::solvers::DenseSolveCore;
use faer::{Accum, Mat, MatMut, MatRef, Par};

use crate::cylinder::{check_direction, theta_on_slice, xi_derivative, CylinderError, CylinderGrid, ProfileField, SliceOps};
use crate::medium::{reaction_at, ReactionModel};

/// Jacobian of the discrete profile residual with respect to `(U, c)`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub grid: CylinderGrid,
    ops: SliceOps,
    pub e: Vec<f64>,
    pub c: f64,
    /// `f_u(y, U)` at every node.
    pub fu: Vec<f64>,
    /// `∂R/∂c = D0 U` (zero on boundary slices).
    pub dc: Vec<f64>,
    /// Phase functional weights.
    pub phase: Vec<f64>,
}

pub fn assemble_linearization(
    grid: &CylinderGrid,
    model: &ReactionModel,
    e: &[f64],
    c: f64,
    u: &ProfileField,
) -> Result<Linearization, CylinderError> {
    check_direction(e, grid)?;
    grid.check_model(model)?;
    let theta = theta_on_slice(grid, model);
    Ok(Linearization::with_theta(grid, &theta, e, c, u))
}

impl Linearization {
    pub(crate) fn with_theta(grid: &CylinderGrid, theta: &[f64], e: &[f64], c: f64, u: &ProfileField) -> Self {
        let m = grid.m();
        let fu = u.values.iter().enumerate().map(|(k, &v)| reaction_at(theta[k % m], v).fu).collect();
        Self {
            grid: grid.clone(),
            ops: SliceOps::new(grid),
            e: e.to_vec(),
            c,
            fu,
            dc: xi_derivative(u),
            phase: vec![0.0; grid.len()],
        }
    }

    /// Phase row `⟨D0 U_ref, ·⟩` with trapezoid weights.
    pub fn set_phase_from(&mut self, reference: &ProfileField) {
        self.phase = phase_weights(reference);
    }

    pub fn dim(&self) -> usize {
        self.grid.len() + 1
    }

    fn coeffs(&self) -> (f64, f64, f64) {
        let h = self.grid.h();
        (1.0 / (h * h) - self.c / (2.0 * h), 1.0 / (h * h) + self.c / (2.0 * h), 1.0 / h)
    }

    /// `J_U v` on the field part only (no speed column, no phase row).
    pub fn apply_field(&self, v: &[f64]) -> Vec<f64> {
        let mut x = v.to_vec();
        x.push(0.0);
        let mut y = self.apply(&x);
        y.pop();
        y
    }

    /// Full bordered matvec.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let (m, n) = (g.m(), g.n_xi);
        let (a, cc, ih) = self.coeffs();
        let h2 = 1.0 / (g.h() * g.h());
        let xc = x[g.len()];
        let mut y = vec![0.0; g.len() + 1];
        let mut ed = vec![0.0; m];
        let mut lap = vec![0.0; m];
        let mut diff = vec![0.0; m];
        for i in 1..n - 1 {
            let (lo, mid, hi) = ((i - 1) * m, i * m, (i + 1) * m);
            for j in 0..m {
                diff[j] = x[hi + j] - x[lo + j];
            }
            self.ops.directional(&self.e, &diff, &mut ed);
            self.ops.laplacian(&x[mid..mid + m], &mut lap);
            for j in 0..m {
                y[mid + j] = a * x[lo + j] + cc * x[hi + j] + ih * ed[j] - 2.0 * h2 * x[mid + j]
                    + lap[j]
                    + self.fu[mid + j] * x[mid + j]
                    + self.dc[mid + j] * xc;
            }
        }
        for j in 0..m {
            y[j] = x[j];
            y[(n - 1) * m + j] = x[(n - 1) * m + j];
        }
        y[g.len()] = self.phase.iter().zip(x).map(|(p, v)| p * v).sum();
        y
    }

    /// Transposed bordered matvec.
    pub fn apply_transpose(&self, z: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let (m, n) = (g.m(), g.n_xi);
        let (a, cc, ih) = self.coeffs();
        let h2 = 1.0 / (g.h() * g.h());
        let zc = z[g.len()];
        let mut y = vec![0.0; g.len() + 1];
        let mut et = vec![0.0; m];
        let mut lap = vec![0.0; m];
        for j in 0..m {
            y[j] = z[j];
            y[(n - 1) * m + j] = z[(n - 1) * m + j];
        }
        for i in 1..n - 1 {
            let (lo, mid, hi) = ((i - 1) * m, i * m, (i + 1) * m);
            let zi = &z[mid..mid + m];
            self.directional_transpose(zi, &mut et);
            self.ops.laplacian_transpose(zi, &mut lap);
            for j in 0..m {
                // row i couples to x_{i-1} through A and to x_{i+1} through C
                y[lo + j] += a * zi[j] - ih * et[j];
                y[hi + j] += cc * zi[j] + ih * et[j];
                y[mid + j] += -2.0 * h2 * zi[j] + lap[j] + self.fu[mid + j] * zi[j] + self.phase[mid + j] * zc;
            }
        }
        for j in 0..m {
            y[j] += self.phase[j] * zc;
            y[(n - 1) * m + j] += self.phase[(n - 1) * m + j] * zc;
        }
        y[g.len()] = self.dc.iter().zip(z).map(|(b, v)| b * v).sum();
        y
    }

    fn directional_transpose(&self, x: &[f64], out: &mut [f64]) {
        self.ops.directional_transpose(&self.e, x, out);
    }
}

impl SliceOps {
    /// `out = (g · ∇_y)ᵀ x`; both y-derivative matrices are skew-symmetric.
    pub fn directional_transpose(&self, g: &[f64], x: &[f64], out: &mut [f64]) {
        self.directional(g, x, out);
        out.iter_mut().for_each(|v| *v = -*v);
    }

    /// `out = Δ_yᵀ x`; the second-derivative matrices are symmetric.
    pub fn laplacian_transpose(&self, x: &[f64], out: &mut [f64]) {
        self.laplacian(x, out);
    }
}

/// Phase weights `h/m · D0 U_ref`.
pub fn phase_weights(reference: &ProfileField) -> Vec<f64> {
    let g = &reference.grid;
    let w = g.h() / g.m() as f64;
    xi_derivative(reference).into_iter().map(|v| v * w).collect()
}

fn col_mut(v: &mut [f64]) -> MatMut<'_, f64> {
    let n = v.len();
    MatMut::from_column_major_slice_mut(v, n, 1)
}

fn dense_from(rowmajor: &[f64], m: usize) -> Mat<f64> {
    Mat::from_fn(m, m, |i, j| rowmajor[i * m + j])
}

/// Block LU of the bordered Jacobian: interior blocks `G_q`, eliminated border
/// vectors and a factored augmented last block.
pub struct BorderedFactor {
    m: usize,
    n_xi: usize,
    a: f64,
    cc: f64,
    ih: f64,
    ops: SliceOps,
    e: Vec<f64>,
    /// `G_q⁻¹`
    inv: Vec<Mat<f64>>,
    /// `G_q⁻¹ b̃_q`
    wb: Vec<Vec<f64>>,
    /// `G_q⁻ᵀ q̃_q`
    v: Vec<Vec<f64>>,
    last: PartialPivLu<f64>,
    phase_boundary: (Vec<f64>, Vec<f64>),
}

impl BorderedFactor {
    pub fn new(lin: &Linearization) -> Self {
        let g = &lin.grid;
        let (m, n) = (g.m(), g.n_xi);
        assert!(n >= 4, "factorization needs at least two interior slices");
        let (a, cc, ih) = lin.coeffs();
        let h2 = 1.0 / (g.h() * g.h());
        let emat = dense_from(&lin.ops.directional_matrix(&lin.e), m);
        let lap = dense_from(&lin.ops.laplacian_matrix(), m);
        let cmat = Mat::from_fn(m, m, |i, j| ih * emat[(i, j)] + if i == j { cc } else { 0.0 });
        let blocks = n - 2;
        let mut inv = Vec::with_capacity(blocks - 1);
        let mut wb = Vec::with_capacity(blocks - 1);
        let mut v = Vec::with_capacity(blocks - 1);
        let mut beta = 0.0;
        let mut gq = Mat::<f64>::zeros(m, m);
        let mut bt: Vec<f64> = Vec::new();
        let mut qt: Vec<f64> = Vec::new();
        let mut x = Mat::<f64>::zeros(m, m);
        let mut ex = Mat::<f64>::zeros(m, m);
        for q in 0..blocks {
            let node = q + 1;
            let off = node * m;
            // D_q
            gq.copy_from(&lap);
            for i in 0..m {
                gq[(i, i)] += -2.0 * h2 + lin.fu[off + i];
            }
            let bq = &lin.dc[off..off + m];
            let pq = &lin.phase[off..off + m];
            if q == 0 {
                bt = bq.to_vec();
                qt = pq.to_vec();
            } else {
                // G_q = D_q - A X with X = G_{q-1}⁻¹ C, A = a I - ih E
                matmul(ex.as_mut(), Accum::Replace, emat.as_ref(), x.as_ref(), 1.0, Par::Seq);
                for j in 0..m {
                    let (gc, xc, ec) = (gq.col_as_slice_mut(j), x.col_as_slice(j), ex.col_as_slice(j));
                    for i in 0..m {
                        gc[i] -= a * xc[i] - ih * ec[i];
                    }
                }
                let prev_wb: &Vec<f64> = &wb[q - 1];
                let awb = dense_combo(a, -ih, &emat, prev_wb, false);
                bt = bq.iter().zip(&awb).map(|(b, s)| b - s).collect();
                let prev_v: &Vec<f64> = &v[q - 1];
                let ctv = dense_combo(cc, ih, &emat, prev_v, true);
                qt = pq.iter().zip(&ctv).map(|(p, s)| p - s).collect();
            }
            if q == blocks - 1 {
                break;
            }
            let gi = gq.partial_piv_lu().inverse();
            let w = gemv(&gi, &bt, false);
            let vq = gemv(&gi, &qt, true);
            beta -= vq.iter().zip(&bt).map(|(a, b)| a * b).sum::<f64>();
            matmul(x.as_mut(), Accum::Replace, gi.as_ref(), cmat.as_ref(), 1.0, Par::Seq);
            inv.push(gi);
            wb.push(w);
            v.push(vq);
        }
        let mut s = Mat::<f64>::zeros(m + 1, m + 1);
        for i in 0..m {
            for j in 0..m {
                s[(i, j)] = gq[(i, j)];
            }
            s[(i, m)] = bt[i];
            s[(m, i)] = qt[i];
        }
        s[(m, m)] = beta;
        let last = s.partial_piv_lu();
        let pb = (lin.phase[..m].to_vec(), lin.phase[(n - 1) * m..n * m].to_vec());
        Self { m, n_xi: n, a, cc, ih, ops: lin.ops.clone(), e: lin.e.clone(), inv, wb, v, last, phase_boundary: pb }
    }

    /// `s x + t E x`
    fn combo(&self, s: f64, t: f64, x: &[f64]) -> Vec<f64> {
        let mut ex = vec![0.0; x.len()];
        self.ops.directional(&self.e, x, &mut ex);
        x.iter().zip(&ex).map(|(v, e)| s * v + t * e).collect()
    }

    fn a_vec(&self, x: &[f64]) -> Vec<f64> {
        self.combo(self.a, -self.ih, x)
    }

    fn c_vec(&self, x: &[f64]) -> Vec<f64> {
        self.combo(self.cc, self.ih, x)
    }

    // Eᵀ = −E for the skew-symmetric y-derivatives
    fn at_vec(&self, x: &[f64]) -> Vec<f64> {
        self.combo(self.a, self.ih, x)
    }

    fn ct_vec(&self, x: &[f64]) -> Vec<f64> {
        self.combo(self.cc, -self.ih, x)
    }

    /// Solves `K x = y` in place.
    pub fn solve(&self, y: &mut [f64]) {
        let (m, n) = (self.m, self.n_xi);
        let blocks = n - 2;
        let len = n * m;
        let x0 = y[..m].to_vec();
        let xl = y[(n - 1) * m..len].to_vec();
        let mut s = y[len] - dot(&self.phase_boundary.0, &x0) - dot(&self.phase_boundary.1, &xl);
        // fold boundary values into the first and last interior rows
        let ax0 = self.a_vec(&x0);
        let cxl = self.c_vec(&xl);
        for j in 0..m {
            y[m + j] -= ax0[j];
            y[(n - 2) * m + j] -= cxl[j];
        }
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(blocks);
        let mut rt = y[m..2 * m].to_vec();
        for q in 0..blocks {
            let off = (q + 1) * m;
            if q > 0 {
                let az = self.a_vec(&z[q - 1]);
                rt = y[off..off + m].iter().zip(&az).map(|(r, v)| r - v).collect();
            }
            if q == blocks - 1 {
                break;
            }
            s -= dot(&self.v[q], &rt);
            z.push(gemv(&self.inv[q], &rt, false));
        }
        let mut aug = rt;
        aug.push(s);
        self.last.solve_in_place(col_mut(&mut aug));
        let dc = aug[m];
        let off = (n - 2) * m;
        y[off..off + m].copy_from_slice(&aug[..m]);
        for q in (0..blocks - 1).rev() {
            let off = (q + 1) * m;
            let cx = gemv(&self.inv[q], &self.c_vec(&y[off + m..off + 2 * m]), false);
            for j in 0..m {
                y[off + j] = z[q][j] - self.wb[q][j] * dc - cx[j];
            }
        }
        y[..m].copy_from_slice(&x0);
        y[(n - 1) * m..len].copy_from_slice(&xl);
        y[len] = dc;
    }

    /// Solves `Kᵀ x = y` in place.
    pub fn solve_transpose(&self, y: &mut [f64]) {
        let (m, n) = (self.m, self.n_xi);
        let blocks = n - 2;
        let len = n * m;
        let y0 = y[..m].to_vec();
        let yl = y[(n - 1) * m..len].to_vec();
        let mut s = y[len];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(blocks);
        let mut rt = y[m..2 * m].to_vec();
        for q in 0..blocks {
            let off = (q + 1) * m;
            if q > 0 {
                let cz = self.ct_vec(&z[q - 1]);
                rt = y[off..off + m].iter().zip(&cz).map(|(r, v)| r - v).collect();
            }
            if q == blocks - 1 {
                break;
            }
            s -= dot(&self.wb[q], &rt);
            z.push(gemv(&self.inv[q], &rt, true));
        }
        let mut aug = rt;
        aug.push(s);
        self.last.solve_transpose_in_place(col_mut(&mut aug));
        let xc = aug[m];
        let off = (n - 2) * m;
        y[off..off + m].copy_from_slice(&aug[..m]);
        for q in (0..blocks - 1).rev() {
            let off = (q + 1) * m;
            let ax = gemv(&self.inv[q], &self.at_vec(&y[off + m..off + 2 * m]), true);
            for j in 0..m {
                y[off + j] = z[q][j] - self.v[q][j] * xc - ax[j];
            }
        }
        // boundary rows: x_0 + Aᵀ x_1 + p_0 x_c = y_0, similarly at the far end
        let at1 = self.at_vec(&y[m..2 * m]);
        let ctl = self.ct_vec(&y[(n - 2) * m..(n - 1) * m]);
        for j in 0..m {
            y[j] = y0[j] - at1[j] - self.phase_boundary.0[j] * xc;
            y[(n - 1) * m + j] = yl[j] - ctl[j] - self.phase_boundary.1[j] * xc;
        }
        y[len] = xc;
    }
}

/// `M x` or `Mᵀ x`.
fn gemv(mat: &Mat<f64>, x: &[f64], transpose: bool) -> Vec<f64> {
    let mut out = vec![0.0; mat.nrows()];
    let xs = MatRef::from_column_major_slice(x, x.len(), 1);
    let os = MatMut::from_column_major_slice_mut(&mut out, mat.nrows(), 1);
    let lhs = if transpose { mat.as_ref().transpose() } else { mat.as_ref() };
    matmul(os, Accum::Replace, lhs, xs, 1.0, Par::Seq);
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `s x + t M x` (or `s x + t Mᵀ x`) for a dense column-major `M`.
fn dense_combo(s: f64, t: f64, mat: &Mat<f64>, x: &[f64], transpose: bool) -> Vec<f64> {
    let m = x.len();
    let mut out: Vec<f64> = x.iter().map(|v| s * v).collect();
    for j in 0..m {
        let col = mat.col_as_slice(j);
        if transpose {
            out[j] += t * dot(col, x);
        } else {
            let xj = t * x[j];
            out.iter_mut().zip(col).for_each(|(o, c)| *o += c * xj);
        }
    }
    out
}

/// Outcome of a Krylov solve.
#[derive(Debug, Clone, Copy)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Right-preconditioned restarted GMRES for `op(x) = b`, starting from `x = 0`.
pub fn gmres(
    op: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&mut [f64]),
    b: &[f64],
    rtol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<f64>, KrylovStats) {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return (x, KrylovStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut total = 0;
    while total < max_iter {
        let ax = op(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm2(&r);
        if beta / bnorm <= rtol {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut gvec = vec![beta];
        let mut k = 0;
        while k < restart && total < max_iter {
            let mut z = basis[k].clone();
            precond(&mut z);
            let mut w = op(&z);
            let mut col = vec![0.0; k + 2];
            // modified Gram–Schmidt with one reorthogonalization pass
            for _ in 0..2 {
                for (i, vi) in basis.iter().enumerate() {
                    let hij = dot(&w, vi);
                    col[i] += hij;
                    w.iter_mut().zip(vi).for_each(|(wv, v)| *wv -= hij * v);
                }
            }
            let wn = norm2(&w);
            col[k + 1] = wn;
            for i in 0..k {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let den = (col[k] * col[k] + col[k + 1] * col[k + 1]).sqrt();
            let (c, s) = if den == 0.0 { (1.0, 0.0) } else { (col[k] / den, col[k + 1] / den) };
            col[k] = den;
            col[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            gvec.push(-s * gvec[k]);
            gvec[k] *= c;
            hess.push(col);
            total += 1;
            k += 1;
            if gvec[k].abs() / bnorm <= rtol || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // back substitution on the triangular Hessenberg factor
        let mut yk = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = gvec[i];
            for j in i + 1..k {
                s -= hess[j][i] * yk[j];
            }
            yk[i] = s / hess[i][i];
        }
        let mut upd = vec![0.0; n];
        for (j, &yj) in yk.iter().enumerate() {
            upd.iter_mut().zip(&basis[j]).for_each(|(u, v)| *u += yj * v);
        }
        precond(&mut upd);
        x.iter_mut().zip(&upd).for_each(|(a, b)| *a += b);
    }
    let ax = op(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    (x, KrylovStats { iterations: total, relative_residual: norm2(&r) / bnorm })
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cylinder::front_residual;
    use crate::medium::{make_cubic_medium, Mode};

    fn setup(dim: usize, n_y: usize) -> (CylinderGrid, ReactionModel, ProfileField, Vec<f64>) {
        let modes = if dim == 1 {
            vec![Mode { k: vec![1], amp: 0.1, phase: 0.2 }]
        } else {
            vec![Mode { k: vec![1, 0], amp: 0.08, phase: 0.0 }, Mode { k: vec![1, 1], amp: 0.05, phase: 0.4 }]
        };
        let model = make_cubic_medium(dim, 0.3, modes).unwrap();
        let grid = CylinderGrid::new(8.0, 65, n_y, dim).unwrap();
        let u = ProfileField::from_fn(&grid, |xi, y| {
            crate::cylinder::logistic(xi) + 0.05 * (2.0 * std::f64::consts::PI * y[0]).sin() * (-xi * xi).exp()
        });
        let e = if dim == 1 { vec![1.0] } else { vec![0.6, 0.8] };
        (grid, model, u, e)
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn matvec_matches_directional_derivative() {
        for (dim, ny) in [(1, 16), (2, 16), (1, 20)] {
            let (grid, model, u, e) = setup(dim, ny);
            let c = 0.25;
            let lin = assemble_linearization(&grid, &model, &e, c, &u).unwrap();
            let v = pseudo_random(grid.len(), 7);
            let jv = lin.apply_field(&v);
            let eps = 1e-6;
            let plus = ProfileField { grid: grid.clone(), values: u.values.iter().zip(&v).map(|(a, b)| a + eps * b).collect() };
            let minus = ProfileField { grid: grid.clone(), values: u.values.iter().zip(&v).map(|(a, b)| a - eps * b).collect() };
            let rp = front_residual(&grid, &model, &e, c, &plus).unwrap();
            let rm = front_residual(&grid, &model, &e, c, &minus).unwrap();
            let scale = jv.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for k in 0..grid.len() {
                let fd = (rp.values[k] - rm.values[k]) / (2.0 * eps);
                assert!((fd - jv[k]).abs() <= 1e-6 * scale, "dim {dim} node {k}: {fd} vs {}", jv[k]);
            }
        }
    }

    #[test]
    fn constant_direction_gives_fu() {
        let (grid, model, u, e) = setup(2, 16);
        let lin = assemble_linearization(&grid, &model, &e, 0.3, &u).unwrap();
        let v = vec![1.0; grid.len()];
        let jv = lin.apply_field(&v);
        let m = grid.m();
        for k in m..(grid.n_xi - 1) * m {
            let i = k / m;
            if i > 1 && i < grid.n_xi - 2 {
                assert!((jv[k] - lin.fu[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        for (dim, ny) in [(1, 16), (2, 16), (1, 20)] {
            let (grid, model, u, e) = setup(dim, ny);
            let mut lin = assemble_linearization(&grid, &model, &e, 0.2, &u).unwrap();
            lin.set_phase_from(&u);
            let x = pseudo_random(lin.dim(), 3);
            let z = pseudo_random(lin.dim(), 5);
            let lhs = dot(&lin.apply(&x), &z);
            let rhs = dot(&x, &lin.apply_transpose(&z));
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn bordered_solves_invert_operator() {
        for (dim, ny) in [(1, 1), (1, 16), (2, 16)] {
            let (grid, model, u, e) = if ny == 1 {
                let model = make_cubic_medium(1, 0.3, vec![]).unwrap();
                let grid = CylinderGrid::new(8.0, 65, 1, 1).unwrap();
                let u = ProfileField::logistic(&grid);
                (grid, model, u, vec![1.0])
            } else {
                setup(dim, ny)
            };
            let mut lin = assemble_linearization(&grid, &model, &e, 0.28, &u).unwrap();
            lin.set_phase_from(&u);
            let fac = BorderedFactor::new(&lin);
            let b = pseudo_random(lin.dim(), 11);
            let mut x = b.clone();
            fac.solve(&mut x);
            let r = lin.apply(&x);
            let err = r.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "forward solve error {err}");
            let mut xt = b.clone();
            fac.solve_transpose(&mut xt);
            let rt = lin.apply_transpose(&xt);
            let err = rt.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "transpose solve error {err}");
        }
    }

    #[test]
    fn gmres_with_stale_preconditioner() {
        let (grid, model, u, e) = setup(2, 16);
        let mut lin = assemble_linearization(&grid, &model, &e, 0.28, &u).unwrap();
        lin.set_phase_from(&u);
        let fac = BorderedFactor::new(&lin);
        let e2 = vec![(0.6f64 + 0.05).min(1.0), 0.0];
        let e2 = vec![e2[0], (1.0 - e2[0] * e2[0]).sqrt()];
        let mut lin2 = assemble_linearization(&grid, &model, &e2, 0.29, &u).unwrap();
        lin2.set_phase_from(&u);
        let b = pseudo_random(lin.dim(), 13);
        let (x, stats) = gmres(|v| lin2.apply(v), |v| fac.solve(v), &b, 1e-12, 50, 200);
        assert!(stats.relative_residual < 1e-11, "{stats:?}");
        assert!(stats.iterations < 40);
        let r = lin2.apply(&x);
        assert!(r.iter().zip(&b).all(|(a, b)| (a - b).abs() < 1e-9));
    }
}
