//! Dense SVD: column-pivoted Householder QR followed by one-sided (Hestenes)
//! Jacobi on the transposed triangular factor.
//!
//! Running Jacobi on `R^T` instead of `A` shrinks the problem to `n x n` and,
//! thanks to the pivoting, usually converges in a handful of sweeps. Rotations
//! are scheduled round-robin so every round is a set of disjoint column pairs.

use super::DenseMatrix;
use crate::exec;

/// `A = U diag(s) V^T`, singular values sorted in decreasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows x k` left singular vectors, `k = min(rows, cols)`.
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    /// `cols x k` right singular vectors.
    pub v: DenseMatrix,
    /// Jacobi sweeps used.
    pub sweeps: usize,
}

const MAX_SWEEPS: usize = 100;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

struct Reflector {
    v: Vec<f64>,
    /// `2 / (v^T v)`, zero for the identity.
    beta: f64,
}

impl Reflector {
    /// Apply `I - beta v v^T` to `y[offset..]`.
    fn apply(&self, offset: usize, y: &mut [f64]) {
        if self.beta == 0.0 {
            return;
        }
        let tail = &mut y[offset..];
        let s = dot(&self.v, tail) * self.beta;
        axpy(-s, &self.v, tail);
    }
}

/// Pivoted QR of the column set `cols` (each of length `m`), in place: on return
/// `cols[j][..=j]` holds column `j` of `R`.
fn pivoted_qr(cols: &mut [Vec<f64>], m: usize) -> (Vec<Reflector>, Vec<usize>) {
    let n = cols.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
    let mut reference = norms.clone();
    let mut reflectors = Vec::with_capacity(n);

    for k in 0..n {
        let (piv, _) = norms[k..]
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        let piv = piv + k;
        if piv != k {
            cols.swap(k, piv);
            perm.swap(k, piv);
            norms.swap(k, piv);
            reference.swap(k, piv);
        }

        let x = &cols[k][k..];
        let xnorm = dot(x, x).sqrt();
        let refl = if xnorm == 0.0 {
            Reflector { v: vec![0.0; m - k], beta: 0.0 }
        } else {
            let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vv = dot(&v, &v);
            let col = &mut cols[k];
            col[k] = alpha;
            col[k + 1..].iter_mut().for_each(|c| *c = 0.0);
            Reflector { v, beta: if vv > 0.0 { 2.0 / vv } else { 0.0 } }
        };

        let (_, rest) = cols.split_at_mut(k + 1);
        exec::for_each_mut(rest, |c| refl.apply(k, c));

        for j in k + 1..n {
            let r = cols[j][k];
            norms[j] -= r * r;
            // recompute once cancellation has eaten most of the digits
            if norms[j] <= 1e-6 * reference[j] {
                norms[j] = dot(&cols[j][k + 1..], &cols[j][k + 1..]);
                reference[j] = norms[j];
            }
        }
        reflectors.push(refl);
    }
    (reflectors, perm)
}

/// Orthogonalise `x` pairwise, accumulating the rotations into `v`.
fn jacobi(x: &mut [Vec<f64>], v: &mut [Vec<f64>]) -> usize {
    let n = x.len();
    if n < 2 {
        return 0;
    }
    let tol = f64::EPSILON * n as f64;
    let slots = n + n % 2;
    let mut order: Vec<usize> = (0..slots).collect();

    struct Pair {
        xi: Vec<f64>,
        xj: Vec<f64>,
        vi: Vec<f64>,
        vj: Vec<f64>,
        rotated: bool,
    }

    for sweep in 1..=MAX_SWEEPS {
        let mut rotations = 0usize;
        for _round in 0..slots - 1 {
            let idx: Vec<(usize, usize)> = (0..slots / 2)
                .map(|i| {
                    let (a, b) = (order[i], order[slots - 1 - i]);
                    (a.min(b), a.max(b))
                })
                .filter(|&(_, b)| b < n)
                .collect();
            let mut pairs: Vec<Pair> = idx
                .iter()
                .map(|&(i, j)| Pair {
                    xi: std::mem::take(&mut x[i]),
                    xj: std::mem::take(&mut x[j]),
                    vi: std::mem::take(&mut v[i]),
                    vj: std::mem::take(&mut v[j]),
                    rotated: false,
                })
                .collect();
            exec::for_each_mut(&mut pairs, |p| {
                let alpha = dot(&p.xi, &p.xi);
                let beta = dot(&p.xj, &p.xj);
                let gamma = dot(&p.xi, &p.xj);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    return;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut p.xi, &mut p.xj, c, s);
                rotate(&mut p.vi, &mut p.vj, c, s);
                p.rotated = true;
            });
            for (p, &(i, j)) in pairs.into_iter().zip(&idx) {
                rotations += p.rotated as usize;
                x[i] = p.xi;
                x[j] = p.xj;
                v[i] = p.vi;
                v[j] = p.vj;
            }
            // circle method: keep slot 0 fixed, rotate the rest
            order[1..].rotate_right(1);
        }
        if rotations == 0 {
            return sweep;
        }
    }
    MAX_SWEEPS
}

#[inline]
fn rotate(a: &mut [f64], b: &mut [f64], c: f64, s: f64) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xa, yb) = (*x, *y);
        *x = c * xa - s * yb;
        *y = s * xa + c * yb;
    }
}

pub fn svd(a: &DenseMatrix) -> Svd {
    if a.rows() < a.cols() {
        let t = svd(&a.transpose());
        return Svd { u: t.v, singular_values: t.singular_values, v: t.u, sweeps: t.sweeps };
    }
    let (m, n) = (a.rows(), a.cols());
    if n == 0 {
        return Svd { u: DenseMatrix::zeros(m, 0), singular_values: vec![], v: DenseMatrix::zeros(0, 0), sweeps: 0 };
    }

    let mut cols: Vec<Vec<f64>> = (0..n).map(|c| a.col_vec(c)).collect();
    let (reflectors, perm) = pivoted_qr(&mut cols, m);

    // Columns of X = R^T are the rows of R.
    let mut x: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if j >= i { cols[j][i] } else { 0.0 }).collect())
        .collect();
    drop(cols);
    let mut vx: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        })
        .collect();
    let sweeps = jacobi(&mut x, &mut vx);

    let sigma: Vec<f64> = x.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));

    // U = Q [V_x; 0], applied column by column.
    let mut ucols: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let mut y = vx[i].clone();
            y.resize(m, 0.0);
            y
        })
        .collect();
    exec::for_each_mut(&mut ucols, |y| {
        for (k, r) in reflectors.iter().enumerate().rev() {
            r.apply(k, y);
        }
    });

    let mut u = DenseMatrix::zeros(m, n);
    let mut v = DenseMatrix::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    for (out, &i) in order.iter().enumerate() {
        let s = sigma[i];
        singular_values.push(s);
        for (r, &val) in ucols[out].iter().enumerate() {
            u.set(r, out, val);
        }
        if s > 0.0 {
            for (j, &val) in x[i].iter().enumerate() {
                v.set(perm[j], out, val / s);
            }
        }
    }
    Svd { u, singular_values, v, sweeps }
}
