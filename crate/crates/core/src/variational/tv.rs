//! Isotropic total variation with forward differences and Neumann boundary.

use crate::geometry::Image;

/// Forward-difference gradient; the last row/column difference is zero.
pub fn gradient(x: &Image) -> (Vec<f64>, Vec<f64>) {
    let (rows, cols) = (x.rows(), x.cols());
    let v = x.values();
    let mut gr = vec![0.0; v.len()];
    let mut gc = vec![0.0; v.len()];
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if r + 1 < rows {
                gr[i] = v[i + cols] - v[i];
            }
            if c + 1 < cols {
                gc[i] = v[i + 1] - v[i];
            }
        }
    }
    (gr, gc)
}

/// `div = -grad^T`.
pub fn divergence(pr: &[f64], pc: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            let mut d = 0.0;
            if r + 1 < rows {
                d += pr[i];
            }
            if r > 0 {
                d -= pr[i - cols];
            }
            if c + 1 < cols {
                d += pc[i];
            }
            if c > 0 {
                d -= pc[i - 1];
            }
            out[i] = d;
        }
    }
    out
}

pub fn total_variation(x: &Image) -> f64 {
    let (gr, gc) = gradient(x);
    gr.iter().zip(&gc).map(|(a, b)| (a * a + b * b).sqrt()).sum()
}

/// `1/2 ||x - v||^2 + weight TV(x)`.
pub fn prox_objective(x: &Image, v: &Image, weight: f64) -> f64 {
    let fid: f64 = x.values().iter().zip(v.values()).map(|(a, b)| (a - b).powi(2)).sum();
    0.5 * fid + weight * total_variation(x)
}

/// Dual projected-gradient solver for the TV proximal map. The dual field
/// persists between calls, so repeated calls on slowly changing inputs warm-start.
#[derive(Debug, Clone, Default)]
pub struct TvProx {
    pr: Vec<f64>,
    pc: Vec<f64>,
}

/// Dual step `1/8`, the reciprocal of the bound on `||grad||^2`.
const DUAL_STEP: f64 = 0.125;

impl TvProx {
    pub fn new() -> Self {
        Self::default()
    }

    /// Approximate `argmin_x 1/2 ||x - v||^2 + weight TV(x)` with `iters` dual steps.
    pub fn apply(&mut self, v: &Image, weight: f64, iters: usize) -> Image {
        if weight <= 0.0 {
            return v.clone();
        }
        let (rows, cols) = (v.rows(), v.cols());
        let len = v.values().len();
        if self.pr.len() != len {
            self.pr = vec![0.0; len];
            self.pc = vec![0.0; len];
        }
        let scaled = v.map(|x| x / weight);
        for _ in 0..iters {
            let div = divergence(&self.pr, &self.pc, rows, cols);
            let resid = Image::from_vec_unchecked(
                rows,
                cols,
                div.iter().zip(scaled.values()).map(|(d, s)| d - s).collect(),
            );
            let (gr, gc) = gradient(&resid);
            for i in 0..len {
                let a = self.pr[i] + DUAL_STEP * gr[i];
                let b = self.pc[i] + DUAL_STEP * gc[i];
                let norm = (a * a + b * b).sqrt().max(1.0);
                self.pr[i] = a / norm;
                self.pc[i] = b / norm;
            }
        }
        let div = divergence(&self.pr, &self.pc, rows, cols);
        Image::from_vec_unchecked(rows, cols, v.values().iter().zip(&div).map(|(x, d)| x - weight * d).collect())
    }

    pub fn reset(&mut self) {
        self.pr.clear();
        self.pc.clear();
    }
}

/// Cold-started [`TvProx::apply`].
pub fn tv_prox(v: &Image, weight: f64, inner_iters: usize) -> Image {
    TvProx::new().apply(v, weight, inner_iters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::rmse;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(rows, cols, |_, _| rng.random::<f64>())
    }

    fn step_image() -> Image {
        Image::from_fn(8, 8, |_, c| if c >= 4 { 1.0 } else { 0.0 })
    }

    #[test]
    fn divergence_is_negative_adjoint() {
        let x = random(5, 7, 1);
        let pr = random(5, 7, 2).into_values();
        let pc = random(5, 7, 3).into_values();
        let (gr, gc) = gradient(&x);
        let lhs: f64 = gr.iter().zip(&pr).chain(gc.iter().zip(&pc)).map(|(a, b)| a * b).sum();
        let div = divergence(&pr, &pc, 5, 7);
        let rhs: f64 = -x.values().iter().zip(&div).map(|(a, b)| a * b).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn gradient_norm_bound() {
        // ||grad||^2 <= 8, checked by power iteration on -div grad
        let mut x = random(9, 9, 4);
        let mut lambda = 0.0;
        for _ in 0..300 {
            let (gr, gc) = gradient(&x);
            let y = divergence(&gr, &gc, 9, 9);
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            lambda = norm / x.values().iter().map(|v| v * v).sum::<f64>().sqrt();
            x = Image::new(9, 9, y.iter().map(|v| -v / norm).collect()).unwrap();
        }
        assert!(lambda <= 8.0);
    }

    #[test]
    fn tv_values() {
        assert_eq!(total_variation(&Image::filled(4, 4, 0.3)), 0.0);
        assert_eq!(total_variation(&step_image()), 8.0);
    }

    #[test]
    fn zero_weight_and_constant() {
        let v = random(6, 6, 5);
        assert_eq!(tv_prox(&v, 0.0, 50), v);
        let c = Image::filled(6, 6, 0.7);
        let out = tv_prox(&c, 2.0, 50);
        assert!(out.values().iter().all(|x| (x - 0.7).abs() < 1e-12));
    }

    #[test]
    fn step_image_matches_long_run() {
        let v = step_image();
        let reference = tv_prox(&v, 0.1, 100_000);
        let out = tv_prox(&v, 0.1, super::super::DEFAULT_INNER_TV_ITERS);
        assert!(rmse(&out, &reference).unwrap() <= 1e-4);
        // the exact minimiser shrinks each side of the step by weight * perimeter / area
        let expect = 0.1 * 8.0 / 32.0;
        assert!((reference.get(0, 0) - expect).abs() < 1e-6);
        assert!((reference.get(0, 7) - (1.0 - expect)).abs() < 1e-6);
    }

    #[test]
    fn dual_objective_decreases() {
        let v = random(10, 10, 6);
        let w = 0.2;
        let mut prox = TvProx::new();
        let mut last = f64::INFINITY;
        for _ in 0..40 {
            let x = prox.apply(&v, w, 5);
            // dual objective ||v - w div p||^2 = ||x||^2 is non-increasing under projected gradient
            let d: f64 = x.values().iter().map(|a| a * a).sum();
            assert!(d <= last + 1e-12);
            last = d;
        }
    }

    #[test]
    fn primal_objective_trend() {
        let v = random(10, 10, 7);
        let w = 0.2;
        let objs: Vec<f64> = [1, 10, 100, 1000].iter().map(|&k| prox_objective(&tv_prox(&v, w, k), &v, w)).collect();
        assert!(objs.windows(2).all(|p| p[1] <= p[0] + 1e-12), "{objs:?}");
        assert!(objs[3] < prox_objective(&v, &v, w));
    }

    #[test]
    fn one_lipschitz() {
        for seed in 0..20 {
            let a = random(8, 8, 100 + seed);
            let b = random(8, 8, 200 + seed);
            let pa = tv_prox(&a, 0.15, 60);
            let pb = tv_prox(&b, 0.15, 60);
            let d_in = rmse(&a, &b).unwrap();
            let d_out = rmse(&pa, &pb).unwrap();
            assert!(d_out <= d_in + 1e-8, "{d_out} > {d_in}");
        }
    }
}
