//! Image quality metrics.

use crate::error::{ensure, Result};
use crate::geometry::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_RANGE: f64 = 1.0;

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    ensure!(
        a.same_shape(b),
        "image shapes differ: {}x{} vs {}x{}",
        a.rows(),
        a.cols(),
        b.rows(),
        b.cols()
    );
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.values().len();
    ensure!(n > 0, "empty images");
    Ok(a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64)
}

pub fn rmse(a: &Image, b: &Image) -> Result<f64> {
    Ok(mse(a, b)?.sqrt())
}

/// `20 log10(max_val / rmse)`; `+inf` for identical images.
pub fn psnr(a: &Image, reference: &Image, max_val: f64) -> Result<f64> {
    ensure!(max_val > 0.0, "max_val must be positive, got {max_val}");
    let e = rmse(a, reference)?;
    Ok(if e == 0.0 { f64::INFINITY } else { 20.0 * (max_val / e).log10() })
}

/// Normalised 1D Gaussian of length [`SSIM_WINDOW`].
pub fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable valid-mode filtering of `src` (`rows x cols`).
fn filter_valid(src: &[f64], rows: usize, cols: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let w = SSIM_WINDOW;
    let (or, oc) = (rows + 1 - w, cols + 1 - w);
    let mut horiz = vec![0.0; rows * oc];
    for r in 0..rows {
        let row = &src[r * cols..(r + 1) * cols];
        for c in 0..oc {
            horiz[r * oc + c] = row[c..c + w].iter().zip(k).map(|(x, kk)| x * kk).sum();
        }
    }
    let mut out = vec![0.0; or * oc];
    for r in 0..or {
        for c in 0..oc {
            out[r * oc + c] = (0..w).map(|i| horiz[(r + i) * oc + c] * k[i]).sum();
        }
    }
    out
}

struct LocalStats {
    mu_a: Vec<f64>,
    mu_b: Vec<f64>,
    var_a: Vec<f64>,
    var_b: Vec<f64>,
    cov: Vec<f64>,
}

fn local_stats(a: &Image, b: &Image) -> Result<LocalStats> {
    check_pair(a, b)?;
    ensure!(
        a.rows() >= SSIM_WINDOW && a.cols() >= SSIM_WINDOW,
        "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
        a.rows(),
        a.cols()
    );
    let k = gaussian_kernel();
    let (r, c) = (a.rows(), a.cols());
    let (av, bv) = (a.values(), b.values());
    let f = |v: Vec<f64>| filter_valid(&v, r, c, &k);
    let mu_a = filter_valid(av, r, c, &k);
    let mu_b = filter_valid(bv, r, c, &k);
    let aa = f(av.iter().map(|x| x * x).collect());
    let bb = f(bv.iter().map(|x| x * x).collect());
    let ab = f(av.iter().zip(bv).map(|(x, y)| x * y).collect());
    let var_a = aa.iter().zip(&mu_a).map(|(s, m)| s - m * m).collect();
    let var_b = bb.iter().zip(&mu_b).map(|(s, m)| s - m * m).collect();
    let cov = ab.iter().zip(mu_a.iter().zip(&mu_b)).map(|(s, (ma, mb))| s - ma * mb).collect();
    Ok(LocalStats { mu_a, mu_b, var_a, var_b, cov })
}

/// Mean SSIM over all fully contained 11x11 Gaussian windows.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    let s = local_stats(a, b)?;
    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let n = s.mu_a.len() as f64;
    let total: f64 = (0..s.mu_a.len())
        .map(|i| {
            let (ma, mb) = (s.mu_a[i], s.mu_b[i]);
            ((2.0 * ma * mb + c1) * (2.0 * s.cov[i] + c2))
                / ((ma * ma + mb * mb + c1) * (s.var_a[i] + s.var_b[i] + c2))
        })
        .sum();
    Ok(total / n)
}

/// Mean of the contrast-structure factor `(2 cov + C2) / (var_a + var_b + C2)`.
pub fn ssim_contrast_structure(a: &Image, b: &Image) -> Result<f64> {
    let s = local_stats(a, b)?;
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let n = s.cov.len() as f64;
    Ok((0..s.cov.len()).map(|i| (2.0 * s.cov[i] + c2) / (s.var_a[i] + s.var_b[i] + c2)).sum::<f64>() / n)
}

/// `MSE + mu (1 - SSIM)`, lower is better.
pub fn joint_score(a: &Image, reference: &Image, mu: f64) -> Result<f64> {
    let m = mse(a, reference)?;
    if mu == 0.0 {
        return Ok(m);
    }
    Ok(m + mu * (1.0 - ssim(a, reference)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub psnr: f64,
    pub rmse: f64,
    pub ssim: f64,
    pub joint: f64,
}

impl MetricRow {
    /// All metrics of `test` against `reference` with `max_val = 1` and `mu = 1`.
    pub fn evaluate(name: impl Into<String>, test: &Image, reference: &Image) -> Result<Self> {
        let rmse = rmse(test, reference)?;
        let ssim = ssim(test, reference)?;
        Ok(Self {
            name: name.into(),
            psnr: psnr(test, reference, 1.0)?,
            rmse,
            ssim,
            joint: rmse * rmse + (1.0 - ssim),
        })
    }
}

pub const METRICS_CSV_HEADER: &str = "name,psnr,rmse,ssim,joint";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(METRICS_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.name, r.psnr, r.rmse, r.ssim, r.joint));
    }
    s
}
