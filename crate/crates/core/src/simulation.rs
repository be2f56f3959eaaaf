//! Phantoms and sinogram noise.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure, Error, Result};
use crate::exec;
use crate::geometry::{Image, Sinogram};

/// `(A, a, b, x0, y0, phi_deg)` per ellipse, Toft's contrast-enhanced intensities.
pub const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

fn pixel_centre(n: usize, row: usize, col: usize) -> (f64, f64) {
    let h = 2.0 / n as f64;
    (-1.0 + (col as f64 + 0.5) * h, 1.0 - (row as f64 + 0.5) * h)
}

fn inside_ellipse(e: &[f64; 6], x: f64, y: f64) -> bool {
    let (s, c) = e[5].to_radians().sin_cos();
    let (dx, dy) = (x - e[3], y - e[4]);
    let xr = dx * c + dy * s;
    let yr = -dx * s + dy * c;
    (xr / e[1]).powi(2) + (yr / e[2]).powi(2) <= 1.0
}

/// Ellipse phantom from an explicit table, sampled at pixel centres and clipped to `[0, 1]`.
pub fn ellipse_phantom(n: usize, table: &[[f64; 6]]) -> Image {
    Image::from_fn(n, n, |r, c| {
        let (x, y) = pixel_centre(n, r, c);
        table.iter().filter(|e| inside_ellipse(e, x, y)).map(|e| e[0]).sum::<f64>().clamp(0.0, 1.0)
    })
}

pub fn shepp_logan(n: usize) -> Result<Image> {
    ensure!(n >= 16, "Shepp-Logan phantom needs n >= 16, got {n}");
    Ok(ellipse_phantom(n, &SHEPP_LOGAN))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub value: f64,
}

/// Sum of the values of all disks containing each pixel centre.
pub fn disk_phantom(n: usize, disks: &[Disk]) -> Result<Image> {
    ensure!(n >= 2, "disk phantom needs n >= 2, got {n}");
    Ok(Image::from_fn(n, n, |r, c| {
        let (x, y) = pixel_centre(n, r, c);
        disks
            .iter()
            .filter(|d| (x - d.cx).powi(2) + (y - d.cy).powi(2) <= d.radius * d.radius)
            .map(|d| d.value)
            .sum()
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    Poisson,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Poisson => "poisson",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "poisson" => Ok(NoiseKind::Poisson),
            other => Err(Error::invalid(format!("unknown noise kind {other:?}, expected gaussian or poisson"))),
        }
    }
}

/// Relative standard deviation for Gaussian noise, incident photon count for Poisson.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, level: f64, seed: u64) -> Result<Self> {
        ensure!(level > 0.0 && level.is_finite(), "noise level must be positive, got {level}");
        if kind == NoiseKind::Poisson {
            ensure!(level.fract() == 0.0 && level <= u64::MAX as f64, "photon count must be a positive integer, got {level}");
        }
        Ok(Self { kind, level, seed })
    }

    pub fn apply(&self, sino: &Sinogram) -> Result<Sinogram> {
        match self.kind {
            NoiseKind::Gaussian => add_gaussian(sino, self.level, self.seed),
            NoiseKind::Poisson => add_poisson(sino, self.level as u64, self.seed),
        }
    }
}

/// Generator for entry `index`: one ChaCha stream per entry, so values do not
/// depend on traversal order.
fn entry_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn add_gaussian(sino: &Sinogram, level: f64, seed: u64) -> Result<Sinogram> {
    ensure!(level > 0.0 && level.is_finite(), "noise level must be positive, got {level}");
    let vals = sino.values();
    let mean_abs = if vals.is_empty() { 0.0 } else { vals.iter().map(|v| v.abs()).sum::<f64>() / vals.len() as f64 };
    let std = level * mean_abs;
    let mut out = vals.to_vec();
    exec::fill_indexed(&mut out, |i| {
        let z: f64 = entry_rng(seed, i).sample(StandardNormal);
        vals[i] + std * z
    });
    Sinogram::new(sino.n_views(), sino.n_bins(), out)
}

/// Largest mean sampled exactly by inversion.
pub const POISSON_INVERSION_LIMIT: f64 = 50.0;

pub(crate) fn sample_poisson(lambda: f64, rng: &mut ChaCha8Rng) -> u64 {
    if lambda <= POISSON_INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut p = (-lambda).exp();
        let mut cdf = p;
        let mut k = 0u64;
        while u > cdf && p > 0.0 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
        }
        k
    } else {
        let z: f64 = rng.sample(StandardNormal);
        (lambda + lambda.sqrt() * z + 0.5).floor().max(0.0) as u64
    }
}

/// Photon-count noise: `c ~ Poisson(I0 exp(-g))`, `c >= 1`, output `-ln(c / I0)`.
pub fn add_poisson(sino: &Sinogram, i0: u64, seed: u64) -> Result<Sinogram> {
    ensure!(i0 >= 1, "incident photon count must be >= 1");
    ensure!(sino.values().iter().all(|&g| g >= 0.0), "Poisson noise needs a nonnegative sinogram");
    let vals = sino.values();
    let i0f = i0 as f64;
    let mut out = vals.to_vec();
    exec::fill_indexed(&mut out, |i| {
        let c = sample_poisson(i0f * (-vals[i]).exp(), &mut entry_rng(seed, i)).max(1);
        -(c as f64 / i0f).ln()
    });
    Sinogram::new(sino.n_views(), sino.n_bins(), out)
}
