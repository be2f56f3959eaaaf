//! Fan-beam filtered back-projection for the flat detector.
//!
//! Processing happens on the virtual detector through the rotation centre,
//! where bin spacing is `a = bin_width * R_s / (R_s + R_d)`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::{view_angles, Image, ScanGeometry, Sinogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterKind {
    #[default]
    Ramp,
    /// Ramp apodised by a Hann window reaching zero at Nyquist.
    Hann,
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Ramp => "ramp",
            FilterKind::Hann => "hann",
        })
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ramp" => Ok(FilterKind::Ramp),
            "hann" | "hann-windowed-ramp" => Ok(FilterKind::Hann),
            other => Err(Error::invalid(format!("unknown filter {other:?}, expected ramp or hann"))),
        }
    }
}

/// Discrete ramp taps `h[k]` for `k = 0..len`, in units of `1 / a^2`.
fn ramp_taps(len: usize) -> Vec<f64> {
    (0..len)
        .map(|k| match k {
            0 => 0.25,
            k if k % 2 == 1 => -1.0 / (std::f64::consts::PI * k as f64).powi(2),
            _ => 0.0,
        })
        .collect()
}

/// Symmetric filter taps `g[|k|]` for `|k| < n_bins`.
pub fn filter_taps(kind: FilterKind, n_bins: usize) -> Vec<f64> {
    let h = ramp_taps(n_bins + 1);
    match kind {
        FilterKind::Ramp => h[..n_bins].to_vec(),
        FilterKind::Hann => (0..n_bins)
            .map(|k| {
                let left = if k == 0 { h[1] } else { h[k - 1] };
                0.5 * h[k] + 0.25 * (left + h[k + 1])
            })
            .collect(),
    }
}

/// Cosine-weighted, filtered projections `Q` on the virtual detector.
fn filtered_views(sino: &Sinogram, geom: &ScanGeometry, kind: FilterKind) -> Vec<f64> {
    let nb = geom.n_bins();
    let d = geom.source_radius();
    let mag = d / (d + geom.detector_radius());
    let a = geom.bin_width() * mag;
    let taps = filter_taps(kind, nb);
    let weights: Vec<f64> = (0..nb)
        .map(|b| {
            let s = geom.bin_offset(b) * mag;
            d / (d * d + s * s).sqrt()
        })
        .collect();
    let mut out = vec![0.0; sino.values().len()];
    exec::for_each_chunk_mut(&mut out, nb, |v, q| {
        let weighted: Vec<f64> = sino.view(v).iter().zip(&weights).map(|(r, w)| r * w).collect();
        for (i, qi) in q.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &r) in weighted.iter().enumerate() {
                acc += r * taps[i.abs_diff(j)];
            }
            // 1/2 of the fan-beam kernel, 1/a^2 from the taps, a from the quadrature
            *qi = 0.5 * acc / a;
        }
    });
    out
}

/// Filtered back-projection over the scanned arc, without rescaling for
/// missing angles.
pub fn fbp(sino: &Sinogram, geom: &ScanGeometry, kind: FilterKind) -> Result<Image> {
    geom.check_sinogram(sino)?;
    let n = geom.n();
    let nb = geom.n_bins();
    let q = filtered_views(sino, geom, kind);
    let d = geom.source_radius();
    let a = geom.bin_width() * d / (d + geom.detector_radius());
    let centre = (nb as f64 - 1.0) / 2.0;
    let dbeta = geom.angle_step_rad();
    let trig: Vec<(f64, f64)> = view_angles(geom).into_iter().map(f64::sin_cos).collect();

    let mut img = Image::square_zeros(n);
    exec::for_each_chunk_mut(img.values_mut(), n, |row, out| {
        for (col, px) in out.iter_mut().enumerate() {
            let [x, y] = geom.pixel_center(row, col);
            let mut acc = 0.0;
            for (v, &(s, c)) in trig.iter().enumerate() {
                let along = d - (x * c + y * s);
                let across = -x * s + y * c;
                let s_virtual = d * across / along;
                let pos = s_virtual / a + centre;
                if pos < 0.0 || pos > (nb - 1) as f64 {
                    continue;
                }
                let i0 = (pos.floor() as usize).min(nb.saturating_sub(2));
                let frac = pos - i0 as f64;
                let view = &q[v * nb..(v + 1) * nb];
                let val = if nb == 1 { view[0] } else { view[i0] * (1.0 - frac) + view[i0 + 1] * frac };
                let u = along / d;
                acc += val / (u * u);
            }
            *px = acc * dbeta;
        }
    });
    Ok(img)
}
