//! Fan-beam acquisition geometry and the raster types shared by every module.
//!
//! Coordinates: the image is centred on the rotation axis. Pixel `(row, col)`
//! covers `x in [x0 + col*h, x0 + (col+1)*h]` and `y in [y1 - (row+1)*h, y1 - row*h]`
//! with `x0 = -n*h/2` and `y1 = n*h/2`, so row 0 is the top of the image.
//!
//! At view angle `beta` the source sits at `source_radius * (cos beta, sin beta)`
//! and the flat detector is perpendicular to that direction at distance
//! `detector_radius` on the opposite side. Bin `b` is centred at offset
//! `(b - (n_bins - 1)/2) * bin_width` along `(-sin beta, cos beta)`.

use crate::config::Config;
use crate::error::{ensure, Error, Result};

/// Square or rectangular pixel raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        ensure!(rows > 0 && cols > 0, "image dimensions must be positive, got {rows}x{cols}");
        ensure!(
            values.len() == rows * cols,
            "image {rows}x{cols} needs {} values, got {}",
            rows * cols,
            values.len()
        );
        ensure!(values.iter().all(|v| v.is_finite()), "image contains non-finite values");
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn square_zeros(n: usize) -> Self {
        Self::zeros(n, n)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, values: vec![value; rows * cols] }
    }

    /// Build from a per-pixel function of `(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self { rows, cols, values }
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Side length of a square image.
    pub fn side(&self) -> Option<usize> {
        (self.rows == self.cols).then_some(self.rows)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.cols + col] = value;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image::from_vec_unchecked(self.rows, self.cols, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Horizontal mirror image (columns reversed).
    pub fn flip_horizontal(&self) -> Image {
        Image::from_fn(self.rows, self.cols, |r, c| self.get(r, self.cols - 1 - c))
    }
}

/// Projection data indexed by `(view, bin)`, row-major by view.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    n_views: usize,
    n_bins: usize,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn new(n_views: usize, n_bins: usize, values: Vec<f64>) -> Result<Self> {
        ensure!(n_views > 0 && n_bins > 0, "sinogram dimensions must be positive");
        ensure!(
            values.len() == n_views * n_bins,
            "sinogram {n_views}x{n_bins} needs {} values, got {}",
            n_views * n_bins,
            values.len()
        );
        ensure!(values.iter().all(|v| v.is_finite()), "sinogram contains non-finite values");
        Ok(Self { n_views, n_bins, values })
    }

    pub fn zeros(n_views: usize, n_bins: usize) -> Self {
        Self { n_views, n_bins, values: vec![0.0; n_views * n_bins] }
    }

    pub fn zeros_for(geom: &ScanGeometry) -> Self {
        Self::zeros(geom.n_views(), geom.n_bins())
    }

    pub(crate) fn from_vec_unchecked(n_views: usize, n_bins: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n_views * n_bins);
        Self { n_views, n_bins, values }
    }

    pub fn n_views(&self) -> usize {
        self.n_views
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn view(&self, v: usize) -> &[f64] {
        &self.values[v * self.n_bins..(v + 1) * self.n_bins]
    }

    pub fn get(&self, view: usize, bin: usize) -> f64 {
        self.values[view * self.n_bins + bin]
    }

    pub fn same_shape(&self, other: &Sinogram) -> bool {
        self.n_views == other.n_views && self.n_bins == other.n_bins
    }

    pub fn matches(&self, geom: &ScanGeometry) -> bool {
        self.n_views == geom.n_views() && self.n_bins == geom.n_bins()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Fan-beam flat-detector scan description.
///
/// `n_views`, `M` and `N` are derived from the stored fields and never cached.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGeometry {
    n: usize,
    pixel_size: f64,
    n_bins: usize,
    angular_range_deg: f64,
    angle_step_deg: f64,
    source_radius: f64,
    detector_radius: f64,
    bin_width: f64,
}

/// Parameters for [`ScanGeometry::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySpec {
    pub n: usize,
    pub pixel_size: f64,
    pub n_bins: usize,
    pub angular_range_deg: f64,
    pub angle_step_deg: f64,
    pub source_radius: f64,
    pub detector_radius: f64,
    pub bin_width: f64,
}

const DEFAULT_SOURCE_RADIUS: f64 = 3.0;
const DEFAULT_DETECTOR_RADIUS: f64 = 3.0;

impl ScanGeometry {
    pub fn new(spec: GeometrySpec) -> Result<Self> {
        let GeometrySpec {
            n,
            pixel_size,
            n_bins,
            angular_range_deg,
            angle_step_deg,
            source_radius,
            detector_radius,
            bin_width,
        } = spec;
        ensure!(n > 0, "image side must be positive");
        ensure!(pixel_size > 0.0 && pixel_size.is_finite(), "pixel_size must be positive");
        ensure!(n_bins > 0, "n_bins must be positive");
        ensure!(
            angular_range_deg > 0.0 && angular_range_deg <= 360.0,
            "angular range must lie in (0, 360], got {angular_range_deg}"
        );
        ensure!(angle_step_deg > 0.0 && angle_step_deg.is_finite(), "angle step must be positive");
        ensure!(detector_radius > 0.0 && detector_radius.is_finite(), "detector_radius must be positive");
        ensure!(bin_width > 0.0 && bin_width.is_finite(), "bin_width must be positive");
        let half_diag = n as f64 * pixel_size / 2f64.sqrt();
        ensure!(
            source_radius > half_diag && source_radius.is_finite(),
            "source radius {source_radius} must exceed the image half-diagonal {half_diag}"
        );
        let geom = Self {
            n,
            pixel_size,
            n_bins,
            angular_range_deg,
            angle_step_deg,
            source_radius,
            detector_radius,
            bin_width,
        };
        ensure!(geom.n_views() > 0, "angle step exceeds the angular range");
        Ok(geom)
    }

    /// Desk-scale default: image on `[-1, 1]^2`, `ceil(1.5 n)` bins, 1 degree steps,
    /// source and detector at radius 3, fan wide enough for the image diagonal.
    pub fn default_for(n: usize, coverage_deg: f64) -> Result<Self> {
        ensure!(n >= 2, "default geometry needs n >= 2, got {n}");
        let n_bins = (1.5 * n as f64).ceil() as usize;
        let pixel_size = 2.0 / n as f64;
        let bin_width =
            covering_bin_width(n, pixel_size, n_bins, DEFAULT_SOURCE_RADIUS, DEFAULT_DETECTOR_RADIUS);
        Self::new(GeometrySpec {
            n,
            pixel_size,
            n_bins,
            angular_range_deg: coverage_deg,
            angle_step_deg: 1.0,
            source_radius: DEFAULT_SOURCE_RADIUS,
            detector_radius: DEFAULT_DETECTOR_RADIUS,
            bin_width,
        })
    }

    pub fn spec(&self) -> GeometrySpec {
        GeometrySpec {
            n: self.n,
            pixel_size: self.pixel_size,
            n_bins: self.n_bins,
            angular_range_deg: self.angular_range_deg,
            angle_step_deg: self.angle_step_deg,
            source_radius: self.source_radius,
            detector_radius: self.detector_radius,
            bin_width: self.bin_width,
        }
    }

    /// Same scan with a different bin count; bin width is re-derived so the fan
    /// still covers the image diagonal.
    pub fn with_bins(&self, n_bins: usize) -> Result<Self> {
        let mut spec = self.spec();
        spec.n_bins = n_bins;
        spec.bin_width =
            covering_bin_width(self.n, self.pixel_size, n_bins.max(1), self.source_radius, self.detector_radius);
        Self::new(spec)
    }

    pub fn with_angles(&self, angular_range_deg: f64, angle_step_deg: f64) -> Result<Self> {
        let mut spec = self.spec();
        spec.angular_range_deg = angular_range_deg;
        spec.angle_step_deg = angle_step_deg;
        Self::new(spec)
    }

    /// Coarse grid with side `n / factor` over the same physical field of view;
    /// views and bins are unchanged.
    pub fn coarsened(&self, factor: usize) -> Result<Self> {
        ensure!(factor > 0, "coarsening factor must be positive");
        ensure!(self.n % factor == 0, "image side {} is not divisible by {factor}", self.n);
        let mut spec = self.spec();
        spec.n = self.n / factor;
        spec.pixel_size = self.pixel_size * factor as f64;
        Self::new(spec)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_views(&self) -> usize {
        // Guard against 0.3/0.1 = 2.9999...
        (self.angular_range_deg / self.angle_step_deg + 1e-9).floor() as usize
    }

    pub fn angular_range_deg(&self) -> f64 {
        self.angular_range_deg
    }

    pub fn angle_step_deg(&self) -> f64 {
        self.angle_step_deg
    }

    pub fn angle_step_rad(&self) -> f64 {
        self.angle_step_deg.to_radians()
    }

    pub fn source_radius(&self) -> f64 {
        self.source_radius
    }

    pub fn detector_radius(&self) -> f64 {
        self.detector_radius
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    /// Data-space dimension `M = n_views * n_bins`.
    pub fn m(&self) -> usize {
        self.n_views() * self.n_bins
    }

    /// Image-space dimension `N = n * n`.
    pub fn num_pixels(&self) -> usize {
        self.n * self.n
    }

    /// Signed offset of the centre of bin `b` along the detector.
    pub fn bin_offset(&self, b: usize) -> f64 {
        (b as f64 - (self.n_bins as f64 - 1.0) / 2.0) * self.bin_width
    }

    /// Source position and bin-centre position for one ray.
    pub fn ray_endpoints(&self, view_angle: f64, bin: usize) -> ([f64; 2], [f64; 2]) {
        let (s, c) = view_angle.sin_cos();
        let source = [self.source_radius * c, self.source_radius * s];
        let u = self.bin_offset(bin);
        let det = [-self.detector_radius * c - u * s, -self.detector_radius * s + u * c];
        (source, det)
    }

    /// Physical centre of pixel `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        let half = self.n as f64 * self.pixel_size / 2.0;
        [
            -half + (col as f64 + 0.5) * self.pixel_size,
            half - (row as f64 + 0.5) * self.pixel_size,
        ]
    }

    pub fn check_image(&self, img: &Image) -> Result<()> {
        ensure!(
            img.rows() == self.n && img.cols() == self.n,
            "image is {}x{}, geometry expects {}x{}",
            img.rows(),
            img.cols(),
            self.n,
            self.n
        );
        Ok(())
    }

    pub fn check_sinogram(&self, sino: &Sinogram) -> Result<()> {
        ensure!(
            sino.matches(self),
            "sinogram is {}x{}, geometry expects {}x{}",
            sino.n_views(),
            sino.n_bins(),
            self.n_views(),
            self.n_bins
        );
        Ok(())
    }

    /// Serialise as `geometry.*` key-value lines.
    pub fn to_config(&self) -> String {
        format!(
            "geometry.n = {}\ngeometry.pixel_size = {:e}\ngeometry.n_bins = {}\n\
             geometry.angular_range_deg = {:e}\ngeometry.angle_step_deg = {:e}\n\
             geometry.source_radius = {:e}\ngeometry.detector_radius = {:e}\ngeometry.bin_width = {:e}\n",
            self.n,
            self.pixel_size,
            self.n_bins,
            self.angular_range_deg,
            self.angle_step_deg,
            self.source_radius,
            self.detector_radius,
            self.bin_width
        )
    }

    /// Apply `geometry.*` overrides from a config on top of `self`.
    ///
    /// Changing `n` rescales `pixel_size` to keep the field of view unless the
    /// pixel size is also given; changing `n_bins` re-derives `bin_width` unless
    /// it is also given.
    pub fn with_overrides(&self, cfg: &Config) -> Result<Self> {
        let mut spec = self.spec();
        if let Some(n) = cfg.get_parsed::<usize>("geometry.n")? {
            spec.pixel_size = self.pixel_size * self.n as f64 / n.max(1) as f64;
            spec.n = n;
        }
        if let Some(v) = cfg.get_parsed::<f64>("geometry.pixel_size")? {
            spec.pixel_size = v;
        }
        let bins_given = cfg.get_parsed::<usize>("geometry.n_bins")?;
        if let Some(b) = bins_given {
            spec.n_bins = b;
        }
        if let Some(v) = cfg.get_parsed::<f64>("geometry.angular_range_deg")? {
            spec.angular_range_deg = v;
        }
        if let Some(v) = cfg.get_parsed::<f64>("geometry.angle_step_deg")? {
            spec.angle_step_deg = v;
        }
        if let Some(v) = cfg.get_parsed::<f64>("geometry.source_radius")? {
            spec.source_radius = v;
        }
        if let Some(v) = cfg.get_parsed::<f64>("geometry.detector_radius")? {
            spec.detector_radius = v;
        }
        match cfg.get_parsed::<f64>("geometry.bin_width")? {
            Some(v) => spec.bin_width = v,
            None if bins_given.is_some() || spec.n != self.n => {
                spec.bin_width = covering_bin_width(
                    spec.n,
                    spec.pixel_size,
                    spec.n_bins.max(1),
                    spec.source_radius,
                    spec.detector_radius,
                )
            }
            None => {}
        }
        Self::new(spec)
    }

    pub fn from_config(cfg: &Config) -> Result<Self> {
        let n: usize = cfg
            .get_parsed("geometry.n")?
            .ok_or_else(|| Error::invalid("missing key geometry.n"))?;
        let coverage: f64 = cfg.get_parsed("geometry.angular_range_deg")?.unwrap_or(360.0);
        Self::default_for(n, coverage)?.with_overrides(cfg)
    }
}

/// Bin width such that `n_bins` bins span the fan through the image diagonal.
fn covering_bin_width(n: usize, pixel_size: f64, n_bins: usize, source_radius: f64, detector_radius: f64) -> f64 {
    let half_diag = n as f64 * pixel_size / 2f64.sqrt();
    let ratio = (half_diag / source_radius).min(1.0 - 1e-12);
    let half_fan = ratio.asin();
    2.0 * (source_radius + detector_radius) * half_fan.tan() / n_bins as f64
}

/// View angles in radians: `k * angle_step` for `k in 0..n_views`.
pub fn view_angles(geom: &ScanGeometry) -> Vec<f64> {
    let step = geom.angle_step_deg();
    (0..geom.n_views()).map(|k| (k as f64 * step).to_radians()).collect()
}

/// Shorthand for [`ScanGeometry::default_for`].
pub fn default_geometry(n: usize, coverage_deg: f64) -> Result<ScanGeometry> {
    ScanGeometry::default_for(n, coverage_deg)
}
