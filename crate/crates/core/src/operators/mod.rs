//! Forward projector, its exact adjoint, explicit system matrices and the
//! down-sampling pair.

mod downsample;
mod siddon;
mod system_matrix;

pub use downsample::{downsample, upsample_adjoint, upsample_nearest, DownSampler};
pub use siddon::PixelGrid;
pub use system_matrix::{SystemMatrix, DEFAULT_MATRIX_BUDGET};

use crate::error::Result;
use crate::exec;
use crate::geometry::{view_angles, Image, ScanGeometry, Sinogram};

/// Views per partial image in the matrix-free back-projection.
const BACKPROJECT_VIEW_BLOCK: usize = 8;

fn grid_of(geom: &ScanGeometry) -> PixelGrid {
    PixelGrid::new(geom.n(), geom.pixel_size())
}

/// Rows of one view: concatenated `(cols, lengths)` and the end offset of each bin's row.
pub(crate) fn ray_rows(geom: &ScanGeometry, view: usize) -> (Vec<u32>, Vec<f64>, Vec<usize>) {
    let grid = grid_of(geom);
    let angle = (view as f64 * geom.angle_step_deg()).to_radians();
    let mut cols = Vec::with_capacity(geom.n_bins() * 2 * geom.n());
    let mut vals = Vec::with_capacity(cols.capacity());
    let mut ends = Vec::with_capacity(geom.n_bins());
    let mut scratch = Default::default();
    for b in 0..geom.n_bins() {
        let (src, det) = geom.ray_endpoints(angle, b);
        grid.trace(src, det, &mut scratch, |p, l| {
            cols.push(p as u32);
            vals.push(l);
        });
        ends.push(cols.len());
    }
    (cols, vals, ends)
}

/// Matrix-free application of `A`: exact length-weighted line integrals.
pub fn forward_project(img: &Image, geom: &ScanGeometry) -> Result<Sinogram> {
    geom.check_image(img)?;
    let grid = grid_of(geom);
    let angles = view_angles(geom);
    let x = img.values();
    let n_bins = geom.n_bins();
    let mut out = vec![0.0; geom.m()];
    exec::for_each_chunk_mut(&mut out, n_bins, |v, row| {
        let mut scratch = Default::default();
        for (b, slot) in row.iter_mut().enumerate() {
            let (src, det) = geom.ray_endpoints(angles[v], b);
            let mut acc = 0.0;
            grid.trace(src, det, &mut scratch, |p, l| acc += l * x[p]);
            *slot = acc;
        }
    });
    Ok(Sinogram::from_vec_unchecked(geom.n_views(), n_bins, out))
}

/// Matrix-free application of `A^T`.
///
/// Views are accumulated in fixed blocks whose partial images are summed in
/// block order, so the result does not depend on the thread count.
pub fn back_project(sino: &Sinogram, geom: &ScanGeometry) -> Result<Image> {
    geom.check_sinogram(sino)?;
    let grid = grid_of(geom);
    let angles = view_angles(geom);
    let n_views = geom.n_views();
    let n_blocks = n_views.div_ceil(BACKPROJECT_VIEW_BLOCK);
    let partials = exec::map_indexed(n_blocks, |blk| {
        let mut acc = vec![0.0; geom.num_pixels()];
        let mut scratch = Default::default();
        let end = ((blk + 1) * BACKPROJECT_VIEW_BLOCK).min(n_views);
        for v in blk * BACKPROJECT_VIEW_BLOCK..end {
            for b in 0..geom.n_bins() {
                let w = sino.get(v, b);
                if w == 0.0 {
                    continue;
                }
                let (src, det) = geom.ray_endpoints(angles[v], b);
                grid.trace(src, det, &mut scratch, |p, l| acc[p] += l * w);
            }
        }
        acc
    });
    let mut out = vec![0.0; geom.num_pixels()];
    for part in &partials {
        for (o, p) in out.iter_mut().zip(part) {
            *o += p;
        }
    }
    Ok(Image::from_vec_unchecked(geom.n(), geom.n(), out))
}

/// Explicit system matrix under the default budget.
pub fn build_system_matrix(geom: &ScanGeometry) -> Result<SystemMatrix> {
    SystemMatrix::build(geom, DEFAULT_MATRIX_BUDGET)
}

/// Cached sparse `A` and `A^T` for iterative solvers.
#[derive(Debug, Clone)]
pub struct Projector {
    geom: ScanGeometry,
    forward: SystemMatrix,
    adjoint: SystemMatrix,
}

impl Projector {
    pub fn new(geom: &ScanGeometry) -> Self {
        let forward = SystemMatrix::build_sparse(geom);
        let adjoint = forward.transpose();
        Self { geom: geom.clone(), forward, adjoint }
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geom
    }

    pub fn matrix(&self) -> &SystemMatrix {
        &self.forward
    }

    pub fn apply(&self, img: &Image) -> Result<Sinogram> {
        self.geom.check_image(img)?;
        Ok(Sinogram::from_vec_unchecked(
            self.geom.n_views(),
            self.geom.n_bins(),
            self.forward.apply(img.values()),
        ))
    }

    pub fn adjoint(&self, sino: &Sinogram) -> Result<Image> {
        self.geom.check_sinogram(sino)?;
        let n = self.geom.n();
        Ok(Image::from_vec_unchecked(n, n, self.adjoint.apply(sino.values())))
    }

    /// Power-iteration estimate of the spectral norm `||A||_2`.
    pub fn norm_estimate(&self, iters: usize) -> f64 {
        let mut x = vec![1.0 / (self.forward.n_cols() as f64).sqrt(); self.forward.n_cols()];
        let mut norm = 0.0;
        for _ in 0..iters.max(1) {
            let y = self.forward.apply(&x);
            let z = self.adjoint.apply(&y);
            let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if zn == 0.0 {
                return 0.0;
            }
            norm = zn.sqrt();
            x = z.into_iter().map(|v| v / zn).collect();
        }
        norm
    }
}
