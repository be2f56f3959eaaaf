use crate::conditioning::DenseMatrix;
use crate::error::{ensure, Result};
use crate::geometry::Image;

/// Equidistant selection of every `factor`-th pixel per axis, anchored at index 0.
///
/// As a matrix `D` has exactly one 1 per row and at most one per column, so
/// `D D^T = I` on the coarse grid and `D^T D` is a 0/1 diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DownSampler {
    factor: usize,
    full_n: usize,
}

impl DownSampler {
    pub fn new(factor: usize, full_n: usize) -> Result<Self> {
        ensure!(factor >= 1 && factor.is_power_of_two(), "down-sampling factor must be a power of two, got {factor}");
        ensure!(full_n > 0 && full_n % factor == 0, "image side {full_n} is not divisible by {factor}");
        Ok(Self { factor, full_n })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn full_n(&self) -> usize {
        self.full_n
    }

    pub fn coarse_n(&self) -> usize {
        self.full_n / self.factor
    }

    /// Whether fine pixel `(row, col)` is selected, i.e. `(D^T D)_{ii} = 1`.
    pub fn is_sampled(&self, row: usize, col: usize) -> bool {
        row % self.factor == 0 && col % self.factor == 0
    }

    /// `D` as an explicit `(n/f)^2 x n^2` matrix.
    pub fn matrix(&self) -> DenseMatrix {
        let cn = self.coarse_n();
        let mut m = DenseMatrix::zeros(cn * cn, self.full_n * self.full_n);
        for i in 0..cn {
            for j in 0..cn {
                m.set(i * cn + j, (i * self.factor) * self.full_n + j * self.factor, 1.0);
            }
        }
        m
    }
}

/// `u_l = D u`.
pub fn downsample(img: &Image, d: &DownSampler) -> Result<Image> {
    ensure!(
        img.rows() == d.full_n() && img.cols() == d.full_n(),
        "image is {}x{}, down-sampler expects {}x{}",
        img.rows(),
        img.cols(),
        d.full_n(),
        d.full_n()
    );
    let f = d.factor();
    let cn = d.coarse_n();
    Ok(Image::from_fn(cn, cn, |i, j| img.get(i * f, j * f)))
}

/// `D^T v`: coarse values placed on the sampled fine pixels, zeros elsewhere.
pub fn upsample_adjoint(img_low: &Image, d: &DownSampler) -> Result<Image> {
    let cn = d.coarse_n();
    ensure!(
        img_low.rows() == cn && img_low.cols() == cn,
        "coarse image is {}x{}, down-sampler expects {cn}x{cn}",
        img_low.rows(),
        img_low.cols()
    );
    let f = d.factor();
    let mut out = Image::square_zeros(d.full_n());
    for i in 0..cn {
        for j in 0..cn {
            out.set(i * f, j * f, img_low.get(i, j));
        }
    }
    Ok(out)
}

/// Pixel replication onto the fine grid, for comparing coarse images with fine references.
pub fn upsample_nearest(img_low: &Image, factor: usize) -> Image {
    Image::from_fn(img_low.rows() * factor, img_low.cols() * factor, |r, c| {
        img_low.get(r / factor, c / factor)
    })
}
