//! Exact ray/pixel intersection lengths on a square grid.

/// Square `n x n` grid of side-`h` pixels centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelGrid {
    pub n: usize,
    pub h: f64,
}

impl PixelGrid {
    pub fn new(n: usize, h: f64) -> Self {
        Self { n, h }
    }

    fn half_extent(&self) -> f64 {
        self.n as f64 * self.h / 2.0
    }

    /// Plane-crossing parameters along one axis, in increasing order, restricted
    /// to the open interval `(lo, hi)`.
    fn crossings(&self, start: f64, delta: f64, lo: f64, hi: f64, out: &mut Vec<f64>) {
        out.clear();
        if delta == 0.0 {
            return;
        }
        let x0 = -self.half_extent();
        let push = |i: usize, out: &mut Vec<f64>| {
            let a = (x0 + i as f64 * self.h - start) / delta;
            if a > lo && a < hi {
                out.push(a);
            }
        };
        if delta > 0.0 {
            (0..=self.n).for_each(|i| push(i, out));
        } else {
            (0..=self.n).rev().for_each(|i| push(i, out));
        }
    }

    /// Walk the segment `p0 -> p1` through the grid, calling `visit(pixel, length)`
    /// for every pixel it crosses with positive length. Pixels are flat row-major
    /// indices (row 0 at the top, `y` decreasing with row).
    ///
    /// `scratch` holds two reusable buffers for the plane crossings.
    pub fn trace(
        &self,
        p0: [f64; 2],
        p1: [f64; 2],
        scratch: &mut (Vec<f64>, Vec<f64>),
        mut visit: impl FnMut(usize, f64),
    ) {
        let half = self.half_extent();
        let d = [p1[0] - p0[0], p1[1] - p0[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if len == 0.0 {
            return;
        }

        // Parametric range of the segment inside the grid box.
        let mut lo: f64 = 0.0;
        let mut hi: f64 = 1.0;
        for axis in 0..2 {
            if d[axis] == 0.0 {
                if p0[axis] <= -half || p0[axis] >= half {
                    return;
                }
            } else {
                let a = (-half - p0[axis]) / d[axis];
                let b = (half - p0[axis]) / d[axis];
                lo = lo.max(a.min(b));
                hi = hi.min(a.max(b));
            }
        }
        if hi <= lo {
            return;
        }

        let (xs, ys) = scratch;
        self.crossings(p0[0], d[0], lo, hi, xs);
        self.crossings(p0[1], d[1], lo, hi, ys);

        let last = self.n as isize - 1;
        let mut emit = |a: f64, b: f64| {
            if b <= a {
                return;
            }
            let mid = 0.5 * (a + b);
            let x = p0[0] + mid * d[0];
            let y = p0[1] + mid * d[1];
            let col = (((x + half) / self.h).floor() as isize).clamp(0, last) as usize;
            let row = (((half - y) / self.h).floor() as isize).clamp(0, last) as usize;
            visit(row * self.n + col, (b - a) * len);
        };

        // Merge the two sorted crossing lists.
        let (mut i, mut j) = (0, 0);
        let mut prev = lo;
        while i < xs.len() || j < ys.len() {
            let next = if j >= ys.len() || (i < xs.len() && xs[i] <= ys[j]) {
                i += 1;
                xs[i - 1]
            } else {
                j += 1;
                ys[j - 1]
            };
            emit(prev, next);
            prev = prev.max(next);
        }
        emit(prev, hi);
    }
}
