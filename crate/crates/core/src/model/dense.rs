//! Row-major batch matrices and the affine layer kernels.
//!
//! Every output element is produced by exactly one task with a fixed
//! summation order, so results do not depend on the rayon pool size.

use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, cols: usize) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for r in rows {
            debug_assert_eq!(r.len(), cols);
            data.extend_from_slice(r);
        }
        Mat { rows: n, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `y = x wᵀ + b` where `w` is `out × x.cols` row-major.
pub(crate) fn affine(x: &Mat, w: &[f64], b: &[f64]) -> Mat {
    let out = b.len();
    let inp = x.cols;
    debug_assert_eq!(w.len(), out * inp);
    let mut y = Mat::zeros(x.rows, out);
    if out == 0 {
        return y;
    }
    y.data
        .par_chunks_mut(out)
        .zip(x.data.par_chunks(inp.max(1)))
        .for_each(|(yr, xr)| {
            for (o, yo) in yr.iter_mut().enumerate() {
                let wr = &w[o * inp..(o + 1) * inp];
                *yo = b[o] + dot(wr, xr);
            }
        });
    y
}

/// Backward pass of [`affine`]. Writes `dL/dw` and `dL/db` into `gw`/`gb`
/// (overwriting) and returns `dL/dx` when requested.
pub(crate) fn affine_backward(
    x: &Mat,
    w: &[f64],
    dy: &Mat,
    gw: &mut [f64],
    gb: &mut [f64],
    want_dx: bool,
) -> Option<Mat> {
    let out = dy.cols;
    let inp = x.cols;
    let rows = x.rows;
    gw.par_chunks_mut(inp.max(1))
        .zip(gb.par_iter_mut())
        .enumerate()
        .for_each(|(o, (gwr, gbo))| {
            gwr.iter_mut().for_each(|v| *v = 0.0);
            let mut bsum = 0.0;
            for i in 0..rows {
                let d = dy.data[i * out + o];
                bsum += d;
                if d != 0.0 {
                    axpy(d, x.row(i), gwr);
                }
            }
            *gbo = bsum;
        });
    if !want_dx {
        return None;
    }
    let mut dx = Mat::zeros(rows, inp);
    dx.data
        .par_chunks_mut(inp.max(1))
        .zip(dy.data.par_chunks(out.max(1)))
        .for_each(|(dxr, dyr)| {
            for (o, &d) in dyr.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, &w[o * inp..(o + 1) * inp], dxr);
                }
            }
        });
    Some(dx)
}

pub(crate) fn relu_in_place(m: &mut Mat) {
    m.data.par_iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
}

/// Zeroes gradient entries where the rectified activation was zero.
pub(crate) fn relu_mask(dy: &mut Mat, activated: &Mat) {
    dy.data
        .par_iter_mut()
        .zip(activated.data.par_iter())
        .for_each(|(d, &a)| {
            if a <= 0.0 {
                *d = 0.0
            }
        });
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
