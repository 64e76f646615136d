//! Edge padding and the matching crop.

use ndarray::{s, Array2, ArrayView2};

use crate::error::{ensure, Result};

/// Location of the original image inside a padded one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl CropWindow {
    pub fn crop<T: Clone>(&self, padded: ArrayView2<'_, T>) -> Array2<T> {
        padded
            .slice(s![self.row..self.row + self.rows, self.col..self.col + self.cols])
            .to_owned()
    }
}

/// Padded length for `n` samples: `ceil(factor * n)` rounded up to even.
/// A factor of exactly 1 leaves the length untouched.
pub fn padded_len(n: usize, factor: f64) -> usize {
    if factor == 1.0 {
        return n;
    }
    let target = ((factor * n as f64) - 1e-9).ceil().max(n as f64) as usize;
    target + target % 2
}

/// Centre `image` in a larger grid, replicating the nearest edge value.
pub fn pad_edge<T: Clone>(image: ArrayView2<'_, T>, factor: f64) -> Result<(Array2<T>, CropWindow)> {
    ensure!(
        factor >= 1.0 && factor.is_finite(),
        InvalidArgument,
        "pad factor must be >= 1, got {factor}"
    );
    let (rows, cols) = image.dim();
    ensure!(rows > 0 && cols > 0, InvalidArgument, "cannot pad an empty image");
    let (pr, pc) = (padded_len(rows, factor), padded_len(cols, factor));
    let window = CropWindow {
        row: (pr - rows) / 2,
        col: (pc - cols) / 2,
        rows,
        cols,
    };
    let padded = Array2::from_shape_fn((pr, pc), |(i, j)| {
        let si = i.saturating_sub(window.row).min(rows - 1);
        let sj = j.saturating_sub(window.col).min(cols - 1);
        image[[si, sj]].clone()
    });
    Ok((padded, window))
}
