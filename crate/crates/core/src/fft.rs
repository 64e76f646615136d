//! Thin 2-D and 1-D wrappers over `rustfft`.
//!
//! Forward transforms are unnormalized; inverse transforms carry the
//! `1/N` factor so that `inverse(forward(x)) == x`.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.rows, self.cols)
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, data: &mut Array2<Complex64>) {
        self.run(data, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        data.mapv_inplace(|v| v * scale);
    }

    fn run(&self, data: &mut Array2<Complex64>, row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.dim(), (self.rows, self.cols), "FFT plan/data shape mismatch");
        let scratch_len = row.get_inplace_scratch_len().max(col.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::default(); scratch_len];

        if !data.is_standard_layout() {
            *data = data.as_standard_layout().to_owned();
        }
        let buf = data.as_slice_mut().expect("standard layout");
        row.process_with_scratch(buf, &mut scratch);

        let mut column = vec![Complex64::default(); self.rows * self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                column[c * self.rows + r] = buf[r * self.cols + c];
            }
        }
        col.process_with_scratch(&mut column, &mut scratch);
        for r in 0..self.rows {
            for c in 0..self.cols {
                buf[r * self.cols + c] = column[c * self.rows + r];
            }
        }
    }
}

/// 1-D complex transform pair of fixed length.
#[derive(Clone)]
pub struct Fft1 {
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft1 {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            fwd: planner.plan_fft_forward(len),
            inv: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.fwd.process(data);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inv.process(data);
        let scale = 1.0 / self.len as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}
