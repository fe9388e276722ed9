//! FFT helpers for sums of characters.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::characters::UnitRoots;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `out[c] = sum_g f(g) w^(-c g)` with `w = exp(2 pi i / k)`, `k = f.len()`.
pub fn analyze(block: &[Complex64]) -> Vec<Complex64> {
    let mut buf = block.to_vec();
    if buf.is_empty() {
        return buf;
    }
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// `out[g] = sum_c a(c) w^(c g)`, the inverse of [`analyze`] up to a factor `k`.
pub fn synthesize(coefficients: &[Complex64]) -> Vec<Complex64> {
    let mut buf = coefficients.to_vec();
    if buf.is_empty() {
        return buf;
    }
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    buf
}

/// A kernel `K(g, h) = scale * sum_j w_j * u^(-a_j g) * v^(b_j h)` where `u`
/// and `v` are primitive roots of orders `row_order` and `col_order`.
///
/// Each row is one inverse FFT of length `col_order` over a sparse input, so
/// evaluating the full kernel costs `row_order` FFTs.
pub struct SparseKernel {
    row_roots: UnitRoots,
    col_order: usize,
    terms: Vec<(u64, usize, Complex64)>,
    scale: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl SparseKernel {
    pub fn new(
        row_roots: UnitRoots,
        col_order: u64,
        terms: Vec<(u64, u64, Complex64)>,
        scale: f64,
    ) -> Self {
        let col_order = col_order as usize;
        let terms = terms
            .into_iter()
            .map(|(a, b, w)| (a, b as usize % col_order, w))
            .collect();
        let fft = FftPlanner::new().plan_fft_inverse(col_order);
        Self {
            row_roots,
            col_order,
            terms,
            scale,
            fft,
        }
    }

    pub fn row_order(&self) -> u64 {
        self.row_roots.order()
    }

    pub fn col_order(&self) -> usize {
        self.col_order
    }

    pub fn row(&self, g: u64) -> Vec<Complex64> {
        let mut buf = vec![ZERO; self.col_order];
        let g = g as i64;
        for &(a, b, w) in &self.terms {
            buf[b] += w * self.row_roots.at(-(a as i64) * g);
        }
        self.fft.process(&mut buf);
        for x in &mut buf {
            *x *= self.scale;
        }
        buf
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        (0..self.row_order())
            .into_par_iter()
            .map(|g| self.row(g))
            .collect()
    }

    /// `max |K(g, h)|` over the whole kernel.
    pub fn max_abs(&self) -> f64 {
        (0..self.row_order())
            .into_par_iter()
            .map(|g| self.row(g).iter().fold(0.0f64, |m, z| m.max(z.norm())))
            .reduce(|| 0.0, f64::max)
    }
}
