//! Thin 2-D DFT helpers over `rustfft`. Buffers are row-major `height x width`.

use rustfft::num_complex::Complex64;
use std::cell::RefCell;

use rustfft::FftPlanner;

thread_local! {
    // Plans are cached by the planner, so keep one per thread.
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn fft2(data: &mut [Complex64], width: usize, height: usize, inverse: bool) {
    debug_assert_eq!(data.len(), width * height);
    let (row_fft, col_fft) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            (p.plan_fft_inverse(width), p.plan_fft_inverse(height))
        } else {
            (p.plan_fft_forward(width), p.plan_fft_forward(height))
        }
    });
    row_fft.process(data);

    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = data[y * width + x];
        }
        col_fft.process(&mut column);
        for y in 0..height {
            data[y * width + x] = column[y];
        }
    }
}

/// Signed frequency of DFT bin `i` for length `n` (the `fftfreq` convention times `n`).
#[inline]
pub(crate) fn signed_freq(i: usize, n: usize) -> f64 {
    if i < n.div_ceil(2) {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

pub(crate) fn to_complex(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}
