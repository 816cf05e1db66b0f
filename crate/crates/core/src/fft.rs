//! Square 2-D FFTs built from row transforms and blocked transposes.
//!
//! Arrays are row-major `n × n` slices indexed `[y][x]`. Transforms are
//! unnormalized, matching rustfft.

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::exec;

const TRANSPOSE_BLOCK: usize = 32;

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut p = planner().lock().expect("fft planner poisoned");
    if inverse {
        p.plan_fft_inverse(n)
    } else {
        p.plan_fft_forward(n)
    }
}

fn rows_per_task(n: usize) -> usize {
    (16_384 / n).clamp(1, n)
}

fn transform_rows(data: &mut [Complex64], n: usize, inverse: bool) {
    let fft = plan(n, inverse);
    exec::for_each_chunk(data, n * rows_per_task(n), |_, chunk| {
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    });
}

/// Out-of-place blocked transpose; `data` is replaced by its transpose.
pub fn transpose(data: &mut [Complex64], n: usize) {
    let src: &[Complex64] = data;
    let mut out = vec![Complex64::default(); n * n];
    let rows = TRANSPOSE_BLOCK.min(n);
    exec::for_each_chunk(&mut out, n * rows, |ci, chunk| {
        let r0 = ci * rows;
        let nr = chunk.len() / n;
        for c0 in (0..n).step_by(TRANSPOSE_BLOCK) {
            for c in c0..(c0 + TRANSPOSE_BLOCK).min(n) {
                let col = &src[c * n..c * n + n];
                for dr in 0..nr {
                    chunk[dr * n + c] = col[r0 + dr];
                }
            }
        }
    });
    data.copy_from_slice(&out);
}

/// Forward 2-D DFT leaving the spectrum transposed, indexed `[kx][ky]`.
pub fn forward_transposed(data: &mut [Complex64], n: usize) {
    transform_rows(data, n, false);
    transpose(data, n);
    transform_rows(data, n, false);
}

/// Inverse 2-D DFT of a transposed spectrum, returning `[y][x]` samples.
pub fn inverse_from_transposed(data: &mut [Complex64], n: usize) {
    transform_rows(data, n, true);
    transpose(data, n);
    transform_rows(data, n, true);
}

/// Forward 2-D DFT in natural `[ky][kx]` layout.
pub fn forward(data: &mut [Complex64], n: usize) {
    forward_transposed(data, n);
    transpose(data, n);
}

/// Inverse 2-D DFT in natural layout (unnormalized).
pub fn inverse(data: &mut [Complex64], n: usize) {
    transpose(data, n);
    inverse_from_transposed(data, n);
}

/// Frequency (cycles per unit length) of FFT bin `k` for `n` samples at `pitch`.
pub fn bin_frequency(k: usize, n: usize, pitch: f64) -> f64 {
    let k = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
    k / (n as f64 * pitch)
}
