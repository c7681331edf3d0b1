//! Subpixel translation estimation by upsampled cross-correlation.
//!
//! The cross-power spectrum is first inverted on a grid embedded in an array
//! twice the frame size, giving a half-pixel estimate. That estimate is then
//! refined with a matrix-multiply DFT evaluated only on a 1.5 x 1.5 pixel
//! neighbourhood sampled at `1/k` pixel spacing.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::{fft2, signed_freq, to_complex};
use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSequence};

/// Default upsampling factor (precision `1/k` px).
pub const DEFAULT_UPSAMPLING: usize = 100;

/// Displacement of a moving frame relative to a reference frame.
///
/// `moving(x, y) ~= reference(x - dx, y - dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Translation {
    pub dx: f64,
    pub dy: f64,
    /// Normalized registration error, `sqrt(|1 - |cc_max|^2 / (E_ref E_mov)|)`.
    pub error: f64,
}

/// Precomputed reference spectrum, reusable across many moving frames.
pub struct Registrar {
    width: usize,
    height: usize,
    upsampling: usize,
    ref_spectrum: Vec<Complex64>,
    ref_energy: f64,
}

impl Registrar {
    pub fn new(reference: &Frame, upsampling: usize) -> Result<Self> {
        if upsampling < 1 {
            return Err(Error::Config("upsampling factor must be >= 1".into()));
        }
        let (width, height) = reference.dims();
        if width < 2 || height < 2 {
            return Err(Error::Degenerate("frames must be at least 2x2".into()));
        }
        let mut ref_spectrum = to_complex(reference.data());
        fft2(&mut ref_spectrum, width, height, false);
        let ref_energy: f64 = ref_spectrum.iter().map(Complex64::norm_sqr).sum();
        if ref_energy == 0.0 {
            return Err(Error::Degenerate(
                "reference frame is all zero; correlation undefined".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            upsampling,
            ref_spectrum,
            ref_energy,
        })
    }

    pub fn register(&self, moving: &Frame) -> Result<Translation> {
        let (w, h) = (self.width, self.height);
        if moving.dims() != (w, h) {
            return Err(Error::Mismatch(format!(
                "moving frame is {}x{}, reference is {w}x{h}",
                moving.width(),
                moving.height()
            )));
        }
        let mut mov = to_complex(moving.data());
        fft2(&mut mov, w, h, false);
        let mov_energy: f64 = mov.iter().map(Complex64::norm_sqr).sum();
        if mov_energy == 0.0 {
            return Err(Error::Degenerate(
                "moving frame is all zero; correlation undefined".into(),
            ));
        }
        let cross: Vec<Complex64> = mov
            .iter()
            .zip(&self.ref_spectrum)
            .map(|(g, f)| g * f.conj())
            .collect();

        let (mut row_shift, mut col_shift, mut cc_max) = if self.upsampling == 1 {
            integer_peak(&cross, w, h)
        } else {
            half_pixel_peak(&cross, w, h)
        };

        if self.upsampling > 2 {
            let k = self.upsampling as f64;
            row_shift = (row_shift * k).round() / k;
            col_shift = (col_shift * k).round() / k;
            let region = (1.5 * k).ceil() as usize;
            let centre = (region / 2) as f64;
            let row_offsets: Vec<f64> = (0..region)
                .map(|j| row_shift + (j as f64 - centre) / k)
                .collect();
            let col_offsets: Vec<f64> = (0..region)
                .map(|j| col_shift + (j as f64 - centre) / k)
                .collect();
            let cc = upsampled_dft(&cross, w, h, &row_offsets, &col_offsets);
            let (best, value) = argmax_abs(&cc);
            row_shift = row_offsets[best / region];
            col_shift = col_offsets[best % region];
            cc_max = value;
        }

        // Parseval scaling: the unnormalized inverse of |F|^2 at zero lag is
        // sum |F|^2, matching the scale of `cc_max`.
        let ratio = cc_max.norm_sqr() / (self.ref_energy * mov_energy);
        Ok(Translation {
            dx: col_shift,
            dy: row_shift,
            error: (1.0 - ratio).abs().sqrt(),
        })
    }
}

fn argmax_abs(values: &[Complex64]) -> (usize, Complex64) {
    let mut best = 0;
    let mut best_norm = f64::NEG_INFINITY;
    for (i, v) in values.iter().enumerate() {
        let n = v.norm_sqr();
        if n > best_norm {
            best_norm = n;
            best = i;
        }
    }
    (best, values[best])
}

fn wrap_shift(index: usize, n: usize) -> f64 {
    if index > n / 2 {
        index as f64 - n as f64
    } else {
        index as f64
    }
}

fn integer_peak(cross: &[Complex64], w: usize, h: usize) -> (f64, f64, Complex64) {
    let mut cc = cross.to_vec();
    fft2(&mut cc, w, h, true);
    let (best, value) = argmax_abs(&cc);
    (wrap_shift(best / w, h), wrap_shift(best % w, w), value)
}

/// Peak of the cross-correlation on a half-pixel grid via 2x spectral zero-padding.
fn half_pixel_peak(cross: &[Complex64], w: usize, h: usize) -> (f64, f64, Complex64) {
    let (bw, bh) = (2 * w, 2 * h);
    let mut big = vec![Complex64::new(0.0, 0.0); bw * bh];
    for v in 0..h {
        let fv = signed_freq(v, h) as isize;
        let bv = fv.rem_euclid(bh as isize) as usize;
        for u in 0..w {
            let fu = signed_freq(u, w) as isize;
            let bu = fu.rem_euclid(bw as isize) as usize;
            big[bv * bw + bu] = cross[v * w + u];
        }
    }
    fft2(&mut big, bw, bh, true);
    let (best, value) = argmax_abs(&big);
    let (r, c) = (best / bw, best % bw);
    let row = if r >= h {
        r as f64 - bh as f64
    } else {
        r as f64
    };
    let col = if c >= w {
        c as f64 - bw as f64
    } else {
        c as f64
    };
    // `value` is on the zero-padded scale; callers refine it when k > 2.
    (row / 2.0, col / 2.0, value)
}

/// Evaluates the inverse DFT of `spectrum` at arbitrary (row, col) lags via
/// two small matrix products: `A (rows x h) . S (h x w) . B (w x cols)`.
///
/// Real and imaginary parts are kept in separate buffers so the inner loops
/// vectorize.
fn upsampled_dft(
    spectrum: &[Complex64],
    w: usize,
    h: usize,
    row_lags: &[f64],
    col_lags: &[f64],
) -> Vec<Complex64> {
    let nr = row_lags.len();
    let nc = col_lags.len();
    // B[u][j] = exp(2 pi i f_u c_j / w)
    let mut b_re = vec![0.0; w * nc];
    let mut b_im = vec![0.0; w * nc];
    for u in 0..w {
        let fu = signed_freq(u, w);
        for (j, &c) in col_lags.iter().enumerate() {
            let (sin, cos) = (2.0 * PI * fu * c / w as f64).sin_cos();
            b_re[u * nc + j] = cos;
            b_im[u * nc + j] = sin;
        }
    }
    // T = S . B  (h x nc)
    let mut t_re = vec![0.0; h * nc];
    let mut t_im = vec![0.0; h * nc];
    for v in 0..h {
        let o_re = &mut t_re[v * nc..(v + 1) * nc];
        let o_im = &mut t_im[v * nc..(v + 1) * nc];
        for (u, s) in spectrum[v * w..(v + 1) * w].iter().enumerate() {
            let k_re = &b_re[u * nc..(u + 1) * nc];
            let k_im = &b_im[u * nc..(u + 1) * nc];
            complex_axpy(s.re, s.im, k_re, k_im, o_re, o_im);
        }
    }
    // A . T
    let mut out = Vec::with_capacity(nr * nc);
    let mut d_re = vec![0.0; nc];
    let mut d_im = vec![0.0; nc];
    for &r in row_lags {
        d_re.fill(0.0);
        d_im.fill(0.0);
        for v in 0..h {
            let (sin, cos) = (2.0 * PI * signed_freq(v, h) * r / h as f64).sin_cos();
            let src = v * nc..(v + 1) * nc;
            complex_axpy(
                cos,
                sin,
                &t_re[src.clone()],
                &t_im[src],
                &mut d_re,
                &mut d_im,
            );
        }
        out.extend(
            d_re.iter()
                .zip(&d_im)
                .map(|(&re, &im)| Complex64::new(re, im)),
        );
    }
    out
}

/// `o += (a_re + i a_im) * x`, elementwise over split complex vectors.
#[inline]
fn complex_axpy(
    a_re: f64,
    a_im: f64,
    x_re: &[f64],
    x_im: &[f64],
    o_re: &mut [f64],
    o_im: &mut [f64],
) {
    for (((or, oi), &xr), &xi) in o_re.iter_mut().zip(o_im.iter_mut()).zip(x_re).zip(x_im) {
        *or += a_re * xr - a_im * xi;
        *oi += a_re * xi + a_im * xr;
    }
}

/// Estimates the displacement of `moving` relative to `reference` to `1/k` px.
pub fn register_translation(reference: &Frame, moving: &Frame, k: usize) -> Result<Translation> {
    Registrar::new(reference, k)?.register(moving)
}

/// Resamples `frame` so that content at `(x + dx, y + dy)` lands on `(x, y)`.
/// Out-of-view samples replicate the nearest edge pixel.
pub fn translate(frame: &Frame, dx: f64, dy: f64) -> Frame {
    Frame::from_fn(frame.width(), frame.height(), |x, y| {
        frame.sample_bilinear(x as f64 + dx, y as f64 + dy)
    })
}

/// Per-frame displacement of every frame relative to frame 0.
pub fn estimate_shifts(seq: &FrameSequence, k: usize) -> Result<Vec<Translation>> {
    let Some(reference) = seq.frames().first() else {
        return Err(Error::Validation("cannot align an empty sequence".into()));
    };
    let registrar = Registrar::new(reference, k)?;
    let mut shifts = vec![Translation {
        dx: 0.0,
        dy: 0.0,
        error: 0.0,
    }];
    let rest: Result<Vec<_>> = seq.frames()[1..]
        .par_iter()
        .map(|f| registrar.register(f))
        .collect();
    shifts.extend(rest?);
    Ok(shifts)
}

/// How pixels shifted in from outside the view are filled during alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignFill {
    /// Bilinear resampling, out-of-view samples replicate the nearest edge.
    #[default]
    Edge,
    /// Circular Fourier shift. Exact inverse of a circular drift.
    Wrap,
}

/// Registers every frame to frame 0 and undoes the estimated translation
/// with edge replication.
pub fn align_sequence(seq: &FrameSequence, k: usize) -> Result<FrameSequence> {
    align_sequence_with(seq, k, AlignFill::Edge)
}

pub fn align_sequence_with(
    seq: &FrameSequence,
    k: usize,
    fill: AlignFill,
) -> Result<FrameSequence> {
    let shifts = estimate_shifts(seq, k)?;
    apply_shifts(seq, &shifts, fill)
}

/// Undoes per-frame displacements produced by [`estimate_shifts`].
pub fn apply_shifts(
    seq: &FrameSequence,
    shifts: &[Translation],
    fill: AlignFill,
) -> Result<FrameSequence> {
    if shifts.len() != seq.len() {
        return Err(Error::Mismatch(format!(
            "{} shifts for {} frames",
            shifts.len(),
            seq.len()
        )));
    }
    let frames: Vec<Frame> = seq
        .frames()
        .par_iter()
        .zip(shifts)
        .enumerate()
        .map(|(i, (f, s))| {
            if i == 0 || (s.dx == 0.0 && s.dy == 0.0) {
                f.clone()
            } else {
                match fill {
                    AlignFill::Edge => translate(f, s.dx, s.dy),
                    AlignFill::Wrap => fourier_shift(f, -s.dx, -s.dy),
                }
            }
        })
        .collect();
    seq.with_frames(frames)
}

/// Circular subpixel shift by a Fourier phase ramp: `out(x) = f(x - d)`.
pub fn fourier_shift(frame: &Frame, dx: f64, dy: f64) -> Frame {
    let (w, h) = frame.dims();
    let mut spec = to_complex(frame.data());
    fft2(&mut spec, w, h, false);
    for v in 0..h {
        let fy = signed_freq(v, h) / h as f64;
        for u in 0..w {
            let fx = signed_freq(u, w) / w as f64;
            spec[v * w + u] *= Complex64::from_polar(1.0, -2.0 * PI * (fx * dx + fy * dy));
        }
    }
    fft2(&mut spec, w, h, true);
    let scale = 1.0 / (w * h) as f64;
    Frame::new(w, h, spec.iter().map(|c| c.re * scale).collect()).expect("same dims")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::SequenceInfo;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Smooth periodic texture: a handful of random low-frequency cosines.
    fn texture(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<(f64, f64, f64, f64)> = (0..12)
            .map(|_| {
                (
                    rng.random_range(-6i32..=6) as f64,
                    rng.random_range(-6i32..=6) as f64,
                    rng.random_range(0.0..2.0 * PI),
                    rng.random_range(0.2..1.0),
                )
            })
            .collect();
        Frame::from_fn(w, h, |x, y| {
            0.5 + 0.05
                * waves
                    .iter()
                    .map(|(fx, fy, ph, a)| {
                        a * (2.0 * PI * (fx * x as f64 / w as f64 + fy * y as f64 / h as f64) + ph)
                            .cos()
                    })
                    .sum::<f64>()
        })
    }

    fn roll(frame: &Frame, dx: isize, dy: isize) -> Frame {
        let (w, h) = frame.dims();
        Frame::from_fn(w, h, |x, y| {
            let sx = (x as isize - dx).rem_euclid(w as isize) as usize;
            let sy = (y as isize - dy).rem_euclid(h as isize) as usize;
            frame.get(sx, sy)
        })
    }

    #[test]
    fn identity_registers_to_zero() {
        let f = texture(32, 24, 1);
        let t = register_translation(&f, &f, 100).unwrap();
        assert_eq!((t.dx, t.dy), (0.0, 0.0));
        assert!(t.error < 1e-6);
    }

    #[test]
    fn integer_circular_shift_is_exact() {
        let f = texture(32, 32, 2);
        let g = roll(&f, 3, -2);
        for k in [1, 2, 100] {
            let t = register_translation(&f, &g, k).unwrap();
            assert_eq!((t.dx, t.dy), (3.0, -2.0), "k={k}");
        }
    }

    #[test]
    fn subpixel_phase_ramp_shift() {
        let f = texture(64, 64, 3);
        let g = fourier_shift(&f, 0.25, -0.40);
        let t = register_translation(&f, &g, 100).unwrap();
        assert!((t.dx - 0.25).abs() <= 0.01, "{t:?}");
        assert!((t.dy + 0.40).abs() <= 0.01, "{t:?}");
    }

    #[test]
    fn half_pixel_stage_alone() {
        let f = texture(64, 64, 4);
        let g = fourier_shift(&f, 1.5, -0.5);
        let t = register_translation(&f, &g, 2).unwrap();
        assert_eq!((t.dx, t.dy), (1.5, -0.5));
    }

    #[test]
    fn antisymmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..5 {
            let f = texture(48, 40, 10 + seed);
            let g = fourier_shift(&f, rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let a = register_translation(&f, &g, 100).unwrap();
            let b = register_translation(&g, &f, 100).unwrap();
            assert!((a.dx + b.dx).abs() <= 0.01 + 1e-12, "{a:?} {b:?}");
            assert!((a.dy + b.dy).abs() <= 0.01 + 1e-12, "{a:?} {b:?}");
        }
    }

    #[test]
    fn all_zero_is_degenerate() {
        let z = Frame::zeros(16, 16);
        let f = texture(16, 16, 5);
        assert!(matches!(
            register_translation(&z, &f, 100),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            register_translation(&f, &z, 100),
            Err(Error::Degenerate(_))
        ));
    }

    fn info() -> SequenceInfo {
        SequenceInfo {
            fps: 200.0,
            subject_id: "s".into(),
            clip_id: "c".into(),
            neutral_pad: 0,
        }
    }

    #[test]
    fn static_sequence_is_unchanged() {
        let f = texture(32, 32, 6);
        let seq = FrameSequence::new(vec![f.clone(); 4], info()).unwrap();
        assert_eq!(align_sequence(&seq, 100).unwrap(), seq);
    }

    #[test]
    fn single_frame_is_unchanged() {
        let seq = FrameSequence::new(vec![texture(16, 16, 7)], info()).unwrap();
        assert_eq!(align_sequence(&seq, 100).unwrap(), seq);
    }

    #[test]
    fn integer_drift_is_undone_in_the_interior() {
        let f = texture(40, 32, 8);
        let n = 5;
        let frames: Vec<Frame> = (0..n).map(|i| roll(&f, i as isize, 0)).collect();
        let seq = FrameSequence::new(frames, info()).unwrap();
        let aligned = align_sequence(&seq, 100).unwrap();
        let border = n - 1;
        for (i, g) in aligned.frames().iter().enumerate() {
            for y in 0..32 {
                for x in 0..40 - border {
                    assert!(
                        (g.get(x, y) - f.get(x, y)).abs() < 1e-12,
                        "frame {i} ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn wrap_fill_undoes_circular_drift_everywhere() {
        let f = texture(32, 32, 9);
        let frames: Vec<Frame> = (0..6)
            .map(|i| fourier_shift(&f, 0.75 * i as f64, -0.5 * i as f64))
            .collect();
        let seq = FrameSequence::new(frames, info()).unwrap();
        let aligned = align_sequence_with(&seq, 100, AlignFill::Wrap).unwrap();
        for g in aligned.frames() {
            assert!(g.max_abs_diff(&f) < 1e-3);
        }
    }

    #[test]
    fn translate_replicates_edges() {
        let f = Frame::from_fn(4, 1, |x, _| x as f64);
        let g = translate(&f, 2.0, 0.0);
        assert_eq!(g.data(), &[2.0, 3.0, 3.0, 3.0]);
    }
}
