use crate::error::{Error, Result};
use crate::frame::FrameSequence;

/// Per-pixel derivatives of a whole volume, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub ix: Vec<f64>,
    pub iy: Vec<f64>,
    pub it: Vec<f64>,
}

impl Gradients {
    #[inline]
    pub fn index(&self, x: usize, y: usize, t: usize) -> usize {
        (t * self.height + y) * self.width + x
    }
}

#[inline]
fn diff(lo: f64, hi: f64, span: usize) -> f64 {
    if span == 0 {
        0.0
    } else {
        (hi - lo) / span as f64
    }
}

/// Neighbor indices for a central difference, one-sided at the ends.
#[inline]
fn support(i: usize, n: usize) -> (usize, usize) {
    if n < 2 {
        (0, 0)
    } else {
        (i.saturating_sub(1), (i + 1).min(n - 1))
    }
}

/// `(Ix, Iy, It)` of frame `t`, each row-major over the frame.
pub fn frame_gradients(seq: &FrameSequence, t: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (w, h) = seq.dims();
    let (t0, t1) = support(t, seq.len());
    let cur = seq.frame(t).data();
    let (prev, next) = (seq.frame(t0).data(), seq.frame(t1).data());
    let mut ix = vec![0.0; w * h];
    let mut iy = vec![0.0; w * h];
    let mut it = vec![0.0; w * h];
    for y in 0..h {
        let (y0, y1) = support(y, h);
        for x in 0..w {
            let (x0, x1) = support(x, w);
            let i = y * w + x;
            ix[i] = diff(cur[y * w + x0], cur[y * w + x1], x1 - x0);
            iy[i] = diff(cur[y0 * w + x], cur[y1 * w + x], y1 - y0);
            it[i] = diff(prev[i], next[i], t1 - t0);
        }
    }
    (ix, iy, it)
}

/// Central differences in x, y and t with one-sided differences at borders.
pub fn gradients_3d(seq: &FrameSequence) -> Result<Gradients> {
    if seq.len() < 3 {
        return Err(Error::TooShort(format!(
            "gradients need at least 3 frames, got {}",
            seq.len()
        )));
    }
    let (w, h) = seq.dims();
    let mut g = Gradients {
        width: w,
        height: h,
        frames: seq.len(),
        ix: Vec::with_capacity(w * h * seq.len()),
        iy: Vec::with_capacity(w * h * seq.len()),
        it: Vec::with_capacity(w * h * seq.len()),
    };
    for t in 0..seq.len() {
        let (ix, iy, it) = frame_gradients(seq, t);
        g.ix.extend(ix);
        g.iy.extend(iy);
        g.it.extend(it);
    }
    Ok(g)
}
