//! Scalar brute-force descriptors used as oracles. Written directly from the
//! descriptor definitions on nested loops, sharing no code with the library.

use std::f64::consts::PI;

use mmspot::{Frame, FrameSequence, SequenceInfo};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn info() -> SequenceInfo {
    SequenceInfo {
        fps: 200.0,
        subject_id: "s".into(),
        clip_id: "c".into(),
        neutral_pad: 0,
    }
}

pub fn seq_from_fn(w: usize, h: usize, n: usize, f: impl Fn(usize, usize, usize) -> f64) -> FrameSequence {
    let frames = (0..n).map(|t| Frame::from_fn(w, h, |x, y| f(x, y, t))).collect();
    FrameSequence::new(frames, info()).unwrap()
}

pub fn random_volume(w: usize, h: usize, n: usize, seed: u64) -> FrameSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<f64> = (0..w * h * n).map(|_| rng.random_range(0..256) as f64 / 256.0).collect();
    seq_from_fn(w, h, n, |x, y, t| vals[(t * h + y) * w + x])
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Plane {
    XY,
    XT,
    YT,
}

pub const PLANES: [Plane; 3] = [Plane::XY, Plane::XT, Plane::YT];

/// Oriented-gradient histogram of the whole frame `t` on one plane.
pub fn hog(seq: &FrameSequence, plane: Plane, bins: usize, t: usize) -> Vec<f64> {
    let (w, h, n) = (seq.width(), seq.height(), seq.len());
    let d = |x: usize, y: usize, t: usize, axis: usize| -> f64 {
        let (pos, len) = match axis {
            0 => (x, w),
            1 => (y, h),
            _ => (t, n),
        };
        let at = |p: usize| match axis {
            0 => seq.at(p, y, t),
            1 => seq.at(x, p, t),
            _ => seq.at(x, y, p),
        };
        if len == 1 {
            0.0
        } else if pos == 0 {
            at(1) - at(0)
        } else if pos == len - 1 {
            at(len - 1) - at(len - 2)
        } else {
            (at(pos + 1) - at(pos - 1)) / 2.0
        }
    };
    let mut hist = vec![0.0; bins];
    for y in 0..h {
        for x in 0..w {
            let (a, b) = match plane {
                Plane::XY => (d(x, y, t, 0), d(x, y, t, 1)),
                Plane::XT => (d(x, y, t, 0), d(x, y, t, 2)),
                Plane::YT => (d(x, y, t, 1), d(x, y, t, 2)),
            };
            let mag = (a * a + b * b).sqrt();
            let mut theta = b.atan2(a);
            if theta < 0.0 {
                theta += 2.0 * PI;
            }
            let width = 2.0 * PI / bins as f64;
            for (k, slot) in hist.iter_mut().enumerate() {
                let mut dist = (theta - k as f64 * width).abs();
                if dist > PI {
                    dist = 2.0 * PI - dist;
                }
                *slot += mag * (1.0 - dist / width).max(0.0);
            }
        }
    }
    hist.iter().map(|v| v / (w * h) as f64).collect()
}

const RING: [(isize, isize); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

fn is_uniform(code: usize) -> bool {
    let bits: Vec<char> = format!("{code:08b}").chars().collect();
    (0..8).filter(|&i| bits[i] != bits[(i + 1) % 8]).count() <= 2
}

fn lbp_bin(code: usize) -> usize {
    if is_uniform(code) {
        (0..code).filter(|&c| is_uniform(c)).count()
    } else {
        58
    }
}

/// Uniform LBP (8 neighbours, radius 1, clamped borders) of frame `t` on one plane.
pub fn lbp(seq: &FrameSequence, plane: Plane, t: usize) -> Vec<f64> {
    let (w, h, n) = (seq.width() as isize, seq.height() as isize, seq.len() as isize);
    let get = |x: isize, y: isize, t: isize| {
        seq.at(
            x.clamp(0, w - 1) as usize,
            y.clamp(0, h - 1) as usize,
            t.clamp(0, n - 1) as usize,
        )
    };
    let mut hist = vec![0.0; 59];
    let t = t as isize;
    for y in 0..h {
        for x in 0..w {
            let c = get(x, y, t);
            let mut code = 0;
            for (k, (a, b)) in RING.iter().enumerate() {
                let v = match plane {
                    Plane::XY => get(x + a, y + b, t),
                    Plane::XT => get(x + a, y, t + b),
                    Plane::YT => get(x, y + a, t + b),
                };
                if v >= c {
                    code += 1 << k;
                }
            }
            hist[lbp_bin(code)] += 1.0;
        }
    }
    hist.iter().map(|v| v / (w * h) as f64).collect()
}

type Field = Vec<Vec<f64>>;

/// Horn-Schunck on a 0-255 intensity scale, straight from the update equations.
fn horn_schunck(a: &Frame, b: &Frame, alpha: f64, iters: usize) -> (Field, Field) {
    let (w, h) = (a.width() as isize, a.height() as isize);
    let e = |f: &Frame, x: isize, y: isize| f.get_clamped(x.min(w - 1), y.min(h - 1)) * 255.0;
    let g = |m: &Field, x: isize, y: isize| m[y.clamp(0, h - 1) as usize][x.clamp(0, w - 1) as usize];
    let mut u = vec![vec![0.0; w as usize]; h as usize];
    let mut v = u.clone();
    for _ in 0..iters {
        let (mut nu, mut nv) = (u.clone(), v.clone());
        for y in 0..h {
            for x in 0..w {
                let ex = 0.25
                    * (e(a, x + 1, y) - e(a, x, y) + e(a, x + 1, y + 1) - e(a, x, y + 1) + e(b, x + 1, y)
                        - e(b, x, y)
                        + e(b, x + 1, y + 1)
                        - e(b, x, y + 1));
                let ey = 0.25
                    * (e(a, x, y + 1) - e(a, x, y) + e(a, x + 1, y + 1) - e(a, x + 1, y) + e(b, x, y + 1)
                        - e(b, x, y)
                        + e(b, x + 1, y + 1)
                        - e(b, x + 1, y));
                let et = 0.25
                    * (e(b, x, y) - e(a, x, y) + e(b, x + 1, y) - e(a, x + 1, y) + e(b, x, y + 1)
                        - e(a, x, y + 1)
                        + e(b, x + 1, y + 1)
                        - e(a, x + 1, y + 1));
                let avg = |m: &Field| {
                    (g(m, x - 1, y) + g(m, x + 1, y) + g(m, x, y - 1) + g(m, x, y + 1)) / 6.0
                        + (g(m, x - 1, y - 1) + g(m, x + 1, y - 1) + g(m, x - 1, y + 1) + g(m, x + 1, y + 1))
                            / 12.0
                };
                let (ub, vb) = (avg(&u), avg(&v));
                let k = (ex * ub + ey * vb + et) / (alpha * alpha + ex * ex + ey * ey);
                nu[y as usize][x as usize] = ub - ex * k;
                nv[y as usize][x as usize] = vb - ey * k;
            }
        }
        u = nu;
        v = nv;
    }
    (u, v)
}

/// Magnitude-weighted flow orientation histogram between frames `t - 1` and `t`,
/// left and right motion mirrored onto the same bins.
pub fn hoof(seq: &FrameSequence, t: usize, bins: usize, alpha: f64, iters: usize) -> Vec<f64> {
    let mut hist = vec![0.0; bins];
    if t == 0 {
        return hist;
    }
    let (u, v) = horn_schunck(seq.frame(t - 1), seq.frame(t), alpha, iters);
    let mut count = 0.0;
    for (ur, vr) in u.iter().zip(&v) {
        for (&uu, &vv) in ur.iter().zip(vr) {
            count += 1.0;
            let ang = if uu < 0.0 { vv.atan2(-uu) } else { vv.atan2(uu) };
            let mut b = ((ang + PI / 2.0) * bins as f64 / PI) as usize;
            if b == bins {
                b -= 1;
            }
            hist[b] += (uu * uu + vv * vv).sqrt();
        }
    }
    let s: f64 = hist.iter().sum();
    hist.iter()
        .map(|x| if s > 1e-9 { x / s / count } else { x / count })
        .collect()
}
