//! The four classifier input spaces: symbolic positions, rendered frames,
//! a top-down trace raster and a bar-code of frame column means.
//!
//! Everything here is pure and bit-exact; resizing for fixed-size models
//! happens at the classifier boundary.

use crate::navsim::{render_frame, Bounds, MapSpec, FRAME_HEIGHT, FRAME_WIDTH};
use crate::policies::Trajectory;
use crate::raster::GrayImage;

pub const TOPDOWN_WIDTH: usize = 320;
pub const TOPDOWN_HEIGHT: usize = 200;
pub const TRACE: u8 = 255;
pub const START_MARK: u8 = 128;
pub const END_MARK: u8 = 200;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EncodeError {
    #[error("cannot encode an empty trajectory")]
    EmptyTrajectory,
    #[error("cannot encode an empty frame sequence")]
    NoFrames,
    #[error("frame {index} is {got:?}, expected {expected:?}")]
    InconsistentFrames {
        index: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("stride must be at least 1")]
    ZeroStride,
}

/// `T x 3` positions, one row per step.
pub type SymbolicSeq = Vec<[f64; 3]>;

pub fn encode_symbolic(trajectory: &Trajectory) -> Result<SymbolicSeq, EncodeError> {
    if trajectory.steps.is_empty() {
        return Err(EncodeError::EmptyTrajectory);
    }
    Ok(trajectory.positions())
}

/// Renders one first-person frame per trajectory step, with the goal marker.
pub fn render_frames(map: &MapSpec, trajectory: &Trajectory) -> Vec<GrayImage> {
    let goal = map.goals.get(trajectory.goal_index).copied();
    trajectory
        .steps
        .iter()
        .map(|s| render_frame(map, &s.pose(), goal, FRAME_WIDTH, FRAME_HEIGHT))
        .collect()
}

/// World `(x, y)` to top-down pixel, clamped into the raster. The flag is
/// true when clamping was needed.
pub fn topdown_pixel(bounds: &Bounds, x: f64, y: f64) -> ((usize, usize), bool) {
    let fx = (x - bounds.min_x) / bounds.width() * TOPDOWN_WIDTH as f64;
    let fy = (y - bounds.min_y) / bounds.height() * TOPDOWN_HEIGHT as f64;
    let clamp = |v: f64, n: usize| -> (usize, bool) {
        let f = v.floor();
        if f < 0.0 || f.is_nan() {
            (0, true)
        } else if f >= n as f64 {
            (n - 1, true)
        } else {
            (f as usize, false)
        }
    };
    let (c, oc) = clamp(fx, TOPDOWN_WIDTH);
    let (r, or) = clamp(fy, TOPDOWN_HEIGHT);
    ((c, r), oc || or)
}

fn draw_line(img: &mut GrayImage, a: (usize, usize), b: (usize, usize), value: u8) {
    let (mut x0, mut y0) = (a.0 as i64, a.1 as i64);
    let (x1, y1) = (b.0 as i64, b.1 as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        img.set(x0 as usize, y0 as usize, value);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Projects positions onto the ground plane: consecutive positions joined
/// by 255-valued segments on black, start pixel 128, end pixel 200.
pub fn encode_topdown(trajectory: &Trajectory, bounds: &Bounds) -> Result<GrayImage, EncodeError> {
    if trajectory.steps.is_empty() {
        return Err(EncodeError::EmptyTrajectory);
    }
    let mut img = GrayImage::new(TOPDOWN_WIDTH, TOPDOWN_HEIGHT, 0);
    let mut clamped = 0usize;
    let pixels: Vec<(usize, usize)> = trajectory
        .steps
        .iter()
        .map(|s| {
            let (p, c) = topdown_pixel(bounds, s.x, s.y);
            clamped += c as usize;
            p
        })
        .collect();
    if clamped > 0 {
        tracing::warn!(trajectory = %trajectory.id, clamped, "positions outside map bounds were clamped");
    }
    for w in pixels.windows(2) {
        draw_line(&mut img, w[0], w[1], TRACE);
    }
    if pixels.len() == 1 {
        img.set(pixels[0].0, pixels[0].1, TRACE);
    }
    let (s, e) = (pixels[0], *pixels.last().unwrap());
    img.set(s.0, s.1, START_MARK);
    img.set(e.0, e.1, END_MARK);
    Ok(img)
}

/// Row `t` holds frame `t` averaged over its vertical axis, rounded half-up.
/// Output is `width x T`.
pub fn encode_barcode(frames: &[GrayImage]) -> Result<GrayImage, EncodeError> {
    let first = frames.first().ok_or(EncodeError::NoFrames)?;
    let (w, h) = (first.width, first.height);
    let mut out = GrayImage::new(w, frames.len(), 0);
    for (t, f) in frames.iter().enumerate() {
        if (f.width, f.height) != (w, h) {
            return Err(EncodeError::InconsistentFrames {
                index: t,
                expected: (w, h),
                got: (f.width, f.height),
            });
        }
        let mut sums = vec![0u64; w];
        for v in 0..h {
            for (s, p) in sums.iter_mut().zip(f.row(v)) {
                *s += *p as u64;
            }
        }
        let h = h as u64;
        for (u, s) in sums.into_iter().enumerate() {
            // floor(s / h + 1/2) in integers
            out.set(u, t, ((2 * s + h) / (2 * h)) as u8);
        }
    }
    Ok(out)
}

/// Keeps every `stride`-th frame starting with the first.
pub fn prepare_visual(frames: &[GrayImage], stride: usize) -> Result<Vec<GrayImage>, EncodeError> {
    if stride == 0 {
        return Err(EncodeError::ZeroStride);
    }
    Ok(frames.iter().step_by(stride).cloned().collect())
}

/// A fixed-length window padded by repeating the final element; `mask[i]`
/// is false for padding.
pub fn pad_window<T: Clone>(items: &[T], start: usize, len: usize) -> (Vec<T>, Vec<bool>) {
    let last = items.len().saturating_sub(1);
    (0..len)
        .map(|i| {
            let k = start + i;
            if k <= last {
                (items[k].clone(), true)
            } else {
                (items[last].clone(), false)
            }
        })
        .unzip()
}
