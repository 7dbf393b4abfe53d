use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, InputSpace, ModelKind};
use crate::encoders::{encode_barcode, encode_symbolic, encode_topdown, prepare_visual, render_frames};
use crate::navsim::{Bounds, MapSpec, STEP_CELLS};
use crate::nnkit::Tensor;
use crate::policies::{Source, Trajectory};
use crate::raster::GrayImage;

/// Classifier-side preprocessing, stored alongside trained models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    /// Positions are scaled into [0, 1] per axis by these bounds.
    pub bounds: Bounds,
    /// Divisor for per-step displacement, normally one movement step.
    pub velocity_scale: f64,
    /// Subsequence length for SYM-GRU.
    pub window: usize,
    /// Subsequence length, in kept frames, for VIS-GRU.
    pub visual_window: usize,
    /// Keep every n-th frame for the VIS models.
    pub frame_stride: usize,
    /// Block-average factor applied to 320x200 frames (4 gives 80x50).
    pub frame_factor: usize,
    /// Side of the square TD and BC model inputs.
    pub image_size: usize,
}

impl Preprocess {
    pub fn for_map(map: &MapSpec) -> Self {
        Self {
            bounds: map.bounds(),
            velocity_scale: STEP_CELLS * map.cell_size,
            window: 32,
            visual_window: 8,
            frame_stride: 2,
            frame_factor: 4,
            image_size: 128,
        }
    }

    pub fn window_for(&self, kind: ModelKind) -> usize {
        match kind {
            ModelKind::SymGru => self.window,
            ModelKind::VisGru => self.visual_window,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.window == 0 || self.visual_window == 0 || self.frame_stride == 0 || self.frame_factor == 0 || self.image_size < 8
            || !(self.velocity_scale > 0.0 && self.velocity_scale.is_finite())
        {
            return Err(ClassifierError::Config(format!("invalid preprocessing {self:?}")));
        }
        Ok(())
    }
}

/// Per-step symbolic features: normalized position, then the scaled
/// displacements into this step and into the previous one.
pub const SYMBOLIC_STEP_FEATURES: usize = 9;

/// A trajectory in one input space. `inputs` holds one tensor per step or
/// frame, or a single image for the CNN kinds.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTrajectory {
    pub id: String,
    pub source: Source,
    pub generator_id: String,
    pub goal_index: usize,
    pub label: f64,
    pub space: InputSpace,
    pub inputs: Vec<Tensor>,
}

/// Mean over `factor x factor` blocks, scaled to [0, 1]; returns `[1, h/f, w/f]`.
pub fn downsample_frame(img: &GrayImage, factor: usize) -> Tensor {
    let (w, h) = (img.width / factor, img.height / factor);
    let norm = (factor * factor) as f64 * 255.0;
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let mut s = 0u32;
            for dr in 0..factor {
                let row = img.row(r * factor + dr);
                s += row[c * factor..(c + 1) * factor].iter().map(|&p| p as u32).sum::<u32>();
            }
            out.push(s as f64 / norm);
        }
    }
    Tensor::new(vec![1, h, w], out).expect("shape matches data")
}

/// Bilinear resize with half-pixel centres, scaled to [0, 1]; returns `[1, h, w]`.
pub fn bilinear_resize(img: &GrayImage, width: usize, height: usize) -> Tensor {
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let coord = |d: usize, s: f64, n: usize| -> (usize, usize, f64) {
        let f = ((d as f64 + 0.5) * s - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = f.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, f - i0 as f64)
    };
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        let (r0, r1, fy) = coord(r, sy, img.height);
        for c in 0..width {
            let (c0, c1, fx) = coord(c, sx, img.width);
            let p = |cc, rr| img.get(cc, rr) as f64;
            let top = p(c0, r0) * (1.0 - fx) + p(c1, r0) * fx;
            let bot = p(c0, r1) * (1.0 - fx) + p(c1, r1) * fx;
            out.push((top * (1.0 - fy) + bot * fy) / 255.0);
        }
    }
    Tensor::new(vec![1, height, width], out).expect("shape matches data")
}

/// Encodes a trajectory for `kind`. Frames may be passed in to avoid re-rendering.
pub fn encode_for(
    kind: ModelKind,
    trajectory: &Trajectory,
    map: &MapSpec,
    pre: &Preprocess,
    frames: Option<&[GrayImage]>,
) -> Result<EncodedTrajectory, ClassifierError> {
    pre.validate()?;
    let rendered;
    let frames_or_render = |frames: Option<&[GrayImage]>| -> Vec<GrayImage> {
        match frames {
            Some(f) => f.to_vec(),
            None => render_frames(map, trajectory),
        }
    };
    let space = kind.input_space();
    let inputs = match space {
        InputSpace::Symbolic => {
            let b = &pre.bounds;
            let v = pre.velocity_scale;
            let seq = encode_symbolic(trajectory)?;
            let delta = |t: usize| -> [f64; 3] {
                if t == 0 {
                    return [0.0; 3];
                }
                let (a, b) = (seq[t - 1], seq[t]);
                [(b[0] - a[0]) / v, (b[1] - a[1]) / v, (b[2] - a[2]) / v]
            };
            (0..seq.len())
                .map(|t| {
                    let [x, y, z] = seq[t];
                    let mut f = vec![(x - b.min_x) / b.width(), (y - b.min_y) / b.height(), z / 10.0];
                    f.extend(delta(t));
                    f.extend(delta(t.saturating_sub(1)));
                    Tensor::from_vec(f)
                })
                .collect()
        }
        InputSpace::Visual => {
            rendered = frames_or_render(frames);
            prepare_visual(&rendered, pre.frame_stride)?
                .iter()
                .map(|f| downsample_frame(f, pre.frame_factor))
                .collect()
        }
        InputSpace::TopDown => {
            let img = encode_topdown(trajectory, &pre.bounds)?;
            vec![bilinear_resize(&img, pre.image_size, pre.image_size)]
        }
        InputSpace::Barcode => {
            let rendered = frames_or_render(frames);
            let bc = encode_barcode(&rendered)?;
            vec![bilinear_resize(&bc, pre.image_size, pre.image_size)]
        }
    };
    if inputs.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    Ok(EncodedTrajectory {
        id: trajectory.id.clone(),
        source: trajectory.source,
        generator_id: trajectory.generator_id.clone(),
        goal_index: trajectory.goal_index,
        label: trajectory.source.proxy_label(),
        space,
        inputs,
    })
}

/// One training sample: a step, a window start or a whole image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SampleRef {
    pub trajectory: usize,
    pub start: usize,
}

/// Endless stream of uniformly drawn batches.
pub struct BatchStream {
    cumulative: Vec<usize>,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    pub fn draw(&mut self) -> SampleRef {
        let total = *self.cumulative.last().unwrap();
        let k = self.rng.gen_range(0..total);
        let trajectory = self.cumulative.partition_point(|&c| c <= k);
        let before = if trajectory == 0 { 0 } else { self.cumulative[trajectory - 1] };
        SampleRef {
            trajectory,
            start: k - before,
        }
    }
}

impl Iterator for BatchStream {
    type Item = Vec<SampleRef>;

    fn next(&mut self) -> Option<Self::Item> {
        Some((0..self.batch_size).map(|_| self.draw()).collect())
    }
}

/// Number of samples a trajectory offers: steps for FF, windows for GRU, one image for CNN.
pub(crate) fn sample_count(kind: ModelKind, len: usize, window: usize) -> usize {
    if kind.is_image() {
        1
    } else if kind.is_recurrent() {
        len.saturating_sub(window) + 1
    } else {
        len
    }
}

/// Uniform sampling over all (trajectory, step) pairs, all valid windows, or all images.
pub fn sample_batches(
    dataset: &[EncodedTrajectory],
    kind: ModelKind,
    batch_size: usize,
    window: usize,
    seed: u64,
) -> Result<BatchStream, ClassifierError> {
    if dataset.is_empty() || dataset.iter().any(|e| e.inputs.is_empty()) {
        return Err(ClassifierError::EmptyDataset);
    }
    if batch_size == 0 || window == 0 {
        return Err(ClassifierError::Config("batch size and window must be positive".into()));
    }
    let mut cumulative = Vec::with_capacity(dataset.len());
    let mut acc = 0;
    for e in dataset {
        acc += sample_count(kind, e.inputs.len(), window);
        cumulative.push(acc);
    }
    Ok(BatchStream {
        cumulative,
        batch_size,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

/// Human when strictly more than half the samples exceed 0.5; ties go to agent.
pub fn majority_vote(probabilities: &[f64]) -> bool {
    let above = probabilities.iter().filter(|p| **p > 0.5).count();
    2 * above > probabilities.len()
}
