//! Multi-view generation: random augmentations over observation sequences.
//!
//! One transform instance is drawn per sequence and applied to all T frames
//! (the encoder conditions on history, so per-frame jitter would inject
//! action-correlated noise); a per-frame mode exists behind a flag for
//! ablation. Actions and rewards are never touched.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ndgrad::Tensor;

/// A single augmentation family with its parameters. Frames are 2-D
/// grayscale tensors with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentationSpec {
    /// Random window of `target` pixels from a `source`-sized frame.
    Crop { source: usize, target: usize },
    /// Horizontal mirror with probability 0.5.
    Flip,
    /// Zero-fill one random rectangle up to `max_extent` per side.
    Cutout { max_extent: usize },
    /// Multiply all pixels by a factor drawn from [lo, hi], clamped to [0,1].
    Intensity { lo: f64, hi: f64 },
    /// With probability `p`, blend each pixel halfway toward the frame mean.
    GrayscaleMix { p: f64 },
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            AugmentationSpec::Crop { source, target } => {
                if target > source || *target == 0 {
                    return Err(Error::contract(format!(
                        "crop target {target} incompatible with source {source}"
                    )));
                }
            }
            AugmentationSpec::Cutout { max_extent } => {
                if *max_extent == 0 {
                    return Err(Error::contract("cutout needs a positive extent"));
                }
            }
            AugmentationSpec::Intensity { lo, hi } => {
                if !(0.0..=2.0).contains(lo) || hi < lo {
                    return Err(Error::contract("intensity range invalid"));
                }
            }
            AugmentationSpec::GrayscaleMix { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::contract("probability outside [0, 1]"));
                }
            }
            AugmentationSpec::Flip => {}
        }
        Ok(())
    }

    /// Output frame side length for a `source`-sized input.
    pub fn output_size(&self, source: usize) -> usize {
        match self {
            AugmentationSpec::Crop { target, .. } => *target,
            _ => source,
        }
    }
}

/// One sampled transform instance, applied identically across a sequence.
#[derive(Debug, Clone, PartialEq)]
enum TransformDraw {
    Crop { row: usize, col: usize, target: usize },
    Flip { mirror: bool },
    Cutout { row: usize, col: usize, h: usize, w: usize },
    Intensity { factor: f64 },
    GrayscaleMix { apply: bool },
}

fn frame_side(frame: &Tensor) -> Result<usize> {
    let s = frame.shape();
    if s.len() != 2 || s[0] != s[1] {
        return Err(Error::invalid_shape(format!(
            "expected a square 2-D frame, got {s:?}"
        )));
    }
    Ok(s[0])
}

fn draw(spec: &AugmentationSpec, side: usize, rng: &mut ChaCha8Rng) -> Result<TransformDraw> {
    spec.validate()?;
    Ok(match spec {
        AugmentationSpec::Crop { source, target } => {
            if *source != side {
                return Err(Error::contract(format!(
                    "crop source {source} vs frame side {side}"
                )));
            }
            let span = source - target;
            TransformDraw::Crop {
                row: if span == 0 { 0 } else { rng.gen_range(0..=span) },
                col: if span == 0 { 0 } else { rng.gen_range(0..=span) },
                target: *target,
            }
        }
        AugmentationSpec::Flip => TransformDraw::Flip {
            mirror: rng.gen_bool(0.5),
        },
        AugmentationSpec::Cutout { max_extent } => {
            let m = (*max_extent).min(side);
            let h = rng.gen_range(1..=m);
            let w = rng.gen_range(1..=m);
            TransformDraw::Cutout {
                row: rng.gen_range(0..=side - h),
                col: rng.gen_range(0..=side - w),
                h,
                w,
            }
        }
        AugmentationSpec::Intensity { lo, hi } => TransformDraw::Intensity {
            factor: if hi > lo { rng.gen_range(*lo..*hi) } else { *lo },
        },
        AugmentationSpec::GrayscaleMix { p } => TransformDraw::GrayscaleMix {
            apply: rng.gen_bool(*p),
        },
    })
}

fn apply_draw(frame: &Tensor, t: &TransformDraw) -> Result<Tensor> {
    let side = frame_side(frame)?;
    match t {
        TransformDraw::Crop { row, col, target } => {
            let mut out = Tensor::zeros(&[*target, *target]);
            for r in 0..*target {
                for c in 0..*target {
                    out.data_mut()[r * target + c] = frame.data()[(row + r) * side + (col + c)];
                }
            }
            Ok(out)
        }
        TransformDraw::Flip { mirror } => {
            if !mirror {
                return Ok(frame.clone());
            }
            let mut out = Tensor::zeros(&[side, side]);
            for r in 0..side {
                for c in 0..side {
                    out.data_mut()[r * side + c] = frame.data()[r * side + (side - 1 - c)];
                }
            }
            Ok(out)
        }
        TransformDraw::Cutout { row, col, h, w } => {
            let mut out = frame.clone();
            for r in *row..row + h {
                for c in *col..col + w {
                    out.data_mut()[r * side + c] = 0.0;
                }
            }
            Ok(out)
        }
        TransformDraw::Intensity { factor } => {
            Ok(frame.map(|v| (v * factor).clamp(0.0, 1.0)))
        }
        TransformDraw::GrayscaleMix { apply } => {
            if !apply {
                return Ok(frame.clone());
            }
            let mean: f64 = frame.data().iter().sum::<f64>() / frame.numel() as f64;
            Ok(frame.map(|v| 0.5 * (v + mean)))
        }
    }
}

/// Apply one random transform instance consistently to all frames of a
/// sequence (temporal consistency). `per_frame` redraws per frame instead.
pub fn augment_sequence(
    frames: &[Tensor],
    spec: &AugmentationSpec,
    rng: &mut ChaCha8Rng,
    per_frame: bool,
) -> Result<Vec<Tensor>> {
    if frames.is_empty() {
        return Err(Error::contract("empty sequence"));
    }
    let side = frame_side(&frames[0])?;
    let mut out = Vec::with_capacity(frames.len());
    let mut t = draw(spec, side, rng)?;
    for frame in frames {
        if frame_side(frame)? != side {
            return Err(Error::invalid_shape("ragged frame sizes in sequence"));
        }
        out.push(apply_draw(frame, &t)?);
        if per_frame {
            t = draw(spec, side, rng)?;
        }
    }
    Ok(out)
}

/// Batch of N sequences of length T: raw frames, actions, rewards.
#[derive(Clone)]
pub struct SequenceBatch {
    /// obs[n][t] is a 2-D frame.
    pub obs: Vec<Vec<Tensor>>,
    /// actions[n][t] is the raw action vector taken at obs[n][t].
    pub actions: Vec<Vec<Vec<f64>>>,
    /// rewards[n][t].
    pub rewards: Vec<Vec<f64>>,
    /// Stored representations from collection time, [n][t] -> (h, z) values;
    /// populated only for on-policy updates that need them.
    pub old_reprs: Option<Vec<Vec<(Tensor, Tensor)>>>,
}

impl SequenceBatch {
    pub fn n_sequences(&self) -> usize {
        self.obs.len()
    }

    pub fn len_t(&self) -> usize {
        self.obs.first().map_or(0, |s| s.len())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.obs.len();
        let t = self.len_t();
        if n == 0 || t == 0 {
            return Err(Error::contract("empty batch"));
        }
        if self.actions.len() != n || self.rewards.len() != n {
            return Err(Error::contract("batch field lengths disagree"));
        }
        for i in 0..n {
            if self.obs[i].len() != t || self.actions[i].len() != t || self.rewards[i].len() != t {
                return Err(Error::contract("ragged batch"));
            }
            if self.rewards[i].iter().any(|r| !r.is_finite()) {
                return Err(Error::domain("non-finite reward"));
            }
        }
        Ok(())
    }
}

/// Two independently augmented views of the same batch. Actions and rewards
/// are copied unchanged; the views differ only in observations.
pub fn make_two_views(
    batch: &SequenceBatch,
    spec: &AugmentationSpec,
    rng: &mut ChaCha8Rng,
    per_frame: bool,
) -> Result<(SequenceBatch, SequenceBatch)> {
    batch.validate()?;
    let make = |rng: &mut ChaCha8Rng| -> Result<SequenceBatch> {
        let mut obs = Vec::with_capacity(batch.obs.len());
        for seq in &batch.obs {
            obs.push(augment_sequence(seq, spec, rng, per_frame)?);
        }
        Ok(SequenceBatch {
            obs,
            actions: batch.actions.clone(),
            rewards: batch.rewards.clone(),
            old_reprs: batch.old_reprs.clone(),
        })
    };
    let v1 = make(rng)?;
    let v2 = make(rng)?;
    Ok((v1, v2))
}

/// Stack the N frames at step t into one (N, side*side) tensor.
pub fn stacked_flat_obs(batch: &SequenceBatch, t: usize) -> Result<Tensor> {
    let n = batch.n_sequences();
    let side = frame_side(&batch.obs[0][t])?;
    let dim = side * side;
    let mut data = Vec::with_capacity(n * dim);
    for seq in &batch.obs {
        if frame_side(&seq[t])? != side {
            return Err(Error::invalid_shape("ragged frame sizes across batch"));
        }
        data.extend_from_slice(seq[t].data());
    }
    Tensor::new(vec![n, dim], data)
}

/// Stack the N raw action vectors at step t into one (N, dim) tensor.
pub fn stacked_actions(batch: &SequenceBatch, t: usize) -> Result<Tensor> {
    let n = batch.n_sequences();
    let dim = batch.actions[0][t].len();
    let mut data = Vec::with_capacity(n * dim);
    for seq in &batch.actions {
        if seq[t].len() != dim {
            return Err(Error::invalid_shape("ragged action dims across batch"));
        }
        data.extend_from_slice(&seq[t]);
    }
    Tensor::new(vec![n, dim], data)
}

/// Deterministic center crop; the non-loss consumers (acting, agent updates,
/// eval) all see this fixed view so the model has one observation shape.
pub fn center_crop(frame: &Tensor, target: usize) -> Result<Tensor> {
    let side = frame_side(frame)?;
    if target > side {
        return Err(Error::contract(format!(
            "center crop {target} from side {side}"
        )));
    }
    let off = (side - target) / 2;
    apply_draw(
        frame,
        &TransformDraw::Crop {
            row: off,
            col: off,
            target,
        },
    )
}
