//! The two discriminators and the minimal differentiable augmentation.
//!
//! The pair discriminator scores motion realism from two frames of the
//! same scene plus their time difference broadcast to a full image
//! channel (7 input channels total). The image discriminator is the same
//! stack over single frames (3 channels). Both are small strided conv
//! stacks: desk-scale stand-ins for the reference architecture.

use crate::error::{Error, Result};
use crate::nn::{Binder, BoundConv2d, BoundLinear, Conv2d, Linear, Param};
use crate::tensor::{PadMode, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Two frames of one scene with their positive time difference. Frames
/// are channel-first [3·H·W] buffers.
#[derive(Debug, Clone)]
pub struct FramePair {
    pub frame_a: Vec<f64>,
    pub frame_b: Vec<f64>,
    pub h: usize,
    pub w: usize,
    /// t₂ − t₁, strictly positive.
    pub dt: f64,
}

impl FramePair {
    pub fn new(frame_a: Vec<f64>, frame_b: Vec<f64>, h: usize, w: usize, dt: f64) -> Result<Self> {
        if dt <= 0.0 {
            return Err(Error::DomainError {
                what: "dt",
                value: dt,
                range: "(0, 1]",
            });
        }
        if frame_a.len() != 3 * h * w || frame_b.len() != 3 * h * w {
            return Err(Error::ShapeMismatch {
                op: "frame_pair",
                details: format!(
                    "expected 3*{h}*{w} values, got {} and {}",
                    frame_a.len(),
                    frame_b.len()
                ),
            });
        }
        Ok(FramePair {
            frame_a,
            frame_b,
            h,
            w,
            dt,
        })
    }
}

/// Concatenate two [B,3,H,W] frame batches and per-element time
/// differences into the 7-channel pair input [B,7,H,W].
pub fn pair_to_input(frame_a: &Tensor, frame_b: &Tensor, dts: &[f64]) -> Result<Tensor> {
    if frame_a.shape() != frame_b.shape() {
        return Err(Error::ShapeMismatch {
            op: "pair_to_input",
            details: format!("{:?} vs {:?}", frame_a.shape(), frame_b.shape()),
        });
    }
    let (b, h, w) = (frame_a.shape()[0], frame_a.shape()[2], frame_a.shape()[3]);
    if dts.len() != b {
        return Err(Error::ShapeMismatch {
            op: "pair_to_input",
            details: format!("{} dt values for batch {b}", dts.len()),
        });
    }
    if let Some(&bad) = dts.iter().find(|&&dt| dt <= 0.0) {
        return Err(Error::DomainError {
            what: "dt",
            value: bad,
            range: "(0, 1]",
        });
    }
    let g = frame_a.graph().clone();
    let mut dt_chan = Vec::with_capacity(b * h * w);
    for &dt in dts {
        dt_chan.extend(std::iter::repeat_n(dt, h * w));
    }
    let dt_chan = g.constant(&[b, 1, h, w], &dt_chan)?;
    Tensor::concat(&[frame_a, frame_b, &dt_chan], 1)
}

/// Repeat a frame twice and append a zero time-difference channel: the
/// degraded 7-channel input that lets the pair discriminator double as
/// an image discriminator.
pub fn frame_as_pair_input(frame: &Tensor) -> Result<Tensor> {
    let (b, h, w) = (frame.shape()[0], frame.shape()[2], frame.shape()[3]);
    let g = frame.graph().clone();
    let zero = g.zeros(&[b, 1, h, w])?;
    Tensor::concat(&[frame, frame, &zero], 1)
}

/// Strided convolutional scorer: 3 conv layers (stride 2, channels
/// 16→32→64) with leaky-relu, global mean pool, affine to one logit.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub convs: Vec<Conv2d>,
    pub fc: Linear,
    pub slope: f64,
}

impl Discriminator {
    pub fn init(prefix: &str, in_channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let widths = [16usize, 32, 64];
        let mut convs = Vec::new();
        let mut ch = in_channels;
        for (i, &out) in widths.iter().enumerate() {
            convs.push(Conv2d::init(
                &format!("{prefix}.conv{i}"),
                ch,
                out,
                3,
                2,
                1,
                PadMode::Zero,
                rng,
            ));
            ch = out;
        }
        Discriminator {
            convs,
            fc: Linear::init(&format!("{prefix}.fc"), ch, 1, rng),
            slope: 0.2,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.convs[0].in_ch
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p: Vec<&Param> = self.convs.iter().flat_map(|c| c.params()).collect();
        p.extend(self.fc.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p: Vec<&mut Param> = self.convs.iter_mut().flat_map(|c| c.params_mut()).collect();
        p.extend(self.fc.params_mut());
        p
    }

    pub fn bind(&self, b: &mut Binder) -> Result<BoundDiscriminator> {
        Ok(BoundDiscriminator {
            convs: self
                .convs
                .iter()
                .map(|c| c.bind(b))
                .collect::<Result<_>>()?,
            fc: self.fc.bind(b)?,
            slope: self.slope,
        })
    }
}

pub struct BoundDiscriminator {
    convs: Vec<BoundConv2d>,
    fc: BoundLinear,
    slope: f64,
}

impl BoundDiscriminator {
    /// x: [B, C, H, W] → scores [B, 1].
    pub fn score(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for conv in &self.convs {
            h = conv.apply(&h)?.leaky_relu(self.slope)?;
        }
        let (b, c) = (h.shape()[0], h.shape()[1]);
        let pooled = h.mean_axes(&[2, 3])?.reshape(&[b, c])?;
        self.fc.apply(&pooled)
    }
}

/// Reduced differentiable-augmentation policy: horizontal flip and
/// per-channel brightness shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugPolicy {
    pub flip: bool,
    pub brightness: bool,
}

impl AugPolicy {
    pub fn none() -> Self {
        AugPolicy {
            flip: false,
            brightness: false,
        }
    }

    pub fn all() -> Self {
        AugPolicy {
            flip: true,
            brightness: true,
        }
    }
}

/// Augmentation parameters drawn once per step; applying one draw to the
/// real and generated batches keeps them identically augmented.
#[derive(Debug, Clone)]
pub struct AugDraw {
    pub flip: Vec<bool>,
    pub shift: Vec<[f64; 3]>,
}

pub const BRIGHTNESS_RANGE: f64 = 0.25;

pub fn draw_augment(policy: AugPolicy, batch: usize, rng: &mut ChaCha8Rng) -> AugDraw {
    let flip = (0..batch)
        .map(|_| policy.flip && rng.gen_range(0.0..1.0) < 0.5)
        .collect();
    let shift = (0..batch)
        .map(|_| {
            if policy.brightness {
                [
                    rng.gen_range(-BRIGHTNESS_RANGE..BRIGHTNESS_RANGE),
                    rng.gen_range(-BRIGHTNESS_RANGE..BRIGHTNESS_RANGE),
                    rng.gen_range(-BRIGHTNESS_RANGE..BRIGHTNESS_RANGE),
                ]
            } else {
                [0.0; 3]
            }
        })
        .collect();
    AugDraw { flip, shift }
}

/// Apply a draw to a [B, 3, H, W] batch, differentiably w.r.t. pixels.
pub fn apply_augment(x: &Tensor, draw: &AugDraw) -> Result<Tensor> {
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    assert_eq!(draw.flip.len(), b, "augmentation draw batch mismatch");
    let g = x.graph().clone();

    let mut out = if draw.flip.iter().any(|&f| f) {
        let mut rows: Vec<Tensor> = Vec::with_capacity(b);
        for (i, &flip) in draw.flip.iter().enumerate() {
            let row = x.slice(&[(i, i + 1), (0, c), (0, h), (0, w)])?;
            rows.push(if flip { row.flip_last()? } else { row });
        }
        Tensor::concat(&rows.iter().collect::<Vec<_>>(), 0)?
    } else {
        x.clone()
    };

    if draw.shift.iter().any(|s| s.iter().any(|&v| v != 0.0)) {
        let mut shifts = Vec::with_capacity(b * c);
        for s in &draw.shift {
            shifts.extend_from_slice(s);
        }
        let shifts = g.constant(&[b, c, 1, 1], &shifts)?;
        out = out.add(&shifts)?;
    }
    Ok(out)
}
