//! Run configuration: every hyperparameter with reference-scale values
//! and desk-scale defaults, plus the flat `section.key=value` text format.
//!
//! The text format is deliberately dependency-free and diff-friendly:
//! one `key=value` per line, `#` comments, unknown keys are errors. A
//! run's config snapshot is embedded verbatim in its checkpoints.

use crate::error::{Error, Result};
use crate::latents::TimeMode;

/// How rendered feature images become RGB.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsampleMode {
    /// Per-pixel 1×1 feature-to-RGB at the rendering resolution.
    Direct,
    /// Nearest ×2, a 3×3 convolution, then 1×1 to RGB.
    Up2x,
}

impl UpsampleMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(UpsampleMode::Direct),
            "up2x" => Ok(UpsampleMode::Up2x),
            other => Err(Error::UnknownMode {
                what: "upsample mode",
                value: other.to_string(),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UpsampleMode::Direct => "direct",
            UpsampleMode::Up2x => "up2x",
        }
    }
}

/// Network dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DimsConfig {
    pub z_dim: usize,
    pub m_dim: usize,
    pub w_dim: usize,
    pub n_dim: usize,
    pub motion_hidden: usize,
    pub fg_depth: usize,
    pub fg_hidden: usize,
    pub bg_depth: usize,
    pub bg_hidden: usize,
    /// Feature dim shared by both fields and the ray head.
    pub feature_dim: usize,
    pub pe_bands: usize,
    pub view_pe_bands: usize,
    /// Channels of the 3×3 convolution in the up2x path.
    pub up_channels: usize,
    pub leaky_slope: f64,
}

impl DimsConfig {
    /// CPU-tractable defaults.
    pub fn desk() -> Self {
        DimsConfig {
            z_dim: 64,
            m_dim: 64,
            w_dim: 64,
            n_dim: 32,
            motion_hidden: 64,
            fg_depth: 4,
            fg_hidden: 32,
            bg_depth: 4,
            bg_hidden: 16,
            feature_dim: 32,
            pe_bands: 10,
            view_pe_bands: 4,
            up_channels: 16,
            leaky_slope: 0.2,
        }
    }

    /// Reference-scale dimensions: codes and style at 512, motion output
    /// 128, foreground 8×128, background 4×64.
    pub fn reference() -> Self {
        DimsConfig {
            z_dim: 512,
            m_dim: 512,
            w_dim: 512,
            n_dim: 128,
            motion_hidden: 512,
            fg_depth: 8,
            fg_hidden: 128,
            bg_depth: 4,
            bg_hidden: 64,
            feature_dim: 128,
            pe_bands: 10,
            view_pe_bands: 4,
            up_channels: 64,
            leaky_slope: 0.2,
        }
    }
}

/// Camera sampling distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraConfig {
    pub pitch_std: f64,
    pub yaw_std: f64,
    pub fov_deg: f64,
}

impl CameraConfig {
    pub fn default_face() -> Self {
        CameraConfig {
            pitch_std: 0.15,
            yaw_std: 0.3,
            fov_deg: 18.0,
        }
    }
}

/// Volume rendering geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    /// Low-resolution rendering size (square).
    pub resolution: usize,
    /// Samples per ray inside [l_near, l_far].
    pub fg_samples: usize,
    /// Extra background samples past the unit sphere (uniform in 1/r).
    pub bg_samples: usize,
    pub l_near: f64,
    pub l_far: f64,
    pub upsample: UpsampleMode,
}

impl RenderConfig {
    pub fn desk() -> Self {
        RenderConfig {
            resolution: 16,
            fg_samples: 16,
            bg_samples: 4,
            l_near: 0.5,
            l_far: 2.0,
            upsample: UpsampleMode::Direct,
        }
    }

    /// Output resolution after the upsampler.
    pub fn out_resolution(&self) -> usize {
        match self.upsample {
            UpsampleMode::Direct => self.resolution,
            UpsampleMode::Up2x => 2 * self.resolution,
        }
    }
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning-rate scale for the content mapping network.
    pub mapping_lr_scale: f64,
    /// Learning-rate scale for the motion generator (1.0: the reduced
    /// rate applies to the mapping network only).
    pub motion_lr_scale: f64,
}

impl OptConfig {
    pub fn reference() -> Self {
        OptConfig {
            lr: 0.0025,
            beta1: 0.0,
            beta2: 0.99,
            eps: 1e-8,
            mapping_lr_scale: 0.01,
            motion_lr_scale: 1.0,
        }
    }
}

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: u64,
    /// Frame pairs per step.
    pub batch: usize,
    pub frames_per_clip: usize,
    /// R1 weight λ₁ (effective, pre lazy-scheduling).
    pub lambda_r1: f64,
    /// Consistency-regularizer weight λ₂.
    pub lambda_path: f64,
    /// Apply R1 every this many steps, scaled by the interval.
    pub r1_interval: u64,
    pub path_samples: usize,
    /// Ablation: single-image discriminator on/off.
    pub image_disc: bool,
    /// Ablation: reuse the pair discriminator (frame repeated, dt = 0)
    /// as the image discriminator.
    pub video_disc_as_image: bool,
    /// Ablation: background network on/off.
    pub background: bool,
    /// Ablation: how the motion generator takes time.
    pub time_mode: TimeMode,
    /// Image-mode steps interleaved per video step (0 = pure video).
    pub joint_image_ratio: u32,
    pub dims: DimsConfig,
    pub camera: CameraConfig,
    pub render: RenderConfig,
    pub opt: OptConfig,
}

impl TrainConfig {
    pub fn desk_default() -> Self {
        TrainConfig {
            seed: 1,
            steps: 500,
            batch: 8,
            frames_per_clip: 16,
            lambda_r1: 0.5,
            lambda_path: 0.2,
            r1_interval: 4,
            path_samples: 16,
            image_disc: true,
            video_disc_as_image: false,
            background: true,
            time_mode: TimeMode::Multiply,
            joint_image_ratio: 0,
            dims: DimsConfig::desk(),
            camera: CameraConfig::default_face(),
            render: RenderConfig::desk(),
            opt: OptConfig::reference(),
        }
    }

    /// Small network and sample counts for smoke-scale training runs.
    pub fn smoke() -> Self {
        let mut cfg = Self::desk_default();
        cfg.dims.fg_depth = 2;
        cfg.dims.fg_hidden = 24;
        cfg.dims.feature_dim = 24;
        cfg.dims.bg_depth = 2;
        cfg.dims.bg_hidden = 12;
        cfg.render.fg_samples = 6;
        cfg.render.bg_samples = 2;
        cfg.camera.pitch_std = 0.05;
        cfg.camera.yaw_std = 0.05;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.lambda_r1 < 0.0 || self.lambda_path < 0.0 {
            return bad(format!(
                "lambda_r1 and lambda_path must be >= 0, got {} / {}",
                self.lambda_r1, self.lambda_path
            ));
        }
        if self.opt.lr <= 0.0 {
            return bad(format!("lr must be > 0, got {}", self.opt.lr));
        }
        for (name, b) in [("beta1", self.opt.beta1), ("beta2", self.opt.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if self.batch == 0 {
            return bad("batch must be >= 1".into());
        }
        if self.frames_per_clip < 2 {
            return bad("frames_per_clip must be >= 2".into());
        }
        if self.render.fg_samples < 2 {
            return bad("render.fg_samples must be >= 2".into());
        }
        if self.render.l_near >= self.render.l_far {
            return bad(format!(
                "need l_near < l_far, got {} >= {}",
                self.render.l_near, self.render.l_far
            ));
        }
        if self.r1_interval == 0 {
            return bad("r1_interval must be >= 1".into());
        }
        Ok(())
    }

    /// Canonical text form (fixed key order; parse-serialize stable).
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let kv = |s: &mut String, k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        kv(&mut s, "seed", self.seed.to_string());
        kv(&mut s, "steps", self.steps.to_string());
        kv(&mut s, "batch", self.batch.to_string());
        kv(&mut s, "frames_per_clip", self.frames_per_clip.to_string());
        kv(&mut s, "loss.lambda_r1", self.lambda_r1.to_string());
        kv(&mut s, "loss.lambda_path", self.lambda_path.to_string());
        kv(&mut s, "loss.r1_interval", self.r1_interval.to_string());
        kv(&mut s, "loss.path_samples", self.path_samples.to_string());
        kv(&mut s, "ablate.image_disc", self.image_disc.to_string());
        kv(
            &mut s,
            "ablate.video_disc_as_image",
            self.video_disc_as_image.to_string(),
        );
        kv(&mut s, "ablate.background", self.background.to_string());
        kv(&mut s, "ablate.time_mode", self.time_mode.name().to_string());
        kv(
            &mut s,
            "train.joint_image_ratio",
            self.joint_image_ratio.to_string(),
        );
        let d = &self.dims;
        kv(&mut s, "dims.z_dim", d.z_dim.to_string());
        kv(&mut s, "dims.m_dim", d.m_dim.to_string());
        kv(&mut s, "dims.w_dim", d.w_dim.to_string());
        kv(&mut s, "dims.n_dim", d.n_dim.to_string());
        kv(&mut s, "dims.motion_hidden", d.motion_hidden.to_string());
        kv(&mut s, "dims.fg_depth", d.fg_depth.to_string());
        kv(&mut s, "dims.fg_hidden", d.fg_hidden.to_string());
        kv(&mut s, "dims.bg_depth", d.bg_depth.to_string());
        kv(&mut s, "dims.bg_hidden", d.bg_hidden.to_string());
        kv(&mut s, "dims.feature_dim", d.feature_dim.to_string());
        kv(&mut s, "dims.pe_bands", d.pe_bands.to_string());
        kv(&mut s, "dims.view_pe_bands", d.view_pe_bands.to_string());
        kv(&mut s, "dims.up_channels", d.up_channels.to_string());
        kv(&mut s, "dims.leaky_slope", d.leaky_slope.to_string());
        let c = &self.camera;
        kv(&mut s, "camera.pitch_std", c.pitch_std.to_string());
        kv(&mut s, "camera.yaw_std", c.yaw_std.to_string());
        kv(&mut s, "camera.fov_deg", c.fov_deg.to_string());
        let r = &self.render;
        kv(&mut s, "render.resolution", r.resolution.to_string());
        kv(&mut s, "render.fg_samples", r.fg_samples.to_string());
        kv(&mut s, "render.bg_samples", r.bg_samples.to_string());
        kv(&mut s, "render.l_near", r.l_near.to_string());
        kv(&mut s, "render.l_far", r.l_far.to_string());
        kv(&mut s, "render.upsample", r.upsample.name().to_string());
        let o = &self.opt;
        kv(&mut s, "opt.lr", o.lr.to_string());
        kv(&mut s, "opt.beta1", o.beta1.to_string());
        kv(&mut s, "opt.beta2", o.beta2.to_string());
        kv(&mut s, "opt.eps", o.eps.to_string());
        kv(&mut s, "opt.mapping_lr_scale", o.mapping_lr_scale.to_string());
        kv(&mut s, "opt.motion_lr_scale", o.motion_lr_scale.to_string());
        s
    }

    /// Parse the flat key=value text. Starts from desk defaults; every
    /// key must be known.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::desk_default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got `{raw}`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.set(key, value).map_err(|e| {
                Error::Config(format!("line {}: {e}", lineno + 1))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Set a single `section.key` to a string value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| {
                Error::Config(format!("invalid value `{v}` for key `{key}`"))
            })
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "batch" => self.batch = num(key, value)?,
            "frames_per_clip" => self.frames_per_clip = num(key, value)?,
            "loss.lambda_r1" => self.lambda_r1 = num(key, value)?,
            "loss.lambda_path" => self.lambda_path = num(key, value)?,
            "loss.r1_interval" => self.r1_interval = num(key, value)?,
            "loss.path_samples" => self.path_samples = num(key, value)?,
            "ablate.image_disc" => self.image_disc = num(key, value)?,
            "ablate.video_disc_as_image" => self.video_disc_as_image = num(key, value)?,
            "ablate.background" => self.background = num(key, value)?,
            "ablate.time_mode" => self.time_mode = TimeMode::parse(value)?,
            "train.joint_image_ratio" => self.joint_image_ratio = num(key, value)?,
            "dims.z_dim" => self.dims.z_dim = num(key, value)?,
            "dims.m_dim" => self.dims.m_dim = num(key, value)?,
            "dims.w_dim" => self.dims.w_dim = num(key, value)?,
            "dims.n_dim" => self.dims.n_dim = num(key, value)?,
            "dims.motion_hidden" => self.dims.motion_hidden = num(key, value)?,
            "dims.fg_depth" => self.dims.fg_depth = num(key, value)?,
            "dims.fg_hidden" => self.dims.fg_hidden = num(key, value)?,
            "dims.bg_depth" => self.dims.bg_depth = num(key, value)?,
            "dims.bg_hidden" => self.dims.bg_hidden = num(key, value)?,
            "dims.feature_dim" => self.dims.feature_dim = num(key, value)?,
            "dims.pe_bands" => self.dims.pe_bands = num(key, value)?,
            "dims.view_pe_bands" => self.dims.view_pe_bands = num(key, value)?,
            "dims.up_channels" => self.dims.up_channels = num(key, value)?,
            "dims.leaky_slope" => self.dims.leaky_slope = num(key, value)?,
            "camera.pitch_std" => self.camera.pitch_std = num(key, value)?,
            "camera.yaw_std" => self.camera.yaw_std = num(key, value)?,
            "camera.fov_deg" => self.camera.fov_deg = num(key, value)?,
            "render.resolution" => self.render.resolution = num(key, value)?,
            "render.fg_samples" => self.render.fg_samples = num(key, value)?,
            "render.bg_samples" => self.render.bg_samples = num(key, value)?,
            "render.l_near" => self.render.l_near = num(key, value)?,
            "render.l_far" => self.render.l_far = num(key, value)?,
            "render.upsample" => self.render.upsample = UpsampleMode::parse(value)?,
            "opt.lr" => self.opt.lr = num(key, value)?,
            "opt.beta1" => self.opt.beta1 = num(key, value)?,
            "opt.beta2" => self.opt.beta2 = num(key, value)?,
            "opt.eps" => self.opt.eps = num(key, value)?,
            "opt.mapping_lr_scale" => self.opt.mapping_lr_scale = num(key, value)?,
            "opt.motion_lr_scale" => self.opt.motion_lr_scale = num(key, value)?,
            unknown => {
                return Err(Error::Config(format!("unknown key `{unknown}`")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_desk_default() {
        let cfg = TrainConfig::desk_default();
        let text = cfg.serialize();
        let parsed = TrainConfig::parse(&text).unwrap();
        assert_eq!(cfg, parsed);
        // Serialize is canonical: parse(serialize(x)).serialize() == serialize(x)
        assert_eq!(parsed.serialize(), text);
    }

    #[test]
    fn reference_values_present() {
        let cfg = TrainConfig::desk_default();
        assert_eq!(cfg.lambda_r1, 0.5);
        assert_eq!(cfg.lambda_path, 0.2);
        assert_eq!(cfg.opt.lr, 0.0025);
        assert_eq!(cfg.opt.beta1, 0.0);
        assert_eq!(cfg.opt.beta2, 0.99);
        assert_eq!(cfg.opt.eps, 1e-8);
        assert_eq!(cfg.path_samples, 16);
        assert_eq!(cfg.frames_per_clip, 16);
        assert_eq!(cfg.camera.pitch_std, 0.15);
        assert_eq!(cfg.camera.yaw_std, 0.3);
        assert_eq!(cfg.camera.fov_deg, 18.0);

        let reference = DimsConfig::reference();
        assert_eq!(reference.z_dim, 512);
        assert_eq!(reference.m_dim, 512);
        assert_eq!(reference.w_dim, 512);
        assert_eq!(reference.n_dim, 128);
        assert_eq!(reference.motion_hidden, 512);
        assert_eq!(reference.fg_depth, 8);
        assert_eq!(reference.fg_hidden, 128);
        assert_eq!(reference.bg_depth, 4);
        assert_eq!(reference.bg_hidden, 64);
        assert_eq!(reference.pe_bands, 10);
    }

    #[test]
    fn unknown_key_is_error() {
        let e = TrainConfig::parse("bogus.key=3\n").unwrap_err();
        assert!(matches!(e, Error::Config(_)), "{e}");
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(TrainConfig::parse("opt.lr=0\n").is_err());
        assert!(TrainConfig::parse("opt.beta2=1.0\n").is_err());
        assert!(TrainConfig::parse("loss.lambda_r1=-1\n").is_err());
        assert!(TrainConfig::parse("render.l_near=3.0\n").is_err());
        assert!(TrainConfig::parse("seed=notanumber\n").is_err());
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let cfg = TrainConfig::parse("# comment\n\nseed=99\n").unwrap();
        assert_eq!(cfg.seed, 99);
    }
}
