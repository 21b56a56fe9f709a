//! Procedural video corpora and real-pair sampling.
//!
//! Three clip generators stand in for real datasets: `blink` (solid
//! color, brightness oscillating sinusoidally), `bounce` (a disc on a
//! reflecting linear trajectory), and `orbit` (a lambert-shaded sphere
//! viewed from an orbiting camera — the only kind with genuine 3D view
//! structure). Clips are stored as numbered PPM frames under a
//! plain-text manifest; everything is byte-deterministic per seed.

use crate::disc::FramePair;
use crate::error::{Error, Result};
use crate::render::{ppm_bytes, rays_for_camera, read_ppm, CameraPose, FrameImage};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::path::{Path, PathBuf};

/// Clip generator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    Blink,
    Bounce,
    Orbit,
}

impl CorpusKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "blink" => Ok(CorpusKind::Blink),
            "bounce" => Ok(CorpusKind::Bounce),
            "orbit" => Ok(CorpusKind::Orbit),
            other => Err(Error::UnknownMode {
                what: "corpus kind",
                value: other.to_string(),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CorpusKind::Blink => "blink",
            CorpusKind::Bounce => "bounce",
            CorpusKind::Orbit => "orbit",
        }
    }
}

impl fmt::Display for CorpusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One clip in memory: F frames of H×W×3 in [0,1].
#[derive(Debug, Clone)]
pub struct VideoClip {
    pub frames: Vec<FrameImage>,
    /// Generator parameters, recorded as key=value metadata.
    pub metadata: Vec<(String, String)>,
}

/// Frame index → time in [0, 1].
pub fn frame_time(index: usize, frames: usize) -> f64 {
    index as f64 / (frames - 1) as f64
}

fn gen_blink(rng: &mut ChaCha8Rng, frames: usize, h: usize, w: usize) -> VideoClip {
    let base = rng.gen_range(0.35..0.6);
    let amplitude = rng.gen_range(0.12..0.25);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    // Zero-sum tint keeps the channel mean exactly on the sinusoid.
    let t0 = rng.gen_range(-0.08..0.08);
    let t1 = rng.gen_range(-0.08..0.08);
    let tint = [t0, t1, -(t0 + t1)];
    let mut clip_frames = Vec::with_capacity(frames);
    for i in 0..frames {
        let t = frame_time(i, frames);
        let s = base + amplitude * (std::f64::consts::TAU * t + phase).sin();
        let mut rgb = Vec::with_capacity(h * w * 3);
        for _ in 0..h * w {
            for t in tint {
                rgb.push((s + t).clamp(0.0, 1.0));
            }
        }
        clip_frames.push(FrameImage { h, w, rgb });
    }
    VideoClip {
        frames: clip_frames,
        metadata: vec![
            ("base".into(), base.to_string()),
            ("amplitude".into(), amplitude.to_string()),
            ("phase".into(), phase.to_string()),
            ("tint_r".into(), tint[0].to_string()),
            ("tint_g".into(), tint[1].to_string()),
            ("tint_b".into(), tint[2].to_string()),
        ],
    }
}

/// Reflect a scalar trajectory into [lo, hi] (mirror folding), the exact
/// continuous reflection law.
pub fn reflect_into(x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    let period = 2.0 * span;
    let mut y = (x - lo).rem_euclid(period);
    if y > span {
        y = period - y;
    }
    lo + y
}

fn gen_bounce(rng: &mut ChaCha8Rng, frames: usize, h: usize, w: usize) -> VideoClip {
    let radius = rng.gen_range(0.12..0.2);
    let x0 = rng.gen_range(radius..1.0 - radius);
    let y0 = rng.gen_range(radius..1.0 - radius);
    let vx = rng.gen_range(0.5..1.4) * if rng.gen_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
    let vy = rng.gen_range(0.5..1.4) * if rng.gen_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
    let disc: [f64; 3] = [
        rng.gen_range(0.5..1.0),
        rng.gen_range(0.2..0.8),
        rng.gen_range(0.2..0.8),
    ];
    let bg: [f64; 3] = [
        rng.gen_range(0.0..0.25),
        rng.gen_range(0.0..0.25),
        rng.gen_range(0.0..0.25),
    ];
    let mut clip_frames = Vec::with_capacity(frames);
    for i in 0..frames {
        let t = frame_time(i, frames);
        let cx = reflect_into(x0 + vx * t, radius, 1.0 - radius);
        let cy = reflect_into(y0 + vy * t, radius, 1.0 - radius);
        let mut rgb = Vec::with_capacity(h * w * 3);
        for py in 0..h {
            for px in 0..w {
                let ux = (px as f64 + 0.5) / w as f64;
                let uy = (py as f64 + 0.5) / h as f64;
                let inside = (ux - cx) * (ux - cx) + (uy - cy) * (uy - cy) <= radius * radius;
                let color = if inside { disc } else { bg };
                rgb.extend_from_slice(&color);
            }
        }
        clip_frames.push(FrameImage { h, w, rgb });
    }
    VideoClip {
        frames: clip_frames,
        metadata: vec![
            ("radius".into(), radius.to_string()),
            ("x0".into(), x0.to_string()),
            ("y0".into(), y0.to_string()),
            ("vx".into(), vx.to_string()),
            ("vy".into(), vy.to_string()),
        ],
    }
}

fn gen_orbit(rng: &mut ChaCha8Rng, frames: usize, h: usize, w: usize) -> VideoClip {
    let sphere_r = rng.gen_range(0.25..0.4);
    let yaw0 = rng.gen_range(-0.5..0.5);
    let yaw_sweep = rng.gen_range(0.6..1.4);
    let pitch = rng.gen_range(-0.15..0.15);
    let albedo: [f64; 3] = [
        rng.gen_range(0.4..1.0),
        rng.gen_range(0.4..1.0),
        rng.gen_range(0.4..1.0),
    ];
    let bg: [f64; 3] = [0.05, 0.06, 0.1];
    let light = {
        let l = [0.5f64, 0.8, 0.3];
        let n = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
        [l[0] / n, l[1] / n, l[2] / n]
    };
    let ambient = 0.15;

    let mut clip_frames = Vec::with_capacity(frames);
    let mut path = Vec::with_capacity(frames);
    for i in 0..frames {
        let t = frame_time(i, frames);
        let yaw = yaw0 + yaw_sweep * t;
        path.push(format!("{yaw}:{pitch}"));
        let pose = CameraPose::from_angles(yaw, pitch, 30.0);
        let rays = rays_for_camera(&pose, h, w, 0.1, 3.0).expect("valid bounds");
        let mut rgb = Vec::with_capacity(h * w * 3);
        for d in &rays.dirs {
            // Ray-sphere intersection, sphere at origin.
            let o = rays.origin;
            let b = o[0] * d[0] + o[1] * d[1] + o[2] * d[2];
            let c = (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) - sphere_r * sphere_r;
            let disc_val = b * b - c;
            if disc_val > 0.0 {
                let l = -b - disc_val.sqrt();
                if l > 0.0 {
                    let p = [o[0] + l * d[0], o[1] + l * d[1], o[2] + l * d[2]];
                    let n = [p[0] / sphere_r, p[1] / sphere_r, p[2] / sphere_r];
                    let lambert = (n[0] * light[0] + n[1] * light[1] + n[2] * light[2]).max(0.0);
                    for a in albedo {
                        rgb.push((a * (ambient + (1.0 - ambient) * lambert)).min(1.0));
                    }
                    continue;
                }
            }
            rgb.extend_from_slice(&bg);
        }
        clip_frames.push(FrameImage { h, w, rgb });
    }
    VideoClip {
        frames: clip_frames,
        metadata: vec![
            ("sphere_r".into(), sphere_r.to_string()),
            ("camera_path".into(), path.join(",")),
        ],
    }
}

/// A corpus directory with a validated manifest.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub kind: CorpusKind,
    pub clips: usize,
    pub frames: usize,
    pub h: usize,
    pub w: usize,
    pub seed: u64,
}

impl Corpus {
    pub fn clip_dir(&self, clip: usize) -> PathBuf {
        self.root.join(format!("clip_{clip:05}"))
    }

    pub fn frame_path(&self, clip: usize, frame: usize) -> PathBuf {
        self.clip_dir(clip).join(format!("frame_{frame:02}.ppm"))
    }

    pub fn load_frame(&self, clip: usize, frame: usize) -> Result<FrameImage> {
        read_ppm(&self.frame_path(clip, frame))
    }
}

fn generate_clip(kind: CorpusKind, clip_seed: u64, frames: usize, h: usize, w: usize) -> VideoClip {
    let mut rng = ChaCha8Rng::seed_from_u64(clip_seed);
    match kind {
        CorpusKind::Blink => gen_blink(&mut rng, frames, h, w),
        CorpusKind::Bounce => gen_bounce(&mut rng, frames, h, w),
        CorpusKind::Orbit => gen_orbit(&mut rng, frames, h, w),
    }
}

/// Generate a corpus on disk. Deterministic per seed: regenerating with
/// the same arguments produces byte-identical files.
pub fn generate_corpus(
    root: &Path,
    kind: CorpusKind,
    n_clips: usize,
    frames: usize,
    h: usize,
    w: usize,
    seed: u64,
) -> Result<Corpus> {
    if n_clips == 0 {
        return Err(Error::Corpus("corpus needs at least one clip".into()));
    }
    if frames < 2 {
        return Err(Error::Corpus("clips need at least two frames".into()));
    }
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

    let mut manifest = String::new();
    manifest.push_str(&format!("kind={kind}\n"));
    manifest.push_str(&format!("clips={n_clips}\n"));
    manifest.push_str(&format!("frames={frames}\n"));
    manifest.push_str(&format!("height={h}\n"));
    manifest.push_str(&format!("width={w}\n"));
    manifest.push_str(&format!("seed={seed}\n"));

    for ci in 0..n_clips {
        let clip_seed = seed
            .wrapping_mul(0x9E3779B97F4A7C15)
            .wrapping_add(ci as u64 + 1);
        let clip = generate_clip(kind, clip_seed, frames, h, w);
        let dir = root.join(format!("clip_{ci:05}"));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (fi, frame) in clip.frames.iter().enumerate() {
            let path = dir.join(format!("frame_{fi:02}.ppm"));
            std::fs::write(&path, ppm_bytes(frame)).map_err(|e| Error::io(&path, e))?;
        }
        let meta: String = clip
            .metadata
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        let mpath = dir.join("meta.txt");
        std::fs::write(&mpath, meta).map_err(|e| Error::io(&mpath, e))?;
    }
    let mpath = root.join("manifest.txt");
    std::fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
    open_corpus(root)
}

/// Open and validate an existing corpus directory.
pub fn open_corpus(root: &Path) -> Result<Corpus> {
    let mpath = root.join("manifest.txt");
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let mut kind = None;
    let mut clips = None;
    let mut frames = None;
    let mut height = None;
    let mut width = None;
    let mut seed = None;
    for line in text.lines() {
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        match k {
            "kind" => kind = Some(CorpusKind::parse(v)?),
            "clips" => clips = v.parse().ok(),
            "frames" => frames = v.parse().ok(),
            "height" => height = v.parse().ok(),
            "width" => width = v.parse().ok(),
            "seed" => seed = v.parse().ok(),
            _ => {}
        }
    }
    let corpus = Corpus {
        root: root.to_path_buf(),
        kind: kind.ok_or_else(|| Error::Corpus("manifest missing kind".into()))?,
        clips: clips.ok_or_else(|| Error::Corpus("manifest missing clips".into()))?,
        frames: frames.ok_or_else(|| Error::Corpus("manifest missing frames".into()))?,
        h: height.ok_or_else(|| Error::Corpus("manifest missing height".into()))?,
        w: width.ok_or_else(|| Error::Corpus("manifest missing width".into()))?,
        seed: seed.ok_or_else(|| Error::Corpus("manifest missing seed".into()))?,
    };
    if corpus.clips == 0 {
        return Err(Error::Corpus("manifest declares zero clips".into()));
    }
    // Spot-validate on-disk contents against the manifest.
    for ci in [0, corpus.clips - 1] {
        let first = corpus.load_frame(ci, 0)?;
        let last = corpus.load_frame(ci, corpus.frames - 1)?;
        if first.h != corpus.h || first.w != corpus.w || last.h != corpus.h {
            return Err(Error::Corpus(format!(
                "clip {ci} frame size {}x{} disagrees with manifest {}x{}",
                first.h, first.w, corpus.h, corpus.w
            )));
        }
    }
    Ok(corpus)
}

/// Interleave an RGB frame (h·w·3, pixel-major) into channel-first
/// [3·h·w] discriminator layout.
pub fn to_channel_first(img: &FrameImage) -> Vec<f64> {
    let hw = img.h * img.w;
    let mut out = vec![0.0; 3 * hw];
    for p in 0..hw {
        for c in 0..3 {
            out[c * hw + p] = img.rgb[p * 3 + c];
        }
    }
    out
}

/// Sample a real frame pair: uniform clip, two distinct frame indices
/// i < j uniform over unordered pairs, dt = (j−i)/(F−1).
pub fn sample_real_pair(corpus: &Corpus, rng: &mut ChaCha8Rng) -> Result<FramePair> {
    if corpus.clips == 0 {
        return Err(Error::Corpus("empty corpus".into()));
    }
    let clip = rng.gen_range(0..corpus.clips);
    let f = corpus.frames;
    let (i, j) = loop {
        let a = rng.gen_range(0..f);
        let b = rng.gen_range(0..f);
        if a != b {
            break (a.min(b), a.max(b));
        }
    };
    let frame_a = corpus.load_frame(clip, i)?;
    let frame_b = corpus.load_frame(clip, j)?;
    let dt = (j - i) as f64 / (f - 1) as f64;
    FramePair::new(
        to_channel_first(&frame_a),
        to_channel_first(&frame_b),
        corpus.h,
        corpus.w,
        dt,
    )
}

/// Sample one real frame at a uniform clip/index (image-mode training).
pub fn sample_real_frame(corpus: &Corpus, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let clip = rng.gen_range(0..corpus.clips);
    let frame = rng.gen_range(0..corpus.frames);
    Ok(to_channel_first(&corpus.load_frame(clip, frame)?))
}

/// Exact streaming statistics over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    /// Per-channel pixel mean.
    pub channel_mean: [f64; 3],
    /// Per-channel pixel standard deviation.
    pub channel_std: [f64; 3],
    /// Mean squared difference between consecutive frames.
    pub temporal_energy: f64,
    /// Mean over frames of the frame-mean brightness.
    pub brightness_mean: f64,
    /// Standard deviation over frames of the frame-mean brightness.
    pub brightness_std: f64,
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats> {
    let mut sum = [0.0f64; 3];
    let mut sum2 = [0.0f64; 3];
    let mut count = 0usize;
    let mut tsum = 0.0f64;
    let mut tcount = 0usize;
    let mut bsum = 0.0f64;
    let mut bsum2 = 0.0f64;
    let mut bcount = 0usize;

    // Fixed clip/frame order keeps the accumulation independent of how
    // callers iterate.
    for ci in 0..corpus.clips {
        let mut prev: Option<FrameImage> = None;
        for fi in 0..corpus.frames {
            let img = corpus.load_frame(ci, fi)?;
            for px in img.rgb.chunks(3) {
                for c in 0..3 {
                    sum[c] += px[c];
                    sum2[c] += px[c] * px[c];
                }
            }
            count += img.h * img.w;
            let b = img.mean_brightness();
            bsum += b;
            bsum2 += b * b;
            bcount += 1;
            if let Some(p) = prev {
                let d: f64 = p
                    .rgb
                    .iter()
                    .zip(&img.rgb)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                tsum += d / img.rgb.len() as f64;
                tcount += 1;
            }
            prev = Some(img);
        }
    }
    let n = count as f64;
    let mut channel_mean = [0.0; 3];
    let mut channel_std = [0.0; 3];
    for c in 0..3 {
        channel_mean[c] = sum[c] / n;
        channel_std[c] = (sum2[c] / n - channel_mean[c] * channel_mean[c])
            .max(0.0)
            .sqrt();
    }
    let bm = bsum / bcount as f64;
    Ok(CorpusStats {
        channel_mean,
        channel_std,
        temporal_energy: if tcount > 0 { tsum / tcount as f64 } else { 0.0 },
        brightness_mean: bm,
        brightness_std: (bsum2 / bcount as f64 - bm * bm).max(0.0).sqrt(),
    })
}
