//! The training loop: alternating discriminator/generator updates of the
//! combined objective
//!
//!   L = L_adv(D_time, G) + L_adv(D_image, G) + λ₁·L_R1 + λ₂·L_path
//!
//! with lazy R1 (applied every `r1_interval` steps, scaled by the
//! interval so the expected objective is unchanged). One step samples a
//! batch of frame pairs — shared pose and latents within a pair — renders
//! fakes, updates both discriminators on real-vs-fake, then re-renders a
//! fresh batch and updates the generator. Everything stochastic draws
//! from one sequentially consumed rng, so a (seed, config) pair fully
//! determines the metric stream.

pub mod adam;
pub mod checkpoint;
pub mod loss;

pub use loss::{adv_loss_d, adv_loss_g, nerf_path_reg, r1_penalty, r1_penalty_from_scores};

use crate::config::TrainConfig;
use crate::data::{frame_time, sample_real_frame, sample_real_pair, Corpus};
use crate::disc::{
    apply_augment, draw_augment, frame_as_pair_input, pair_to_input, AugDraw, AugPolicy,
    Discriminator,
};
use crate::error::{Error, Result};
use crate::latents::sample_unit_sphere;
use crate::nn::{Binder, Param};
use crate::render::{sample_camera, CameraPose, Generator};
use crate::tensor::{Graph, Tensor};
use adam::Adam;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::time::Instant;

/// Accumulated gradients keyed by parameter name.
type GradAccum = BTreeMap<String, Vec<f64>>;

/// Per-step loss components. All terms carry their objective weight, so
/// `total` is exactly their sum; `wall_ms` is measurement, not state,
/// and is excluded from comparisons.
#[derive(Debug, Clone)]
pub struct StepMetrics {
    pub step: u64,
    pub l_d_time: f64,
    pub l_d_img: f64,
    pub l_g: f64,
    /// λ₁-weighted, interval-scaled R1 contribution (0 off-schedule).
    pub r1: f64,
    /// λ₂-weighted consistency-regularizer contribution.
    pub path_reg: f64,
    pub total: f64,
    pub wall_ms: f64,
}

impl StepMetrics {
    /// Full metrics record, one line per step.
    pub fn line(&self) -> String {
        format!(
            "step={} l_d_time={} l_d_img={} l_g={} r1={} path_reg={} wall_ms={:.1}",
            self.step, self.l_d_time, self.l_d_img, self.l_g, self.r1, self.path_reg, self.wall_ms
        )
    }

    /// Deterministic part of the record (everything but wall time).
    pub fn loss_line(&self) -> String {
        format!(
            "step={} l_d_time={} l_d_img={} l_g={} r1={} path_reg={}",
            self.step, self.l_d_time, self.l_d_img, self.l_g, self.r1, self.path_reg
        )
    }
}

/// All trainable networks.
pub struct Model {
    pub gen: Generator,
    pub d_time: Discriminator,
    /// Separate image discriminator; absent when the image term is off
    /// or routed through the pair discriminator.
    pub d_image: Option<Discriminator>,
}

impl Model {
    pub fn init(cfg: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x2545F4914F6CDD1D));
        let gen = Generator::init(&cfg.dims, cfg.time_mode, cfg.background, &mut rng);
        let d_time = Discriminator::init("d_time", 7, &mut rng);
        let d_image = (cfg.image_disc && !cfg.video_disc_as_image)
            .then(|| Discriminator::init("d_img", 3, &mut rng));
        Model {
            gen,
            d_time,
            d_image,
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.gen.params();
        p.extend(self.d_time.params());
        if let Some(d) = &self.d_image {
            p.extend(d.params());
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.gen.params_mut();
        p.extend(self.d_time.params_mut());
        if let Some(d) = &mut self.d_image {
            p.extend(d.params_mut());
        }
        p
    }
}

/// One sampled generation target: pair latents, pose and times.
struct PairSpec {
    pose: CameraPose,
    z: Vec<f64>,
    m: Vec<f64>,
    t1: f64,
    t2: f64,
}

impl PairSpec {
    fn dt(&self) -> f64 {
        self.t2 - self.t1
    }
}

/// A rendered fake pair, detached (channel-first frames).
struct FakePair {
    frame_a: Vec<f64>,
    frame_b: Vec<f64>,
    dt: f64,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: Model,
    pub adam: Adam,
    pub rng: ChaCha8Rng,
    pub step: u64,
}

/// [H·W, 3] pixel-major rgb tensor → [1, 3, H, W].
fn rgb_to_image(rgb: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    rgb.transpose()?.reshape(&[1, 3, h, w])
}

fn rgb_values_to_channel_first(values: &[f64]) -> Vec<f64> {
    let n = values.len() / 3;
    let mut out = vec![0.0; values.len()];
    for p in 0..n {
        for c in 0..3 {
            out[c * n + p] = values[p * 3 + c];
        }
    }
    out
}

fn mean_of(terms: &[Tensor]) -> Result<Tensor> {
    let sum = terms
        .iter()
        .skip(1)
        .try_fold(terms[0].clone(), |acc, t| acc.add(t))?;
    sum.scale(1.0 / terms.len() as f64)
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Model::init(&cfg);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Trainer {
            cfg,
            model,
            adam: Adam::new(),
            rng,
            step: 0,
        })
    }

    fn sample_pair_spec(&mut self, static_mode: bool) -> PairSpec {
        let pose = sample_camera(&self.cfg.camera, &mut self.rng);
        let z = sample_unit_sphere(self.cfg.dims.z_dim, &mut self.rng);
        let m = sample_unit_sphere(self.cfg.dims.m_dim, &mut self.rng);
        let f = self.cfg.frames_per_clip;
        let (t1, t2) = if static_mode {
            (0.0, 0.0)
        } else {
            let (i, j) = loop {
                let a = self.rng.gen_range(0..f);
                let b = self.rng.gen_range(0..f);
                if a != b {
                    break (a.min(b), a.max(b));
                }
            };
            (frame_time(i, f), frame_time(j, f))
        };
        PairSpec { pose, z, m, t1, t2 }
    }

    /// Render a fake pair without building a trainable graph.
    fn render_fake_pair(&mut self, spec: &PairSpec, static_mode: bool) -> Result<FakePair> {
        let g = Graph::new();
        let mut binder = Binder::frozen(&g);
        let bound = self.model.gen.bind(&mut binder)?;
        let fa = bound.render_frame(
            &spec.pose,
            spec.t1,
            &spec.z,
            &spec.m,
            &self.cfg.render,
            static_mode,
            Some(&mut self.rng),
        )?;
        let fb = bound.render_frame(
            &spec.pose,
            spec.t2,
            &spec.z,
            &spec.m,
            &self.cfg.render,
            static_mode,
            Some(&mut self.rng),
        )?;
        Ok(FakePair {
            frame_a: rgb_values_to_channel_first(&fa.rgb.values()),
            frame_b: rgb_values_to_channel_first(&fb.rgb.values()),
            dt: spec.dt(),
        })
    }

    fn apply_grads(&mut self, grads: &GradAccum, prefix_filter: impl Fn(&str) -> bool) {
        let opt = self.cfg.opt.clone();
        for p in self.model.params_mut() {
            if !prefix_filter(&p.name) {
                continue;
            }
            if let Some(g) = grads.get(&p.name) {
                self.adam.step_param(p, g, &opt);
            }
        }
    }

    /// One full alternating update in video mode. `static_mode` zeroes
    /// the motion vector and drops the pair term (image-mode training).
    fn step_inner(&mut self, corpus: &Corpus, static_mode: bool) -> Result<StepMetrics> {
        if corpus.clips == 0 {
            return Err(Error::Corpus("empty corpus".into()));
        }
        let started = Instant::now();
        let step = self.step;
        let cfg = self.cfg.clone();
        let b = cfg.batch;
        let res = cfg.render.out_resolution();
        let r1_due = !static_mode && step.is_multiple_of(cfg.r1_interval) && cfg.lambda_r1 > 0.0;
        let r1_due_img = step.is_multiple_of(cfg.r1_interval) && cfg.lambda_r1 > 0.0;
        let nan = |component: &'static str| move |e: Error| match e {
            Error::NonFinite { .. } => Error::NanLoss { component, step },
            other => other,
        };

        // ---- D phase ------------------------------------------------
        // Samples drawn in a fixed order: specs, fake renders, real
        // pairs, augmentation.
        let image_term = cfg.image_disc;
        let pair_term = !static_mode;

        let mut specs = Vec::with_capacity(b);
        for _ in 0..b {
            specs.push(self.sample_pair_spec(static_mode));
        }
        let mut fakes = Vec::with_capacity(b);
        for spec in &specs {
            fakes.push(self.render_fake_pair(spec, static_mode).map_err(nan("render"))?);
        }
        let mut reals = Vec::with_capacity(b);
        for _ in 0..b {
            if pair_term {
                reals.push(sample_real_pair(corpus, &mut self.rng)?);
            } else {
                let fa = sample_real_frame(corpus, &mut self.rng)?;
                let fb = sample_real_frame(corpus, &mut self.rng)?;
                reals.push(crate::disc::FramePair::new(fa, fb, corpus.h, corpus.w, 1.0)?);
            }
        }
        let aug = draw_augment(AugPolicy::none(), b, &mut self.rng);

        let (l_d_time, l_d_img, r1_raw, d_grads) =
            self.d_phase(&fakes, &reals, &aug, static_mode, r1_due, r1_due_img)?;
        self.apply_grads(&d_grads, |n| n.starts_with("d_time.") || n.starts_with("d_img."));

        // ---- G phase ------------------------------------------------
        let mut g_specs = Vec::with_capacity(b);
        for _ in 0..b {
            g_specs.push(self.sample_pair_spec(static_mode));
        }
        let g_aug = draw_augment(AugPolicy::none(), b, &mut self.rng);
        let mut path_rng = ChaCha8Rng::seed_from_u64(self.rng.gen());

        let mut g_grads = GradAccum::new();
        let mut l_g = 0.0;
        let mut path_raw = 0.0;
        for (bi, spec) in g_specs.iter().enumerate() {
            let g = Graph::new();
            let mut binder = Binder::new(&g);
            let bound_gen = self.model.gen.bind(&mut binder)?;
            let mut frozen = Binder::frozen(&g);
            let bound_dt = self.model.d_time.bind(&mut frozen)?;
            let bound_di = self
                .model
                .d_image
                .as_ref()
                .map(|d| d.bind(&mut frozen))
                .transpose()?;

            let fa = bound_gen
                .render_frame(
                    &spec.pose,
                    spec.t1,
                    &spec.z,
                    &spec.m,
                    &cfg.render,
                    static_mode,
                    Some(&mut self.rng),
                )
                .map_err(nan("render"))?;
            let fb = bound_gen
                .render_frame(
                    &spec.pose,
                    spec.t2,
                    &spec.z,
                    &spec.m,
                    &cfg.render,
                    static_mode,
                    Some(&mut self.rng),
                )
                .map_err(nan("render"))?;
            let img_a = rgb_to_image(&fa.rgb, res, res)?;
            let img_b = rgb_to_image(&fb.rgb, res, res)?;
            let sub_draw = AugDraw {
                flip: vec![g_aug.flip[bi]],
                shift: vec![g_aug.shift[bi]],
            };
            let img_a = apply_augment(&img_a, &sub_draw)?;
            let img_b = apply_augment(&img_b, &sub_draw)?;

            let mut terms: Vec<Tensor> = Vec::new();
            if pair_term {
                let x = pair_to_input(&img_a, &img_b, &[spec.dt()])?;
                terms.push(adv_loss_g(&bound_dt.score(&x)?)?);
            }
            if image_term {
                let score = |img: &Tensor| -> Result<Tensor> {
                    match (&bound_di, cfg.video_disc_as_image) {
                        (Some(di), _) => di.score(img),
                        (None, true) => bound_dt.score(&frame_as_pair_input(img)?),
                        (None, false) => unreachable!("image term without a scorer"),
                    }
                };
                let s = score(&img_a)?.add(&score(&img_b)?)?.scale(0.5)?;
                terms.push(adv_loss_g(&s)?);
            }
            let adv_part = mean_of(&terms)?.scale(1.0 / b as f64)?;
            l_g += adv_part.item();
            let mut pair_loss = adv_part;

            if bi == 0 && cfg.lambda_path > 0.0 {
                let reg = nerf_path_reg(
                    &bound_gen.upsampler,
                    &fa.features,
                    fa.low_res.0,
                    fa.low_res.1,
                    cfg.render.upsample,
                    cfg.path_samples,
                    &mut path_rng,
                )
                .map_err(nan("path_reg"))?;
                path_raw = reg.item();
                pair_loss = pair_loss.add(&reg.scale(cfg.lambda_path)?)?;
            }

            let loss = pair_loss.sum_all().map_err(nan("g_loss"))?;
            let leaf_refs: Vec<&Tensor> = binder.leaves.iter().map(|(_, t)| t).collect();
            let grads = loss.backward(&leaf_refs).map_err(nan("g_backward"))?;
            for (name, leaf) in &binder.leaves {
                let gvals = grads.get(leaf).unwrap();
                g_grads
                    .entry(name.clone())
                    .and_modify(|acc| {
                        for (a, v) in acc.iter_mut().zip(gvals) {
                            *a += v;
                        }
                    })
                    .or_insert_with(|| gvals.to_vec());
            }
        }
        self.apply_grads(&g_grads, |n| {
            !n.starts_with("d_time.") && !n.starts_with("d_img.")
        });

        self.step += 1;
        let r1_weighted = cfg.lambda_r1 * cfg.r1_interval as f64 * r1_raw;
        let path_weighted = cfg.lambda_path * path_raw;
        let metrics = StepMetrics {
            step,
            l_d_time,
            l_d_img,
            l_g,
            r1: r1_weighted,
            path_reg: path_weighted,
            total: l_d_time + l_d_img + l_g + r1_weighted + path_weighted,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        Ok(metrics)
    }

    /// Discriminator update. Returns (l_d_time, l_d_img, raw r1, grads).
    #[allow(clippy::too_many_arguments)]
    fn d_phase(
        &mut self,
        fakes: &[FakePair],
        reals: &[crate::disc::FramePair],
        aug: &AugDraw,
        static_mode: bool,
        r1_due: bool,
        r1_due_img: bool,
    ) -> Result<(f64, f64, f64, GradAccum)> {
        let cfg = &self.cfg;
        let b = cfg.batch;
        let res = cfg.render.out_resolution();
        let pair_term = !static_mode;
        let image_term = cfg.image_disc;
        let g = Graph::new();
        let mut binder = Binder::new(&g);
        let bound_dt = self.model.d_time.bind(&mut binder)?;
        let bound_di = self
            .model
            .d_image
            .as_ref()
            .map(|d| d.bind(&mut binder))
            .transpose()?;

        let stack = |items: Vec<Vec<f64>>| -> Vec<f64> { items.concat() };
        let real_a: Vec<Vec<f64>> = reals.iter().map(|p| p.frame_a.clone()).collect();
        let real_b: Vec<Vec<f64>> = reals.iter().map(|p| p.frame_b.clone()).collect();
        let real_dts: Vec<f64> = reals.iter().map(|p| p.dt).collect();
        let fake_a: Vec<Vec<f64>> = fakes.iter().map(|p| p.frame_a.clone()).collect();
        let fake_b: Vec<Vec<f64>> = fakes.iter().map(|p| p.frame_b.clone()).collect();
        let fake_dts: Vec<f64> = fakes.iter().map(|p| p.dt).collect();

        let shape = [b, 3, res, res];
        // Real pixels are leaves so R1 can differentiate against them.
        let real_a = g.leaf(&shape, &stack(real_a), true)?;
        let real_b = g.leaf(&shape, &stack(real_b), true)?;
        let fake_a = g.constant(&shape, &stack(fake_a))?;
        let fake_b = g.constant(&shape, &stack(fake_b))?;

        let real_a_aug = apply_augment(&real_a, aug)?;
        let real_b_aug = apply_augment(&real_b, aug)?;
        let fake_a_aug = apply_augment(&fake_a, aug)?;
        let fake_b_aug = apply_augment(&fake_b, aug)?;

        let mut loss_terms: Vec<Tensor> = Vec::new();
        let mut l_d_time = 0.0;
        let mut l_d_img = 0.0;
        let mut r1_raw = 0.0;

        let mut real_pair_scores = None;
        if pair_term {
            let real_in = pair_to_input(&real_a_aug, &real_b_aug, &real_dts)?;
            let fake_in = pair_to_input(&fake_a_aug, &fake_b_aug, &fake_dts)?;
            let s_real = bound_dt.score(&real_in)?;
            let s_fake = bound_dt.score(&fake_in)?;
            let l = adv_loss_d(&s_real, &s_fake)?;
            l_d_time = l.item();
            loss_terms.push(l);
            real_pair_scores = Some(s_real);
        }

        let mut real_img_scores = None;
        if image_term {
            let score = |img: &Tensor| -> Result<Tensor> {
                match (&bound_di, cfg.video_disc_as_image) {
                    (Some(di), _) => di.score(img),
                    (None, true) => bound_dt.score(&frame_as_pair_input(img)?),
                    (None, false) => unreachable!("image term without a scorer"),
                }
            };
            let s_real_a = score(&real_a_aug)?;
            let s_real_b = score(&real_b_aug)?;
            let s_fake_a = score(&fake_a_aug)?;
            let s_fake_b = score(&fake_b_aug)?;
            let s_real = Tensor::concat(&[&s_real_a, &s_real_b], 0)?;
            let s_fake = Tensor::concat(&[&s_fake_a, &s_fake_b], 0)?;
            let l = adv_loss_d(&s_real, &s_fake)?;
            l_d_img = l.item();
            loss_terms.push(l);
            real_img_scores = Some((s_real_a, s_real_b));
        }

        if r1_due || r1_due_img {
            let mut r1_terms: Vec<Tensor> = Vec::new();
            if r1_due {
                if let Some(s) = &real_pair_scores {
                    let sum = s.sum_all()?;
                    let ga = sum.backward_tensors(&[&real_a, &real_b])?;
                    let sq = ga[0]
                        .mul(&ga[0])?
                        .sum_all()?
                        .add(&ga[1].mul(&ga[1])?.sum_all()?)?;
                    r1_terms.push(sq.scale(0.5 / b as f64)?);
                }
            }
            if r1_due_img && image_term {
                if let Some((sa, sb)) = &real_img_scores {
                    let sum = sa.sum_all()?.add(&sb.sum_all()?)?;
                    let ga = sum.backward_tensors(&[&real_a, &real_b])?;
                    let sq = ga[0]
                        .mul(&ga[0])?
                        .sum_all()?
                        .add(&ga[1].mul(&ga[1])?.sum_all()?)?;
                    r1_terms.push(sq.scale(0.5 / (2.0 * b as f64))?);
                }
            }
            if !r1_terms.is_empty() {
                let r1 = r1_terms
                    .iter()
                    .skip(1)
                    .try_fold(r1_terms[0].clone(), |acc, t| acc.add(t))?;
                r1_raw = r1.item();
                let weight = cfg.lambda_r1 * cfg.r1_interval as f64;
                loss_terms.push(r1.scale(weight)?);
            }
        }

        let step = self.step;
        let loss = loss_terms
            .iter()
            .skip(1)
            .try_fold(loss_terms[0].clone(), |acc, t| acc.add(t))?
            .sum_all()
            .map_err(|e| match e {
                Error::NonFinite { .. } => Error::NanLoss {
                    component: "d_loss",
                    step,
                },
                other => other,
            })?;
        let leaf_refs: Vec<&Tensor> = binder.leaves.iter().map(|(_, t)| t).collect();
        let grads = loss.backward(&leaf_refs).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NanLoss {
                component: "d_backward",
                step,
            },
            other => other,
        })?;
        let mut out = BTreeMap::new();
        for (name, leaf) in &binder.leaves {
            out.insert(name.clone(), grads.get(leaf).unwrap().to_vec());
        }
        Ok((l_d_time, l_d_img, r1_raw, out))
    }

    /// One video-mode training step, plus any configured joint image
    /// steps.
    pub fn train_step(&mut self, corpus: &Corpus, image_corpus: Option<&Corpus>) -> Result<StepMetrics> {
        let metrics = self.step_inner(corpus, false)?;
        for _ in 0..self.cfg.joint_image_ratio {
            let ic = image_corpus.unwrap_or(corpus);
            self.step_inner(ic, true)?;
        }
        Ok(metrics)
    }

    /// One image-mode step: motion vector forced to zero, image
    /// discriminator only.
    pub fn image_step(&mut self, corpus: &Corpus) -> Result<StepMetrics> {
        self.step_inner(corpus, true)
    }

    /// Static pretraining: image-mode steps only.
    pub fn pretrain_static(
        &mut self,
        corpus: &Corpus,
        steps: u64,
        mut on_step: impl FnMut(&StepMetrics),
    ) -> Result<()> {
        for _ in 0..steps {
            let m = self.image_step(corpus)?;
            on_step(&m);
        }
        Ok(())
    }

    /// Fraction of correctly classified pairs (real scored > 0, fake
    /// scored < 0) over `n` of each, drawn from `eval_rng`.
    pub fn d_time_accuracy(
        &mut self,
        corpus: &Corpus,
        n: usize,
        eval_rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let res = self.cfg.render.out_resolution();
        let mut correct = 0usize;
        for _ in 0..n {
            let real = sample_real_pair(corpus, eval_rng)?;
            let g = Graph::new();
            let bound = self.model.d_time.bind(&mut Binder::frozen(&g))?;
            let a = g.constant(&[1, 3, res, res], &real.frame_a)?;
            let bfr = g.constant(&[1, 3, res, res], &real.frame_b)?;
            let x = pair_to_input(&a, &bfr, &[real.dt])?;
            if bound.score(&x)?.item() > 0.0 {
                correct += 1;
            }
        }
        // Fake pair sampling mirrors the training-side draws but uses
        // the caller's rng.
        for _ in 0..n {
            let spec = {
                let pose = sample_camera(&self.cfg.camera, eval_rng);
                let z = sample_unit_sphere(self.cfg.dims.z_dim, eval_rng);
                let m = sample_unit_sphere(self.cfg.dims.m_dim, eval_rng);
                let f = self.cfg.frames_per_clip;
                let (i, j) = loop {
                    let a = eval_rng.gen_range(0..f);
                    let b = eval_rng.gen_range(0..f);
                    if a != b {
                        break (a.min(b), a.max(b));
                    }
                };
                PairSpec {
                    pose,
                    z,
                    m,
                    t1: frame_time(i, f),
                    t2: frame_time(j, f),
                }
            };
            let g = Graph::new();
            let bound_gen = self.model.gen.bind(&mut Binder::frozen(&g))?;
            let fa = bound_gen.render_frame(
                &spec.pose,
                spec.t1,
                &spec.z,
                &spec.m,
                &self.cfg.render,
                false,
                None,
            )?;
            let fb = bound_gen.render_frame(
                &spec.pose,
                spec.t2,
                &spec.z,
                &spec.m,
                &self.cfg.render,
                false,
                None,
            )?;
            let bound = self.model.d_time.bind(&mut Binder::frozen(&g))?;
            let a = rgb_to_image(&fa.rgb, res, res)?;
            let bfr = rgb_to_image(&fb.rgb, res, res)?;
            let x = pair_to_input(&a, &bfr, &[spec.dt()])?;
            if bound.score(&x)?.item() < 0.0 {
                correct += 1;
            }
        }
        Ok(correct as f64 / (2 * n) as f64)
    }

    /// Mean and std over `n` generated frames of the frame-mean
    /// brightness (each frame: fresh latents, pose, and time).
    pub fn generated_brightness_stats(
        &self,
        n: usize,
        eval_rng: &mut ChaCha8Rng,
    ) -> Result<(f64, f64)> {
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let pose = sample_camera(&self.cfg.camera, eval_rng);
            let z = sample_unit_sphere(self.cfg.dims.z_dim, eval_rng);
            let m = sample_unit_sphere(self.cfg.dims.m_dim, eval_rng);
            let f = self.cfg.frames_per_clip;
            let t = frame_time(eval_rng.gen_range(0..f), f);
            let g = Graph::new();
            let bound = self.model.gen.bind(&mut Binder::frozen(&g))?;
            let fr = bound.render_frame(&pose, t, &z, &m, &self.cfg.render, false, None)?;
            let vals = fr.rgb.values();
            let b = vals.iter().sum::<f64>() / vals.len() as f64;
            sum += b;
            sum2 += b * b;
        }
        let mean = sum / n as f64;
        let std = (sum2 / n as f64 - mean * mean).max(0.0).sqrt();
        Ok((mean, std))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_corpus;
    use tempfile::tempdir;

    fn tiny_cfg() -> TrainConfig {
        let mut cfg = TrainConfig::smoke();
        cfg.batch = 2;
        cfg.render.resolution = 8;
        cfg.render.fg_samples = 3;
        cfg.render.bg_samples = 1;
        cfg.dims.z_dim = 6;
        cfg.dims.m_dim = 6;
        cfg.dims.w_dim = 6;
        cfg.dims.n_dim = 4;
        cfg.dims.motion_hidden = 6;
        cfg.dims.fg_hidden = 6;
        cfg.dims.feature_dim = 6;
        cfg.dims.bg_hidden = 4;
        cfg.dims.pe_bands = 2;
        cfg.dims.view_pe_bands = 2;
        cfg.dims.up_channels = 4;
        cfg
    }

    /// With discriminators frozen and both regularizers off, one small
    /// gradient step on the generator strictly decreases L_G on the
    /// same minibatch.
    #[test]
    fn g_step_descends_on_fixed_minibatch() {
        for seed in [3u64, 17, 99] {
            let mut cfg = tiny_cfg();
            cfg.seed = seed;
            cfg.lambda_r1 = 0.0;
            cfg.lambda_path = 0.0;
            let mut trainer = Trainer::new(cfg.clone()).unwrap();
            let spec = trainer.sample_pair_spec(false);

            let eval_loss = |model: &Model| -> f64 {
                let g = Graph::new();
                let bound_gen = model.gen.bind(&mut Binder::frozen(&g)).unwrap();
                let bound_dt = model.d_time.bind(&mut Binder::frozen(&g)).unwrap();
                let res = cfg.render.out_resolution();
                let fa = bound_gen
                    .render_frame(&spec.pose, spec.t1, &spec.z, &spec.m, &cfg.render, false, None)
                    .unwrap();
                let fb = bound_gen
                    .render_frame(&spec.pose, spec.t2, &spec.z, &spec.m, &cfg.render, false, None)
                    .unwrap();
                let a = rgb_to_image(&fa.rgb, res, res).unwrap();
                let b = rgb_to_image(&fb.rgb, res, res).unwrap();
                let x = pair_to_input(&a, &b, &[spec.dt()]).unwrap();
                adv_loss_g(&bound_dt.score(&x).unwrap()).unwrap().item()
            };

            let before = eval_loss(&trainer.model);

            // One plain gradient step on all generator parameters.
            let g = Graph::new();
            let mut binder = Binder::new(&g);
            let bound_gen = trainer.model.gen.bind(&mut binder).unwrap();
            let bound_dt = trainer.model.d_time.bind(&mut Binder::frozen(&g)).unwrap();
            let res = cfg.render.out_resolution();
            let fa = bound_gen
                .render_frame(&spec.pose, spec.t1, &spec.z, &spec.m, &cfg.render, false, None)
                .unwrap();
            let fb = bound_gen
                .render_frame(&spec.pose, spec.t2, &spec.z, &spec.m, &cfg.render, false, None)
                .unwrap();
            let a = rgb_to_image(&fa.rgb, res, res).unwrap();
            let b = rgb_to_image(&fb.rgb, res, res).unwrap();
            let x = pair_to_input(&a, &b, &[spec.dt()]).unwrap();
            let loss = adv_loss_g(&bound_dt.score(&x).unwrap()).unwrap();
            let leaf_refs: Vec<&Tensor> = binder.leaves.iter().map(|(_, t)| t).collect();
            let grads = loss.backward(&leaf_refs).unwrap();
            let by_name: BTreeMap<&str, &[f64]> = binder
                .leaves
                .iter()
                .map(|(n, t)| (n.as_str(), grads.get(t).unwrap()))
                .collect();
            let lr = 1e-3;
            for p in trainer.model.gen.params_mut() {
                let g = by_name[p.name.as_str()];
                for (v, gi) in p.values.iter_mut().zip(g) {
                    *v -= lr * gi;
                }
            }

            let after = eval_loss(&trainer.model);
            assert!(after < before, "seed {seed}: {before} -> {after}");
        }
    }

    /// Static pretraining runs, its checkpoint round-trips all weights,
    /// and video training continues from it.
    #[test]
    fn static_pretrain_checkpoint_roundtrip() {
        let dir = tempdir().unwrap();
        let corpus = generate_corpus(
            &dir.path().join("corpus"),
            crate::data::CorpusKind::Blink,
            4,
            8,
            8,
            8,
            5,
        )
        .unwrap();
        let mut cfg = tiny_cfg();
        cfg.seed = 7;
        let mut trainer = Trainer::new(cfg).unwrap();
        let mut seen = 0;
        trainer
            .pretrain_static(&corpus, 2, |m| {
                assert_eq!(m.l_d_time, 0.0, "no pair term in static mode");
                seen += 1;
            })
            .unwrap();
        assert_eq!(seen, 2);

        let path = dir.path().join("static.ckpt");
        crate::train::checkpoint::save_trainer(&path, &trainer).unwrap();
        let mut resumed = crate::train::checkpoint::load_trainer(&path).unwrap();
        for (a, b) in trainer
            .model
            .params()
            .iter()
            .zip(resumed.model.params().iter())
        {
            assert_eq!(a.name, b.name);
            assert_eq!(a.values, b.values, "weights preserved for {}", a.name);
        }
        // Video training continues from the static checkpoint.
        let m = resumed.train_step(&corpus, None).unwrap();
        assert!(m.l_d_time != 0.0);
    }

    /// Joint mode with a nonzero ratio interleaves image steps (consumes
    /// more rng), so its stream diverges from pure video; this is the
    /// counterpart of ratio 0 being exactly pure video training.
    #[test]
    fn joint_ratio_changes_stream_only_when_nonzero() {
        let dir = tempdir().unwrap();
        let corpus = generate_corpus(
            &dir.path().join("corpus"),
            crate::data::CorpusKind::Blink,
            4,
            8,
            8,
            8,
            5,
        )
        .unwrap();
        let mut cfg = tiny_cfg();
        cfg.seed = 7;
        cfg.joint_image_ratio = 0;
        let mut pure = Trainer::new(cfg.clone()).unwrap();
        let pure_lines: Vec<String> = (0..2)
            .map(|_| pure.train_step(&corpus, None).unwrap().loss_line())
            .collect();

        // Ratio 0 twice: identical (degenerate ratio is pure video).
        let mut again = Trainer::new(cfg.clone()).unwrap();
        let again_lines: Vec<String> = (0..2)
            .map(|_| again.train_step(&corpus, None).unwrap().loss_line())
            .collect();
        assert_eq!(pure_lines, again_lines);

        cfg.joint_image_ratio = 1;
        let mut joint = Trainer::new(cfg).unwrap();
        let joint_lines: Vec<String> = (0..2)
            .map(|_| joint.train_step(&corpus, None).unwrap().loss_line())
            .collect();
        assert_eq!(pure_lines[0], joint_lines[0], "first step identical");
        assert_ne!(pure_lines[1], joint_lines[1], "image step advanced the stream");
    }
}
