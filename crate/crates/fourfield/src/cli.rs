//! Operator surface: corpus generation, training, rendering sweeps, and
//! the verification battery.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use crate::config::TrainConfig;
use crate::data::{generate_corpus, open_corpus, CorpusKind};
use crate::error::{Error, Result};
use crate::latents::sample_unit_sphere;
use crate::nn::Binder;
use crate::render::{write_pgm_depth, write_ppm, CameraPose, FrameImage};
use crate::tensor::Graph;
use crate::train::checkpoint::{load_trainer, save_trainer};
use crate::train::Trainer;
use clap::{Args, Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "fourfield",
    about = "Desk-scale 4D generative video fields: corpora, training, rendering, verification"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural video corpus.
    GenData(GenDataArgs),
    /// Train on a corpus, writing metrics and checkpoints.
    Train(TrainArgs),
    /// Render a camera × time grid from a checkpoint.
    Render(RenderArgs),
    /// Run the invariant battery and print a pass/fail table.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Clip generator: blink, bounce, or orbit.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 64)]
    clips: usize,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    /// Square frame resolution.
    #[arg(long, default_value_t = 16)]
    res: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Config file (flat key=value); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    /// Auxiliary image corpus for joint mode (defaults to the corpus).
    #[arg(long)]
    image_corpus: Option<PathBuf>,
    /// Steps to run (overrides the config value).
    #[arg(long)]
    steps: Option<u64>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Resume from a checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Checkpoint output directory.
    #[arg(long, default_value = "checkpoints")]
    ckpt_dir: PathBuf,
    /// Save a checkpoint every N steps (and at the end).
    #[arg(long, default_value_t = 500)]
    ckpt_every: u64,
    /// Static pretraining mode: motion vector forced to zero.
    #[arg(long, default_value_t = false)]
    pretrain_static: bool,
    /// Ablation toggles: no_image_disc, no_background, video_disc_as_image,
    /// time_concat, time_positional (repeatable).
    #[arg(long = "ablate")]
    ablate: Vec<String>,
}

#[derive(Args)]
struct RenderArgs {
    /// Checkpoint to render from.
    #[arg(long)]
    ckpt: PathBuf,
    /// Yaw sweep start:end:count (radians).
    #[arg(long, default_value = "0:0:1", allow_hyphen_values = true)]
    yaw: String,
    /// Pitch sweep start:end:count (radians).
    #[arg(long, default_value = "0:0:1", allow_hyphen_values = true)]
    pitch: String,
    /// Time sweep start:end:count.
    #[arg(long, default_value = "0:1:4", allow_hyphen_values = true)]
    times: String,
    /// Latent seed; fixed seed keeps one identity across the grid.
    #[arg(long, default_value_t = 1)]
    seed_latent: u64,
    /// Also write PGM depth maps.
    #[arg(long, default_value_t = false)]
    depth: bool,
    #[arg(long, default_value = "renders")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Flip one oracle to prove the harness reports failures.
    #[arg(long, default_value_t = false)]
    self_test_negative: bool,
}

/// Run the CLI; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own message; usage errors exit 2.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Render(args) => cmd_render(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_gen_data(args: GenDataArgs) -> Result<i32> {
    let kind = CorpusKind::parse(&args.kind)?;
    let corpus = generate_corpus(
        &args.out,
        kind,
        args.clips,
        args.frames,
        args.res,
        args.res,
        args.seed,
    )?;
    println!(
        "wrote {} {} clips of {} frames at {}x{} to {}",
        corpus.clips,
        corpus.kind,
        corpus.frames,
        corpus.h,
        corpus.w,
        corpus.root.display()
    );
    Ok(0)
}

fn apply_ablations(cfg: &mut TrainConfig, flags: &[String]) -> Result<()> {
    for flag in flags {
        match flag.as_str() {
            "no_image_disc" => cfg.image_disc = false,
            "no_background" => cfg.background = false,
            "video_disc_as_image" => cfg.video_disc_as_image = true,
            "time_concat" => cfg.time_mode = crate::latents::TimeMode::Concat,
            "time_positional" => cfg.time_mode = crate::latents::TimeMode::Positional,
            other => {
                return Err(Error::UnknownMode {
                    what: "ablation",
                    value: other.to_string(),
                })
            }
        }
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    let corpus = open_corpus(&args.corpus)?;
    let image_corpus = args
        .image_corpus
        .as_deref()
        .map(open_corpus)
        .transpose()?;

    let mut trainer = if let Some(resume) = &args.resume {
        load_trainer(resume)?
    } else {
        let mut cfg = match &args.config {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                TrainConfig::parse(&text)?
            }
            None => TrainConfig::desk_default(),
        };
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        apply_ablations(&mut cfg, &args.ablate)?;
        cfg.validate()?;
        Trainer::new(cfg)?
    };
    let steps = args.steps.unwrap_or(trainer.cfg.steps);

    std::fs::create_dir_all(&args.ckpt_dir).map_err(|e| Error::io(&args.ckpt_dir, e))?;
    let target = trainer.step + steps;
    while trainer.step < target {
        let metrics = if args.pretrain_static {
            trainer.image_step(&corpus)?
        } else {
            trainer.train_step(&corpus, image_corpus.as_ref())?
        };
        println!("{}", metrics.line());
        if trainer.step % args.ckpt_every == 0 || trainer.step == target {
            let path = args.ckpt_dir.join(format!("step_{:07}.ckpt", trainer.step));
            save_trainer(&path, &trainer)?;
        }
    }
    Ok(0)
}

fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "sweep must be start:end:count, got `{spec}`"
        )));
    }
    let start: f64 = parts[0]
        .parse()
        .map_err(|_| Error::Config(format!("bad sweep start `{}`", parts[0])))?;
    let end: f64 = parts[1]
        .parse()
        .map_err(|_| Error::Config(format!("bad sweep end `{}`", parts[1])))?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| Error::Config(format!("bad sweep count `{}`", parts[2])))?;
    if count == 0 {
        return Err(Error::Config("sweep count must be >= 1".into()));
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    Ok((0..count)
        .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
        .collect())
}

fn cmd_render(args: RenderArgs) -> Result<i32> {
    let trainer = load_trainer(&args.ckpt)?;
    let yaws = parse_sweep(&args.yaw)?;
    let pitches = parse_sweep(&args.pitch)?;
    let times = parse_sweep(&args.times)?;
    for &t in &times {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::DomainError {
                what: "t",
                value: t,
                range: "[0, 1]",
            });
        }
    }
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed_latent);
    let z = sample_unit_sphere(trainer.cfg.dims.z_dim, &mut rng);
    let m = sample_unit_sphere(trainer.cfg.dims.m_dim, &mut rng);

    let g = Graph::new();
    let bound = trainer.model.gen.bind(&mut Binder::frozen(&g))?;
    let rc = &trainer.cfg.render;
    let single_pitch = pitches.len() == 1;
    let mut written = 0usize;
    for (pi, &pitch) in pitches.iter().enumerate() {
        for (yi, &yaw) in yaws.iter().enumerate() {
            let pose = CameraPose::from_angles(yaw, pitch, trainer.cfg.camera.fov_deg);
            for (ti, &t) in times.iter().enumerate() {
                let fr = bound.render_frame(&pose, t, &z, &m, rc, false, None)?;
                let img = FrameImage::from_render(&fr);
                let stem = if single_pitch {
                    format!("r_yaw{yi}_t{ti}")
                } else {
                    format!("r_p{pi}_yaw{yi}_t{ti}")
                };
                write_ppm(&args.out.join(format!("{stem}.ppm")), &img)?;
                if args.depth {
                    let depth = fr.depth.values();
                    write_pgm_depth(
                        &args.out.join(format!("{}.pgm", stem.replacen("r_", "d_", 1))),
                        &depth,
                        fr.low_res.0,
                        fr.low_res.1,
                        rc.l_near,
                        rc.l_far,
                    )?;
                }
                written += 1;
            }
        }
    }
    println!("wrote {written} frames to {}", args.out.display());
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let report = crate::verify::run_battery(args.self_test_negative);
    print!("{}", report.table());
    if report.all_passed() {
        println!("verify: all {} checks passed", report.checks.len());
        Ok(0)
    } else {
        println!(
            "verify: {}/{} checks FAILED",
            report.failed(),
            report.checks.len()
        );
        Ok(1)
    }
}
