//! Render a (camera × time) grid from a freshly initialized generator
//! and export PPM frames plus PGM depth maps.
//!
//! Run with: cargo run --release --example render_grid

use fourfield::config::TrainConfig;
use fourfield::latents::sample_unit_sphere;
use fourfield::nn::Binder;
use fourfield::render::{write_pgm_depth, write_ppm, CameraPose, FrameImage, Generator};
use fourfield::tensor::Graph;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fourfield::Result<()> {
    let cfg = TrainConfig::smoke();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gen = Generator::init(&cfg.dims, cfg.time_mode, cfg.background, &mut rng);
    let z = sample_unit_sphere(cfg.dims.z_dim, &mut rng);
    let m = sample_unit_sphere(cfg.dims.m_dim, &mut rng);

    let out = std::env::temp_dir().join("fourfield_example_grid");
    std::fs::create_dir_all(&out).expect("create output dir");

    let g = Graph::new();
    let bound = gen.bind(&mut Binder::frozen(&g))?;
    let yaws = [-0.3, 0.0, 0.3];
    let times = [0.0, 0.5, 1.0];
    for (yi, &yaw) in yaws.iter().enumerate() {
        let pose = CameraPose::from_angles(yaw, 0.0, cfg.camera.fov_deg);
        for (ti, &t) in times.iter().enumerate() {
            let fr = bound.render_frame(&pose, t, &z, &m, &cfg.render, false, None)?;
            let img = FrameImage::from_render(&fr);
            write_ppm(&out.join(format!("r_yaw{yi}_t{ti}.ppm")), &img)?;
            write_pgm_depth(
                &out.join(format!("d_yaw{yi}_t{ti}.pgm")),
                &fr.depth.values(),
                fr.low_res.0,
                fr.low_res.1,
                cfg.render.l_near,
                cfg.render.l_far,
            )?;
            println!(
                "yaw {yaw:+.1} t {t:.1}: mean brightness {:.3}, alpha mean {:.3}",
                img.mean_brightness(),
                fr.alpha.values().iter().sum::<f64>() / fr.alpha.numel() as f64
            );
        }
    }
    println!("wrote 9 PPM frames and 9 PGM depth maps to {}", out.display());
    Ok(())
}
