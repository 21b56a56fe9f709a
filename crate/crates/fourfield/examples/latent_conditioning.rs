//! Content/motion latents and their conditioning networks: unit-sphere
//! sampling, the style mapping, the time-conditioned motion vector and
//! its time-zero law, and latent interpolation.
//!
//! Run with: cargo run --release --example latent_conditioning

use fourfield::latents::{
    lerp_renorm, sample_unit_sphere, MappingNet, MotionNet, TimeMode,
};
use fourfield::nn::Binder;
use fourfield::tensor::Graph;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fourfield::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // Latent codes live on the unit hypersphere.
    let z = sample_unit_sphere(16, &mut rng);
    let m1 = sample_unit_sphere(16, &mut rng);
    let m2 = sample_unit_sphere(16, &mut rng);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    println!("|z| = {:.12}, |m1| = {:.12}", norm(&z), norm(&m1));

    // The 8-layer mapping network turns z into the style vector w.
    let mapping = MappingNet::init(16, 16, 0.2, &mut rng);
    let motion = MotionNet::init(16, 16, 8, 0.2, TimeMode::Multiply, &mut rng);
    let g = Graph::new();
    let bm = mapping.bind(&mut Binder::new(&g))?;
    let bn = motion.bind(&mut Binder::new(&g))?;

    let zt = g.constant(&[1, 16], &z)?;
    let w = bm.style(&zt)?;
    println!("w[0..4] = {:?}", &w.values()[..4]);

    // The motion vector n(m, t): time multiplies the first layer's
    // output, so at t = 0 every motion code collapses to one point.
    let m1t = g.constant(&[1, 16], &m1)?;
    let m2t = g.constant(&[1, 16], &m2)?;
    let n1_t0 = bn.motion_vector(&m1t, 0.0)?.values();
    let n2_t0 = bn.motion_vector(&m2t, 0.0)?.values();
    println!("n(m1, 0) == n(m2, 0): {}", n1_t0 == n2_t0);

    for t in [0.25, 0.5, 1.0] {
        let n1 = bn.motion_vector(&m1t, t)?.values();
        let n2 = bn.motion_vector(&m2t, t)?.values();
        let d: f64 = n1.iter().zip(&n2).map(|(a, b)| (a - b).abs()).sum();
        println!("t = {t}: |n(m1,t) - n(m2,t)|_1 = {d:.4}");
    }

    // Interpolating motion codes stays on the sphere.
    for k in 0..=4 {
        let mi = lerp_renorm(&m1, &m2, k as f64 / 4.0);
        println!("lerp {k}/4: |m| = {:.12}", norm(&mi));
    }
    Ok(())
}
