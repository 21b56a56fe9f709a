//! Volume rendering from first principles: ray generation, the ordered
//! quadrature, its conservation law, and the constant-density closed
//! form.
//!
//! Run with: cargo run --release --example volume_rendering

use fourfield::render::{composite, rays_for_camera, CameraPose};
use fourfield::tensor::Graph;

fn main() -> fourfield::Result<()> {
    // Rays from a camera on the unit sphere looking at the origin.
    let pose = CameraPose::from_angles(0.2, -0.1, 18.0);
    let rays = rays_for_camera(&pose, 4, 4, 0.5, 2.0)?;
    println!(
        "camera at {:?}, {} rays, all unit length",
        pose.position,
        rays.dirs.len()
    );

    // A homogeneous medium: density c over a unit-length interval makes
    // the total opacity exactly 1 - exp(-c).
    let g = Graph::new();
    let s = 256;
    for c in [0.5, 2.0, 8.0] {
        let sigma = g.constant(&[1, s], &vec![c; s])?;
        let feats = g.constant(&[1, s, 1], &vec![1.0; s])?;
        let deltas = g.constant(&[1, s], &vec![1.0 / s as f64; s])?;
        let depths = g.constant(
            &[1, s],
            &(0..s).map(|j| (j as f64 + 0.5) / s as f64).collect::<Vec<_>>(),
        )?;
        let out = composite(&sigma, &feats, &deltas, &depths)?;
        println!(
            "c = {c}: alpha = {:.9}, closed form = {:.9}",
            out.alpha.item(),
            1.0 - (-c).exp()
        );
    }

    // Conservation: weights are non-negative and sum with the residual
    // transmittance to exactly 1, whatever the density profile.
    let n = 8;
    let s = 16;
    let sigma_v: Vec<f64> = (0..n * s)
        .map(|i| ((i * 2654435761) % 997) as f64 / 150.0)
        .collect();
    let sigma = g.constant(&[n, s], &sigma_v)?;
    let feats = g.constant(&[n, s, 1], &vec![0.4; n * s])?;
    let deltas = g.constant(&[n, s], &vec![0.09; n * s])?;
    let depths = g.constant(&[n, s], &vec![1.0; n * s])?;
    let out = composite(&sigma, &feats, &deltas, &depths)?;
    let weights = out.weights.values();
    let mut worst: f64 = 0.0;
    for r in 0..n {
        let wsum: f64 = weights[r * s..(r + 1) * s].iter().sum();
        let t_res: f64 = sigma_v[r * s..(r + 1) * s]
            .iter()
            .map(|&sg| (-sg * 0.09f64).exp())
            .product();
        worst = worst.max((wsum + t_res - 1.0).abs());
    }
    println!("conservation: max |sum(w) + T - 1| = {worst:.2e} over {n} random rays");

    // The quadrature is differentiable: opacity gradients flow back to
    // the densities.
    let sigma_leaf = g.leaf(&[1, 4], &[0.5, 1.0, 0.2, 0.8], true)?;
    let feats = g.constant(&[1, 4, 1], &[1.0; 4])?;
    let deltas = g.constant(&[1, 4], &[0.25; 4])?;
    let depths = g.constant(&[1, 4], &[0.6, 0.85, 1.1, 1.35])?;
    let out = composite(&sigma_leaf, &feats, &deltas, &depths)?;
    let grads = out.alpha.sum_all()?.backward(&[&sigma_leaf])?;
    println!("d(alpha)/d(sigma) = {:?}", grads.get(&sigma_leaf).unwrap());
    Ok(())
}
