//! The time-aware pair discriminator: the 7-channel input layout, the
//! zero-dt degradation that turns it into an image discriminator, and
//! the shared augmentation draw.
//!
//! Run with: cargo run --release --example pair_discrimination

use fourfield::disc::{
    apply_augment, draw_augment, frame_as_pair_input, pair_to_input, AugPolicy, Discriminator,
};
use fourfield::nn::Binder;
use fourfield::tensor::Graph;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fourfield::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d_time = Discriminator::init("d_time", 7, &mut rng);
    let d_image = Discriminator::init("d_img", 3, &mut rng);

    let g = Graph::new();
    let bt = d_time.bind(&mut Binder::new(&g))?;
    let bi = d_image.bind(&mut Binder::new(&g))?;

    // Two 8x8 frames of one "scene" and their time difference.
    let (h, w) = (8, 8);
    let frame_a = g.constant(&[1, 3, h, w], &vec![0.30; 3 * h * w])?;
    let frame_b = g.constant(&[1, 3, h, w], &vec![0.55; 3 * h * w])?;
    let pair = pair_to_input(&frame_a, &frame_b, &[0.4])?;
    println!("pair input shape {:?} (RGB | RGB | dt channel)", pair.shape());
    println!("pair score   = {:+.4}", bt.score(&pair)?.item());
    println!("image score  = {:+.4}", bi.score(&frame_a)?.item());

    // The degraded mode: one frame repeated with dt = 0 lets the pair
    // discriminator score single images.
    let degraded = frame_as_pair_input(&frame_a)?;
    println!(
        "degraded 7-channel score = {:+.4}",
        bt.score(&degraded)?.item()
    );

    // One augmentation draw applies identically to real and fake.
    let draw = draw_augment(AugPolicy::all(), 1, &mut rng);
    let real_aug = apply_augment(&frame_a, &draw)?;
    let fake_aug = apply_augment(&frame_a, &draw)?;
    assert_eq!(real_aug.values(), fake_aug.values());
    println!(
        "augment draw: flip={:?}, shift[0]={:?} -> identical on identical inputs",
        draw.flip, draw.shift[0]
    );
    Ok(())
}
