//! A short adversarial training run on the blink corpus, with pair
//! discriminator accuracy and brightness-distribution tracking.
//!
//! Run with: cargo run --release --example smoke_train [steps]

use fourfield::config::TrainConfig;
use fourfield::data::{corpus_stats, generate_corpus, CorpusKind};
use fourfield::train::Trainer;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fourfield::Result<()> {
    let steps: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);

    let root = std::env::temp_dir().join("fourfield_example_smoke");
    let corpus = generate_corpus(&root, CorpusKind::Blink, 64, 16, 16, 16, 7)?;
    let stats = corpus_stats(&corpus)?;
    println!(
        "corpus brightness: mean {:.4} std {:.4}",
        stats.brightness_mean, stats.brightness_std
    );

    let mut cfg = TrainConfig::smoke();
    cfg.seed = 11;
    let mut trainer = Trainer::new(cfg)?;
    for _ in 0..steps {
        let m = trainer.train_step(&corpus, None)?;
        if m.step % 20 == 0 {
            println!("{}", m.line());
        }
        if m.step % 50 == 0 {
            let mut erng = ChaCha8Rng::seed_from_u64(1000 + m.step);
            let acc = trainer.d_time_accuracy(&corpus, 16, &mut erng)?;
            println!("  pair-disc accuracy {acc:.3}");
        }
    }
    let mut erng = ChaCha8Rng::seed_from_u64(42);
    let (bm, bs) = trainer.generated_brightness_stats(32, &mut erng)?;
    println!(
        "generated brightness after {steps} steps: mean {bm:.4} std {bs:.4} \
         (corpus {:.4} / {:.4})",
        stats.brightness_mean, stats.brightness_std
    );
    Ok(())
}
