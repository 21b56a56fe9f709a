//! Checkpoint persistence: train, save, resume, and confirm the resumed
//! run reproduces the uninterrupted one bit for bit.
//!
//! Run with: cargo run --release --example checkpoint_roundtrip

use fourfield::config::TrainConfig;
use fourfield::data::{generate_corpus, CorpusKind};
use fourfield::train::checkpoint::{load_trainer, save_trainer};
use fourfield::train::Trainer;

fn main() -> fourfield::Result<()> {
    let root = std::env::temp_dir().join("fourfield_example_ckpt");
    let corpus = generate_corpus(&root.join("corpus"), CorpusKind::Blink, 16, 16, 8, 8, 5)?;
    std::fs::create_dir_all(&root).expect("create dir");

    let mut cfg = TrainConfig::smoke();
    cfg.seed = 3;
    cfg.batch = 2;
    cfg.render.resolution = 8;

    // Uninterrupted reference: 6 steps.
    let mut reference = Trainer::new(cfg.clone())?;
    let full: Vec<String> = (0..6)
        .map(|_| reference.train_step(&corpus, None).map(|m| m.loss_line()))
        .collect::<fourfield::Result<_>>()?;

    // Interrupted run: 3 steps, checkpoint, resume, 3 more.
    let mut t = Trainer::new(cfg)?;
    let mut resumed: Vec<String> = (0..3)
        .map(|_| t.train_step(&corpus, None).map(|m| m.loss_line()))
        .collect::<fourfield::Result<_>>()?;
    let ckpt = root.join("mid.ckpt");
    save_trainer(&ckpt, &t)?;
    println!("saved {} ({} bytes)", ckpt.display(), std::fs::metadata(&ckpt).unwrap().len());

    let mut t = load_trainer(&ckpt)?;
    for _ in 0..3 {
        resumed.push(t.train_step(&corpus, None)?.loss_line());
    }

    for (a, b) in full.iter().zip(&resumed) {
        assert_eq!(a, b, "metric streams diverged");
    }
    println!("6 uninterrupted steps == 3 + resume + 3, bit-exact:");
    for line in &full {
        println!("  {line}");
    }

    // Save-load-save byte identity.
    let again = root.join("again.ckpt");
    save_trainer(&again, &load_trainer(&ckpt)?)?;
    let a = std::fs::read(&ckpt).unwrap();
    let b = std::fs::read(&again).unwrap();
    assert_eq!(a, b);
    println!("save -> load -> save is byte-identical ({} bytes)", a.len());
    Ok(())
}
