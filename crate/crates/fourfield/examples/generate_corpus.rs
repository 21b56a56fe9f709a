//! Generate each procedural corpus kind and print its exact statistics.
//!
//! Run with: cargo run --release --example generate_corpus

use fourfield::data::{corpus_stats, generate_corpus, CorpusKind};

fn main() -> fourfield::Result<()> {
    let root = std::env::temp_dir().join("fourfield_example_corpora");
    for kind in [CorpusKind::Blink, CorpusKind::Bounce, CorpusKind::Orbit] {
        let dir = root.join(kind.name());
        let corpus = generate_corpus(&dir, kind, 8, 16, 16, 16, 7)?;
        let stats = corpus_stats(&corpus)?;
        println!(
            "{}: {} clips x {} frames at {}x{} -> {}",
            kind,
            corpus.clips,
            corpus.frames,
            corpus.h,
            corpus.w,
            dir.display()
        );
        println!(
            "  channel mean {:?}  std {:?}",
            stats.channel_mean.map(|v| (v * 1000.0).round() / 1000.0),
            stats.channel_std.map(|v| (v * 1000.0).round() / 1000.0),
        );
        println!(
            "  temporal energy {:.5}  brightness mean {:.3} std {:.3}",
            stats.temporal_energy, stats.brightness_mean, stats.brightness_std
        );
    }
    println!("\nlayout: <corpus>/manifest.txt, <corpus>/clip_00000/frame_00.ppm ...");
    Ok(())
}
