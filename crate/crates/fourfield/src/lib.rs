//! Desk-scale 4D generative video fields.
//!
//! A from-scratch implementation of a time-conditioned neural-field video
//! generator trained adversarially: content/motion latents drive a
//! modulated foreground field plus an inverse-sphere background, frames
//! come out of discrete volume rendering from cameras sampled on the unit
//! sphere, and a pair discriminator scores motion realism from two frames
//! and their time difference.
//!
//! Everything runs on a small f64 reverse-mode autodiff engine
//! ([`tensor`]) so every gradient in the pipeline is checkable against
//! finite differences. See the `examples/` directory for one runnable
//! example per capability, and the `fourfield` binary for corpus
//! generation, training, rendering sweeps and the verification battery.

pub mod cli;
pub mod config;
pub mod data;
pub mod disc;
pub mod error;
pub mod fields;
pub mod latents;
pub mod nn;
pub mod render;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::{grad_check, GradCheckReport, GradientMap, Graph, Tensor};

use std::sync::atomic::{AtomicUsize, Ordering};

static THREADS: AtomicUsize = AtomicUsize::new(0);

/// Worker threads for batched kernels. Defaults to 1 (bit-reproducible
/// sequential evaluation); `FOURFIELD_THREADS` raises the cap. Parallel
/// kernels assign each output element to exactly one thread, so results
/// stay bit-identical to the sequential path.
pub fn thread_count() -> usize {
    let cached = THREADS.load(Ordering::Relaxed);
    if cached != 0 {
        return cached;
    }
    let n = std::env::var("FOURFIELD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1);
    THREADS.store(n, Ordering::Relaxed);
    n
}
