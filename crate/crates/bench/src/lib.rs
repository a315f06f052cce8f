//! Shared fixtures for the benchmarks.

use cngp::{HyperParams, Image};

/// Smooth gradient with a few sharp edges, deterministic in its size.
pub fn test_image(width: u32, height: u32) -> Image {
    Image::from_fn(width, height, |x, y| {
        let u = x as f32 / width as f32;
        let v = y as f32 / height as f32;
        let stripe = if (x / 16 + y / 16) % 2 == 0 { 0.2 } else { 0.8 };
        [u, v, stripe * (1.0 - u * v)]
    })
}

/// Default hyperparameters with the given probing range.
pub fn bench_hyper(n_p: u32) -> HyperParams {
    HyperParams {
        n_f: 1 << 12,
        n_c: if n_p == 1 { 1 } else { 1 << 14 },
        n_p,
        ..HyperParams::default()
    }
}
