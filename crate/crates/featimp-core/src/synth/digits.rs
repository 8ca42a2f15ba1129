//! Digit-style tabular dataset: 8x8 grayscale glyphs flattened to 64
//! features, ten classes.
//!
//! Glyphs are seven-segment renderings, so classes share most of their ink
//! and differ in a handful of discriminative pixels. Each sample is a glyph
//! with random intensity, per-pixel ink jitter, and additive Gaussian noise,
//! clamped to the 0..16 gray range.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;

const GRID: usize = 8;
pub const DIGIT_FEATURES: usize = GRID * GRID;
pub const DIGIT_CLASSES: usize = 10;
const INK: f64 = 1.0;

// segment order: top, top-left, top-right, middle, bottom-left,
// bottom-right, bottom
const SEGMENTS: [[bool; 7]; 10] = [
    [true, true, true, false, true, true, true],    // 0
    [false, false, true, false, false, true, false], // 1
    [true, false, true, true, true, false, true],   // 2
    [true, false, true, true, false, true, true],   // 3
    [false, true, true, true, false, true, false],  // 4
    [true, true, false, true, false, true, true],   // 5
    [true, true, false, true, true, true, true],    // 6
    [true, false, true, false, false, true, false], // 7
    [true, true, true, true, true, true, true],     // 8
    [true, true, true, true, false, true, true],    // 9
];

fn glyph(digit: usize) -> [bool; DIGIT_FEATURES] {
    let mut pixels = [false; DIGIT_FEATURES];
    let mut set = |row: usize, col: usize| pixels[row * GRID + col] = true;
    let segs = SEGMENTS[digit];
    if segs[0] {
        for col in 2..=5 {
            set(0, col);
        }
    }
    if segs[1] {
        for row in 1..=2 {
            set(row, 1);
        }
    }
    if segs[2] {
        for row in 1..=2 {
            set(row, 6);
        }
    }
    if segs[3] {
        for col in 2..=5 {
            set(3, col);
        }
    }
    if segs[4] {
        for row in 4..=6 {
            set(row, 1);
        }
    }
    if segs[5] {
        for row in 4..=6 {
            set(row, 6);
        }
    }
    if segs[6] {
        for col in 2..=5 {
            set(7, col);
        }
    }
    pixels
}

/// Generate `samples` noisy glyph images with uniformly random digit
/// classes. Features are named `f0..f63` (row-major pixels), labels are the
/// digits. Per-sample stroke intensity and noise level vary, so sample
/// quality (and with it the model's loss) spans a real range.
pub fn digit_style_dataset(samples: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("noise distribution");
    let glyphs: Vec<[bool; DIGIT_FEATURES]> = (0..DIGIT_CLASSES).map(glyph).collect();

    let mut features = Vec::with_capacity(samples * DIGIT_FEATURES);
    let mut labels = Vec::with_capacity(samples);
    for _ in 0..samples {
        let digit = rng.random_range(0..DIGIT_CLASSES);
        let intensity = rng.random_range(0.7..1.0);
        let noise_level = rng.random_range(0.05..1.0);
        for &ink in glyphs[digit].iter() {
            let mut value = if ink {
                INK * intensity * rng.random_range(0.6..1.0)
            } else {
                0.0
            };
            value += noise_level * noise.sample(&mut rng);
            features.push(value.clamp(0.0, INK));
        }
        labels.push(digit);
    }

    let feature_names = (0..DIGIT_FEATURES).map(|j| format!("f{j}")).collect();
    Dataset::new(features, labels, feature_names, DIGIT_CLASSES)
        .expect("generated digits are always valid")
}
