//! Deterministic synthetic sequences for self-contained testing.
//!
//! Frame `i` (0-based) is a binary PGM of seeded noise with a filled
//! 20×20 square whose top-left corner is at `(10 + 2i, 10 + i)`.

use crate::harness::sequence::{load_sequence, Sequence, SequenceError, GROUNDTRUTH_FILE};
use crate::region::Region;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const SEED: u64 = 42;
pub const SQUARE_SIDE: usize = 20;
pub const DEFAULT_SIZE: (usize, usize) = (160, 120);

/// Groundtruth of frame `i` (0-based).
pub fn square_region(i: usize) -> Region {
    Region::Rectangle {
        x: (10 + 2 * i) as f64,
        y: (10 + i) as f64,
        w: SQUARE_SIDE as f64,
        h: SQUARE_SIDE as f64,
    }
}

pub fn generate_sequence(dir: &Path, frames: usize, size: (usize, usize)) -> Result<Sequence, SequenceError> {
    let (width, height) = size;
    if frames == 0 || width == 0 || height == 0 {
        return Err(SequenceError::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "sequence needs at least one frame of non-zero size",
        )));
    }
    fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut groundtruth = String::new();
    let mut pixels = vec![0u8; width * height];

    for i in 0..frames {
        for p in pixels.iter_mut() {
            *p = rng.gen_range(0..128);
        }
        let (sx, sy) = (10 + 2 * i, 10 + i);
        for y in sy..(sy + SQUARE_SIDE).min(height) {
            for x in sx..(sx + SQUARE_SIDE).min(width) {
                pixels[y * width + x] = 255;
            }
        }
        let mut file = fs::File::create(dir.join(format!("{:08}.pgm", i + 1)))?;
        write!(file, "P5\n{width} {height}\n255\n")?;
        file.write_all(&pixels)?;

        groundtruth.push_str(&square_region(i).to_string());
        groundtruth.push('\n');
    }
    fs::write(dir.join(GROUNDTRUTH_FILE), groundtruth)?;
    load_sequence(dir)
}
