use crate::image::Image;
use crate::region::{parse_region, Region, RegionError};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub const DEFAULT_FPS: f64 = 20.0;
pub const GROUNDTRUTH_FILE: &str = "groundtruth.txt";
pub const METADATA_FILE: &str = "sequence";

const FRAME_EXTENSIONS: [&str; 3] = ["jpg", "png", "pgm"];

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<PathBuf>,
    pub groundtruth: Vec<Region>,
    pub fps: f64,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_image(&self, index: usize) -> Image {
        Image::Path(self.frames[index].clone())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SequenceError {
    #[error("{0}: missing groundtruth.txt")]
    MissingGroundtruth(PathBuf),
    #[error("{frames} frames but {groundtruth} groundtruth regions")]
    CountMismatch { frames: usize, groundtruth: usize },
    #[error("groundtruth line {line}: {source}")]
    BadRegionText { line: usize, source: RegionError },
    #[error("frame files must be numbered from 00000001 without gaps (found {0})")]
    BadFrameNumbering(String),
    #[error("first groundtruth region must be a rectangle or polygon")]
    InvalidInitialRegion,
    #[error("bad sequence metadata: {0}")]
    BadMetadata(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn frame_number(name: &str) -> Option<u32> {
    let (stem, ext) = name.split_once('.')?;
    if stem.len() != 8 || !stem.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if !FRAME_EXTENSIONS.contains(&ext) {
        return None;
    }
    stem.parse().ok()
}

pub fn load_sequence(dir: &Path) -> Result<Sequence, SequenceError> {
    let dir = dir.canonicalize()?;
    let gt_path = dir.join(GROUNDTRUTH_FILE);
    if !gt_path.is_file() {
        return Err(SequenceError::MissingGroundtruth(dir));
    }

    let mut numbered = Vec::new();
    for entry in fs::read_dir(&dir)? {
        let entry = entry?;
        let name = entry.file_name();
        if let Some(n) = name.to_str().and_then(frame_number) {
            numbered.push((n, entry.path()));
        }
    }
    numbered.sort();
    for (expected, (n, path)) in (1u32..).zip(&numbered) {
        if *n != expected {
            return Err(SequenceError::BadFrameNumbering(path.display().to_string()));
        }
    }
    let frames: Vec<PathBuf> = numbered.into_iter().map(|(_, p)| p).collect();

    let text = fs::read_to_string(&gt_path)?;
    let groundtruth = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            parse_region(line).map_err(|source| SequenceError::BadRegionText {
                line: i + 1,
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    if frames.len() != groundtruth.len() || frames.is_empty() {
        return Err(SequenceError::CountMismatch {
            frames: frames.len(),
            groundtruth: groundtruth.len(),
        });
    }
    if groundtruth[0].is_special() {
        return Err(SequenceError::InvalidInitialRegion);
    }

    let mut fps = DEFAULT_FPS;
    let meta = dir.join(METADATA_FILE);
    if meta.is_file() {
        for line in fs::read_to_string(&meta)?.lines() {
            if let Some(value) = line.trim().strip_prefix("fps=") {
                fps = value
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|f| f.is_finite() && *f > 0.0)
                    .ok_or_else(|| SequenceError::BadMetadata(line.to_owned()))?;
            }
        }
    }

    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Sequence {
        name,
        frames,
        groundtruth,
        fps,
    })
}
