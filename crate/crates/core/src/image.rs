//! Frame references: a file on disk or an encoded buffer sent inline.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImageFormat {
    Png,
    Jpeg,
    Pgm,
}

impl ImageFormat {
    pub fn name(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Jpeg => "jpeg",
            ImageFormat::Pgm => "pgm",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "png" => Some(ImageFormat::Png),
            "jpeg" | "jpg" => Some(ImageFormat::Jpeg),
            "pgm" => Some(ImageFormat::Pgm),
            _ => None,
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension()
            .and_then(|e| e.to_str())
            .and_then(|e| Self::from_name(&e.to_ascii_lowercase()))
    }
}

/// Transport flavour of an image, as negotiated in the handshake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ImageKind {
    Path,
    Memory,
}

impl ImageKind {
    pub fn name(self) -> &'static str {
        match self {
            ImageKind::Path => "path",
            ImageKind::Memory => "memory",
        }
    }
}

impl fmt::Display for ImageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ImageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "path" => Ok(ImageKind::Path),
            "memory" => Ok(ImageKind::Memory),
            other => Err(format!("unknown image kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Image {
    Path(PathBuf),
    Memory { format: ImageFormat, bytes: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bad image text: {0}")]
pub struct BadImageText(pub String);

const FILE_SCHEME: &str = "file://";
const DATA_SCHEME: &str = "data:image/";

impl Image {
    pub fn path(path: impl Into<PathBuf>) -> Result<Self, BadImageText> {
        let path = path.into();
        if !path.is_absolute() {
            return Err(BadImageText(format!("relative path {}", path.display())));
        }
        Ok(Image::Path(path))
    }

    pub fn memory(format: ImageFormat, bytes: Vec<u8>) -> Result<Self, BadImageText> {
        if bytes.is_empty() {
            return Err(BadImageText("empty image buffer".into()));
        }
        Ok(Image::Memory { format, bytes })
    }

    /// Reads a file into an in-memory image, with the format taken from
    /// the extension.
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let format = ImageFormat::from_path(path).ok_or_else(|| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("unknown image format for {}", path.display()),
            )
        })?;
        let bytes = std::fs::read(path)?;
        Image::memory(format, bytes)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn kind(&self) -> ImageKind {
        match self {
            Image::Path(_) => ImageKind::Path,
            Image::Memory { .. } => ImageKind::Memory,
        }
    }
}

pub fn parse_image(text: &str) -> Result<Image, BadImageText> {
    if let Some(path) = text.strip_prefix(FILE_SCHEME) {
        return Image::path(path);
    }
    if let Some(rest) = text.strip_prefix(DATA_SCHEME) {
        let (format, payload) = rest
            .split_once(";base64,")
            .ok_or_else(|| BadImageText("data URI without base64 payload".into()))?;
        let format = ImageFormat::from_name(format)
            .ok_or_else(|| BadImageText(format!("unsupported image format {format:?}")))?;
        let bytes = STANDARD
            .decode(payload)
            .map_err(|e| BadImageText(format!("invalid base64: {e}")))?;
        return Image::memory(format, bytes);
    }
    Err(BadImageText(format!("unknown scheme in {text:?}")))
}

pub fn format_image(image: &Image) -> String {
    image.to_string()
}

impl fmt::Display for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Image::Path(p) => write!(f, "{FILE_SCHEME}{}", p.display()),
            Image::Memory { format, bytes } => {
                write!(f, "{DATA_SCHEME}{};base64,{}", format.name(), STANDARD.encode(bytes))
            }
        }
    }
}

impl FromStr for Image {
    type Err = BadImageText;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_image(s)
    }
}
