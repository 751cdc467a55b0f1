//! Binds manifest media paths to frame sources.
//!
//! Two containers are supported out of the box:
//!
//! - `.vraw`: uncompressed RGB frames (see the core raw video format);
//!   transcode real footage into it upstream, e.g. with ffmpeg.
//! - `.synthv`: a JSON descriptor of a procedural video, used by synthetic
//!   datasets and dry runs.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use vidrisk_core::frames::{FrameSource, RawVideoFile, SyntheticFrameSource};

/// Descriptor stored in a `.synthv` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticMediaDescriptor {
    pub frame_count: u64,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    /// Parity marker planted in every frame's last pixel byte; mock
    /// backends in class-signal mode read it.
    #[serde(default)]
    pub class_bit: u8,
}

impl SyntheticMediaDescriptor {
    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let json = serde_json::to_string(self).expect("descriptor serializes");
        std::fs::write(path, json)
            .with_context(|| format!("writing synthetic media {}", path.display()))
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading synthetic media {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing synthetic media {}", path.display()))
    }
}

/// Opens a frame source for a manifest media path.
pub fn open_media(path: &Path) -> anyhow::Result<Box<dyn FrameSource>> {
    if !path.exists() {
        bail!("media file does not exist: {}", path.display());
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("synthv") => {
            let d = SyntheticMediaDescriptor::read(path)?;
            Ok(Box::new(SyntheticFrameSource::new(
                d.frame_count,
                d.width,
                d.height,
                d.seed,
                d.class_bit,
            )))
        }
        Some("vraw") => {
            let source = RawVideoFile::open(path)
                .with_context(|| format!("opening raw video {}", path.display()))?;
            Ok(Box::new(source))
        }
        other => bail!(
            "unsupported media container {:?} for {} (supported: .vraw, .synthv)",
            other.unwrap_or(""),
            path.display()
        ),
    }
}
