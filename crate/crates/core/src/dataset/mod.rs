//! On-disk data model: band images, presentations, the manifest and protocol views.

mod image;
mod manifest;
pub mod pgm;
mod protocol;

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use image::{BandImage, SpectralStack, Wavelength};
pub use manifest::{load_manifest, manifest_header, write_manifest, ManifestRow, MANIFEST_FILE};
pub use pgm::{read_pgm16, write_pgm16};
pub use protocol::{sample_frame_indices, sample_frames, select_protocol, Protocol, ProtocolView};

/// Frames sampled per presentation unless configured otherwise.
pub const DEFAULT_FRAMES: usize = 10;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("I/O error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("format error in {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("unsupported format in {}: {msg}", path.display())]
    Unsupported { path: PathBuf, msg: String },
    #[error("manifest error at row {row}: {msg}")]
    Manifest { row: usize, msg: String },
    #[error("{0}")]
    Domain(String),
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        concat!("unknown ", stringify!($name), " {:?}"),
                        other
                    )),
                }
            }
        }
    };
}

string_enum!(Label {
    Bonafide => "bonafide",
    Attack => "attack",
});

string_enum!(
    /// Presentation attack instrument category; `None` for bonafide presentations.
    AttackType {
        None => "none",
        Print => "print",
        Replay => "replay",
        RigidMask => "rigid_mask",
        PaperMask => "paper_mask",
        FlexibleMask => "flexible_mask",
        Mannequin => "mannequin",
        Glasses => "glasses",
        Makeup => "makeup",
        Tattoo => "tattoo",
        Wig => "wig",
    }
);

string_enum!(Group {
    None => "none",
    Impersonation => "impersonation",
    Obfuscation => "obfuscation",
});

string_enum!(Split {
    Train => "train",
    Dev => "dev",
    Test => "test",
});

impl AttackType {
    pub fn group(self) -> Group {
        match self {
            AttackType::None => Group::None,
            AttackType::Print
            | AttackType::Replay
            | AttackType::RigidMask
            | AttackType::PaperMask
            | AttackType::FlexibleMask
            | AttackType::Mannequin => Group::Impersonation,
            AttackType::Glasses | AttackType::Makeup | AttackType::Tattoo | AttackType::Wig => {
                Group::Obfuscation
            }
        }
    }

    pub fn label(self) -> Label {
        if self == AttackType::None {
            Label::Bonafide
        } else {
            Label::Attack
        }
    }
}

#[derive(Debug)]
enum FrameSource {
    InMemory,
    Files {
        dir: PathBuf,
        wavelengths: Vec<Wavelength>,
    },
}

/// One frame of a presentation. File-backed frames are read on first access and cached.
#[derive(Debug)]
pub struct Frame {
    index: usize,
    source: FrameSource,
    cache: OnceLock<Arc<SpectralStack>>,
}

impl Frame {
    pub fn in_memory(stack: SpectralStack) -> Self {
        let cache = OnceLock::new();
        let index = stack.frame_index();
        let _ = cache.set(Arc::new(stack));
        Self {
            index,
            source: FrameSource::InMemory,
            cache,
        }
    }

    pub fn on_disk(index: usize, dir: PathBuf, wavelengths: Vec<Wavelength>) -> Self {
        Self {
            index,
            source: FrameSource::Files { dir, wavelengths },
            cache: OnceLock::new(),
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn file_name(index: usize, wavelength: Wavelength) -> String {
        format!("frame_{index}_{wavelength}nm.pgm")
    }

    pub fn stack(&self) -> Result<Arc<SpectralStack>, DatasetError> {
        if let Some(s) = self.cache.get() {
            return Ok(Arc::clone(s));
        }
        let FrameSource::Files { dir, wavelengths } = &self.source else {
            unreachable!("in-memory frames are created with a filled cache")
        };
        let bands = wavelengths
            .iter()
            .map(|&wl| read_pgm16(&dir.join(Frame::file_name(self.index, wl)), wl))
            .collect::<Result<Vec<_>, _>>()?;
        let stack = Arc::new(SpectralStack::new(self.index, bands)?);
        // a concurrent loader may have won; either copy is identical
        Ok(Arc::clone(self.cache.get_or_init(|| stack)))
    }
}

/// A labeled sequence of frames with its attack metadata and split assignment.
#[derive(Debug)]
pub struct Presentation {
    pub id: String,
    pub label: Label,
    pub attack_type: AttackType,
    pub group: Group,
    pub split: Split,
    frames: Vec<Frame>,
}

impl Presentation {
    pub fn new(
        id: impl Into<String>,
        attack_type: AttackType,
        split: Split,
        frames: Vec<Frame>,
    ) -> Result<Self, DatasetError> {
        let id = id.into();
        check_id(&id)?;
        if frames.is_empty() {
            return Err(DatasetError::Domain(format!(
                "presentation {id} has no frames"
            )));
        }
        Ok(Self {
            id,
            label: attack_type.label(),
            attack_type,
            group: attack_type.group(),
            split,
            frames,
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn is_bonafide(&self) -> bool {
        self.label == Label::Bonafide
    }
}

pub(crate) fn check_id(id: &str) -> Result<(), DatasetError> {
    if id.is_empty()
        || !id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        return Err(DatasetError::Domain(format!(
            "presentation id {id:?} must be non-empty [A-Za-z0-9_-]"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_follow_attack_types() {
        for &t in AttackType::ALL {
            let g = t.group();
            assert_eq!(t == AttackType::None, g == Group::None);
            assert_eq!(t.label() == Label::Bonafide, g == Group::None);
        }
        assert_eq!(AttackType::Tattoo.group(), Group::Obfuscation);
        assert_eq!(AttackType::Mannequin.group(), Group::Impersonation);
    }

    #[test]
    fn enum_text_round_trip() {
        for &t in AttackType::ALL {
            assert_eq!(t.as_str().parse::<AttackType>().unwrap(), t);
        }
        assert!("hologram".parse::<AttackType>().is_err());
        assert_eq!("dev".parse::<Split>().unwrap(), Split::Dev);
    }

    #[test]
    fn presentation_needs_frames_and_clean_id() {
        assert!(Presentation::new("p1", AttackType::None, Split::Train, vec![]).is_err());
        let stack = SpectralStack::new(0, vec![BandImage::filled(1, 1, 940, 0.5).unwrap()]).unwrap();
        assert!(Presentation::new(
            "bad id",
            AttackType::None,
            Split::Train,
            vec![Frame::in_memory(stack)]
        )
        .is_err());
    }
}
