//! Crate-wide error type.

use std::fmt;
use std::io;

/// Errors produced by dataset generation, storage, model execution and training.
#[derive(Debug)]
pub enum Error {
    /// A caller violated an operation precondition (bad argument, bad range).
    InvalidArgument(String),
    /// Tensor or layer shapes do not line up.
    ShapeMismatch(String),
    /// A file did not start with the expected magic bytes.
    BadMagic { expected: &'static str, found: [u8; 4] },
    /// A file carries a format version this build does not understand.
    UnsupportedVersion { expected: u16, found: u16 },
    /// The file-level checksum does not match its payload.
    ChecksumMismatch,
    /// The file ended before its declared payload was complete.
    Truncated,
    /// Declared and actual structure disagree (e.g. manifest frame count vs payload).
    StructuralMismatch(String),
    /// `import_external` was called with a format tag no converter handles.
    UnsupportedFormat(String),
    /// A stored label does not belong to the supported class list.
    UnknownClass(String),
    /// Underlying I/O failure.
    Io(io::Error),
    /// Manifest / profile / report text could not be parsed.
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::BadMagic { expected, found } => {
                write!(f, "bad magic: expected {expected:?}, found {found:?}")
            }
            Error::UnsupportedVersion { expected, found } => {
                write!(f, "unsupported format version {found} (this build reads {expected})")
            }
            Error::ChecksumMismatch => write!(f, "checksum mismatch: file corrupt or truncated"),
            Error::Truncated => write!(f, "file truncated before declared payload end"),
            Error::StructuralMismatch(msg) => write!(f, "structural mismatch: {msg}"),
            Error::UnsupportedFormat(tag) => write!(f, "unsupported format: no converter registered for tag {tag:?}"),
            Error::UnknownClass(name) => write!(f, "unknown modulation class {name:?}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}
