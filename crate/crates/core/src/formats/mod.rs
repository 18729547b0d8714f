//! On-disk formats exchanged with providers and external tools.
//!
//! * `.dfm` dense feature files (binary, little-endian)
//! * `.masks.json` instance mask manifests
//! * `.emb.json` embedding manifests
//!
//! Every parser here is total over arbitrary bytes: malformed input yields an
//! error naming the violated invariant, never a panic.

pub mod dfm;
pub mod embeddings;
pub mod inspect;
pub mod masks;

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
