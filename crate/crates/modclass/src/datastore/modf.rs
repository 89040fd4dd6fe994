//! The MODF on-disk dataset container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "MODF" | u16 version | u32 manifest_len | manifest TOML |
//! frame records ... | 32-byte SHA-256 of everything before it
//! ```
//!
//! Each frame record is `class u8, snr f32, rolloff f32, cfo f32, sps u16,
//! power_scale_db f32, seed u64`, followed by 2048 f32 samples (I row, then
//! Q row). Readers check magic, version, and the file checksum before
//! touching the payload.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::frame::{LabeledFrame, FRAME_LEN};
use super::manifest::DatasetManifest;
use super::Dataset;
use crate::error::{Error, Result};
use crate::siggen::{FrameMeta, ModulationClass};

const MODF_MAGIC: [u8; 4] = *b"MODF";
pub const MODF_VERSION: u16 = 1;
const RECORD_LEN: usize = 1 + 4 + 4 + 4 + 2 + 4 + 8 + 2 * FRAME_LEN * 4;

struct HashingWriter<W: Write> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> HashingWriter<W> {
    fn new(inner: W) -> Self {
        HashingWriter { inner, hasher: Sha256::new() }
    }

    fn write_all_hashed(&mut self, bytes: &[u8]) -> Result<()> {
        self.hasher.update(bytes);
        self.inner.write_all(bytes)?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        let digest = self.hasher.finalize();
        self.inner.write_all(&digest)?;
        self.inner.flush()?;
        Ok(())
    }
}

/// Write a dataset to `path` in the MODF format.
pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    ds.manifest.validate()?;
    if ds.frames.len() != ds.manifest.frame_count {
        return Err(Error::StructuralMismatch(format!(
            "manifest declares {} frames, dataset holds {}",
            ds.manifest.frame_count,
            ds.frames.len()
        )));
    }
    let manifest_text = ds.manifest.to_toml_string()?;

    let file = File::create(path)?;
    let mut w = HashingWriter::new(BufWriter::new(file));
    w.write_all_hashed(&MODF_MAGIC)?;
    w.write_all_hashed(&MODF_VERSION.to_le_bytes())?;
    w.write_all_hashed(&(manifest_text.len() as u32).to_le_bytes())?;
    w.write_all_hashed(manifest_text.as_bytes())?;

    let mut record = Vec::with_capacity(RECORD_LEN);
    for frame in &ds.frames {
        record.clear();
        let m = &frame.meta;
        record.push(m.class.index() as u8);
        record.extend_from_slice(&(m.snr_db as f32).to_le_bytes());
        record.extend_from_slice(&(m.rolloff as f32).to_le_bytes());
        record.extend_from_slice(&(m.cfo as f32).to_le_bytes());
        record.extend_from_slice(&(m.sps as u16).to_le_bytes());
        record.extend_from_slice(&(m.power_scale_db as f32).to_le_bytes());
        record.extend_from_slice(&m.seed.to_le_bytes());
        for &v in &frame.iq {
            record.extend_from_slice(&(v as f32).to_le_bytes());
        }
        debug_assert_eq!(record.len(), RECORD_LEN);
        w.write_all_hashed(&record)?;
    }
    w.finish()
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated);
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Read a MODF dataset from `path`.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    read_dataset_bytes(&bytes)
}

pub fn read_dataset_bytes(bytes: &[u8]) -> Result<Dataset> {
    let min_len = 4 + 2 + 4 + 32;
    if bytes.len() < min_len {
        return Err(Error::Truncated);
    }
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
    if magic != MODF_MAGIC {
        return Err(Error::BadMagic { expected: "MODF", found: magic });
    }
    let version = cur.u16()?;
    if version != MODF_VERSION {
        return Err(Error::UnsupportedVersion { expected: MODF_VERSION, found: version });
    }

    // Checksum covers everything before the trailing digest.
    let payload_end = bytes.len() - 32;
    let digest = Sha256::digest(&bytes[..payload_end]);
    if digest[..] != bytes[payload_end..] {
        return Err(Error::ChecksumMismatch);
    }

    let manifest_len = cur.u32()? as usize;
    let manifest_bytes = cur.take(manifest_len)?;
    let manifest_text = std::str::from_utf8(manifest_bytes)
        .map_err(|e| Error::Parse(format!("manifest not UTF-8: {e}")))?;
    let manifest = DatasetManifest::from_toml_str(manifest_text)?;
    manifest.validate()?;

    let body = payload_end.saturating_sub(cur.pos);
    if body != manifest.frame_count * RECORD_LEN {
        return Err(Error::StructuralMismatch(format!(
            "payload holds {} bytes, manifest frame count {} needs {}",
            body,
            manifest.frame_count,
            manifest.frame_count * RECORD_LEN
        )));
    }

    let mut frames = Vec::with_capacity(manifest.frame_count);
    for _ in 0..manifest.frame_count {
        let class = ModulationClass::from_index(cur.u8()? as usize)?;
        let snr_db = cur.f32()? as f64;
        let rolloff = cur.f32()? as f64;
        let cfo = cur.f32()? as f64;
        let sps = cur.u16()? as usize;
        let power_scale_db = cur.f32()? as f64;
        let seed = cur.u64()?;
        let meta = FrameMeta {
            class,
            snr_db,
            rolloff,
            cfo,
            sps,
            power_scale_db,
            seed,
            profile_id: manifest.profile.profile_id,
        };
        let mut iq = Vec::with_capacity(2 * FRAME_LEN);
        for _ in 0..2 * FRAME_LEN {
            iq.push(cur.f32()? as f64);
        }
        frames.push(LabeledFrame { iq, meta });
    }
    debug_assert_eq!(cur.remaining(), 32);
    Ok(Dataset { frames, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siggen::{generate_dataset, GeneratorProfile};
    use tempfile::tempdir;

    fn small_dataset() -> Dataset {
        let profile = GeneratorProfile::profile_a();
        generate_dataset(&profile, &profile.classes(), &[0.0, 10.0], 2, 77).unwrap()
    }

    #[test]
    fn roundtrip_is_bitwise_identical() {
        let ds = small_dataset();
        let dir = tempdir().unwrap();
        let path = dir.path().join("ds.modf");
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.manifest, ds.manifest);
        assert_eq!(back.frames.len(), ds.frames.len());
        for (a, b) in ds.frames.iter().zip(&back.frames) {
            assert_eq!(a.meta, b.meta);
            assert!(a.iq.iter().zip(&b.iq).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn truncated_file_reports_checksum_error() {
        let ds = small_dataset();
        let dir = tempdir().unwrap();
        let path = dir.path().join("ds.modf");
        write_dataset(&ds, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 1000);
        match read_dataset_bytes(&bytes) {
            Err(Error::ChecksumMismatch) => {}
            other => panic!("expected checksum mismatch, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_payload_reports_checksum_error() {
        let ds = small_dataset();
        let dir = tempdir().unwrap();
        let path = dir.path().join("ds.modf");
        write_dataset(&ds, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xFF;
        match read_dataset_bytes(&bytes) {
            Err(Error::ChecksumMismatch) => {}
            other => panic!("expected checksum mismatch, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version_are_distinct_errors() {
        let ds = small_dataset();
        let dir = tempdir().unwrap();
        let path = dir.path().join("ds.modf");
        write_dataset(&ds, &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_dataset_bytes(&bad_magic), Err(Error::BadMagic { .. })));

        let mut bad_version = good.clone();
        bad_version[4] = 0xFF;
        bad_version[5] = 0xFF;
        assert!(matches!(
            read_dataset_bytes(&bad_version),
            Err(Error::UnsupportedVersion { found: 0xFFFF, .. })
        ));
    }

    #[test]
    fn count_mismatch_is_structural_error() {
        let mut ds = small_dataset();
        ds.frames.pop();
        let dir = tempdir().unwrap();
        let path = dir.path().join("ds.modf");
        assert!(matches!(
            write_dataset(&ds, &path),
            Err(Error::StructuralMismatch(_))
        ));
    }
}
