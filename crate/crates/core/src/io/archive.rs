//! Flat tensor archive.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "BMG1"
//! entry count          u32
//! per entry:
//!   name length        u32
//!   name               UTF-8 bytes
//!   dtype              u8   (0 = float32)
//!   ndim               u8
//!   dims               u32 each
//!   payload            4 * product(dims) bytes of little-endian f32
//! ```
//!
//! Round trips are bit-exact; names must be unique.

use crate::error::{Error, Result};
use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 4] = b"BMG1";
const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorEntry {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::Archive(format!(
                "entry {name}: payload has {} values, dims {dims:?} require {expected}",
                data.len()
            )));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) || dims.len() > u8::MAX as usize {
            return Err(Error::Archive(format!("entry {name}: dims {dims:?} out of range")));
        }
        Ok(Self { name, dims, data })
    }

    pub fn scalar(name: impl Into<String>, value: f32) -> Self {
        Self { name: name.into(), dims: vec![1], data: vec![value] }
    }

    pub fn element_count(&self) -> usize {
        self.data.len()
    }
}

fn check_unique(entries: &[TensorEntry]) -> Result<()> {
    let mut seen = HashSet::new();
    for e in entries {
        if !seen.insert(e.name.as_str()) {
            return Err(Error::Archive(format!("duplicate entry name {}", e.name)));
        }
    }
    Ok(())
}

pub fn archive_write(path: &Path, entries: &[TensorEntry]) -> Result<()> {
    check_unique(entries)?;
    if entries.len() > u32::MAX as usize {
        return Err(Error::Archive("too many entries".into()));
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for e in entries {
        let name = e.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[DTYPE_F32, e.dims.len() as u8])?;
        for &d in &e.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &e.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Archive(format!(
                "truncated archive: expected at least {} bytes, got {}",
                self.pos + n,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn archive_read(path: &Path) -> Result<Vec<TensorEntry>> {
    let buf = std::fs::read(path)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    let magic = c.take(4)?;
    if magic != MAGIC {
        return Err(Error::Archive(format!(
            "bad magic {:02x?} in {} (expected {MAGIC:02x?})",
            magic,
            path.display()
        )));
    }
    let count = c.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| Error::Archive("entry name is not valid UTF-8".into()))?
            .to_string();
        let dtype = c.u8()?;
        if dtype != DTYPE_F32 {
            return Err(Error::Archive(format!("entry {name}: unsupported dtype {dtype}")));
        }
        let ndim = c.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(c.u32()? as usize);
        }
        let n: usize = dims.iter().product();
        let raw = c.take(4 * n)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        entries.push(TensorEntry { name, dims, data });
    }
    if c.pos != buf.len() {
        return Err(Error::Archive(format!(
            "trailing bytes: archive is {} bytes, parsed {}",
            buf.len(),
            c.pos
        )));
    }
    check_unique(&entries)?;
    Ok(entries)
}

/// Looks up an entry by name.
pub fn find_entry<'a>(entries: &'a [TensorEntry], name: &str) -> Result<&'a TensorEntry> {
    entries
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::Archive(format!("missing entry {name}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bmg");
        let entries = vec![
            TensorEntry::new("a.weight", vec![2, 3], vec![1.0, -2.5, 3.25, 0.0, f32::MIN_POSITIVE, 7e-7]).unwrap(),
            TensorEntry::scalar("b", 42.0),
            TensorEntry::new("empty", vec![0], vec![]).unwrap(),
        ];
        archive_write(&path, &entries).unwrap();
        let back = archive_read(&path).unwrap();
        assert_eq!(entries, back);
        // writing the same entries again produces identical bytes
        let path2 = dir.path().join("t2.bmg");
        archive_write(&path2, &entries).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn truncation_reports_byte_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bmg");
        let entries = vec![TensorEntry::new("x", vec![4], vec![1.0; 4]).unwrap()];
        archive_write(&path, &entries).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = path.with_extension("cut");
        std::fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
        let err = archive_read(&cut).unwrap_err().to_string();
        assert!(err.contains("expected at least") && err.contains("got"), "{err}");
    }

    #[test]
    fn duplicate_names_rejected_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![TensorEntry::scalar("x", 1.0), TensorEntry::scalar("x", 2.0)];
        let err = archive_write(&dir.path().join("d.bmg"), &entries).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bmg");
        std::fs::write(&path, b"NOPE\x00\x00\x00\x00").unwrap();
        let err = archive_read(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn dim_payload_consistency_checked() {
        assert!(TensorEntry::new("x", vec![2, 2], vec![0.0; 3]).is_err());
    }
}
