//! Framing shared by the dataset, checkpoint and adversarial-batch files:
//! a 5-byte magic, a little-endian `u32` header length, a UTF-8 JSON header,
//! then a raw little-endian payload.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) const MAGIC_LEN: usize = 5;

pub(crate) fn encode<H: Serialize>(magic: &[u8; MAGIC_LEN], header: &H, payload: &[u8]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header).map_err(|e| Error::Header(e.to_string()))?;
    let len = u32::try_from(json.len()).map_err(|_| Error::Header("header too large".into()))?;
    let mut out = Vec::with_capacity(MAGIC_LEN + 4 + json.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(payload);
    Ok(out)
}

/// Splits a file image into its parsed header and the remaining payload.
pub(crate) fn decode<'a, H: DeserializeOwned>(magic: &[u8; MAGIC_LEN], bytes: &'a [u8]) -> Result<(H, Reader<'a>)> {
    let mut r = Reader { buf: bytes };
    let found = r.take(MAGIC_LEN, "magic")?;
    if found != magic {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        });
    }
    let len = u32::from_le_bytes(r.take(4, "header length")?.try_into().unwrap()) as usize;
    let json = r.take(len, "header")?;
    let header = serde_json::from_slice(json).map_err(|e| Error::Header(e.to_string()))?;
    Ok((header, r))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::UnexpectedEof { what: what.into() });
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub(crate) fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n * 4, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }

    pub(crate) fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n * 8, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn i32s(&mut self, n: usize, what: &str) -> Result<Vec<i32>> {
        let bytes = self.take(n * 4, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn finish(self, what: &str) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(Error::Header(format!("{} trailing bytes after {what}", self.buf.len())))
        }
    }
}

pub(crate) fn push_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub(crate) fn push_labels(out: &mut Vec<u8>, labels: &[usize]) {
    for &l in labels {
        out.extend_from_slice(&(l as i32).to_le_bytes());
    }
}

pub(crate) fn labels_from_i32(raw: Vec<i32>, classes: usize) -> Result<Vec<usize>> {
    raw.into_iter()
        .map(|l| {
            usize::try_from(l)
                .ok()
                .filter(|&u| u < classes)
                .ok_or_else(|| Error::Header(format!("label {l} outside [0, {classes})")))
        })
        .collect()
}
