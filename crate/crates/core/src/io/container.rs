//! Header-plus-payload container shared by the binary file formats.
//!
//! Layout: `u64` little-endian header length `H`, then `H` bytes of UTF-8
//! JSON, then the raw little-endian payload.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn encode<H: Serialize>(header: &H, payload: &[u8]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header).map_err(|e| Error::invalid(format!("header encoding: {e}")))?;
    let mut out = Vec::with_capacity(8 + json.len() + payload.len());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(payload);
    Ok(out)
}

pub fn decode<'a, H: DeserializeOwned>(what: &str, bytes: &'a [u8]) -> Result<(H, &'a [u8])> {
    if bytes.len() < 8 {
        return Err(Error::load(what, "file shorter than the 8-byte header length"));
    }
    let len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let end = 8usize
        .checked_add(usize::try_from(len).map_err(|_| Error::load(what, "header length overflows"))?)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::load(what, format!("header length {len} exceeds file size {}", bytes.len())))?;
    let header = serde_json::from_slice(&bytes[8..end])
        .map_err(|e| Error::load(what, format!("malformed header: {e}")))?;
    Ok((header, &bytes[end..]))
}

/// Sequential reader over payload blocks.
pub struct BlockReader<'a> {
    what: &'a str,
    data: &'a [u8],
    pos: usize,
}

impl<'a> BlockReader<'a> {
    pub fn new(what: &'a str, data: &'a [u8]) -> Self {
        BlockReader { what, data, pos: 0 }
    }

    fn take(&mut self, block: &str, bytes: usize) -> Result<&'a [u8]> {
        let remaining = self.data.len() - self.pos;
        if remaining < bytes {
            return Err(Error::load(
                self.what,
                format!("block '{block}' is truncated: needs {bytes} bytes, {remaining} left"),
            ));
        }
        let s = &self.data[self.pos..self.pos + bytes];
        self.pos += bytes;
        Ok(s)
    }

    pub fn f32s(&mut self, block: &str, count: usize) -> Result<Vec<f32>> {
        let raw = self.take(block, count * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn u16s(&mut self, block: &str, count: usize) -> Result<Vec<u16>> {
        let raw = self.take(block, count * 2)?;
        Ok(raw
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn finish(self) -> Result<()> {
        let extra = self.data.len() - self.pos;
        if extra != 0 {
            return Err(Error::load(self.what, format!("{extra} unexpected trailing payload bytes")));
        }
        Ok(())
    }
}

pub fn push_f32s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f32>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn push_u16s(out: &mut Vec<u8>, values: impl IntoIterator<Item = u16>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}
