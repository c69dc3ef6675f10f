//! IDX container (big-endian header, `u8` payload), optionally gzipped.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{PcError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Reads a file, inflating it first if it starts with the gzip magic.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| PcError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| PcError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(buf: &[u8], offset: usize, path: &Path) -> Result<u32> {
    if buf.len() < offset + 4 {
        return Err(PcError::Truncated {
            path: path.to_path_buf(),
            needed: offset + 4,
            found: buf.len(),
        });
    }
    Ok(u32::from_be_bytes(buf[offset..offset + 4].try_into().unwrap()))
}

fn check_magic(buf: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(buf, 0, path)?;
    if found != expected {
        return Err(PcError::BadMagic {
            path: path.to_path_buf(),
            offset: 0,
            expected,
            found,
        });
    }
    Ok(())
}

fn payload<'a>(buf: &'a [u8], header: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    let needed = header + len;
    if buf.len() < needed {
        return Err(PcError::Truncated {
            path: path.to_path_buf(),
            needed,
            found: buf.len(),
        });
    }
    if buf.len() > needed {
        return Err(PcError::Parse {
            path: path.to_path_buf(),
            offset: needed,
            msg: format!("{} trailing bytes after payload", buf.len() - needed),
        });
    }
    Ok(&buf[header..])
}

/// Raw image tensor: `count × rows × cols` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_images(buf: &[u8], path: &Path) -> Result<IdxImages> {
    check_magic(buf, IMAGES_MAGIC, path)?;
    let count = be_u32(buf, 4, path)? as usize;
    let rows = be_u32(buf, 8, path)? as usize;
    let cols = be_u32(buf, 12, path)? as usize;
    let pixels = payload(buf, 16, count * rows * cols, path)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_labels(buf: &[u8], path: &Path) -> Result<Vec<u8>> {
    check_magic(buf, LABELS_MAGIC, path)?;
    let count = be_u32(buf, 4, path)? as usize;
    Ok(payload(buf, 8, count, path)?.to_vec())
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
