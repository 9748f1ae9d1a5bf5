// SPDX-License-Identifier: Apache-2.0

//! The `.glmc` binary container.
//!
//! Little-endian throughout:
//!
//! ```text
//! "GLMC" | version u32 | K u32 | C u32 | N u32
//! K x (len u32, utf-8 class name)
//! K x C f32 text matrix, row-major
//! N x (len u32, utf-8 image id | H u16 | W u16 | C f32 global | H*W x C f32 local)
//! version 2 only: "META" | M u32 | M x (len u32 key, len u32 value)
//! ```
//!
//! A set without metadata is written as version 1: exactly the header, names,
//! text matrix and image records. A set with metadata is written as version 2,
//! which requires the trailer, so cutting a file at the trailer boundary is
//! still reported as truncation.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{ClassVocabulary, EmbeddingSet, ImageFeatures, Result, StoreError, TextFeatures};

pub const MAGIC: [u8; 4] = *b"GLMC";
pub const META_TAG: [u8; 4] = *b"META";
pub const FORMAT_VERSION: u32 = 1;
pub const META_FORMAT_VERSION: u32 = 2;

pub fn write_embedding_set<W: Write>(set: &EmbeddingSet, mut sink: W) -> Result<()> {
    set.validate()?;
    let mut buf = Vec::with_capacity(estimated_size(set));
    buf.extend_from_slice(&MAGIC);
    let version = if set.meta.is_empty() {
        FORMAT_VERSION
    } else {
        META_FORMAT_VERSION
    };
    put_u32(&mut buf, version);
    put_u32(&mut buf, count_u32(set.text.num_classes(), "class count")?);
    put_u32(&mut buf, count_u32(set.text.dim, "dimensionality")?);
    put_u32(&mut buf, count_u32(set.images.len(), "image count")?);
    for name in &set.text.vocabulary.classes {
        put_str(&mut buf, name)?;
    }
    put_f32s(&mut buf, &set.text.matrix);
    for image in &set.images {
        put_str(&mut buf, &image.image_id)?;
        buf.extend_from_slice(&image.height.to_le_bytes());
        buf.extend_from_slice(&image.width.to_le_bytes());
        put_f32s(&mut buf, &image.global);
        put_f32s(&mut buf, &image.local);
    }
    if !set.meta.is_empty() {
        buf.extend_from_slice(&META_TAG);
        put_u32(&mut buf, count_u32(set.meta.len(), "meta count")?);
        for (key, value) in &set.meta {
            put_str(&mut buf, key)?;
            put_str(&mut buf, value)?;
        }
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(())
}

pub fn read_embedding_set<R: Read>(mut source: R) -> Result<EmbeddingSet> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };

    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(StoreError::Format(format!(
            "bad magic {magic:02x?}, expected \"GLMC\""
        )));
    }
    let version = cur.u32("version")?;
    if version != FORMAT_VERSION && version != META_FORMAT_VERSION {
        return Err(StoreError::Format(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION} or {META_FORMAT_VERSION}"
        )));
    }
    let k = cur.u32("class count")? as usize;
    let c = cur.u32("dimensionality")? as usize;
    let n = cur.u32("image count")? as usize;

    let mut classes = Vec::with_capacity(k.min(cur.remaining()));
    for i in 0..k {
        classes.push(cur.string(&format!("class name {i}"))?);
    }
    let text_len = checked_len(k, c, "text matrix")?;
    let matrix = cur.f32s(text_len, "text matrix")?;
    let text = TextFeatures {
        vocabulary: ClassVocabulary { classes },
        dim: c,
        matrix,
    };
    text.validate()?;

    let mut images = Vec::with_capacity(n.min(cur.remaining()));
    for i in 0..n {
        let image_id = cur.string(&format!("image {i} id"))?;
        let height = cur.u16(&format!("image {image_id} height"))?;
        let width = cur.u16(&format!("image {image_id} width"))?;
        let global = cur.f32s(c, &format!("image {image_id} global feature"))?;
        let regions = usize::from(height) * usize::from(width);
        let local_len = checked_len(regions, c, "local feature map")?;
        let local = cur.f32s(local_len, &format!("image {image_id} local feature map"))?;
        images.push(ImageFeatures {
            image_id,
            height,
            width,
            global,
            local,
        });
    }

    let mut meta = BTreeMap::new();
    if version == META_FORMAT_VERSION {
        let tag = cur.take(4, "metadata tag")?;
        if tag != META_TAG {
            return Err(StoreError::Format(format!(
                "expected metadata tag \"META\" after image records, found {tag:02x?}"
            )));
        }
        let m = cur.u32("metadata count")?;
        for i in 0..m {
            let key = cur.string(&format!("metadata key {i}"))?;
            let value = cur.string(&format!("metadata value {i}"))?;
            meta.insert(key, value);
        }
    }
    if cur.remaining() > 0 {
        return Err(StoreError::Format(format!(
            "{} trailing bytes after the last record",
            cur.remaining()
        )));
    }

    let set = EmbeddingSet { text, images, meta };
    set.validate()?;
    Ok(set)
}

fn estimated_size(set: &EmbeddingSet) -> usize {
    let floats: usize = set.text.matrix.len()
        + set
            .images
            .iter()
            .map(|img| img.global.len() + img.local.len())
            .sum::<usize>();
    20 + 4 * floats + 64 * (set.images.len() + set.text.num_classes())
}

fn count_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| StoreError::validation(what, format!("{n} exceeds u32 range")))
}

fn checked_len(rows: usize, cols: usize, section: &str) -> Result<usize> {
    rows.checked_mul(cols)
        .and_then(|n| n.checked_mul(4).map(|_| n))
        .ok_or_else(|| StoreError::Format(format!("{section} size {rows} x {cols} overflows")))
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    put_u32(buf, count_u32(s.len(), "string length")?);
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_f32s(buf: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, section: &str) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(StoreError::Truncated {
                section: section.to_string(),
                expected: self.pos as u64 + n as u64,
                actual: self.bytes.len() as u64,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, section: &str) -> Result<u16> {
        let b = self.take(2, section)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, section: &str) -> Result<u32> {
        let b = self.take(4, section)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, section: &str) -> Result<String> {
        let len = self.u32(section)? as usize;
        let raw = self.take(len, section)?;
        String::from_utf8(raw.to_vec())
            .map_err(|e| StoreError::Format(format!("{section} is not valid UTF-8: {e}")))
    }

    fn f32s(&mut self, count: usize, section: &str) -> Result<Vec<f32>> {
        let raw = self.take(count * 4, section)?;
        Ok(raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }
}
