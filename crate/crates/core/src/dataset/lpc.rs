//! The `LPC1` labeled point cloud format.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! "LPC1"                       4 bytes
//! flags                        u16   bit 0: ring/column ids present
//! class count                  u16
//! point count                  u64
//! class names                  per class: u16 byte length + UTF-8
//! points                       per point: x, y, z f32; label u16;
//!                                          ring u16, column u16 if bit 0
//! ```
//!
//! Coordinates are stored as f32; a cloud read from disk writes back to the
//! identical bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::lidar::LabeledPointCloud;

pub const MAGIC: &[u8; 4] = b"LPC1";
pub const FLAG_RING_COLUMN: u16 = 1;

pub fn encode_lpc(cloud: &LabeledPointCloud) -> Result<Vec<u8>> {
    cloud.validate()?;
    let with_ids = cloud.rings.is_some();
    let per_point = if with_ids { 18 } else { 14 };
    let names_len: usize = cloud.class_names.iter().map(|n| 2 + n.len()).sum();
    let mut out = Vec::with_capacity(16 + names_len + per_point * cloud.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(if with_ids { FLAG_RING_COLUMN } else { 0 }).to_le_bytes());
    out.extend_from_slice(&(cloud.class_names.len() as u16).to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    for name in &cloud.class_names {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::InvalidCloud(format!("class name of {} bytes is too long", name.len())))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        out.extend_from_slice(&cloud.labels[i].to_le_bytes());
        if let (Some(r), Some(c)) = (&cloud.rings, &cloud.columns) {
            out.extend_from_slice(&r[i].to_le_bytes());
            out.extend_from_slice(&c[i].to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_lpc(cloud: &LabeledPointCloud, path: &Path) -> Result<()> {
    let bytes = encode_lpc(cloud)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_lpc(path: &Path) -> Result<LabeledPointCloud> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_lpc(&bytes, path)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn corrupt(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::CorruptLpc {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| self.corrupt(self.bytes.len(), format!("truncated while reading {what}")))?;
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Decodes and validates an `LPC1` buffer. `path` only labels errors.
pub fn decode_lpc(bytes: &[u8], path: &Path) -> Result<LabeledPointCloud> {
    let mut cur = Cursor { bytes, pos: 0, path };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(cur.corrupt(0, format!("bad magic {magic:?}")));
    }
    let flags = cur.u16("flags")?;
    if flags & !FLAG_RING_COLUMN != 0 {
        return Err(cur.corrupt(4, format!("unknown flag bits {flags:#06x}")));
    }
    let with_ids = flags & FLAG_RING_COLUMN != 0;
    let class_count = cur.u16("class count")? as usize;
    let count_offset = cur.pos;
    let point_count = cur.u64("point count")?;
    let mut class_names = Vec::with_capacity(class_count);
    for i in 0..class_count {
        let len = cur.u16("class name length")? as usize;
        let start = cur.pos;
        let raw = cur.take(len, "class name")?;
        let name = std::str::from_utf8(raw).map_err(|_| cur.corrupt(start, format!("class name {i} is not UTF-8")))?;
        class_names.push(name.to_string());
    }
    let per_point: u64 = if with_ids { 18 } else { 14 };
    let body = (bytes.len() - cur.pos) as u64;
    let expected = point_count.checked_mul(per_point);
    if expected != Some(body) {
        let offset = if expected.is_some_and(|e| e < body) {
            cur.pos as u64 + expected.unwrap_or(0)
        } else {
            bytes.len() as u64
        };
        return Err(Error::CorruptLpc {
            path: path.to_path_buf(),
            offset,
            message: format!(
                "header at byte {count_offset} declares {point_count} points ({} bytes) but body has {body} bytes",
                expected.map_or("overflowing".to_string(), |e| e.to_string())
            ),
        });
    }
    let n = point_count as usize;
    let mut cloud = LabeledPointCloud {
        points: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        rings: with_ids.then(|| Vec::with_capacity(n)),
        columns: with_ids.then(|| Vec::with_capacity(n)),
        class_names,
    };
    for _ in 0..n {
        let x = cur.f32("x")?;
        let y = cur.f32("y")?;
        let z = cur.f32("z")?;
        cloud.points.push(Vec3::new(x as f64, y as f64, z as f64));
        let at = cur.pos;
        let label = cur.u16("label")?;
        if label as usize >= class_count {
            return Err(cur.corrupt(at, format!("label {label} >= class count {class_count}")));
        }
        cloud.labels.push(label);
        if with_ids {
            let r = cur.u16("ring")?;
            let c = cur.u16("column")?;
            cloud.rings.as_mut().unwrap().push(r);
            cloud.columns.as_mut().unwrap().push(c);
        }
    }
    Ok(cloud)
}
