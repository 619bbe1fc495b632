//! Binary index snapshot.
//!
//! ```text
//! "ZFIX" | u16 version | u32 len + encoder id | u32 dimension | u32 count
//! count × (u64 community id | u8 category | u8 flags)
//! count × dimension × f32
//! count × (u32 len + UTF-8 summary)
//! ```
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{CommunityIndex, IndexEntry, IndexError};
use crate::numeric::Scalar;
use crate::taxonomy::Category;

pub const MAGIC: &[u8; 4] = b"ZFIX";
pub const VERSION: u16 = 1;
const FLAG_CATEGORY_LEVEL: u8 = 1;
/// Guards against absurd allocations from corrupted headers.
const MAX_STRING: u32 = 64 << 20;

fn err(e: impl std::fmt::Display) -> IndexError {
    IndexError::Snapshot(e.to_string())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<(), IndexError> {
    let len = u32::try_from(s.len()).map_err(|_| err("string too long"))?;
    w.write_u32::<LittleEndian>(len).map_err(err)?;
    w.write_all(s.as_bytes()).map_err(err)
}

fn read_str<R: Read>(r: &mut R) -> Result<String, IndexError> {
    let len = r.read_u32::<LittleEndian>().map_err(err)?;
    if len > MAX_STRING {
        return Err(err(format!("string length {len} exceeds limit")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf).map_err(err)?;
    String::from_utf8(buf).map_err(err)
}

impl<F: Scalar> CommunityIndex<F> {
    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> Result<(), IndexError> {
        w.write_all(MAGIC).map_err(err)?;
        w.write_u16::<LittleEndian>(VERSION).map_err(err)?;
        write_str(w, &self.encoder_id)?;
        let dim = u32::try_from(self.dimension).map_err(err)?;
        let count = u32::try_from(self.entries.len()).map_err(err)?;
        w.write_u32::<LittleEndian>(dim).map_err(err)?;
        w.write_u32::<LittleEndian>(count).map_err(err)?;
        for e in &self.entries {
            w.write_u64::<LittleEndian>(e.community_id as u64).map_err(err)?;
            w.write_u8(e.category.ordinal() as u8).map_err(err)?;
            w.write_u8(if e.category_level { FLAG_CATEGORY_LEVEL } else { 0 }).map_err(err)?;
        }
        for e in &self.entries {
            if e.vector.len() != self.dimension {
                return Err(IndexError::Dimension { expected: self.dimension, actual: e.vector.len() });
            }
            for &x in &e.vector {
                w.write_f32::<LittleEndian>(x.to_f32().unwrap_or(f32::NAN)).map_err(err)?;
            }
        }
        for e in &self.entries {
            write_str(w, &e.summary)?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Self, IndexError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(err)?;
        if &magic != MAGIC {
            return Err(err("bad magic bytes"));
        }
        let version = r.read_u16::<LittleEndian>().map_err(err)?;
        if version != VERSION {
            return Err(err(format!("unsupported snapshot version {version}")));
        }
        let encoder_id = read_str(r)?;
        let dimension = r.read_u32::<LittleEndian>().map_err(err)? as usize;
        let count = r.read_u32::<LittleEndian>().map_err(err)? as usize;
        let mut heads = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let id = r.read_u64::<LittleEndian>().map_err(err)? as usize;
            let cat = r.read_u8().map_err(err)?;
            let flags = r.read_u8().map_err(err)?;
            let category = Category::from_ordinal(cat as usize).ok_or_else(|| err(format!("bad category {cat}")))?;
            heads.push((id, category, flags & FLAG_CATEGORY_LEVEL != 0));
        }
        let mut vectors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let mut v = Vec::with_capacity(dimension.min(1 << 16));
            for _ in 0..dimension {
                v.push(F::lit(r.read_f32::<LittleEndian>().map_err(err)? as f64));
            }
            vectors.push(v);
        }
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for ((community_id, category, category_level), vector) in heads.into_iter().zip(vectors) {
            let summary = read_str(r)?;
            entries.push(IndexEntry { community_id, category, category_level, summary, vector });
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(err)?;
        if !rest.is_empty() {
            return Err(err(format!("{} trailing bytes", rest.len())));
        }
        Ok(CommunityIndex { entries, encoder_id, dimension })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CommunityIndex<f32> {
        CommunityIndex {
            entries: vec![
                IndexEntry {
                    community_id: 0,
                    category: Category::Disease,
                    category_level: true,
                    summary: "[Disease] 咳嗽".into(),
                    vector: vec![0.25, -1.5, 3.0],
                },
                IndexEntry {
                    community_id: 12,
                    category: Category::PreparationMethod,
                    category_level: false,
                    summary: "wine-frying".into(),
                    vector: vec![0.0, 1.0, 2.0],
                },
            ],
            encoder_id: "stub-trigram-3-1".into(),
            dimension: 3,
        }
    }

    #[test]
    fn round_trip_is_exact_for_f32() {
        let idx = sample();
        let mut buf = Vec::new();
        idx.write_snapshot(&mut buf).unwrap();
        assert_eq!(&buf[..4], MAGIC);
        let back = CommunityIndex::<f32>::read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(back, idx);
    }

    #[test]
    fn corruption_is_detected() {
        let mut buf = Vec::new();
        sample().write_snapshot(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(CommunityIndex::<f32>::read_snapshot(&mut bad.as_slice()).is_err());
        let truncated = &buf[..buf.len() - 3];
        assert!(CommunityIndex::<f32>::read_snapshot(&mut &truncated[..]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(CommunityIndex::<f32>::read_snapshot(&mut extra.as_slice()).is_err());
    }
}
