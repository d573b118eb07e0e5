//! `GLRE1` embedding files: precomputed local + global features keyed by
//! study id.
//!
//! Layout (little-endian): magic `GLRE1`; u32 record count; per record a
//! u16-length UTF-8 study id, u8 modality (0 image, 1 text), u32 local row
//! count, u32 D, the local rows as f32 row-major, then D f32 global values.

use std::collections::BTreeMap;
use std::path::Path;

use super::{LocalGlobalFeatures, Modality};
use crate::binio::{checked_u32, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const GLRE_MAGIC: &[u8; 5] = b"GLRE1";

/// Serializes `(study id, features)` records in the given order.
pub fn write_glre(records: &[(String, LocalGlobalFeatures)]) -> Result<Vec<u8>> {
    let mut w = ByteWriter::default();
    w.bytes(GLRE_MAGIC);
    w.u32(checked_u32(records.len(), "record count")?);
    for (id, f) in records {
        w.short_string(id)?;
        w.u8(match f.modality {
            Modality::Image => 0,
            Modality::Text => 1,
        });
        let (rows, d) = f.local.dims();
        if f.global.numel() != d {
            return Err(Error::dim("GLRE record", f.local.shape(), f.global.shape()));
        }
        w.u32(checked_u32(rows, "local row count")?);
        w.u32(checked_u32(d, "dimension")?);
        for &v in f.local.data() {
            w.f32(v as f32);
        }
        for &v in f.global.data() {
            w.f32(v as f32);
        }
    }
    Ok(w.buf)
}

/// Parses a GLRE1 buffer, preserving record order and raw (f32) values.
pub fn read_glre(bytes: &[u8]) -> Result<Vec<(String, LocalGlobalFeatures)>> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(5, "magic")?;
    if magic != GLRE_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic {:?}, expected GLRE1", String::from_utf8_lossy(magic)),
        });
    }
    let count = r.u32("record count")? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    let mut dim: Option<usize> = None;
    for _ in 0..count {
        let id = r.short_string("study id")?;
        let modality = match r.u8("modality")? {
            0 => Modality::Image,
            1 => Modality::Text,
            other => return r.fail(format!("unknown modality tag {other}")),
        };
        let rows = r.u32("local row count")? as usize;
        let d = r.u32("dimension")? as usize;
        if rows == 0 || d == 0 {
            return r.fail(format!("record {id:?} has empty features ({rows} x {d})"));
        }
        match dim {
            Some(expected) if expected != d => {
                return Err(Error::Consistency(format!(
                    "record {id:?} has dimension {d}, earlier records have {expected}"
                )))
            }
            _ => dim = Some(d),
        }
        let mut local = Vec::with_capacity(rows * d);
        for _ in 0..rows * d {
            local.push(r.f32("local features")? as f64);
        }
        let mut global = Vec::with_capacity(d);
        for _ in 0..d {
            global.push(r.f32("global feature")? as f64);
        }
        out.push((
            id,
            LocalGlobalFeatures {
                local: Tensor::matrix(rows, d, local)?,
                global: Tensor::vector(global)?,
                modality,
            },
        ));
    }
    if !r.is_at_end() {
        return r.fail("trailing bytes after last record");
    }
    Ok(out)
}

/// Loads a GLRE1 file into a map keyed by study id, re-normalizing every
/// local row and the global vector.
pub fn load_external_embeddings(path: &Path) -> Result<BTreeMap<String, LocalGlobalFeatures>> {
    let records = read_glre(&std::fs::read(path)?)?;
    let mut map = BTreeMap::new();
    for (id, f) in records {
        let renorm = |t: &Tensor| {
            t.l2_normalize_rows().map_err(|_| {
                Error::Consistency(format!("record {id:?} contains a zero-norm feature"))
            })
        };
        let feats = LocalGlobalFeatures {
            local: renorm(&f.local)?,
            global: renorm(&f.global)?,
            modality: f.modality,
        };
        if map.insert(id.clone(), feats).is_some() {
            return Err(Error::Consistency(format!("duplicate study id {id:?}")));
        }
    }
    Ok(map)
}
