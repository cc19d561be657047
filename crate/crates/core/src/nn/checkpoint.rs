//! Flat binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "ADSC" | version u32 | count u32
//! repeated count times:
//!   name_len u32 | name bytes (UTF-8) | rows u32 | cols u32 | rows*cols f64
//! ```

use super::{Matrix, ParamSet};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"ADSC";
pub const VERSION: u32 = 1;

pub fn encode<'a>(entries: impl IntoIterator<Item = (&'a str, &'a Matrix)>) -> Vec<u8> {
    let entries: Vec<_> = entries.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, m) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Truncated(what));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Matrix)>> {
    let mut r = Reader { buf: bytes };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            expected: MAGIC,
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = r.u32("count")? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|e| Error::Layout(format!("parameter name is not UTF-8: {e}")))?
            .to_owned();
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let raw = r.take(rows * cols * 8, "values")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, Matrix::from_vec(rows, cols, data)));
    }
    if !r.buf.is_empty() {
        return Err(Error::Layout(format!("{} trailing bytes", r.buf.len())));
    }
    Ok(out)
}

pub fn encode_params(params: &ParamSet) -> Vec<u8> {
    encode(params.names().iter().map(String::as_str).zip(params.values()))
}

/// Overwrites `params` with the matching entries of a decoded checkpoint.
/// Every parameter must be present with the same shape.
pub fn load_into(params: &mut ParamSet, entries: &[(String, Matrix)]) -> Result<()> {
    for id in params.ids().collect::<Vec<_>>() {
        let name = params.name(id).to_owned();
        let (_, m) = entries
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Layout(format!("missing parameter {name:?}")))?;
        let want = params.value(id).shape();
        if m.shape() != want {
            return Err(Error::Layout(format!(
                "parameter {name:?} has shape {:?}, expected {:?}",
                m.shape(),
                want
            )));
        }
        params.value_mut(id).as_mut_slice().copy_from_slice(m.as_slice());
    }
    Ok(())
}
