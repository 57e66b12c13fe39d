//! Binary parameter file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes   "KIWIPRM\0"
//! version   u32       CHECKPOINT_VERSION
//! count     u32       number of tensors
//! count times:
//!   name_len  u32
//!   name      name_len bytes, UTF-8
//!   rank      u32
//!   dims      rank x u64
//!   values    prod(dims) x f64 (IEEE-754 binary64)
//! ```
//!
//! Nothing may follow the last tensor.

use std::io::{Read, Write};

use super::{NumericsError, ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"KIWIPRM\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_params<W: Write>(store: &ParamStore, mut w: W) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (_, name, t) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn to_bytes(store: &ParamStore) -> Vec<u8> {
    let mut buf = Vec::new();
    write_params(store, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NumericsError> {
        if self.buf.len() - self.pos < n {
            return Err(NumericsError::Format(format!(
                "truncated parameter file: needed {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NumericsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NumericsError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<ParamStore, NumericsError> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err(NumericsError::Format("not a parameter file (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NumericsError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let count = c.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| NumericsError::Format("parameter name is not UTF-8".into()))?
            .to_string();
        if store.id(&name).is_some() {
            return Err(NumericsError::Format(format!("duplicate parameter {name}")));
        }
        let rank = c.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u64()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| NumericsError::Format(format!("shape overflow for {name}")))?;
        let raw = c.take(n.checked_mul(8).ok_or_else(|| NumericsError::Format("size overflow".into()))?)?;
        let values = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        store.insert(&name, Tensor::new(shape, values)?);
    }
    if c.pos != buf.len() {
        return Err(NumericsError::Format(format!(
            "{} trailing bytes after last tensor",
            buf.len() - c.pos
        )));
    }
    Ok(store)
}

pub fn read_params<R: Read>(mut r: R) -> Result<ParamStore, NumericsError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| NumericsError::Format(format!("reading parameter file: {e}")))?;
    from_bytes(&buf)
}

pub fn save(store: &ParamStore, path: &std::path::Path) -> std::io::Result<()> {
    let f = std::fs::File::create(path)?;
    write_params(store, std::io::BufWriter::new(f))
}

pub fn load(path: &std::path::Path) -> Result<ParamStore, NumericsError> {
    let buf = std::fs::read(path).map_err(|e| NumericsError::Format(format!("{}: {e}", path.display())))?;
    from_bytes(&buf)
}
