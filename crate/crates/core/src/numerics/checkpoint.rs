//! Flat binary container of named tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "LSTEPCKP"
//! version u32
//! count   u32
//! repeated `count` times, sorted by name:
//!   name_len u32, name utf-8 bytes
//!   rank u32, dims u64 × rank
//!   values f64 × product(dims)
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::tensor::Tensor;
use super::NumericsError;

pub const MAGIC: &[u8; 8] = b"LSTEPCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    entries: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), NumericsError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, NumericsError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NumericsError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(NumericsError::Checkpoint("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(NumericsError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let count = cur.u32()?;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let name_len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| NumericsError::Checkpoint("tensor name is not utf-8".into()))?
                .to_string();
            let rank = cur.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(cur.u64()? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes")));
            }
            entries.insert(name, Tensor::new(shape, data)?);
        }
        if cur.pos != bytes.len() {
            return Err(NumericsError::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { entries })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NumericsError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NumericsError::Checkpoint("truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, NumericsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NumericsError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_deterministic_and_sorted() {
        let mut a = Checkpoint::new();
        a.insert("b", Tensor::vector(vec![1.0]));
        a.insert("a", Tensor::scalar(2.0));
        let mut b = Checkpoint::new();
        b.insert("a", Tensor::scalar(2.0));
        b.insert("b", Tensor::vector(vec![1.0]));
        assert_eq!(a.to_bytes(), b.to_bytes());
        let bytes = a.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        // first entry name
        assert_eq!(&bytes[20..21], b"a");
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let mut c = Checkpoint::new();
        c.insert("w", Tensor::zeros(&[2, 2]));
        let bytes = c.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(values in proptest::collection::vec(-1e6f64..1e6, 0..24), rows in 1usize..4) {
            let cols = values.len() / rows;
            let t = Tensor::matrix(rows, cols, values[..rows * cols].to_vec()).unwrap();
            let mut c = Checkpoint::new();
            c.insert("param.w", t);
            c.insert("scalar", Tensor::scalar(0.5));
            let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
