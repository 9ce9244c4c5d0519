//! Model checkpoints as a sequence of `PARB` blocks.
//!
//! The first block holds metadata: zero-width rows whose ids are
//! `meta:<key>=<value>`. Every following block is one named tensor with row
//! ids `<name>:<row>`. Values are stored as `f32` like any other `PARB`
//! table.

use std::collections::BTreeMap;
use std::str::FromStr;

use super::embeddings::{decode_blocks, encode_block};
use crate::error::{Error, Result};
use crate::Matrix;

const META: &str = "meta";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    meta: BTreeMap<String, String>,
    tensors: BTreeMap<String, Matrix>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn meta_entries(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn parse_meta<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .meta(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("metadata `{key}` has invalid value `{raw}`")))
    }

    pub fn insert(&mut self, name: &str, tensor: Matrix) {
        self.tensors.insert(name.to_string(), tensor);
    }

    pub fn tensor(&self, name: &str) -> Result<&Matrix> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn has_tensor(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let mut meta_ids = Vec::with_capacity(self.meta.len());
        for (k, v) in &self.meta {
            if k.contains('=') || k.contains(':') {
                return Err(Error::Checkpoint(format!("invalid metadata key `{k}`")));
            }
            meta_ids.push(format!("{META}:{k}={v}"));
        }
        let empty = Matrix::zeros(meta_ids.len(), 0);
        out.extend(encode_block(&meta_ids, &empty)?);
        for (name, tensor) in &self.tensors {
            if name.contains(':') || name == META || tensor.rows() == 0 {
                return Err(Error::Checkpoint(format!("cannot store tensor `{name}`")));
            }
            let ids: Vec<String> = (0..tensor.rows()).map(|r| format!("{name}:{r}")).collect();
            out.extend(encode_block(&ids, tensor)?);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut blocks = decode_blocks(bytes)?.into_iter();
        let (meta_ids, _) = blocks
            .next()
            .ok_or_else(|| Error::Checkpoint("empty checkpoint".into()))?;
        let mut ckpt = Self::new();
        for id in meta_ids {
            let entry = id
                .strip_prefix("meta:")
                .and_then(|rest| rest.split_once('='))
                .ok_or_else(|| Error::Checkpoint(format!("malformed metadata row `{id}`")))?;
            ckpt.meta.insert(entry.0.to_string(), entry.1.to_string());
        }
        for (ids, tensor) in blocks {
            let name = ids
                .first()
                .and_then(|id| id.rsplit_once(':'))
                .map(|(n, _)| n.to_string())
                .ok_or_else(|| Error::Checkpoint("tensor block without rows".into()))?;
            for (r, id) in ids.iter().enumerate() {
                if *id != format!("{name}:{r}") {
                    return Err(Error::Checkpoint(format!("unexpected row id `{id}` in `{name}`")));
                }
            }
            ckpt.tensors.insert(name, tensor);
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut c = Checkpoint::new();
        c.set_meta("model", "shallow");
        c.set_meta("margin", 0.2);
        c.insert("w", Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]).unwrap());
        c.insert("b", Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let bytes = c.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"PARB");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.parse_meta::<f64>("margin").unwrap(), 0.2);
        assert!(back.tensor("missing").is_err());
        assert!(back.parse_meta::<f64>("model").is_err());
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::from_bytes(b"").is_err());
        assert!(Checkpoint::from_bytes(b"XXXX").is_err());
    }
}
