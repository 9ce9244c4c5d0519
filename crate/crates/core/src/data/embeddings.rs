//! Embedding tables in the `PARV1` text and `PARB` binary layouts.
//!
//! Text:
//!
//! ```text
//! PARV1 <n_items> <dim> <label>
//! <item_id> <v1> ... <v_dim>
//! ```
//!
//! Binary: magic `PARB`, little-endian `u32` item count and `u32` dim, then
//! per item a `u16` id length, the UTF-8 id and `dim` little-endian `f32`s.
//! Values are widened to `f64` on load.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::Matrix;

pub const TEXT_MAGIC: &str = "PARV1";
pub const BINARY_MAGIC: &[u8; 4] = b"PARB";

/// Item-indexed dense vectors of one pretrained representation.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    label: String,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Matrix,
}

impl EmbeddingTable {
    pub fn new(label: impl Into<String>, ids: Vec<String>, vectors: Matrix) -> Result<Self> {
        if ids.len() != vectors.rows() {
            return Err(Error::DimensionMismatch {
                context: "embedding ids vs rows",
                expected: ids.len(),
                actual: vectors.rows(),
            });
        }
        if !vectors.is_finite() {
            return Err(Error::NonFinite {
                context: "embedding table".into(),
            });
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Embedding(format!("duplicate item id `{id}`")));
            }
        }
        Ok(Self {
            label: label.into(),
            ids,
            index,
            vectors,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = label.into();
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn row_of(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.vectors.row(i))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Rows for `item_ids`, in order. Every id must be covered.
    pub fn align(&self, item_ids: &[String]) -> Result<Matrix> {
        let mut rows = Vec::with_capacity(item_ids.len());
        for id in item_ids {
            let &i = self
                .index
                .get(id)
                .ok_or_else(|| Error::UncoveredItem(id.clone()))?;
            rows.push(i);
        }
        Ok(self.vectors.select_rows(&rows))
    }

    /// Ids from `item_ids` that this table does not cover.
    pub fn uncovered<'a>(&self, item_ids: &'a [String]) -> Vec<&'a str> {
        item_ids
            .iter()
            .filter(|id| !self.index.contains_key(id.as_str()))
            .map(String::as_str)
            .collect()
    }

    /// Same ids, rows replaced.
    pub fn with_vectors(&self, vectors: Matrix) -> Result<Self> {
        Self::new(self.label.clone(), self.ids.clone(), vectors)
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TEXT_MAGIC} {} {} {}", self.len(), self.dim(), self.label)?;
        for (id, row) in self.ids.iter().zip(self.vectors.row_iter()) {
            out.write_all(id.as_bytes())?;
            for v in row {
                write!(out, " {v}")?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Writes the binary layout; values are narrowed to `f32`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&encode_block(&self.ids, &self.vectors)?)?;
        Ok(())
    }
}

/// Encodes one binary block.
pub(crate) fn encode_block(ids: &[String], vectors: &Matrix) -> Result<Vec<u8>> {
    let n = u32::try_from(ids.len()).map_err(|_| Error::Embedding("too many items".into()))?;
    let dim = u32::try_from(vectors.cols()).map_err(|_| Error::Embedding("dim too large".into()))?;
    let mut buf = Vec::with_capacity(12 + ids.len() * (8 + 4 * vectors.cols()));
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&dim.to_le_bytes());
    for (id, row) in ids.iter().zip(vectors.row_iter()) {
        let len = u16::try_from(id.len())
            .map_err(|_| Error::Embedding(format!("item id `{id}` longer than 65535 bytes")))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        for &v in row {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Embedding(format!(
                "truncated binary table at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Decodes consecutive binary blocks until the input is exhausted.
pub(crate) fn decode_blocks(bytes: &[u8]) -> Result<Vec<(Vec<String>, Matrix)>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let mut blocks = Vec::new();
    while cur.pos < bytes.len() {
        if cur.take(4)? != BINARY_MAGIC {
            return Err(Error::Embedding(format!("bad magic at byte {}", cur.pos - 4)));
        }
        let n = cur.u32()? as usize;
        let dim = cur.u32()? as usize;
        let mut ids = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let len = cur.u16()? as usize;
            let id = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| Error::Embedding("item id is not UTF-8".into()))?
                .to_string();
            for _ in 0..dim {
                let v = cur.f32()?;
                if !v.is_finite() {
                    return Err(Error::Embedding(format!("non-finite value for item `{id}`")));
                }
                data.push(f64::from(v));
            }
            ids.push(id);
        }
        blocks.push((ids, Matrix::new(n, dim, data)?));
    }
    Ok(blocks)
}

fn parse_text(text: &str) -> Result<EmbeddingTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::EmptyInput("embedding table"))?;
    let mut parts = header.split_whitespace();
    let bad_header = |m: &str| Error::Parse {
        line: 1,
        message: format!("header: {m}"),
    };
    if parts.next() != Some(TEXT_MAGIC) {
        return Err(bad_header("expected PARV1 magic"));
    }
    let n: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad_header("invalid item count"))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad_header("invalid dim"))?;
    let label = parts.collect::<Vec<_>>().join(" ");
    if label.is_empty() {
        return Err(bad_header("missing label"));
    }

    let mut ids = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    for (lineno, line) in lines {
        let mut fields = line.split_whitespace();
        let id = fields.next().unwrap_or_default().to_string();
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: lineno + 1,
                        message: format!("invalid value `{f}` for item `{id}`"),
                    })
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::Embedding(format!(
                "item `{id}` has {} values, expected {dim}",
                values.len()
            )));
        }
        ids.push(id);
        data.extend(values);
    }
    if ids.len() != n {
        return Err(Error::Embedding(format!(
            "header declares {n} items, found {}",
            ids.len()
        )));
    }
    EmbeddingTable::new(label, ids, Matrix::new(n, dim, data)?)
}

/// Loads a table, detecting the text or binary layout from the magic bytes.
/// Binary tables carry no label; theirs is left empty.
pub fn load_embeddings(bytes: &[u8]) -> Result<EmbeddingTable> {
    if bytes.starts_with(BINARY_MAGIC) {
        let mut blocks = decode_blocks(bytes)?;
        if blocks.len() != 1 {
            return Err(Error::Embedding(format!(
                "expected a single table, found {} blocks",
                blocks.len()
            )));
        }
        let (ids, vectors) = blocks.pop().unwrap();
        return EmbeddingTable::new(String::new(), ids, vectors);
    }
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Embedding("text table is not UTF-8".into()))?;
    parse_text(text)
}
