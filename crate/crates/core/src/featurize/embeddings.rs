//! Precomputed content-embedding tables.
//!
//! Two on-disk encodings are accepted:
//!
//! ```text
//! EMBTAB v1 <dim> <count>
//! <comment_id>\t<base64 of dim little-endian f32 values>
//! ...
//! ```
//!
//! or JSON lines of the form `{"id": "...", "v": [..]}`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const MAGIC: &str = "EMBTAB";
const VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Embtab,
    Jsonl,
}

/// Fixed-width vectors keyed by comment id, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("embedding dim must be positive".into()));
        }
        Ok(EmbeddingTable { dim, ids: Vec::new(), index: HashMap::new(), data: Vec::new() })
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: &[f32]) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::Format(format!("vector for {id:?} has length {}, expected {}", vector.len(), self.dim)));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("vector for {id:?} has a non-finite entry")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::Format(format!("duplicate embedding id {id:?}")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
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

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    v: Vec<f64>,
}

pub fn write_embeddings(path: impl AsRef<Path>, table: &EmbeddingTable, format: EmbeddingFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    match format {
        EmbeddingFormat::Embtab => {
            writeln!(out, "{MAGIC} {VERSION} {} {}", table.dim, table.len()).map_err(io)?;
            let mut buf = Vec::with_capacity(table.dim * 4);
            for id in &table.ids {
                buf.clear();
                for v in table.get(id).unwrap() {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                writeln!(out, "{id}\t{}", STANDARD.encode(&buf)).map_err(io)?;
            }
        }
        EmbeddingFormat::Jsonl => {
            for id in &table.ids {
                let rec =
                    JsonRecord { id: id.clone(), v: table.get(id).unwrap().iter().map(|&x| f64::from(x)).collect() };
                serde_json::to_writer(&mut out, &rec)?;
                out.write_all(b"\n").map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

/// Load and validate an embedding table; the format is detected from the
/// first line.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::Format(format!("{}: empty embedding file", path.display()))),
    };
    let fmt_err = |m: String| Error::Format(format!("{}: {m}", path.display()));
    if first.starts_with(MAGIC) {
        let parts: Vec<&str> = first.split_whitespace().collect();
        let (dim, count) = match parts.as_slice() {
            [MAGIC, VERSION, dim, count] => (
                dim.parse::<usize>().map_err(|_| fmt_err(format!("bad dim {dim:?}")))?,
                count.parse::<usize>().map_err(|_| fmt_err(format!("bad count {count:?}")))?,
            ),
            _ => return Err(fmt_err(format!("unsupported header {first:?}"))),
        };
        let mut table = EmbeddingTable::new(dim)?;
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let (id, blob) = line.split_once('\t').ok_or_else(|| fmt_err(format!("record without tab: {line:?}")))?;
            let bytes = STANDARD.decode(blob.trim()).map_err(|e| fmt_err(format!("comment {id}: bad base64 ({e})")))?;
            if bytes.len() != dim * 4 {
                return Err(fmt_err(format!(
                    "comment {id}: dim mismatch ({} values, header says {dim})",
                    bytes.len() / 4
                )));
            }
            let v: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            table.insert(id, &v).map_err(|e| fmt_err(format!("comment {id}: {e}")))?;
        }
        if table.len() != count {
            return Err(fmt_err(format!("header count {count} but {} records", table.len())));
        }
        Ok(table)
    } else {
        let mut table: Option<EmbeddingTable> = None;
        for line in std::iter::once(Ok(first)).chain(lines) {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: JsonRecord = serde_json::from_str(&line)?;
            let t = match table.as_mut() {
                Some(t) => t,
                None => table.insert(EmbeddingTable::new(rec.v.len())?),
            };
            let v: Vec<f32> = rec.v.iter().map(|&x| x as f32).collect();
            t.insert(rec.id.clone(), &v).map_err(|e| fmt_err(format!("comment {}: {e}", rec.id)))?;
        }
        table.ok_or_else(|| fmt_err("no records".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn table() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(3).unwrap();
        for i in 0..5 {
            let x = i as f32;
            t.insert(format!("c{i}"), &[x, -x / 3.0, 1e-7 * x]).unwrap();
        }
        t
    }

    #[test]
    fn round_trip_both_formats() {
        let t = table();
        for fmt in [EmbeddingFormat::Embtab, EmbeddingFormat::Jsonl] {
            let f = tempfile::NamedTempFile::new().unwrap();
            write_embeddings(f.path(), &t, fmt).unwrap();
            let back = load_embeddings(f.path()).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn header_is_exact() {
        let f = tempfile::NamedTempFile::new().unwrap();
        write_embeddings(f.path(), &table(), EmbeddingFormat::Embtab).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert!(text.starts_with("EMBTAB v1 3 5\nc0\t"));
    }

    #[test]
    fn nan_names_comment() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        let blob: Vec<u8> = [1.0f32, f32::NAN].iter().flat_map(|v| v.to_le_bytes()).collect();
        writeln!(f, "EMBTAB v1 2 1\nbad_one\t{}", STANDARD.encode(blob)).unwrap();
        let err = load_embeddings(f.path()).unwrap_err().to_string();
        assert!(err.contains("bad_one"), "{err}");

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{\"id\":\"a\",\"v\":[1,2]}}\n{{\"id\":\"b\",\"v\":[1]}}").unwrap();
        let err = load_embeddings(f.path()).unwrap_err().to_string();
        assert!(err.contains("comment b"), "{err}");
    }

    #[test]
    fn dim_mismatch_and_count() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        let blob: Vec<u8> = [1.0f32].iter().flat_map(|v| v.to_le_bytes()).collect();
        writeln!(f, "EMBTAB v1 2 1\nshort\t{}", STANDARD.encode(&blob)).unwrap();
        assert!(load_embeddings(f.path()).unwrap_err().to_string().contains("short"));

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "EMBTAB v1 1 2\nonly\t{}", STANDARD.encode(&blob)).unwrap();
        assert!(load_embeddings(f.path()).is_err());
    }
}
