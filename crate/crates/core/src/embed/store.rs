//! Binary embedding store.
//!
//! ```text
//! magic      4 bytes   "EMB1"
//! version    u16 LE
//! dim        u32 LE
//! count      u64 LE
//! tag        u16 LE length + UTF-8 bytes
//! count × { id: u16 LE length + UTF-8 bytes, dim × f32 LE }
//! ```
//!
//! Records are written in id order, so equal stores produce equal files.

use std::io::{BufWriter, Write};
use std::path::Path;

use super::{EmbedError, Embedding, EmbeddingStore, Result};

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const FORMAT_VERSION: u16 = 1;

fn format_err(msg: impl Into<String>) -> EmbedError {
    EmbedError::Format(msg.into())
}

fn write_str(out: &mut impl Write, s: &str, what: &str) -> Result<std::io::Result<()>> {
    let len = u16::try_from(s.len()).map_err(|_| format_err(format!("{what} longer than 65535 bytes")))?;
    Ok(out
        .write_all(&len.to_le_bytes())
        .and_then(|_| out.write_all(s.as_bytes())))
}

pub fn save_embeddings(store: &EmbeddingStore, path: &Path) -> Result<()> {
    let io_err = |source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    };
    let dim = u32::try_from(store.dim()).map_err(|_| format_err("dimension exceeds u32"))?;
    let mut out = BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    out.write_all(&MAGIC).map_err(io_err)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io_err)?;
    out.write_all(&dim.to_le_bytes()).map_err(io_err)?;
    out.write_all(&(store.len() as u64).to_le_bytes()).map_err(io_err)?;
    write_str(&mut out, store.provider_tag(), "provider tag")?.map_err(io_err)?;
    for (id, emb) in store.iter() {
        write_str(&mut out, id, "review id")?.map_err(io_err)?;
        for x in &emb.vector {
            out.write_all(&x.to_le_bytes()).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| format_err(format!("truncated file: needed {n} bytes at offset {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| format_err("invalid UTF-8 string"))
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore> {
    let buf = std::fs::read(path).map_err(|source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(4).map_err(|_| format_err("bad magic"))? != MAGIC {
        return Err(format_err("bad magic"));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let dim = r.u32()? as usize;
    let count = r.u64()?;
    let tag = r.string()?;
    if dim == 0 && count > 0 {
        return Err(format_err("zero dimension with non-empty store"));
    }
    let mut store = EmbeddingStore::new(dim, tag);
    for _ in 0..count {
        let id = r.string()?;
        let raw = r.take(dim * 4)?;
        let vector = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.insert(id, Embedding::new(vector))?;
    }
    if r.pos != buf.len() {
        return Err(format_err(format!(
            "{} trailing bytes after {count} records of dimension {dim}",
            buf.len() - r.pos
        )));
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingStore {
        let mut s = EmbeddingStore::new(3, "test:seed=1");
        s.insert("b", Embedding::new(vec![0.1, -0.0, f32::MIN_POSITIVE]))
            .unwrap();
        s.insert("a", Embedding::new(vec![1.0, 2.5, -3.25])).unwrap();
        s.insert("é", Embedding::new(vec![f32::MAX, f32::MIN, 1e-40])).unwrap();
        s
    }

    #[test]
    fn round_trip_three_vectors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.emb");
        let s = sample();
        save_embeddings(&s, &p).unwrap();
        let back = load_embeddings(&p).unwrap();
        assert_eq!(back, s);
        for (id, e) in s.iter() {
            let bits: Vec<u32> = e.vector.iter().map(|x| x.to_bits()).collect();
            let got: Vec<u32> = back.get(id).unwrap().vector.iter().map(|x| x.to_bits()).collect();
            assert_eq!(bits, got);
        }
    }

    #[test]
    fn header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.emb");
        save_embeddings(&EmbeddingStore::new(2, "x"), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(
            bytes,
            [b'E', b'M', b'B', b'1', 1, 0, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, b'x']
        );
    }

    #[test]
    fn wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.emb");
        save_embeddings(&sample(), &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] = b'X';
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(load_embeddings(&p), Err(EmbedError::Format(m)) if m.contains("magic")));
    }

    #[test]
    fn truncated_and_trailing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.emb");
        save_embeddings(&sample(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_embeddings(&p), Err(EmbedError::Format(m)) if m.contains("truncated")));
        let mut longer = bytes.clone();
        longer.extend_from_slice(&[0, 0, 0, 0]);
        std::fs::write(&p, longer).unwrap();
        assert!(matches!(load_embeddings(&p), Err(EmbedError::Format(m)) if m.contains("trailing")));
    }
}
