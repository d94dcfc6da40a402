//! `WLCKPT1` checkpoint container.
//!
//! Layout (all integers u32 little-endian):
//!
//! ```text
//! "WLCKPT1" | count | { name_len | name (UTF-8) | rank | dims[rank] | f32 values } * count
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::tensor::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"WLCKPT1";

pub fn write_checkpoint<W: Write>(out: &mut W, tensors: &[(&str, &Tensor)]) -> std::io::Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in t.to_f32() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<Vec<(String, Tensor)>> {
    let mut r = ByteReader::new(input, "checkpoint");
    let magic = r.bytes(CHECKPOINT_MAGIC.len())?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format("checkpoint", "magic mismatch"));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let values = r.f32s(n)?;
        out.push((name, Tensor::from_f32(shape, &values)?));
    }
    Ok(out)
}

pub fn save_params(store: &ParamStore, path: &Path) -> Result<()> {
    let tensors: Vec<(&str, &Tensor)> = store
        .iter()
        .map(|(_, p)| (p.name.as_str(), &p.value))
        .collect();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &tensors).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Loads every parameter of `store` from `path`. Names and shapes must
/// match exactly; extra tensors in the file are an error too.
pub fn load_params(store: &mut ParamStore, path: &Path) -> Result<()> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let tensors = read_checkpoint(&mut std::io::BufReader::new(&mut file))?;
    if tensors.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "file has {} tensors, model expects {}",
            tensors.len(),
            store.len()
        )));
    }
    for (name, t) in tensors {
        let id = store
            .id(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {name}")))?;
        if store.value(id).shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "{name}: file shape {:?}, model shape {:?}",
                t.shape(),
                store.value(id).shape()
            )));
        }
        *store.value_mut(id) = t;
    }
    Ok(())
}

/// Little-endian reader shared by the binary formats.
pub(crate) struct ByteReader<'a, R: Read> {
    inner: &'a mut R,
    format: &'static str,
}

impl<'a, R: Read> ByteReader<'a, R> {
    pub(crate) fn new(inner: &'a mut R, format: &'static str) -> Self {
        ByteReader { inner, format }
    }

    pub(crate) fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::format(self.format, "unexpected end of file"))?;
        Ok(buf)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.bytes(n)?)
            .map_err(|_| Error::format(self.format, "name is not UTF-8"))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let b = self.bytes(n * 4)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[("ab", &t)]).unwrap();
        let mut expected = b"WLCKPT1".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(2u32.to_le_bytes());
        expected.extend(b"ab");
        expected.extend(2u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(2u32.to_le_bytes());
        expected.extend(1.0f32.to_le_bytes());
        expected.extend((-2.0f32).to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let err = read_checkpoint(&mut &b"WLCKPT2\0\0\0\0"[..]).unwrap_err();
        assert!(err.to_string().contains("magic"));
        let err = read_checkpoint(&mut &b"WLCKPT1\x01\0\0\0"[..]).unwrap_err();
        assert!(err.to_string().contains("end of file"));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.wlckpt");
        let mut a = ParamStore::new();
        a.add("w", Tensor::zeros(&[2, 3]));
        save_params(&a, &path).unwrap();
        let mut b = ParamStore::new();
        b.add("w", Tensor::zeros(&[3, 2]));
        assert!(matches!(load_params(&mut b, &path), Err(Error::Checkpoint(_))));
    }
}
