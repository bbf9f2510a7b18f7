//! Versioned binary tensor blobs.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"JSCK"            magic
//! u32                format version
//! u32 n, n bytes     UTF-8 config echo (TOML)
//! u32                tensor count
//! per tensor:
//!   u32 n, n bytes   UTF-8 name
//!   u32              rank
//!   u64 × rank       dimensions
//!   f64 × Π dims     values, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"JSCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, dims: Vec<u64>, data: Vec<f64>) -> Result<Self> {
        let n: u64 = dims.iter().product();
        if n as usize != data.len() {
            return Err(Error::Shape(format!("tensor dims {dims:?} hold {n} values, got {}", data.len())));
        }
        Ok(Self {
            name: name.into(),
            dims,
            data,
        })
    }

    pub fn vector(name: impl Into<String>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            dims: vec![data.len() as u64],
            data,
        }
    }
}

fn put_str(w: &mut impl Write, s: &str) -> Result<()> {
    let len = u32::try_from(s.len()).map_err(|_| Error::Format("string longer than 4 GiB".into()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn write_blob(w: &mut impl Write, config_echo: &str, tensors: &[Tensor]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    put_str(w, config_echo)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        put_str(w, &t.name)?;
        w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
        for d in &t.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated blob".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated blob".into()))?;
    Ok(u64::from_le_bytes(b))
}

fn get_str(r: &mut impl Read) -> Result<String> {
    let n = get_u32(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated blob".into()))?;
    String::from_utf8(b).map_err(|_| Error::Format("invalid UTF-8".into()))
}

pub fn read_blob(r: &mut impl Read) -> Result<(String, Vec<Tensor>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("truncated blob".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let echo = get_str(r)?;
    let n = get_u32(r)?;
    let mut tensors = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let name = get_str(r)?;
        let rank = get_u32(r)?;
        let dims = (0..rank).map(|_| get_u64(r)).collect::<Result<Vec<_>>>()?;
        let count: u64 = dims.iter().product();
        let data = (0..count)
            .map(|_| get_u64(r).map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        tensors.push(Tensor { name, dims, data });
    }
    Ok((echo, tensors))
}

pub fn save(path: &Path, config_echo: &str, tensors: &[Tensor]) -> Result<()> {
    let mut buf = Vec::new();
    write_blob(&mut buf, config_echo, tensors)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(String, Vec<Tensor>)> {
    let bytes = std::fs::read(path)?;
    read_blob(&mut bytes.as_slice())
}

/// Look up a tensor by name.
pub fn find<'a>(tensors: &'a [Tensor], name: &str) -> Result<&'a Tensor> {
    tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))
}
