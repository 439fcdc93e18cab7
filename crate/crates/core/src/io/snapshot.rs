//! Versioned binary parameter container.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic    8  bytes  b"RTRRLSNP"
//! version  u32       currently 1
//! meta_len u32       length of the UTF-8 JSON metadata blob
//! meta     ..        JSON (run config echo and anything else)
//! count    u32       number of tensors
//! then per tensor:
//!   name_len u32, name UTF-8
//!   dtype    u8      0 = f64, 1 = complex128 (re, im interleaved)
//!   ndim     u8
//!   dims     ndim x u64
//!   data     prod(dims) x 8 bytes f64 (x2 for complex128)
//! ```
//!
//! Tensors are written sorted by name, so identical parameters produce
//! identical bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RTRRLSNP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    F64 { dims: Vec<usize>, data: Vec<f64> },
    C128 { dims: Vec<usize>, data: Vec<Complex64> },
}

impl Tensor {
    pub fn f64_1d(data: Vec<f64>) -> Self {
        Tensor::F64 { dims: vec![data.len()], data }
    }

    pub fn len(&self) -> usize {
        match self {
            Tensor::F64 { data, .. } => data.len(),
            Tensor::C128 { data, .. } => data.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    pub meta: String,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Snapshot {
    pub fn new(meta: String) -> Self {
        Snapshot { meta, tensors: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        self.tensors.insert(name.to_string(), t);
    }

    pub fn f64_tensor(&self, name: &str) -> Result<(&[usize], &[f64])> {
        match self.tensors.get(name) {
            Some(Tensor::F64 { dims, data }) => Ok((dims, data)),
            Some(_) => Err(Error::Snapshot(format!("tensor {name} has wrong dtype"))),
            None => Err(Error::Snapshot(format!("missing tensor {name}"))),
        }
    }

    pub fn c128_tensor(&self, name: &str) -> Result<(&[usize], &[Complex64])> {
        match self.tensors.get(name) {
            Some(Tensor::C128 { dims, data }) => Ok((dims, data)),
            Some(_) => Err(Error::Snapshot(format!("tensor {name} has wrong dtype"))),
            None => Err(Error::Snapshot(format!("missing tensor {name}"))),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let meta = self.meta.as_bytes();
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(meta)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            let nb = name.as_bytes();
            w.write_all(&(nb.len() as u32).to_le_bytes())?;
            w.write_all(nb)?;
            match t {
                Tensor::F64 { dims, data } => {
                    w.write_all(&[0u8, dims.len() as u8])?;
                    for d in dims {
                        w.write_all(&(*d as u64).to_le_bytes())?;
                    }
                    for v in data {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
                Tensor::C128 { dims, data } => {
                    w.write_all(&[1u8, dims.len() as u8])?;
                    for d in dims {
                        w.write_all(&(*d as u64).to_le_bytes())?;
                    }
                    for v in data {
                        w.write_all(&v.re.to_le_bytes())?;
                        w.write_all(&v.im.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Snapshot("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let meta_len = read_u32(r)? as usize;
        if meta_len > 1 << 26 {
            return Err(Error::Snapshot("implausible metadata length".into()));
        }
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta).map_err(|_| Error::Snapshot("truncated metadata".into()))?;
        let meta =
            String::from_utf8(meta).map_err(|_| Error::Snapshot("metadata is not UTF-8".into()))?;
        let count = read_u32(r)? as usize;
        if count > 1 << 16 {
            return Err(Error::Snapshot("implausible tensor count".into()));
        }
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = read_u32(r)? as usize;
            if name_len > 1 << 12 {
                return Err(Error::Snapshot("implausible tensor name length".into()));
            }
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).map_err(|_| Error::Snapshot("truncated tensor name".into()))?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Snapshot("tensor name is not UTF-8".into()))?;
            let mut hdr = [0u8; 2];
            r.read_exact(&mut hdr).map_err(|_| Error::Snapshot("truncated tensor header".into()))?;
            let (dtype, ndim) = (hdr[0], hdr[1] as usize);
            let mut dims = Vec::with_capacity(ndim);
            let mut total = 1usize;
            for _ in 0..ndim {
                let d = read_u64(r)? as usize;
                total = total
                    .checked_mul(d)
                    .ok_or_else(|| Error::Snapshot("tensor dims overflow".into()))?;
                dims.push(d);
            }
            if total > 1 << 28 {
                return Err(Error::Snapshot("implausible tensor size".into()));
            }
            let tensor = match dtype {
                0 => {
                    let mut data = Vec::with_capacity(total);
                    for _ in 0..total {
                        data.push(read_f64(r)?);
                    }
                    Tensor::F64 { dims, data }
                }
                1 => {
                    let mut data = Vec::with_capacity(total);
                    for _ in 0..total {
                        let re = read_f64(r)?;
                        let im = read_f64(r)?;
                        data.push(Complex64::new(re, im));
                    }
                    Tensor::C128 { dims, data }
                }
                d => return Err(Error::Snapshot(format!("unknown dtype {d}"))),
            };
            tensors.insert(name, tensor);
        }
        Ok(Snapshot { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Snapshot("truncated u32".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Snapshot("truncated u64".into()))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Snapshot("truncated data".into()))?;
    Ok(f64::from_le_bytes(b))
}
