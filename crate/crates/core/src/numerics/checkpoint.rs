//! Flat binary parameter container.
//!
//! Layout (little-endian): magic `LTRK`, `u32` version, then one record per
//! tensor until end of file: `u32` name length, UTF-8 name, `u32` rank,
//! `rank` x `u32` dims, `f64` values.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use super::{NumericError, Tensor};

pub const MAGIC: &[u8; 4] = b"LTRK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub entries: Vec<(String, Tensor)>,
}

fn corrupt(msg: impl Into<String>) -> NumericError {
    NumericError::Checkpoint(msg.into())
}

fn read_u32(input: &mut impl Read) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn write_to(&self, out: &mut impl Write) -> io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        for (name, tensor) in &self.entries {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
            for &d in tensor.shape() {
                out.write_all(&(d as u32).to_le_bytes())?;
            }
            for v in tensor.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NumericError> {
        let mut input = bytes;
        let mut magic = [0u8; 4];
        input
            .read_exact(&mut magic)
            .map_err(|_| corrupt("file shorter than header"))?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let version = read_u32(&mut input).map_err(|_| corrupt("missing version"))?;
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let mut entries = Vec::new();
        while !input.is_empty() {
            let truncated = |_| corrupt(format!("truncated record {}", entries.len()));
            let name_len = read_u32(&mut input).map_err(truncated)? as usize;
            if name_len > input.len() {
                return Err(corrupt("name length past end of file"));
            }
            let (name, rest) = input.split_at(name_len);
            let name = String::from_utf8(name.to_vec()).map_err(|_| corrupt("name is not UTF-8"))?;
            input = rest;
            let rank = read_u32(&mut input).map_err(truncated)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u32(&mut input).map_err(truncated)? as usize);
            }
            let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let count = count.filter(|c| c * 8 <= input.len()).ok_or_else(|| {
                corrupt(format!("tensor `{name}` data past end of file"))
            })?;
            let mut data = Vec::with_capacity(count);
            for chunk in input[..count * 8].chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
            input = &input[count * 8..];
            entries.push((name, Tensor::new(shape, data)?));
        }
        Ok(Checkpoint { entries })
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, NumericError> {
        let bytes = fs::read(path).map_err(|e| NumericError::Io(e.to_string()))?;
        Checkpoint::from_bytes(&bytes)
    }
}
