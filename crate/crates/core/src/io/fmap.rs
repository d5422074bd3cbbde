//! FMAP: a minimal dense-map container.
//!
//! Layout: `"FMAP"`, then `u32` LE version (1), dtype (1 = f32, 2 = u16),
//! height, width, channels, then the row-major LE payload.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{InstanceMap, ScalarMap, VectorMap};

use super::write_atomic;

const MAGIC: &[u8; 4] = b"FMAP";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub enum FmapData {
    F32(Vec<f32>),
    U16(Vec<u16>),
}

impl FmapData {
    pub fn dtype_code(&self) -> u32 {
        match self {
            FmapData::F32(_) => 1,
            FmapData::U16(_) => 2,
        }
    }

    fn len(&self) -> usize {
        match self {
            FmapData::F32(v) => v.len(),
            FmapData::U16(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fmap {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub data: FmapData,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn dims_u32(h: usize, w: usize, c: usize) -> (u32, u32, u32) {
    let conv = |x: usize| u32::try_from(x).expect("map dimension exceeds u32");
    (conv(h), conv(w), conv(c))
}

impl Fmap {
    pub fn new(height: u32, width: u32, channels: u32, data: FmapData) -> Result<Self> {
        let expected = height as usize * width as usize * channels as usize;
        if data.len() != expected {
            return Err(format_err(format!("payload has {} values, header says {expected}", data.len())));
        }
        Ok(Self { height, width, channels, data })
    }

    /// Narrows to f32; the only lossy step in the container.
    pub fn from_vector_map(map: &VectorMap) -> Self {
        let (height, width, channels) = dims_u32(map.height, map.width, map.channels);
        Self { height, width, channels, data: FmapData::F32(map.data.iter().map(|&v| v as f32).collect()) }
    }

    pub fn from_scalar_map(map: &ScalarMap) -> Self {
        let (height, width, channels) = dims_u32(map.height, map.width, 1);
        Self { height, width, channels, data: FmapData::F32(map.data.iter().map(|&v| v as f32).collect()) }
    }

    pub fn from_instance_map(map: &InstanceMap) -> Self {
        let (height, width, channels) = dims_u32(map.height, map.width, 1);
        Self { height, width, channels, data: FmapData::U16(map.data.clone()) }
    }

    fn floats(&self, what: &str) -> Result<Vec<f64>> {
        match &self.data {
            FmapData::F32(v) => Ok(v.iter().map(|&x| x as f64).collect()),
            FmapData::U16(_) => Err(format_err(format!("{what} must be float32"))),
        }
    }

    pub fn to_vector_map(&self) -> Result<VectorMap> {
        VectorMap::new(self.height as usize, self.width as usize, self.channels as usize, self.floats("vector map")?)
    }

    pub fn to_scalar_map(&self) -> Result<ScalarMap> {
        if self.channels != 1 {
            return Err(format_err(format!("scalar map has {} channels", self.channels)));
        }
        ScalarMap::new(self.height as usize, self.width as usize, self.floats("scalar map")?)
    }

    pub fn to_instance_map(&self) -> Result<InstanceMap> {
        match &self.data {
            FmapData::U16(v) if self.channels == 1 => {
                InstanceMap::new(self.height as usize, self.width as usize, v.clone())
            }
            _ => Err(format_err("instance map must be single-channel uint16")),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.data.dtype_code(), self.height, self.width, self.channels] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        match &self.data {
            FmapData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            FmapData::U16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(format_err("not an FMAP file"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        let (version, dtype, height, width, channels) = (word(0), word(1), word(2), word(3), word(4));
        if version != VERSION {
            return Err(format_err(format!("unsupported FMAP version {version}")));
        }
        let count = (height as u64) * (width as u64) * (channels as u64);
        let size = match dtype {
            1 => 4,
            2 => 2,
            _ => return Err(format_err(format!("unknown dtype code {dtype}"))),
        };
        let payload = &bytes[HEADER_LEN..];
        if payload.len() as u64 != count * size {
            return Err(format_err(format!("payload is {} bytes, expected {}", payload.len(), count * size)));
        }
        let data = match dtype {
            1 => FmapData::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
            _ => FmapData::U16(payload.chunks_exact(2).map(|c| u16::from_le_bytes(c.try_into().unwrap())).collect()),
        };
        Ok(Self { height, width, channels, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }
}
