//! Binary checkpoints: a small header followed by named little-endian f32
//! blobs for every parameter and batchnorm buffer.
//!
//! ```text
//! "MVDN" | u32 version | u32 N_d | u32 width num | u32 width den
//!        | f64 sigmoid scale | u32 blob count
//! blob:  u32 name length | name | u32 rank | rank × u32 dims | f32 data
//! ```

use std::collections::HashMap;
use std::path::Path;

use super::graph::{build_network, NetworkGraph, WidthScale};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MVDN";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} exceeds u32")))
}

pub fn encode_checkpoint(net: &NetworkGraph) -> Result<Vec<u8>> {
    let mut out = MAGIC.to_vec();
    put_u32(&mut out, VERSION);
    put_u32(&mut out, to_u32(net.n_depth_samples(), "N_d")?);
    put_u32(&mut out, net.width_scale().num);
    put_u32(&mut out, net.width_scale().den);
    out.extend_from_slice(&net.sigmoid_scale().to_le_bytes());
    let blobs: Vec<_> = net.params().iter().chain(net.buffers()).collect();
    put_u32(&mut out, to_u32(blobs.len(), "blob count")?);
    for b in blobs {
        put_u32(&mut out, to_u32(b.name.len(), "name length")?);
        out.extend_from_slice(b.name.as_bytes());
        put_u32(&mut out, to_u32(b.shape.len(), "rank")?);
        for &d in &b.shape {
            put_u32(&mut out, to_u32(d, "dimension")?);
        }
        for &v in &b.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<NetworkGraph> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a network checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let nd = r.u32()? as usize;
    let scale = WidthScale::new(r.u32()?, r.u32()?)?;
    let sigmoid_scale = r.f64()?;
    let mut net = build_network(nd, scale, sigmoid_scale)?;
    let count = r.u32()? as usize;
    let mut blobs: HashMap<String, (Vec<usize>, Vec<f64>)> = HashMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("blob name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Format("blob too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        if blobs.insert(name.clone(), (shape, data)).is_some() {
            return Err(Error::Format(format!("duplicate blob `{name}`")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    for t in net.params.iter_mut().chain(net.buffers.iter_mut()) {
        let (shape, data) = blobs
            .remove(&t.name)
            .ok_or_else(|| Error::Format(format!("missing blob `{}`", t.name)))?;
        if shape != t.shape {
            return Err(Error::Format(format!(
                "blob `{}` has shape {shape:?}, expected {:?}",
                t.name, t.shape
            )));
        }
        t.data = data;
    }
    if let Some(extra) = blobs.keys().next() {
        return Err(Error::Format(format!("unexpected blob `{extra}`")));
    }
    Ok(net)
}

pub fn save_checkpoint(net: &NetworkGraph, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(net)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkGraph> {
    decode_checkpoint(&std::fs::read(path)?)
}
