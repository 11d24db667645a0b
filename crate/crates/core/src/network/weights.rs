//! `DMGW` tensor container.
//!
//! Little-endian, no padding:
//!
//! ```text
//! magic    b"DMGW"
//! version  u32 = 1
//! count    u32
//! count × {
//!     name_len u16, name (UTF-8),
//!     rank u8, dims u64 × rank,
//!     values f32 × product(dims), row-major
//! }
//! ```
//!
//! Network parameters are stored as `<layer>.weight` / `<layer>.bias` in
//! layer order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::{ActShape, NetworkConfig};
use super::params::{param_shapes, LayerParams, ParameterStore};
use super::Network;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const MAGIC: [u8; 4] = *b"DMGW";
pub const VERSION: u32 = 1;

pub fn write_tensors<W: Write, T: Real>(mut w: W, tensors: &[(&str, &Tensor<T>)]) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let count = u32::try_from(tensors.len()).map_err(|_| Error::Format("too many tensors".into()))?;
    w.write_all(&count.to_le_bytes())?;
    for (name, t) in tensors {
        let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("tensor name too long: {name}")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        let rank = u8::try_from(t.rank()).map_err(|_| Error::Format(format!("rank too large for `{name}`")))?;
        w.write_all(&[rank])?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn eof_as_truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Truncated
    } else {
        Error::Io(e)
    }
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(eof_as_truncated)?;
    Ok(buf)
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, Tensor<f32>)>> {
    let magic = read_array::<4, _>(&mut r)?;
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = u32::from_le_bytes(read_array(&mut r)?);
    let mut out = Vec::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(read_array(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(eof_as_truncated)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = read_array::<1, _>(&mut r)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut numel: usize = 1;
        for _ in 0..rank {
            let d = u64::from_le_bytes(read_array(&mut r)?);
            let d = usize::try_from(d).map_err(|_| Error::Format(format!("dimension overflow in `{name}`")))?;
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| Error::Format(format!("element count overflow in `{name}`")))?;
            shape.push(d);
        }
        // Grow with the data actually present so a corrupt header cannot
        // force a huge allocation.
        let mut data = Vec::with_capacity(numel.min(1 << 20));
        let mut chunk = vec![0u8; 4 * numel.min(1 << 16)];
        let mut remaining = numel;
        while remaining > 0 {
            let take = remaining.min(1 << 16);
            let buf = &mut chunk[..4 * take];
            r.read_exact(buf).map_err(eof_as_truncated)?;
            data.extend(
                buf.chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            );
            remaining -= take;
        }
        out.push((name, Tensor::from_vec(&shape, data)?));
    }
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(out),
        _ => Err(Error::Format("trailing bytes after last tensor".into())),
    }
}

pub fn write_file<T: Real>(path: &Path, tensors: &[(&str, &Tensor<T>)]) -> Result<()> {
    write_tensors(BufWriter::new(File::create(path)?), tensors)
}

pub fn read_file(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    read_tensors(BufReader::new(File::open(path)?))
}

/// Parameter tensors of `net` in layer order, named `<layer>.weight|bias`.
pub fn network_tensors<T: Real>(net: &Network<T>) -> Vec<(String, &Tensor<T>)> {
    let mut out = Vec::new();
    for layer in &net.config().layers {
        if let Some(p) = net.params().get(&layer.name) {
            out.push((format!("{}.weight", layer.name), &p.weight));
            out.push((format!("{}.bias", layer.name), &p.bias));
        }
    }
    out
}

pub(super) fn save_network<T: Real>(net: &Network<T>, path: &Path) -> Result<()> {
    let named = network_tensors(net);
    let refs: Vec<(&str, &Tensor<T>)> = named.iter().map(|(n, t)| (n.as_str(), *t)).collect();
    write_file(path, &refs)
}

pub(super) fn store_from_tensors<T: Real>(
    config: &NetworkConfig,
    shapes: &[ActShape],
    tensors: Vec<(String, Tensor<f32>)>,
) -> Result<ParameterStore<T>> {
    let mut by_name: HashMap<String, Tensor<f32>> = HashMap::with_capacity(tensors.len());
    for (name, t) in tensors {
        if by_name.insert(name.clone(), t).is_some() {
            return Err(Error::Format(format!("duplicate tensor `{name}`")));
        }
    }
    let mut store = ParameterStore::new();
    for (i, layer) in config.layers.iter().enumerate() {
        let input = if i == 0 {
            let [c, h, w] = config.input_shape;
            ActShape::Spatial { c, h, w }
        } else {
            shapes[i - 1]
        };
        let Some((ws, bs)) = param_shapes(&layer.kind, input) else {
            continue;
        };
        let mut take = |suffix: &str, expected: Vec<usize>| -> Result<Tensor<T>> {
            let name = format!("{}.{suffix}", layer.name);
            let t = by_name
                .remove(&name)
                .ok_or_else(|| Error::MissingTensor(name.clone()))?;
            if t.shape() != expected.as_slice() {
                return Err(Error::WeightShape {
                    name,
                    expected,
                    found: t.shape().to_vec(),
                });
            }
            Ok(t.cast())
        };
        let weight = take("weight", ws)?;
        let bias = take("bias", bs)?;
        store.insert(layer.name.clone(), LayerParams { weight, bias });
    }
    if let Some(extra) = by_name.keys().min() {
        return Err(Error::Format(format!("unexpected tensor `{extra}`")));
    }
    Ok(store)
}
