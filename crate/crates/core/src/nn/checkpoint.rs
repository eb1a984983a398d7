//! Binary checkpoints: `"SRNN"`, a version byte, a `u32` tensor count, then
//! per tensor a `u32`-prefixed UTF-8 name, `u32` rank, `u32` dims and
//! little-endian `f32` data.

use std::io::{Read, Write};
use std::path::Path;

use super::model::{Architecture, Model, Params, N_TENSORS};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SRNN";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn seed_parts(seed: u64) -> Vec<f32> {
    (0..4).map(|i| ((seed >> (16 * i)) & 0xffff) as f32).collect()
}

/// Serializes weights, running statistics and metadata tensors.
pub fn to_tensors(model: &Model<f32>) -> Vec<NamedTensor> {
    let mut out: Vec<NamedTensor> = model
        .arch
        .tensor_specs()
        .into_iter()
        .zip(&model.params.tensors)
        .map(|((name, dims), data)| NamedTensor { name, dims, data: data.clone() })
        .collect();
    let h = model.arch.input_height;
    out.push(NamedTensor { name: "bn.running_mean".into(), dims: vec![h], data: model.running_mean.clone() });
    out.push(NamedTensor { name: "bn.running_var".into(), dims: vec![h], data: model.running_var.clone() });
    out.push(NamedTensor {
        name: "meta.input_shape".into(),
        dims: vec![2],
        data: vec![model.arch.input_height as f32, model.arch.input_width as f32],
    });
    out.push(NamedTensor { name: "meta.dropout_rate".into(), dims: vec![1], data: vec![model.arch.dropout_rate as f32] });
    out.push(NamedTensor { name: "meta.seed".into(), dims: vec![4], data: seed_parts(model.seed) });
    out
}

pub fn from_tensors(tensors: &[NamedTensor]) -> Result<Model<f32>> {
    let get = |name: &str| {
        tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| fmt_err(format!("checkpoint lacks tensor {name:?}")))
    };
    let shape = get("meta.input_shape")?;
    if shape.data.len() != 2 {
        return Err(fmt_err("meta.input_shape must hold two values"));
    }
    let mut filters = [0usize; 4];
    for (i, f) in filters.iter_mut().enumerate() {
        let k = get(&format!("conv{}.kernel", i + 1))?;
        *f = *k.dims.get(3).ok_or_else(|| fmt_err("conv kernel must have rank 4"))?;
    }
    let d2 = get("dense2.kernel")?;
    if d2.dims.len() != 2 {
        return Err(fmt_err("dense2.kernel must have rank 2"));
    }
    let arch = Architecture {
        input_height: shape.data[0] as usize,
        input_width: shape.data[1] as usize,
        filters,
        dense_units: d2.dims[0],
        n_classes: d2.dims[1],
        dropout_rate: get("meta.dropout_rate")?.data.first().copied().unwrap_or(0.5) as f64,
    };
    arch.validate()?;
    let mut params = Params { tensors: Vec::with_capacity(N_TENSORS) };
    for (name, dims) in arch.tensor_specs() {
        let t = get(&name)?;
        if t.dims != dims {
            return Err(fmt_err(format!("{name}: dims {:?}, expected {dims:?}", t.dims)));
        }
        params.tensors.push(t.data.clone());
    }
    let h = arch.input_height;
    let running = |name: &str| -> Result<Vec<f32>> {
        let t = get(name)?;
        if t.data.len() != h {
            return Err(fmt_err(format!("{name} has length {}, expected {h}", t.data.len())));
        }
        Ok(t.data.clone())
    };
    let seed = get("meta.seed")
        .map(|t| t.data.iter().enumerate().fold(0u64, |acc, (i, &v)| acc | ((v as u64) << (16 * i))))
        .unwrap_or(0);
    Ok(Model {
        running_mean: running("bn.running_mean")?,
        running_var: running("bn.running_var")?,
        arch,
        params,
        seed,
    })
}

pub fn write_tensors<W: Write>(mut w: W, tensors: &[NamedTensor]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.name.len() as u32).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
        for &d in &t.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut bytes = Vec::with_capacity(t.data.len() * 4);
        for v in &t.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| fmt_err("truncated checkpoint"))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<NamedTensor>> {
    let mut head = [0u8; 5];
    r.read_exact(&mut head).map_err(|_| fmt_err("truncated checkpoint header"))?;
    if &head[..4] != MAGIC {
        return Err(fmt_err("not a checkpoint (expected magic \"SRNN\")"));
    }
    if head[4] != VERSION {
        return Err(fmt_err(format!("unsupported checkpoint version {}", head[4])));
    }
    let count = read_u32(&mut r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        if name_len > 1 << 16 {
            return Err(fmt_err("implausible tensor name length"));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(|_| fmt_err("truncated checkpoint"))?;
        let name = String::from_utf8(name).map_err(|_| fmt_err("tensor name is not UTF-8"))?;
        let rank = read_u32(&mut r)? as usize;
        if rank > 8 {
            return Err(fmt_err(format!("{name}: rank {rank} too large")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&mut r)? as usize);
        }
        let len = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n <= 1 << 30)
            .ok_or_else(|| fmt_err(format!("{name}: tensor too large")))?;
        let mut bytes = vec![0u8; len * 4];
        r.read_exact(&mut bytes).map_err(|_| fmt_err(format!("{name}: truncated data")))?;
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        out.push(NamedTensor { name, dims, data });
    }
    Ok(out)
}

pub fn save_model(model: &Model<f32>, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tensors(file, &to_tensors(model))
}

pub fn load_model(path: &Path) -> Result<Model<f32>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    from_tensors(&read_tensors(std::io::BufReader::new(std::fs::File::open(path)?))?)
}
