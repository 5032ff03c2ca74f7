//! Binary parameter files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic      8 bytes  "MUDQNPRM"
//! version    u32
//! count      u32      number of tensors
//! directory  count × { name_len u16, name utf-8, ndim u8, dims u64 × ndim, offset u64 }
//! data       raw f64 values; each offset is in bytes from the start of this section
//! ```
//!
//! Representation tensors are named `repr.*` and scorer tensors `scorer.*`,
//! so either half can be loaded on its own.

use std::collections::HashMap;

use ndarray::{Array1, Array2};

use super::{Dense, LstmParams, NetParams, NeuralError, ScorerParams};

pub const MAGIC: &[u8; 8] = b"MUDQNPRM";
pub const FORMAT_VERSION: u32 = 1;

pub fn save_params(params: &NetParams) -> Vec<u8> {
    let tensors = params.tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, dims, data) in &tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(dims.len() as u8);
        for &d in dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += 8 * data.len() as u64;
    }
    for (_, _, data) in &tensors {
        for v in *data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NeuralError> {
        let end = self.pos.checked_add(n).ok_or(NeuralError::Truncated)?;
        let chunk = self.bytes.get(self.pos..end).ok_or(NeuralError::Truncated)?;
        self.pos = end;
        Ok(chunk)
    }

    fn u8(&mut self) -> Result<u8, NeuralError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, NeuralError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, NeuralError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NeuralError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

type TensorMap = HashMap<String, (Vec<usize>, Vec<f64>)>;

fn read_tensors(bytes: &[u8]) -> Result<TensorMap, NeuralError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).map_err(|_| NeuralError::Format("missing magic header".into()))? != MAGIC {
        return Err(NeuralError::Format("bad magic header".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(NeuralError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let count = r.u32()? as usize;
    let mut directory = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| NeuralError::Format("tensor name is not utf-8".into()))?
            .to_owned();
        let ndim = r.u8()? as usize;
        let dims = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let offset = r.u64()? as usize;
        directory.push((name, dims, offset));
    }
    let data = &bytes[r.pos..];
    let mut map = TensorMap::new();
    for (name, dims, offset) in directory {
        let n: usize = dims.iter().product();
        let end = offset
            .checked_add(n.checked_mul(8).ok_or(NeuralError::Truncated)?)
            .ok_or(NeuralError::Truncated)?;
        let raw = data.get(offset..end).ok_or(NeuralError::Truncated)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if map.insert(name.clone(), (dims, values)).is_some() {
            return Err(NeuralError::Format(format!("duplicate tensor `{name}`")));
        }
    }
    Ok(map)
}

fn matrix(map: &mut TensorMap, name: &str) -> Result<Array2<f64>, NeuralError> {
    let (dims, data) = map
        .remove(name)
        .ok_or_else(|| NeuralError::Format(format!("missing tensor `{name}`")))?;
    let [rows, cols] = dims[..] else {
        return Err(NeuralError::Format(format!("`{name}` is not a matrix")));
    };
    Array2::from_shape_vec((rows, cols), data).map_err(|e| NeuralError::Format(e.to_string()))
}

fn vector(map: &mut TensorMap, name: &str) -> Result<Array1<f64>, NeuralError> {
    let (dims, data) = map
        .remove(name)
        .ok_or_else(|| NeuralError::Format(format!("missing tensor `{name}`")))?;
    if dims.len() != 1 {
        return Err(NeuralError::Format(format!("`{name}` is not a vector")));
    }
    Ok(Array1::from(data))
}

fn dense(map: &mut TensorMap, prefix: &str) -> Result<Dense, NeuralError> {
    let w = matrix(map, &format!("{prefix}.w"))?;
    let b = vector(map, &format!("{prefix}.b"))?;
    if b.len() != w.nrows() {
        return Err(NeuralError::Format(format!("`{prefix}` bias length mismatch")));
    }
    Ok(Dense { w, b })
}

fn lstm(map: &mut TensorMap) -> Result<Option<LstmParams>, NeuralError> {
    if !map.contains_key("repr.embeddings") {
        return Ok(None);
    }
    let embeddings = matrix(map, "repr.embeddings")?;
    let w = matrix(map, "repr.lstm.w")?;
    let b = vector(map, "repr.lstm.b")?;
    let h = b.len() / 4;
    if b.len() % 4 != 0 || w.nrows() != 4 * h || w.ncols() != embeddings.ncols() + h {
        return Err(NeuralError::Format("inconsistent LSTM tensor shapes".into()));
    }
    Ok(Some(LstmParams { embeddings, w, b }))
}

pub fn load_params(bytes: &[u8]) -> Result<NetParams, NeuralError> {
    let mut map = read_tensors(bytes)?;
    let repr = lstm(&mut map)?;
    let hidden = if map.contains_key("scorer.hidden.w") {
        Some(dense(&mut map, "scorer.hidden")?)
    } else {
        None
    };
    let action = dense(&mut map, "scorer.action")?;
    let object = dense(&mut map, "scorer.object")?;
    let params = NetParams {
        repr,
        scorer: ScorerParams { hidden, action, object },
    };
    let expected_in = match (&params.repr, &params.scorer.hidden) {
        (Some(l), _) => Some(l.lstm_dim()),
        (None, _) => None,
    };
    let head_in = params
        .scorer
        .hidden
        .as_ref()
        .map_or(params.scorer.action.inputs(), Dense::outputs);
    if params.scorer.action.inputs() != head_in
        || params.scorer.object.inputs() != head_in
        || expected_in.is_some_and(|h| params.scorer.input_dim() != h)
    {
        return Err(NeuralError::Format("scorer shapes do not chain".into()));
    }
    if let Some(name) = map.keys().next() {
        return Err(NeuralError::Format(format!("unexpected tensor `{name}`")));
    }
    Ok(params)
}

/// Replaces only the representation tensors of `params` with those in `bytes`.
/// The scorer is left untouched, so the two networks may differ in head sizes.
pub fn load_repr_into(params: &mut NetParams, bytes: &[u8]) -> Result<(), NeuralError> {
    let mut map = read_tensors(bytes)?;
    let loaded = lstm(&mut map)?.ok_or_else(|| NeuralError::Format("file has no representation tensors".into()))?;
    let target = params
        .repr
        .as_mut()
        .ok_or_else(|| NeuralError::ShapeMismatch("target network has no representation generator".into()))?;
    if loaded.embeddings.dim() != target.embeddings.dim() || loaded.w.dim() != target.w.dim() {
        return Err(NeuralError::ShapeMismatch(format!(
            "representation shapes differ: file {:?}/{:?}, network {:?}/{:?}",
            loaded.embeddings.dim(),
            loaded.w.dim(),
            target.embeddings.dim(),
            target.w.dim()
        )));
    }
    *target = loaded;
    Ok(())
}
