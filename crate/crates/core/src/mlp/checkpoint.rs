//! Binary model checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "MLPF" | version u32 | D_c u64 | D_r u64 | hidden_width u64 | n_hidden u64
//!        | output_scale f64 | init_seed u64 | mode u8
//! per hidden layer: weight (row-major, fan_in x fan_out), bias, gamma,
//!                   beta, running_mean, running_var
//! head: weight (row-major, hidden_width x D_r), bias
//! ```
//!
//! Every parameter is an IEEE-754 f64.

use std::path::Path;

use super::model::{MlpModel, ModelConfig, Mode};
use crate::error::{Error, Result};
use crate::io_util;

pub const MAGIC: &[u8; 4] = b"MLPF";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 * 4 + 8 + 8 + 1;

fn tensors(m: &MlpModel) -> Vec<&[f64]> {
    let mut out = Vec::new();
    for l in &m.hidden {
        out.push(l.dense.weight.as_slice().expect("standard layout"));
        out.push(l.dense.bias.as_slice().expect("standard layout"));
        out.push(l.norm.gamma.as_slice().expect("standard layout"));
        out.push(l.norm.beta.as_slice().expect("standard layout"));
        out.push(l.norm.running_mean.as_slice().expect("standard layout"));
        out.push(l.norm.running_var.as_slice().expect("standard layout"));
    }
    out.push(m.head.weight.as_slice().expect("standard layout"));
    out.push(m.head.bias.as_slice().expect("standard layout"));
    out
}

fn tensors_mut(m: &mut MlpModel) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = Vec::new();
    for l in &mut m.hidden {
        out.push(l.dense.weight.as_slice_mut().expect("standard layout"));
        out.push(l.dense.bias.as_slice_mut().expect("standard layout"));
        out.push(l.norm.gamma.as_slice_mut().expect("standard layout"));
        out.push(l.norm.beta.as_slice_mut().expect("standard layout"));
        out.push(l.norm.running_mean.as_slice_mut().expect("standard layout"));
        out.push(l.norm.running_var.as_slice_mut().expect("standard layout"));
    }
    out.push(m.head.weight.as_slice_mut().expect("standard layout"));
    out.push(m.head.bias.as_slice_mut().expect("standard layout"));
    out
}

pub fn to_bytes(m: &MlpModel) -> Vec<u8> {
    let c = m.config();
    let body: usize = tensors(m).iter().map(|t| t.len()).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * body);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [c.input_width, c.output_width, c.hidden_width, c.n_hidden] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&c.output_scale.to_le_bytes());
    out.extend_from_slice(&c.init_seed.to_le_bytes());
    out.push(match m.mode() {
        Mode::Training => 0,
        Mode::Inference => 1,
    });
    for t in tensors(m) {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos.checked_add(N).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::parse(0, format!("checkpoint truncated at byte {}", self.pos)))?;
        let out = self.bytes[self.pos..end].try_into().expect("length checked");
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn width(&mut self, name: &str) -> Result<usize> {
        let v = self.u64()?;
        // Anything wider cannot be backed by a real checkpoint file.
        if v == 0 || v > 1 << 24 {
            return Err(Error::parse(0, format!("implausible {name} {v}")));
        }
        Ok(v as usize)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<MlpModel> {
    let mut r = Reader { bytes, pos: 0 };
    if &r.take::<4>()? != MAGIC {
        return Err(Error::parse(0, "not an MLPF checkpoint"));
    }
    let version = u32::from_le_bytes(r.take()?);
    if version != VERSION {
        return Err(Error::parse(0, format!("unsupported checkpoint version {version}")));
    }
    let input_width = r.width("input width")?;
    let output_width = r.width("output width")?;
    let hidden_width = r.width("hidden width")?;
    let n_hidden = r.width("layer count")?;
    let output_scale = f64::from_le_bytes(r.take()?);
    let init_seed = r.u64()?;
    let mode = match r.take::<1>()?[0] {
        0 => Mode::Training,
        1 => Mode::Inference,
        other => return Err(Error::parse(0, format!("unknown mode byte {other}"))),
    };
    let cfg = ModelConfig {
        input_width,
        output_width,
        hidden_width,
        n_hidden,
        output_scale,
        init_seed,
    };
    cfg.validate()?;
    let expected = 8
        * (input_width as u128 * hidden_width as u128
            + (n_hidden as u128 - 1) * hidden_width as u128 * hidden_width as u128
            + n_hidden as u128 * 5 * hidden_width as u128
            + (hidden_width as u128 + 1) * output_width as u128);
    let remaining = (bytes.len() - r.pos) as u128;
    if remaining != expected {
        return Err(Error::parse(
            0,
            format!("checkpoint body holds {remaining} bytes, expected {expected}"),
        ));
    }

    let mut m = MlpModel::new(ModelConfig { init_seed: 0, ..cfg })?;
    m.config.init_seed = init_seed;
    for t in tensors_mut(&mut m) {
        for v in t.iter_mut() {
            *v = f64::from_le_bytes(r.take()?);
        }
    }
    if m.hidden.iter().any(|l| l.norm.running_var.iter().any(|&v| !(v >= 0.0))) {
        return Err(Error::parse(0, "negative or NaN running variance"));
    }
    m.set_mode(mode);
    Ok(m)
}

pub fn write_checkpoint(path: &Path, m: &MlpModel) -> Result<()> {
    io_util::write_atomic(path, &to_bytes(m))
}

pub fn read_checkpoint(path: &Path) -> Result<MlpModel> {
    from_bytes(&io_util::read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn model() -> MlpModel {
        MlpModel::new(ModelConfig {
            input_width: 3,
            output_width: 2,
            hidden_width: 5,
            n_hidden: 2,
            output_scale: 2.5,
            init_seed: 77,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let mut m = model();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i + 2 * j) as f64);
        let (_, cache) = m.forward_train(&x.view()).unwrap();
        m.update_running_stats(&cache);
        m.set_mode(Mode::Inference);
        let bytes = to_bytes(&m);
        assert_eq!(&bytes[..4], b"MLPF");
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.mlpf");
        let m = model();
        write_checkpoint(&p, &m).unwrap();
        assert_eq!(read_checkpoint(&p).unwrap(), m);
    }

    #[test]
    fn rejects_damage() {
        let bytes = to_bytes(&model());
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(from_bytes(&magic).is_err());
        let mut version = bytes.clone();
        version[4] = 9;
        assert!(from_bytes(&version).is_err());
        assert!(from_bytes(&[]).is_err());
    }
}
