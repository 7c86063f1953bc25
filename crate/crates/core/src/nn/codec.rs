//! Binary model records.
//!
//! All integers are little-endian `u32`, all reals little-endian IEEE-754 `f64`.
//!
//! ```text
//! offset  size        field
//! 0       8           magic "FALCMLP1"
//! 8       4           n = number of layer widths (>= 2)
//! 12      4*n         layer widths, input first
//! ..      1           activation tag: 0 = exact sigmoid, 1 = piecewise-linear sigmoid
//! ..      4           p = breakpoint count (0 for the exact sigmoid)
//! ..      16*p        breakpoints as (x, y) pairs
//! ..      per layer   out*in weights (row-major, one row per output neuron), then out biases
//! ```

use std::path::Path;

use super::activation::{ActivationKind, PwlTable};
use super::mlp::{Layer, MlpModel};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"FALCMLP1";

pub fn encode_model(model: &MlpModel) -> Vec<u8> {
    let sizes = model.topology().sizes();
    let mut out = Vec::with_capacity(64 + 8 * model.topology().num_parameters() as usize);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for &s in sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    match model.activation() {
        ActivationKind::ExactSigmoid => {
            out.push(0);
            out.extend_from_slice(&0u32.to_le_bytes());
        }
        ActivationKind::PwlSigmoid(table) => {
            out.push(1);
            out.extend_from_slice(&(table.points().len() as u32).to_le_bytes());
            for &(x, y) in table.points() {
                out.extend_from_slice(&x.to_le_bytes());
                out.extend_from_slice(&y.to_le_bytes());
            }
        }
    }
    for layer in model.layers() {
        for w in layer.weights.iter().chain(&layer.biases) {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    name: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.name, self.pos as u64, format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::format(self.name, self.pos as u64, msg)
    }
}

pub fn decode_model(bytes: &[u8], name: &str) -> Result<MlpModel> {
    let mut r = Reader { name, bytes, pos: 0 };
    if r.take(8, "magic")? != MODEL_MAGIC {
        return Err(Error::format(name, 0, "bad magic, expected FALCMLP1"));
    }
    let n = r.u32("layer count")? as usize;
    if !(2..=1024).contains(&n) {
        return Err(r.err(format!("implausible layer count {n}")));
    }
    let mut sizes = Vec::with_capacity(n);
    for _ in 0..n {
        sizes.push(r.u32("layer width")? as usize);
    }
    let tag_pos = r.pos;
    let tag = r.take(1, "activation tag")?[0];
    let points = r.u32("breakpoint count")? as usize;
    let activation = match tag {
        0 => ActivationKind::ExactSigmoid,
        1 => {
            let mut pts = Vec::with_capacity(points.min(4096));
            for _ in 0..points {
                pts.push((r.f64("breakpoint")?, r.f64("breakpoint")?));
            }
            ActivationKind::PwlSigmoid(
                PwlTable::new(pts).map_err(|e| Error::format(name, tag_pos as u64, e.to_string()))?,
            )
        }
        t => return Err(Error::format(name, tag_pos as u64, format!("unknown activation tag {t}"))),
    };
    let mut layers = Vec::with_capacity(n - 1);
    for w in sizes.windows(2) {
        let (inputs, outputs) = (w[0], w[1]);
        let start = r.pos;
        let mut read = |count: usize| -> Result<Vec<f64>> {
            let raw = r.take(
                count.checked_mul(8).ok_or_else(|| Error::format(name, start as u64, "layer too large"))?,
                "layer parameters",
            )?;
            Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let weights = read(inputs * outputs)?;
        let biases = read(outputs)?;
        layers.push(Layer { inputs, outputs, weights, biases });
    }
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes after last layer"));
    }
    MlpModel::from_layers(layers, activation).map_err(|e| Error::format(name, 8, e.to_string()))
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes, &path.display().to_string())
}
