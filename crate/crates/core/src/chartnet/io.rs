//! `CCNN` weights files.
//!
//! ```text
//! magic "CCNN" | version u32 | layer count u32
//! per layer: rows u32 | cols u32 | rows·cols f32 weights (row-major) | rows f32 biases
//! mean: input_dim f32 | scale: input_dim f32
//! ```

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Dense, Mlp};
use super::{ChartNetError, ChartingNetwork, Result, Standardizer};

pub const WEIGHTS_MAGIC: [u8; 4] = *b"CCNN";
pub const WEIGHTS_VERSION: u32 = 1;

/// Serialized weights file contents.
pub fn weights_bytes(net: &ChartingNetwork) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.mlp().layers.len() as u32).to_le_bytes());
    for layer in &net.mlp().layers {
        out.extend_from_slice(&(layer.outputs() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.inputs() as u32).to_le_bytes());
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in net.standardizer().mean.iter().chain(&net.standardizer().scale) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn save_weights(net: &ChartingNetwork, path: impl AsRef<Path>) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(&weights_bytes(net))?;
    f.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.offset < n {
            return Err(ChartNetError::Malformed {
                offset: self.offset as u64,
                reason: format!("truncated: need {n} more bytes"),
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let len = n.checked_mul(4).ok_or_else(|| ChartNetError::Malformed {
            offset: self.offset as u64,
            reason: "size overflow".into(),
        })?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ChartingNetwork> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    parse(&bytes)
}

/// Loads weights and checks their layer widths against `expected`
/// (`[input, hidden…, output]`).
pub fn load_weights_matching(path: impl AsRef<Path>, expected: &[usize]) -> Result<ChartingNetwork> {
    let net = load_weights(path)?;
    let found = net.dims();
    if found != expected {
        return Err(ChartNetError::ShapeMismatch {
            expected: expected.to_vec(),
            found,
        });
    }
    Ok(net)
}

fn parse(bytes: &[u8]) -> Result<ChartingNetwork> {
    let mut c = Cursor { bytes, offset: 0 };
    let malformed = |offset: usize, reason: &str| ChartNetError::Malformed {
        offset: offset as u64,
        reason: reason.into(),
    };
    if c.take(4)? != WEIGHTS_MAGIC {
        return Err(malformed(0, "bad magic"));
    }
    if c.u32()? != WEIGHTS_VERSION {
        return Err(malformed(4, "unsupported version"));
    }
    let layer_count = c.u32()? as usize;
    if layer_count == 0 {
        return Err(malformed(8, "no layers"));
    }
    let mut layers = Vec::with_capacity(layer_count.min(64));
    for _ in 0..layer_count {
        let at = c.offset;
        let rows = c.u32()? as usize;
        let cols = c.u32()? as usize;
        if let Some(prev) = layers.last().map(|l: &Dense<f32>| l.outputs()) {
            if prev != cols {
                return Err(malformed(at, "layer input width does not match previous output width"));
            }
        }
        let weights = Array2::from_shape_vec((rows, cols), c.f32s(rows * cols)?).map_err(|e| malformed(at, &e.to_string()))?;
        let bias = Array1::from(c.f32s(rows)?);
        layers.push(Dense { weights, bias });
    }
    let input_dim = layers[0].inputs();
    let mean = c.f32s(input_dim)?;
    let scale = c.f32s(input_dim)?;
    if c.offset != bytes.len() {
        return Err(malformed(c.offset, "trailing bytes"));
    }
    ChartingNetwork::from_parts(Mlp { layers }, Standardizer { mean, scale })
}
