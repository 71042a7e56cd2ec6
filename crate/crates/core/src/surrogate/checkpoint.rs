//! `MSRM` model checkpoints (little-endian).
//!
//! Layout: magic `MSRM`, `u32` version, `u32` layer count, then per layer a
//! header `(u64 rows, u64 cols, u8 activation)`, then per layer the weights in
//! row-major order followed by the biases, then the four bound vectors
//! `input.min, input.max, output.min, output.max`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use super::model::{Activation, Layer, MlpModel};
use super::{FeatureBounds, NormalizationBounds};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MSRM";
const VERSION: u32 = 1;

fn put_f64s<W: Write>(w: &mut W, xs: impl IntoIterator<Item = f64>) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &MlpModel, bounds: &NormalizationBounds) -> Result<()> {
    if bounds.input.len() != model.input_dim() || bounds.output.len() != model.output_dim() {
        return Err(Error::Dimension {
            expected: model.input_dim(),
            actual: bounds.input.len(),
        });
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(model.layers.len() as u32).to_le_bytes())?;
    for layer in &model.layers {
        w.write_all(&(layer.weights.nrows() as u64).to_le_bytes())?;
        w.write_all(&(layer.weights.ncols() as u64).to_le_bytes())?;
        w.write_all(&[layer.activation.tag()])?;
    }
    for layer in &model.layers {
        let wt = layer.weights.transpose();
        put_f64s(&mut w, wt.iter().copied())?;
        put_f64s(&mut w, layer.biases.iter().copied())?;
    }
    for v in [&bounds.input.min, &bounds.input.max, &bounds.output.min, &bounds.output.max] {
        put_f64s(&mut w, v.iter().copied())?;
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("truncated model file: {e}")))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| Ok(f64::from_le_bytes(self.bytes()?))).collect()
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<(MlpModel, NormalizationBounds)> {
    let mut r = Reader { inner: r };
    if &r.bytes::<4>()? != MAGIC {
        return Err(Error::Format("missing MSRM magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported MSRM version {version}")));
    }
    let n_layers = r.u32()? as usize;
    if n_layers == 0 {
        return Err(Error::Format("model has no layers".into()));
    }
    let mut shapes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let act = Activation::from_tag(r.bytes::<1>()?[0])?;
        shapes.push((rows, cols, act));
    }
    for w in shapes.windows(2) {
        if w[0].0 != w[1].1 {
            return Err(Error::Format(format!(
                "layer widths do not chain ({} outputs feed {} inputs)",
                w[0].0, w[1].1
            )));
        }
    }
    let mut layers = Vec::with_capacity(n_layers);
    for &(rows, cols, activation) in &shapes {
        let weights = DMatrix::from_row_slice(rows, cols, &r.f64s(rows * cols)?);
        let biases = DVector::from_vec(r.f64s(rows)?);
        layers.push(Layer {
            weights,
            biases,
            activation,
        });
    }
    let (m_in, m_out) = (shapes[0].1, shapes[n_layers - 1].0);
    let bounds = NormalizationBounds {
        input: FeatureBounds {
            min: r.f64s(m_in)?,
            max: r.f64s(m_in)?,
        },
        output: FeatureBounds {
            min: r.f64s(m_out)?,
            max: r.f64s(m_out)?,
        },
    };
    let mut rest = Vec::new();
    r.inner.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after model", rest.len())));
    }
    Ok((MlpModel { layers }, bounds))
}
