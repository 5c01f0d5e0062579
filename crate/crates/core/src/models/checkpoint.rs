//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! b"ILCR1"
//! u32 config length, config as JSON
//! u32 parameter count
//! per parameter: u32 name length, name, u8 trainable, 4 x u32 dims, f32 data
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::network::Model;
use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

const MAGIC: &[u8; 5] = b"ILCR1";

fn write_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::data("value does not fit in u32"))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn read_bytes(r: &mut impl Read, len: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(Error::data("checkpoint truncated"));
    }
    Ok(buf)
}

impl<T: Real> Model<T> {
    pub fn write_checkpoint(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        let json = serde_json::to_vec(self.config())?;
        write_u32(w, json.len())?;
        w.write_all(&json)?;
        write_u32(w, self.params.len())?;
        for p in self.params.iter() {
            write_u32(w, p.name.len())?;
            w.write_all(p.name.as_bytes())?;
            w.write_all(&[p.trainable as u8])?;
            for d in p.tensor.shape().0 {
                write_u32(w, d)?;
            }
            let mut bytes = Vec::with_capacity(p.tensor.len() * 4);
            for &v in p.tensor.data() {
                bytes.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
            }
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn read_checkpoint(r: &mut impl Read) -> Result<Self> {
        let magic = read_bytes(r, MAGIC.len()).map_err(|_| Error::data("not a model checkpoint"))?;
        if magic != MAGIC {
            return Err(Error::data("not a model checkpoint"));
        }
        let len = read_u32(r)?;
        let config: ModelConfig = serde_json::from_slice(&read_bytes(r, len)?)?;
        let mut model = Model::new(config, 0)?;
        let count = read_u32(r)?;
        if count != model.params.len() {
            return Err(Error::data(format!(
                "checkpoint has {count} parameters, configuration implies {}",
                model.params.len()
            )));
        }
        for i in 0..count {
            let len = read_u32(r)?;
            let name = String::from_utf8(read_bytes(r, len)?).map_err(|_| Error::data("parameter name is not UTF-8"))?;
            let trainable = read_bytes(r, 1)?[0] != 0;
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = read_u32(r)?;
            }
            let shape = Shape(dims);
            let expected = model.params.get(i);
            if expected.name != name || expected.tensor.shape() != shape || expected.trainable != trainable {
                return Err(Error::data(format!("parameter {i} ('{name}', {shape}) does not match the configuration")));
            }
            let raw = read_bytes(r, shape.numel() * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| T::from_f64_lossy(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                .collect();
            model.params.get_mut(i).tensor = Tensor::from_vec(shape, data)?;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_checkpoint(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_checkpoint(&mut r)
    }
}
