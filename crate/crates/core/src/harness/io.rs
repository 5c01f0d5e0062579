//! Single-slice field files and magnitude image export.
//!
//! Field layout, little-endian: 4-byte magic (`KSPC` or `IMGC`), version
//! byte, height, width and channels as `u32`, then `f32` values row-major
//! with interleaved (re, im) channels.

use std::io::{Read, Write};
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::fourier::{ComplexField, Domain};
use crate::tensor::{Real, Shape, Tensor};

const VERSION: u8 = 1;

fn magic(domain: Domain) -> &'static [u8; 4] {
    match domain {
        Domain::Frequency => b"KSPC",
        Domain::Image => b"IMGC",
    }
}

pub fn write_field<T: Real>(w: &mut impl Write, field: &ComplexField<T>) -> Result<()> {
    let [b, h, wd, c] = field.shape().0;
    if b != 1 {
        return Err(Error::shape(format!("field files hold one slice, got batch {b}")));
    }
    w.write_all(magic(field.domain()))?;
    w.write_all(&[VERSION])?;
    for d in [h, wd, c] {
        let d = u32::try_from(d).map_err(|_| Error::data("dimension too large"))?;
        w.write_all(&d.to_le_bytes())?;
    }
    let mut bytes = Vec::with_capacity(field.tensor().len() * 4);
    for &v in field.tensor().data() {
        bytes.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_field<T: Real>(r: &mut impl Read) -> Result<ComplexField<T>> {
    let mut head = [0u8; 17];
    r.read_exact(&mut head).map_err(|_| Error::data("field file truncated"))?;
    let domain = match &head[..4] {
        b"KSPC" => Domain::Frequency,
        b"IMGC" => Domain::Image,
        _ => return Err(Error::data("unrecognized field file magic")),
    };
    if head[4] != VERSION {
        return Err(Error::data(format!("unsupported field file version {}", head[4])));
    }
    let dim = |i: usize| u32::from_le_bytes([head[5 + 4 * i], head[6 + 4 * i], head[7 + 4 * i], head[8 + 4 * i]]) as usize;
    let shape = Shape::new(1, dim(0), dim(1), dim(2));
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() != shape.numel() * 4 {
        return Err(Error::data(format!("field payload is {} bytes, expected {}", raw.len(), shape.numel() * 4)));
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| T::from_f64_lossy(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    ComplexField::new(Tensor::from_vec(shape, data)?, domain)
}

pub fn save_field<T: Real>(path: impl AsRef<Path>, field: &ComplexField<T>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_field(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn load_field<T: Real>(path: impl AsRef<Path>) -> Result<ComplexField<T>> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    read_field(&mut r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn from_bits(bits: u8) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            _ => Err(Error::config(format!("bit depth must be 8 or 16, got {bits}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Png,
    Pgm,
}

impl ExportFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("png") => Ok(ExportFormat::Png),
            Some("pgm") => Ok(ExportFormat::Pgm),
            _ => Err(Error::config(format!("cannot infer image format of {}", path.display()))),
        }
    }
}

/// Magnitude of the first complex channel scaled so the slice maximum maps
/// to full white.
pub fn magnitude_levels<T: Real>(field: &ComplexField<T>, depth: BitDepth) -> Vec<u16> {
    let t = field.tensor();
    let c = t.shape().channels();
    let mags: Vec<f64> = t.data().chunks_exact(c).map(|p| p[0].to_f64_lossy().hypot(p[1].to_f64_lossy())).collect();
    let max = mags.iter().copied().fold(0.0, f64::max);
    let top = match depth {
        BitDepth::Eight => 255.0,
        BitDepth::Sixteen => 65535.0,
    };
    mags.iter().map(|&m| if max > 0.0 { (m / max * top).round() as u16 } else { 0 }).collect()
}

pub fn export_magnitude<T: Real>(path: impl AsRef<Path>, field: &ComplexField<T>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let format = ExportFormat::from_path(path)?;
    let [b, h, w, _] = field.shape().0;
    if b != 1 {
        return Err(Error::shape("image export takes one slice"));
    }
    let levels = magnitude_levels(field, depth);
    let (w, h) = (w as u32, h as u32);
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        ExportFormat::Png => {
            let res = match depth {
                BitDepth::Eight => {
                    let px: Vec<u8> = levels.iter().map(|&v| v as u8).collect();
                    PngEncoder::new(file).write_image(&px, w, h, ExtendedColorType::L8)
                }
                BitDepth::Sixteen => {
                    let px: Vec<u8> = levels.iter().flat_map(|v| v.to_ne_bytes()).collect();
                    PngEncoder::new(file).write_image(&px, w, h, ExtendedColorType::L16)
                }
            };
            res.map_err(|e| match e {
                image::ImageError::IoError(io) => Error::Io(io),
                other => Error::data(other.to_string()),
            })
        }
        ExportFormat::Pgm => {
            let max = match depth {
                BitDepth::Eight => 255,
                BitDepth::Sixteen => 65535,
            };
            write!(file, "P5\n{w} {h}\n{max}\n")?;
            let px: Vec<u8> = match depth {
                BitDepth::Eight => levels.iter().map(|&v| v as u8).collect(),
                BitDepth::Sixteen => levels.iter().flat_map(|v| v.to_be_bytes()).collect(),
            };
            file.write_all(&px)?;
            file.flush()?;
            Ok(())
        }
    }
}
