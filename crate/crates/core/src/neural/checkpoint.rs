//! Binary checkpoint format for trained fields.
//!
//! Layout, all little-endian: magic `GDFN`, version `u32`, representation tag `u8`,
//! depth/width/spatial_dim/latent_len/output_dim as `u32`, activation tag `u8`,
//! normalization scale and translation (4 × `f32`), latent count and length (`u32`)
//! followed by the codes, then per layer its rows and cols (`u32`), the row-major
//! weights and the bias, all `f32`.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use ndarray::{Array1, Array2};

use super::mlp::{Layer, Mlp, MlpConfig};
use super::model::{LatentTable, NeuralField};
use crate::field::Representation;
use crate::geometry::{self, NormalizeTransform};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"GDFN";
const VERSION: u32 = 1;
const ACTIVATION_RELU: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub field: NeuralField,
    pub latents: LatentTable,
    /// Maps original mesh coordinates into the space the field was trained in.
    pub transform: NormalizeTransform,
}

impl Checkpoint {
    pub fn new(field: NeuralField) -> Self {
        Self {
            field,
            latents: LatentTable::default(),
            transform: NormalizeTransform::identity(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.field.config();
        let mut out = Vec::with_capacity(64 + 4 * self.field.mlp.num_parameters());
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        out.push(self.field.representation.tag());
        for v in [
            cfg.depth,
            cfg.width,
            cfg.spatial_dim,
            cfg.latent_len,
            cfg.output_dim,
        ] {
            put_u32(&mut out, v as u32);
        }
        out.push(ACTIVATION_RELU);
        let t = &self.transform;
        for v in [t.scale, t.translation.x, t.translation.y, t.translation.z] {
            put_f32(&mut out, v as f32);
        }
        put_u32(&mut out, self.latents.len() as u32);
        put_u32(&mut out, self.latents.code_len() as u32);
        for code in &self.latents.codes {
            code.iter().for_each(|c| put_f32(&mut out, *c));
        }
        for layer in &self.field.mlp.layers {
            put_u32(&mut out, layer.weight.nrows() as u32);
            put_u32(&mut out, layer.weight.ncols() as u32);
            layer.weight.iter().for_each(|w| put_f32(&mut out, *w));
            layer.bias.iter().for_each(|b| put_f32(&mut out, *b));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader {
            bytes,
            pos: 0,
            path,
        };
        if r.take(4)? != MAGIC {
            return Err(Error::format(path, 0, "not a GDFN checkpoint"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(
                path,
                0,
                format!("unsupported GDFN version {version}"),
            ));
        }
        let representation = Representation::from_tag(r.u8()?)?;
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let config = MlpConfig::new(dims[0], dims[1], dims[2], dims[3], dims[4]);
        config.validate()?;
        let activation = r.u8()?;
        if activation != ACTIVATION_RELU {
            return Err(Error::format(
                path,
                0,
                format!("unknown activation tag {activation}"),
            ));
        }
        let scale = r.f32()? as f64;
        let translation = Vector3::new(r.f32()? as f64, r.f32()? as f64, r.f32()? as f64);
        let count = r.u32()? as usize;
        let len = r.u32()? as usize;
        if count > 0 && len != config.latent_len {
            return Err(Error::format(
                path,
                0,
                format!(
                    "latent length {len} does not match network input ({})",
                    config.latent_len
                ),
            ));
        }
        let mut codes = Vec::with_capacity(count);
        for _ in 0..count {
            codes.push(r.f32s(len)?);
        }
        let mut layers = Vec::with_capacity(config.depth);
        for (l, (fan_out, fan_in)) in config.layer_shapes().into_iter().enumerate() {
            let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
            if (rows, cols) != (fan_out, fan_in) {
                return Err(Error::format(
                    path,
                    0,
                    format!("layer {l} is {rows}x{cols}, expected {fan_out}x{fan_in}"),
                ));
            }
            let weight =
                Array2::from_shape_vec((rows, cols), r.f32s(rows * cols)?).expect("sized buffer");
            let bias = Array1::from_vec(r.f32s(rows)?);
            layers.push(Layer { weight, bias });
        }
        if r.pos != bytes.len() {
            return Err(Error::format(path, 0, "trailing bytes after last layer"));
        }
        Ok(Self {
            field: NeuralField::new(Mlp { config, layers }, representation)?,
            latents: LatentTable { codes },
            transform: NormalizeTransform { scale, translation },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&geometry::read_all(path)?, path)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32(out: &mut Vec<u8>, v: f32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::format(
                self.path,
                0,
                format!("truncated at byte {}", self.pos),
            ));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.saturating_mul(4))?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
