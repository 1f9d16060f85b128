//! Binary checkpoints of a trained model and its geometry tracker.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic        8 bytes  "BOOTCKPT"
//! version      u32      1
//! n_widths     u32
//! widths       u64 × n_widths   backbone widths, input first
//! classes      u64
//! k            u64
//! n_params     u64
//! params       f64 × n_params   backbone (weight, bias) per layer,
//!                               classifier weight, head weight, head bias
//! initialized  u8
//! spacing      u8               0 uniform, 1 cosine
//! beta_mu      f64
//! beta_r       f64
//! r_ref        f64
//! mu           f64 × feature dim
//! ```
//!
//! Files contain no timestamps, so identical runs give identical bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{GeometryState, ShellSpacing};
use crate::model::{Backbone, Classifier, Dense, ModelState, RadiusHead};
use crate::numeric::Matrix;

const MAGIC: &[u8; 8] = b"BOOTCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelState,
    pub geometry: GeometryState,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let mut widths = vec![m.backbone.input_dim()];
        widths.extend(m.backbone.layers.iter().map(Dense::out_dim));
        out.extend_from_slice(&(widths.len() as u32).to_le_bytes());
        for w in widths {
            out.extend_from_slice(&(w as u64).to_le_bytes());
        }
        out.extend_from_slice(&(m.classifier.classes() as u64).to_le_bytes());
        out.extend_from_slice(&(m.head.shells() as u64).to_le_bytes());
        let flat = m.to_flat();
        out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
        for v in flat {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let g = &self.geometry;
        out.push(u8::from(g.is_initialized()));
        out.push(g.spacing.tag());
        for v in [g.beta_mu, g.beta_r, g.r_ref].into_iter().chain(g.mu.iter().copied()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::CorruptHeader("not a checkpoint".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::CorruptHeader(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let n_widths = r.u32()? as usize;
        if !(2..=64).contains(&n_widths) {
            return Err(Error::CorruptHeader(format!("implausible layer count {n_widths}")));
        }
        let widths = (0..n_widths).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let classes = r.usize()?;
        let k = r.usize()?;
        let n_params = r.usize()?;
        let m = widths[n_widths - 1];

        let backbone = Backbone::new(widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect())?;
        let mut model = ModelState {
            backbone,
            classifier: Classifier::new(Matrix::zeros(classes, m))?,
            head: RadiusHead::zeros(m, k)?,
        };
        if n_params != model.num_params() {
            return Err(Error::DimMismatch {
                declared: n_params,
                found: model.num_params(),
            });
        }
        let flat = (0..n_params).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        model.set_flat(&flat)?;

        let initialized = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::CorruptHeader(format!("bad geometry flag {other}"))),
        };
        let spacing =
            ShellSpacing::from_tag(r.u8()?).ok_or_else(|| Error::CorruptHeader("unknown shell spacing tag".into()))?;
        let beta_mu = r.f64()?;
        let beta_r = r.f64()?;
        let r_ref = r.f64()?;
        let mu = (0..m).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(Error::DimMismatch {
                declared: r.pos,
                found: bytes.len(),
            });
        }
        let geometry = if initialized {
            GeometryState::with_state(mu, r_ref, k, spacing, beta_mu, beta_r)?
        } else {
            GeometryState::new(m, k, spacing, beta_mu, beta_r)?
        };
        Ok(Self { model, geometry })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::DimMismatch {
                declared: self.pos.saturating_add(n),
                found: self.bytes.len(),
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= 1 << 32)
            .ok_or_else(|| Error::CorruptHeader(format!("implausible size {v}")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
