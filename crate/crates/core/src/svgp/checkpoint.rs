//! Self-describing JSON checkpoint of a model, its training state and the
//! owner's random stream. Floats are written in shortest round-trip form so a
//! save/load cycle is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::SvgpModel;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const CHECKPOINT_FORMAT: &str = "rbpf-svgp/model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub scalar: String,
    pub model: SvgpModel<T>,
    pub rng: Option<ChaCha8Rng>,
}

impl<T: Real> Checkpoint<T> {
    pub fn new(model: SvgpModel<T>, rng: Option<ChaCha8Rng>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            scalar: std::any::type_name::<T>().to_string(),
            model,
            rng,
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let ck: Self = serde_json::from_reader(r).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        if ck.scalar != std::any::type_name::<T>() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} parameters, expected {}",
                ck.scalar,
                std::any::type_name::<T>()
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}
