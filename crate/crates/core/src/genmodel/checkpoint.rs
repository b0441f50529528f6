//! Binary model checkpoints and the training-curve sidecar.
//!
//! Layout: `UBAE`, u32 version, u32 header length, JSON header, then every parameter as f32 LE.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::losses::LossWeights;
use super::network::Architecture;
use super::train::TrainingCurves;
use super::Model;
use crate::data::ChannelStats;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"UBAE";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    weights: LossWeights,
    seed: u64,
    stats: Option<ChannelStats>,
    roster: Vec<u32>,
    trained: bool,
    n_params: usize,
}

impl Model {
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            architecture: self.arch.clone(),
            weights: self.weights,
            seed: self.seed,
            stats: self.stats,
            roster: self.roster.clone(),
            trained: self.trained,
            n_params: self.params.len(),
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u32).to_le_bytes())?;
        out.write_all(&json)?;
        let mut buf = Vec::with_capacity(self.params.len() * 4);
        for &p in &self.params {
            buf.extend_from_slice(&(p as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        if &word != MAGIC {
            return Err(Error::Checkpoint("not a model checkpoint".into()));
        }
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        input.read_exact(&mut word)?;
        let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
        input.read_exact(&mut json)?;
        let h: Header = serde_json::from_slice(&json)?;
        let mut raw = Vec::new();
        input.read_to_end(&mut raw)?;
        if raw.len() != h.n_params * 4 {
            return Err(Error::Checkpoint(format!("expected {} parameter bytes, found {}", h.n_params * 4, raw.len())));
        }
        let params = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        Model::from_parts(h.architecture, params, h.seed, h.weights, h.stats, h.roster, h.trained)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(fs::File::open(path)?)
    }
}

/// Sidecar path for a checkpoint: `m.ckpt` → `m.ckpt.curves.json`.
pub fn curves_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".curves.json");
    PathBuf::from(s)
}

pub fn save_curves(path: &Path, curves: &TrainingCurves) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(curves)?)?;
    Ok(())
}

pub fn load_curves(path: &Path) -> Result<TrainingCurves> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = Model::new(Architecture::new(2), vec![4, 9], LossWeights::default(), 5).unwrap();
        m.stats = Some(ChannelStats { means: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6], stds: [1.0, 2.0, 3.0, 1.5, 2.5, 0.5] });
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = Model::read_from(&buf[..]).unwrap();
        assert_eq!(back, m);
        let x = Array2::from_shape_fn((200, 6), |(t, c)| ((t * 3 + c) as f64 * 0.07).cos());
        assert_eq!(back.encode(&x).unwrap(), m.encode(&x).unwrap());
    }

    #[test]
    fn rejects_corrupt_input() {
        let m = Model::new(Architecture::new(2), vec![0, 1], LossWeights::default(), 5).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert!(Model::read_from(&buf[..buf.len() - 1]).is_err());
        buf[0] = b'X';
        assert!(Model::read_from(&buf[..]).is_err());
    }
}
