//! Versioned binary parameter files with a JSON metadata sidecar.
//!
//! Layout: 8-byte magic, `u32` version, `u64` count, then every parameter
//! as a little-endian `f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SEMSCKPT";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: Vec<T>,
    pub step: usize,
    pub dev_metric: f64,
    pub lambda: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub scalar: String,
    pub num_params: usize,
    pub step: usize,
    pub dev_metric: f64,
    pub lambda: Vec<f64>,
    pub seed: u64,
    pub config_hash: String,
    /// Scorer-specific description (architecture, vocabulary file, ...).
    #[serde(default)]
    pub model: serde_json::Value,
}

/// SHA-256 of the JSON form of any serializable config.
pub fn config_hash<C: Serialize>(config: &C) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

impl<T: Scalar> Checkpoint<T> {
    pub fn write_params(path: &Path, params: &[T]) -> Result<()> {
        let mut buf = Vec::with_capacity(20 + 8 * params.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            buf.extend_from_slice(&p.as_f64().to_le_bytes());
        }
        fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn read_params(path: &Path) -> Result<Vec<T>> {
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
        if buf.len() < 20 || &buf[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let count = u64::from_le_bytes(buf[12..20].try_into().unwrap()) as usize;
        let body = &buf[20..];
        if body.len() != count * 8 {
            return Err(bad("truncated parameter block"));
        }
        Ok(body
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }

    /// Writes `path` and its `.json` metadata sidecar.
    pub fn save(&self, path: &Path, seed: u64, config_hash: &str, model: serde_json::Value) -> Result<CheckpointMeta> {
        Self::write_params(path, &self.params)?;
        let meta = CheckpointMeta {
            format_version: CHECKPOINT_VERSION,
            scalar: T::NAME.to_string(),
            num_params: self.params.len(),
            step: self.step,
            dev_metric: self.dev_metric,
            lambda: self.lambda.iter().map(|l| l.as_f64()).collect(),
            seed,
            config_hash: config_hash.to_string(),
            model,
        };
        fs::write(meta_path(path), serde_json::to_string_pretty(&meta)?)?;
        Ok(meta)
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let params = Self::read_params(path)?;
        let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(meta_path(path))?)?;
        if meta.num_params != params.len() {
            return Err(Error::Format("metadata parameter count mismatch".into()));
        }
        Ok((
            Self {
                params,
                step: meta.step,
                dev_metric: meta.dev_metric,
                lambda: meta.lambda.iter().map(|&l| T::of(l)).collect(),
            },
            meta,
        ))
    }
}
