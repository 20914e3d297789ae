//! Checkpoint container: magic, version, JSON header, then raw f32 arrays.
//!
//! ```text
//! b"CPWCKPT\0" | u32 version | u64 header length | header JSON | f32 LE data...
//! ```
//! Arrays follow the order listed in the header.

use serde::{Deserialize, Serialize};

use super::optim::{Adam, AdamConfig};
use super::params::ModelParams;
use super::{Model, ModelConfig, NeuralError};
use crate::vocab::Vocabulary;

pub const MAGIC: &[u8; 8] = b"CPWCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerMeta {
    pub config: AdamConfig,
    pub t: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub step: u64,
    pub optimizer: Option<OptimizerMeta>,
    /// Free-form run settings stored alongside the weights.
    #[serde(default)]
    pub run: serde_json::Value,
    pub arrays: Vec<ArrayMeta>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: Model<f32>,
    pub adam: Option<Adam<f32>>,
}

pub fn save(
    model: &Model<f32>,
    vocab: &Vocabulary,
    step: u64,
    adam: Option<&Adam<f32>>,
    run: serde_json::Value,
) -> Vec<u8> {
    let mut groups: Vec<(&str, &ModelParams<f32>)> = vec![("", &model.params)];
    if let Some(a) = adam {
        groups.push(("adam.m.", &a.m));
        groups.push(("adam.v.", &a.v));
    }
    let arrays = groups
        .iter()
        .flat_map(|(prefix, p)| {
            p.tensors().into_iter().map(move |t| ArrayMeta {
                name: format!("{prefix}{}", t.name),
                shape: t.shape.clone(),
            })
        })
        .collect();
    let header = CheckpointHeader {
        config: model.config.clone(),
        vocab_hash: vocab.hash(),
        step,
        optimizer: adam.map(|a| OptimizerMeta { config: a.config, t: a.t }),
        run,
        arrays,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, p) in groups {
        for t in p.tensors() {
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

fn bad(msg: impl Into<String>) -> NeuralError {
    NeuralError::Checkpoint(msg.into())
}

pub fn read_header(bytes: &[u8]) -> Result<(CheckpointHeader, usize), NeuralError> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let end = 20usize.checked_add(len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[20..end]).map_err(|e| bad(format!("header: {e}")))?;
    Ok((header, end))
}

/// Parses and checks a checkpoint against `vocab`.
pub fn load(bytes: &[u8], vocab: &Vocabulary) -> Result<Checkpoint, NeuralError> {
    let (header, mut at) = read_header(bytes)?;
    let expected = vocab.hash();
    if header.vocab_hash != expected {
        return Err(NeuralError::VocabMismatch { found: header.vocab_hash, expected });
    }
    header.config.validate(vocab)?;
    let mut params = ModelParams::<f32>::zeros(&header.config, vocab);
    let mut adam = header.optimizer.as_ref().map(|o| {
        let mut a = Adam::new(o.config, &params);
        a.t = o.t;
        a
    });
    let mut metas = header.arrays.iter();
    let mut fill = |prefix: &str, p: &mut ModelParams<f32>| -> Result<(), NeuralError> {
        for t in p.tensors_mut() {
            let meta = metas.next().ok_or_else(|| bad("missing arrays"))?;
            if meta.name != format!("{prefix}{}", t.name) || meta.shape != t.shape {
                return Err(bad(format!("array {} {:?} does not match {} {:?}", meta.name, meta.shape, t.name, t.shape)));
            }
            let n = t.data.len() * 4;
            let chunk = bytes.get(at..at + n).ok_or_else(|| bad(format!("truncated array {}", meta.name)))?;
            for (x, b) in t.data.iter_mut().zip(chunk.chunks_exact(4)) {
                *x = f32::from_le_bytes(b.try_into().expect("4 bytes"));
            }
            at += n;
        }
        Ok(())
    };
    fill("", &mut params)?;
    if let Some(a) = adam.as_mut() {
        fill("adam.m.", &mut a.m)?;
        fill("adam.v.", &mut a.v)?;
    }
    if at != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    let model = Model::new(header.config.clone(), params, vocab)?;
    Ok(Checkpoint { header, model, adam })
}
