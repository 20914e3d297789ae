//! Binary corpus records and the representations that produce them.
//!
//! A corpus file is a run of records, each `u32 LE row count` followed by
//! `rows × width` `u16 LE` global ids. REMI rows hold one token; CP rows hold
//! K type ids and then the family id.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cp::{group_to_cp, ungroup_from_cp, CpError, CpSeq};
use crate::neural::{NeuralError, WordIds};
use crate::remi::{encode_remi, interleave_conditional, RemiError, TokenSeq};
use crate::symbolic::{LeadSheet, Song};
use crate::vocab::{Task, VocabError, Vocabulary};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Remi(#[from] RemiError),
    #[error(transparent)]
    Cp(#[from] CpError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("conditional encoding needs a lead sheet")]
    MissingLead,
    #[error("corpus file truncated at byte {0}")]
    Truncated(usize),
    #[error("id {0} does not fit in 16 bits")]
    IdOverflow(u32),
    #[error("row of width {found}, expected {expected}")]
    Width { found: usize, expected: usize },
}

/// REMI tokens of one training item: the song alone, or lead and piano interleaved.
pub fn remi_of(lead: Option<&LeadSheet>, piano: &Song, vocab: &Vocabulary) -> Result<TokenSeq, CorpusError> {
    Ok(match vocab.task {
        Task::Unconditional => encode_remi(piano, vocab)?,
        Task::Conditional => interleave_conditional(lead.ok_or(CorpusError::MissingLead)?, piano, vocab)?,
    })
}

/// A sequence representation that can be stored as fixed-width id rows.
pub trait Representation: Send + Sync {
    fn name(&self) -> &'static str;
    fn width(&self, vocab: &Vocabulary) -> usize;
    fn rows(&self, seq: &TokenSeq, vocab: &Vocabulary) -> Result<Vec<Vec<u32>>, CorpusError>;
    fn tokens(&self, rows: &[Vec<u32>], vocab: &Vocabulary) -> Result<TokenSeq, CorpusError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RemiRepr;

impl Representation for RemiRepr {
    fn name(&self) -> &'static str {
        "remi"
    }

    fn width(&self, _vocab: &Vocabulary) -> usize {
        1
    }

    fn rows(&self, seq: &TokenSeq, vocab: &Vocabulary) -> Result<Vec<Vec<u32>>, CorpusError> {
        Ok(seq.to_ids(vocab)?.into_iter().map(|id| vec![id]).collect())
    }

    fn tokens(&self, rows: &[Vec<u32>], vocab: &Vocabulary) -> Result<TokenSeq, CorpusError> {
        let ids: Vec<u32> = rows.iter().flatten().copied().collect();
        Ok(TokenSeq::from_ids(&ids, vocab)?)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct CpRepr;

impl Representation for CpRepr {
    fn name(&self) -> &'static str {
        "cp"
    }

    fn width(&self, vocab: &Vocabulary) -> usize {
        vocab.k() + 1
    }

    fn rows(&self, seq: &TokenSeq, vocab: &Vocabulary) -> Result<Vec<Vec<u32>>, CorpusError> {
        Ok(group_to_cp(seq, vocab)?.to_id_rows(vocab)?)
    }

    fn tokens(&self, rows: &[Vec<u32>], vocab: &Vocabulary) -> Result<TokenSeq, CorpusError> {
        Ok(ungroup_from_cp(&CpSeq::from_id_rows(rows, vocab)?, vocab)?)
    }
}

pub fn write_records(records: &[Vec<Vec<u32>>], width: usize) -> Result<Vec<u8>, CorpusError> {
    let mut out = Vec::new();
    for rec in records {
        out.extend_from_slice(&(rec.len() as u32).to_le_bytes());
        for row in rec {
            if row.len() != width {
                return Err(CorpusError::Width { found: row.len(), expected: width });
            }
            for &id in row {
                let id = u16::try_from(id).map_err(|_| CorpusError::IdOverflow(id))?;
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn read_records(bytes: &[u8], width: usize) -> Result<Vec<Vec<Vec<u32>>>, CorpusError> {
    let mut at = 0;
    let mut out = Vec::new();
    while at < bytes.len() {
        let head = bytes.get(at..at + 4).ok_or(CorpusError::Truncated(at))?;
        let rows = u32::from_le_bytes(head.try_into().expect("4 bytes")) as usize;
        at += 4;
        let n = rows * width * 2;
        let body = bytes.get(at..at + n).ok_or(CorpusError::Truncated(at))?;
        let ids: Vec<u32> = body
            .chunks_exact(2)
            .map(|b| u32::from(u16::from_le_bytes([b[0], b[1]])))
            .collect();
        out.push(ids.chunks(width.max(1)).map(<[u32]>::to_vec).collect());
        at += n;
    }
    Ok(out)
}

/// Metadata written next to a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub representation: String,
    pub task: Task,
    pub width: usize,
    pub vocab_hash: String,
    pub names: Vec<String>,
    /// Settings of the run that wrote the corpus.
    #[serde(default)]
    pub config: serde_json::Value,
}

/// Compound words as model inputs.
pub fn word_ids(cp: &CpSeq, vocab: &Vocabulary) -> Result<Vec<WordIds>, NeuralError> {
    cp.words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            WordIds::of(w, vocab).map_err(|e| match e {
                NeuralError::Word { reason, .. } => NeuralError::Word { index: i, reason },
                other => other,
            })
        })
        .collect()
}
