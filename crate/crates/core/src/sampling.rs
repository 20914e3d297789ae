//! Temperature-reshaped nucleus sampling, one policy per token type.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::TokenType;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("nucleus threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
    #[error("distribution has no mass")]
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypePolicy {
    pub temperature: f64,
    pub top_p: f64,
}

impl TypePolicy {
    pub fn validate(&self) -> Result<(), SampleError> {
        if !(self.temperature > 0.0) {
            return Err(SampleError::Temperature(self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(SampleError::Threshold(self.top_p));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPolicy {
    pub family: TypePolicy,
    pub per_type: Vec<(TokenType, TypePolicy)>,
}

impl SamplingPolicy {
    pub fn for_type(&self, ty: TokenType) -> TypePolicy {
        self.per_type
            .iter()
            .find(|(t, _)| *t == ty)
            .map(|(_, p)| *p)
            .unwrap_or(self.family)
    }

    pub fn set(&mut self, ty: TokenType, policy: TypePolicy) {
        match self.per_type.iter_mut().find(|(t, _)| *t == ty) {
            Some(slot) => slot.1 = policy,
            None => self.per_type.push((ty, policy)),
        }
    }
}

/// Reproducible generator: ChaCha20 keyed by the seed, one stream per session.
pub fn session_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// softmax(logits / temperature). Entries at negative infinity get zero mass.
pub fn temper(logits: &[f64], temperature: f64) -> Result<Vec<f64>, SampleError> {
    if !(temperature > 0.0) {
        return Err(SampleError::Temperature(temperature));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(SampleError::Degenerate);
    }
    let exps: Vec<f64> = logits.iter().map(|&l| ((l - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Indices of the shortest highest-probability prefix whose mass reaches
/// `top_p`; ties go to the lower index.
pub fn nucleus_candidates(probs: &[f64], top_p: f64) -> Result<Vec<usize>, SampleError> {
    if !(top_p > 0.0 && top_p <= 1.0) {
        return Err(SampleError::Threshold(top_p));
    }
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(SampleError::Degenerate);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    if top_p >= 1.0 {
        return Ok(order);
    }
    let mut cum = 0.0;
    for (n, &i) in order.iter().enumerate() {
        cum += probs[i] / total;
        if cum >= top_p - 1e-12 {
            order.truncate(n + 1);
            break;
        }
    }
    Ok(order)
}

/// Draws from the nucleus of `probs`, renormalized.
pub fn nucleus_sample<R: Rng + ?Sized>(probs: &[f64], top_p: f64, rng: &mut R) -> Result<usize, SampleError> {
    let candidates = nucleus_candidates(probs, top_p)?;
    let mass: f64 = candidates.iter().map(|&i| probs[i]).sum();
    let mut u = rng.gen::<f64>() * mass;
    for &i in &candidates {
        u -= probs[i];
        if u < 0.0 {
            return Ok(i);
        }
    }
    // rounding can leave u a hair above zero; fall back to the last positive entry
    candidates
        .iter()
        .rev()
        .copied()
        .find(|&i| probs[i] > 0.0)
        .ok_or(SampleError::Degenerate)
}

pub fn argmax(logits: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &l) in logits.iter().enumerate() {
        if l.is_nan() {
            continue;
        }
        if best.map_or(true, |b| l > logits[b]) {
            best = Some(i);
        }
    }
    best.filter(|&b| logits[b] > f64::NEG_INFINITY)
}

/// A way of turning one head's logits into a token index.
pub trait TokenSampler: Send + Sync {
    fn name(&self) -> &'static str;
    fn pick(&self, logits: &[f64], policy: TypePolicy, rng: &mut ChaCha20Rng) -> Result<usize, SampleError>;
}

/// Temperature, then nucleus truncation, then a draw.
#[derive(Debug, Default, Clone, Copy)]
pub struct NucleusSampler;

impl TokenSampler for NucleusSampler {
    fn name(&self) -> &'static str {
        "nucleus"
    }

    fn pick(&self, logits: &[f64], policy: TypePolicy, rng: &mut ChaCha20Rng) -> Result<usize, SampleError> {
        let probs = temper(logits, policy.temperature)?;
        nucleus_sample(&probs, policy.top_p, rng)
    }
}

/// Always the most likely index; ignores the policy and the generator.
#[derive(Debug, Default, Clone, Copy)]
pub struct GreedySampler;

impl TokenSampler for GreedySampler {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn pick(&self, logits: &[f64], _policy: TypePolicy, _rng: &mut ChaCha20Rng) -> Result<usize, SampleError> {
        argmax(logits).ok_or(SampleError::Degenerate)
    }
}
