//! Mini-batch training loop.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Model, WordIds};
use super::optim::{Adam, AdamConfig};
use super::params::ModelParams;
use super::{NeuralError, Scalar};
use crate::sampling::session_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default)]
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    /// Zero disables periodic checkpoints.
    #[serde(default)]
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 4,
            steps: 200,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

/// Mean per-position negative log-likelihoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nll {
    /// Family head first, then one per type column.
    pub per_head: Vec<f64>,
    /// Mean over the heads.
    pub total: f64,
    pub positions: usize,
}

impl Nll {
    fn from_sums(sums: Vec<f64>, positions: usize) -> Self {
        let p = positions.max(1) as f64;
        let per_head: Vec<f64> = sums.iter().map(|s| s / p).collect();
        let total = per_head.iter().sum::<f64>() / per_head.len().max(1) as f64;
        Nll { per_head, total, positions }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub nll: Nll,
    pub grad_norm: f64,
}

/// Loss and gradient of the batch objective: the mean over heads of each
/// head's per-position mean cross-entropy. Sequences are processed at their
/// own lengths, so no padding enters the loss.
pub fn batch_gradient<T: Scalar>(model: &Model<T>, batch: &[&[WordIds]]) -> Result<(Nll, ModelParams<T>), NeuralError> {
    let positions: usize = batch.iter().map(|s| s.len().saturating_sub(1)).sum();
    let heads = model.k() + 1;
    let scale = T::of(1.0 / (heads as f64 * positions.max(1) as f64));
    let parts: Vec<_> = batch
        .par_iter()
        .map(|seq| {
            let mut g = model.params.zeros_like();
            model.loss(seq, scale, Some(&mut g)).map(|l| (l, g))
        })
        .collect::<Result<_, _>>()?;
    let mut sums = vec![0.0; heads];
    let mut grads = model.params.zeros_like();
    for (l, g) in &parts {
        for (s, v) in sums.iter_mut().zip(&l.per_head) {
            *s += v;
        }
        grads.add_assign(g);
    }
    Ok((Nll::from_sums(sums, positions), grads))
}

/// Teacher-forced NLL over a corpus, no gradients.
pub fn evaluate<T: Scalar>(model: &Model<T>, corpus: &[Vec<WordIds>]) -> Result<Nll, NeuralError> {
    let heads = model.k() + 1;
    let parts: Vec<_> = corpus
        .par_iter()
        .map(|seq| model.loss(seq, T::one(), None))
        .collect::<Result<_, _>>()?;
    let mut sums = vec![0.0; heads];
    let mut positions = 0;
    for l in parts {
        positions += l.positions;
        for (s, v) in sums.iter_mut().zip(&l.per_head) {
            *s += v;
        }
    }
    Ok(Nll::from_sums(sums, positions))
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model<f32>,
    pub adam: Adam<f32>,
    pub step: u64,
    pub config: TrainConfig,
}

impl Trainer {
    pub fn new(model: Model<f32>, config: TrainConfig) -> Self {
        let adam = Adam::new(config.adam, &model.params);
        Self { model, adam, step: 0, config }
    }

    /// Corpus indices used at `step`; depends only on the seed and the step.
    pub fn batch_indices(&self, step: u64, corpus_len: usize) -> Vec<usize> {
        let mut all: Vec<usize> = (0..corpus_len).collect();
        if self.config.batch_size >= corpus_len {
            return all;
        }
        all.shuffle(&mut session_rng(self.config.seed, step + 1));
        all.truncate(self.config.batch_size.max(1));
        all.sort_unstable();
        all
    }

    pub fn train_step(&mut self, corpus: &[Vec<WordIds>]) -> Result<StepReport, NeuralError> {
        let idx = self.batch_indices(self.step, corpus.len());
        let batch: Vec<&[WordIds]> = idx.iter().map(|&i| corpus[i].as_slice()).collect();
        let (nll, grads) = batch_gradient(&self.model, &batch)?;
        if let Some(i) = nll.per_head.iter().position(|v| !v.is_finite()) {
            let head = if i == 0 { "family".to_string() } else { format!("type {}", i - 1) };
            return Err(NeuralError::NonFinite { step: self.step, head });
        }
        let grad_norm = self.adam.update(&mut self.model.params, &grads);
        self.step += 1;
        Ok(StepReport { step: self.step, nll, grad_norm })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::ModelConfig;
    use crate::vocab::{Family, Task, Vocabulary};

    fn corpus(v: &Vocabulary) -> Vec<Vec<WordIds>> {
        let classes: Vec<usize> = v.types().iter().map(|&t| v.info(t).classes()).collect();
        (0..3)
            .map(|s| {
                (0..6)
                    .map(|i| WordIds {
                        family: if i == 0 { Family::BOS_ROW } else { (i + s) % 3 },
                        slots: classes.iter().map(|&m| (i * 3 + s) % m).collect(),
                    })
                    .collect()
            })
            .collect()
    }

    fn small(v: &Vocabulary) -> ModelConfig {
        let mut c = ModelConfig::toy(v);
        c.d_model = 16;
        c.ffn = 32;
        c.max_len = 8;
        c
    }

    #[test]
    fn loss_goes_down_and_is_reproducible() {
        let v = Vocabulary::new(Task::Unconditional);
        let data = corpus(&v);
        let cfg = TrainConfig {
            adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
            batch_size: 2,
            steps: 30,
            seed: 5,
            checkpoint_every: 0,
        };
        let run = || {
            let mut t = Trainer::new(Model::init(small(&v), &v).unwrap(), cfg.clone());
            (0..30).map(|_| t.train_step(&data).unwrap().nll.total).collect::<Vec<f64>>()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a[29] < a[0]);
    }

    #[test]
    fn batch_total_is_mean_of_heads() {
        let v = Vocabulary::new(Task::Conditional);
        let data = corpus(&v);
        let m = Model::<f64>::init(small(&v), &v).unwrap();
        let nll = evaluate(&m, &data).unwrap();
        assert_eq!(nll.per_head.len(), v.k() + 1);
        let mean = nll.per_head.iter().sum::<f64>() / nll.per_head.len() as f64;
        assert!((nll.total - mean).abs() < 1e-12);
        assert_eq!(nll.positions, 15);
    }
}
