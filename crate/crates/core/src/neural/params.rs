//! Named parameter tensors of the model.

use rand_distr::{Distribution, Normal};

use super::{ModelConfig, Scalar};
use crate::sampling::session_rng;
use crate::vocab::{Family, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], value: T) -> Self {
        let mut t = Self::zeros(name, shape);
        t.data.fill(value);
        t
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[T] {
        let w = self.shape[1];
        &self.data[r * w..(r + 1) * w]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        let w = self.shape[1];
        &mut self.data[r * w..(r + 1) * w]
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            name: self.name.clone(),
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::of(x.f64())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_g: Tensor<T>,
    pub ln1_b: Tensor<T>,
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
    pub ln2_g: Tensor<T>,
    pub ln2_b: Tensor<T>,
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

/// All trainable weights. Linear maps are stored `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    /// One table per modelled type, `[classes, width]`.
    pub type_emb: Vec<Tensor<T>>,
    /// Four family rows plus the start-word row.
    pub fam_emb: Tensor<T>,
    pub w_in: Tensor<T>,
    pub b_in: Tensor<T>,
    pub pos: Tensor<T>,
    pub layers: Vec<LayerParams<T>>,
    pub lnf_g: Tensor<T>,
    pub lnf_b: Tensor<T>,
    pub w_fam: Tensor<T>,
    pub b_fam: Tensor<T>,
    pub w_out: Tensor<T>,
    pub b_out: Tensor<T>,
    pub w_heads: Vec<Tensor<T>>,
    pub b_heads: Vec<Tensor<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// All-zero parameters with the shapes `config` implies; layer-norm gains are 1.
    pub fn zeros(config: &ModelConfig, vocab: &Vocabulary) -> Self {
        let d = config.d_model;
        let types = vocab.types();
        let layers = (0..config.layers)
            .map(|l| {
                let n = |s: &str| format!("layer{l}.{s}");
                LayerParams {
                    ln1_g: Tensor::filled(n("ln1.gain"), &[d], T::one()),
                    ln1_b: Tensor::zeros(n("ln1.bias"), &[d]),
                    wq: Tensor::zeros(n("attn.wq"), &[d, d]),
                    bq: Tensor::zeros(n("attn.bq"), &[d]),
                    wk: Tensor::zeros(n("attn.wk"), &[d, d]),
                    bk: Tensor::zeros(n("attn.bk"), &[d]),
                    wv: Tensor::zeros(n("attn.wv"), &[d, d]),
                    bv: Tensor::zeros(n("attn.bv"), &[d]),
                    wo: Tensor::zeros(n("attn.wo"), &[d, d]),
                    bo: Tensor::zeros(n("attn.bo"), &[d]),
                    ln2_g: Tensor::filled(n("ln2.gain"), &[d], T::one()),
                    ln2_b: Tensor::zeros(n("ln2.bias"), &[d]),
                    w1: Tensor::zeros(n("ffn.w1"), &[config.ffn, d]),
                    b1: Tensor::zeros(n("ffn.b1"), &[config.ffn]),
                    w2: Tensor::zeros(n("ffn.w2"), &[d, config.ffn]),
                    b2: Tensor::zeros(n("ffn.b2"), &[d]),
                }
            })
            .collect();
        ModelParams {
            type_emb: types
                .iter()
                .zip(&config.embed_dims)
                .map(|(&t, &w)| Tensor::zeros(format!("embed.{}", t.name()), &[vocab.info(t).classes(), w]))
                .collect(),
            fam_emb: Tensor::zeros("embed.family", &[config.family_rows(), config.family_dim]),
            w_in: Tensor::zeros("input.w", &[d, config.concat_dim()]),
            b_in: Tensor::zeros("input.b", &[d]),
            pos: Tensor::zeros("input.position", &[config.max_len, d]),
            layers,
            lnf_g: Tensor::filled("final_norm.gain", &[d], T::one()),
            lnf_b: Tensor::zeros("final_norm.bias", &[d]),
            w_fam: Tensor::zeros("head.family.w", &[Family::ALL.len(), d]),
            b_fam: Tensor::zeros("head.family.b", &[Family::ALL.len()]),
            w_out: Tensor::zeros("head.out.w", &[d, d + config.family_dim]),
            b_out: Tensor::zeros("head.out.b", &[d]),
            w_heads: types
                .iter()
                .map(|&t| Tensor::zeros(format!("head.{}.w", t.name()), &[vocab.info(t).classes(), d]))
                .collect(),
            b_heads: types
                .iter()
                .map(|&t| Tensor::zeros(format!("head.{}.b", t.name()), &[vocab.info(t).classes()]))
                .collect(),
        }
    }

    /// Gaussian weights scaled by fan-in, zero biases, unit gains.
    pub fn init(config: &ModelConfig, vocab: &Vocabulary) -> Self {
        let mut p = Self::zeros(config, vocab);
        let mut rng = session_rng(config.seed, 0);
        let residual_scale = 1.0 / (2.0 * config.layers as f64).sqrt();
        let mut fill = |t: &mut Tensor<T>, std: f64| {
            let normal = Normal::new(0.0, std).expect("positive std");
            for x in &mut t.data {
                *x = T::of(normal.sample(&mut rng));
            }
        };
        for e in &mut p.type_emb {
            fill(e, 1.0);
        }
        fill(&mut p.fam_emb, 1.0);
        let fan = |t: &Tensor<T>| 1.0 / (t.shape[1] as f64).sqrt();
        let s = fan(&p.w_in);
        fill(&mut p.w_in, s);
        fill(&mut p.pos, 0.02);
        for l in &mut p.layers {
            for w in [&mut l.wq, &mut l.wk, &mut l.wv] {
                let s = fan(w);
                fill(w, s);
            }
            let s = fan(&l.wo) * residual_scale;
            fill(&mut l.wo, s);
            let s = fan(&l.w1);
            fill(&mut l.w1, s);
            let s = fan(&l.w2) * residual_scale;
            fill(&mut l.w2, s);
        }
        let s = fan(&p.w_fam);
        fill(&mut p.w_fam, s);
        let s = fan(&p.w_out);
        fill(&mut p.w_out, s);
        for w in &mut p.w_heads {
            let s = fan(w);
            fill(w, s);
        }
        p
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v: Vec<&Tensor<T>> = self.type_emb.iter().collect();
        v.extend([&self.fam_emb, &self.w_in, &self.b_in, &self.pos]);
        for l in &self.layers {
            v.extend([
                &l.ln1_g, &l.ln1_b, &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln2_g, &l.ln2_b, &l.w1,
                &l.b1, &l.w2, &l.b2,
            ]);
        }
        v.extend([&self.lnf_g, &self.lnf_b, &self.w_fam, &self.b_fam, &self.w_out, &self.b_out]);
        v.extend(self.w_heads.iter());
        v.extend(self.b_heads.iter());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v: Vec<&mut Tensor<T>> = self.type_emb.iter_mut().collect();
        v.extend([&mut self.fam_emb, &mut self.w_in, &mut self.b_in, &mut self.pos]);
        for l in &mut self.layers {
            v.extend([
                &mut l.ln1_g,
                &mut l.ln1_b,
                &mut l.wq,
                &mut l.bq,
                &mut l.wk,
                &mut l.bk,
                &mut l.wv,
                &mut l.bv,
                &mut l.wo,
                &mut l.bo,
                &mut l.ln2_g,
                &mut l.ln2_b,
                &mut l.w1,
                &mut l.b1,
                &mut l.w2,
                &mut l.b2,
            ]);
        }
        v.extend([
            &mut self.lnf_g,
            &mut self.lnf_b,
            &mut self.w_fam,
            &mut self.b_fam,
            &mut self.w_out,
            &mut self.b_out,
        ]);
        v.extend(self.w_heads.iter_mut());
        v.extend(self.b_heads.iter_mut());
        v
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Same shapes, all zeros (gains included), for gradient accumulation.
    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        for t in g.tensors_mut() {
            t.data.fill(T::zero());
        }
        g
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x = *x + y;
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U> {
            type_emb: Vec::new(),
            fam_emb: self.fam_emb.cast(),
            w_in: self.w_in.cast(),
            b_in: self.b_in.cast(),
            pos: self.pos.cast(),
            layers: Vec::new(),
            lnf_g: self.lnf_g.cast(),
            lnf_b: self.lnf_b.cast(),
            w_fam: self.w_fam.cast(),
            b_fam: self.b_fam.cast(),
            w_out: self.w_out.cast(),
            b_out: self.b_out.cast(),
            w_heads: self.w_heads.iter().map(Tensor::cast).collect(),
            b_heads: self.b_heads.iter().map(Tensor::cast).collect(),
        };
        out.type_emb = self.type_emb.iter().map(Tensor::cast).collect();
        out.layers = self
            .layers
            .iter()
            .map(|l| LayerParams {
                ln1_g: l.ln1_g.cast(),
                ln1_b: l.ln1_b.cast(),
                wq: l.wq.cast(),
                bq: l.bq.cast(),
                wk: l.wk.cast(),
                bk: l.bk.cast(),
                wv: l.wv.cast(),
                bv: l.bv.cast(),
                wo: l.wo.cast(),
                bo: l.bo.cast(),
                ln2_g: l.ln2_g.cast(),
                ln2_b: l.ln2_b.cast(),
                w1: l.w1.cast(),
                b1: l.b1.cast(),
                w2: l.w2.cast(),
                b2: l.b2.cast(),
            })
            .collect();
        out
    }
}
