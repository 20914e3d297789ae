//! Forward pass, typed heads, loss and backward pass.

use super::attention::{causal_linear_attention, causal_linear_attention_backward, AttnState};
use super::ops::{cross_entropy, gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward};
use super::params::ModelParams;
use super::{ModelConfig, NeuralError, Scalar};
use crate::cp::CompoundWord;
use crate::vocab::{Family, Vocabulary};

/// A compound word as table rows: family row plus one class index per column.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WordIds {
    pub family: usize,
    pub slots: Vec<usize>,
}

impl WordIds {
    pub fn of(word: &CompoundWord, vocab: &Vocabulary) -> Result<Self, NeuralError> {
        let (family, slots) = word.indices(vocab).map_err(|e| NeuralError::Word {
            index: 0,
            reason: e.to_string(),
        })?;
        Ok(Self { family, slots })
    }

    pub fn word(&self, vocab: &Vocabulary) -> Option<CompoundWord> {
        CompoundWord::from_indices(vocab, self.family, &self.slots)
    }
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    a: Vec<T>,
    xhat1: Vec<T>,
    rstd1: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    att: Vec<T>,
    b: Vec<T>,
    xhat2: Vec<T>,
    rstd2: Vec<T>,
    f1: Vec<T>,
    g: Vec<T>,
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub len: usize,
    concat: Vec<T>,
    /// Embedded input stream, `[len, d]`.
    pub x0: Vec<T>,
    layers: Vec<LayerCache<T>>,
    /// Residual stream after the last block, before the final norm.
    pub resid: Vec<T>,
    xhatf: Vec<T>,
    rstdf: Vec<T>,
    /// Hidden states `[len, d]`.
    pub h: Vec<T>,
}

/// Summed cross-entropies of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqLoss {
    /// Family head first, then one entry per type column.
    pub per_head: Vec<f64>,
    pub positions: usize,
}

/// Per-layer, per-head attention sums for word-by-word decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState<T> {
    pub t: usize,
    pub attn: Vec<Vec<AttnState<T>>>,
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ModelParams<T>,
    classes: Vec<usize>,
}

fn gather<T: Scalar>(buf: &[T], d: usize, off: usize, w: usize) -> Vec<T> {
    buf.chunks_exact(d).flat_map(|r| r[off..off + w].iter().copied()).collect()
}

fn scatter<T: Scalar>(src: &[T], buf: &mut [T], d: usize, off: usize, w: usize) {
    for (r, s) in buf.chunks_exact_mut(d).zip(src.chunks_exact(w)) {
        r[off..off + w].copy_from_slice(s);
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a = *a + b;
    }
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, params: ModelParams<T>, vocab: &Vocabulary) -> Result<Self, NeuralError> {
        config.validate(vocab)?;
        let classes = vocab.types().iter().map(|&t| vocab.info(t).classes()).collect();
        Ok(Self { config, params, classes })
    }

    pub fn init(config: ModelConfig, vocab: &Vocabulary) -> Result<Self, NeuralError> {
        config.validate(vocab)?;
        let params = ModelParams::init(&config, vocab);
        Self::new(config, params, vocab)
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            classes: self.classes.clone(),
        }
    }

    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    fn check(&self, index: usize, w: &WordIds) -> Result<(), NeuralError> {
        let bad = |reason: String| Err(NeuralError::Word { index, reason });
        if w.family >= self.config.family_rows() {
            return bad(format!("family row {} out of range", w.family));
        }
        if w.slots.len() != self.k() {
            return bad(format!("{} slots, expected {}", w.slots.len(), self.k()));
        }
        for (c, (&s, &n)) in w.slots.iter().zip(&self.classes).enumerate() {
            if s >= n {
                return bad(format!("slot {c} index {s} out of range"));
            }
        }
        Ok(())
    }

    fn concat(&self, w: &WordIds) -> Vec<T> {
        let mut v = Vec::with_capacity(self.config.concat_dim());
        for (table, &s) in self.params.type_emb.iter().zip(&w.slots) {
            v.extend_from_slice(table.row(s));
        }
        v.extend_from_slice(self.params.fam_emb.row(w.family));
        v
    }

    /// Input vector of `word` at position `t`: projected concatenated embeddings plus position.
    pub fn embed(&self, word: &WordIds, t: usize) -> Result<Vec<T>, NeuralError> {
        if t >= self.config.max_len {
            return Err(NeuralError::TooLong { len: t + 1, max: self.config.max_len });
        }
        self.check(t, word)?;
        let d = self.config.d_model;
        let mut x = linear(&self.params.w_in.data, &self.params.b_in.data, &self.concat(word), self.config.concat_dim(), d);
        add_into(&mut x, self.params.pos.row(t));
        Ok(x)
    }

    pub fn forward(&self, words: &[WordIds]) -> Result<Forward<T>, NeuralError> {
        let n = words.len();
        if n > self.config.max_len {
            return Err(NeuralError::TooLong { len: n, max: self.config.max_len });
        }
        for (i, w) in words.iter().enumerate() {
            self.check(i, w)?;
        }
        let d = self.config.d_model;
        let cd = self.config.concat_dim();
        let p = &self.params;
        let concat: Vec<T> = words.iter().flat_map(|w| self.concat(w)).collect();
        let mut x0 = linear(&p.w_in.data, &p.b_in.data, &concat, cd, d);
        add_into(&mut x0, &p.pos.data[..n * d]);

        let (hn, dh, ffn) = (self.config.heads, self.config.head_dim(), self.config.ffn);
        let mut x = x0.clone();
        let mut layers = Vec::with_capacity(p.layers.len());
        for l in &p.layers {
            let (a, xhat1, rstd1) = layer_norm(&x, &l.ln1_g.data, &l.ln1_b.data, d);
            let q = linear(&l.wq.data, &l.bq.data, &a, d, d);
            let k = linear(&l.wk.data, &l.bk.data, &a, d, d);
            let v = linear(&l.wv.data, &l.bv.data, &a, d, d);
            let mut att = vec![T::zero(); n * d];
            for h in 0..hn {
                let o = causal_linear_attention(&gather(&q, d, h * dh, dh), &gather(&k, d, h * dh, dh), &gather(&v, d, h * dh, dh), dh, dh);
                scatter(&o, &mut att, d, h * dh, dh);
            }
            let proj = linear(&l.wo.data, &l.bo.data, &att, d, d);
            add_into(&mut x, &proj);
            let (b, xhat2, rstd2) = layer_norm(&x, &l.ln2_g.data, &l.ln2_b.data, d);
            let f1 = linear(&l.w1.data, &l.b1.data, &b, d, ffn);
            let g: Vec<T> = f1.iter().map(|&u| gelu(u)).collect();
            let f2 = linear(&l.w2.data, &l.b2.data, &g, ffn, d);
            add_into(&mut x, &f2);
            layers.push(LayerCache { a, xhat1, rstd1, q, k, v, att, b, xhat2, rstd2, f1, g });
        }
        let (h, xhatf, rstdf) = layer_norm(&x, &p.lnf_g.data, &p.lnf_b.data, d);
        Ok(Forward { len: n, concat, x0, layers, resid: x, xhatf, rstdf, h })
    }

    pub fn start(&self) -> StepState<T> {
        let dh = self.config.head_dim();
        StepState {
            t: 0,
            attn: (0..self.config.layers)
                .map(|_| (0..self.config.heads).map(|_| AttnState::new(dh, dh)).collect())
                .collect(),
        }
    }

    /// Feeds one word and returns its hidden state, updating the running sums.
    pub fn step(&self, state: &mut StepState<T>, word: &WordIds) -> Result<Vec<T>, NeuralError> {
        let d = self.config.d_model;
        let (dh, ffn) = (self.config.head_dim(), self.config.ffn);
        let mut x = self.embed(word, state.t)?;
        for (l, heads) in self.params.layers.iter().zip(&mut state.attn) {
            let (a, _, _) = layer_norm(&x, &l.ln1_g.data, &l.ln1_b.data, d);
            let q = linear(&l.wq.data, &l.bq.data, &a, d, d);
            let k = linear(&l.wk.data, &l.bk.data, &a, d, d);
            let v = linear(&l.wv.data, &l.bv.data, &a, d, d);
            let mut att = Vec::with_capacity(d);
            for (h, st) in heads.iter_mut().enumerate() {
                let r = h * dh..(h + 1) * dh;
                att.extend(st.push(&q[r.clone()], &k[r.clone()], &v[r]));
            }
            add_into(&mut x, &linear(&l.wo.data, &l.bo.data, &att, d, d));
            let (b, _, _) = layer_norm(&x, &l.ln2_g.data, &l.ln2_b.data, d);
            let g: Vec<T> = linear(&l.w1.data, &l.b1.data, &b, d, ffn).into_iter().map(gelu).collect();
            add_into(&mut x, &linear(&l.w2.data, &l.b2.data, &g, ffn, d));
        }
        state.t += 1;
        let p = &self.params;
        Ok(layer_norm(&x, &p.lnf_g.data, &p.lnf_b.data, d).0)
    }

    /// Logits over the four families (track, note, metric, eos).
    pub fn family_logits(&self, h: &[T]) -> Vec<T> {
        linear(&self.params.w_fam.data, &self.params.b_fam.data, h, self.config.d_model, Family::ALL.len())
    }

    /// `W_out [h ⊕ family embedding]`.
    pub fn head_input(&self, h: &[T], family: usize) -> Vec<T> {
        let d = self.config.d_model;
        let mut cat = h.to_vec();
        cat.extend_from_slice(self.params.fam_emb.row(family));
        linear(&self.params.w_out.data, &self.params.b_out.data, &cat, d + self.config.family_dim, d)
    }

    /// Per-column logits given the family the word belongs to.
    pub fn type_logits(&self, h: &[T], family: usize) -> Vec<Vec<T>> {
        let d = self.config.d_model;
        let hout = self.head_input(h, family);
        self.params
            .w_heads
            .iter()
            .zip(&self.params.b_heads)
            .zip(&self.classes)
            .map(|((w, b), &c)| linear(&w.data, &b.data, &hout, d, c))
            .collect()
    }

    /// Teacher-forced loss of predicting `words[1..]` from `words[..n-1]`.
    /// With `grads`, accumulates `scale * d(Σ CE)/dθ` into it.
    pub fn loss(&self, words: &[WordIds], scale: T, grads: Option<&mut ModelParams<T>>) -> Result<SeqLoss, NeuralError> {
        let k = self.k();
        if words.len() < 2 {
            return Ok(SeqLoss { per_head: vec![0.0; k + 1], positions: 0 });
        }
        let inputs = &words[..words.len() - 1];
        let targets = &words[1..];
        for (i, t) in targets.iter().enumerate() {
            self.check(i + 1, t)?;
            if t.family >= Family::ALL.len() {
                return Err(NeuralError::Word { index: i + 1, reason: "start word cannot be a target".into() });
            }
        }
        let fwd = self.forward(inputs)?;
        let n = fwd.len;
        let d = self.config.d_model;
        let df = self.config.family_dim;
        let p = &self.params;

        let nf = Family::ALL.len();
        let fam_logits = linear(&p.w_fam.data, &p.b_fam.data, &fwd.h, d, nf);
        let mut hcat = Vec::with_capacity(n * (d + df));
        for (t, tgt) in targets.iter().enumerate() {
            hcat.extend_from_slice(&fwd.h[t * d..(t + 1) * d]);
            hcat.extend_from_slice(p.fam_emb.row(tgt.family));
        }
        let hout = linear(&p.w_out.data, &p.b_out.data, &hcat, d + df, d);

        let mut per_head = vec![0.0; k + 1];
        let mut g_fam_logits = vec![T::zero(); n * nf];
        for t in 0..n {
            let l = cross_entropy(&fam_logits[t * nf..(t + 1) * nf], targets[t].family, scale, &mut g_fam_logits[t * nf..(t + 1) * nf]);
            per_head[0] += l.f64();
        }
        let mut g_type_logits = Vec::with_capacity(k);
        for c in 0..k {
            let cls = self.classes[c];
            let logits = linear(&p.w_heads[c].data, &p.b_heads[c].data, &hout, d, cls);
            let mut g = vec![T::zero(); n * cls];
            for t in 0..n {
                let l = cross_entropy(&logits[t * cls..(t + 1) * cls], targets[t].slots[c], scale, &mut g[t * cls..(t + 1) * cls]);
                per_head[c + 1] += l.f64();
            }
            g_type_logits.push(g);
        }
        let loss = SeqLoss { per_head, positions: n };
        let Some(gp) = grads else {
            return Ok(loss);
        };

        // heads
        let mut g_hout = vec![T::zero(); n * d];
        for c in 0..k {
            let (gw, gb) = (&mut gp.w_heads[c].data, &mut gp.b_heads[c].data);
            let gx = linear_backward(&p.w_heads[c].data, &hout, &g_type_logits[c], d, self.classes[c], gw, gb);
            add_into(&mut g_hout, &gx);
        }
        let g_hcat = linear_backward(&p.w_out.data, &hcat, &g_hout, d + df, d, &mut gp.w_out.data, &mut gp.b_out.data);
        let mut g_h = linear_backward(&p.w_fam.data, &fwd.h, &g_fam_logits, d, nf, &mut gp.w_fam.data, &mut gp.b_fam.data);
        for (t, tgt) in targets.iter().enumerate() {
            let row = &g_hcat[t * (d + df)..(t + 1) * (d + df)];
            add_into(&mut g_h[t * d..(t + 1) * d], &row[..d]);
            add_into(gp.fam_emb.row_mut(tgt.family), &row[d..]);
        }
        self.backward(&fwd, inputs, &g_h, gp);
        Ok(loss)
    }

    /// Backpropagates a hidden-state gradient through the stack and embeddings.
    pub fn backward(&self, fwd: &Forward<T>, inputs: &[WordIds], g_h: &[T], gp: &mut ModelParams<T>) {
        let n = fwd.len;
        let d = self.config.d_model;
        let (hn, dh, ffn) = (self.config.heads, self.config.head_dim(), self.config.ffn);
        let p = &self.params;

        let mut gx = layer_norm_backward(g_h, &fwd.xhatf, &fwd.rstdf, &p.lnf_g.data, d, &mut gp.lnf_g.data, &mut gp.lnf_b.data);
        for (li, l) in p.layers.iter().enumerate().rev() {
            let c = &fwd.layers[li];
            let gl = &mut gp.layers[li];
            // feed-forward branch
            let mut g_g = linear_backward(&l.w2.data, &c.g, &gx, ffn, d, &mut gl.w2.data, &mut gl.b2.data);
            for (gi, &u) in g_g.iter_mut().zip(&c.f1) {
                *gi = *gi * gelu_grad(u);
            }
            let g_b = linear_backward(&l.w1.data, &c.b, &g_g, d, ffn, &mut gl.w1.data, &mut gl.b1.data);
            let g_mid = layer_norm_backward(&g_b, &c.xhat2, &c.rstd2, &l.ln2_g.data, d, &mut gl.ln2_g.data, &mut gl.ln2_b.data);
            add_into(&mut gx, &g_mid);
            // attention branch
            let g_att = linear_backward(&l.wo.data, &c.att, &gx, d, d, &mut gl.wo.data, &mut gl.bo.data);
            let mut gq = vec![T::zero(); n * d];
            let mut gk = vec![T::zero(); n * d];
            let mut gv = vec![T::zero(); n * d];
            for h in 0..hn {
                let off = h * dh;
                let (a, b, e) = causal_linear_attention_backward(
                    &gather(&c.q, d, off, dh),
                    &gather(&c.k, d, off, dh),
                    &gather(&c.v, d, off, dh),
                    &gather(&c.att, d, off, dh),
                    &gather(&g_att, d, off, dh),
                    dh,
                    dh,
                );
                scatter(&a, &mut gq, d, off, dh);
                scatter(&b, &mut gk, d, off, dh);
                scatter(&e, &mut gv, d, off, dh);
            }
            let mut g_a = linear_backward(&l.wq.data, &c.a, &gq, d, d, &mut gl.wq.data, &mut gl.bq.data);
            add_into(&mut g_a, &linear_backward(&l.wk.data, &c.a, &gk, d, d, &mut gl.wk.data, &mut gl.bk.data));
            add_into(&mut g_a, &linear_backward(&l.wv.data, &c.a, &gv, d, d, &mut gl.wv.data, &mut gl.bv.data));
            let g_in = layer_norm_backward(&g_a, &c.xhat1, &c.rstd1, &l.ln1_g.data, d, &mut gl.ln1_g.data, &mut gl.ln1_b.data);
            add_into(&mut gx, &g_in);
        }
        add_into(&mut gp.pos.data[..n * d], &gx);
        let cd = self.config.concat_dim();
        let g_concat = linear_backward(&p.w_in.data, &fwd.concat, &gx, cd, d, &mut gp.w_in.data, &mut gp.b_in.data);
        for (t, w) in inputs.iter().enumerate() {
            let mut row = &g_concat[t * cd..(t + 1) * cd];
            for (table, &s) in gp.type_emb.iter_mut().zip(&w.slots) {
                let width = table.shape[1];
                add_into(table.row_mut(s), &row[..width]);
                row = &row[width..];
            }
            add_into(gp.fam_emb.row_mut(w.family), row);
        }
    }
}
