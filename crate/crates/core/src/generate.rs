//! Autoregressive two-stage decoding with grammar masks.

use thiserror::Error;

use crate::cp::{group_to_cp, CompoundWord, CpError, CpSeq, WordKind};
use crate::neural::{Model, NeuralError, Scalar, StepState, WordIds};
use crate::remi::{interleave_conditional, RemiError};
use crate::sampling::{session_rng, SampleError, SamplingPolicy, TokenSampler};
use crate::symbolic::{LeadSheet, Song};
use crate::vocab::{Family, Task, Token, TokenType, TrackKind, Vocabulary};

#[derive(Debug, Error)]
pub enum GenError {
    #[error(transparent)]
    Model(#[from] NeuralError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Cp(#[from] CpError),
    #[error(transparent)]
    Remi(#[from] RemiError),
    #[error("condition: {0}")]
    Condition(String),
}

/// What the decoder needs from a model: word-by-word hidden states and the two head stages.
pub trait StepModel {
    type State;
    fn begin(&self) -> Self::State;
    /// Longest sequence the model can be fed.
    fn max_len(&self) -> usize;
    fn feed(&self, state: &mut Self::State, word: &WordIds) -> Result<Vec<f64>, NeuralError>;
    fn family_logits(&self, h: &[f64]) -> Vec<f64>;
    fn type_logits(&self, h: &[f64], family: usize) -> Vec<Vec<f64>>;
}

impl<T: Scalar> StepModel for Model<T> {
    type State = StepState<T>;

    fn begin(&self) -> Self::State {
        self.start()
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn feed(&self, state: &mut Self::State, word: &WordIds) -> Result<Vec<f64>, NeuralError> {
        Ok(self.step(state, word)?.into_iter().map(Scalar::f64).collect())
    }

    fn family_logits(&self, h: &[f64]) -> Vec<f64> {
        let h: Vec<T> = h.iter().map(|&x| T::of(x)).collect();
        Model::family_logits(self, &h).into_iter().map(Scalar::f64).collect()
    }

    fn type_logits(&self, h: &[f64], family: usize) -> Vec<Vec<f64>> {
        let h: Vec<T> = h.iter().map(|&x| T::of(x)).collect();
        Model::type_logits(self, &h, family)
            .into_iter()
            .map(|v| v.into_iter().map(Scalar::f64).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub policy: SamplingPolicy,
    pub seed: u64,
    pub stream: u64,
    /// Ceiling on sampled (not force-fed) words.
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub cp: CpSeq,
    pub sampled: usize,
    pub forced: usize,
}

/// Position inside the segment being sampled.
#[derive(Debug, Clone, Copy, Default)]
struct Cursor {
    in_bar: bool,
    pos: Option<u8>,
    last_pitch: Option<u8>,
}

impl Cursor {
    fn advance(&mut self, vocab: &Vocabulary, w: &CompoundWord) {
        match (w.family(), w.get(vocab, TokenType::PositionBar), w.get(vocab, TokenType::Pitch)) {
            (Some(Family::Metric), Some(Token::Bar), _) => *self = Cursor { in_bar: true, ..Cursor::default() },
            (Some(Family::Metric), Some(Token::Position(p)), _) => {
                self.pos = Some(p);
                self.last_pitch = None;
            }
            (Some(Family::Note), _, Some(Token::Pitch(p))) => self.last_pitch = Some(p),
            _ => {}
        }
    }
}

fn masked(logits: &[f64], allow: impl Fn(usize) -> bool) -> Vec<f64> {
    logits
        .iter()
        .enumerate()
        .map(|(i, &l)| if allow(i) { l } else { f64::NEG_INFINITY })
        .collect()
}

struct Sampler<'a> {
    vocab: &'a Vocabulary,
    sampler: &'a dyn TokenSampler,
    policy: &'a SamplingPolicy,
    rng: rand_chacha::ChaCha20Rng,
}

impl Sampler<'_> {
    fn pitch_below(&self, last: Option<u8>) -> bool {
        last.map_or(true, |p| p > self.vocab.ranges.pitch_min)
    }

    /// Draws one word for the piano (or single-track) stream.
    fn word<M: StepModel>(&mut self, model: &M, h: &[f64], cur: Cursor, may_end: bool) -> Result<CompoundWord, GenError> {
        let v = self.vocab;
        let fam = model.family_logits(h);
        let fam = masked(&fam, |i| match Family::from_index(i) {
            Some(Family::Metric) => true,
            Some(Family::Note) => cur.pos.is_some() && self.pitch_below(cur.last_pitch),
            Some(Family::Eos) => may_end && cur.in_bar && v.families().contains(&Family::Eos),
            _ => false,
        });
        let family = Family::from_index(self.sampler.pick(&fam, self.policy.family, &mut self.rng)?).expect("family index");
        let mut word = CompoundWord::blank(WordKind::Family(family), v);
        if family == Family::Eos {
            return Ok(word);
        }
        let heads = model.type_logits(h, family.index());
        let mut chosen: Vec<(TokenType, Token)> = Vec::new();
        // position/bar decides whether tempo and chord are open, so it goes first
        let mut cols: Vec<(usize, TokenType)> = v.types().iter().copied().enumerate().filter(|(_, t)| t.family() == family).collect();
        cols.sort_by_key(|&(_, t)| t != TokenType::PositionBar);
        for (col, ty) in cols {
            let prior_bar = chosen.iter().any(|&(_, t)| t == Token::Bar);
            let pos = chosen.iter().find_map(|&(_, t)| match t {
                Token::Position(p) => Some(p),
                _ => None,
            });
            let allow = |i: usize| -> bool {
                let Some(tok) = v.token_at(ty, i) else { return false };
                match (ty, tok) {
                    (TokenType::PositionBar, Token::Bar) => true,
                    (TokenType::PositionBar, Token::Position(p)) => cur.in_bar && cur.pos.map_or(true, |q| p > q),
                    (TokenType::Tempo | TokenType::Chord, t) => {
                        let on_beat = !prior_bar && pos.is_some_and(|p| v.grid.is_beat(u32::from(p)));
                        if on_beat {
                            !matches!(t, Token::Ignore(_))
                        } else {
                            matches!(t, Token::Ignore(_))
                        }
                    }
                    (TokenType::Pitch, Token::Pitch(p)) => cur.last_pitch.map_or(true, |q| p < q),
                    (TokenType::Duration, Token::Duration(_)) | (TokenType::Velocity, Token::Velocity(_)) => true,
                    _ => false,
                }
            };
            let logits = masked(&heads[col], allow);
            let idx = self.sampler.pick(&logits, self.policy.for_type(ty), &mut self.rng)?;
            let tok = v.token_at(ty, idx).expect("index in range");
            word.set(v, tok);
            chosen.push((ty, tok));
        }
        Ok(word)
    }
}

struct Feeder<'m, M: StepModel> {
    model: &'m M,
    state: M::State,
    fed: usize,
}

impl<M: StepModel> Feeder<'_, M> {
    /// Feeds a word if the window allows; `None` once it is full.
    fn feed(&mut self, vocab: &Vocabulary, w: &CompoundWord) -> Result<Option<Vec<f64>>, GenError> {
        if self.fed >= self.model.max_len() {
            return Ok(None);
        }
        let ids = WordIds::of(w, vocab)?;
        self.fed += 1;
        Ok(Some(self.model.feed(&mut self.state, &ids)?))
    }
}

/// Samples a single-track sequence from the start word until EOS or the step budget.
pub fn generate_unconditional<M: StepModel>(
    model: &M,
    vocab: &Vocabulary,
    sampler: &dyn TokenSampler,
    cfg: &GenConfig,
) -> Result<Generation, GenError> {
    if vocab.task != Task::Unconditional {
        return Err(GenError::Condition("unconditional generation needs the unconditional vocabulary".into()));
    }
    let mut s = Sampler { vocab, sampler, policy: &cfg.policy, rng: session_rng(cfg.seed, cfg.stream) };
    let mut feeder = Feeder { model, state: model.begin(), fed: 0 };
    let bos = CompoundWord::bos(vocab);
    let mut words = vec![bos.clone()];
    let mut h = feeder.feed(vocab, &bos)?;
    let mut cur = Cursor::default();
    let mut sampled = 0;
    while let Some(hidden) = h.take() {
        if sampled >= cfg.max_steps {
            break;
        }
        let w = s.word(model, &hidden, cur, true)?;
        sampled += 1;
        if w.family() == Some(Family::Eos) {
            break;
        }
        cur.advance(vocab, &w);
        words.push(w);
        h = feeder.feed(vocab, words.last().expect("just pushed"))?;
    }
    if !cur.in_bar {
        words.push(CompoundWord::bar(vocab));
    }
    words.push(CompoundWord::eos(vocab));
    Ok(Generation { cp: CpSeq { task: vocab.task, words }, sampled, forced: 1 })
}

/// Compound words of the lead sheet with empty piano segments, split per bar.
pub fn lead_skeleton(lead: &LeadSheet, vocab: &Vocabulary) -> Result<Vec<Vec<CompoundWord>>, GenError> {
    let empty = Song::empty(lead.grid, lead.n_bars);
    let seq = interleave_conditional(lead, &empty, vocab)?;
    let cp = group_to_cp(&seq, vocab)?;
    let mut bars: Vec<Vec<CompoundWord>> = Vec::new();
    for w in cp.words.into_iter().skip(1) {
        if w.get(vocab, TokenType::PositionBar) == Some(Token::Bar) {
            bars.push(Vec::new());
        }
        bars.last_mut().expect("sequence opens with a bar").push(w);
    }
    Ok(bars)
}

/// Force-feeds each lead-sheet bar and samples the piano part that follows it.
pub fn generate_conditional<M: StepModel>(
    model: &M,
    vocab: &Vocabulary,
    lead: &LeadSheet,
    sampler: &dyn TokenSampler,
    cfg: &GenConfig,
) -> Result<Generation, GenError> {
    if vocab.task != Task::Conditional {
        return Err(GenError::Condition("conditional generation needs the conditional vocabulary".into()));
    }
    let bars = lead_skeleton(lead, vocab)?;
    let needed = 1 + bars.iter().map(Vec::len).sum::<usize>();
    if needed > model.max_len() {
        return Err(GenError::Condition(format!(
            "lead sheet needs {needed} words but the window holds {}",
            model.max_len()
        )));
    }
    let mut s = Sampler { vocab, sampler, policy: &cfg.policy, rng: session_rng(cfg.seed, cfg.stream) };
    let mut feeder = Feeder { model, state: model.begin(), fed: 0 };
    let bos = CompoundWord::bos(vocab);
    feeder.feed(vocab, &bos)?;
    let mut words = vec![bos];
    let (mut sampled, mut forced) = (0, 1);
    let mut open = true;
    for bar in bars {
        let mut h = None;
        for w in bar {
            h = if open { feeder.feed(vocab, &w)? } else { None };
            words.push(w);
            forced += 1;
        }
        debug_assert_eq!(words.last().and_then(|w| w.get(vocab, TokenType::Track)), Some(Token::Track(TrackKind::Piano)));
        let mut cur = Cursor { in_bar: true, ..Cursor::default() };
        while let Some(hidden) = h.take() {
            if sampled >= cfg.max_steps {
                open = false;
                break;
            }
            let w = s.word(model, &hidden, cur, false)?;
            sampled += 1;
            if w.get(vocab, TokenType::PositionBar) == Some(Token::Bar) {
                break;
            }
            cur.advance(vocab, &w);
            words.push(w);
            h = feeder.feed(vocab, words.last().expect("just pushed"))?;
            if h.is_none() {
                open = false;
            }
        }
    }
    Ok(Generation { cp: CpSeq { task: vocab.task, words }, sampled, forced })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cp::{ungroup_from_cp, validate_cp};
    use crate::remi::{decode_remi, deinterleave_conditional};
    use crate::sampling::GreedySampler;
    use crate::symbolic::{ChordEvent, ChordLabel, GridConfig, MelodyNote, Onset, Quality};

    /// Heads with fixed preferences: the family cycles metric, note, note, eos;
    /// every type head prefers its lowest class index.
    struct Stub {
        classes: Vec<usize>,
    }

    impl StepModel for Stub {
        type State = usize;
        fn begin(&self) -> usize {
            0
        }
        fn max_len(&self) -> usize {
            64
        }
        fn feed(&self, state: &mut usize, _w: &WordIds) -> Result<Vec<f64>, NeuralError> {
            *state += 1;
            Ok(vec![*state as f64])
        }
        fn family_logits(&self, h: &[f64]) -> Vec<f64> {
            let pick = match h[0] as usize % 4 {
                1 => Family::Metric,
                2 | 3 => Family::Note,
                _ => Family::Eos,
            };
            (0..4).map(|i| if i == pick.index() { 5.0 } else { 0.0 }).collect()
        }
        fn type_logits(&self, _h: &[f64], _f: usize) -> Vec<Vec<f64>> {
            self.classes.iter().map(|&n| (0..n).map(|i| -(i as f64)).collect()).collect()
        }
    }

    fn stub(v: &Vocabulary) -> Stub {
        Stub { classes: v.types().iter().map(|&t| v.info(t).classes()).collect() }
    }

    fn cfg(v: &Vocabulary) -> GenConfig {
        GenConfig { policy: v.default_policy(), seed: 1, stream: 0, max_steps: 40 }
    }

    #[test]
    fn stub_trace() {
        let v = Vocabulary::new(Task::Unconditional);
        let g = generate_unconditional(&stub(&v), &v, &GreedySampler, &cfg(&v)).unwrap();
        assert!(validate_cp(&g.cp, &v).is_empty());
        let seq = ungroup_from_cp(&g.cp, &v).unwrap();
        assert_eq!(seq.to_text(), "bar position=1 tempo=1 chord=N pitch=22 duration=1 velocity=1");
        decode_remi(&seq, &v).unwrap();
        assert_eq!(g.sampled, 4);
    }

    fn lead() -> LeadSheet {
        LeadSheet {
            grid: GridConfig::default(),
            n_bars: 2,
            melody: vec![
                MelodyNote { pitch: 67, onset: Onset::new(0, 0), duration: 4 },
                MelodyNote { pitch: 64, onset: Onset::new(1, 8), duration: 8 },
            ],
            chords: vec![ChordEvent { onset: Onset::new(0, 0), label: ChordLabel::chord(0, Quality::Maj) }],
        }
    }

    #[test]
    fn conditional_keeps_lead_verbatim() {
        let v = Vocabulary::new(Task::Conditional);
        let g = generate_conditional(&stub(&v), &v, &lead(), &GreedySampler, &cfg(&v)).unwrap();
        assert!(validate_cp(&g.cp, &v).is_empty());
        assert!(g.cp.words.iter().all(|w| w.symbol_count() == 8));
        let (l, _piano) = deinterleave_conditional(&ungroup_from_cp(&g.cp, &v).unwrap(), &v).unwrap();
        assert_eq!(l, lead());
    }

    #[test]
    fn window_too_small_for_condition() {
        struct Tiny(Stub);
        impl StepModel for Tiny {
            type State = usize;
            fn begin(&self) -> usize {
                0
            }
            fn max_len(&self) -> usize {
                3
            }
            fn feed(&self, s: &mut usize, w: &WordIds) -> Result<Vec<f64>, NeuralError> {
                self.0.feed(s, w)
            }
            fn family_logits(&self, h: &[f64]) -> Vec<f64> {
                self.0.family_logits(h)
            }
            fn type_logits(&self, h: &[f64], f: usize) -> Vec<Vec<f64>> {
                self.0.type_logits(h, f)
            }
        }
        let v = Vocabulary::new(Task::Conditional);
        let err = generate_conditional(&Tiny(stub(&v)), &v, &lead(), &GreedySampler, &cfg(&v)).unwrap_err();
        assert!(matches!(err, GenError::Condition(_)));
    }
}
