//! The typed token vocabulary.
//!
//! Seven token types are partitioned into a metric family (tempo,
//! position/bar, chord), a note family (pitch, duration, velocity) and a
//! track family. Every type has its own `[ignore]` filler; tempo and chord
//! additionally have `[conti]`. Global ids are assigned in a fixed order:
//! base values type by type (family tokens last), then the specials, then
//! `[BOS]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::sampling::{SamplingPolicy, TypePolicy};
use crate::symbolic::{ChordLabel, GridConfig, Ranges};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VocabError {
    #[error("inconsistent configuration: {0}")]
    Config(String),
    #[error("value {value} is not valid for {ty}")]
    UnknownValue { ty: &'static str, value: String },
    #[error("unknown token id {0}")]
    UnknownId(u32),
    #[error("cannot parse token `{0}`")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Conditional,
    Unconditional,
}

impl FromStr for Task {
    type Err = VocabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "conditional" | "cond" => Ok(Task::Conditional),
            "unconditional" | "uncond" => Ok(Task::Unconditional),
            _ => Err(VocabError::Parse(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TokenType {
    Track,
    Tempo,
    PositionBar,
    Chord,
    Pitch,
    Duration,
    Velocity,
}

impl TokenType {
    pub const ALL: [TokenType; 7] = [
        TokenType::Track,
        TokenType::Tempo,
        TokenType::PositionBar,
        TokenType::Chord,
        TokenType::Pitch,
        TokenType::Duration,
        TokenType::Velocity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TokenType::Track => "track",
            TokenType::Tempo => "tempo",
            TokenType::PositionBar => "position/bar",
            TokenType::Chord => "chord",
            TokenType::Pitch => "pitch",
            TokenType::Duration => "duration",
            TokenType::Velocity => "velocity",
        }
    }

    pub fn family(self) -> Family {
        match self {
            TokenType::Track => Family::Track,
            TokenType::Tempo | TokenType::PositionBar | TokenType::Chord => Family::Metric,
            TokenType::Pitch | TokenType::Duration | TokenType::Velocity => Family::Note,
        }
    }

    pub fn has_conti(self) -> bool {
        matches!(self, TokenType::Tempo | TokenType::Chord)
    }

    fn ordinal(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TokenType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Coarse class of a compound word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Track,
    Note,
    Metric,
    Eos,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Track, Family::Note, Family::Metric, Family::Eos];
    /// Row of the family embedding table reserved for the start word.
    pub const BOS_ROW: usize = 4;

    pub fn name(self) -> &'static str {
        match self {
            Family::Track => "track",
            Family::Note => "note",
            Family::Metric => "metric",
            Family::Eos => "eos",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Family> {
        Family::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrackKind {
    LeadSheet,
    Piano,
}

/// One vocabulary symbol with its semantic value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Track(TrackKind),
    /// 1-based tempo class.
    Tempo(u8),
    Bar,
    /// 0-based grid position within the bar; shown 1-based.
    Position(u8),
    Chord(ChordLabel),
    /// MIDI pitch.
    Pitch(u8),
    /// Duration class.
    Duration(u8),
    /// 1-based velocity class.
    Velocity(u8),
    Ignore(TokenType),
    Conti(TokenType),
    Family(Family),
    Bos,
}

impl Token {
    pub const EOS: Token = Token::Family(Family::Eos);

    pub fn token_type(self) -> Option<TokenType> {
        Some(match self {
            Token::Track(_) => TokenType::Track,
            Token::Tempo(_) => TokenType::Tempo,
            Token::Bar | Token::Position(_) => TokenType::PositionBar,
            Token::Chord(_) => TokenType::Chord,
            Token::Pitch(_) => TokenType::Pitch,
            Token::Duration(_) => TokenType::Duration,
            Token::Velocity(_) => TokenType::Velocity,
            Token::Ignore(t) | Token::Conti(t) => t,
            Token::Family(_) | Token::Bos => return None,
        })
    }

    pub fn is_special(self) -> bool {
        matches!(self, Token::Ignore(_) | Token::Conti(_) | Token::Bos)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Track(TrackKind::LeadSheet) => f.write_str("track=leadsheet"),
            Token::Track(TrackKind::Piano) => f.write_str("track=piano"),
            Token::Tempo(c) => write!(f, "tempo={c}"),
            Token::Bar => f.write_str("bar"),
            Token::Position(p) => write!(f, "position={}", u32::from(*p) + 1),
            Token::Chord(c) => write!(f, "chord={c}"),
            Token::Pitch(p) => write!(f, "pitch={p}"),
            Token::Duration(d) => write!(f, "duration={d}"),
            Token::Velocity(v) => write!(f, "velocity={v}"),
            Token::Ignore(t) => write!(f, "{}=ignore", t.name()),
            Token::Conti(t) => write!(f, "{}=conti", t.name()),
            Token::Family(fam) => write!(f, "family={}", fam.name()),
            Token::Bos => f.write_str("bos"),
        }
    }
}

impl FromStr for Token {
    type Err = VocabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || VocabError::Parse(s.to_string());
        match s {
            "bar" => return Ok(Token::Bar),
            "bos" => return Ok(Token::Bos),
            "eos" => return Ok(Token::EOS),
            _ => {}
        }
        let (ty, value) = s.split_once('=').ok_or_else(err)?;
        let num = || value.parse::<u8>().map_err(|_| err());
        if ty == "family" {
            return Family::ALL
                .into_iter()
                .find(|f| f.name() == value)
                .map(Token::Family)
                .ok_or_else(err);
        }
        let token_type = TokenType::ALL
            .into_iter()
            .find(|t| t.name() == ty || (ty == "position" && *t == TokenType::PositionBar))
            .ok_or_else(err)?;
        match value {
            "ignore" => return Ok(Token::Ignore(token_type)),
            "conti" if token_type.has_conti() => return Ok(Token::Conti(token_type)),
            _ => {}
        }
        Ok(match token_type {
            TokenType::Track => match value {
                "leadsheet" => Token::Track(TrackKind::LeadSheet),
                "piano" => Token::Track(TrackKind::Piano),
                _ => return Err(err()),
            },
            TokenType::Tempo => Token::Tempo(num()?),
            TokenType::PositionBar => match value {
                "bar" => Token::Bar,
                _ => Token::Position(num()?.checked_sub(1).ok_or_else(err)?),
            },
            TokenType::Chord => Token::Chord(value.parse().map_err(|_| err())?),
            TokenType::Pitch => Token::Pitch(num()?),
            TokenType::Duration => Token::Duration(num()?),
            TokenType::Velocity => Token::Velocity(num()?),
        })
    }
}

/// Per-type counts and configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TypeInfo {
    pub ty: TokenType,
    pub base: usize,
    pub specials: usize,
    pub embed_dim: usize,
}

impl TypeInfo {
    /// Number of classes of this type's output head.
    pub fn classes(&self) -> usize {
        self.base + self.specials
    }

    pub fn ignore_index(&self) -> usize {
        self.base
    }

    pub fn conti_index(&self) -> Option<usize> {
        (self.specials > 1).then_some(self.base + 1)
    }
}

pub const FAMILY_EMBED_DIM: usize = 32;

/// Embedding width of each type at full model scale.
pub fn paper_embed_dim(ty: TokenType) -> usize {
    match ty {
        TokenType::Track => 3,
        TokenType::Tempo => 128,
        TokenType::PositionBar => 64,
        TokenType::Chord => 256,
        TokenType::Pitch => 512,
        TokenType::Duration => 128,
        TokenType::Velocity => 128,
    }
}

pub fn default_type_policy(ty: TokenType) -> TypePolicy {
    let (temperature, top_p) = match ty {
        TokenType::Track => (1.0, 0.90),
        TokenType::Tempo => (1.2, 0.90),
        TokenType::PositionBar => (1.2, 1.00),
        TokenType::Chord => (1.0, 0.99),
        TokenType::Pitch => (1.0, 0.90),
        TokenType::Duration => (2.0, 0.90),
        TokenType::Velocity => (5.0, 1.00),
    };
    TypePolicy { temperature, top_p }
}

pub fn default_family_policy() -> TypePolicy {
    TypePolicy {
        temperature: 1.0,
        top_p: 0.90,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pub task: Task,
    pub grid: GridConfig,
    pub ranges: Ranges,
    infos: [TypeInfo; 7],
    offsets: [usize; 7],
    family_offset: usize,
    special_offset: usize,
}

#[derive(Debug, Serialize)]
struct ManifestType<'a> {
    name: &'a str,
    family: &'a str,
    active: bool,
    embed_dim: usize,
    values: Vec<(String, u32)>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    task: Task,
    grid: GridConfig,
    ranges: Ranges,
    types: Vec<ManifestType<'a>>,
    families: Vec<(String, u32)>,
    active_families: Vec<&'a str>,
    bos: u32,
    base_size: usize,
    special_count: usize,
}

impl Vocabulary {
    pub fn new(task: Task) -> Self {
        Self::build(task, GridConfig::default(), Ranges::default()).expect("default vocabulary")
    }

    pub fn build(task: Task, grid: GridConfig, ranges: Ranges) -> Result<Self, VocabError> {
        grid.validate().map_err(|e| VocabError::Config(e.to_string()))?;
        ranges.validate().map_err(|e| VocabError::Config(e.to_string()))?;
        if grid.positions_per_bar > 255 {
            return Err(VocabError::Config("too many positions per bar".into()));
        }
        if ranges.tempo_classes == 0 || ranges.velocity_classes == 0 {
            return Err(VocabError::Config("empty class range".into()));
        }
        let base = |ty: TokenType| match ty {
            TokenType::Track => 2,
            TokenType::Tempo => usize::from(ranges.tempo_classes),
            TokenType::PositionBar => grid.positions_per_bar as usize + 1,
            TokenType::Chord => ChordLabel::count(),
            TokenType::Pitch => ranges.pitch_count(),
            TokenType::Duration => usize::from(ranges.duration_classes),
            TokenType::Velocity => usize::from(ranges.velocity_classes),
        };
        let infos = TokenType::ALL.map(|ty| TypeInfo {
            ty,
            base: base(ty),
            specials: if ty.has_conti() { 2 } else { 1 },
            embed_dim: paper_embed_dim(ty),
        });
        let mut offsets = [0usize; 7];
        let mut next = 0;
        for (i, info) in infos.iter().enumerate() {
            offsets[i] = next;
            next += info.base;
        }
        let family_offset = next;
        let special_offset = family_offset + Family::ALL.len();
        Ok(Self {
            task,
            grid,
            ranges,
            infos,
            offsets,
            family_offset,
            special_offset,
        })
    }

    /// The token types modelled for this task, in column order.
    pub fn types(&self) -> &'static [TokenType] {
        match self.task {
            Task::Conditional => &TokenType::ALL,
            Task::Unconditional => &TokenType::ALL[1..],
        }
    }

    /// Number of modelled token types (K).
    pub fn k(&self) -> usize {
        self.types().len()
    }

    pub fn families(&self) -> &'static [Family] {
        match self.task {
            Task::Conditional => &[Family::Track, Family::Note, Family::Metric],
            Task::Unconditional => &[Family::Eos, Family::Note, Family::Metric],
        }
    }

    pub fn info(&self, ty: TokenType) -> &TypeInfo {
        &self.infos[ty.ordinal()]
    }

    /// Column of `ty` within compound words of this task.
    pub fn column(&self, ty: TokenType) -> Option<usize> {
        self.types().iter().position(|&t| t == ty)
    }

    /// Size of the non-special vocabulary including family tokens.
    pub fn base_size(&self) -> usize {
        self.special_offset
    }

    pub fn special_count(&self) -> usize {
        self.infos.iter().map(|i| i.specials).sum()
    }

    /// All ids including `[BOS]`.
    pub fn len(&self) -> usize {
        self.base_size() + self.special_count() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bos_id(&self) -> u32 {
        (self.len() - 1) as u32
    }

    fn unknown(&self, ty: TokenType, token: Token) -> VocabError {
        VocabError::UnknownValue {
            ty: ty.name(),
            value: token.to_string(),
        }
    }

    /// Index of `token` inside its type's head (base values, then specials).
    pub fn local_index(&self, token: Token) -> Result<(TokenType, usize), VocabError> {
        let ty = token.token_type().ok_or(VocabError::Parse(token.to_string()))?;
        let info = self.info(ty);
        let bad = || self.unknown(ty, token);
        let idx = match token {
            Token::Track(TrackKind::LeadSheet) => 0,
            Token::Track(TrackKind::Piano) => 1,
            Token::Tempo(c) => usize::from(c).checked_sub(1).ok_or_else(bad)?,
            Token::Position(p) => usize::from(p),
            Token::Bar => info.base - 1,
            Token::Chord(label) => label.index(),
            Token::Pitch(p) => usize::from(p)
                .checked_sub(usize::from(self.ranges.pitch_min))
                .ok_or_else(bad)?,
            Token::Duration(d) | Token::Velocity(d) => usize::from(d).checked_sub(1).ok_or_else(bad)?,
            Token::Ignore(_) => info.ignore_index(),
            Token::Conti(_) => info.conti_index().ok_or_else(bad)?,
            Token::Family(_) | Token::Bos => unreachable!(),
        };
        let in_base = !token.is_special();
        if in_base && idx >= info.base {
            return Err(bad());
        }
        if matches!(token, Token::Position(p) if usize::from(p) >= info.base - 1) {
            return Err(bad());
        }
        Ok((ty, idx))
    }

    /// Inverse of [`Vocabulary::local_index`].
    pub fn token_at(&self, ty: TokenType, index: usize) -> Option<Token> {
        let info = self.info(ty);
        if index >= info.classes() {
            return None;
        }
        if index == info.ignore_index() {
            return Some(Token::Ignore(ty));
        }
        if Some(index) == info.conti_index() {
            return Some(Token::Conti(ty));
        }
        Some(match ty {
            TokenType::Track => Token::Track(if index == 0 { TrackKind::LeadSheet } else { TrackKind::Piano }),
            TokenType::Tempo => Token::Tempo(index as u8 + 1),
            TokenType::PositionBar if index == info.base - 1 => Token::Bar,
            TokenType::PositionBar => Token::Position(index as u8),
            TokenType::Chord => Token::Chord(ChordLabel::from_index(index)?),
            TokenType::Pitch => Token::Pitch(index as u8 + self.ranges.pitch_min),
            TokenType::Duration => Token::Duration(index as u8 + 1),
            TokenType::Velocity => Token::Velocity(index as u8 + 1),
        })
    }

    pub fn token_to_id(&self, token: Token) -> Result<u32, VocabError> {
        match token {
            Token::Bos => Ok(self.bos_id()),
            Token::Family(f) => Ok((self.family_offset + f.index()) as u32),
            _ => {
                let (ty, idx) = self.local_index(token)?;
                let info = self.info(ty);
                if idx < info.base {
                    return Ok((self.offsets[ty.ordinal()] + idx) as u32);
                }
                // specials: every type's [ignore], then the [conti] tokens
                let id = match token {
                    Token::Ignore(t) => self.special_offset + t.ordinal(),
                    Token::Conti(t) => {
                        let conti_types = TokenType::ALL.iter().filter(|t| t.has_conti());
                        let rank = conti_types.clone().position(|&c| c == t).unwrap_or(0);
                        self.special_offset + TokenType::ALL.len() + rank
                    }
                    _ => unreachable!(),
                };
                Ok(id as u32)
            }
        }
    }

    pub fn id_to_token(&self, id: u32) -> Result<Token, VocabError> {
        let i = id as usize;
        if i < self.family_offset {
            let t = self.offsets.iter().rposition(|&o| o <= i).expect("offset 0");
            let ty = TokenType::ALL[t];
            return self.token_at(ty, i - self.offsets[t]).ok_or(VocabError::UnknownId(id));
        }
        if i < self.special_offset {
            return Ok(Token::Family(Family::ALL[i - self.family_offset]));
        }
        let s = i - self.special_offset;
        if s < TokenType::ALL.len() {
            return Ok(Token::Ignore(TokenType::ALL[s]));
        }
        let conti: Vec<TokenType> = TokenType::ALL.into_iter().filter(|t| t.has_conti()).collect();
        if let Some(&t) = conti.get(s - TokenType::ALL.len()) {
            return Ok(Token::Conti(t));
        }
        if id == self.bos_id() {
            return Ok(Token::Bos);
        }
        Err(VocabError::UnknownId(id))
    }

    /// Embedding widths scaled from the full-size table by `scale`
    /// (rounded up, at least 1).
    pub fn scaled_embed_dims(&self, scale: f64) -> (Vec<usize>, usize) {
        let dims = self
            .types()
            .iter()
            .map(|&t| ((self.info(t).embed_dim as f64 * scale).ceil() as usize).max(1))
            .collect();
        let fam = ((FAMILY_EMBED_DIM as f64 * scale).ceil() as usize).max(1);
        (dims, fam)
    }

    pub fn default_policy(&self) -> SamplingPolicy {
        SamplingPolicy {
            family: default_family_policy(),
            per_type: self.types().iter().map(|&t| (t, default_type_policy(t))).collect(),
        }
    }

    fn manifest(&self) -> Manifest<'_> {
        let types = TokenType::ALL
            .iter()
            .map(|&ty| {
                let info = self.info(ty);
                let values = (0..info.classes())
                    .map(|i| {
                        let tok = self.token_at(ty, i).expect("index in range");
                        (tok.to_string(), self.token_to_id(tok).expect("valid token"))
                    })
                    .collect();
                ManifestType {
                    name: ty.name(),
                    family: ty.family().name(),
                    active: self.column(ty).is_some(),
                    embed_dim: info.embed_dim,
                    values,
                }
            })
            .collect();
        Manifest {
            task: self.task,
            grid: self.grid,
            ranges: self.ranges,
            types,
            families: Family::ALL
                .iter()
                .map(|&f| (f.name().to_string(), self.token_to_id(Token::Family(f)).expect("family")))
                .collect(),
            active_families: self.families().iter().map(|f| f.name()).collect(),
            bos: self.bos_id(),
            base_size: self.base_size(),
            special_count: self.special_count(),
        }
    }

    /// JSON listing of every type's ordered value names with their ids.
    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes")
    }

    /// SHA-256 of the compact manifest; identifies compatible artifacts.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_vec(&self.manifest()).expect("manifest serializes");
        hex::encode(Sha256::digest(compact))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::Quality;

    #[test]
    fn table_counts() {
        let v = Vocabulary::new(Task::Conditional);
        let sizes: Vec<(usize, usize)> =
            TokenType::ALL.iter().map(|&t| (v.info(t).base, v.info(t).specials)).collect();
        assert_eq!(sizes, vec![(2, 1), (58, 2), (17, 1), (133, 2), (86, 1), (17, 1), (24, 1)]);
        assert_eq!(v.base_size(), 341);
        assert_eq!(v.special_count(), 9);
        assert_eq!(v.k(), 7);
        assert_eq!(Vocabulary::new(Task::Unconditional).k(), 6);
    }

    #[test]
    fn families_per_task() {
        assert_eq!(
            Vocabulary::new(Task::Unconditional).families(),
            &[Family::Eos, Family::Note, Family::Metric]
        );
        assert_eq!(
            Vocabulary::new(Task::Conditional).families(),
            &[Family::Track, Family::Note, Family::Metric]
        );
    }

    #[test]
    fn pitch_type_and_family() {
        let v = Vocabulary::new(Task::Conditional);
        let id = v.token_to_id(Token::Pitch(60)).unwrap();
        let tok = v.id_to_token(id).unwrap();
        assert_eq!(tok, Token::Pitch(60));
        assert_eq!(tok.token_type().unwrap().family(), Family::Note);
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let v = Vocabulary::new(Task::Conditional);
        assert!(v.token_to_id(Token::Pitch(21)).is_err());
        assert!(v.token_to_id(Token::Pitch(108)).is_err());
        assert!(v.token_to_id(Token::Tempo(0)).is_err());
        assert!(v.token_to_id(Token::Tempo(59)).is_err());
        assert!(v.token_to_id(Token::Position(16)).is_err());
        assert!(v.token_to_id(Token::Velocity(25)).is_err());
        assert!(v.token_to_id(Token::Conti(TokenType::Pitch)).is_err());
    }

    #[test]
    fn ids_are_a_bijection() {
        let v = Vocabulary::new(Task::Conditional);
        assert_eq!(v.len(), 351);
        let mut seen = std::collections::HashSet::new();
        for id in 0..v.len() as u32 {
            let tok = v.id_to_token(id).unwrap();
            assert_eq!(v.token_to_id(tok).unwrap(), id, "{tok}");
            assert!(seen.insert(tok));
            let text = tok.to_string();
            assert_eq!(text.parse::<Token>().unwrap(), tok, "{text}");
        }
        assert!(v.id_to_token(351).is_err());
        assert_eq!(
            v.id_to_token(v.token_to_id(Token::Tempo(7)).unwrap()).unwrap(),
            Token::Tempo(7)
        );
    }

    #[test]
    fn fixed_id_layout() {
        let v = Vocabulary::new(Task::Conditional);
        assert_eq!(v.token_to_id(Token::Track(TrackKind::LeadSheet)).unwrap(), 0);
        assert_eq!(v.token_to_id(Token::Tempo(1)).unwrap(), 2);
        assert_eq!(v.token_to_id(Token::Position(0)).unwrap(), 60);
        assert_eq!(v.token_to_id(Token::Bar).unwrap(), 76);
        assert_eq!(v.token_to_id(Token::Chord(ChordLabel::NoChord)).unwrap(), 77);
        assert_eq!(v.token_to_id(Token::Pitch(22)).unwrap(), 210);
        assert_eq!(v.token_to_id(Token::Family(Family::Track)).unwrap(), 337);
        assert_eq!(v.token_to_id(Token::Ignore(TokenType::Track)).unwrap(), 341);
        assert_eq!(v.token_to_id(Token::Conti(TokenType::Chord)).unwrap(), 349);
        assert_eq!(v.bos_id(), 350);
        let c = Token::Chord(ChordLabel::chord(0, Quality::Maj));
        assert_eq!(v.token_to_id(c).unwrap(), 78);
    }

    #[test]
    fn embedding_sizes_grow_with_vocabulary_within_families() {
        let v = Vocabulary::new(Task::Conditional);
        let total: usize = TokenType::ALL.iter().map(|&t| v.info(t).embed_dim).sum::<usize>() + FAMILY_EMBED_DIM;
        assert_eq!(total, 1251);
        for fam in [Family::Note, Family::Metric] {
            let mut members: Vec<&TypeInfo> =
                TokenType::ALL.iter().filter(|t| t.family() == fam).map(|&t| v.info(t)).collect();
            members.sort_by_key(|i| i.base);
            assert!(members.windows(2).all(|w| w[0].embed_dim <= w[1].embed_dim));
        }
    }

    #[test]
    fn hash_depends_on_task() {
        let a = Vocabulary::new(Task::Conditional);
        let b = Vocabulary::new(Task::Unconditional);
        assert_eq!(a.hash(), Vocabulary::new(Task::Conditional).hash());
        assert_ne!(a.hash(), b.hash());
        let m: serde_json::Value = serde_json::from_str(&a.manifest_json()).unwrap();
        assert_eq!(m["base_size"], 341);
    }

    #[test]
    fn inconsistent_grid_is_rejected() {
        let grid = GridConfig {
            ticks_per_beat: 480,
            positions_per_bar: 15,
            beats_per_bar: 4,
        };
        assert!(Vocabulary::build(Task::Conditional, grid, Ranges::default()).is_err());
    }
}
