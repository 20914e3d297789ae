use proptest::prelude::*;

use cpword::analysis::{chroma_of, make_leadsheet, recognize_chords, skyline_melody};
use cpword::corpus::{remi_of, word_ids};
use cpword::cp::{group_to_cp, ungroup_from_cp, validate_cp, CpSeq, SongLengths};
use cpword::fixtures::random_song;
use cpword::generate::{generate_conditional, generate_unconditional, GenConfig};
use cpword::metrics::{chord_matchness, melody_matchness};
use cpword::neural::{Model, ModelConfig};
use cpword::remi::{decode_remi, deinterleave_conditional, encode_remi, interleave_conditional};
use cpword::sampling::{argmax, nucleus_candidates, session_rng, temper, NucleusSampler};
use cpword::symbolic::{
    parse_json_song, parse_smf, quantize_raw, serialize_json_song, song_to_raw, write_smf, ChordEvent, ChordLabel,
    GridConfig, Note, Onset, Quality, Ranges, Song,
};
use cpword::vocab::{Task, Token, TokenType, TrackKind, Vocabulary};

fn song(seed: u64) -> Song {
    random_song(&mut session_rng(seed, 0), &Ranges::default(), 6)
}

fn tiny_model(v: &Vocabulary) -> Model<f32> {
    let mut c = ModelConfig::toy(v);
    c.d_model = 16;
    c.ffn = 32;
    c.heads = 2;
    c.layers = 1;
    c.max_len = 160;
    Model::init(c, v).expect("valid config")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn json_round_trip(seed in any::<u64>()) {
        let s = song(seed);
        prop_assert_eq!(parse_json_song(&serialize_json_song(&s), &Ranges::default()).unwrap(), s);
    }

    #[test]
    fn quantizing_a_quantized_song_is_a_no_op(seed in any::<u64>()) {
        let r = Ranges::default();
        let s = song(seed);
        let (once, _) = quantize_raw(&song_to_raw(&s, &r), s.grid, &r);
        let (twice, _) = quantize_raw(&song_to_raw(&once, &r), s.grid, &r);
        prop_assert_eq!(&once, &s);
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn smf_parser_output_is_valid(seed in any::<u64>(), flips in proptest::collection::vec((any::<usize>(), any::<u8>()), 0..6)) {
        let r = Ranges::default();
        let mut bytes = write_smf(&song(seed), &r);
        for (at, b) in flips {
            let n = bytes.len();
            bytes[at % n] = b;
        }
        if let Ok((parsed, _)) = parse_smf(&bytes, GridConfig::default(), &r) {
            prop_assert!(parsed.validate(&r).is_ok());
            prop_assert!(parsed.notes.iter().all(|n| n.duration >= 1));
        }
    }

    #[test]
    fn smf_parser_survives_garbage(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let r = Ranges::default();
        let mut input = b"MThd\0\0\0\x06\0\0\0\x01\x01\xe0MTrk".to_vec();
        input.extend(bytes);
        if let Ok((parsed, _)) = parse_smf(&input, GridConfig::default(), &r) {
            prop_assert!(parsed.validate(&r).is_ok());
        }
    }

    #[test]
    fn ids_have_exactly_one_type(id in 0u32..350) {
        let v = Vocabulary::new(Task::Conditional);
        let tok = v.id_to_token(id).unwrap();
        let owners: Vec<TokenType> = TokenType::ALL.iter().copied().filter(|&t| tok.token_type() == Some(t)).collect();
        prop_assert!(owners.len() == 1 || (tok.token_type().is_none() && tok.is_special()));
        prop_assert_eq!(v.token_to_id(tok).unwrap(), id);
    }

    #[test]
    fn remi_round_trip_and_grammar(seed in any::<u64>()) {
        let v = Vocabulary::new(Task::Unconditional);
        let s = song(seed);
        let remi = encode_remi(&s, &v).unwrap();
        prop_assert_eq!(decode_remi(&remi, &v).unwrap(), s);
    }

    #[test]
    fn lead_track_uses_only_lead_types(seed in any::<u64>()) {
        let v = Vocabulary::new(Task::Conditional);
        let r = Ranges::default();
        let s = song(seed);
        let lead = make_leadsheet(&s, &r);
        let seq = interleave_conditional(&lead, &s, &v).unwrap();
        let mut in_lead = false;
        for t in &seq.tokens {
            match t {
                Token::Track(k) => in_lead = *k == TrackKind::LeadSheet,
                Token::Bar => {}
                other if in_lead => prop_assert!(
                    matches!(other, Token::Position(_) | Token::Chord(_) | Token::Pitch(_) | Token::Duration(_)),
                    "{other} in lead track"
                ),
                _ => {}
            }
        }
        let (back_lead, back_piano) = deinterleave_conditional(&seq, &v).unwrap();
        prop_assert_eq!(back_lead, lead);
        prop_assert_eq!(back_piano, s);
    }

    #[test]
    fn cp_round_trip_lengths_and_validity(seed in any::<u64>(), conditional in any::<bool>()) {
        let task = if conditional { Task::Conditional } else { Task::Unconditional };
        let v = Vocabulary::new(task);
        let s = song(seed);
        let lead = make_leadsheet(&s, &Ranges::default());
        let remi = remi_of(Some(&lead), &s, &v).unwrap();
        let cp = group_to_cp(&remi, &v).unwrap();
        prop_assert_eq!(&ungroup_from_cp(&cp, &v).unwrap(), &remi);
        prop_assert!(validate_cp(&cp, &v).is_empty());
        prop_assert!(cp.words.iter().all(|w| w.symbol_count() == v.k() + 1));
        let l = SongLengths::measure("x", &remi, &cp);
        prop_assert!(l.cp <= l.remi && l.remi <= v.k() * l.cp);
        let has_metric = !s.tempos.is_empty() || !s.chords.is_empty() || !s.notes.is_empty();
        if !s.notes.is_empty() && has_metric {
            prop_assert!(l.inequality_holds(v.k()));
        }
    }

    #[test]
    fn skyline_is_monophonic(seed in any::<u64>()) {
        let r = Ranges::default();
        let s = song(seed);
        let m = skyline_melody(&s, &r);
        for pair in m.windows(2) {
            let end = s.grid.absolute(pair[0].onset) + u64::from(pair[0].duration);
            prop_assert!(end <= s.grid.absolute(pair[1].onset));
        }
    }

    #[test]
    fn chroma_is_bounded(weights in proptest::collection::vec((0u8..128, -1.0f64..10.0), 0..20)) {
        let c = chroma_of(weights);
        prop_assert!(c.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn triads_are_recognized(roots in proptest::collection::vec(0u8..12, 1..6), minor in proptest::collection::vec(any::<bool>(), 6)) {
        let r = Ranges::default();
        let mut s = Song::empty(GridConfig::default(), roots.len() as u32);
        let mut want = Vec::new();
        for (bar, (&root, &m)) in roots.iter().zip(&minor).enumerate() {
            let label = ChordLabel::chord(root, if m { Quality::Min } else { Quality::Maj });
            for beat in 0..4 {
                for pc in label.pitch_classes() {
                    s.notes.push(Note { pitch: 48 + pc, onset: Onset::new(bar as u32, beat * 4), duration: 4, velocity: 80 });
                }
            }
            if want.last().map(|c: &ChordEvent| c.label) != Some(label) {
                want.push(ChordEvent { onset: Onset::new(bar as u32, 0), label });
            }
        }
        s.normalize();
        prop_assert_eq!(recognize_chords(&s, &r), want);
    }

    #[test]
    fn metrics_ignore_velocity_and_tempo(seed in any::<u64>(), vel in 1u8..=127, tempo in 1u8..=58) {
        let r = Ranges::default();
        let s = song(seed);
        let lead = make_leadsheet(&s, &r);
        let mut other = s.clone();
        for n in &mut other.notes {
            n.velocity = vel;
        }
        for t in &mut other.tempos {
            t.class = tempo;
        }
        prop_assert_eq!(melody_matchness(&lead, &other), melody_matchness(&lead, &s));
        prop_assert_eq!(chord_matchness(&lead, &other, &r), chord_matchness(&lead, &s, &r));
        if !lead.melody.is_empty() {
            prop_assert_eq!(melody_matchness(&lead, &s), Some(1.0));
        }
    }

    #[test]
    fn temper_keeps_argmax(logits in proptest::collection::vec(-20.0f64..20.0, 1..40), tau in 1e-3f64..1e3) {
        prop_assert_eq!(argmax(&temper(&logits, tau).unwrap()), argmax(&logits));
    }

    #[test]
    fn nucleus_grows_with_rho(raw in proptest::collection::vec(0.001f64..1.0, 1..20), a in 0.01f64..=1.0, b in 0.01f64..=1.0) {
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = nucleus_candidates(&p, lo).unwrap();
        let large = nucleus_candidates(&p, hi).unwrap();
        prop_assert!(small.iter().all(|i| large.contains(i)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generated_sequences_decode(seed in any::<u64>()) {
        let v = Vocabulary::new(Task::Unconditional);
        let m = tiny_model(&v);
        let cfg = GenConfig { policy: v.default_policy(), seed, stream: 0, max_steps: 120 };
        let g = generate_unconditional(&m, &v, &NucleusSampler, &cfg).unwrap();
        prop_assert!(validate_cp(&g.cp, &v).is_empty());
        let remi = ungroup_from_cp(&g.cp, &v).unwrap();
        decode_remi(&remi, &v).unwrap();
        word_ids(&g.cp, &v).unwrap();
    }

    #[test]
    fn conditional_generation_keeps_lead(seed in any::<u64>()) {
        let v = Vocabulary::new(Task::Conditional);
        let r = Ranges::default();
        let m = tiny_model(&v);
        let mut s = song(seed);
        s.n_bars = s.n_bars.min(3);
        let bars = s.n_bars;
        s.notes.retain(|n| n.onset.bar < bars);
        s.tempos.retain(|t| t.onset.bar < bars);
        s.chords.retain(|c| c.onset.bar < bars);
        let lead = make_leadsheet(&s, &r);
        let cfg = GenConfig { policy: v.default_policy(), seed, stream: 0, max_steps: 60 };
        match generate_conditional(&m, &v, &lead, &NucleusSampler, &cfg) {
            Ok(g) => {
                let cp: &CpSeq = &g.cp;
                prop_assert!(validate_cp(cp, &v).is_empty());
                let (back, _) = deinterleave_conditional(&ungroup_from_cp(cp, &v).unwrap(), &v).unwrap();
                prop_assert_eq!(back, lead);
            }
            Err(e) => prop_assert!(e.to_string().contains("window"), "{e}"),
        }
    }
}
