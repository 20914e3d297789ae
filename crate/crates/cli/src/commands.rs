//! Subcommand bodies.

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use cpword::analysis::make_leadsheet;
use cpword::corpus::{read_records, remi_of, word_ids, write_records, Sidecar};
use cpword::cp::{corpus_stats, group_to_cp, ungroup_from_cp, CpSeq, SongLengths};
use cpword::generate::{generate_conditional, generate_unconditional, GenConfig};
use cpword::metrics::evaluate_pairs;
use cpword::neural::checkpoint::{self, read_header};
use cpword::neural::train::{evaluate as eval_nll, Trainer};
use cpword::neural::{Model, WordIds};
use cpword::registry::{representations, samplers};
use cpword::remi::{decode_remi, deinterleave_conditional};
use cpword::symbolic::{serialize_json_song, write_smf, Diagnostics, LeadSheet, Song};
use cpword::vocab::{Task, Vocabulary};

use crate::config::{Overrides, RunConfig};
use crate::io::{self, Failure};
use crate::CliError;

fn data(e: impl ToString) -> CliError {
    CliError::Data(e.to_string())
}

fn has_metric_event(song: &Song) -> bool {
    !song.tempos.is_empty() || !song.chords.is_empty() || !song.notes.is_empty()
}

fn lead_for(song: &Song, cfg: &RunConfig) -> Option<LeadSheet> {
    (cfg.task == Task::Conditional).then(|| make_leadsheet(song, &cfg.ranges))
}

#[derive(Serialize)]
struct FileReport {
    file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<Diagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

struct Measured {
    lengths: Vec<SongLengths>,
    violations: Vec<String>,
}

/// REMI and CP lengths per song, plus the songs breaking `T_CP < T_REMI < K*T_CP`.
fn measure(songs: &[(String, Song)], cfg: &RunConfig, vocab: &Vocabulary) -> Result<Measured, CliError> {
    let mut lengths = Vec::new();
    let mut violations = Vec::new();
    for (name, song) in songs {
        let remi = remi_of(lead_for(song, cfg).as_ref(), song, vocab)?;
        let cp = group_to_cp(&remi, vocab).map_err(data)?;
        let l = SongLengths::measure(name.clone(), &remi, &cp);
        if !song.notes.is_empty() && has_metric_event(song) && !l.inequality_holds(vocab.k()) {
            violations.push(name.clone());
        }
        lengths.push(l);
    }
    Ok(Measured { lengths, violations })
}

pub fn encode(cfg: &RunConfig, input: &Path) -> Result<(), CliError> {
    let vocab = cfg.vocab()?;
    let reg = representations();
    let repr = reg.get(&cfg.repr)?;
    let (loaded, mut failed) = io::read_songs(input, cfg)?;
    if loaded.is_empty() {
        eprintln!("warning: no songs found in {}", input.display());
    }
    let mut records = Vec::new();
    let mut names = Vec::new();
    let mut kept = Vec::new();
    let mut files = Vec::new();
    for song in loaded {
        let rows = remi_of(lead_for(&song.item, cfg).as_ref(), &song.item, &vocab)
            .and_then(|remi| repr.rows(&remi, &vocab));
        match rows {
            Ok(r) => {
                records.push(r);
                names.push(song.name.clone());
                files.push(FileReport { file: song.file, diagnostics: Some(song.diagnostics), error: None });
                kept.push((song.name, song.item));
            }
            Err(e) => failed.push(Failure { file: song.file, error: e.to_string() }),
        }
    }
    io::report_failures(&failed);
    files.extend(failed.iter().map(|f| FileReport { file: f.file.clone(), diagnostics: None, error: Some(f.error.clone()) }));
    files.sort_by(|a, b| a.file.cmp(&b.file));

    let out = cfg.out_dir();
    let width = repr.width(&vocab);
    io::write(&out.join(format!("corpus.{}.bin", repr.name())), write_records(&records, width)?)?;
    let sidecar = Sidecar {
        representation: repr.name().to_string(),
        task: cfg.task,
        width,
        vocab_hash: vocab.hash(),
        names,
        config: cfg.snapshot(),
    };
    io::write_json(&out.join(format!("corpus.{}.json", repr.name())), &sidecar)?;

    let m = measure(&kept, cfg, &vocab)?;
    let stats = corpus_stats(m.lengths);
    print!("{}", stats.table());
    io::write_json(
        &out.join("stats.json"),
        &json!({"vocab_hash": vocab.hash(), "config": cfg.snapshot(), "inequality_violations": m.violations, "stats": stats}),
    )?;
    io::write_json(&out.join("diagnostics.json"), &json!({"vocab_hash": vocab.hash(), "files": files}))?;
    println!("{} records, {} skipped -> {}", records.len(), failed.len(), out.display());
    Ok(())
}

pub fn stats(cfg: &RunConfig, input: &Path) -> Result<(), CliError> {
    let vocab = cfg.vocab()?;
    let (loaded, failed) = io::read_songs(input, cfg)?;
    io::report_failures(&failed);
    let songs: Vec<(String, Song)> = loaded.into_iter().map(|l| (l.name, l.item)).collect();
    let m = measure(&songs, cfg, &vocab)?;
    let checked = songs.iter().filter(|(_, s)| !s.notes.is_empty() && has_metric_event(s)).count();
    print!("{}", corpus_stats(m.lengths).table());
    println!("T_CP < T_REMI < K*T_CP (K={}): {}/{} songs", vocab.k(), checked - m.violations.len(), checked);
    if m.violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Data(format!("length inequality fails for {}", m.violations.join(", "))))
    }
}

fn load_corpus(dir: &Path, vocab: &Vocabulary) -> Result<Vec<Vec<WordIds>>, CliError> {
    let side_path = dir.join("corpus.cp.json");
    let side: Sidecar = serde_json::from_slice(&io::read(&side_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", side_path.display())))?;
    if side.representation != "cp" {
        return Err(CliError::Data(format!("training needs a cp corpus, found {}", side.representation)));
    }
    if side.vocab_hash != vocab.hash() {
        return Err(CliError::Data(format!(
            "corpus vocabulary {} does not match the configured vocabulary {}",
            side.vocab_hash,
            vocab.hash()
        )));
    }
    let records = read_records(&io::read(&dir.join("corpus.cp.bin"))?, side.width)?;
    records
        .iter()
        .map(|rows| {
            let cp = CpSeq::from_id_rows(rows, vocab).map_err(data)?;
            Ok(word_ids(&cp, vocab)?)
        })
        .collect()
}

pub fn train(
    cfg: &RunConfig,
    corpus: Option<&Path>,
    steps: Option<u64>,
    resume: Option<&Path>,
    dry_run: bool,
) -> Result<(), CliError> {
    let vocab = cfg.vocab()?;
    let model_cfg = cfg.model_config(&vocab)?;
    if dry_run {
        let report = json!({
            "preset": cfg.preset,
            "parameters": model_cfg.parameter_count(&vocab),
            "memory_bytes": model_cfg.memory_estimate(&vocab, model_cfg.max_len),
            "sequence_length": model_cfg.max_len,
            "concat_dim": model_cfg.concat_dim(),
            "vocab_hash": vocab.hash(),
            "model": model_cfg,
        });
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        return Ok(());
    }
    let dir = corpus
        .map(Path::to_path_buf)
        .or_else(|| cfg.paths.corpus.clone())
        .ok_or_else(|| CliError::Usage("train needs --corpus or paths.corpus".into()))?;
    let data_set = load_corpus(&dir, &vocab)?;
    if data_set.is_empty() {
        return Err(CliError::Data(format!("corpus in {} is empty", dir.display())));
    }
    let mut train_cfg = cfg.train.clone();
    if let Some(s) = steps {
        train_cfg.steps = s;
    }

    let out = cfg.out_dir();
    let log_path = out.join("loss.csv");
    let (mut trainer, initial) = match resume {
        Some(p) => {
            let ck = checkpoint::load(&io::read(p)?, &vocab)?;
            let adam = ck.adam.ok_or_else(|| CliError::Model("checkpoint has no optimizer state".into()))?;
            let mut t = Trainer::new(ck.model, train_cfg.clone());
            t.adam = adam;
            t.step = ck.header.step;
            (t, None)
        }
        None => {
            let model = Model::init(model_cfg, &vocab)?;
            let initial = eval_nll(&model, &data_set)?.total;
            io::write(&log_path, log_header(&vocab))?;
            (Trainer::new(model, train_cfg.clone()), Some(initial))
        }
    };
    if !log_path.exists() {
        io::write(&log_path, log_header(&vocab))?;
    }
    let mut log = OpenOptions::new().append(true).open(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    while trainer.step < train_cfg.steps {
        let r = trainer.train_step(&data_set)?;
        let heads: Vec<String> = r.nll.per_head.iter().map(|h| format!("{h:.6}")).collect();
        writeln!(log, "{},{},{:.6},{:.6}", r.step, heads.join(","), r.nll.total, r.grad_norm)
            .map_err(|e| CliError::io(&log_path, e))?;
        if train_cfg.checkpoint_every > 0 && trainer.step % train_cfg.checkpoint_every == 0 {
            save(&trainer, &vocab, cfg, &out.join(format!("step_{:06}.ckpt", trainer.step)))?;
        }
    }
    save(&trainer, &vocab, cfg, &out.join("final.ckpt"))?;
    let final_nll = eval_nll(&trainer.model, &data_set)?.total;
    io::write_json(
        &out.join("train.json"),
        &json!({
            "vocab_hash": vocab.hash(),
            "config": cfg.snapshot(),
            "steps": trainer.step,
            "initial_nll": initial,
            "final_nll": final_nll,
        }),
    )?;
    match initial {
        Some(i) => println!("trained to step {}: NLL {i:.4} -> {final_nll:.4}", trainer.step),
        None => println!("trained to step {}: NLL {final_nll:.4}", trainer.step),
    }
    Ok(())
}

fn log_header(vocab: &Vocabulary) -> String {
    let mut cols = vec!["step".to_string(), "family".to_string()];
    cols.extend(vocab.types().iter().map(|t| t.name().to_string()));
    cols.push("total".into());
    cols.push("grad_norm".into());
    format!("{}\n", cols.join(","))
}

fn save(t: &Trainer, vocab: &Vocabulary, cfg: &RunConfig, path: &Path) -> Result<(), CliError> {
    io::write(path, checkpoint::save(&t.model, vocab, t.step, Some(&t.adam), cfg.snapshot()))
}

pub struct GenerateArgs {
    pub checkpoint: Option<PathBuf>,
    pub condition: Option<PathBuf>,
    pub n: Option<usize>,
    pub sampler: Option<String>,
    pub max_steps: Option<usize>,
}

#[derive(Serialize)]
struct SampleEntry {
    name: String,
    words: usize,
    sampled: usize,
    forced: usize,
}

pub fn generate(cfg: &RunConfig, flags: &Overrides, args: GenerateArgs) -> Result<(), CliError> {
    let path = args
        .checkpoint
        .or_else(|| cfg.paths.checkpoint.clone())
        .ok_or_else(|| CliError::Usage("generate needs --checkpoint or paths.checkpoint".into()))?;
    let bytes = io::read(&path)?;
    let (header, _) = read_header(&bytes)?;
    let task = header.config.task;
    if flags.task.is_some_and(|t| t != task) {
        return Err(CliError::Usage(format!("checkpoint was trained for the {task:?} task")));
    }
    let trained: Option<RunConfig> = serde_json::from_value(header.run.clone()).ok();
    let (grid, ranges) = trained.as_ref().map_or((cfg.grid, cfg.ranges), |r| (r.grid, r.ranges));
    let vocab = Vocabulary::build(task, grid, ranges).map_err(|e| CliError::Model(e.to_string()))?;
    let ck = checkpoint::load(&bytes, &vocab)?;
    let reg = samplers();
    let sampler = reg.get(args.sampler.as_deref().unwrap_or(&cfg.sampler))?;
    let policy = cfg.policy(&vocab);
    let n = args.n.unwrap_or(cfg.samples);
    let max_steps = args.max_steps.unwrap_or(cfg.max_steps);

    let leads: Vec<(String, Option<LeadSheet>)> = match (task, args.condition) {
        (Task::Conditional, Some(c)) => {
            let (leads, failed) = io::read_leads(&c, cfg)?;
            if let Some(f) = failed.first() {
                return Err(CliError::Data(format!("{}: {}", f.file, f.error)));
            }
            leads.into_iter().map(|l| (l.name, Some(l.item))).collect()
        }
        (Task::Conditional, None) => return Err(CliError::Usage("conditional generation needs --condition".into())),
        (Task::Unconditional, Some(_)) => {
            return Err(CliError::Usage("--condition only applies to conditional checkpoints".into()))
        }
        (Task::Unconditional, None) => vec![("sample".into(), None)],
    };

    let out = cfg.out_dir();
    let mut entries = Vec::new();
    for (base, lead) in &leads {
        for i in 0..n {
            let name = format!("{base}_{i:03}");
            let gen_cfg = GenConfig { policy: policy.clone(), seed: cfg.seed, stream: i as u64, max_steps };
            let start = Instant::now();
            let g = match lead {
                Some(l) => generate_conditional(&ck.model, &vocab, l, sampler, &gen_cfg)?,
                None => generate_unconditional(&ck.model, &vocab, sampler, &gen_cfg)?,
            };
            let secs = start.elapsed().as_secs_f64().max(1e-9);
            let remi = ungroup_from_cp(&g.cp, &vocab).map_err(|e| CliError::Model(e.to_string()))?;
            let song = match task {
                Task::Unconditional => decode_remi(&remi, &vocab),
                Task::Conditional => deinterleave_conditional(&remi, &vocab).map(|(_, p)| p),
            }
            .map_err(|e| CliError::Model(e.to_string()))?;
            io::write(&out.join(format!("{name}.mid")), write_smf(&song, &vocab.ranges))?;
            io::write(&out.join(format!("{name}.json")), serialize_json_song(&song))?;
            let rows = g.cp.to_id_rows(&vocab).map_err(|e| CliError::Model(e.to_string()))?;
            io::write(&out.join(format!("{name}.cp")), write_records(&[rows], vocab.k() + 1)?)?;
            eprintln!(
                "{name}: {} words ({} sampled), {:.1} steps/s",
                g.cp.len(),
                g.sampled,
                g.sampled as f64 / secs
            );
            entries.push(SampleEntry { name, words: g.cp.len(), sampled: g.sampled, forced: g.forced });
        }
    }
    io::write_json(
        &out.join("generate.json"),
        &json!({
            "vocab_hash": vocab.hash(),
            "config": cfg.snapshot(),
            "checkpoint_step": header.step,
            "sampler": sampler.name(),
            "samples": entries,
        }),
    )?;
    println!("{} samples -> {}", entries.len(), out.display());
    Ok(())
}

/// Pairs each generated song with the lead sheet of the same name, or of the
/// longest name it extends with `_<suffix>`.
fn pair_name<'a>(song: &str, leads: &'a [String]) -> Option<&'a String> {
    leads
        .iter()
        .filter(|l| song == l.as_str() || song.strip_prefix(l.as_str()).is_some_and(|rest| rest.starts_with('_')))
        .max_by_key(|l| l.len())
}

pub fn evaluate(cfg: &RunConfig, lead_dir: &Path, gen_dir: &Path) -> Result<(), CliError> {
    let vocab = cfg.vocab()?;
    let (leads, lead_failed) = io::read_leads(lead_dir, cfg)?;
    let (pianos, piano_failed) = io::read_songs(gen_dir, cfg)?;
    io::report_failures(&lead_failed);
    io::report_failures(&piano_failed);
    let lead_names: Vec<String> = leads.iter().map(|l| l.name.clone()).collect();
    let mut pairs = Vec::new();
    let mut unpaired_generated = Vec::new();
    let mut used = vec![false; leads.len()];
    for p in pianos {
        match pair_name(&p.name, &lead_names) {
            Some(l) => {
                let i = lead_names.iter().position(|n| n == l).expect("name from list");
                used[i] = true;
                pairs.push((p.name, leads[i].item.clone(), p.item));
            }
            None => unpaired_generated.push(p.file),
        }
    }
    let unpaired_leads: Vec<String> =
        leads.iter().zip(&used).filter(|(_, &u)| !u).map(|(l, _)| l.file.clone()).collect();
    for f in unpaired_generated.iter().chain(&unpaired_leads) {
        eprintln!("warning: {f} has no partner");
    }
    if pairs.is_empty() {
        eprintln!("warning: no (lead sheet, song) pairs to evaluate");
    }
    let report = evaluate_pairs(&pairs, &cfg.ranges, cfg.seed);
    print!("{}", report.table());
    io::write_json(
        &cfg.out_dir().join("report.json"),
        &json!({
            "vocab_hash": vocab.hash(),
            "config": cfg.snapshot(),
            "report": report,
            "unpaired_leads": unpaired_leads,
            "unpaired_generated": unpaired_generated,
        }),
    )?;
    Ok(())
}

pub fn inspect_vocab(cfg: &RunConfig) -> Result<(), CliError> {
    let vocab = cfg.vocab()?;
    println!("{}", vocab.manifest_json());
    println!("hash: {}", vocab.hash());
    Ok(())
}
