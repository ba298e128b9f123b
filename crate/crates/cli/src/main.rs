use std::collections::HashSet;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use entlink::aliastable::{read_aliases, resolve, table_stats, AliasTable, RedirectMap, StatsReport};
use entlink::candidates::{CandidateSources, PageLinks, PhraseTable};
use entlink::config::{ModeName, RunConfig};
use entlink::corpus::{
    build_corpus, collect_entities, count_tokens, make_eval_context, read_contexts, read_documents, window_context,
    write_contexts, Context, ContextMode, CorpusSummary, Document,
};
use entlink::eval::{evaluate_disambiguation, evaluate_end_to_end, write_error_dump, EvalReport};
use entlink::model::checkpoint;
use entlink::training::{finetune, pretrain, select_lr_by_cv, CandidateMode, PretrainData, RunOutputs};
use entlink::vocab::{EntityVocab, TokenVocab};
use entlink::Model32;

/// Entity linking: corpus building, training, evaluation and inference.
#[derive(Parser)]
#[command(name = "entlink", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Chunk raw JSONL documents into a context cache, building vocabularies if absent.
    BuildCorpus(Common),
    /// Pretrain on a context cache with sampled candidates and input noise.
    Pretrain(Common),
    /// Fine-tune on labeled data, optionally picking the learning rate by cross-validation.
    Finetune(Common),
    /// Disambiguation accuracy over gold mentions.
    EvalDisambig(Common),
    /// End-to-end strong-matching micro-F1.
    EvalE2e(Common),
    /// Alias table conversion rate, gold recall and ambiguity.
    AliasStats(Common),
    /// Detect and link mentions in raw text (file or stdin); prints TSV.
    Link {
        /// Text file to annotate; reads stdin when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-key overrides, `--train.base_lr=1e-4` or `--train.base_lr 1e-4`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0.., value_name = "--KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for (k, v) in parse_overrides(&self.overrides)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }
}

fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let key = a.strip_prefix("--").ok_or_else(|| anyhow!("expected --key=value, got {a:?}"))?;
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it.next().ok_or_else(|| anyhow!("missing value for --{key}"))?;
                out.push((key.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

fn need<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| anyhow!("paths.{key} is required"))
}

/// Writes the resolved config next to `output` as `<output>.config`.
fn echo_config(cfg: &RunConfig, output: &Path) -> Result<()> {
    let mut name = output.as_os_str().to_owned();
    name.push(".config");
    let path = PathBuf::from(name);
    fs::write(&path, cfg.echo()).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

fn load_vocabs(cfg: &RunConfig) -> Result<(TokenVocab, EntityVocab)> {
    let tv = TokenVocab::load(need(&cfg.paths.token_vocab, "token_vocab")?)?;
    let ev = EntityVocab::load(need(&cfg.paths.entity_vocab, "entity_vocab")?)?;
    Ok((tv, ev))
}

fn load_model(path: &Path, tv: &TokenVocab, ev: &EntityVocab) -> Result<Model32> {
    let model: Model32 = checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let c = &model.config;
    if c.vocab_size != tv.len() || c.n_entities != ev.len() {
        bail!(
            "checkpoint {} expects {} tokens and {} entities, vocabularies have {} and {}",
            path.display(),
            c.vocab_size,
            c.n_entities,
            tv.len(),
            ev.len()
        );
    }
    Ok(model)
}

/// A fresh model, or the init checkpoint when one is configured.
fn initial_model(cfg: &RunConfig, tv: &TokenVocab, ev: &EntityVocab) -> Result<Model32> {
    match &cfg.paths.init_checkpoint {
        Some(p) => load_model(p, tv, ev),
        None => Ok(Model32::new(cfg.model_config(tv.len(), ev.len(), tv.pad), cfg.init_seed())?),
    }
}

/// Labeled contexts for fine-tuning and evaluation. Raw documents are cut into
/// per-sentence contexts (or byte windows around each mention); otherwise a
/// processed context cache is read.
fn load_dataset(cfg: &RunConfig, max_len: usize, tv: &TokenVocab, ev: &EntityVocab) -> Result<Vec<Context>> {
    if let Some(p) = &cfg.paths.documents {
        let docs = read_documents(p)?;
        return eval_contexts(&docs, cfg, max_len, tv, ev);
    }
    Ok(read_contexts(need(&cfg.paths.corpus, "corpus")?)?)
}

fn eval_contexts(docs: &[Document], cfg: &RunConfig, max_len: usize, tv: &TokenVocab, ev: &EntityVocab) -> Result<Vec<Context>> {
    let mut out = Vec::new();
    let mut dropped = 0;
    for d in docs {
        if cfg.data.window_bytes > 0 {
            for m in &d.mentions {
                out.push(window_context(d, m, cfg.data.window_bytes, max_len, tv, ev)?);
            }
        } else {
            for s in 0..d.sentences().len() {
                let (ctx, drops) = make_eval_context(d, s, cfg.data.context_mode, max_len, tv, ev)?;
                dropped += drops.total();
                out.push(ctx);
            }
        }
    }
    if dropped > 0 {
        warn!("{dropped} mentions dropped while building evaluation contexts");
    }
    Ok(out)
}

fn load_alias_table(cfg: &RunConfig, ev: &EntityVocab) -> Result<AliasTable> {
    let entries = read_aliases(need(&cfg.paths.aliases, "aliases")?)?;
    let redirects = load_redirects(cfg)?;
    let (table, report) = resolve(&entries, &redirects, ev);
    info!("alias table: {} of {} entries resolved ({:.2}%)", report.resolved, report.input, report.conversion);
    Ok(table)
}

fn load_redirects(cfg: &RunConfig) -> Result<RedirectMap> {
    match &cfg.paths.redirects {
        Some(p) if p.exists() => Ok(RedirectMap::load_tsv(p)?),
        Some(p) => {
            warn!("redirects file {} not found; using the alias table unresolved", p.display());
            Ok(RedirectMap::default())
        }
        None => Ok(RedirectMap::default()),
    }
}

fn candidate_mode<'a>(mode: ModeName, table: &'a Option<AliasTable>) -> CandidateMode<'a> {
    match (mode, table) {
        (ModeName::AliasCandidates, Some(t)) => CandidateMode::AliasCandidates(t),
        _ => CandidateMode::AllEntities,
    }
}

fn outputs(cfg: &RunConfig) -> Result<RunOutputs> {
    Ok(RunOutputs { log: cfg.paths.log.clone(), checkpoint: Some(need(&cfg.paths.checkpoint, "checkpoint")?.to_path_buf()) })
}

/// Adds the last good checkpoint on disk to a NaN/inf abort.
fn training_error(e: entlink::Error, cfg: &RunConfig) -> anyhow::Error {
    if !e.is_non_finite() {
        return e.into();
    }
    let last = match &cfg.paths.checkpoint {
        Some(p) if p.exists() => p.display().to_string(),
        _ => "none written".to_string(),
    };
    anyhow!("training aborted: {e}; last good checkpoint: {last}")
}

fn cmd_build_corpus(cfg: &RunConfig) -> Result<()> {
    let docs_path = need(&cfg.paths.documents, "documents")?;
    let out = need(&cfg.paths.corpus, "corpus")?;
    let docs = read_documents(docs_path)?;

    let tv = match &cfg.paths.token_vocab {
        Some(p) if p.exists() => TokenVocab::load(p)?,
        p => {
            let v = TokenVocab::from_counts(&count_tokens(&docs), cfg.data.min_count);
            if let Some(p) = p {
                v.save(p)?;
            }
            v
        }
    };
    let ev = match &cfg.paths.entity_vocab {
        Some(p) if p.exists() => EntityVocab::load(p)?,
        p => {
            let v = collect_entities(&docs);
            if let Some(p) = p {
                v.save(p)?;
            }
            v
        }
    };
    let (contexts, summary) = build_corpus(&docs, &cfg.chunk, &tv, &ev)?;
    write_contexts(out, &contexts)?;
    let summary_path = cfg.paths.summary.clone().unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".summary.json");
        PathBuf::from(s)
    });
    write_json::<CorpusSummary>(&summary, Some(&summary_path))?;
    echo_config(cfg, out)?;
    info!(
        "{} documents -> {} contexts, {} labels ({} linked), {} dropped",
        summary.documents,
        summary.contexts,
        summary.labels,
        summary.linked_labels,
        summary.drops.total()
    );
    Ok(())
}

fn cmd_pretrain(cfg: &RunConfig) -> Result<()> {
    let (tv, ev) = load_vocabs(cfg)?;
    let contexts = read_contexts(need(&cfg.paths.corpus, "corpus")?)?;
    let links = match &cfg.paths.page_links {
        Some(p) => PageLinks::load_tsv(p, &ev)?.0,
        None => PageLinks::from_contexts(&contexts),
    };
    let phrases = match &cfg.paths.phrase_table {
        Some(p) => PhraseTable::load_tsv(p, &ev)?.0,
        None => PhraseTable::default(),
    };
    let out = outputs(cfg)?;
    echo_config(cfg, out.checkpoint.as_deref().expect("set"))?;
    let mut model = initial_model(cfg, &tv, &ev)?;
    let (cands, noise) = (cfg.candidate_config(), cfg.noise_config());
    let data = PretrainData {
        contexts: &contexts,
        token_vocab: &tv,
        sources: CandidateSources { page_links: &links, phrase_table: &phrases, n_entities: ev.len() },
        candidates: &cands,
        noise: &noise,
    };
    let summary = pretrain(&mut model, &data, &cfg.train_config(), &out).map_err(|e| training_error(e, cfg))?;
    info!("pretrained {} steps; final loss {:.4}", summary.steps, summary.losses.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn cmd_finetune(cfg: &RunConfig) -> Result<()> {
    let (tv, ev) = load_vocabs(cfg)?;
    let out = outputs(cfg)?;
    let base = initial_model(cfg, &tv, &ev)?;
    let contexts = load_dataset(cfg, base.config.max_len, &tv, &ev)?;
    let table = match cfg.finetune_mode {
        ModeName::AliasCandidates => Some(load_alias_table(cfg, &ev)?),
        ModeName::AllEntities => None,
    };
    let mode = candidate_mode(cfg.finetune_mode, &table);
    let mut train = cfg.train_config();

    if train.cv_folds >= 2 && !train.cv_lrs.is_empty() {
        let (best, means) = select_lr_by_cv(&train.cv_lrs, contexts.len(), train.cv_folds, cfg.folds_seed(), |lr, tr, held| {
            let pick = |ix: &[usize]| ix.iter().map(|&i| contexts[i].clone()).collect::<Vec<_>>();
            let mut m = base.clone();
            let fold_cfg = entlink::training::TrainConfig { base_lr: lr, ..train.clone() };
            finetune(&mut m, &pick(tr), mode, &fold_cfg, &RunOutputs::default())?;
            Ok(evaluate_disambiguation(&m, &pick(held), mode)?.accuracy)
        })
        .map_err(|e| training_error(e, cfg))?;
        for (lr, m) in train.cv_lrs.iter().zip(&means) {
            info!("cv lr {lr:e}: mean held-out accuracy {m:.2}");
        }
        info!("selected learning rate {best:e}");
        train.base_lr = best;
    }

    let mut resolved = cfg.clone();
    resolved.train.base_lr = train.base_lr;
    echo_config(&resolved, out.checkpoint.as_deref().expect("set"))?;
    let mut model = base;
    let summary = finetune(&mut model, &contexts, mode, &train, &out).map_err(|e| training_error(e, cfg))?;
    info!("fine-tuned {} steps; {} mentions skipped", summary.steps, summary.skipped_mentions);
    Ok(())
}

fn eval_setup(cfg: &RunConfig) -> Result<(EntityVocab, Model32, Vec<Context>)> {
    let (tv, ev) = load_vocabs(cfg)?;
    let model = load_model(need(&cfg.paths.init_checkpoint, "init_checkpoint")?, &tv, &ev)?;
    let contexts = load_dataset(cfg, model.config.max_len, &tv, &ev)?;
    Ok((ev, model, contexts))
}

fn cmd_eval_disambig(cfg: &RunConfig) -> Result<()> {
    let (ev, model, contexts) = eval_setup(cfg)?;
    let table = match cfg.eval_mode {
        ModeName::AliasCandidates => Some(load_alias_table(cfg, &ev)?),
        ModeName::AllEntities => None,
    };
    let result = evaluate_disambiguation(&model, &contexts, candidate_mode(cfg.eval_mode, &table))?;
    let report = EvalReport::accuracy(result.accuracy, result.outcomes.len());
    write_json(&report, cfg.paths.report.as_deref())?;
    if let Some(p) = &cfg.paths.errors {
        write_error_dump(p, &result.errors(&ev))?;
    }
    if let Some(p) = &cfg.paths.report {
        echo_config(cfg, p)?;
    }
    Ok(())
}

fn cmd_eval_e2e(cfg: &RunConfig) -> Result<()> {
    let (_, model, contexts) = eval_setup(cfg)?;
    let m = evaluate_end_to_end(&model, &contexts)?;
    write_json(&EvalReport::f1(&m), cfg.paths.report.as_deref())?;
    if let Some(p) = &cfg.paths.report {
        echo_config(cfg, p)?;
    }
    Ok(())
}

fn cmd_alias_stats(cfg: &RunConfig) -> Result<()> {
    let (tv, ev) = load_vocabs(cfg)?;
    let entries = read_aliases(need(&cfg.paths.aliases, "aliases")?)?;
    let redirects = load_redirects(cfg)?;
    let (table, conv) = resolve(&entries, &redirects, &ev);
    let contexts = load_dataset(cfg, cfg.model.max_len, &tv, &ev)?;
    let mentions: Vec<(&str, usize)> = contexts
        .iter()
        .flat_map(|c| &c.labels)
        .filter_map(|l| l.entity.map(|e| (l.surface.as_str(), e)))
        .collect();
    let stats = table_stats(&table, &mentions)?;
    write_json(&StatsReport::new(&conv, &stats), cfg.paths.report.as_deref())?;
    if let Some(p) = &cfg.paths.report {
        echo_config(cfg, p)?;
    }
    Ok(())
}

fn cmd_link(cfg: &RunConfig, input: Option<&Path>) -> Result<()> {
    let (tv, ev) = load_vocabs(cfg)?;
    let model = load_model(need(&cfg.paths.init_checkpoint, "init_checkpoint")?, &tv, &ev)?;
    let text = match input {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    let doc = Document { doc_id: "input".into(), title: String::new(), text, mentions: Vec::new() };
    let chars: Vec<char> = doc.text.chars().collect();
    let mut stdout = io::stdout().lock();
    let mut seen = HashSet::new();
    for s in 0..doc.sentences().len() {
        let (ctx, _) = make_eval_context(&doc, s, ContextMode::SentenceOnly, model.config.max_len, &tv, &ev)?;
        for l in model.predict_end_to_end(&ctx.tokens)? {
            let (a, b) = ctx.char_range(l.span);
            if !seen.insert((a, b)) {
                continue;
            }
            let surface: String = chars[a..b].iter().map(|&c| if c.is_whitespace() { ' ' } else { c }).collect();
            let id = ev.name(l.entity).unwrap_or("?");
            writeln!(stdout, "{a}\t{b}\t{surface}\t{id}\t{:.6}", l.prob)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::BuildCorpus(c) => cmd_build_corpus(&c.resolve()?),
        Cmd::Pretrain(c) => cmd_pretrain(&c.resolve()?),
        Cmd::Finetune(c) => cmd_finetune(&c.resolve()?),
        Cmd::EvalDisambig(c) => cmd_eval_disambig(&c.resolve()?),
        Cmd::EvalE2e(c) => cmd_eval_e2e(&c.resolve()?),
        Cmd::AliasStats(c) => cmd_alias_stats(&c.resolve()?),
        Cmd::Link { input, common } => cmd_link(&common.resolve()?, input.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
