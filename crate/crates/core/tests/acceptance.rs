//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use entlink::aliastable::{read_aliases, resolve, table_stats, RedirectMap};
use entlink::candidates::{assemble_candidates, CandidateConfig, CandidateSources, PageLinks, PhraseTable};
use entlink::corpus::{ChunkConfig, MentionLabel, Span};
use entlink::eval::{evaluate_disambiguation, strong_matching_micro_f1, LinkingPrediction};
use entlink::model::bio::{self, Tag};
use entlink::model::{checkpoint, CandidateScope, Example, LossWeights};
use entlink::noising::{apply_noise, NoiseAction, NoiseConfig};
use entlink::synthetic::{self, World, WorldConfig};
use entlink::training::{finetune, pretrain, CandidateMode, PretrainData, RunOutputs, TrainConfig};
use entlink::vocab::{EntityVocab, TokenVocab};
use entlink::{seed, Error, Model32, Model64, ModelConfig};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let cfg = tiny_config();
    let mut rng = seed::rng(1001, &[]);
    let mut worst = (String::new(), 0.0f64);
    let mut groups = 0;
    // Weights are scaled up so a 1e-3 step is small next to them; at init scale
    // (std 0.02) the central difference itself is off by ~1e-4.
    for trial in 0..3u64 {
        let scale = 20.0;
        let mut model = Model64::new(cfg.clone(), trial).map_err(|e| e.to_string())?;
        for t in model.params.tensors_mut() {
            if !t.name.ends_with(".gain") {
                t.data.iter_mut().for_each(|x| *x *= scale);
            }
        }
        let batch: Vec<Instance> = (0..3).map(|_| random_instance(&mut rng, &cfg, true)).collect();
        let report = finite_difference_check(&mut model, &batch, &LossWeights::default(), 1e-3);
        groups = report.len();
        for (name, rel, _) in report {
            if rel > worst.1 {
                worst = (name, rel);
            }
        }
    }
    let took = start.elapsed();
    check(worst.1 < 1e-4, || format!("{} has relative error {:.2e}", worst.0, worst.1))?;
    check(took < Duration::from_secs(60), || format!("took {}", secs(took)))?;
    Ok(format!("{groups} groups x 3 instances, worst {:.2e} ({}), {}", worst.1, worst.0, secs(took)))
}

fn loss_oracles() -> Outcome {
    let cfg = tiny_config();
    let mut rng = seed::rng(1002, &[]);
    let (mut worst_link, mut worst_bio) = (0.0f64, 0.0f64);
    let mut model = Model64::new(cfg.clone(), 0).map_err(|e| e.to_string())?;
    for i in 0..1000 {
        if i % 50 == 0 {
            model = Model64::new(cfg.clone(), i).map_err(|e| e.to_string())?;
            for t in model.params.tensors_mut() {
                t.data.iter_mut().for_each(|x| *x *= 10.0);
            }
        }
        let inst = random_instance(&mut rng, &cfg, true);
        let got = model.linking_loss(&[inst.example()]).map_err(|e| e.to_string())?;
        worst_link = worst_link.max((got - brute_batch_linking(&model, std::slice::from_ref(&inst))).abs());
        let h = model.encode(&inst.tokens).map_err(|e| e.to_string())?;
        let spans: Vec<Span> = inst.labels.iter().map(|l| l.span).collect();
        let got = model.bio_loss(&inst.tokens, &h, &spans).map_err(|e| e.to_string())?;
        worst_bio = worst_bio.max((got - brute_example_bio(&model, &inst)).abs());
    }
    check(worst_link < 1e-6 && worst_bio < 1e-6, || format!("max |diff| linking {worst_link:.2e}, bio {worst_bio:.2e}"))?;
    Ok(format!("1000 instances, max |diff| linking {worst_link:.2e}, bio {worst_bio:.2e}"))
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let fx = Fixture::new(200, 50, 3, 0);
    check(fx.contexts.len() == 50, || format!("fixture has {} contexts", fx.contexts.len()))?;
    let cc = CandidateConfig { k: 64, max_page: 16, max_phrase: 16, min_random: 16, rng_seed: 3 };
    let nc = NoiseConfig { rng_seed: 4, ..Default::default() };
    let tc = TrainConfig { base_lr: 3e-3, total_steps: 2000, batch_size: 16, rng_seed: 5, ..Default::default() };
    let mut model = Model32::new(fx.model_config(32), 1).map_err(|e| e.to_string())?;
    let s = pretrain(&mut model, &fx.data(&cc, &nc), &tc, &RunOutputs::default()).map_err(|e| e.to_string())?;
    let acc = evaluate_disambiguation(&model, &fx.contexts, CandidateMode::AllEntities).map_err(|e| e.to_string())?.accuracy;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (first, last) = (mean(&s.losses[..100]), mean(&s.losses[s.losses.len() - 100..]));
    let took = start.elapsed();
    check(acc >= 99.0, || format!("train accuracy {acc:.2}%"))?;
    check(last < first, || format!("loss did not fall: first100 {first:.3}, last100 {last:.3}"))?;
    check(took < Duration::from_secs(300), || format!("took {}", secs(took)))?;
    Ok(format!("train accuracy {acc:.2}% over all 200 entities, loss {first:.2} -> {last:.2}, {}", secs(took)))
}

fn generalization() -> Outcome {
    let start = Instant::now();
    let mut gaps = Vec::new();
    let mut detail = Vec::new();
    for seed in 0..3u64 {
        let world = World::new(WorldConfig { n_entities: 300, seed, ..Default::default() });
        let ev = world.entity_vocab();
        let wiki = world.documents("wiki", 2000, 3, None, seed * 10 + 1);
        let task = world.documents("task", 500, 2, None, seed * 10 + 2);
        let both: Vec<_> = wiki.iter().chain(&task).cloned().collect();
        let chunk = ChunkConfig { chunk_chars: 10_000, max_len: 64 };
        let err = |e: Error| e.to_string();
        let (tv, _, _) = synthetic::build(&both, &chunk, &ev, None).map_err(err)?;
        let (_, wiki_ctx, _) = synthetic::build(&wiki, &chunk, &ev, Some(&tv)).map_err(err)?;
        let (_, task_ctx, _) = synthetic::build(&task, &chunk, &ev, Some(&tv)).map_err(err)?;
        check(task_ctx.len() == 500, || format!("task corpus has {} contexts", task_ctx.len()))?;
        let (train, held) = task_ctx.split_at(400);

        let mc = ModelConfig {
            n_layers: 2, d_model: 32, n_heads: 4, d_ff: 64, d_entity: 32, max_len: 64,
            vocab_size: tv.len(), n_entities: ev.len(), ..Default::default()
        };
        let table = world.alias_table();
        let links = PageLinks::from_contexts(&wiki_ctx);
        let phrases = world.phrase_table();
        let cc = CandidateConfig { k: 64, max_page: 16, max_phrase: 16, min_random: 16, rng_seed: seed };
        let nc = NoiseConfig { rng_seed: seed, ..Default::default() };
        let data = PretrainData {
            contexts: &wiki_ctx,
            token_vocab: &tv,
            sources: CandidateSources { page_links: &links, phrase_table: &phrases, n_entities: ev.len() },
            candidates: &cc,
            noise: &nc,
        };
        let pre_cfg = TrainConfig { base_lr: 3e-3, total_steps: 3000, batch_size: 16, rng_seed: seed, ..Default::default() };
        let ft_cfg = TrainConfig { base_lr: 1e-3, total_steps: 1000, batch_size: 16, rng_seed: seed, ..Default::default() };
        let mode = CandidateMode::AliasCandidates(&table);

        let mut pre = Model32::new(mc.clone(), seed).map_err(err)?;
        pretrain(&mut pre, &data, &pre_cfg, &RunOutputs::default()).map_err(err)?;
        finetune(&mut pre, train, mode, &ft_cfg, &RunOutputs::default()).map_err(err)?;
        let a = evaluate_disambiguation(&pre, held, mode).map_err(err)?.accuracy;

        let mut scratch = Model32::new(mc, seed).map_err(err)?;
        finetune(&mut scratch, train, mode, &ft_cfg, &RunOutputs::default()).map_err(err)?;
        let b = evaluate_disambiguation(&scratch, held, mode).map_err(err)?.accuracy;
        gaps.push(a - b);
        detail.push(format!("{a:.1} vs {b:.1}"));
    }
    let gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    check(gap >= 5.0, || format!("mean gap {gap:.2} points ({})", detail.join(", ")))?;
    Ok(format!("held-out accuracy pretrained vs not: {}; mean gap {gap:.1} points, {}", detail.join(", "), secs(start.elapsed())))
}

fn candidate_invariants() -> Outcome {
    let mut rng = seed::rng(1005, &[]);
    let mut floor_checked = 0;
    for call in 0..10_000 {
        let n_entities = rng.gen_range(20..400);
        let k = rng.gen_range(4..=n_entities.min(120));
        let min_random = rng.gen_range(0..=k / 2);
        let max_page = rng.gen_range(0..=k - min_random);
        let max_phrase = rng.gen_range(0..=k - min_random - max_page);
        let cfg = CandidateConfig { k, max_page, max_phrase, min_random, rng_seed: rng.gen() };

        let n_labels = rng.gen_range(0..6.min(k + 1));
        let labels: Vec<MentionLabel> = (0..n_labels)
            .map(|i| MentionLabel {
                span: Span::new(2 * i, 2 * i),
                entity: rng.gen_bool(0.8).then(|| rng.gen_range(0..n_entities)),
                surface: format!("s{}", rng.gen_range(0..5)),
            })
            .collect();
        let surfaces: Vec<&str> = labels.iter().map(|l| l.surface.as_str()).collect();
        let links = PageLinks::from_pairs((0..rng.gen_range(0..200)).map(|_| ("doc".to_string(), rng.gen_range(0..n_entities))));
        let phrases = PhraseTable::from_entries(
            (0..rng.gen_range(0..300)).map(|i| (format!("s{}", rng.gen_range(0..5)), rng.gen_range(0..n_entities), i as f64)),
        );
        let sources = CandidateSources { page_links: &links, phrase_table: &phrases, n_entities };
        let set = assemble_candidates(&labels, &surfaces, "doc", &cfg, &sources).map_err(|e| format!("call {call}: {e}"))?;
        let again = assemble_candidates(&labels, &surfaces, "doc", &cfg, &sources).map_err(|e| e.to_string())?;
        check(set == again, || format!("call {call}: not deterministic"))?;
        check(set.entities.len() == k, || format!("call {call}: size {} != {k}", set.entities.len()))?;
        let distinct: HashSet<_> = set.entities.iter().collect();
        check(distinct.len() == k, || format!("call {call}: duplicate entries"))?;
        for (l, g) in labels.iter().zip(&set.gold_positions) {
            if let Some(e) = l.entity {
                check(g.is_some_and(|p| set.entities[p] == e), || format!("call {call}: gold {e} missing"))?;
            }
        }
        if set.n_gold + min_random <= k {
            floor_checked += 1;
            check(set.n_random >= min_random, || format!("call {call}: {} random < {min_random}", set.n_random))?;
        }
    }
    Ok(format!("10000 calls; random floor checked on {floor_checked} where golds fit"))
}

fn noise_statistics() -> Outcome {
    let vocab = TokenVocab::from_words((0..500).map(|i| format!("w{i}")));
    let regular = vocab.regular_ids().to_vec();
    let mut rng = seed::rng(1006, &[]);
    let tokens: Vec<usize> = (0..100_000).map(|_| *regular.choose(&mut rng).unwrap()).collect();
    let cfg = NoiseConfig { rng_seed: 1007, ..Default::default() };
    let (out, actions) = apply_noise(&tokens, &cfg, &vocab).map_err(|e| e.to_string())?;
    let count = |a: NoiseAction| actions.iter().filter(|&&x| x == a).count() as f64;
    let (m, r, k) = (count(NoiseAction::Masked), count(NoiseAction::Replaced), count(NoiseAction::Kept));
    let sel = m + r + k;
    let frac = sel / tokens.len() as f64;
    let (pm, pr, pk) = (m / sel, r / sel, k / sel);
    check((frac - 0.15).abs() <= 0.01, || format!("selected fraction {frac:.4}"))?;
    check((pm - 0.8).abs() <= 0.03 && (pr - 0.1).abs() <= 0.03 && (pk - 0.1).abs() <= 0.03, || {
        format!("split {pm:.3}/{pr:.3}/{pk:.3}")
    })?;
    let masked_ok = out.iter().zip(&actions).all(|(&t, &a)| (a == NoiseAction::Masked) == (t == vocab.mask));
    check(masked_ok, || "mask positions disagree with actions".into())?;
    Ok(format!("selected {frac:.4}; mask/random/keep {:.1}/{:.1}/{:.1}%", 100.0 * pm, 100.0 * pr, 100.0 * pk))
}

fn bio_roundtrip() -> Outcome {
    let mut rng = seed::rng(1007, &[]);
    for trial in 0..10_000 {
        let len = rng.gen_range(0..40);
        let mut spans = Vec::new();
        let mut pos = 0;
        while pos < len && rng.gen_bool(0.7) {
            let start = pos + rng.gen_range(0..4);
            let end = start + rng.gen_range(0..4);
            if end >= len {
                break;
            }
            spans.push(Span::new(start, end));
            pos = end + 1;
        }
        let tags = bio::encode(&spans, len).map_err(|e| e.to_string())?;
        let back = bio::decode(&tags);
        check(back == spans, || format!("trial {trial}: {spans:?} -> {back:?}"))?;
    }
    for trial in 0..10_000 {
        let len = rng.gen_range(0..40);
        let tags: Vec<Tag> = (0..len).map(|_| Tag::ALL[rng.gen_range(0..3)]).collect();
        let spans = bio::decode(&tags);
        let valid = spans.iter().all(|s| s.start <= s.end && s.end < len)
            && spans.windows(2).all(|w| w[0].end < w[1].start)
            && spans.iter().all(|s| tags[s.start] != Tag::O && tags[s.start + 1..=s.end].iter().all(|&t| t == Tag::I));
        check(valid, || format!("trial {trial}: invalid decode of {tags:?}"))?;
        let covered: usize = spans.iter().map(|s| s.end - s.start + 1).sum();
        check(covered == tags.iter().filter(|&&t| t != Tag::O).count(), || format!("trial {trial}: tags dropped"))?;
    }
    Ok("10000 roundtrips, 10000 arbitrary tag sequences decode to valid spans".into())
}

fn micro_f1_oracle() -> Outcome {
    let gold = vec![vec![(Span::new(0, 1), Some(1)), (Span::new(3, 4), Some(2))]];
    let pred = vec![vec![LinkingPrediction::new(0, 1, 1), LinkingPrediction::new(3, 4, 3), LinkingPrediction::new(5, 5, 4)]];
    let m = strong_matching_micro_f1(&pred, &gold).map_err(|e| e.to_string())?;
    check(m.precision == 1.0 / 3.0 && m.recall == 0.5 && (m.f1 - 0.4).abs() < 1e-15, || format!("worked example gave {m:?}"))?;

    let mut rng = seed::rng(1008, &[]);
    for trial in 0..1000 {
        let docs = rng.gen_range(1..5);
        let mut preds = Vec::new();
        let mut golds = Vec::new();
        for _ in 0..docs {
            let span = |rng: &mut seed::Rng| {
                let s = rng.gen_range(0..8);
                Span::new(s, s + rng.gen_range(0..2))
            };
            golds.push((0..rng.gen_range(0..5)).map(|_| (span(&mut rng), rng.gen_bool(0.85).then(|| rng.gen_range(0..4)))).collect::<Vec<_>>());
            preds.push((0..rng.gen_range(0..5)).map(|_| LinkingPrediction { span: span(&mut rng), entity: rng.gen_range(0..4) }).collect::<Vec<_>>());
        }
        // Brute force: tag every item with its document and intersect flat sets.
        let g: HashSet<(usize, usize, usize, usize)> = golds
            .iter()
            .enumerate()
            .flat_map(|(d, v)| v.iter().filter_map(move |&(s, e)| e.map(|e| (d, s.start, s.end, e))))
            .collect();
        let p: HashSet<(usize, usize, usize, usize)> = preds
            .iter()
            .enumerate()
            .flat_map(|(d, v)| v.iter().map(move |x| (d, x.span.start, x.span.end, x.entity)))
            .collect();
        let correct = p.intersection(&g).count() as f64;
        let bp = if p.is_empty() { 0.0 } else { correct / p.len() as f64 };
        let br = if g.is_empty() { 0.0 } else { correct / g.len() as f64 };
        let bf = if bp + br == 0.0 { 0.0 } else { 2.0 * bp * br / (bp + br) };
        let m = strong_matching_micro_f1(&preds, &golds).map_err(|e| e.to_string())?;
        check(m.precision == bp && m.recall == br && m.f1 == bf, || format!("trial {trial}: {m:?} vs ({bp}, {br}, {bf})"))?;
    }
    Ok("worked example P=1/3 R=1/2 F1=0.4; 1000 random instances match exactly".into())
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/alias")
}

fn alias_audit() -> Outcome {
    let dir = fixture_dir();
    let err = |e: Error| e.to_string();
    let vocab = EntityVocab::load(&dir.join("entities.txt")).map_err(err)?;
    let entries = read_aliases(&dir.join("aliases.tsv")).map_err(err)?;
    let redirects = RedirectMap::load_tsv(&dir.join("redirects.tsv")).map_err(err)?;
    let (table, conv) = resolve(&entries, &redirects, &vocab);
    let mentions: Vec<(String, usize)> = std::fs::read_to_string(dir.join("mentions.tsv"))
        .map_err(|e| e.to_string())?
        .lines()
        .map(|l| {
            let (s, e) = l.split_once('\t').expect("two fields");
            (s.to_string(), vocab.get(e).expect("gold in vocab"))
        })
        .collect();
    let stats = table_stats(&table, &mentions).map_err(err)?;
    // 12 rows, 2 unresolvable; 3 mentions with 3 candidates each, golds found for 2.
    check((conv.input, conv.resolved, conv.dropped) == (12, 10, 2), || format!("{conv:?}"))?;
    check(conv.conversion == 100.0 * 10.0 / 12.0, || format!("conversion {}", conv.conversion))?;
    check(stats.gold_recall == 100.0 * 2.0 / 3.0, || format!("recall {}", stats.gold_recall))?;
    check(stats.avg_ambiguity == 3.0, || format!("ambiguity {}", stats.avg_ambiguity))?;
    match RedirectMap::load_tsv(&dir.join("cyclic_redirects.tsv")) {
        Err(Error::RedirectCycle(c)) => check(c.len() == 4 && c.first() == c.last(), || format!("cycle reported as {c:?}"))?,
        other => return Err(format!("cyclic redirects accepted: {other:?}")),
    }
    Ok(format!(
        "conversion {:.2}%, gold recall {:.2}%, ambiguity {:.1}; cycle rejected",
        conv.conversion, stats.gold_recall, stats.avg_ambiguity
    ))
}

fn determinism() -> Outcome {
    let fx = Fixture::new(100, 40, 3, 9);
    let cc = CandidateConfig { k: 48, max_page: 8, max_phrase: 16, min_random: 8, rng_seed: 21 };
    let nc = NoiseConfig { rng_seed: 22, ..Default::default() };
    let tc = TrainConfig { base_lr: 1e-3, total_steps: 30, batch_size: 16, log_every: 1, checkpoint_every: 10, rng_seed: 23, ..Default::default() };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
        let out = RunOutputs { log: Some(dir.path().join(format!("{name}.tsv"))), checkpoint: Some(dir.path().join(format!("{name}.ckpt"))) };
        let mut model = Model32::new(fx.model_config(16), 24).map_err(|e| e.to_string())?;
        pretrain(&mut model, &fx.data(&cc, &nc), &tc, &out).map_err(|e| e.to_string())?;
        let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
        Ok((read(out.log.as_deref().unwrap())?, read(out.checkpoint.as_deref().unwrap())?))
    };
    let (log_a, ck_a) = run("a")?;
    let (log_b, ck_b) = run("b")?;
    check(log_a == log_b, || "loss logs differ".into())?;
    check(ck_a == ck_b, || "checkpoints differ".into())?;
    Ok(format!("30-step runs: identical {}-byte logs and {}-byte checkpoints", log_a.len(), ck_a.len()))
}

fn checkpoint_roundtrip() -> Outcome {
    let fx = Fixture::new(80, 20, 2, 10);
    let err = |e: Error| e.to_string();
    let mut model = Model32::new(fx.model_config(16), 31).map_err(err)?;
    let tc = TrainConfig { base_lr: 1e-3, total_steps: 20, batch_size: 8, rng_seed: 32, ..Default::default() };
    finetune(&mut model, &fx.contexts, CandidateMode::AllEntities, &tc, &RunOutputs::default()).map_err(err)?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&model, &path).map_err(err)?;
    let loaded: Model32 = checkpoint::load(&path).map_err(err)?;
    check(loaded == model, || "parameters changed".into())?;
    let table = fx.world.alias_table();
    let mut n = 0;
    let shared: Vec<usize> = (0..20).collect();
    for ctx in &fx.contexts {
        let spans: Vec<Span> = ctx.labels.iter().map(|l| l.span).collect();
        for scope in [CandidateScope::All, CandidateScope::Shared(&shared)] {
            let a = model.predict_disambiguation(&ctx.tokens, &spans, &scope).map_err(err)?;
            let b = loaded.predict_disambiguation(&ctx.tokens, &spans, &scope).map_err(err)?;
            check(a == b, || format!("{}: predictions differ", ctx.doc_id))?;
            n += a.len();
        }
        let a = model.predict_end_to_end(&ctx.tokens).map_err(err)?;
        let b = loaded.predict_end_to_end(&ctx.tokens).map_err(err)?;
        check(a == b, || format!("{}: end-to-end output differs", ctx.doc_id))?;
    }
    let ea = evaluate_disambiguation(&model, &fx.contexts, CandidateMode::AliasCandidates(&table)).map_err(err)?;
    let eb = evaluate_disambiguation(&loaded, &fx.contexts, CandidateMode::AliasCandidates(&table)).map_err(err)?;
    check(ea == eb, || "alias-mode evaluation differs".into())?;
    let ex: Vec<Example<'_>> = fx
        .contexts
        .iter()
        .map(|c| Example { tokens: &c.tokens, labels: &c.labels, candidates: CandidateScope::All })
        .collect();
    let la = model.total_loss(&ex, &LossWeights::default()).map_err(err)?.total;
    let lb = loaded.total_loss(&ex, &LossWeights::default()).map_err(err)?.total;
    check(la.to_bits() == lb.to_bits(), || format!("loss {la} vs {lb}"))?;
    Ok(format!("{n} span predictions, end-to-end output and batch loss identical after reload"))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("gradient suite", gradient_suite),
        ("loss oracles", loss_oracles),
        ("overfit experiment", overfit),
        ("generalization with pretraining", generalization),
        ("candidate invariants", candidate_invariants),
        ("noise statistics", noise_statistics),
        ("BIO roundtrip", bio_roundtrip),
        ("micro-F1 oracle", micro_f1_oracle),
        ("alias-table audit", alias_audit),
        ("determinism", determinism),
        ("checkpoint roundtrip", checkpoint_roundtrip),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        match f() {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
