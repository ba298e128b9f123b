mod common;

use common::*;
use entlink::aliastable::{table_stats, AliasTable};
use entlink::eval::{evaluate_disambiguation, evaluate_end_to_end};
use entlink::training::{finetune, CandidateMode, RunOutputs, TrainConfig};
use entlink::Model32;

#[test]
fn untrained_end_to_end_f1_is_near_zero() {
    let fx = Fixture::new(100, 30, 3, 4);
    let model = Model32::new(fx.model_config(16), 2).unwrap();
    let m = evaluate_end_to_end(&model, &fx.contexts).unwrap();
    assert!(m.n_gold > 50);
    // A random tagger finds some spans, but 1-in-100 entity guesses almost never match.
    assert!(m.f1 < 0.05, "{m:?}");
}

#[test]
fn alias_accuracy_is_bounded_by_gold_recall() {
    let fx = Fixture::new(60, 30, 2, 5);
    // Drop every third entity from the table so some golds are unreachable.
    let table = AliasTable::from_entries(
        fx.world.entities.iter().enumerate().filter(|(i, _)| i % 3 != 0).map(|(i, e)| (e.surface.as_str(), i)),
    );
    let mut model = Model32::new(fx.model_config(16), 3).unwrap();
    let cfg = TrainConfig { base_lr: 3e-3, total_steps: 300, batch_size: 8, rng_seed: 1, ..Default::default() };
    finetune(&mut model, &fx.contexts, CandidateMode::AliasCandidates(&table), &cfg, &RunOutputs::default()).unwrap();

    let mentions: Vec<(&str, usize)> = fx
        .contexts
        .iter()
        .flat_map(|c| &c.labels)
        .filter_map(|l| l.entity.map(|e| (l.surface.as_str(), e)))
        .collect();
    let recall = table_stats(&table, &mentions).unwrap().gold_recall;
    let acc = evaluate_disambiguation(&model, &fx.contexts, CandidateMode::AliasCandidates(&table)).unwrap().accuracy;
    assert!(recall < 100.0);
    assert!(acc <= recall + 1e-9, "accuracy {acc} > recall {recall}");
    // Training on reachable golds should get most of them.
    assert!(acc > 0.5 * recall, "accuracy {acc}, recall {recall}");
}
