//! Sequential vs rayon execution of the data-parallel stages.
//!
//! `cargo bench -p kbpop-core --bench parallel`. Without the `parallel`
//! feature both variants run sequentially.

use std::collections::BTreeSet;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kbpop_core::candidates::{self, ratio_grid, search_sticky, search_threshold, threshold_grid, TuningEntry};
use kbpop_core::dataset::{DatasetSplit, SplitName, TripleEntry};
use kbpop_core::eval::{self, Predictions};
use kbpop_core::lm::{CheckpointStore, TinyBackend};
use kbpop_core::mining::{mine_sentences, Document, Segmenter};
use kbpop_core::prompts::{PromptTemplate, RelationPrompts};
use kbpop_core::{CheckpointId, Execution, ScoredToken};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn tuning_fixture(n: usize) -> Vec<TuningEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|_| {
            let mut scores: Vec<f64> = (0..30).map(|_| rng.gen::<f64>()).collect();
            scores.sort_by(|a, b| b.total_cmp(a));
            let cands: Vec<ScoredToken> = scores.iter().enumerate().map(|(i, &s)| ScoredToken::new(format!("o{i}"), s)).collect();
            let gold: Vec<Vec<String>> = (0..rng.gen_range(0..4)).map(|_| vec![format!("o{}", rng.gen_range(0..40))]).collect();
            TuningEntry::new(&cands, &gold)
        })
        .collect()
}

fn bench_tuning(c: &mut Criterion) {
    let entries = tuning_fixture(500);
    let ts = threshold_grid();
    let rs = ratio_grid();
    let mut g = c.benchmark_group("threshold_search");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| search_threshold(&entries, &ts, exec)));
    }
    g.finish();

    let mut g = c.benchmark_group("sticky_search");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| search_sticky(&entries, &ts, &rs, exec)));
    }
    g.finish();
}

fn bench_eval(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rels = ["PersonLanguage", "PersonProfession", "RiverBasinsCountry", "PersonEmployer"];
    let entries: Vec<TripleEntry> = (0..20_000)
        .map(|i| {
            let objects: Vec<String> = (0..rng.gen_range(0..5)).map(|_| format!("obj{}", rng.gen_range(0..50))).collect();
            TripleEntry::with_objects(&format!("s{i}"), rels[i % rels.len()], &objects)
        })
        .collect();
    let preds: Predictions = entries
        .iter()
        .map(|e| {
            let p: BTreeSet<String> = (0..rng.gen_range(0..5)).map(|_| format!("obj{}", rng.gen_range(0..50))).collect();
            (e.key(), p)
        })
        .collect();
    let gold = DatasetSplit::new(SplitName::Dev, entries);
    let mut g = c.benchmark_group("eval_report");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| eval::report(&preds, &gold, exec)));
    }
    g.finish();
}

fn bench_mining(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let words = ["river", "flows", "through", "the", "basin", "of", "and", "into", "north", "valley"];
    let pairs: Vec<(String, String)> = (0..200).map(|i| (format!("River{i}"), format!("Country{}", i % 30))).collect();
    let docs: Vec<Document> = (0..400)
        .map(|d| {
            let text = (0..20)
                .map(|_| {
                    let (s, o) = &pairs[rng.gen_range(0..pairs.len())];
                    let filler: Vec<&str> = (0..8).map(|_| words[rng.gen_range(0..words.len())]).collect();
                    format!("The {s} {} {o}.", filler.join(" "))
                })
                .collect::<Vec<_>>()
                .join(" ");
            Document { id: format!("d{d}"), text }
        })
        .collect();
    let mut g = c.benchmark_group("mine_sentences");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| mine_sentences(&docs, &pairs, Segmenter::Unicode, exec)));
    }
    g.finish();
}

fn bench_generate(c: &mut Criterion) {
    let dir = tempfile::tempdir().expect("tempdir");
    let backend = TinyBackend::new(CheckpointStore::new(dir.path()));
    let entries: Vec<TripleEntry> = (0..300)
        .map(|i| TripleEntry::with_objects(&format!("Person{i}"), "PersonLanguage", &[format!("Lang{}", i % 40)]))
        .collect();
    let texts: Vec<String> = entries
        .iter()
        .map(|e| format!("{} speaks in {} .", e.subject, e.gold_objects[0][0]))
        .collect();
    let base = CheckpointId::raw();
    backend.create_base(&base, &texts, 64, 5).expect("base model");
    let prompts = RelationPrompts {
        templates: vec![
            PromptTemplate::manual("[SUBJ] speaks in [OBJ].").expect("template"),
            PromptTemplate::manual("The native language of [SUBJ] is [OBJ].").expect("template"),
        ],
        decomposition: None,
    };
    let mut g = c.benchmark_group("generate");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new(name, entries.len()), &entries, |b, es| {
            b.iter(|| candidates::generate_all(es, &prompts, &base, &backend, exec).expect("generate"))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_tuning, bench_eval, bench_mining, bench_generate);
criterion_main!(benches);
