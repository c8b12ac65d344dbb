//! Acceptance suite. Prints one line per criterion and exits non-zero when
//! any required criterion fails. Optional criteria report SKIP unless their
//! environment is provided:
//!
//! - `KBPOP_REFERENCE_DUMPS`: directory with `dev.jsonl` (gold) and one
//!   `<Relation>.jsonl` candidate dump per relation from the reference model
//!   with baseline prompts.
//! - `KBPOP_LIVE_HARVEST=1`: query the live Wikidata endpoint. Challenge
//!   subjects to exclude are read from the files listed (colon separated) in
//!   `KBPOP_CHALLENGE_FILES`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use kbpop_core::candidates::{
    self, accepted_prefix, read_dump, search_threshold, select, threshold_grid, tuning_entries, write_dump,
};
use kbpop_core::dataset::{load_entries, DatasetSplit, SplitName, TripleEntry};
use kbpop_core::eval::{self, entry_prf, EntryScore, Predictions};
use kbpop_core::lm::{CheckpointStore, MlmTrainer, TinyBackend, TrainConfig};
use kbpop_core::mining::{select_ensemble, MinedPrompt};
use kbpop_core::pretraining::{build_masked_example, MaskedExample, WindowConfig};
use kbpop_core::prompts::{self, decomposed_prompt, DecompositionRule, PromptTemplate, Provenance};
use kbpop_core::silver::{self, FetchOutcome, SparqlClient};
use kbpop_core::{CandidateSet, CheckpointId, Execution, Relation, RelationInventory, ScoredToken, SelectionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Outcome::Fail(format!($($msg)+));
        }
    };
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 10] = [
        ("metric oracle", metric_oracle),
        ("empty-gold convention", empty_gold_convention),
        ("threshold search oracle", threshold_search_oracle),
        ("sticky selection oracle", sticky_selection_oracle),
        ("masking window", masking_window),
        ("template strings", template_strings),
        ("ensemble margin", ensemble_margin),
        ("training smoke", training_smoke),
        ("reference model scores", reference_scores),
        ("live silver harvest", live_harvest),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let ms = start.elapsed().as_millis();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] {:>2}. {name:<26} {ms:>6} ms  {detail}", i + 1);
    }
    if failed == 0 {
        println!("acceptance: all required criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

fn within(start: Instant, limit: Duration) -> bool {
    start.elapsed() < limit
}

// Brute-force scorer: enumerate every (prediction, gold object) pair without
// sets or early exits.
fn oracle_prf(pred: &[String], gold: &[Vec<String>]) -> (f64, f64, f64) {
    let norm = |s: &str| s.trim().to_lowercase();
    let mut uniq: Vec<String> = Vec::new();
    for p in pred {
        let n = norm(p);
        if !uniq.contains(&n) {
            uniq.push(n);
        }
    }
    let p = if uniq.is_empty() {
        1.0
    } else {
        let mut correct = 0usize;
        for u in &uniq {
            let mut hit = false;
            for g in gold {
                for a in g {
                    if norm(a) == *u {
                        hit = true;
                    }
                }
            }
            if hit {
                correct += 1;
            }
        }
        correct as f64 / uniq.len() as f64
    };
    let r = if gold.is_empty() {
        1.0
    } else {
        let mut found = 0usize;
        for g in gold {
            let mut hit = false;
            for a in g {
                for u in &uniq {
                    if norm(a) == *u {
                        hit = true;
                    }
                }
            }
            if hit {
                found += 1;
            }
        }
        found as f64 / gold.len() as f64
    };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

const POOL: [&str; 10] = ["Paris", "paris ", "Rome", "Lyon", "Oslo", "Bern", "Nice", " ROME", "Turin", "Milan"];

fn random_strings(rng: &mut ChaCha8Rng, max: usize) -> Vec<String> {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| POOL[rng.gen_range(0..POOL.len())].to_string()).collect()
}

fn random_gold(rng: &mut ChaCha8Rng, max: usize) -> Vec<Vec<String>> {
    let n = rng.gen_range(0..=max);
    (0..n)
        .map(|_| {
            let aliases = rng.gen_range(1..=2);
            (0..aliases).map(|_| POOL[rng.gen_range(0..POOL.len())].to_string()).collect()
        })
        .collect()
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..500 {
        let pred = random_strings(&mut rng, 6);
        let gold = random_gold(&mut rng, 6);
        let got = entry_prf(&pred, &gold);
        let (p, r, f) = oracle_prf(&pred, &gold);
        ensure!(
            (got.precision - p).abs() < 1e-12 && (got.recall - r).abs() < 1e-12 && (got.f1 - f).abs() < 1e-12,
            "case {case}: pred {pred:?} gold {gold:?}: got {got:?}, oracle ({p}, {r}, {f})"
        );
    }
    // Predicting nothing: P = 1 and R = F1 = fraction of entries with empty gold.
    for case in 0..50 {
        let golds: Vec<Vec<Vec<String>>> = (0..rng.gen_range(1..30)).map(|_| random_gold(&mut rng, 3)).collect();
        let empty = golds.iter().filter(|g| g.is_empty()).count() as f64 / golds.len() as f64;
        let scores: Vec<EntryScore> = golds.iter().map(|g| entry_prf::<String>(&[], g)).collect();
        let n = scores.len() as f64;
        let p = scores.iter().map(|s| s.precision).sum::<f64>() / n;
        let r = scores.iter().map(|s| s.recall).sum::<f64>() / n;
        let f = scores.iter().map(|s| s.f1).sum::<f64>() / n;
        ensure!(p == 1.0, "null case {case}: precision {p}");
        ensure!((r - empty).abs() < 1e-12 && (f - empty).abs() < 1e-12, "null case {case}: r {r} f {f} vs {empty}");
    }
    ensure!(within(start, Duration::from_secs(5)), "took {:?}", start.elapsed());
    Outcome::Pass("500 random cases match the brute-force scorer; null identity holds".into())
}

fn empty_gold_convention() -> Outcome {
    let entries: Vec<TripleEntry> = (0..50)
        .map(|i| {
            let objects: Vec<String> = if i % 2 == 0 { vec![] } else { vec![format!("cause {i}")] };
            TripleEntry::with_objects(&format!("person {i}"), "PersonCauseOfDeath", &objects)
        })
        .collect();
    let gold = DatasetSplit::new(SplitName::Dev, entries.clone());
    let preds: Predictions = entries.iter().map(|e| (e.key(), BTreeSet::new())).collect();
    let report = eval::report(&preds, &gold, Execution::Sequential);
    let Some(rel) = report.relation("PersonCauseOfDeath") else {
        return Outcome::Fail("relation missing from report".into());
    };
    let want = (1.0, 0.5, 0.5);
    let got = (rel.score.precision, rel.score.recall, rel.score.f1);
    ensure!(got == want, "got {got:?}, want {want:?}");
    let avg = (report.average.precision, report.average.recall, report.average.f1);
    ensure!(avg == want, "average {avg:?}");
    Outcome::Pass(format!("({:.3}, {:.3}, {:.3})", got.0, got.1, got.2))
}

fn synthetic_set(rng: &mut ChaCha8Rng, i: usize, relation: &str) -> (CandidateSet, TripleEntry) {
    let words = ["alpha", "beta", "gamma", "delta", "the", "epsilon", "zeta", "eta", "theta", "iota", "and"];
    let n = rng.gen_range(0..8);
    let mut scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..1000) as f64) / 1000.0).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    let mut used = BTreeSet::new();
    let mut cands = Vec::new();
    for s in scores {
        let w = words[rng.gen_range(0..words.len())];
        if used.insert(w) {
            cands.push(ScoredToken::new(w, s));
        }
    }
    let gold: Vec<String> = words
        .iter()
        .filter(|_| rng.gen_bool(0.15))
        .map(|w| w.to_string())
        .collect();
    let subject = format!("subject {i}");
    let set = CandidateSet {
        subject: subject.clone(),
        relation: Relation::new(relation),
        candidates: cands,
        checkpoint: CheckpointId::raw(),
        prompts: vec![format!("{subject} relates to [MASK].")],
    };
    (set, TripleEntry::with_objects(&subject, relation, &gold))
}

// Exhaustive grid search with an independent selection: every cleaned
// candidate scoring at least t.
fn exhaustive_threshold(sets: &[CandidateSet], gold: &[TripleEntry], stop: &BTreeSet<String>) -> (f64, f64) {
    let by_key: HashMap<_, _> = sets.iter().map(|s| (s.key(), s)).collect();
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for i in 0..=95 {
        let t = i as f64 / 100.0;
        let mut sum = 0.0;
        for g in gold {
            let set = by_key[&g.key()];
            let pred: Vec<String> = set
                .candidates
                .iter()
                .filter(|c| !stop.contains(&c.token.trim().to_lowercase()) && c.score >= t)
                .map(|c| c.token.clone())
                .collect();
            sum += oracle_prf(&pred, &g.gold_objects).2;
        }
        let f = sum / gold.len() as f64;
        if f > best.1 {
            best = (t, f);
        }
    }
    best
}

fn threshold_search_oracle() -> Outcome {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(format!("tempdir: {e}")),
    };
    let stop: BTreeSet<String> = candidates::DEFAULT_STOPLIST.iter().map(|s| s.to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let relations = ["RelA", "RelB", "RelC", "RelD"];
    let mut checked = 0;
    for rel in relations {
        let (sets, gold): (Vec<_>, Vec<_>) = (0..50).map(|i| synthetic_set(&mut rng, i, rel)).unzip();
        let path = dir.path().join(format!("{rel}.jsonl"));
        if let Err(e) = write_dump(&path, &sets) {
            return Outcome::Fail(format!("write dump: {e}"));
        }
        let back = match read_dump(&path) {
            Ok(b) => b,
            Err(e) => return Outcome::Fail(format!("read dump: {e}")),
        };
        ensure!(back == sets, "{rel}: dump did not round-trip");
        let refs: Vec<&TripleEntry> = gold.iter().collect();
        let entries = match tuning_entries(&back, &refs, &stop) {
            Ok(e) => e,
            Err(e) => return Outcome::Fail(format!("tuning entries: {e}")),
        };
        for exec in [Execution::Sequential, Execution::Parallel] {
            let Some(got) = search_threshold(&entries, &threshold_grid(), exec) else {
                return Outcome::Fail("empty search".into());
            };
            let (t, f) = exhaustive_threshold(&back, &gold, &stop);
            ensure!(got.threshold == t, "{rel}: threshold {} vs exhaustive {t}", got.threshold);
            ensure!((got.f1 - f).abs() < 1e-12, "{rel}: f1 {} vs exhaustive {f}", got.f1);
        }
        checked += sets.len();
    }

    // Every t in (0.30, 0.70] gives F1 = 1; the smallest such grid point wins.
    let tie = CandidateSet {
        subject: "s".into(),
        relation: Relation::new("RelA"),
        candidates: vec![ScoredToken::new("alpha", 0.7), ScoredToken::new("beta", 0.3)],
        checkpoint: CheckpointId::raw(),
        prompts: vec![],
    };
    let gold = TripleEntry::with_objects("s", "RelA", &["alpha"]);
    let entries = tuning_entries(std::slice::from_ref(&tie), &[&gold], &stop).expect("fixture");
    let got = search_threshold(&entries, &threshold_grid(), Execution::Sequential).expect("non-empty");
    ensure!(got.threshold == 0.31 && got.f1 == 1.0, "tie broke to {got:?}");
    Outcome::Pass(format!("{checked} entries over {} dumps match; tie -> t=0.31", relations.len()))
}

// Single pass over the ranked list, carrying the last accepted score.
fn simulate_sticky(cands: &[ScoredToken], t: f64, r: Option<f64>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut prev: Option<f64> = None;
    for c in cands {
        let keep = c.score >= t
            || match (r, prev) {
                (Some(r), Some(p)) => c.score >= r * p,
                _ => false,
            };
        if !keep {
            break;
        }
        out.insert(c.token.clone());
        prev = Some(c.score);
    }
    out
}

fn sticky_selection_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..1000 {
        let n = rng.gen_range(0..=10);
        let mut scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=100) as f64 / 100.0).collect();
        scores.sort_by(|a, b| b.total_cmp(a));
        let cands: Vec<ScoredToken> = scores.iter().enumerate().map(|(i, &s)| ScoredToken::new(format!("o{i}"), s)).collect();
        let set = CandidateSet {
            subject: "s".into(),
            relation: Relation::new("R"),
            candidates: cands.clone(),
            checkpoint: CheckpointId::raw(),
            prompts: vec![],
        };
        let t = rng.gen_range(0..=95) as f64 / 100.0;
        let r = if rng.gen_bool(0.7) { Some(rng.gen_range(1..=100) as f64 / 100.0) } else { None };
        let cfg = SelectionConfig::threshold(t).with_sticky(r);
        let got = select(&set, &cfg);
        let want = simulate_sticky(&cands, t, r);
        ensure!(got == want, "case {case}: scores {scores:?} t {t} r {r:?}: {got:?} vs {want:?}");

        let t2 = rng.gen_range(0..=95) as f64 / 100.0;
        let (lo, hi) = if t <= t2 { (t, t2) } else { (t2, t) };
        let k_lo = accepted_prefix(&scores, lo, None);
        let k_hi = accepted_prefix(&scores, hi, None);
        ensure!(k_hi <= k_lo, "case {case}: prefix grew from {k_lo} to {k_hi} as t rose {lo} -> {hi}");
        let s_lo = select(&set, &SelectionConfig::threshold(lo));
        let s_hi = select(&set, &SelectionConfig::threshold(hi));
        ensure!(s_hi.is_subset(&s_lo), "case {case}: selection not monotone in t");
    }
    Outcome::Pass("1000 random lists match the single-pass simulation; monotone in t".into())
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn masking_window() -> Outcome {
    let sentence = toks("A cat sits on a mat .");
    let ex = match build_masked_example(&sentence, 1..2, 5..6, WindowConfig(1)) {
        Ok(e) => e,
        Err(e) => return Outcome::Fail(format!("footnote case: {e}")),
    };
    ensure!(ex.original_tokens == ["a", "mat", "."], "footnote case masked {:?}", ex.original_tokens);
    ensure!(ex.masked_positions == [4, 5, 6], "footnote positions {:?}", ex.masked_positions);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..1000 {
        let len = rng.gen_range(2..=20);
        let tokens: Vec<String> = (0..len).map(|i| format!("w{i}")).collect();
        let a_len = rng.gen_range(1..len);
        let a_start = rng.gen_range(0..=len - a_len);
        let a = a_start..a_start + a_len;
        let free: Vec<usize> = (0..len).filter(|p| !a.contains(p)).collect();
        if free.is_empty() {
            continue;
        }
        // Object: a contiguous run of free positions.
        let first = free[rng.gen_range(0..free.len())];
        let mut end = first + 1;
        while end < len && !a.contains(&end) && rng.gen_bool(0.5) {
            end += 1;
        }
        let obj = first..end;
        let subj = a;
        let c = rng.gen_range(0..=4);
        let ex = match build_masked_example(&tokens, subj.clone(), obj.clone(), WindowConfig(c)) {
            Ok(e) => e,
            Err(e) => return Outcome::Fail(format!("case {case}: {e}")),
        };
        let masked: BTreeSet<usize> = ex.masked_positions.iter().copied().collect();
        ensure!(masked.len() <= obj.len() + 2 * c, "case {case}: {} masked > {} + 2*{c}", masked.len(), obj.len());
        ensure!(masked.iter().all(|p| !subj.contains(p)), "case {case}: subject {subj:?} masked in {masked:?}");
        ensure!(obj.clone().all(|p| masked.contains(&p)), "case {case}: object {obj:?} not fully masked");
        ensure!(
            masked.iter().all(|&p| p + c >= obj.start && p < obj.end + c),
            "case {case}: {masked:?} outside window {c} of {obj:?}"
        );
        ensure!(ex.original() == tokens, "case {case}: original not recoverable");
    }
    Outcome::Pass("footnote case masks {a, mat, .}; 1000 random spans respect the window".into())
}

fn template_strings() -> Outcome {
    let reg = prompts::default_registry();
    let pattern = |rel: &str| -> Option<String> {
        reg.get(&Relation::new(rel))
            .and_then(|p| p.templates.first())
            .map(|t| t.pattern().to_string())
    };
    let want = [
        ("PersonInstrument", "The musician [SUBJ] plays [OBJ], which is an instrument"),
        ("PersonEmployer", "[SUBJ] works at [OBJ]"),
    ];
    for (rel, p) in want {
        ensure!(pattern(rel).as_deref() == Some(p), "{rel}: pattern {:?}", pattern(rel));
    }
    let inst = PromptTemplate::manual(want[0].1).expect("valid");
    let got = inst.instantiate("Jimi Hendrix", "[MASK]");
    ensure!(
        got == "The musician Jimi Hendrix plays [MASK], which is an instrument",
        "instantiated {got:?}"
    );
    let emp = PromptTemplate::manual(want[1].1).expect("valid");
    let got = emp.instantiate("Ada Lovelace", "<mask>");
    ensure!(got == "Ada Lovelace works at <mask>", "instantiated {got:?}");

    let rule = DecompositionRule::location_type();
    ensure!(rule.precondition_pattern == "[SUBJ], as a place, is a [MASK].", "{:?}", rule.precondition_pattern);
    ensure!(
        rule.formal_pattern == "[SUBJ] [KEYWORD] shares border with [MASK] [KEYWORD]",
        "{:?}",
        rule.formal_pattern
    );
    ensure!(
        rule.keywords == ["state", "province", "department", "city", "region"],
        "keywords {:?}",
        rule.keywords
    );
    let pre = rule.precondition_prompt("Andalusia", "[MASK]");
    ensure!(pre == "Andalusia, as a place, is a [MASK].", "precondition {pre:?}");
    let formal = decomposed_prompt("Hebei", "province", &rule, "[MASK]");
    ensure!(
        formal.as_deref().ok() == Some("Hebei province shares border with [MASK] province"),
        "formal {formal:?}"
    );
    let has_rule = reg
        .get(&Relation::new("StateSharesBorderState"))
        .and_then(|p| p.decomposition.as_ref())
        .is_some();
    ensure!(has_rule, "StateSharesBorderState has no decomposition rule");
    Outcome::Pass("manual and decomposition prompts are byte-identical".into())
}

fn ensemble_size(gain: f64) -> Result<usize, String> {
    let mined = vec![
        MinedPrompt {
            pattern: "[SUBJ] is located in [OBJ]".into(),
            frequency: 9,
            provenance: Provenance::MinedMiddle,
        },
        MinedPrompt {
            pattern: "[SUBJ] flows through [OBJ]".into(),
            frequency: 4,
            provenance: Provenance::MinedMiddle,
        },
    ];
    let scorer = |ts: &[PromptTemplate]| -> Result<f64, candidates::CandidateError> {
        Ok(match ts {
            [one] if one.pattern().contains("located") => 0.5,
            [_] => 0.4,
            _ => 0.5 + gain,
        })
    };
    select_ensemble(&mined, None, Execution::Sequential, scorer)
        .map(|d| d.size())
        .map_err(|e| e.to_string())
}

fn ensemble_margin() -> Outcome {
    let small = ensemble_size(0.009);
    let large = ensemble_size(0.011);
    ensure!(small == Ok(1), "+0.009 gave {small:?}");
    ensure!(large == Ok(2), "+0.011 gave {large:?}");
    Outcome::Pass("+0.009 -> 1 prompt, +0.011 -> 2 prompts".into())
}

fn training_corpus() -> (Vec<MaskedExample>, Vec<MaskedExample>) {
    let countries = ["France", "Italy", "Spain", "Norway", "Chile", "Peru", "Japan", "Kenya", "Egypt", "Cuba"];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut make = |i: usize| {
        let country = countries[i % countries.len()];
        let subject = format!("City{i}");
        let sentence = toks(&format!("{subject} is located in {country} ."));
        let c = rng.gen_range(0..=1);
        build_masked_example(&sentence, 0..1, 3..4, WindowConfig(c)).expect("valid spans")
    };
    let train: Vec<MaskedExample> = (0..50).map(&mut make).collect();
    let dev: Vec<MaskedExample> = (50..60).map(&mut make).collect();
    (train, dev)
}

fn training_smoke() -> Outcome {
    let start = Instant::now();
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(format!("tempdir: {e}")),
    };
    let backend = TinyBackend::new(CheckpointStore::new(dir.path()));
    let (train, dev) = training_corpus();
    let texts: Vec<String> = train.iter().chain(&dev).map(|e| e.original().join(" ")).collect();
    let base = CheckpointId::raw();
    if let Err(e) = backend.create_base(&base, &texts, 16, 7) {
        return Outcome::Fail(format!("base model: {e}"));
    }
    let cfg = TrainConfig {
        learning_rate: 0.5,
        batch_size: 8,
        epochs: 2,
        seed: 11,
    };
    let output = CheckpointId::new("smoke");
    let out = match backend.mlm_finetune(&base, &output, &train, &dev, &cfg) {
        Ok(o) => o,
        Err(e) => return Outcome::Fail(format!("finetune: {e}")),
    };
    ensure!(out.epochs.len() == 2, "{} epochs recorded", out.epochs.len());
    let (l1, l2) = (out.epochs[0].train_loss, out.epochs[1].train_loss);
    ensure!(l2 < l1, "epoch-2 loss {l2} not below epoch-1 loss {l1}");

    // Recompute dev perplexity from the saved epoch checkpoints.
    let mut ppl = Vec::new();
    for e in 1..=2 {
        match backend.model(&output.epoch(e)) {
            Ok(m) => ppl.push(m.perplexity(&dev)),
            Err(err) => return Outcome::Fail(format!("epoch {e} checkpoint: {err}")),
        }
    }
    let best = if ppl[1] < ppl[0] { 2 } else { 1 };
    ensure!(out.selected_epoch == best, "selected epoch {} but perplexities {ppl:?}", out.selected_epoch);
    ensure!(out.checkpoint == output.epoch(best), "selected checkpoint {}", out.checkpoint);
    ensure!(within(start, Duration::from_secs(120)), "took {:?}", start.elapsed());
    Outcome::Pass(format!(
        "loss {l1:.4} -> {l2:.4}; perplexity {:.3}/{:.3}; selected epoch {best}",
        ppl[0], ppl[1]
    ))
}

fn reference_scores() -> Outcome {
    let Some(dir) = std::env::var_os("KBPOP_REFERENCE_DUMPS").map(PathBuf::from) else {
        return Outcome::Skip("set KBPOP_REFERENCE_DUMPS to check reference-model scores".into());
    };
    match reference_scores_in(&dir) {
        Ok((base, tuned)) => {
            let ok_base = (base - 0.309).abs() <= 0.03;
            let ok_tuned = (tuned - 0.447).abs() <= 0.03;
            let detail = format!("baseline {base:.3} (want 0.309 +/- 0.03), tuned {tuned:.3} (want 0.447 +/- 0.03)");
            if ok_base && ok_tuned {
                Outcome::Pass(detail)
            } else {
                Outcome::Fail(detail)
            }
        }
        Err(e) => Outcome::Fail(e),
    }
}

fn reference_scores_in(dir: &Path) -> Result<(f64, f64), String> {
    let gold = load_entries(&dir.join("dev.jsonl"), SplitName::Dev, true, &RelationInventory::challenge())
        .map_err(|e| e.to_string())?;
    let mut sets = Vec::new();
    for rel in gold.relations() {
        sets.extend(read_dump(&dir.join(format!("{rel}.jsonl"))).map_err(|e| e.to_string())?);
    }
    let exec = Execution::default();
    let fallback = SelectionConfig::threshold(0.5);
    let base = eval::report(&candidates::predict_all(&sets, &BTreeMap::new(), &fallback), &gold, exec);

    let mut tuned = BTreeMap::new();
    for rel in gold.relations() {
        let entries: Vec<&TripleEntry> = gold.of_relation(&rel).collect();
        let (cfg, _) = candidates::tune_relation(&rel, &sets, &entries, &fallback.stoplist, &threshold_grid(), None, exec)
            .map_err(|e| e.to_string())?;
        tuned.insert(rel, cfg);
    }
    let after = eval::report(&candidates::predict_all(&sets, &tuned, &fallback), &gold, exec);
    Ok((base.average.f1, after.average.f1))
}

fn live_harvest() -> Outcome {
    if std::env::var_os("KBPOP_LIVE_HARVEST").is_none() {
        return Outcome::Skip("set KBPOP_LIVE_HARVEST=1 to query the live endpoint".into());
    }
    let mut subjects: Vec<String> = Vec::new();
    if let Some(files) = std::env::var_os("KBPOP_CHALLENGE_FILES") {
        for path in std::env::split_paths(&files) {
            match load_entries(&path, SplitName::Train, false, &RelationInventory::challenge()) {
                Ok(split) => subjects.extend(split.subjects().map(String::from)),
                Err(e) => return Outcome::Fail(format!("{}: {e}", path.display())),
            }
        }
    }
    let rel = Relation::new("RiverBasinsCountry");
    let Some(query) = silver::default_queries().remove(&rel) else {
        return Outcome::Fail("no query for RiverBasinsCountry".into());
    };
    let client = SparqlClient::wikidata();
    let pairs = match client.fetch_pairs(&rel, &query) {
        Ok(FetchOutcome::Pairs(p)) => p,
        Ok(FetchOutcome::TimedOut) => return Outcome::Fail("endpoint timed out".into()),
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let (kept, report) = silver::exclude_challenge_subjects(&rel, pairs, subjects.iter().map(String::as_str));
    let banned: BTreeSet<String> = subjects.iter().map(|s| s.trim().to_lowercase()).collect();
    ensure!(
        kept.iter().all(|p| !banned.contains(&p.subject.trim().to_lowercase())),
        "a challenge subject survived exclusion"
    );
    let n = report.kept_count as f64;
    ensure!((139.0..=417.0).contains(&n), "kept {n} pairs, outside 278 +/- 50%");
    Outcome::Pass(format!("kept {} of {} pairs", report.kept_count, report.raw_count))
}
