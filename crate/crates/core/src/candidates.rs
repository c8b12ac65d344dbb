//! Candidate generation from fill-mask queries and final object selection.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{EntryKey, TripleEntry};
use crate::eval::{entry_prf, Predictions};
use crate::io;
use crate::lm::{CheckpointId, FillMask, LmError, ScoredToken, DEFAULT_TOP_K};
use crate::par::{self, Execution};
use crate::prompts::{decomposed_prompt, infer_subject_type, RelationPrompts};
use crate::relation::Relation;

pub const MAX_CANDIDATES: usize = DEFAULT_TOP_K;

pub const DEFAULT_STOPLIST: [&str; 20] = [
    "i", "me", "you", "he", "him", "she", "her", "it", "we", "us", "they", "them", "the", "a", "an", "some", "this",
    "that", "these", "those",
];

#[derive(Debug, thiserror::Error)]
pub enum CandidateError {
    #[error("({subject}, {relation}): {source}")]
    Backend {
        subject: String,
        relation: Relation,
        #[source]
        source: LmError,
    },
    #[error("relation {0} has no prompt templates")]
    NoTemplates(Relation),
    #[error("relation {0}: {1}")]
    Prompt(Relation, String),
    #[error("cannot tune {0}: no gold entries")]
    EmptySplit(Relation),
    #[error("no candidates for ({subject}, {relation})")]
    MissingPrediction { subject: String, relation: Relation },
    #[error("prediction dump {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Ranked candidate objects for one entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub subject: String,
    pub relation: Relation,
    pub candidates: Vec<ScoredToken>,
    pub checkpoint: CheckpointId,
    pub prompts: Vec<String>,
}

impl CandidateSet {
    pub fn key(&self) -> EntryKey {
        EntryKey {
            subject: self.subject.clone(),
            relation: self.relation.clone(),
        }
    }

    pub fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.candidates.iter().map(|c| c.score)
    }
}

fn default_stoplist() -> BTreeSet<String> {
    DEFAULT_STOPLIST.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub threshold: f64,
    #[serde(default)]
    pub sticky_ratio: Option<f64>,
    #[serde(default)]
    pub null_strategy: bool,
    #[serde(default = "default_stoplist")]
    pub stoplist: BTreeSet<String>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            threshold: 0.5,
            sticky_ratio: None,
            null_strategy: false,
            stoplist: default_stoplist(),
        }
    }
}

impl SelectionConfig {
    pub fn threshold(t: f64) -> Self {
        SelectionConfig {
            threshold: t,
            ..Default::default()
        }
    }

    pub fn null() -> Self {
        SelectionConfig {
            null_strategy: true,
            ..Default::default()
        }
    }

    pub fn with_sticky(mut self, ratio: Option<f64>) -> Self {
        self.sticky_ratio = ratio;
        self
    }
}

/// The exact prompts sent to the model for `subject`.
pub fn prompts_for(
    subject: &str,
    relation: &Relation,
    prompts: &RelationPrompts,
    lm: &dyn FillMask,
    checkpoint: &CheckpointId,
) -> Result<Vec<String>, CandidateError> {
    let mask = lm.mask_token();
    if let Some(rule) = &prompts.decomposition {
        let keyword = infer_subject_type(subject, rule, lm, checkpoint).map_err(|source| CandidateError::Backend {
            subject: subject.to_string(),
            relation: relation.clone(),
            source,
        })?;
        let p = decomposed_prompt(subject, &keyword, rule, mask)
            .map_err(|e| CandidateError::Prompt(relation.clone(), e.to_string()))?;
        return Ok(vec![p]);
    }
    if prompts.templates.is_empty() {
        return Err(CandidateError::NoTemplates(relation.clone()));
    }
    Ok(prompts.templates.iter().map(|t| t.instantiate(subject, mask)).collect())
}

/// Average per-prompt distributions, counting a token missing from a
/// prompt's list as 0. Ties keep first-seen order.
pub fn merge_scores(lists: &[Vec<ScoredToken>], limit: usize) -> Vec<ScoredToken> {
    if lists.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<String> = Vec::new();
    let mut sums: HashMap<String, f64> = HashMap::new();
    for list in lists {
        let mut seen = BTreeSet::new();
        for c in list {
            if !seen.insert(c.token.as_str()) {
                continue;
            }
            let slot = sums.entry(c.token.clone()).or_insert_with(|| {
                order.push(c.token.clone());
                0.0
            });
            *slot += c.score;
        }
    }
    let n = lists.len() as f64;
    let mut merged: Vec<ScoredToken> = order
        .into_iter()
        .map(|tok| {
            let s = sums[&tok] / n;
            ScoredToken::new(tok, s)
        })
        .collect();
    merged.sort_by(|a, b| b.score.total_cmp(&a.score));
    merged.truncate(limit);
    merged
}

pub fn generate(
    entry: &TripleEntry,
    prompts: &RelationPrompts,
    checkpoint: &CheckpointId,
    lm: &dyn FillMask,
) -> Result<CandidateSet, CandidateError> {
    let texts = prompts_for(&entry.subject, &entry.relation, prompts, lm, checkpoint)?;
    let mut lists = Vec::with_capacity(texts.len());
    for text in &texts {
        let list = lm
            .query(checkpoint, text, MAX_CANDIDATES)
            .map_err(|source| CandidateError::Backend {
                subject: entry.subject.clone(),
                relation: entry.relation.clone(),
                source,
            })?;
        lists.push(list);
    }
    Ok(CandidateSet {
        subject: entry.subject.clone(),
        relation: entry.relation.clone(),
        candidates: merge_scores(&lists, MAX_CANDIDATES),
        checkpoint: checkpoint.clone(),
        prompts: texts,
    })
}

/// [`generate`] over many entries, one independent task per entry.
pub fn generate_all(
    entries: &[TripleEntry],
    prompts: &RelationPrompts,
    checkpoint: &CheckpointId,
    lm: &dyn FillMask,
    exec: Execution,
) -> Result<Vec<CandidateSet>, CandidateError> {
    par::try_map(exec, entries, |e| generate(e, prompts, checkpoint, lm))
}

/// Drop stoplisted tokens (case-insensitive). Scores are left untouched.
pub fn clean(mut cands: CandidateSet, stoplist: &BTreeSet<String>) -> CandidateSet {
    cands
        .candidates
        .retain(|c| !stoplist.contains(&c.token.trim().to_lowercase()));
    cands
}

/// How many leading candidates the threshold / sticky rule accepts.
pub fn accepted_prefix(scores: &[f64], threshold: f64, sticky: Option<f64>) -> usize {
    for (i, &s) in scores.iter().enumerate() {
        if s >= threshold {
            continue;
        }
        match sticky {
            Some(r) if i > 0 && s >= r * scores[i - 1] => continue,
            _ => return i,
        }
    }
    scores.len()
}

/// Final objects for a cleaned candidate set.
pub fn select(cands: &CandidateSet, cfg: &SelectionConfig) -> BTreeSet<String> {
    if cfg.null_strategy {
        return BTreeSet::new();
    }
    let scores: Vec<f64> = cands.scores().collect();
    let k = accepted_prefix(&scores, cfg.threshold, cfg.sticky_ratio);
    cands.candidates[..k].iter().map(|c| c.token.clone()).collect()
}

/// Clean then select.
pub fn predict(cands: &CandidateSet, cfg: &SelectionConfig) -> BTreeSet<String> {
    select(&clean(cands.clone(), &cfg.stoplist), cfg)
}

/// Predictions for every set, each relation using its own configuration;
/// relations without one fall back to `fallback`.
pub fn predict_all(
    sets: &[CandidateSet],
    configs: &std::collections::BTreeMap<Relation, SelectionConfig>,
    fallback: &SelectionConfig,
) -> Predictions {
    sets.iter()
        .map(|s| {
            let cfg = configs.get(&s.relation).unwrap_or(fallback);
            (s.key(), predict(s, cfg))
        })
        .collect()
}

pub fn threshold_grid() -> Vec<f64> {
    (0..=95).map(|i| i as f64 / 100.0).collect()
}

pub fn ratio_grid() -> Vec<f64> {
    (1..=100).map(|i| i as f64 / 100.0).collect()
}

/// One entry prepared for tuning: cleaned scores and the F1 obtained by
/// accepting each prefix length.
#[derive(Debug, Clone)]
pub struct TuningEntry {
    scores: Vec<f64>,
    prefix_f1: Vec<f64>,
}

impl TuningEntry {
    pub fn new(candidates: &[ScoredToken], gold: &[Vec<String>]) -> Self {
        let tokens: Vec<&str> = candidates.iter().map(|c| c.token.as_str()).collect();
        let prefix_f1 = (0..=tokens.len()).map(|k| entry_prf(&tokens[..k], gold).f1).collect();
        TuningEntry {
            scores: candidates.iter().map(|c| c.score).collect(),
            prefix_f1,
        }
    }

    fn f1(&self, t: f64, r: Option<f64>) -> f64 {
        self.prefix_f1[accepted_prefix(&self.scores, t, r)]
    }
}

/// Pair each gold entry of `relation` with its cleaned candidates.
pub fn tuning_entries(
    sets: &[CandidateSet],
    gold: &[&TripleEntry],
    stoplist: &BTreeSet<String>,
) -> Result<Vec<TuningEntry>, CandidateError> {
    let by_key: HashMap<EntryKey, &CandidateSet> = sets.iter().map(|s| (s.key(), s)).collect();
    gold.iter()
        .map(|e| {
            let set = by_key.get(&e.key()).ok_or_else(|| CandidateError::MissingPrediction {
                subject: e.subject.clone(),
                relation: e.relation.clone(),
            })?;
            let cleaned = clean((*set).clone(), stoplist);
            Ok(TuningEntry::new(&cleaned.candidates, &e.gold_objects))
        })
        .collect()
}

fn mean_f1(entries: &[TuningEntry], t: f64, r: Option<f64>) -> f64 {
    let mut sum = 0.0;
    for e in entries {
        sum += e.f1(t, r);
    }
    sum / entries.len() as f64
}

/// Macro F1 of always predicting nothing.
pub fn null_f1(entries: &[TuningEntry]) -> f64 {
    entries.iter().map(|e| e.prefix_f1[0]).sum::<f64>() / entries.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tuned {
    pub threshold: f64,
    pub sticky_ratio: Option<f64>,
    pub f1: f64,
}

/// Best threshold on the grid; ties go to the smallest value.
pub fn search_threshold(entries: &[TuningEntry], grid: &[f64], exec: Execution) -> Option<Tuned> {
    if entries.is_empty() || grid.is_empty() {
        return None;
    }
    let mut ts = grid.to_vec();
    ts.sort_by(f64::total_cmp);
    let scores = par::map(exec, &ts, |&t| mean_f1(entries, t, None));
    let mut best = 0;
    for (i, &f) in scores.iter().enumerate() {
        if f > scores[best] {
            best = i;
        }
    }
    Some(Tuned {
        threshold: ts[best],
        sticky_ratio: None,
        f1: scores[best],
    })
}

/// Joint search over thresholds and sticky ratios (plus "no ratio").
/// Ties prefer no ratio, then the smallest threshold, then the largest ratio.
pub fn search_sticky(entries: &[TuningEntry], t_grid: &[f64], r_grid: &[f64], exec: Execution) -> Option<Tuned> {
    let plain = search_threshold(entries, t_grid, exec)?;
    let mut ts = t_grid.to_vec();
    ts.sort_by(f64::total_cmp);
    let mut rs = r_grid.to_vec();
    rs.sort_by(|a, b| b.total_cmp(a));
    let rows = par::map(exec, &ts, |&t| {
        rs.iter()
            .map(|&r| (r, mean_f1(entries, t, Some(r))))
            .fold(None::<(f64, f64)>, |acc, (r, f)| match acc {
                Some((_, bf)) if bf >= f => acc,
                _ => Some((r, f)),
            })
    });
    let mut best = plain;
    for (&t, row) in ts.iter().zip(rows) {
        if let Some((r, f)) = row {
            if f > best.f1 {
                best = Tuned {
                    threshold: t,
                    sticky_ratio: Some(r),
                    f1: f,
                };
            }
        }
    }
    Some(best)
}

/// Tune one relation and turn the result into a selection config; a ratio
/// grid turns on the joint sticky search. When
/// predicting nothing beats every grid point, the null strategy is chosen.
pub fn tune_relation(
    relation: &Relation,
    sets: &[CandidateSet],
    gold: &[&TripleEntry],
    stoplist: &BTreeSet<String>,
    t_grid: &[f64],
    r_grid: Option<&[f64]>,
    exec: Execution,
) -> Result<(SelectionConfig, Tuned), CandidateError> {
    let entries = tuning_entries(sets, gold, stoplist)?;
    let tuned = match r_grid {
        Some(rs) => search_sticky(&entries, t_grid, rs, exec),
        None => search_threshold(&entries, t_grid, exec),
    }
    .ok_or_else(|| CandidateError::EmptySplit(relation.clone()))?;
    let null = null_f1(&entries);
    let mut cfg = SelectionConfig {
        threshold: tuned.threshold,
        sticky_ratio: tuned.sticky_ratio,
        null_strategy: false,
        stoplist: stoplist.clone(),
    };
    if null > tuned.f1 {
        cfg = SelectionConfig {
            stoplist: stoplist.clone(),
            ..SelectionConfig::null()
        };
        return Ok((
            cfg,
            Tuned {
                threshold: tuned.threshold,
                sticky_ratio: None,
                f1: null,
            },
        ));
    }
    Ok((cfg, tuned))
}

pub fn write_dump(path: &Path, sets: &[CandidateSet]) -> Result<(), CandidateError> {
    io::write_jsonl(path, sets).map_err(|source| CandidateError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_dump(path: &Path) -> Result<Vec<CandidateSet>, CandidateError> {
    io::read_jsonl(path).map_err(|source| CandidateError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Serialize)]
struct SubmissionRecord<'a> {
    #[serde(rename = "SubjectEntity")]
    subject: &'a str,
    #[serde(rename = "Relation")]
    relation: &'a str,
    #[serde(rename = "ObjectEntities")]
    objects: Vec<&'a str>,
}

/// Challenge-format submission lines in the order of `entries`. Entries
/// without a prediction are written with an empty object list.
pub fn submission_jsonl(entries: &[TripleEntry], predictions: &Predictions) -> String {
    let empty = BTreeSet::new();
    let mut out = String::new();
    for e in entries {
        let objs = predictions.get(&e.key()).unwrap_or(&empty);
        let rec = SubmissionRecord {
            subject: &e.subject,
            relation: e.relation.as_str(),
            objects: objs.iter().map(String::as_str).collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}
