//! Precision, recall and F1 for multi-answer entries.
//!
//! Scoring conventions: an empty prediction has precision 1, an empty gold
//! set has recall 1, and F1 is 0 when precision and recall are both 0.
//! Relation scores are unweighted means over entries; the overall score is
//! an unweighted mean over relations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetSplit, EntryKey};
use crate::par::{self, Execution};
use crate::relation::Relation;

fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Whether `predicted` names the object described by `aliases`.
pub fn matches(predicted: &str, aliases: &[String]) -> bool {
    let p = normalize(predicted);
    aliases.iter().any(|a| normalize(a) == p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EntryScore {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EntryScore {
            precision,
            recall,
            f1,
        }
    }

    fn mean<'a>(scores: impl IntoIterator<Item = &'a EntryScore>) -> EntryScore {
        let (mut p, mut r, mut f, mut n) = (0.0, 0.0, 0.0, 0usize);
        for s in scores {
            p += s.precision;
            r += s.recall;
            f += s.f1;
            n += 1;
        }
        if n == 0 {
            return EntryScore {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            };
        }
        let n = n as f64;
        EntryScore {
            precision: p / n,
            recall: r / n,
            f1: f / n,
        }
    }
}

/// Score one entry. Predictions are deduplicated after case folding and
/// trimming; several predictions matching the same gold object each count
/// as correct for precision but only once for recall.
pub fn entry_prf<S: AsRef<str>>(predicted: &[S], gold: &[Vec<String>]) -> EntryScore {
    let preds: BTreeSet<String> = predicted.iter().map(|p| normalize(p.as_ref())).collect();
    let gold_norm: Vec<BTreeSet<String>> = gold
        .iter()
        .map(|set| set.iter().map(|a| normalize(a)).collect())
        .collect();

    let precision = if preds.is_empty() {
        1.0
    } else {
        let spurious = preds
            .iter()
            .filter(|p| !gold_norm.iter().any(|set| set.contains(*p)))
            .count();
        (preds.len() - spurious) as f64 / preds.len() as f64
    };
    let recall = if gold_norm.is_empty() {
        1.0
    } else {
        let hits = gold_norm
            .iter()
            .filter(|set| preds.iter().any(|p| set.contains(p)))
            .count();
        hits as f64 / gold_norm.len() as f64
    };
    EntryScore::from_pr(precision, recall)
}

/// Predicted object sets keyed by entry.
pub type Predictions = HashMap<EntryKey, BTreeSet<String>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryResult {
    pub key: EntryKey,
    pub predicted: Vec<String>,
    pub score: EntryScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationScore {
    pub relation: Relation,
    pub entries: usize,
    #[serde(flatten)]
    pub score: EntryScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub relations: Vec<RelationScore>,
    pub average: EntryScore,
    pub entries: Vec<EntryResult>,
    /// Predictions whose key is not in the gold split.
    pub ignored_predictions: usize,
}

impl EvalReport {
    pub fn relation(&self, name: &str) -> Option<&RelationScore> {
        self.relations.iter().find(|r| r.relation.as_str() == name)
    }
}

/// Score predictions against a gold split. Gold entries without a
/// prediction are scored as an empty prediction.
pub fn report(predictions: &Predictions, gold: &DatasetSplit, exec: Execution) -> EvalReport {
    let gold_keys: std::collections::HashSet<EntryKey> = gold.entries.iter().map(|e| e.key()).collect();
    let ignored: Vec<&EntryKey> = predictions.keys().filter(|k| !gold_keys.contains(*k)).collect();
    for k in &ignored {
        log::warn!("prediction for ({}, {}) has no gold entry; ignored", k.subject, k.relation);
    }

    let empty = BTreeSet::new();
    let entries = par::map(exec, &gold.entries, |e| {
        let key = e.key();
        let pred = predictions.get(&key).unwrap_or(&empty);
        let predicted: Vec<String> = pred.iter().cloned().collect();
        let score = entry_prf(&predicted, &e.gold_objects);
        EntryResult {
            key,
            predicted,
            score,
        }
    });

    let mut grouped: BTreeMap<&Relation, Vec<&EntryScore>> = BTreeMap::new();
    for r in &entries {
        grouped.entry(&r.key.relation).or_default().push(&r.score);
    }
    let relations: Vec<RelationScore> = grouped
        .into_iter()
        .map(|(rel, scores)| RelationScore {
            relation: rel.clone(),
            entries: scores.len(),
            score: EntryScore::mean(scores),
        })
        .collect();
    let average = EntryScore::mean(relations.iter().map(|r| &r.score));
    EvalReport {
        relations,
        average,
        entries,
        ignored_predictions: ignored.len(),
    }
}

/// Mean F1 over `gold` entries for a prediction function; the quantity the
/// threshold and ensemble searches maximise.
pub fn macro_f1<'a, F>(gold: impl IntoIterator<Item = &'a crate::dataset::TripleEntry>, mut predict: F) -> f64
where
    F: FnMut(&crate::dataset::TripleEntry) -> Vec<String>,
{
    let (mut sum, mut n) = (0.0, 0usize);
    for e in gold {
        sum += entry_prf(&predict(e), &e.gold_objects).f1;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn name_width(reports: &[&EvalReport]) -> usize {
    reports
        .iter()
        .flat_map(|r| r.relations.iter().map(|s| s.relation.as_str().len()))
        .chain(std::iter::once("Relation".len()))
        .max()
        .unwrap_or(8)
}

/// Aligned text table: one row per relation plus an `Average` row.
pub fn render_table(report: &EvalReport) -> String {
    let w = name_width(&[report]);
    let mut out = String::new();
    let _ = writeln!(out, "{:<w$}  {:>9}  {:>9}  {:>9}", "Relation", "Precision", "Recall", "F-1");
    for r in &report.relations {
        let s = r.score;
        let _ = writeln!(
            out,
            "{:<w$}  {:>9.3}  {:>9.3}  {:>9.3}",
            r.relation.as_str(),
            s.precision,
            s.recall,
            s.f1
        );
    }
    let a = report.average;
    let _ = writeln!(out, "{:<w$}  {:>9.3}  {:>9.3}  {:>9.3}", "Average", a.precision, a.recall, a.f1);
    out
}

/// Two runs side by side, matched by relation name.
pub fn render_comparison(left_label: &str, left: &EvalReport, right_label: &str, right: &EvalReport) -> String {
    let w = name_width(&[left, right]);
    let mut names: Vec<&Relation> = left.relations.iter().map(|r| &r.relation).collect();
    for r in &right.relations {
        if !names.contains(&&r.relation) {
            names.push(&r.relation);
        }
    }
    names.sort();

    let cell = |s: Option<&RelationScore>| match s {
        Some(r) => format!(
            "{:>6.3} {:>6.3} {:>6.3}",
            r.score.precision, r.score.recall, r.score.f1
        ),
        None => format!("{:>6} {:>6} {:>6}", "NA", "NA", "NA"),
    };
    let mut out = String::new();
    let _ = writeln!(out, "{:<w$}  {:^20}  {:^20}", "", left_label, right_label);
    let _ = writeln!(
        out,
        "{:<w$}  {:>6} {:>6} {:>6}  {:>6} {:>6} {:>6}",
        "Relation", "P", "R", "F-1", "P", "R", "F-1"
    );
    for n in names {
        let _ = writeln!(
            out,
            "{:<w$}  {}  {}",
            n.as_str(),
            cell(left.relation(n.as_str())),
            cell(right.relation(n.as_str()))
        );
    }
    let avg = |r: &EvalReport| {
        format!(
            "{:>6.3} {:>6.3} {:>6.3}",
            r.average.precision, r.average.recall, r.average.f1
        )
    };
    let _ = writeln!(out, "{:<w$}  {}  {}", "Average", avg(left), avg(right));
    out
}

/// Method-per-row summary of macro averages.
pub fn render_summary(rows: &[(&str, &EvalReport)]) -> String {
    let w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<w$}  {:>9}  {:>9}  {:>9}", "Method", "Precision", "Recall", "F-1");
    for (label, r) in rows {
        let a = r.average;
        let _ = writeln!(out, "{:<w$}  {:>9.3}  {:>9.3}  {:>9.3}", label, a.precision, a.recall, a.f1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{SplitName, TripleEntry};
    use proptest::prelude::*;

    fn g(sets: &[&[&str]]) -> Vec<Vec<String>> {
        sets.iter().map(|s| s.iter().map(|a| a.to_string()).collect()).collect()
    }

    #[test]
    fn match_folds_case_and_trims() {
        assert!(matches("gibraltar", &["Gibraltar".into()]));
        assert!(matches("Gibraltar ", &["Gibraltar".into()]));
        assert!(!matches("Spain", &["Gibraltar".into()]));
    }

    #[test]
    fn empty_conventions() {
        let none: [&str; 0] = [];
        assert_eq!(entry_prf(&none, &[]), EntryScore { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(entry_prf(&none, &g(&[&["a"]])), EntryScore { precision: 1.0, recall: 0.0, f1: 0.0 });
        assert_eq!(entry_prf(&["a"], &[]), EntryScore { precision: 0.0, recall: 1.0, f1: 0.0 });
    }

    #[test]
    fn half_right() {
        let s = entry_prf(&["a", "b"], &g(&[&["a"], &["c"]]));
        assert_eq!(s, EntryScore { precision: 0.5, recall: 0.5, f1: 0.5 });
    }

    #[test]
    fn aliases_count_once_for_recall() {
        let s = entry_prf(&["Peking", "Beijing"], &g(&[&["Beijing", "Peking"], &["Tianjin"]]));
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 0.5);
    }

    #[test]
    fn duplicates_deduplicated() {
        let s = entry_prf(&["a", "A ", "b"], &g(&[&["a"]]));
        assert_eq!(s.precision, 0.5);
    }

    fn split(entries: Vec<TripleEntry>) -> DatasetSplit {
        DatasetSplit::new(SplitName::Dev, entries)
    }

    #[test]
    fn half_empty_gold_under_null_strategy() {
        let entries: Vec<_> = (0..50)
            .map(|i| {
                let objs: Vec<&str> = if i % 2 == 0 { vec![] } else { vec!["cancer"] };
                TripleEntry::with_objects(&format!("p{i}"), "PersonCauseOfDeath", &objs)
            })
            .collect();
        let rep = report(&Predictions::new(), &split(entries), Execution::Sequential);
        let r = rep.relation("PersonCauseOfDeath").unwrap().score;
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 0.5, 0.5));
    }

    #[test]
    fn perfect_and_macro_average() {
        let gold = split(vec![
            TripleEntry::with_objects("a", "PersonLanguage", &["French"]),
            TripleEntry::with_objects("b", "RiverBasinsCountry", &["Spain"]),
        ]);
        let mut preds = Predictions::new();
        preds.insert(gold.entries[0].key(), ["French".to_string()].into());
        preds.insert(gold.entries[1].key(), ["Italy".to_string()].into());
        let rep = report(&preds, &gold, Execution::Parallel);
        assert_eq!(rep.relation("PersonLanguage").unwrap().score.f1, 1.0);
        assert_eq!(rep.relation("RiverBasinsCountry").unwrap().score.f1, 0.0);
        assert_eq!(rep.average, EntryScore { precision: 0.5, recall: 0.5, f1: 0.5 });
    }

    #[test]
    fn stray_predictions_ignored() {
        let gold = split(vec![TripleEntry::with_objects("a", "PersonLanguage", &["French"])]);
        let mut preds = Predictions::new();
        preds.insert(gold.entries[0].key(), ["French".to_string()].into());
        preds.insert(
            EntryKey { subject: "zz".into(), relation: "PersonLanguage".into() },
            ["x".to_string()].into(),
        );
        let rep = report(&preds, &gold, Execution::Sequential);
        assert_eq!(rep.ignored_predictions, 1);
        assert_eq!(rep.average.f1, 1.0);
        assert!(render_table(&rep).contains("Average"));
        assert!(render_comparison("A", &rep, "B", &rep).contains("PersonLanguage"));
    }

    fn arb_words() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f", "g"]).prop_map(String::from), 0..6)
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut p in arb_words(), mut gold in prop::collection::vec(arb_words().prop_filter("nonempty", |v| !v.is_empty()), 0..5)) {
            let a = entry_prf(&p, &gold);
            p.reverse();
            gold.reverse();
            prop_assert_eq!(a, entry_prf(&p, &gold));
        }

        #[test]
        fn monotone_under_additions(p in arb_words(), gold in prop::collection::vec(arb_words().prop_filter("nonempty", |v| !v.is_empty()), 1..5)) {
            let base = entry_prf(&p, &gold);
            let mut with_spurious = p.clone();
            with_spurious.push("zzz".into());
            let s = entry_prf(&with_spurious, &gold);
            prop_assert!(s.precision <= base.precision + 1e-12);
            prop_assert!(s.f1 <= base.f1 + 1e-12);
            let mut with_correct = p.clone();
            with_correct.push(gold[0][0].clone());
            prop_assert!(entry_prf(&with_correct, &gold).recall >= base.recall - 1e-12);
        }

        #[test]
        fn f1_bounded_by_max(p in arb_words(), gold in prop::collection::vec(arb_words().prop_filter("nonempty", |v| !v.is_empty()), 0..5)) {
            let s = entry_prf(&p, &gold);
            prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
        }
    }
}
