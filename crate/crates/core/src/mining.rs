//! Prompt mining from raw text and greedy ensemble selection.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::candidates::{generate_all, search_threshold, threshold_grid, tuning_entries, CandidateError};
use crate::dataset::TripleEntry;
use crate::io;
use crate::lm::{CheckpointId, FillMask};
use crate::par::{self, Execution};
use crate::prompts::{PromptTemplate, Provenance, RelationPrompts, OBJ, SUBJ};

pub const FREQUENCY_CUT: usize = 20;
pub const ENSEMBLE_MARGIN: f64 = 0.01;
const MARGIN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segmenter {
    /// Unicode sentence boundaries.
    #[default]
    Unicode,
    /// One sentence per line.
    Lines,
}

impl Segmenter {
    pub fn sentences<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let it: Box<dyn Iterator<Item = &'a str>> = match self {
            Segmenter::Unicode => Box::new(text.unicode_sentences()),
            Segmenter::Lines => Box::new(text.lines()),
        };
        it.map(str::trim).filter(|s| !s.is_empty()).collect()
    }
}

/// Load a corpus: every file of a directory is a document, otherwise every
/// line of the file is. Unreadable files are skipped with a warning.
pub fn read_corpus(path: &Path) -> std::io::Result<Vec<Document>> {
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let mut docs = Vec::with_capacity(files.len());
        for f in files {
            match fs::read_to_string(&f) {
                Ok(text) => docs.push(Document {
                    id: f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                    text,
                }),
                Err(e) => log::warn!("skipping {}: {e}", f.display()),
            }
        }
        Ok(docs)
    } else {
        let text = fs::read_to_string(path)?;
        Ok(text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| Document {
                id: format!("{}:{}", path.display(), i + 1),
                text: l.to_string(),
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinedSentence {
    pub text: String,
    /// Byte ranges into `text`.
    pub subject: Range<usize>,
    pub object: Range<usize>,
    pub source_doc: String,
}

impl MinedSentence {
    pub fn subject_text(&self) -> &str {
        &self.text[self.subject.clone()]
    }

    pub fn object_text(&self) -> &str {
        &self.text[self.object.clone()]
    }
}

/// Lowercased text with a map from each lowered byte offset back to the
/// original offset of the character it came from.
struct Lowered {
    text: String,
    orig: Vec<usize>,
}

impl Lowered {
    fn new(s: &str) -> Self {
        let mut text = String::with_capacity(s.len());
        let mut orig = Vec::with_capacity(s.len() + 1);
        for (i, ch) in s.char_indices() {
            for lc in ch.to_lowercase() {
                for _ in 0..lc.len_utf8() {
                    orig.push(i);
                }
                text.push(lc);
            }
        }
        orig.push(s.len());
        Lowered { text, orig }
    }

    /// Original byte range of the lowered range `r`.
    fn map(&self, r: Range<usize>) -> Range<usize> {
        let end = if r.end < self.orig.len() - 1 {
            self.orig[r.end]
        } else {
            *self.orig.last().unwrap()
        };
        self.orig[r.start]..end
    }
}

fn is_boundary(text: &str, r: &Range<usize>) -> bool {
    let before = text[..r.start].chars().next_back();
    let after = text[r.end..].chars().next();
    !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
}

/// First whole-word occurrence of `needle` in `hay` not overlapping `avoid`.
fn find_word(hay: &str, needle: &str, avoid: Option<&Range<usize>>) -> Option<Range<usize>> {
    if needle.is_empty() {
        return None;
    }
    hay.match_indices(needle)
        .map(|(i, _)| i..i + needle.len())
        .find(|r| is_boundary(hay, r) && avoid.is_none_or(|a| r.end <= a.start || r.start >= a.end))
}

/// Sentences containing both members of a pair (case-insensitive, whole
/// words). Spans are anchored at the first occurrence of each entity.
pub fn mine_sentences(
    docs: &[Document],
    pairs: &[(String, String)],
    segmenter: Segmenter,
    exec: Execution,
) -> Vec<MinedSentence> {
    let lowered_pairs: Vec<(String, String)> = pairs
        .iter()
        .map(|(s, o)| (s.trim().to_lowercase(), o.trim().to_lowercase()))
        .filter(|(s, o)| !s.is_empty() && !o.is_empty())
        .collect();
    let per_doc = par::map(exec, docs, |doc| {
        let mut out = Vec::new();
        for sentence in segmenter.sentences(&doc.text) {
            let low = Lowered::new(sentence);
            for (s, o) in &lowered_pairs {
                let Some(sr) = find_word(&low.text, s, None) else { continue };
                let Some(or) = find_word(&low.text, o, Some(&sr)) else { continue };
                out.push(MinedSentence {
                    text: sentence.to_string(),
                    subject: low.map(sr),
                    object: low.map(or),
                    source_doc: doc.id.clone(),
                });
            }
        }
        out
    });
    per_doc.into_iter().flatten().collect()
}

/// Subject/object pairs from gold entries, one per alias.
pub fn pairs_from_entries<'a>(entries: impl IntoIterator<Item = &'a TripleEntry>) -> Vec<(String, String)> {
    let mut seen = BTreeSet::new();
    for e in entries {
        for obj in &e.gold_objects {
            for alias in obj {
                seen.insert((e.subject.clone(), alias.clone()));
            }
        }
    }
    seen.into_iter().collect()
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `[SUBJ] <text between> [OBJ]` in sentence order; none for adjacent spans.
pub fn middle_word_template(s: &MinedSentence) -> Option<PromptTemplate> {
    let (first, second, a, b) = if s.subject.start <= s.object.start {
        (&s.subject, &s.object, SUBJ, OBJ)
    } else {
        (&s.object, &s.subject, OBJ, SUBJ)
    };
    if second.start < first.end {
        return None;
    }
    let middle = normalize_ws(&s.text[first.end..second.start]);
    if middle.is_empty() {
        return None;
    }
    PromptTemplate::new(format!("{a} {middle} {b}"), Provenance::MinedMiddle).ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepToken {
    pub text: String,
    /// Index of the head token; `None` for the root.
    pub head: Option<usize>,
}

/// A dependency parse aligned to sentence text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepParse {
    tokens: Vec<DepToken>,
    spans: Vec<Range<usize>>,
}

impl DepParse {
    /// Align tokens to `text` left to right. Returns `None` when a token
    /// cannot be found or a head index is out of range.
    pub fn align(text: &str, tokens: Vec<DepToken>) -> Option<Self> {
        let mut spans = Vec::with_capacity(tokens.len());
        let mut cursor = 0;
        for t in &tokens {
            if t.head.is_some_and(|h| h >= tokens.len()) || t.text.is_empty() {
                return None;
            }
            let at = text[cursor..].find(&t.text)? + cursor;
            if !text[cursor..at].trim().is_empty() {
                return None;
            }
            spans.push(at..at + t.text.len());
            cursor = at + t.text.len();
        }
        Some(DepParse { tokens, spans })
    }

    fn tokens_in(&self, span: &Range<usize>) -> Option<Vec<usize>> {
        let mut inside = Vec::new();
        for (i, r) in self.spans.iter().enumerate() {
            let overlaps = r.start < span.end && span.start < r.end;
            if !overlaps {
                continue;
            }
            if r.start < span.start || r.end > span.end {
                return None;
            }
            inside.push(i);
        }
        (!inside.is_empty()).then_some(inside)
    }

    /// The token of a span whose head lies outside the span.
    fn head_of(&self, toks: &[usize]) -> usize {
        toks.iter()
            .copied()
            .find(|&i| self.tokens[i].head.is_none_or(|h| !toks.contains(&h)))
            .unwrap_or(toks[0])
    }

    fn shortest_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let n = self.tokens.len();
        let mut adj = vec![Vec::new(); n];
        for (i, t) in self.tokens.iter().enumerate() {
            if let Some(h) = t.head {
                if h != i {
                    adj[i].push(h);
                    adj[h].push(i);
                }
            }
        }
        let mut prev = vec![usize::MAX; n];
        let mut queue = VecDeque::from([from]);
        prev[from] = from;
        while let Some(u) = queue.pop_front() {
            if u == to {
                let mut path = vec![to];
                let mut cur = to;
                while cur != from {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for &v in &adj[u] {
                if prev[v] == usize::MAX {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        None
    }
}

/// Template from the left-most to the right-most token of the shortest
/// dependency path between the two entity heads.
pub fn dependency_template(s: &MinedSentence, parse: &DepParse) -> Option<PromptTemplate> {
    let (Some(subj), Some(obj)) = (parse.tokens_in(&s.subject), parse.tokens_in(&s.object)) else {
        log::warn!("parse does not align with entity spans in {:?}", s.text);
        return None;
    };
    if subj.iter().any(|i| obj.contains(i)) {
        return None;
    }
    let path = parse.shortest_path(parse.head_of(&subj), parse.head_of(&obj))?;
    let lo = path.iter().chain(&subj).chain(&obj).copied().min()?;
    let hi = path.iter().chain(&subj).chain(&obj).copied().max()?;
    let mut words: Vec<&str> = Vec::new();
    for i in lo..=hi {
        if subj.contains(&i) {
            if i == subj[0] {
                words.push(SUBJ);
            }
        } else if obj.contains(&i) {
            if i == obj[0] {
                words.push(OBJ);
            }
        } else if path.contains(&i) {
            words.push(&parse.tokens[i].text);
        }
    }
    PromptTemplate::new(words.join(" "), Provenance::MinedDependency).ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinedPrompt {
    pub pattern: String,
    pub frequency: usize,
    pub provenance: Provenance,
}

impl MinedPrompt {
    pub fn template(&self) -> PromptTemplate {
        PromptTemplate::new(self.pattern.clone(), self.provenance).expect("mined patterns are validated")
    }
}

/// Count, per template string, the distinct sentences that produce it.
/// Result is sorted by frequency (desc), then pattern.
pub fn count_templates<'a, F>(sentences: &'a [MinedSentence], mut extract: F) -> Vec<MinedPrompt>
where
    F: FnMut(&'a MinedSentence) -> Option<PromptTemplate>,
{
    let mut seen: HashMap<(String, Provenance), HashSet<(&str, &str)>> = HashMap::new();
    for s in sentences {
        if let Some(t) = extract(s) {
            seen.entry((t.pattern().to_string(), t.provenance()))
                .or_default()
                .insert((s.source_doc.as_str(), s.text.as_str()));
        }
    }
    let mut out: Vec<MinedPrompt> = seen
        .into_iter()
        .map(|((pattern, provenance), set)| MinedPrompt {
            pattern,
            frequency: set.len(),
            provenance,
        })
        .collect();
    sort_by_frequency(&mut out);
    out
}

pub fn sort_by_frequency(prompts: &mut [MinedPrompt]) {
    prompts.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.pattern.cmp(&b.pattern)));
}

/// The `n` most frequent prompts, ties broken by pattern text.
pub fn frequency_cut(prompts: &[MinedPrompt], n: usize) -> Vec<MinedPrompt> {
    let mut v = prompts.to_vec();
    sort_by_frequency(&mut v);
    v.truncate(n);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStep {
    pub size: usize,
    pub patterns: Vec<String>,
    pub f1: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDecision {
    pub ensemble: Vec<PromptTemplate>,
    pub f1: f64,
    /// Single-template scores in ranked order.
    pub singles: Vec<(String, f64)>,
    pub steps: Vec<EnsembleStep>,
}

impl EnsembleDecision {
    pub fn size(&self) -> usize {
        self.ensemble.len()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MiningError {
    #[error("no candidate prompts and no manual template")]
    NoCandidates,
    #[error(transparent)]
    Scoring(#[from] CandidateError),
    #[error("mined prompt store {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Greedy ensemble selection over the frequency cut (plus the manual
/// template). Templates are ranked by their own score; the ranked prefix of
/// size k replaces the current best only if it scores at least
/// [`ENSEMBLE_MARGIN`] higher.
pub fn select_ensemble<F>(
    mined: &[MinedPrompt],
    manual: Option<&PromptTemplate>,
    exec: Execution,
    scorer: F,
) -> Result<EnsembleDecision, MiningError>
where
    F: Fn(&[PromptTemplate]) -> Result<f64, CandidateError> + Sync,
{
    let mut pool: Vec<PromptTemplate> = frequency_cut(mined, FREQUENCY_CUT).iter().map(MinedPrompt::template).collect();
    if let Some(m) = manual {
        if !pool.iter().any(|t| t.pattern() == m.pattern()) {
            pool.push(m.clone());
        }
    }
    if pool.is_empty() {
        return Err(MiningError::NoCandidates);
    }
    let singles = par::try_map(exec, &pool, |t| scorer(std::slice::from_ref(t)))?;
    let mut ranked: Vec<(PromptTemplate, f64)> = pool.into_iter().zip(singles).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut best_k = 1;
    let mut best_f1 = ranked[0].1;
    let mut steps = vec![EnsembleStep {
        size: 1,
        patterns: vec![ranked[0].0.pattern().to_string()],
        f1: best_f1,
        accepted: true,
    }];
    for k in 2..=ranked.len() {
        let templates: Vec<PromptTemplate> = ranked[..k].iter().map(|(t, _)| t.clone()).collect();
        let f1 = scorer(&templates)?;
        let accepted = f1 >= best_f1 + ENSEMBLE_MARGIN - MARGIN_EPS;
        if accepted {
            best_k = k;
            best_f1 = f1;
        }
        steps.push(EnsembleStep {
            size: k,
            patterns: templates.iter().map(|t| t.pattern().to_string()).collect(),
            f1,
            accepted,
        });
    }
    Ok(EnsembleDecision {
        ensemble: ranked[..best_k].iter().map(|(t, _)| t.clone()).collect(),
        f1: best_f1,
        singles: ranked.iter().map(|(t, f)| (t.pattern().to_string(), *f)).collect(),
        steps,
    })
}

/// End-to-end score of a template set: generate candidates for `entries`,
/// then take the best macro F1 over the threshold grid.
pub fn template_set_f1(
    templates: &[PromptTemplate],
    entries: &[TripleEntry],
    checkpoint: &CheckpointId,
    lm: &dyn FillMask,
    stoplist: &BTreeSet<String>,
    exec: Execution,
) -> Result<f64, CandidateError> {
    let Some(first) = entries.first() else { return Ok(0.0) };
    let prompts = RelationPrompts {
        templates: templates.to_vec(),
        decomposition: None,
    };
    let sets = generate_all(entries, &prompts, checkpoint, lm, exec)?;
    let gold: Vec<&TripleEntry> = entries.iter().collect();
    let tuning = tuning_entries(&sets, &gold, stoplist)?;
    search_threshold(&tuning, &threshold_grid(), exec)
        .map(|t| t.f1)
        .ok_or_else(|| CandidateError::EmptySplit(first.relation.clone()))
}

/// Per-relation store: `<relation>.jsonl` with mined prompts and
/// `<relation>.ensemble.json` with the selection log.
#[derive(Debug, Clone)]
pub struct MinedStore {
    dir: std::path::PathBuf,
}

impl MinedStore {
    pub fn new(dir: impl Into<std::path::PathBuf>) -> Self {
        MinedStore { dir: dir.into() }
    }

    fn err(path: std::path::PathBuf) -> impl FnOnce(std::io::Error) -> MiningError {
        move |source| MiningError::Io { path, source }
    }

    pub fn write_prompts(&self, relation: &str, prompts: &[MinedPrompt]) -> Result<(), MiningError> {
        let p = self.dir.join(format!("{relation}.jsonl"));
        io::write_jsonl(&p, prompts).map_err(Self::err(p.clone()))
    }

    pub fn read_prompts(&self, relation: &str) -> Result<Vec<MinedPrompt>, MiningError> {
        let p = self.dir.join(format!("{relation}.jsonl"));
        io::read_jsonl(&p).map_err(Self::err(p.clone()))
    }

    pub fn write_decision(&self, relation: &str, d: &EnsembleDecision) -> Result<(), MiningError> {
        let p = self.dir.join(format!("{relation}.ensemble.json"));
        io::write_json(&p, d).map_err(Self::err(p.clone()))
    }

    pub fn read_decision(&self, relation: &str) -> Result<EnsembleDecision, MiningError> {
        let p = self.dir.join(format!("{relation}.ensemble.json"));
        io::read_json(&p).map_err(Self::err(p.clone()))
    }

    /// Ensembles of every relation with a stored decision.
    pub fn ensembles(&self) -> BTreeMap<String, Vec<PromptTemplate>> {
        let Ok(rd) = fs::read_dir(&self.dir) else { return BTreeMap::new() };
        rd.filter_map(Result::ok)
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                let rel = name.strip_suffix(".ensemble.json")?.to_string();
                let d = self.read_decision(&rel).ok()?;
                Some((rel, d.ensemble))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(text: &str) -> Document {
        Document {
            id: "d".into(),
            text: text.into(),
        }
    }

    fn pair(s: &str, o: &str) -> (String, String) {
        (s.into(), o.into())
    }

    fn mined(text: &str, s: &str, o: &str) -> MinedSentence {
        let found = mine_sentences(&[doc(text)], &[pair(s, o)], Segmenter::Lines, Execution::Sequential);
        assert_eq!(found.len(), 1, "{text}");
        found.into_iter().next().unwrap()
    }

    #[test]
    fn mines_lowercase_matches() {
        let m = mined("andalusia borders gibraltar .", "Andalusia", "Gibraltar");
        assert_eq!(m.subject_text(), "andalusia");
        assert_eq!(m.object_text(), "gibraltar");
    }

    #[test]
    fn subject_only_excluded_and_word_boundaries() {
        let p = [pair("Andalusia", "Gibraltar")];
        let found = mine_sentences(&[doc("Andalusia is sunny.")], &p, Segmenter::Unicode, Execution::Sequential);
        assert!(found.is_empty());
        let found = mine_sentences(&[doc("Andalusian Gibraltarians.")], &p, Segmenter::Unicode, Execution::Sequential);
        assert!(found.is_empty());
    }

    #[test]
    fn spans_anchor_at_first_occurrence() {
        let m = mined("Faro and Andalusia ; Andalusia and Faro", "Andalusia", "Faro");
        assert_eq!(m.subject, 9..18);
        assert_eq!(m.object, 0..4);
    }

    #[test]
    fn spans_map_back_through_case_folding() {
        let m = mined("İstanbul borders Kocaeli", "i̇stanbul", "kocaeli");
        assert_eq!(m.subject_text(), "İstanbul");
        assert_eq!(m.object_text(), "Kocaeli");
    }

    #[test]
    fn one_record_per_sentence_and_pair() {
        let docs = [doc("Rhine flows through Germany. Rhine flows through France and Germany.")];
        let pairs = [pair("Rhine", "Germany"), pair("Rhine", "France")];
        let found = mine_sentences(&docs, &pairs, Segmenter::Unicode, Execution::Parallel);
        assert_eq!(found.len(), 3);
    }

    #[test]
    fn middle_word_examples() {
        let m = mined("Andalusia shares a border with Faro", "Andalusia", "Faro");
        assert_eq!(middle_word_template(&m).unwrap().pattern(), "[SUBJ] shares a border with [OBJ]");
        let m = mined("In Faro , near Andalusia there is sun", "Andalusia", "Faro");
        assert_eq!(middle_word_template(&m).unwrap().pattern(), "[OBJ] , near [SUBJ]");
        let m = mined("Andalusia Faro", "Andalusia", "Faro");
        assert!(middle_word_template(&m).is_none());
    }

    fn thames_parse() -> Vec<DepToken> {
        // spaCy-style: det, compound, nsubj, ROOT, prep, pobj, punct
        [("The", Some(2)), ("river", Some(2)), ("Thames", Some(3)), ("flows", None), ("through", Some(3)), ("London", Some(4)), (".", Some(3))]
            .into_iter()
            .map(|(t, h)| DepToken { text: t.into(), head: h })
            .collect()
    }

    #[test]
    fn dependency_path_template() {
        let text = "The river Thames flows through London .";
        let m = mined(text, "Thames", "London");
        let parse = DepParse::align(text, thames_parse()).unwrap();
        assert_eq!(dependency_template(&m, &parse).unwrap().pattern(), "[SUBJ] flows through [OBJ]");
    }

    #[test]
    fn dependency_degenerate_cases() {
        let text = "The river Thames flows through London .";
        let parse = DepParse::align(text, thames_parse()).unwrap();
        let same = MinedSentence {
            text: text.into(),
            subject: 10..13,
            object: 13..16,
            source_doc: "d".into(),
        };
        assert!(dependency_template(&same, &parse).is_none());

        let mut toks = thames_parse();
        toks[4].head = None;
        let split = DepParse::align(text, toks).unwrap();
        let m = mined(text, "Thames", "London");
        assert!(dependency_template(&m, &split).is_none());

        assert!(DepParse::align(text, vec![DepToken { text: "Seine".into(), head: None }]).is_none());
    }

    #[test]
    fn frequency_counts_distinct_sentences() {
        let docs = [doc("A borders B.\nA borders B.\nC borders D.\nA near B.")];
        let pairs = [pair("A", "B"), pair("C", "D")];
        let found = mine_sentences(&docs, &pairs, Segmenter::Lines, Execution::Sequential);
        let counted = count_templates(&found, middle_word_template);
        assert_eq!(counted[0].pattern, "[SUBJ] borders [OBJ]");
        assert_eq!(counted[0].frequency, 2);
        assert_eq!(counted[1].frequency, 1);
    }

    #[test]
    fn frequency_cut_breaks_ties_lexicographically() {
        let prompts: Vec<MinedPrompt> = (0..25)
            .map(|i| MinedPrompt {
                pattern: format!("[SUBJ] w{:02} [OBJ]", 24 - i),
                frequency: if i < 5 { 9 } else { 1 },
                provenance: Provenance::MinedMiddle,
            })
            .collect();
        let cut = frequency_cut(&prompts, 20);
        assert_eq!(cut.len(), 20);
        assert_eq!(cut[0].pattern, "[SUBJ] w20 [OBJ]");
        assert_eq!(cut[19].pattern, "[SUBJ] w14 [OBJ]");
    }

    fn prompt(p: &str, f: usize) -> MinedPrompt {
        MinedPrompt {
            pattern: p.into(),
            frequency: f,
            provenance: Provenance::MinedMiddle,
        }
    }

    fn margin_case(gain: f64) -> usize {
        let mined = [prompt("[SUBJ] a [OBJ]", 5), prompt("[SUBJ] b [OBJ]", 3)];
        let d = select_ensemble(&mined, None, Execution::Sequential, |ts| {
            Ok(match ts.len() {
                1 if ts[0].pattern() == "[SUBJ] a [OBJ]" => 0.5,
                1 => 0.4,
                _ => 0.5 + gain,
            })
        })
        .unwrap();
        d.size()
    }

    #[test]
    fn ensemble_margin() {
        assert_eq!(margin_case(0.005), 1);
        assert_eq!(margin_case(0.009), 1);
        assert_eq!(margin_case(0.011), 2);
        assert_eq!(margin_case(0.01), 2);
    }

    #[test]
    fn ensemble_falls_back_to_manual() {
        let manual = PromptTemplate::manual("[SUBJ] speaks [OBJ].").unwrap();
        let d = select_ensemble(&[], Some(&manual), Execution::Sequential, |_| Ok(0.3)).unwrap();
        assert_eq!(d.ensemble, vec![manual]);
        assert!(matches!(
            select_ensemble(&[], None, Execution::Sequential, |_| Ok(0.0)),
            Err(MiningError::NoCandidates)
        ));
    }

    #[test]
    fn store_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let store = MinedStore::new(tmp.path());
        let prompts = vec![prompt("[SUBJ] a [OBJ]", 2)];
        store.write_prompts("PersonLanguage", &prompts).unwrap();
        assert_eq!(store.read_prompts("PersonLanguage").unwrap(), prompts);
        let d = select_ensemble(&prompts, None, Execution::Sequential, |_| Ok(0.1)).unwrap();
        store.write_decision("PersonLanguage", &d).unwrap();
        assert_eq!(store.ensembles()["PersonLanguage"], d.ensemble);
    }

    proptest! {
        #[test]
        fn greedy_never_below_best_single(scores in prop::collection::vec(0u32..100, 1..8), combo in 0u32..100) {
            let mined: Vec<MinedPrompt> = (0..scores.len()).map(|i| prompt(&format!("[SUBJ] x{i} [OBJ]"), 1)).collect();
            let lookup: HashMap<String, f64> = mined.iter().zip(&scores).map(|(m, s)| (m.pattern.clone(), *s as f64 / 100.0)).collect();
            let d = select_ensemble(&mined, None, Execution::Sequential, |ts| {
                Ok(if ts.len() == 1 { lookup[ts[0].pattern()] } else { combo as f64 / 100.0 + ts.len() as f64 * 0.001 })
            }).unwrap();
            let best_single = scores.iter().copied().max().unwrap() as f64 / 100.0;
            prop_assert!(d.f1 >= best_single);
            for t in &d.ensemble {
                prop_assert_eq!(t.pattern().matches("[SUBJ]").count(), 1);
            }
        }

        #[test]
        fn mined_spans_match_entities(pre in "[a-z ]{0,8}", mid in "[a-z ]{1,8}", post in "[a-z ]{0,8}") {
            let text = format!("{pre} Alpha {mid} Beta {post}");
            let found = mine_sentences(&[doc(&text)], &[pair("alpha", "beta")], Segmenter::Lines, Execution::Sequential);
            for m in &found {
                prop_assert_eq!(m.subject_text().to_lowercase(), "alpha");
                prop_assert_eq!(m.object_text().to_lowercase(), "beta");
                prop_assert!(m.subject.end <= m.object.start || m.object.end <= m.subject.start);
            }
        }
    }
}
