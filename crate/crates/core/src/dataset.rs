//! Challenge data ingestion and the deterministic train2/dev2 split.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::relation::{Relation, RelationInventory};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: unknown relation `{relation}`")]
    UnknownRelation {
        path: PathBuf,
        line: usize,
        relation: String,
    },
    #[error("{path}:{line}: empty subject")]
    EmptySubject { path: PathBuf, line: usize },
    #[error("cannot split an empty training set")]
    EmptyTrain,
    #[error("unknown split name `{0}` (expected train, dev, test, train2 or dev2)")]
    UnknownSplit(String),
}

/// One subject–relation record with its gold object alias-sets.
///
/// `gold_objects` is empty both for a legitimately empty answer and for
/// test-set entries; `gold_present` tells the two apart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleEntry {
    pub subject: String,
    pub relation: Relation,
    pub gold_objects: Vec<Vec<String>>,
    pub gold_present: bool,
}

impl TripleEntry {
    pub fn new(subject: impl Into<String>, relation: impl Into<Relation>, gold: Vec<Vec<String>>) -> Self {
        TripleEntry {
            subject: subject.into(),
            relation: relation.into(),
            gold_objects: gold,
            gold_present: true,
        }
    }

    /// Convenience constructor where every gold object has a single alias.
    pub fn with_objects<S: AsRef<str>>(subject: &str, relation: &str, objects: &[S]) -> Self {
        Self::new(
            subject,
            relation,
            objects.iter().map(|o| vec![o.as_ref().to_string()]).collect(),
        )
    }

    pub fn key(&self) -> EntryKey {
        EntryKey {
            subject: self.subject.clone(),
            relation: self.relation.clone(),
        }
    }
}

/// Subject–relation key identifying an entry across files.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntryKey {
    pub subject: String,
    pub relation: Relation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
    Train2,
    Dev2,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
            SplitName::Train2 => "train2",
            SplitName::Dev2 => "dev2",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "train" => SplitName::Train,
            "dev" => SplitName::Dev,
            "test" => SplitName::Test,
            "train2" => SplitName::Train2,
            "dev2" => SplitName::Dev2,
            other => return Err(DatasetError::UnknownSplit(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub entries: Vec<TripleEntry>,
}

impl DatasetSplit {
    pub fn new(name: SplitName, entries: Vec<TripleEntry>) -> Self {
        DatasetSplit { name, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Relations in order of first appearance.
    pub fn relations(&self) -> Vec<Relation> {
        let mut seen = Vec::new();
        for e in &self.entries {
            if !seen.contains(&e.relation) {
                seen.push(e.relation.clone());
            }
        }
        seen
    }

    pub fn of_relation<'a>(&'a self, relation: &'a Relation) -> impl Iterator<Item = &'a TripleEntry> + 'a {
        self.entries.iter().filter(move |e| &e.relation == relation)
    }

    /// Keys that occur more than once, in order of their second occurrence.
    pub fn duplicate_keys(&self) -> Vec<EntryKey> {
        let mut counts: HashMap<EntryKey, usize> = HashMap::new();
        let mut dups = Vec::new();
        for e in &self.entries {
            let c = counts.entry(e.key()).or_default();
            *c += 1;
            if *c == 2 {
                dups.push(e.key());
            }
        }
        dups
    }

    pub fn subjects(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.subject.as_str())
    }
}

/// Object field as it appears on disk: a bare string or an alias list.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ObjectField {
    Single(String),
    Aliases(Vec<String>),
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(alias = "SubjectEntity", alias = "subject_entity")]
    subject: String,
    #[serde(alias = "Relation")]
    relation: String,
    #[serde(default, alias = "ObjectEntities", alias = "object_entities")]
    objects: Option<Vec<ObjectField>>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    #[serde(rename = "SubjectEntity")]
    subject: &'a str,
    #[serde(rename = "Relation")]
    relation: &'a str,
    #[serde(rename = "ObjectEntities", skip_serializing_if = "Option::is_none")]
    objects: Option<&'a [Vec<String>]>,
}

fn normalize_objects(raw: Vec<ObjectField>) -> Vec<Vec<String>> {
    raw.into_iter()
        .map(|o| match o {
            ObjectField::Single(s) => vec![s],
            ObjectField::Aliases(v) => v,
        })
        .map(|set| set.into_iter().filter(|a| !a.trim().is_empty()).collect::<Vec<_>>())
        .filter(|set| !set.is_empty())
        .collect()
}

/// Parse challenge-format JSON-lines text. `origin` only labels errors.
pub fn parse_entries(
    text: &str,
    origin: &Path,
    name: SplitName,
    expect_gold: bool,
    inventory: &RelationInventory,
) -> Result<DatasetSplit, DatasetError> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if rec.subject.trim().is_empty() {
            return Err(DatasetError::EmptySubject {
                path: origin.to_path_buf(),
                line: line_no,
            });
        }
        if !inventory.contains(&rec.relation) {
            return Err(DatasetError::UnknownRelation {
                path: origin.to_path_buf(),
                line: line_no,
                relation: rec.relation,
            });
        }
        let (gold_objects, gold_present) = if expect_gold {
            match rec.objects {
                Some(objs) => (normalize_objects(objs), true),
                None => {
                    return Err(DatasetError::Parse {
                        path: origin.to_path_buf(),
                        line: line_no,
                        message: "missing object entities".into(),
                    })
                }
            }
        } else {
            (Vec::new(), false)
        };
        entries.push(TripleEntry {
            subject: rec.subject,
            relation: Relation::new(rec.relation),
            gold_objects,
            gold_present,
        });
    }
    let split = DatasetSplit::new(name, entries);
    for key in split.duplicate_keys() {
        log::warn!(
            "{}: duplicate entry ({}, {}) kept",
            origin.display(),
            key.subject,
            key.relation
        );
    }
    Ok(split)
}

/// Load a challenge JSON-lines file. With `expect_gold == false` (test-set
/// mode) object fields are ignored and every entry is flagged gold-absent.
pub fn load_entries(
    path: &Path,
    name: SplitName,
    expect_gold: bool,
    inventory: &RelationInventory,
) -> Result<DatasetSplit, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_entries(&text, path, name, expect_gold, inventory)
}

/// Render entries in the challenge format, one JSON object per line.
pub fn to_jsonl(split: &DatasetSplit) -> String {
    let mut out = String::new();
    for e in &split.entries {
        let rec = OutRecord {
            subject: &e.subject,
            relation: e.relation.as_str(),
            objects: e.gold_present.then_some(e.gold_objects.as_slice()),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Result of [`split_train`].
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub train2: DatasetSplit,
    pub dev2: DatasetSplit,
    /// Relations with fewer than [`MIN_SPLIT_SIZE`] entries; all of their
    /// entries went to train2.
    pub undersized: Vec<Relation>,
}

pub const MIN_SPLIT_SIZE: usize = 5;

/// Number of dev2 entries for a relation with `n` training entries:
/// round(0.2 n), or zero below [`MIN_SPLIT_SIZE`].
pub fn dev2_size(n: usize) -> usize {
    if n < MIN_SPLIT_SIZE {
        0
    } else {
        (2 * n + 5) / 10
    }
}

/// Seeded, per-relation stratified 80/20 split. Each output keeps the input
/// file order.
pub fn split_train(train: &DatasetSplit, seed: u64) -> Result<SplitOutcome, DatasetError> {
    if train.is_empty() {
        return Err(DatasetError::EmptyTrain);
    }
    let mut by_relation: BTreeMap<&Relation, Vec<usize>> = BTreeMap::new();
    for (i, e) in train.entries.iter().enumerate() {
        by_relation.entry(&e.relation).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut to_dev = vec![false; train.len()];
    let mut undersized = Vec::new();
    for (relation, mut idxs) in by_relation {
        let n_dev = dev2_size(idxs.len());
        if idxs.len() < MIN_SPLIT_SIZE {
            log::warn!(
                "relation {relation} has only {} entries; all kept in train2",
                idxs.len()
            );
            undersized.push(relation.clone());
            continue;
        }
        idxs.shuffle(&mut rng);
        for &i in &idxs[..n_dev] {
            to_dev[i] = true;
        }
    }

    let (mut t2, mut d2) = (Vec::new(), Vec::new());
    for (i, e) in train.entries.iter().enumerate() {
        if to_dev[i] {
            d2.push(e.clone());
        } else {
            t2.push(e.clone());
        }
    }
    Ok(SplitOutcome {
        train2: DatasetSplit::new(SplitName::Train2, t2),
        dev2: DatasetSplit::new(SplitName::Dev2, d2),
        undersized,
    })
}
