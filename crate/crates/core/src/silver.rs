//! Silver subject–object pairs harvested from a SPARQL endpoint.
//!
//! Pairs whose subject appears anywhere in the challenge data (any split,
//! compared case-insensitively) are dropped before use, so a fine-tuned
//! model never sees a challenge subject through the silver data.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::TripleEntry;
use crate::io;
use crate::relation::Relation;

pub const WIKIDATA_ENDPOINT: &str = "https://query.wikidata.org/sparql";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
const USER_AGENT: &str = concat!("kbpop/", env!("CARGO_PKG_VERSION"), " (knowledge-graph population research tool)");

#[derive(Debug, thiserror::Error)]
pub enum SilverError {
    #[error("SPARQL endpoint failure: {message} ({advice})")]
    Transport { message: String, advice: &'static str },
    #[error("malformed query: {0}")]
    Query(String),
    #[error("unexpected endpoint response: {0}")]
    Response(String),
    #[error("silver cache at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SilverPair {
    pub subject: String,
    pub object: String,
    pub relation: Relation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HarvestStatus {
    Ok,
    Timeout,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestReport {
    pub relation: Relation,
    pub raw_count: usize,
    pub excluded_count: usize,
    pub kept_count: usize,
    pub status: HarvestStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_hash: Option<String>,
}

impl HarvestReport {
    pub fn empty(relation: Relation, status: HarvestStatus) -> Self {
        HarvestReport {
            relation,
            raw_count: 0,
            excluded_count: 0,
            kept_count: 0,
            status,
            query_hash: None,
        }
    }
}

/// Result of one endpoint call. A timeout never carries partial results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchOutcome {
    Pairs(Vec<SilverPair>),
    TimedOut,
}

pub const SUBJECT_VAR: &str = "subjectLabel";
pub const OBJECT_VAR: &str = "objectLabel";

pub fn query_hash(query: &str) -> String {
    hex::encode(Sha256::digest(query.as_bytes()))
}

fn is_bare_qid(label: &str) -> bool {
    label.len() > 1 && label.starts_with('Q') && label[1..].chars().all(|c| c.is_ascii_digit())
}

/// Parse SPARQL JSON results into pairs. Bindings missing either label, or
/// whose label is a bare Q-id (no English label), are skipped.
pub fn parse_bindings(relation: &Relation, body: &str) -> Result<Vec<SilverPair>, SilverError> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| SilverError::Response(e.to_string()))?;
    let bindings = v
        .pointer("/results/bindings")
        .and_then(|b| b.as_array())
        .ok_or_else(|| SilverError::Response("no results.bindings array".into()))?;
    let label = |b: &serde_json::Value, var: &str| {
        b.get(var)
            .and_then(|x| x.get("value"))
            .and_then(|x| x.as_str())
            .map(str::trim)
            .filter(|s| !s.is_empty() && !is_bare_qid(s))
            .map(String::from)
    };
    Ok(bindings
        .iter()
        .filter_map(|b| {
            Some(SilverPair {
                subject: label(b, SUBJECT_VAR)?,
                object: label(b, OBJECT_VAR)?,
                relation: relation.clone(),
            })
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct SparqlClient {
    endpoint: String,
    timeout: Duration,
}

impl SparqlClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        SparqlClient {
            endpoint: endpoint.into(),
            timeout,
        }
    }

    pub fn wikidata() -> Self {
        Self::new(WIKIDATA_ENDPOINT, DEFAULT_TIMEOUT)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Run `query` and return its subject/object label pairs.
    pub fn fetch_pairs(&self, relation: &Relation, query: &str) -> Result<FetchOutcome, SilverError> {
        for var in [SUBJECT_VAR, OBJECT_VAR] {
            if !query.contains(&format!("?{var}")) {
                return Err(SilverError::Query(format!("query must select ?{var}")));
            }
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .user_agent(USER_AGENT)
            .build()
            .map_err(|e| SilverError::Transport {
                message: e.to_string(),
                advice: "check the TLS/proxy configuration",
            })?;
        let resp = client
            .get(&self.endpoint)
            .query(&[("query", query), ("format", "json")])
            .header("Accept", "application/sparql-results+json")
            .send();
        let resp = match resp {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Ok(FetchOutcome::TimedOut),
            Err(e) => {
                return Err(SilverError::Transport {
                    message: e.to_string(),
                    advice: "check connectivity and retry, or rerun with the cache in offline mode",
                })
            }
        };
        let status = resp.status();
        let body = match resp.text() {
            Ok(b) => b,
            Err(e) if e.is_timeout() => return Ok(FetchOutcome::TimedOut),
            Err(e) => {
                return Err(SilverError::Transport {
                    message: e.to_string(),
                    advice: "retry; the response was cut off",
                })
            }
        };
        if status.is_success() {
            return parse_bindings(relation, &body).map(FetchOutcome::Pairs);
        }
        // The query service reports its own execution limit as a 500 with a
        // Java timeout exception in the body.
        if body.contains("TimeoutException") {
            return Ok(FetchOutcome::TimedOut);
        }
        match status.as_u16() {
            400 => Err(SilverError::Query(body.lines().take(3).collect::<Vec<_>>().join(" "))),
            429 => Err(SilverError::Transport {
                message: format!("HTTP {status}"),
                advice: "rate limited; wait before retrying",
            }),
            _ => Err(SilverError::Transport {
                message: format!("HTTP {status}"),
                advice: "retry later",
            }),
        }
    }
}

fn subject_key(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Drop every pair whose subject matches a challenge subject,
/// case-insensitively. Order is preserved.
pub fn exclude_challenge_subjects<'a, I>(
    relation: &Relation,
    pairs: Vec<SilverPair>,
    challenge_subjects: I,
) -> (Vec<SilverPair>, HarvestReport)
where
    I: IntoIterator<Item = &'a str>,
{
    let banned: HashSet<String> = challenge_subjects.into_iter().map(subject_key).collect();
    let raw_count = pairs.len();
    let kept: Vec<SilverPair> = pairs
        .into_iter()
        .filter(|p| !banned.contains(&subject_key(&p.subject)))
        .collect();
    let report = HarvestReport {
        relation: relation.clone(),
        raw_count,
        excluded_count: raw_count - kept.len(),
        kept_count: kept.len(),
        status: HarvestStatus::Ok,
        query_hash: None,
    };
    (kept, report)
}

/// Group pairs into entries, one per (subject, relation) in first-seen
/// order, each object a single-alias gold set.
pub fn silver_entries(pairs: &[SilverPair]) -> Vec<TripleEntry> {
    let mut order: Vec<(String, Relation)> = Vec::new();
    let mut objects: BTreeMap<(String, Relation), Vec<Vec<String>>> = BTreeMap::new();
    for p in pairs {
        let key = (p.subject.clone(), p.relation.clone());
        let slot = objects.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        if !slot.iter().any(|s| s[0] == p.object) {
            slot.push(vec![p.object.clone()]);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let gold = objects.remove(&key).unwrap_or_default();
            TripleEntry::new(key.0, key.1, gold)
        })
        .collect()
}

/// Per-relation cache: `<relation>.jsonl` with the kept pairs and a
/// `<relation>.report.json` sidecar.
#[derive(Debug, Clone)]
pub struct SilverCache {
    dir: PathBuf,
}

impl SilverCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        SilverCache { dir: dir.into() }
    }

    pub fn pairs_path(&self, relation: &Relation) -> PathBuf {
        self.dir.join(format!("{relation}.jsonl"))
    }

    pub fn report_path(&self, relation: &Relation) -> PathBuf {
        self.dir.join(format!("{relation}.report.json"))
    }

    fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SilverError + '_ {
        move |source| SilverError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn read_report(&self, relation: &Relation) -> Option<HarvestReport> {
        io::read_json(&self.report_path(relation)).ok()
    }

    /// Cached pairs, if a report exists and (when given) was produced by the
    /// same query.
    pub fn load(&self, relation: &Relation, query_hash: Option<&str>) -> Result<Option<(Vec<SilverPair>, HarvestReport)>, SilverError> {
        let Some(report) = self.read_report(relation) else {
            return Ok(None);
        };
        if let Some(h) = query_hash {
            if report.query_hash.as_deref() != Some(h) {
                return Ok(None);
            }
        }
        let path = self.pairs_path(relation);
        let pairs = if report.status == HarvestStatus::Ok {
            io::read_jsonl(&path).map_err(Self::io_err(&path))?
        } else {
            Vec::new()
        };
        Ok(Some((pairs, report)))
    }

    /// Write the pairs first, then the report, each atomically; a reader
    /// that sees the report sees the matching pairs.
    pub fn store(&self, pairs: &[SilverPair], report: &HarvestReport) -> Result<(), SilverError> {
        let pp = self.pairs_path(&report.relation);
        io::write_jsonl(&pp, pairs).map_err(Self::io_err(&pp))?;
        let rp = self.report_path(&report.relation);
        io::write_json(&rp, report).map_err(Self::io_err(&rp))
    }

    /// All cached pairs for relations with an `ok` report.
    pub fn load_all(&self, relations: impl IntoIterator<Item = Relation>) -> Result<BTreeMap<Relation, Vec<SilverPair>>, SilverError> {
        let mut out = BTreeMap::new();
        for rel in relations {
            if let Some((pairs, report)) = self.load(&rel, None)? {
                if report.status == HarvestStatus::Ok {
                    out.insert(rel, pairs);
                }
            }
        }
        Ok(out)
    }
}

/// Fetch (or reuse from cache), exclude challenge subjects, and cache.
/// In offline mode a missing cache yields a `skipped` report.
pub fn harvest<'a, I>(
    relation: &Relation,
    query: &str,
    client: &SparqlClient,
    cache: &SilverCache,
    challenge_subjects: I,
    offline: bool,
) -> Result<(Vec<SilverPair>, HarvestReport), SilverError>
where
    I: IntoIterator<Item = &'a str>,
{
    let hash = query_hash(query);
    if let Some(hit) = cache.load(relation, Some(&hash))? {
        log::info!("{relation}: using cached harvest ({:?})", hit.1.status);
        return Ok(hit);
    }
    if offline {
        log::warn!("{relation}: offline and no cached harvest; skipped");
        return Ok((Vec::new(), HarvestReport::empty(relation.clone(), HarvestStatus::Skipped)));
    }
    let (kept, mut report) = match client.fetch_pairs(relation, query)? {
        FetchOutcome::Pairs(pairs) => exclude_challenge_subjects(relation, pairs, challenge_subjects),
        FetchOutcome::TimedOut => {
            log::warn!("{relation}: query exceeded the time limit");
            (Vec::new(), HarvestReport::empty(relation.clone(), HarvestStatus::Timeout))
        }
    };
    report.query_hash = Some(hash);
    cache.store(&kept, &report)?;
    Ok((kept, report))
}

fn labelled_query(pattern: &str) -> String {
    format!(
        "SELECT DISTINCT ?{SUBJECT_VAR} ?{OBJECT_VAR} WHERE {{\n  {pattern}\n  \
         ?subject rdfs:label ?{SUBJECT_VAR} . FILTER(LANG(?{SUBJECT_VAR}) = \"en\")\n  \
         ?object rdfs:label ?{OBJECT_VAR} . FILTER(LANG(?{OBJECT_VAR}) = \"en\")\n}}"
    )
}

/// Wikidata property paths for the relations silver data is gathered for.
pub fn default_queries() -> BTreeMap<Relation, String> {
    [
        ("ChemicalCompoundElement", "?subject wdt:P31 wd:Q11173 ; wdt:P527 ?object ."),
        ("PersonEmployer", "?subject wdt:P31 wd:Q5 ; wdt:P108 ?object ."),
        ("PersonInstrument", "?subject wdt:P31 wd:Q5 ; wdt:P1303 ?object ."),
        ("PersonLanguage", "?subject wdt:P31 wd:Q5 ; wdt:P1412 ?object ."),
        ("PersonProfession", "?subject wdt:P31 wd:Q5 ; wdt:P106 ?object ."),
        ("RiverBasinsCountry", "?subject wdt:P31 wd:Q4022 ; wdt:P205 ?object ."),
        (
            "StateSharesBorderState",
            "?subject wdt:P31/wdt:P279* wd:Q10864048 ; wdt:P47 ?object . ?object wdt:P31/wdt:P279* wd:Q10864048 .",
        ),
    ]
    .into_iter()
    .map(|(r, p)| (Relation::new(r), labelled_query(p)))
    .collect()
}
