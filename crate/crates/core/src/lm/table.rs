//! Replays canned fill-mask distributions; used for fixtures and tests.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CheckpointId, FillMask, LmError, MaskQuery, ScoredToken, DEFAULT_MASK_TOKEN};

/// Canned responses keyed by exact query text. Lookups try the
/// checkpoint-specific table first, then `default`. A query with no entry
/// returns an empty distribution.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TableLm {
    mask_token: Option<String>,
    default: HashMap<String, Vec<ScoredToken>>,
    checkpoints: HashMap<CheckpointId, HashMap<String, Vec<ScoredToken>>>,
}

impl TableLm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_json_file(path: &Path) -> Result<Self, LmError> {
        crate::io::read_json(path).map_err(|source| LmError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Register a response for every checkpoint. Scores are sorted
    /// descending on insertion.
    pub fn insert(&mut self, text: impl Into<String>, dist: Vec<ScoredToken>) -> &mut Self {
        self.default.insert(text.into(), sorted(dist));
        self
    }

    pub fn insert_for(&mut self, checkpoint: &CheckpointId, text: impl Into<String>, dist: Vec<ScoredToken>) -> &mut Self {
        self.checkpoints
            .entry(checkpoint.clone())
            .or_default()
            .insert(text.into(), sorted(dist));
        self
    }
}

fn sorted(mut dist: Vec<ScoredToken>) -> Vec<ScoredToken> {
    dist.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.token.cmp(&b.token)));
    dist
}

impl FillMask for TableLm {
    fn mask_token(&self) -> &str {
        self.mask_token.as_deref().unwrap_or(DEFAULT_MASK_TOKEN)
    }

    fn fill_mask(&self, checkpoint: &CheckpointId, query: &MaskQuery) -> Result<Vec<ScoredToken>, LmError> {
        let hit = self
            .checkpoints
            .get(checkpoint)
            .and_then(|t| t.get(query.text()))
            .or_else(|| self.default.get(query.text()));
        let mut dist = match hit {
            Some(d) => sorted(d.clone()),
            None => Vec::new(),
        };
        dist.truncate(query.top_k());
        Ok(dist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_specific_overrides_default() {
        let mut lm = TableLm::new();
        lm.insert("x [MASK]", vec![ScoredToken::new("a", 0.2), ScoredToken::new("b", 0.7)]);
        lm.insert_for(&"ft".into(), "x [MASK]", vec![ScoredToken::new("c", 1.0)]);
        let raw = lm.query(&CheckpointId::raw(), "x [MASK]", 10).unwrap();
        assert_eq!(raw[0].token, "b");
        assert_eq!(lm.query(&"ft".into(), "x [MASK]", 10).unwrap()[0].token, "c");
        assert!(lm.query(&CheckpointId::raw(), "y [MASK]", 10).unwrap().is_empty());
        assert_eq!(lm.query(&CheckpointId::raw(), "x [MASK]", 1).unwrap().len(), 1);
    }

    #[test]
    fn parses_json_fixture() {
        let lm: TableLm = serde_json::from_str(
            r#"{"default":{"a [MASK]":[{"token":"z","score":0.5}]},"checkpoints":{"ft":{}}}"#,
        )
        .unwrap();
        assert_eq!(lm.query(&"ft".into(), "a [MASK]", 5).unwrap().len(), 1);
    }
}
