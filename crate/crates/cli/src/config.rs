//! Run configuration: one TOML file, optionally patched by `--set` flags.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use kbpop_core::candidates::{SelectionConfig, DEFAULT_STOPLIST};
use kbpop_core::lm::{CheckpointId, TrainConfig};
use kbpop_core::mining::Segmenter;
use kbpop_core::pretraining::{default_family_plan, PlanRow};
use kbpop_core::prompts::{self, DecompositionRule, PromptTemplate, RelationPrompts};
use kbpop_core::silver;
use kbpop_core::{Execution, Relation, RelationInventory};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Challenge baseline prompts, t = 0.5, no fine-tuning.
    Baseline,
    /// Revised prompts, decomposition, tuned thresholds and the checkpoint family.
    #[default]
    Curated,
    /// As `curated`, plus the tuned sticky ratios.
    CuratedSticky,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Trainable reference model stored under the work directory.
    #[default]
    Tiny,
    /// Canned distributions from a JSON file.
    Table,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train: PathBuf,
    pub dev: PathBuf,
    #[serde(default)]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub backend: Backend,
    pub base: CheckpointId,
    pub table: Option<PathBuf>,
    pub dim: usize,
    pub checkpoints: Option<PathBuf>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backend: Backend::Tiny,
            base: CheckpointId::raw(),
            table: None,
            dim: 32,
            checkpoints: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestConfig {
    pub endpoint: String,
    pub timeout_secs: u64,
    pub offline: bool,
    pub relations: Option<Vec<Relation>>,
    pub queries: BTreeMap<Relation, String>,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        HarvestConfig {
            endpoint: silver::WIKIDATA_ENDPOINT.to_string(),
            timeout_secs: silver::DEFAULT_TIMEOUT.as_secs(),
            offline: false,
            relations: None,
            queries: BTreeMap::new(),
        }
    }
}

impl HarvestConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn queries(&self) -> BTreeMap<Relation, String> {
        let mut q = silver::default_queries();
        q.extend(self.queries.clone());
        if let Some(keep) = &self.relations {
            q.retain(|r, _| keep.contains(r));
        }
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiningStyle {
    #[default]
    Middle,
    Dependency,
    Both,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningConfig {
    pub corpus: Option<PathBuf>,
    pub segmenter: Segmenter,
    pub style: MiningStyle,
    /// JSON-lines dependency parses: `{"text": .., "tokens": [{"text": .., "head": ..}]}`.
    pub parses: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PlanSpec {
    Named(String),
    Rows(Vec<PlanRow>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub plan: Option<PlanSpec>,
    pub gold: TrainConfig,
    pub silver: TrainConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            plan: None,
            gold: TrainConfig::gold_only(),
            silver: TrainConfig::with_silver(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub sticky: bool,
    pub split: Option<String>,
    pub thresholds: Option<Vec<f64>>,
    pub ratios: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelationOverride {
    pub templates: Option<Vec<PromptTemplate>>,
    pub decomposition: Option<DecompositionRule>,
    pub no_decomposition: bool,
    pub threshold: Option<f64>,
    pub sticky_ratio: Option<f64>,
    pub null_strategy: Option<bool>,
    pub checkpoint: Option<CheckpointId>,
}

fn default_seed() -> u64 {
    42
}

fn default_work_dir() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub preset: Preset,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_work_dir")]
    pub work_dir: PathBuf,
    #[serde(default)]
    pub sequential: bool,
    pub data: DataPaths,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub harvest: HarvestConfig,
    #[serde(default)]
    pub mining: MiningConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub tuning: TuningConfig,
    #[serde(default)]
    pub stoplist: Option<Vec<String>>,
    #[serde(default)]
    pub relations: BTreeMap<Relation, RelationOverride>,
}

/// Parse `value` as a TOML value, falling back to a plain string.
fn parse_override_value(value: &str) -> toml::Value {
    let doc = format!("v = {value}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(value.into())),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

/// Apply `dotted.key=value` to a TOML table, creating tables as needed.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("override {spec:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::usage(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let next = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = next
            .as_table_mut()
            .ok_or_else(|| CliError::usage(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_override_value(value.trim()));
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::usage(format!("invalid config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from disk; relative paths resolve against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.work_dir);
        fix(&mut self.data.train);
        fix(&mut self.data.dev);
        for p in [
            self.data.test.as_mut(),
            self.model.table.as_mut(),
            self.model.checkpoints.as_mut(),
            self.mining.corpus.as_mut(),
            self.mining.parses.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let inventory = RelationInventory::challenge();
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(CliError::usage(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        for (rel, o) in &self.relations {
            if !inventory.contains(rel.as_str()) {
                return Err(CliError::usage(format!("unknown relation {rel} in [relations]")));
            }
            if let Some(t) = o.threshold {
                unit(&format!("{rel}.threshold"), t)?;
            }
            if let Some(r) = o.sticky_ratio {
                if !(r > 0.0 && r <= 1.0) {
                    return Err(CliError::usage(format!("{rel}.sticky_ratio = {r} is outside (0, 1]")));
                }
            }
            if let Some(rule) = &o.decomposition {
                rule.validate().map_err(|e| CliError::usage(format!("{rel}: {e}")))?;
            }
        }
        for t in self.tuning.thresholds.iter().flatten() {
            unit("tuning.thresholds", *t)?;
        }
        for r in self.tuning.ratios.iter().flatten() {
            unit("tuning.ratios", *r)?;
        }
        if self.model.backend == Backend::Table && self.model.table.is_none() {
            return Err(CliError::usage("model.backend = \"table\" needs model.table"));
        }
        if let Some(PlanSpec::Named(n)) = &self.training.plan {
            if n != "default" && n != "none" {
                return Err(CliError::usage(format!("training.plan must be \"default\", \"none\" or a list of rows, not {n:?}")));
            }
        }
        Ok(())
    }

    pub fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    pub fn stoplist(&self) -> BTreeSet<String> {
        match &self.stoplist {
            Some(words) => words.iter().map(|w| w.trim().to_lowercase()).collect(),
            None => DEFAULT_STOPLIST.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn plan(&self) -> Vec<PlanRow> {
        match (&self.training.plan, self.preset) {
            (Some(PlanSpec::Rows(rows)), _) => rows.clone(),
            (Some(PlanSpec::Named(n)), _) if n == "none" => Vec::new(),
            (Some(PlanSpec::Named(_)), _) => default_family_plan(),
            (None, Preset::Baseline) => Vec::new(),
            (None, _) => default_family_plan(),
        }
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.model
            .checkpoints
            .clone()
            .unwrap_or_else(|| self.work_dir.join("checkpoints"))
    }

    pub fn threshold_grid(&self) -> Vec<f64> {
        self.tuning
            .thresholds
            .clone()
            .unwrap_or_else(kbpop_core::candidates::threshold_grid)
    }

    pub fn ratio_grid(&self) -> Vec<f64> {
        self.tuning.ratios.clone().unwrap_or_else(kbpop_core::candidates::ratio_grid)
    }
}

/// Thresholds tuned for the revised system; `None` marks relations where
/// predicting nothing won.
pub fn curated_thresholds() -> BTreeMap<Relation, Option<f64>> {
    [
        ("ChemicalCompoundElement", Some(0.06)),
        ("CompanyParentOrganization", None),
        ("CountryBordersWithCountry", Some(0.05)),
        ("CountryOfficialLanguage", Some(0.32)),
        ("PersonCauseOfDeath", None),
        ("PersonEmployer", Some(0.03)),
        ("PersonInstrument", Some(0.42)),
        ("PersonLanguage", Some(0.15)),
        ("PersonPlaceOfDeath", None),
        ("PersonProfession", Some(0.04)),
        ("RiverBasinsCountry", Some(0.05)),
        ("StateSharesBorderState", Some(0.05)),
    ]
    .into_iter()
    .map(|(r, t)| (Relation::new(r), t))
    .collect()
}

pub fn curated_sticky_ratios() -> BTreeMap<Relation, Option<f64>> {
    [
        ("ChemicalCompoundElement", None),
        ("CompanyParentOrganization", None),
        ("CountryBordersWithCountry", Some(0.4)),
        ("CountryOfficialLanguage", Some(0.91)),
        ("PersonCauseOfDeath", None),
        ("PersonEmployer", Some(0.76)),
        ("PersonInstrument", Some(0.43)),
        ("PersonLanguage", None),
        ("PersonPlaceOfDeath", None),
        ("PersonProfession", Some(0.49)),
        ("RiverBasinsCountry", Some(0.85)),
        ("StateSharesBorderState", Some(0.64)),
    ]
    .into_iter()
    .map(|(r, t)| (Relation::new(r), t))
    .collect()
}

pub const BASELINE_THRESHOLD: f64 = 0.5;

/// Everything needed to predict one relation.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationConfig {
    pub prompts: RelationPrompts,
    pub selection: SelectionConfig,
    pub checkpoint: Option<CheckpointId>,
}

/// Extra layers applied between the preset and explicit config overrides.
#[derive(Debug, Default)]
pub struct Layers<'a> {
    pub tuned: Option<&'a BTreeMap<Relation, SelectionConfig>>,
    pub mined: Option<&'a BTreeMap<String, Vec<PromptTemplate>>>,
}

impl RunConfig {
    /// Per-relation configuration for every challenge relation: preset,
    /// then mined ensembles and tuned selection, then `[relations]` entries.
    pub fn relation_configs(&self, layers: &Layers<'_>) -> BTreeMap<Relation, RelationConfig> {
        let stoplist = self.stoplist();
        let registry = match self.preset {
            Preset::Baseline => prompts::baseline_registry(),
            _ => prompts::default_registry(),
        };
        let thresholds = curated_thresholds();
        let ratios = curated_sticky_ratios();
        let mut out = BTreeMap::new();
        for rel in RelationInventory::challenge().iter() {
            let mut prompts = registry.get(rel).cloned().unwrap_or(RelationPrompts {
                templates: Vec::new(),
                decomposition: None,
            });
            let mut selection = SelectionConfig {
                threshold: BASELINE_THRESHOLD,
                sticky_ratio: None,
                null_strategy: false,
                stoplist: stoplist.clone(),
            };
            if self.preset != Preset::Baseline {
                match thresholds.get(rel).copied().flatten() {
                    Some(t) => selection.threshold = t,
                    None => selection.null_strategy = true,
                }
                if self.preset == Preset::CuratedSticky {
                    selection.sticky_ratio = ratios.get(rel).copied().flatten();
                }
                if let Some(m) = layers.mined.and_then(|m| m.get(rel.as_str())) {
                    if !m.is_empty() {
                        prompts.templates = m.clone();
                    }
                }
            }
            if let Some(t) = layers.tuned.and_then(|t| t.get(rel)) {
                selection = SelectionConfig {
                    stoplist: stoplist.clone(),
                    ..t.clone()
                };
            }
            let mut checkpoint = None;
            if let Some(o) = self.relations.get(rel) {
                if let Some(t) = &o.templates {
                    prompts.templates = t.clone();
                }
                if o.no_decomposition {
                    prompts.decomposition = None;
                }
                if let Some(d) = &o.decomposition {
                    prompts.decomposition = Some(d.clone());
                }
                if let Some(t) = o.threshold {
                    selection.threshold = t;
                    selection.null_strategy = false;
                }
                if let Some(r) = o.sticky_ratio {
                    selection.sticky_ratio = Some(r);
                }
                if let Some(n) = o.null_strategy {
                    selection.null_strategy = n;
                }
                checkpoint = o.checkpoint.clone();
            }
            out.insert(
                rel.clone(),
                RelationConfig {
                    prompts,
                    selection,
                    checkpoint,
                },
            );
        }
        out
    }
}
