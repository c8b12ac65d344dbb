//! Windowed-mask training examples and the per-relation checkpoint family.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetSplit, TripleEntry};
use crate::lm::{CheckpointId, FinetuneOutcome, LmError, MlmTrainer, Tokenize, TrainConfig, DEFAULT_MASK_TOKEN};
use crate::prompts::{PromptTemplate, Segment};
use crate::relation::{Relation, RelationInventory};

#[derive(Debug, thiserror::Error)]
pub enum PretrainError {
    #[error("invalid span: {0}")]
    Span(String),
    #[error("no template configured for relation {0}")]
    MissingTemplate(Relation),
    #[error("plan row {row}: {message}")]
    Plan { row: usize, message: String },
    #[error(transparent)]
    Lm(#[from] LmError),
}

/// A sentence with some positions replaced by the mask token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedExample {
    /// Tokens with masked positions already replaced.
    pub tokens: Vec<String>,
    /// Sorted, distinct, non-empty.
    pub masked_positions: Vec<usize>,
    /// Original tokens at `masked_positions`, in the same order.
    pub original_tokens: Vec<String>,
}

impl MaskedExample {
    /// Mask `positions` of `original`.
    pub fn new(original: Vec<String>, positions: &[usize], mask_token: &str) -> Result<Self, PretrainError> {
        let set: BTreeSet<usize> = positions.iter().copied().collect();
        if set.is_empty() {
            return Err(PretrainError::Span("no positions to mask".into()));
        }
        if let Some(&bad) = set.iter().find(|&&p| p >= original.len()) {
            return Err(PretrainError::Span(format!(
                "position {bad} out of range for {} tokens",
                original.len()
            )));
        }
        let mut tokens = original;
        let mut originals = Vec::with_capacity(set.len());
        for &p in &set {
            originals.push(std::mem::replace(&mut tokens[p], mask_token.to_string()));
        }
        Ok(MaskedExample {
            tokens,
            masked_positions: set.into_iter().collect(),
            original_tokens: originals,
        })
    }

    /// The unmasked sentence.
    pub fn original(&self) -> Vec<String> {
        let mut t = self.tokens.clone();
        for (&p, o) in self.masked_positions.iter().zip(&self.original_tokens) {
            t[p] = o.clone();
        }
        t
    }
}

/// Number of tokens masked on each side of the object span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WindowConfig(pub usize);

fn check_span(span: &Range<usize>, len: usize, what: &str) -> Result<(), PretrainError> {
    if span.start >= span.end || span.end > len {
        return Err(PretrainError::Span(format!(
            "{what} span {span:?} is empty or outside 0..{len}"
        )));
    }
    Ok(())
}

/// Mask the object span plus up to `window` tokens on each side, clipped to
/// the sentence and never touching the subject span.
pub fn build_masked_example(
    tokens: &[String],
    subject_span: Range<usize>,
    object_span: Range<usize>,
    window: WindowConfig,
) -> Result<MaskedExample, PretrainError> {
    check_span(&subject_span, tokens.len(), "subject")?;
    check_span(&object_span, tokens.len(), "object")?;
    if subject_span.start < object_span.end && object_span.start < subject_span.end {
        return Err(PretrainError::Span(format!(
            "subject {subject_span:?} and object {object_span:?} overlap"
        )));
    }
    let c = window.0;
    let left = object_span.start.saturating_sub(c)..object_span.start;
    let right = object_span.end..(object_span.end + c).min(tokens.len());
    let positions: Vec<usize> = left
        .chain(object_span)
        .chain(right)
        .filter(|p| !subject_span.contains(p))
        .collect();
    MaskedExample::new(tokens.to_vec(), &positions, DEFAULT_MASK_TOKEN)
}

/// Tokenize an instantiated template segment by segment so the filler spans
/// land on token boundaries.
fn tokenize_filled(
    template: &PromptTemplate,
    subject: &str,
    object: &str,
    tokenizer: &dyn Tokenize,
) -> (Vec<String>, Range<usize>, Range<usize>) {
    let mut tokens = Vec::new();
    let (mut s, mut o) = (0..0, 0..0);
    for seg in template.segments() {
        let start = tokens.len();
        match seg {
            Segment::Text(t) => tokens.extend(tokenizer.tokenize(t)),
            Segment::Subject => {
                tokens.extend(tokenizer.tokenize(subject));
                s = start..tokens.len();
            }
            Segment::Object => {
                tokens.extend(tokenizer.tokenize(object));
                o = start..tokens.len();
            }
        }
    }
    (tokens, s, o)
}

/// One example per (entry, gold object), using the first alias of each
/// gold object. Objects that tokenize to nothing are skipped.
pub fn build_training_set<'a>(
    triples: impl IntoIterator<Item = &'a TripleEntry>,
    templates: &BTreeMap<Relation, PromptTemplate>,
    window: WindowConfig,
    tokenizer: &dyn Tokenize,
) -> Result<Vec<MaskedExample>, PretrainError> {
    let mut out = Vec::new();
    for entry in triples {
        let template = templates
            .get(&entry.relation)
            .ok_or_else(|| PretrainError::MissingTemplate(entry.relation.clone()))?;
        for aliases in &entry.gold_objects {
            let Some(object) = aliases.first() else { continue };
            let (tokens, s, o) = tokenize_filled(template, &entry.subject, object, tokenizer);
            if o.is_empty() || s.is_empty() {
                log::debug!("skipping ({}, {object}): empty token span", entry.subject);
                continue;
            }
            out.push(build_masked_example(&tokens, s, o, window)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scope {
    Joint,
    Separate(Relation),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Joint => f.write_str("joint"),
            Scope::Separate(r) => write!(f, "separate:{r}"),
        }
    }
}

impl TryFrom<String> for Scope {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if s == "joint" {
            Ok(Scope::Joint)
        } else if let Some(rel) = s.strip_prefix("separate:").filter(|r| !r.is_empty()) {
            Ok(Scope::Separate(Relation::new(rel)))
        } else {
            Err(format!("scope must be `joint` or `separate:<Relation>`, got `{s}`"))
        }
    }
}

impl From<Scope> for String {
    fn from(s: Scope) -> Self {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "gold")]
    Gold,
    #[serde(rename = "gold+silver")]
    GoldSilver,
}

/// One fine-tuning run in the checkpoint family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRow {
    pub scope: Scope,
    pub source: Source,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default = "CheckpointId::raw")]
    pub base: CheckpointId,
    /// Relations that use this checkpoint at prediction time. Defaults to
    /// the scoped relation for separate rows; required for joint rows.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assign: Vec<Relation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl PlanRow {
    pub fn output_id(&self) -> CheckpointId {
        if let Some(n) = &self.name {
            return CheckpointId::new(n.clone());
        }
        let silver = if self.source == Source::GoldSilver { "-silver" } else { "" };
        let c = self.window.0;
        match &self.scope {
            Scope::Joint => CheckpointId::new(format!("mlm{silver}-c{c}-joint")),
            Scope::Separate(r) => CheckpointId::new(format!("mlm{silver}-c{c}-separate:{r}")),
        }
    }

    pub fn assigned(&self) -> Vec<Relation> {
        match (&self.scope, self.assign.is_empty()) {
            (Scope::Separate(r), true) => vec![r.clone()],
            _ => self.assign.clone(),
        }
    }
}

/// The checkpoint family behind the final system: per-relation silver
/// checkpoints where they help, joint gold checkpoints at c=0 and c=1 for
/// the person relations, the untouched base model elsewhere.
pub fn default_family_plan() -> Vec<PlanRow> {
    let row = |scope: Scope, source, c, assign: &[&str]| PlanRow {
        scope,
        source,
        window: WindowConfig(c),
        base: CheckpointId::raw(),
        assign: assign.iter().map(|r| Relation::new(*r)).collect(),
        name: None,
    };
    vec![
        row(Scope::Joint, Source::Gold, 0, &["PersonInstrument", "PersonProfession"]),
        row(Scope::Joint, Source::Gold, 1, &["PersonLanguage"]),
        row(Scope::Separate("ChemicalCompoundElement".into()), Source::GoldSilver, 0, &[]),
        row(Scope::Separate("RiverBasinsCountry".into()), Source::GoldSilver, 0, &[]),
        row(Scope::Separate("StateSharesBorderState".into()), Source::GoldSilver, 0, &[]),
    ]
}

/// Relation → checkpoint assignment used at prediction time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CheckpointRegistry(BTreeMap<Relation, CheckpointId>);

impl CheckpointRegistry {
    /// Every relation mapped to `base`.
    pub fn uniform(inventory: &RelationInventory, base: &CheckpointId) -> Self {
        CheckpointRegistry(inventory.iter().map(|r| (r.clone(), base.clone())).collect())
    }

    pub fn get(&self, relation: &Relation) -> Option<&CheckpointId> {
        self.0.get(relation)
    }

    pub fn set(&mut self, relation: Relation, checkpoint: CheckpointId) {
        self.0.insert(relation, checkpoint);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Relation, &CheckpointId)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Inputs shared by every plan row.
pub struct FamilyInputs<'a> {
    pub inventory: &'a RelationInventory,
    pub train2: &'a DatasetSplit,
    pub dev2: &'a DatasetSplit,
    /// Silver entries per relation (absent = no silver data).
    pub silver: &'a BTreeMap<Relation, Vec<TripleEntry>>,
    /// Template used to verbalize triples for each relation.
    pub templates: &'a BTreeMap<Relation, PromptTemplate>,
    /// Relations that always predict nothing and are never trained alone.
    pub null_strategy: &'a BTreeSet<Relation>,
    pub tokenizer: &'a dyn Tokenize,
    /// Used for gold-only rows.
    pub gold_config: TrainConfig,
    /// Used for rows that add silver data.
    pub silver_config: TrainConfig,
}

fn plan_err(row: usize, message: impl Into<String>) -> PretrainError {
    PretrainError::Plan {
        row,
        message: message.into(),
    }
}

/// Check every row before any training starts.
pub fn validate_plan(plan: &[PlanRow], inputs: &FamilyInputs<'_>) -> Result<(), PretrainError> {
    for (i, row) in plan.iter().enumerate() {
        if let Scope::Separate(rel) = &row.scope {
            if !inputs.inventory.contains(rel.as_str()) {
                return Err(plan_err(i, format!("unknown relation {rel}")));
            }
            if inputs.null_strategy.contains(rel) {
                return Err(plan_err(i, format!("{rel} uses the null strategy and is not trained separately")));
            }
            if row.source == Source::GoldSilver && inputs.silver.get(rel).is_none_or(|s| s.is_empty()) {
                return Err(plan_err(i, format!("no silver data for {rel}")));
            }
        } else {
            if row.assign.is_empty() {
                return Err(plan_err(i, "joint rows must list the relations they serve"));
            }
            if row.source == Source::GoldSilver && inputs.silver.values().all(|s| s.is_empty()) {
                return Err(plan_err(i, "source requires silver data but none is available"));
            }
        }
        if let Some(bad) = row.assigned().iter().find(|r| !inputs.inventory.contains(r.as_str())) {
            return Err(plan_err(i, format!("cannot assign unknown relation {bad}")));
        }
    }
    Ok(())
}

/// Training and dev examples for one row.
pub fn row_examples(
    row: &PlanRow,
    inputs: &FamilyInputs<'_>,
) -> Result<(Vec<MaskedExample>, Vec<MaskedExample>), PretrainError> {
    let in_scope = |e: &&TripleEntry| match &row.scope {
        Scope::Joint => true,
        Scope::Separate(r) => &e.relation == r,
    };
    let mut train = build_training_set(inputs.train2.entries.iter().filter(in_scope), inputs.templates, row.window, inputs.tokenizer)?;
    if row.source == Source::GoldSilver {
        for (rel, entries) in inputs.silver {
            if matches!(&row.scope, Scope::Separate(r) if r != rel) {
                continue;
            }
            train.extend(build_training_set(entries.iter(), inputs.templates, row.window, inputs.tokenizer)?);
        }
    }
    let dev = build_training_set(inputs.dev2.entries.iter().filter(in_scope), inputs.templates, row.window, inputs.tokenizer)?;
    Ok((train, dev))
}

/// Run every plan row and assign the resulting checkpoints. Relations no
/// row serves keep `default_checkpoint`; a later row overrides an earlier
/// assignment.
pub fn train_family(
    plan: &[PlanRow],
    inputs: &FamilyInputs<'_>,
    trainer: &dyn MlmTrainer,
    default_checkpoint: &CheckpointId,
) -> Result<(CheckpointRegistry, Vec<FinetuneOutcome>), PretrainError> {
    validate_plan(plan, inputs)?;
    let mut registry = CheckpointRegistry::uniform(inputs.inventory, default_checkpoint);
    let mut outcomes = Vec::with_capacity(plan.len());
    for (i, row) in plan.iter().enumerate() {
        let (train, dev) = row_examples(row, inputs)?;
        if train.is_empty() {
            return Err(plan_err(i, "row produced no training examples"));
        }
        let config = match row.source {
            Source::Gold => &inputs.gold_config,
            Source::GoldSilver => &inputs.silver_config,
        };
        let output = row.output_id();
        log::info!(
            "training {output} from {} ({} train / {} dev examples, {} epochs)",
            row.base,
            train.len(),
            dev.len(),
            config.epochs
        );
        let outcome = trainer.mlm_finetune(&row.base, &output, &train, &dev, config)?;
        for rel in row.assigned() {
            registry.set(rel, outcome.checkpoint.clone());
        }
        outcomes.push(outcome);
    }
    Ok((registry, outcomes))
}

/// A fine-tuning call seen by [`DryRunTrainer`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedRun {
    pub base: CheckpointId,
    pub output: CheckpointId,
    pub train_examples: usize,
    pub dev_examples: usize,
    pub epochs: usize,
}

/// Records fine-tuning calls without training; each call returns its output
/// id unchanged.
#[derive(Debug, Default)]
pub struct DryRunTrainer {
    runs: Mutex<Vec<RecordedRun>>,
}

impl DryRunTrainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn runs(&self) -> Vec<RecordedRun> {
        self.runs.lock().expect("poisoned").clone()
    }
}

impl MlmTrainer for DryRunTrainer {
    fn mlm_finetune(
        &self,
        base: &CheckpointId,
        output: &CheckpointId,
        train: &[MaskedExample],
        dev: &[MaskedExample],
        config: &TrainConfig,
    ) -> Result<FinetuneOutcome, LmError> {
        if train.is_empty() {
            return Err(LmError::Config("no training examples".into()));
        }
        self.runs.lock().expect("poisoned").push(RecordedRun {
            base: base.clone(),
            output: output.clone(),
            train_examples: train.len(),
            dev_examples: dev.len(),
            epochs: config.epochs,
        });
        Ok(FinetuneOutcome {
            checkpoint: output.clone(),
            selected_epoch: 0,
            epochs: Vec::new(),
        })
    }
}
