//! Subcommand implementations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use kbpop_core::candidates::{self, CandidateError, CandidateSet, SelectionConfig, Tuned};
use kbpop_core::dataset::{self, DatasetError, DatasetSplit, SplitName, TripleEntry};
use kbpop_core::eval::{self, Predictions};
use kbpop_core::io;
use kbpop_core::lm::{CheckpointStore, FillMask, LmError, TableLm, TinyBackend, WordTokenizer};
use kbpop_core::mining::{self, DepParse, DepToken, EnsembleDecision, MinedPrompt, MinedStore, MiningError};
use kbpop_core::pretraining::{self, CheckpointRegistry, DryRunTrainer, FamilyInputs, PretrainError};
use kbpop_core::prompts::PromptTemplate;
use kbpop_core::silver::{self, HarvestReport, HarvestStatus, SilverCache, SilverError, SparqlClient};
use kbpop_core::{Execution, Relation, RelationInventory};
use serde::{Deserialize, Serialize};

use crate::config::{Backend, Layers, MiningStyle, RelationConfig, RunConfig};
use crate::workspace::Workspace;
use crate::{CliError, Command, Common};

type Result<T> = std::result::Result<T, CliError>;

fn internal(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Internal(e.into())
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<LmError> for CliError {
    fn from(e: LmError) -> Self {
        match e {
            LmError::UnknownCheckpoint(_) | LmError::Config(_) | LmError::Locked(_) => CliError::Usage(e.to_string()),
            other => internal(other),
        }
    }
}

impl From<PretrainError> for CliError {
    fn from(e: PretrainError) -> Self {
        match e {
            PretrainError::Lm(lm) => lm.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<SilverError> for CliError {
    fn from(e: SilverError) -> Self {
        match e {
            SilverError::Query(_) => CliError::Usage(e.to_string()),
            other => internal(other),
        }
    }
}

impl From<CandidateError> for CliError {
    fn from(e: CandidateError) -> Self {
        match e {
            CandidateError::Backend { source, .. } if matches!(source, LmError::UnknownCheckpoint(_)) => source.into(),
            CandidateError::Backend { .. } | CandidateError::Io { .. } => internal(e),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<MiningError> for CliError {
    fn from(e: MiningError) -> Self {
        match e {
            MiningError::Scoring(c) => c.into(),
            MiningError::NoCandidates => CliError::Usage(e.to_string()),
            MiningError::Io { .. } => internal(e),
        }
    }
}

/// Everything a command needs after configuration is resolved.
struct Ctx {
    cfg: RunConfig,
    ws: Workspace,
    exec: Execution,
    inventory: RelationInventory,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self> {
        let mut cfg = RunConfig::load(&common.config, &common.overrides)?;
        if let Some(w) = &common.work_dir {
            cfg.work_dir = w.clone();
        }
        if let Some(s) = common.seed {
            cfg.seed = s;
        }
        if common.sequential {
            cfg.sequential = true;
        }
        let ws = Workspace::new(cfg.work_dir.clone());
        Ok(Ctx {
            exec: cfg.execution(),
            cfg,
            ws,
            inventory: RelationInventory::challenge(),
        })
    }

    fn split_name(&self, name: &str) -> Result<SplitName> {
        name.parse::<SplitName>().map_err(|e| CliError::usage(e.to_string()))
    }

    fn load_split(&self, name: SplitName) -> Result<DatasetSplit> {
        let (path, gold) = match name {
            SplitName::Train => (self.cfg.data.train.clone(), true),
            SplitName::Dev => (self.cfg.data.dev.clone(), true),
            SplitName::Test => (
                self.cfg
                    .data
                    .test
                    .clone()
                    .ok_or_else(|| CliError::usage("data.test is not configured"))?,
                false,
            ),
            SplitName::Train2 | SplitName::Dev2 => {
                let p = self.ws.split_file(name);
                if !p.is_file() {
                    return Err(CliError::usage(format!("{} not found; run `kbpop split` first", p.display())));
                }
                (p, true)
            }
        };
        Ok(dataset::load_entries(&path, name, gold, &self.inventory)?)
    }

    fn tuned(&self) -> Result<Option<BTreeMap<Relation, SelectionConfig>>> {
        let p = self.ws.selection();
        if !p.is_file() {
            return Ok(None);
        }
        let file: SelectionFile = io::read_json(&p).with_context(|| format!("reading {}", p.display()))?;
        Ok(Some(file.into_iter().map(|(r, t)| (r, t.selection)).collect()))
    }

    fn relation_configs(&self) -> Result<BTreeMap<Relation, RelationConfig>> {
        let tuned = self.tuned()?;
        let mined = MinedStore::new(self.ws.mined()).ensembles();
        Ok(self.cfg.relation_configs(&Layers {
            tuned: tuned.as_ref(),
            mined: Some(&mined),
        }))
    }

    fn registry(&self) -> Result<CheckpointRegistry> {
        let p = self.ws.registry();
        if p.is_file() {
            Ok(io::read_json(&p).with_context(|| format!("reading {}", p.display()))?)
        } else {
            Ok(CheckpointRegistry::uniform(&self.inventory, &self.cfg.model.base))
        }
    }

    fn silver_entries(&self) -> Result<BTreeMap<Relation, Vec<TripleEntry>>> {
        let cache = SilverCache::new(self.ws.silver());
        let pairs = cache.load_all(self.inventory.iter().cloned())?;
        Ok(pairs
            .into_iter()
            .filter(|(_, p)| !p.is_empty())
            .map(|(r, p)| (r, silver::silver_entries(&p)))
            .collect())
    }

    fn tiny(&self) -> TinyBackend {
        TinyBackend::new(CheckpointStore::new(self.cfg.checkpoint_dir()))
    }

    /// Create the base checkpoint of the reference model if it is missing,
    /// with a vocabulary covering prompts, gold data and silver data.
    fn ensure_base(&self, backend: &TinyBackend) -> Result<()> {
        let base = &self.cfg.model.base;
        if backend.exists(base) {
            return Ok(());
        }
        log::warn!("base checkpoint {base} missing; creating an untrained reference model");
        let configs = self.cfg.relation_configs(&Layers::default());
        let mut texts: Vec<String> = Vec::new();
        let mut add_entries = |entries: &[TripleEntry]| {
            for e in entries {
                let Some(rc) = configs.get(&e.relation) else { continue };
                for t in &rc.prompts.templates {
                    texts.push(t.instantiate(&e.subject, "[MASK]"));
                    for obj in &e.gold_objects {
                        texts.push(t.fill(&e.subject, &obj[0]).text);
                    }
                }
                if let Some(rule) = &rc.prompts.decomposition {
                    texts.push(rule.precondition_prompt(&e.subject, "[MASK]"));
                    texts.push(rule.keywords.join(" "));
                    texts.push(rule.formal_pattern.clone());
                }
            }
        };
        for name in [SplitName::Train, SplitName::Dev, SplitName::Test] {
            if name == SplitName::Test && self.cfg.data.test.is_none() {
                continue;
            }
            add_entries(&self.load_split(name)?.entries);
        }
        for entries in self.silver_entries()?.values() {
            add_entries(entries);
        }
        backend.create_base(base, &texts, self.cfg.model.dim, self.cfg.seed)?;
        Ok(())
    }

    fn fill_mask(&self) -> Result<Box<dyn FillMask>> {
        match self.cfg.model.backend {
            Backend::Table => {
                let path = self.cfg.model.table.as_ref().expect("validated");
                Ok(Box::new(TableLm::from_json_file(path)?))
            }
            Backend::Tiny => {
                let backend = self.tiny();
                self.ensure_base(&backend)?;
                Ok(Box::new(backend))
            }
        }
    }
}

pub fn dispatch(cmd: &Command) -> Result<()> {
    let ctx = Ctx::new(cmd.common())?;
    match cmd {
        Command::Split { .. } => split(&ctx),
        Command::Harvest { offline, .. } => harvest(&ctx, *offline),
        Command::Train { dry_run, .. } => train(&ctx, *dry_run),
        Command::Mine { .. } => mine(&ctx),
        Command::Predict { split, .. } => predict(&ctx, split),
        Command::Tune { split, sticky, .. } => tune(&ctx, split.as_deref(), *sticky),
        Command::Eval {
            split,
            predictions,
            compare,
            label,
            compare_label,
            ..
        } => evaluate(&ctx, split, predictions.as_deref(), compare.as_deref(), label, compare_label),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    io::write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    io::write_json(path, value).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn split(ctx: &Ctx) -> Result<()> {
    let train = ctx.load_split(SplitName::Train)?;
    let out = dataset::split_train(&train, ctx.cfg.seed)?;
    for rel in &out.undersized {
        log::warn!("{rel}: fewer than {} entries; all kept in train2", dataset::MIN_SPLIT_SIZE);
    }
    write_text(&ctx.ws.split_file(SplitName::Train2), &dataset::to_jsonl(&out.train2))?;
    write_text(&ctx.ws.split_file(SplitName::Dev2), &dataset::to_jsonl(&out.dev2))?;
    println!(
        "train2: {} entries, dev2: {} entries (seed {})",
        out.train2.len(),
        out.dev2.len(),
        ctx.cfg.seed
    );
    Ok(())
}

fn challenge_subjects(ctx: &Ctx) -> Result<Vec<String>> {
    let mut subjects = Vec::new();
    for name in [SplitName::Train, SplitName::Dev, SplitName::Test] {
        if name == SplitName::Test && ctx.cfg.data.test.is_none() {
            continue;
        }
        subjects.extend(ctx.load_split(name)?.subjects().map(String::from));
    }
    Ok(subjects)
}

fn harvest(ctx: &Ctx, offline: bool) -> Result<()> {
    let offline = offline || ctx.cfg.harvest.offline;
    let subjects = challenge_subjects(ctx)?;
    let client = SparqlClient::new(ctx.cfg.harvest.endpoint.clone(), ctx.cfg.harvest.timeout());
    let cache = SilverCache::new(ctx.ws.silver());
    let mut reports: Vec<HarvestReport> = Vec::new();
    for (rel, query) in ctx.cfg.harvest.queries() {
        let (_, report) = silver::harvest(&rel, &query, &client, &cache, subjects.iter().map(String::as_str), offline)?;
        reports.push(report);
    }
    write_json(&ctx.ws.silver().join("reports.json"), &reports)?;
    println!("{}", render_harvest(&reports));
    Ok(())
}

fn render_harvest(reports: &[HarvestReport]) -> String {
    let w = reports
        .iter()
        .map(|r| r.relation.as_str().len())
        .chain([8])
        .max()
        .unwrap_or(8);
    let mut out = format!("{:<w$}  {:>8}  {:>8}  {:>8}  status\n", "Relation", "raw", "excluded", "kept");
    for r in reports {
        let status = match r.status {
            HarvestStatus::Ok => "ok",
            HarvestStatus::Timeout => "timeout",
            HarvestStatus::Skipped => "skipped",
        };
        let _ = writeln!(
            out,
            "{:<w$}  {:>8}  {:>8}  {:>8}  {status}",
            r.relation, r.raw_count, r.excluded_count, r.kept_count
        );
    }
    out.trim_end().to_string()
}

fn train(ctx: &Ctx, dry_run: bool) -> Result<()> {
    let plan = ctx.cfg.plan();
    let base = ctx.cfg.model.base.clone();
    if plan.is_empty() {
        let registry = CheckpointRegistry::uniform(&ctx.inventory, &base);
        if dry_run {
            println!("empty plan: every relation uses {base}");
        } else {
            write_json(&ctx.ws.registry(), &registry)?;
            println!("empty plan: every relation uses {base}");
        }
        return Ok(());
    }
    let train2 = ctx.load_split(SplitName::Train2)?;
    let dev2 = ctx.load_split(SplitName::Dev2)?;
    let silver = ctx.silver_entries()?;
    let configs = ctx.cfg.relation_configs(&Layers::default());
    let templates: BTreeMap<Relation, PromptTemplate> = configs
        .iter()
        .filter_map(|(r, c)| c.prompts.templates.first().map(|t| (r.clone(), t.clone())))
        .collect();
    let null: BTreeSet<Relation> = configs
        .iter()
        .filter(|(_, c)| c.selection.null_strategy)
        .map(|(r, _)| r.clone())
        .collect();
    let mut gold_config = ctx.cfg.training.gold.clone();
    let mut silver_config = ctx.cfg.training.silver.clone();
    gold_config.seed = ctx.cfg.seed;
    silver_config.seed = ctx.cfg.seed;
    let inputs = FamilyInputs {
        inventory: &ctx.inventory,
        train2: &train2,
        dev2: &dev2,
        silver: &silver,
        templates: &templates,
        null_strategy: &null,
        tokenizer: &WordTokenizer,
        gold_config,
        silver_config,
    };

    if dry_run {
        let trainer = DryRunTrainer::new();
        let (registry, _) = pretraining::train_family(&plan, &inputs, &trainer, &base)?;
        println!("{:<48}  {:>6}  {:>6}  {:>6}  base", "checkpoint", "train", "dev", "epochs");
        for run in trainer.runs() {
            println!(
                "{:<48}  {:>6}  {:>6}  {:>6}  {}",
                run.output, run.train_examples, run.dev_examples, run.epochs, run.base
            );
        }
        println!();
        for (rel, ckpt) in registry.iter() {
            println!("{rel:<28}  {ckpt}");
        }
        return Ok(());
    }

    if ctx.cfg.model.backend != Backend::Tiny {
        return Err(CliError::usage("training needs model.backend = \"tiny\""));
    }
    let backend = ctx.tiny();
    ctx.ensure_base(&backend)?;
    let (registry, outcomes) = pretraining::train_family(&plan, &inputs, &backend, &base)?;
    write_json(&ctx.ws.training_log(), &outcomes)?;
    write_json(&ctx.ws.registry(), &registry)?;
    for o in &outcomes {
        println!("{}  (epoch {} of {})", o.checkpoint, o.selected_epoch, o.epochs.len());
    }
    Ok(())
}

#[derive(Deserialize)]
struct ParseRecord {
    text: String,
    tokens: Vec<DepToken>,
}

fn load_parses(path: &Path) -> Result<HashMap<String, DepParse>> {
    let rows: Vec<ParseRecord> = io::read_jsonl(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let mut out = HashMap::new();
    for r in rows {
        match DepParse::align(&r.text, r.tokens) {
            Some(p) => {
                out.insert(r.text, p);
            }
            None => log::warn!("parse tokens do not align with {:?}; skipped", r.text),
        }
    }
    Ok(out)
}

fn mine(ctx: &Ctx) -> Result<()> {
    let docs = match &ctx.cfg.mining.corpus {
        Some(p) => mining::read_corpus(p).map_err(|e| CliError::usage(format!("corpus {}: {e}", p.display())))?,
        None => Vec::new(),
    };
    if docs.is_empty() {
        log::warn!("empty corpus; ensembles fall back to the manual templates");
    }
    let parses = match &ctx.cfg.mining.parses {
        Some(p) => load_parses(p)?,
        None => HashMap::new(),
    };
    let style = ctx.cfg.mining.style;
    if style != MiningStyle::Middle && parses.is_empty() && !docs.is_empty() {
        log::warn!("dependency mining requested but no parses are configured");
    }
    let train = ctx.load_split(SplitName::Train)?;
    let configs = ctx.cfg.relation_configs(&Layers::default());
    let registry = ctx.registry()?;
    let store = MinedStore::new(ctx.ws.mined());
    let stoplist = ctx.cfg.stoplist();
    let mut lm: Option<Box<dyn FillMask>> = None;

    for rel in train.relations() {
        let rc = &configs[&rel];
        if rc.prompts.decomposition.is_some() {
            log::info!("{rel}: prompts come from decomposition; not mined");
            continue;
        }
        let entries: Vec<TripleEntry> = train.of_relation(&rel).cloned().collect();
        let pairs = mining::pairs_from_entries(&entries);
        let sentences = mining::mine_sentences(&docs, &pairs, ctx.cfg.mining.segmenter, ctx.exec);
        let mut mined: Vec<MinedPrompt> = Vec::new();
        if style != MiningStyle::Dependency {
            mined.extend(mining::count_templates(&sentences, mining::middle_word_template));
        }
        if style != MiningStyle::Middle {
            mined.extend(mining::count_templates(&sentences, |s| {
                parses.get(&s.text).and_then(|p| mining::dependency_template(s, p))
            }));
        }
        mining::sort_by_frequency(&mut mined);
        store.write_prompts(rel.as_str(), &mined)?;
        let manual = rc.prompts.templates.first();

        let decision = if mined.is_empty() {
            let manual = manual.ok_or(MiningError::NoCandidates)?;
            EnsembleDecision {
                ensemble: vec![manual.clone()],
                f1: 0.0,
                singles: Vec::new(),
                steps: Vec::new(),
            }
        } else {
            if lm.is_none() {
                lm = Some(ctx.fill_mask()?);
            }
            let lm = lm.as_deref().expect("set above");
            let ckpt = rc
                .checkpoint
                .clone()
                .or_else(|| registry.get(&rel).cloned())
                .unwrap_or_else(|| ctx.cfg.model.base.clone());
            // Each ensemble score already parallelises over entries.
            mining::select_ensemble(&mined, manual, Execution::Sequential, |ts| {
                mining::template_set_f1(ts, &entries, &ckpt, lm, &stoplist, ctx.exec)
            })?
        };
        store.write_decision(rel.as_str(), &decision)?;
        println!(
            "{rel:<28}  {:>4} sentences  {:>4} prompts  ensemble size {}",
            sentences.len(),
            mined.len(),
            decision.size()
        );
    }
    Ok(())
}

fn predict(ctx: &Ctx, split_name: &str) -> Result<()> {
    let name = ctx.split_name(split_name)?;
    let split = ctx.load_split(name)?;
    let configs = ctx.relation_configs()?;
    let registry = ctx.registry()?;
    let lm = ctx.fill_mask()?;
    let mut all: Vec<CandidateSet> = Vec::with_capacity(split.len());
    for rel in split.relations() {
        let rc = &configs[&rel];
        let entries: Vec<TripleEntry> = split.of_relation(&rel).cloned().collect();
        let ckpt = rc
            .checkpoint
            .clone()
            .or_else(|| registry.get(&rel).cloned())
            .unwrap_or_else(|| ctx.cfg.model.base.clone());
        let sets = candidates::generate_all(&entries, &rc.prompts, &ckpt, lm.as_ref(), ctx.exec)?;
        candidates::write_dump(&ctx.ws.dump(name, rel.as_str()), &sets)?;
        log::info!("{rel}: {} entries with {ckpt}", sets.len());
        all.extend(sets);
    }
    let selection: BTreeMap<Relation, SelectionConfig> =
        configs.iter().map(|(r, c)| (r.clone(), c.selection.clone())).collect();
    let preds = candidates::predict_all(&all, &selection, &SelectionConfig::default());
    let lines = candidates::submission_jsonl(&split.entries, &preds);
    write_text(&ctx.ws.objects(name), &lines)?;
    if name == SplitName::Test {
        write_text(&ctx.ws.submission(), &lines)?;
        println!("submission written to {}", ctx.ws.submission().display());
    } else {
        println!("{} predictions written to {}", split.len(), ctx.ws.objects(name).display());
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TunedRelation {
    pub selection: SelectionConfig,
    #[serde(default)]
    pub searched: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
}

pub type SelectionFile = BTreeMap<Relation, TunedRelation>;

fn tune(ctx: &Ctx, split_name: Option<&str>, sticky_flag: bool) -> Result<()> {
    let name = ctx.split_name(split_name.or(ctx.cfg.tuning.split.as_deref()).unwrap_or("train"))?;
    if name == SplitName::Test {
        return Err(CliError::usage("cannot tune on the test split"));
    }
    let sticky = sticky_flag || ctx.cfg.tuning.sticky;
    let gold = ctx.load_split(name)?;
    // Null-strategy flags come from the preset and explicit overrides only.
    let configs = ctx.cfg.relation_configs(&Layers::default());
    let stoplist = ctx.cfg.stoplist();
    let t_grid = ctx.cfg.threshold_grid();
    let r_grid = ctx.cfg.ratio_grid();
    let mut out: SelectionFile = BTreeMap::new();
    for rel in gold.relations() {
        let rc = &configs[&rel];
        if rc.selection.null_strategy {
            out.insert(
                rel.clone(),
                TunedRelation {
                    selection: SelectionConfig {
                        stoplist: stoplist.clone(),
                        ..SelectionConfig::null()
                    },
                    searched: false,
                    f1: None,
                },
            );
            continue;
        }
        let dump = ctx.ws.dump(name, rel.as_str());
        if !dump.is_file() {
            return Err(CliError::usage(format!(
                "{} not found; run `kbpop predict --split {name}` first",
                dump.display()
            )));
        }
        let sets = candidates::read_dump(&dump)?;
        let entries: Vec<&TripleEntry> = gold.of_relation(&rel).collect();
        let (selection, tuned): (SelectionConfig, Tuned) = candidates::tune_relation(
            &rel,
            &sets,
            &entries,
            &stoplist,
            &t_grid,
            sticky.then_some(r_grid.as_slice()),
            ctx.exec,
        )?;
        out.insert(
            rel.clone(),
            TunedRelation {
                selection,
                searched: true,
                f1: Some(tuned.f1),
            },
        );
    }
    write_json(&ctx.ws.selection(), &out)?;
    println!("{}", render_tuning(&out));
    Ok(())
}

fn render_tuning(file: &SelectionFile) -> String {
    let mut out = format!("{:<28}  {:>5}  {:>6}  {:>6}\n", "Relation", "t", "ratio", "F-1");
    for (rel, t) in file {
        let s = &t.selection;
        let th = if s.null_strategy { "null".to_string() } else { format!("{:.2}", s.threshold) };
        let r = s.sticky_ratio.map_or("-".to_string(), |r| format!("{r:.2}"));
        let f = t.f1.map_or("-".to_string(), |f| format!("{f:.3}"));
        let _ = writeln!(out, "{rel:<28}  {th:>5}  {r:>6}  {f:>6}");
    }
    out.trim_end().to_string()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ObjectField {
    One(String),
    Aliases(Vec<String>),
}

#[derive(Deserialize)]
struct PredictionRecord {
    #[serde(alias = "subject", rename = "SubjectEntity")]
    subject: String,
    #[serde(alias = "relation", rename = "Relation")]
    relation: String,
    #[serde(default, alias = "objects", rename = "ObjectEntities")]
    objects: Vec<ObjectField>,
}

/// Read challenge-format predictions. Relations outside the challenge set
/// are kept; they simply never match a gold entry.
pub fn read_predictions(path: &Path) -> Result<Predictions> {
    let rows: Vec<PredictionRecord> =
        io::read_jsonl(path).map_err(|e| CliError::usage(format!("predictions {}: {e}", path.display())))?;
    let mut preds = Predictions::new();
    for r in rows {
        let key = dataset::EntryKey {
            subject: r.subject,
            relation: Relation::new(r.relation),
        };
        let slot = preds.entry(key).or_default();
        for o in r.objects {
            match o {
                ObjectField::One(s) => {
                    slot.insert(s);
                }
                ObjectField::Aliases(v) => slot.extend(v.into_iter().take(1)),
            }
        }
    }
    Ok(preds)
}

fn warn_relation_mismatch(preds: &Predictions, gold: &DatasetSplit, label: &str) {
    let pred_rels: BTreeSet<&Relation> = preds.keys().map(|k| &k.relation).collect();
    let gold_rels: BTreeSet<Relation> = gold.relations().into_iter().collect();
    for r in gold_rels.iter().filter(|r| !pred_rels.contains(r)) {
        log::warn!("{label}: no predictions for {r}; scored as empty");
    }
    for r in pred_rels.iter().filter(|r| !gold_rels.contains(*r)) {
        log::warn!("{label}: {r} is not in the gold split; ignored");
    }
}

fn evaluate(
    ctx: &Ctx,
    split_name: &str,
    predictions: Option<&Path>,
    compare: Option<&Path>,
    label: &str,
    compare_label: &str,
) -> Result<()> {
    let name = ctx.split_name(split_name)?;
    if name == SplitName::Test {
        return Err(CliError::usage("the test split has no gold objects to score against"));
    }
    let gold = ctx.load_split(name)?;
    let pred_path = predictions.map(Path::to_path_buf).unwrap_or_else(|| ctx.ws.objects(name));
    if !pred_path.is_file() {
        return Err(CliError::usage(format!("{} not found", pred_path.display())));
    }
    let preds = read_predictions(&pred_path)?;
    warn_relation_mismatch(&preds, &gold, label);
    let report = eval::report(&preds, &gold, ctx.exec);
    let reports = ctx.ws.reports();
    write_json(&reports.join(format!("{name}.json")), &report)?;
    let table = match compare {
        None => eval::render_table(&report),
        Some(other) => {
            let other_preds = read_predictions(other)?;
            warn_relation_mismatch(&other_preds, &gold, compare_label);
            let other_report = eval::report(&other_preds, &gold, ctx.exec);
            write_json(&reports.join(format!("{name}.{compare_label}.json")), &other_report)?;
            eval::render_comparison(compare_label, &other_report, label, &report)
        }
    };
    write_text(&reports.join(format!("{name}.txt")), &table)?;
    println!("{table}");
    Ok(())
}
