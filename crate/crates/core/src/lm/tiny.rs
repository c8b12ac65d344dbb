//! A small log-bilinear masked language model.
//!
//! The hidden state for a masked position is the mean, over unmasked context
//! tokens, of the token embedding plus a relative-position embedding; a
//! linear layer and softmax over the non-special vocabulary give the
//! prediction. It is tiny enough to fine-tune on a CPU in seconds, which
//! makes the full train/select/predict loop runnable end to end without a
//! GPU-scale transformer.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Cursor;
use std::path::Path;
use std::sync::{Arc, RwLock};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::store::{CheckpointStore, RunMetadata};
use super::tokenize::{Tokenize, WordTokenizer};
use super::{
    select_epoch, CheckpointId, EpochStats, FillMask, FinetuneOutcome, LmError, MaskQuery, MlmTrainer, ScoredToken,
    TrainConfig, DEFAULT_MASK_TOKEN,
};
use crate::pretraining::MaskedExample;

const UNK: usize = 0;
const MASK: usize = 1;
const N_SPECIAL: usize = 2;
const UNK_TOKEN: &str = "[UNK]";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    vocab: Vec<String>,
    dim: usize,
    window: usize,
}

#[derive(Debug, Clone)]
pub struct TinyMlm {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    /// Relative offsets are clamped to `[-window, window]`.
    window: usize,
    emb: Vec<f32>,
    pos: Vec<f32>,
    out_w: Vec<f32>,
    out_b: Vec<f32>,
}

/// Loss accumulator over masked positions.
#[derive(Debug, Clone, Copy, Default)]
struct Nll {
    sum: f64,
    count: usize,
}

impl TinyMlm {
    /// Fresh model over the given vocabulary (duplicates and specials are
    /// dropped; order is made deterministic by sorting).
    pub fn init<I, S>(tokens: I, dim: usize, seed: u64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let words: BTreeSet<String> = tokens
            .into_iter()
            .map(Into::into)
            .filter(|t| t != UNK_TOKEN && t != DEFAULT_MASK_TOKEN)
            .collect();
        let mut vocab = vec![UNK_TOKEN.to_string(), DEFAULT_MASK_TOKEN.to_string()];
        vocab.extend(words);
        let window = 4;
        let classes = vocab.len() - N_SPECIAL;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize, scale: f32| (0..n).map(|_| rng.gen_range(-scale..scale)).collect::<Vec<f32>>();
        let emb = uniform(vocab.len() * dim, 0.1);
        let pos = uniform((2 * window + 1) * dim, 0.1);
        let out_w = uniform(classes * dim, 0.1);
        Self::assemble(vocab, dim, window, emb, pos, out_w, vec![0.0; classes])
    }

    fn assemble(
        vocab: Vec<String>,
        dim: usize,
        window: usize,
        emb: Vec<f32>,
        pos: Vec<f32>,
        out_w: Vec<f32>,
        out_b: Vec<f32>,
    ) -> Self {
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        TinyMlm {
            vocab,
            index,
            dim,
            window,
            emb,
            pos,
            out_w,
            out_b,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Number of predictable (non-special) tokens.
    pub fn classes(&self) -> usize {
        self.vocab.len() - N_SPECIAL
    }

    fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    fn pos_bucket(&self, offset: isize) -> usize {
        let w = self.window as isize;
        (offset.clamp(-w, w) + w) as usize
    }

    /// Context positions for predicting `at`: every position not masked.
    fn context(&self, ids: &[usize], masked: &[bool], at: usize) -> Vec<(usize, usize)> {
        (0..ids.len())
            .filter(|&j| !masked[j] && j != at)
            .map(|j| (ids[j], self.pos_bucket(j as isize - at as isize)))
            .collect()
    }

    fn hidden(&self, ctx: &[(usize, usize)]) -> Vec<f32> {
        let d = self.dim;
        let mut h = vec![0.0f32; d];
        if ctx.is_empty() {
            return h;
        }
        for &(tok, bucket) in ctx {
            let e = &self.emb[tok * d..(tok + 1) * d];
            let p = &self.pos[bucket * d..(bucket + 1) * d];
            for k in 0..d {
                h[k] += e[k] + p[k];
            }
        }
        let inv = 1.0 / ctx.len() as f32;
        h.iter_mut().for_each(|x| *x *= inv);
        h
    }

    /// Softmax over the non-special vocabulary.
    fn probs(&self, h: &[f32]) -> Vec<f64> {
        let d = self.dim;
        let mut logits: Vec<f64> = (0..self.classes())
            .map(|c| {
                let w = &self.out_w[c * d..(c + 1) * d];
                let dot: f32 = w.iter().zip(h).map(|(a, b)| a * b).sum();
                (dot + self.out_b[c]) as f64
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            z += *l;
        }
        logits.iter_mut().for_each(|l| *l /= z);
        logits
    }

    /// Full distribution for the single mask in `tokens`, sorted by score
    /// (ties broken by vocabulary order).
    pub fn predict(&self, tokens: &[String]) -> Result<Vec<ScoredToken>, LmError> {
        let ids: Vec<usize> = tokens
            .iter()
            .map(|t| if t == DEFAULT_MASK_TOKEN { MASK } else { self.id(t) })
            .collect();
        let masks: Vec<usize> = (0..ids.len()).filter(|&i| ids[i] == MASK).collect();
        let [at] = masks[..] else {
            return Err(LmError::Query(format!(
                "expected one mask token, found {}",
                masks.len()
            )));
        };
        let masked: Vec<bool> = ids.iter().map(|&i| i == MASK).collect();
        let h = self.hidden(&self.context(&ids, &masked, at));
        let p = self.probs(&h);
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
        Ok(order
            .into_iter()
            .map(|c| ScoredToken::new(self.vocab[c + N_SPECIAL].clone(), p[c]))
            .collect())
    }

    fn example_ids(&self, ex: &MaskedExample) -> (Vec<usize>, Vec<bool>, Vec<(usize, usize)>) {
        let mut ids: Vec<usize> = ex.tokens.iter().map(|t| self.id(t)).collect();
        let mut masked = vec![false; ids.len()];
        let mut targets = Vec::new();
        for (&p, orig) in ex.masked_positions.iter().zip(&ex.original_tokens) {
            ids[p] = MASK;
            masked[p] = true;
            let t = self.id(orig);
            if t >= N_SPECIAL {
                targets.push((p, t - N_SPECIAL));
            }
        }
        (ids, masked, targets)
    }

    fn nll(&self, examples: &[MaskedExample]) -> Nll {
        let mut acc = Nll::default();
        for ex in examples {
            let (ids, masked, targets) = self.example_ids(ex);
            for (at, target) in targets {
                let p = self.probs(&self.hidden(&self.context(&ids, &masked, at)));
                acc.sum -= p[target].max(f64::MIN_POSITIVE).ln();
                acc.count += 1;
            }
        }
        acc
    }

    /// Perplexity over masked positions.
    pub fn perplexity(&self, examples: &[MaskedExample]) -> f64 {
        let n = self.nll(examples);
        if n.count == 0 {
            f64::INFINITY
        } else {
            (n.sum / n.count as f64).exp()
        }
    }

    /// One SGD step on the mean cross-entropy of the batch's masked positions.
    fn train_batch(&mut self, batch: &[&MaskedExample], lr: f32) -> Nll {
        let d = self.dim;
        let classes = self.classes();
        let mut g_out_w = vec![0.0f32; classes * d];
        let mut g_out_b = vec![0.0f32; classes];
        let mut g_emb: HashMap<usize, Vec<f32>> = HashMap::new();
        let mut g_pos = vec![0.0f32; self.pos.len()];
        let mut acc = Nll::default();

        for ex in batch {
            let (ids, masked, targets) = self.example_ids(ex);
            for (at, target) in targets {
                let ctx = self.context(&ids, &masked, at);
                let h = self.hidden(&ctx);
                let mut g = self.probs(&h);
                acc.sum -= g[target].max(f64::MIN_POSITIVE).ln();
                acc.count += 1;
                g[target] -= 1.0;

                let mut dh = vec![0.0f32; d];
                for (c, &gc) in g.iter().enumerate() {
                    let gc = gc as f32;
                    g_out_b[c] += gc;
                    let w = &self.out_w[c * d..(c + 1) * d];
                    let gw = &mut g_out_w[c * d..(c + 1) * d];
                    for k in 0..d {
                        gw[k] += gc * h[k];
                        dh[k] += gc * w[k];
                    }
                }
                if ctx.is_empty() {
                    continue;
                }
                let inv = 1.0 / ctx.len() as f32;
                for &(tok, bucket) in &ctx {
                    let ge = g_emb.entry(tok).or_insert_with(|| vec![0.0; d]);
                    let gp = &mut g_pos[bucket * d..(bucket + 1) * d];
                    for k in 0..d {
                        ge[k] += dh[k] * inv;
                        gp[k] += dh[k] * inv;
                    }
                }
            }
        }
        if acc.count == 0 {
            return acc;
        }
        let step = lr / acc.count as f32;
        for (w, g) in self.out_w.iter_mut().zip(&g_out_w) {
            *w -= step * g;
        }
        for (b, g) in self.out_b.iter_mut().zip(&g_out_b) {
            *b -= step * g;
        }
        for (p, g) in self.pos.iter_mut().zip(&g_pos) {
            *p -= step * g;
        }
        for (tok, ge) in g_emb {
            let e = &mut self.emb[tok * d..(tok + 1) * d];
            for k in 0..d {
                e[k] -= step * ge[k];
            }
        }
        acc
    }

    pub fn save(&self, dir: &Path) -> Result<(), LmError> {
        let header = Header {
            vocab: self.vocab.clone(),
            dim: self.dim,
            window: self.window,
        };
        let hp = dir.join("model.json");
        crate::io::write_json(&hp, &header).map_err(CheckpointStore::io_err(&hp))?;
        let mut buf = Vec::with_capacity(4 * (self.emb.len() + self.pos.len() + self.out_w.len() + self.out_b.len()));
        for x in self.emb.iter().chain(&self.pos).chain(&self.out_w).chain(&self.out_b) {
            buf.write_f32::<LittleEndian>(*x).expect("write to Vec");
        }
        let wp = dir.join("weights.bin");
        crate::io::write_atomic(&wp, &buf).map_err(CheckpointStore::io_err(&wp))
    }

    pub fn load(dir: &Path) -> Result<Self, LmError> {
        let hp = dir.join("model.json");
        let header: Header = crate::io::read_json(&hp).map_err(CheckpointStore::io_err(&hp))?;
        let wp = dir.join("weights.bin");
        let bytes = fs::read(&wp).map_err(CheckpointStore::io_err(&wp))?;
        let (v, d, w) = (header.vocab.len(), header.dim, header.window);
        if v < N_SPECIAL || header.vocab[UNK] != UNK_TOKEN || header.vocab[MASK] != DEFAULT_MASK_TOKEN {
            return Err(LmError::Corrupt {
                path: hp,
                message: "vocabulary does not start with the special tokens".into(),
            });
        }
        let sizes = [v * d, (2 * w + 1) * d, (v - N_SPECIAL) * d, v - N_SPECIAL];
        let total: usize = sizes.iter().sum();
        if bytes.len() != 4 * total {
            return Err(LmError::Corrupt {
                path: wp,
                message: format!("expected {} bytes, found {}", 4 * total, bytes.len()),
            });
        }
        let mut cur = Cursor::new(bytes);
        let mut take = |n: usize| -> Vec<f32> {
            let mut out = vec![0.0f32; n];
            cur.read_f32_into::<LittleEndian>(&mut out).expect("length checked");
            out
        };
        let emb = take(sizes[0]);
        let pos = take(sizes[1]);
        let out_w = take(sizes[2]);
        let out_b = take(sizes[3]);
        Ok(Self::assemble(header.vocab, d, w, emb, pos, out_w, out_b))
    }
}

/// [`TinyMlm`] checkpoints served from a [`CheckpointStore`].
#[derive(Debug)]
pub struct TinyBackend {
    store: CheckpointStore,
    tokenizer: WordTokenizer,
    cache: RwLock<HashMap<CheckpointId, Arc<TinyMlm>>>,
}

impl TinyBackend {
    pub fn new(store: CheckpointStore) -> Self {
        TinyBackend {
            store,
            tokenizer: WordTokenizer,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &CheckpointStore {
        &self.store
    }

    pub fn exists(&self, id: &CheckpointId) -> bool {
        self.store
            .dir(id)
            .map(|d| d.join("model.json").is_file())
            .unwrap_or(false)
    }

    /// Create an untrained base checkpoint whose vocabulary covers `texts`.
    pub fn create_base<S: AsRef<str>>(&self, id: &CheckpointId, texts: &[S], dim: usize, seed: u64) -> Result<(), LmError> {
        let tokens = texts.iter().flat_map(|t| self.tokenizer.tokenize(t.as_ref()));
        let model = TinyMlm::init(tokens, dim, seed);
        self.save(id, &model)
    }

    pub fn save(&self, id: &CheckpointId, model: &TinyMlm) -> Result<(), LmError> {
        let dir = self.store.dir(id)?;
        model.save(&dir)?;
        self.cache
            .write()
            .expect("cache lock poisoned")
            .insert(id.clone(), Arc::new(model.clone()));
        Ok(())
    }

    pub fn model(&self, id: &CheckpointId) -> Result<Arc<TinyMlm>, LmError> {
        if let Some(m) = self.cache.read().expect("cache lock poisoned").get(id) {
            return Ok(Arc::clone(m));
        }
        if !self.exists(id) {
            return Err(LmError::UnknownCheckpoint(id.clone()));
        }
        let model = Arc::new(TinyMlm::load(&self.store.dir(id)?)?);
        self.cache
            .write()
            .expect("cache lock poisoned")
            .insert(id.clone(), Arc::clone(&model));
        Ok(model)
    }
}

impl FillMask for TinyBackend {
    fn mask_token(&self) -> &str {
        DEFAULT_MASK_TOKEN
    }

    fn fill_mask(&self, checkpoint: &CheckpointId, query: &MaskQuery) -> Result<Vec<ScoredToken>, LmError> {
        let model = self.model(checkpoint)?;
        let mut dist = model.predict(&self.tokenizer.tokenize(query.text()))?;
        dist.truncate(query.top_k());
        Ok(dist)
    }
}

impl MlmTrainer for TinyBackend {
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
        if config.epochs == 0 || config.batch_size == 0 {
            return Err(LmError::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
            return Err(LmError::Config("learning rate must be positive".into()));
        }
        let _lock = self.store.lock(output)?;
        let mut model = (*self.model(base)?).clone();
        let selection_set = if dev.is_empty() {
            log::warn!("{output}: no dev examples; selecting the epoch by training perplexity");
            train
        } else {
            dev
        };

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut epochs = Vec::with_capacity(config.epochs);
        for epoch in 1..=config.epochs {
            order.shuffle(&mut rng);
            let mut acc = Nll::default();
            for chunk in order.chunks(config.batch_size) {
                let batch: Vec<&MaskedExample> = chunk.iter().map(|&i| &train[i]).collect();
                let n = model.train_batch(&batch, config.learning_rate as f32);
                if !n.sum.is_finite() {
                    return Err(LmError::Divergence { epoch });
                }
                acc.sum += n.sum;
                acc.count += n.count;
            }
            let train_loss = if acc.count == 0 { 0.0 } else { acc.sum / acc.count as f64 };
            if !train_loss.is_finite() || model.out_w.iter().any(|w| !w.is_finite()) {
                return Err(LmError::Divergence { epoch });
            }
            let dev_perplexity = model.perplexity(selection_set);
            log::info!("{output} epoch {epoch}: train loss {train_loss:.4}, dev perplexity {dev_perplexity:.3}");
            self.save(&output.epoch(epoch), &model)?;
            epochs.push(EpochStats {
                epoch,
                train_loss,
                dev_perplexity,
            });
        }

        let best = select_epoch(&epochs).expect("at least one epoch").epoch;
        let selected = output.epoch(best);
        self.store.write_metadata(&RunMetadata {
            output: output.clone(),
            base: base.clone(),
            config: config.clone(),
            epochs: epochs.clone(),
            selected: selected.clone(),
        })?;
        Ok(FinetuneOutcome {
            checkpoint: selected,
            selected_epoch: best,
            epochs,
        })
    }
}
