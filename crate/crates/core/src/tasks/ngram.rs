//! Character n-gram curriculum.
//!
//! One smoothed n-gram model is fitted to a text corpus and used to generate
//! a separate character stream per order `0..=max_order`. Each stream is cut
//! into disjoint sequences; the last ones are held out for evaluation.
//!
//! Smoothing is interpolated absolute discounting: with context `h` of length
//! `k`, `c(h)` its count and `t(h)` the number of distinct successors,
//!
//! `P_k(c | h) = max(c(hc) - D, 0) / c(h) + D t(h) / c(h) * P_{k-1}(c | h')`
//!
//! where `h'` drops the oldest character, `P_{-1}` is uniform over the
//! alphabet, and unseen contexts fall through to `P_{k-1}`. The order-`n`
//! model interpolates context lengths `0..=n`; order 0 is plain uniform.
//!
//! Batches encode one character per step: the input at step `t` is the
//! one-hot of character `t-1` (zeros at `t = 0`) and the target is character
//! `t`. The first `burn_in` steps are masked.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DrawKey, Stream, TaskSuite};
use crate::error::{Error, Result};
use crate::nn::{Batch, Head};
use crate::rng;

const GEN_TAG: u64 = 0x4e47_454e;
const SAMPLE_TAG: u64 = 0x4e47_5350;
/// Context packing uses 8 bits per character in a u128 below a length tag.
pub const MAX_ORDER: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NGramSuiteSpec {
    /// Text file the n-gram model is fitted to.
    pub corpus: PathBuf,
    pub max_order: usize,
    pub chars_per_task: usize,
    pub seq_len: usize,
    pub burn_in: usize,
    pub discount: f64,
    /// Fraction of each stream's sequences held out for evaluation.
    pub holdout_fraction: f64,
    /// Where generated streams are cached; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    /// Generation seed; `None` uses the run seed.
    pub data_seed: Option<u64>,
}

impl Default for NGramSuiteSpec {
    fn default() -> Self {
        Self {
            corpus: PathBuf::new(),
            max_order: 6,
            chars_per_task: 200_000,
            seq_len: 150,
            burn_in: 50,
            discount: 0.75,
            holdout_fraction: 0.1,
            cache_dir: None,
            data_seed: None,
        }
    }
}

impl NGramSuiteSpec {
    pub fn validate(&self) -> Result<()> {
        if self.corpus.as_os_str().is_empty() {
            return Err(Error::Config("n-gram curriculum needs a corpus path".into()));
        }
        if self.max_order > MAX_ORDER {
            return Err(Error::Config(format!("max_order must be <= {MAX_ORDER}")));
        }
        if self.seq_len == 0 || self.burn_in >= self.seq_len {
            return Err(Error::Config("need 0 <= burn_in < seq_len".into()));
        }
        if self.chars_per_task < 2 * self.seq_len {
            return Err(Error::Config(
                "chars_per_task must hold at least two sequences".into(),
            ));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::Config("discount must be in (0, 1)".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config("holdout_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Sorted distinct characters of a text; symbol ids index into it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    pub chars: Vec<char>,
}

impl Alphabet {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut chars: Vec<char> = text.chars().collect();
        chars.sort_unstable();
        chars.dedup();
        if chars.is_empty() {
            return Err(Error::Corpus("empty corpus".into()));
        }
        if chars.len() > 256 {
            return Err(Error::Corpus(format!(
                "{} distinct characters; at most 256 supported",
                chars.len()
            )));
        }
        Ok(Self { chars })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u8>> {
        text.chars()
            .map(|c| {
                self.chars
                    .binary_search(&c)
                    .map(|i| i as u8)
                    .map_err(|_| Error::Corpus(format!("character {c:?} not in alphabet")))
            })
            .collect()
    }

    pub fn decode(&self, symbols: &[u8]) -> String {
        symbols.iter().map(|&s| self.chars[s as usize]).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    start: u32,
    len: u32,
    total: u32,
}

fn pack(ctx: &[u8]) -> u128 {
    let mut key = (ctx.len() as u128) << 120;
    for (i, &c) in ctx.iter().enumerate() {
        key |= (c as u128) << (8 * i);
    }
    key
}

#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    alphabet_size: usize,
    discount: f64,
    /// `levels[k]` holds contexts of length `k`.
    levels: Vec<HashMap<u128, Node>>,
    successors: Vec<(u8, u32)>,
}

impl NGramModel {
    /// Fits context lengths `0..=order` (none for order 0).
    pub fn fit(corpus: &[u8], alphabet_size: usize, order: usize, discount: f64) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Corpus("empty corpus".into()));
        }
        if order > MAX_ORDER {
            return Err(Error::Config(format!("order must be <= {MAX_ORDER}")));
        }
        if corpus.len() < 10 * order {
            return Err(Error::Corpus(format!(
                "corpus of {} symbols too short for order {order}",
                corpus.len()
            )));
        }
        if let Some(&c) = corpus.iter().find(|&&c| c as usize >= alphabet_size) {
            return Err(Error::Corpus(format!("symbol {c} outside alphabet of {alphabet_size}")));
        }
        let mut levels = Vec::new();
        let mut successors = Vec::new();
        let depth = if order == 0 { 0 } else { order + 1 };
        for k in 0..depth {
            let mut pairs: Vec<(u128, u8)> = (k..corpus.len())
                .map(|i| (pack(&corpus[i - k..i]), corpus[i]))
                .collect();
            pairs.sort_unstable();
            let mut map = HashMap::new();
            let mut i = 0;
            while i < pairs.len() {
                let key = pairs[i].0;
                let start = successors.len() as u32;
                let mut total = 0u32;
                while i < pairs.len() && pairs[i].0 == key {
                    let c = pairs[i].1;
                    let mut n = 0u32;
                    while i < pairs.len() && pairs[i] == (key, c) {
                        n += 1;
                        i += 1;
                    }
                    successors.push((c, n));
                    total += n;
                }
                let len = successors.len() as u32 - start;
                map.insert(key, Node { start, len, total });
            }
            levels.push(map);
        }
        Ok(Self {
            order,
            alphabet_size,
            discount,
            levels,
            successors,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    /// Next-symbol distribution using the model truncated to `order`
    /// (`<= self.order()`), given preceding symbols `history` (any length,
    /// most recent last).
    pub fn distribution_into(&self, order: usize, history: &[u8], out: &mut [f64]) {
        assert!(order <= self.order && out.len() == self.alphabet_size);
        out.fill(1.0 / self.alphabet_size as f64);
        if order == 0 {
            return;
        }
        let d = self.discount;
        for k in 0..=order.min(history.len()) {
            let ctx = &history[history.len() - k..];
            if let Some(node) = self.levels[k].get(&pack(ctx)) {
                let total = node.total as f64;
                let lambda = d * node.len as f64 / total;
                out.iter_mut().for_each(|p| *p *= lambda);
                let s = node.start as usize;
                for &(c, n) in &self.successors[s..s + node.len as usize] {
                    out[c as usize] += (n as f64 - d).max(0.0) / total;
                }
            }
        }
    }

    pub fn distribution(&self, order: usize, history: &[u8]) -> Vec<f64> {
        let mut out = vec![0.0; self.alphabet_size];
        self.distribution_into(order, history, &mut out);
        out
    }

    /// `n_chars` symbols from the order-`order` model, conditioned on the
    /// `order` symbols of `corpus` preceding a random position.
    pub fn generate<R: rand::Rng + ?Sized>(
        &self,
        order: usize,
        corpus: &[u8],
        n_chars: usize,
        rng: &mut R,
    ) -> Vec<u8> {
        let pos = rng.gen_range(order.min(corpus.len())..=corpus.len());
        let mut history: Vec<u8> = corpus[pos - order.min(pos)..pos].to_vec();
        let prefix = history.len();
        history.reserve(n_chars);
        let mut probs = vec![0.0; self.alphabet_size];
        for _ in 0..n_chars {
            let from = history.len().saturating_sub(order);
            self.distribution_into(order, &history[from..], &mut probs);
            let mut u = rng.gen::<f64>() * probs.iter().sum::<f64>();
            let mut pick = probs.len() - 1;
            for (i, p) in probs.iter().enumerate() {
                if u < *p {
                    pick = i;
                    break;
                }
                u -= p;
            }
            history.push(pick as u8);
        }
        history.split_off(prefix)
    }

    /// Mean `-ln p(c_t | c_{<t})` of `symbols` under the order-`order` model.
    pub fn cross_entropy(&self, order: usize, symbols: &[u8]) -> f64 {
        let mut probs = vec![0.0; self.alphabet_size];
        let mut total = 0.0;
        for t in 0..symbols.len() {
            let from = t.saturating_sub(order);
            self.distribution_into(order, &symbols[from..t], &mut probs);
            total -= probs[symbols[t] as usize].ln();
        }
        total / symbols.len().max(1) as f64
    }
}

/// Corpus text decoded to symbols.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub alphabet: Alphabet,
    pub symbols: Vec<u8>,
    /// Hex SHA-256 of the raw file bytes.
    pub sha256: String,
}

impl Corpus {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::Corpus(format!("reading {}: {e}", path.display())))?;
        let sha256 = hex(&Sha256::digest(&bytes));
        let text = String::from_utf8(bytes)
            .map_err(|e| Error::Corpus(format!("{} is not UTF-8: {e}", path.display())))?;
        Self::from_text(&text, sha256)
    }

    pub fn from_text(text: &str, sha256: String) -> Result<Self> {
        let alphabet = Alphabet::from_text(text)?;
        let symbols = alphabet.encode(text)?;
        Ok(Self {
            alphabet,
            symbols,
            sha256,
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Alphabet manifest stored next to cached streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub corpus_sha256: String,
    pub corpus_chars: usize,
    pub alphabet: Vec<char>,
}

/// Cache file name for one generated stream.
pub fn stream_file_name(corpus_sha256: &str, order: usize, seed: u64, n_chars: usize) -> String {
    format!("ngram-{}-o{order}-s{seed}-n{n_chars}.bin", &corpus_sha256[..16])
}

pub fn manifest_file_name(corpus_sha256: &str) -> String {
    format!("ngram-{}-alphabet.json", &corpus_sha256[..16])
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Generated streams for every order, split into train and held-out
/// sequences.
#[derive(Debug, Clone)]
pub struct NGramSuite {
    spec: NGramSuiteSpec,
    alphabet: Alphabet,
    streams: Vec<Vec<u8>>,
    n_train: usize,
    n_seq: usize,
}

impl NGramSuite {
    /// Loads the corpus, then generates (or reads cached) streams.
    pub fn build(spec: NGramSuiteSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let corpus = Corpus::load(&spec.corpus)?;
        Self::from_corpus(spec, &corpus, seed)
    }

    pub fn from_corpus(spec: NGramSuiteSpec, corpus: &Corpus, seed: u64) -> Result<Self> {
        spec.validate()?;
        let data_seed = spec.data_seed.unwrap_or(seed);
        let n = spec.chars_per_task;
        let orders = spec.max_order + 1;
        let mut streams: Vec<Option<Vec<u8>>> = vec![None; orders];

        if let Some(dir) = &spec.cache_dir {
            fs::create_dir_all(dir)?;
            let manifest = Manifest {
                corpus_sha256: corpus.sha256.clone(),
                corpus_chars: corpus.symbols.len(),
                alphabet: corpus.alphabet.chars.clone(),
            };
            let mpath = dir.join(manifest_file_name(&corpus.sha256));
            match fs::read(&mpath) {
                Ok(bytes) => {
                    let cached: Manifest = serde_json::from_slice(&bytes)?;
                    if cached != manifest {
                        return Err(Error::Corpus(format!(
                            "{} disagrees with the corpus",
                            mpath.display()
                        )));
                    }
                }
                Err(_) => write_atomic(&mpath, &serde_json::to_vec_pretty(&manifest)?)?,
            }
            for (order, slot) in streams.iter_mut().enumerate() {
                let path = dir.join(stream_file_name(&corpus.sha256, order, data_seed, n));
                if let Ok(bytes) = fs::read(&path) {
                    if bytes.len() == n
                        && bytes.iter().all(|&c| (c as usize) < corpus.alphabet.len())
                    {
                        *slot = Some(bytes);
                    } else {
                        log::warn!("ignoring malformed cache file {}", path.display());
                    }
                }
            }
        }

        if streams.iter().any(Option::is_none) {
            let model = NGramModel::fit(
                &corpus.symbols,
                corpus.alphabet.len(),
                spec.max_order,
                spec.discount,
            )?;
            for (order, slot) in streams.iter_mut().enumerate() {
                if slot.is_some() {
                    continue;
                }
                let mut r = rng::stream(data_seed, &[GEN_TAG, order as u64]);
                let stream = model.generate(order, &corpus.symbols, n, &mut r);
                if let Some(dir) = &spec.cache_dir {
                    let path = dir.join(stream_file_name(&corpus.sha256, order, data_seed, n));
                    write_atomic(&path, &stream)?;
                }
                *slot = Some(stream);
            }
        }

        let n_seq = n / spec.seq_len;
        let holdout = ((n_seq as f64 * spec.holdout_fraction).ceil() as usize).max(1);
        if holdout >= n_seq {
            return Err(Error::Config(
                "no training sequences left after the holdout split".into(),
            ));
        }
        Ok(Self {
            alphabet: corpus.alphabet.clone(),
            streams: streams.into_iter().map(Option::unwrap).collect(),
            n_train: n_seq - holdout,
            n_seq,
            spec,
        })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn stream(&self, order: usize) -> &[u8] {
        &self.streams[order]
    }

    pub fn train_sequences(&self) -> usize {
        self.n_train
    }

    pub fn eval_sequences(&self) -> usize {
        self.n_seq - self.n_train
    }

    fn sequence(&self, order: usize, index: usize) -> &[u8] {
        let l = self.spec.seq_len;
        &self.streams[order][index * l..(index + 1) * l]
    }

    fn epoch_order(&self, seed: u64, task: usize, epoch: u64) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.n_train).collect();
        perm.shuffle(&mut rng::stream(seed, &[SAMPLE_TAG, 0, task as u64, epoch]));
        perm
    }

    fn to_batch(&self, task: usize, seqs: &[&[u8]]) -> Batch {
        let a = self.alphabet.len();
        let l = self.spec.seq_len;
        let mut batch = Batch::zeros(task, vec![l; seqs.len()], a, a);
        for (b, seq) in seqs.iter().enumerate() {
            for t in 0..l {
                if t > 0 {
                    batch.input_mut(t, b)[seq[t - 1] as usize] = 1.0;
                }
                batch.target_mut(t, b)[seq[t] as usize] = 1.0;
                if t >= self.spec.burn_in {
                    batch.set_mask(t, b, 1.0);
                }
            }
        }
        batch
    }
}

impl TaskSuite for NGramSuite {
    fn num_tasks(&self) -> usize {
        self.streams.len()
    }

    fn task_name(&self, task: usize) -> String {
        format!("order{task}")
    }

    fn input_size(&self) -> usize {
        self.alphabet.len()
    }

    fn output_size(&self) -> usize {
        self.alphabet.len()
    }

    fn head(&self) -> Head {
        Head::Softmax
    }

    fn sample(&self, key: DrawKey, batch_size: usize, seed: u64) -> Result<Batch> {
        if key.task >= self.num_tasks() {
            return Err(Error::TaskOutOfRange {
                task: format!("order {} (max {})", key.task, self.spec.max_order),
            });
        }
        let n_train = self.n_train as u64;
        let indices: Vec<usize> = match key.stream {
            Stream::Train => {
                // Without replacement within an epoch over the train split.
                let first = key.index * batch_size as u64;
                let mut perm: Option<(u64, Vec<usize>)> = None;
                (first..first + batch_size as u64)
                    .map(|p| {
                        let epoch = p / n_train;
                        if p % n_train == 0 && epoch > 0 {
                            log::info!(
                                "order {} train split exhausted; reshuffling for epoch {epoch}",
                                key.task
                            );
                        }
                        if perm.as_ref().map(|(e, _)| *e) != Some(epoch) {
                            perm = Some((epoch, self.epoch_order(seed, key.task, epoch)));
                        }
                        perm.as_ref().unwrap().1[(p % n_train) as usize]
                    })
                    .collect()
            }
            Stream::Extra => {
                let mut r = rng::stream(seed, &[SAMPLE_TAG, 1, key.task as u64, key.index]);
                (0..batch_size).map(|_| r.gen_range(0..self.n_train)).collect()
            }
            Stream::Eval => {
                let mut r = rng::stream(seed, &[SAMPLE_TAG, 2, key.task as u64, key.index]);
                (0..batch_size)
                    .map(|_| r.gen_range(self.n_train..self.n_seq))
                    .collect()
            }
        };
        let seqs: Vec<&[u8]> = indices.iter().map(|&i| self.sequence(key.task, i)).collect();
        Ok(self.to_batch(key.task, &seqs))
    }
}
