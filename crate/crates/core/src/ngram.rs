//! Interpolated Kneser-Ney n-gram language model.
//!
//! The highest order uses raw counts; every lower order uses continuation
//! counts (number of distinct left extensions). Each level interpolates with
//! the next lower one:
//!
//! ```text
//! P(w | h) = max(c(h w) - D, 0) / c(h) + D * N1+(h .) / c(h) * P(w | h')
//! ```
//!
//! and the unigram level interpolates with a uniform distribution over the
//! predictable vocabulary (training tokens, `<unk>`, `</s>`), so every
//! in-vocabulary and out-of-vocabulary token has positive probability.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::TokenizedDoc;
use crate::error::{Error, Result};

pub const UNK: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
const RESERVED: [&str; 3] = ["<unk>", "<s>", "</s>"];

const MAGIC: &[u8; 4] = b"KNG1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnConfig {
    pub order: usize,
    /// Absolute discount for orders >= 2, in (0, 1).
    pub discount: f64,
    /// Discount of the unigram level towards the uniform floor, in [0, 1).
    /// Zero removes the floor, leaving unseen tokens with probability zero.
    pub unigram_discount: f64,
    /// Pad documents with `order - 1` `<s>` and one `</s>`.
    pub boundaries: bool,
}

impl Default for KnConfig {
    fn default() -> Self {
        KnConfig {
            order: 5,
            discount: 0.75,
            unigram_discount: 0.75,
            boundaries: true,
        }
    }
}

impl KnConfig {
    pub fn with_order(order: usize) -> Self {
        KnConfig {
            order,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::config("order", "must be at least 1"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::config("discount", format!("{} is not in (0, 1)", self.discount)));
        }
        if !(self.unigram_discount >= 0.0 && self.unigram_discount < 1.0) {
            return Err(Error::config(
                "unigram_discount",
                format!("{} is not in [0, 1)", self.unigram_discount),
            ));
        }
        Ok(())
    }

    fn discount_for(&self, level: usize) -> f64 {
        if level == 1 {
            self.unigram_discount
        } else {
            self.discount
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct ContextStats {
    total: u64,
    distinct: u64,
}

type CountTable = HashMap<Vec<u32>, u64>;

#[derive(Debug, Clone)]
pub struct NGramModel {
    config: KnConfig,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    /// `counts[k - 1]`: n-grams of length k mapped to their KN count.
    counts: Vec<CountTable>,
    /// `contexts[k - 1]`: per (k-1)-gram context, totals over `counts[k - 1]`.
    contexts: Vec<HashMap<Vec<u32>, ContextStats>>,
    fingerprint: [u8; 32],
}

impl PartialEq for NGramModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.vocab == other.vocab
            && self.counts == other.counts
            && self.fingerprint == other.fingerprint
    }
}

/// Sorted set of every token appearing in the given documents.
pub fn vocabulary<'a>(docs: impl IntoIterator<Item = &'a TokenizedDoc>) -> BTreeSet<String> {
    docs.into_iter()
        .flat_map(|d| d.tokens.iter().cloned())
        .collect()
}

/// Train on `docs`; the vocabulary is the training tokens.
pub fn train_kn(docs: &[TokenizedDoc], config: KnConfig) -> Result<NGramModel> {
    let vocab = vocabulary(docs);
    train_kn_with_vocab(docs, config, &vocab)
}

/// Train on `docs` with an explicit closed vocabulary (training tokens are
/// added to it). Two models sharing a vocabulary give every token of either
/// corpus a finite score.
pub fn train_kn_with_vocab(
    docs: &[TokenizedDoc],
    config: KnConfig,
    vocab: &BTreeSet<String>,
) -> Result<NGramModel> {
    config.validate()?;
    if docs.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let mut words: BTreeSet<&str> = vocab.iter().map(String::as_str).collect();
    for d in docs {
        words.extend(d.tokens.iter().map(String::as_str));
    }
    // literal reserved strings in text are ordinary unknown tokens
    words.retain(|w| !RESERVED.contains(w));
    let mut vocab_list: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    vocab_list.extend(words.into_iter().map(str::to_owned));
    let index = build_index(&vocab_list);

    let n = config.order;
    let mut raw: Vec<CountTable> = vec![HashMap::new(); n];
    let mut hasher = Sha256::new();
    hasher.update(config_bytes(&config));
    for d in docs {
        let seq = encode(&index, &d.tokens, &config);
        hasher.update((seq.len() as u64).to_le_bytes());
        for t in &seq {
            hasher.update(t.to_le_bytes());
        }
        let start = if config.boundaries { n - 1 } else { 0 };
        for pos in start..seq.len() {
            for k in 1..=n.min(pos + 1) {
                *raw[k - 1].entry(seq[pos + 1 - k..=pos].to_vec()).or_insert(0) += 1;
            }
        }
    }
    for w in &vocab_list {
        hasher.update((w.len() as u64).to_le_bytes());
        hasher.update(w.as_bytes());
    }

    // continuation counts for every order below the highest
    let mut counts: Vec<CountTable> = vec![HashMap::new(); n];
    for k in (1..n).rev() {
        let mut cont: CountTable = HashMap::new();
        for key in raw[k].keys() {
            *cont.entry(key[1..].to_vec()).or_insert(0) += 1;
        }
        counts[k - 1] = cont;
    }
    counts[n - 1] = std::mem::take(&mut raw[n - 1]);

    let contexts = context_stats(&counts);
    Ok(NGramModel {
        config,
        vocab: vocab_list,
        index,
        counts,
        contexts,
        fingerprint: hasher.finalize().into(),
    })
}

fn build_index(vocab: &[String]) -> HashMap<String, u32> {
    vocab
        .iter()
        .enumerate()
        .skip(RESERVED.len())
        .map(|(i, w)| (w.clone(), i as u32))
        .collect()
}

fn context_stats(counts: &[CountTable]) -> Vec<HashMap<Vec<u32>, ContextStats>> {
    counts
        .iter()
        .map(|table| {
            let mut ctx: HashMap<Vec<u32>, ContextStats> = HashMap::new();
            for (key, &c) in table {
                let s = ctx.entry(key[..key.len() - 1].to_vec()).or_default();
                s.total += c;
                s.distinct += 1;
            }
            ctx
        })
        .collect()
}

fn config_bytes(c: &KnConfig) -> Vec<u8> {
    let mut b = Vec::with_capacity(21);
    b.extend((c.order as u32).to_le_bytes());
    b.extend(c.discount.to_le_bytes());
    b.extend(c.unigram_discount.to_le_bytes());
    b.push(c.boundaries as u8);
    b
}

fn encode(index: &HashMap<String, u32>, tokens: &[String], config: &KnConfig) -> Vec<u32> {
    let pad = if config.boundaries { config.order - 1 } else { 0 };
    let mut seq = Vec::with_capacity(tokens.len() + pad + 1);
    seq.extend(std::iter::repeat_n(BOS, pad));
    seq.extend(tokens.iter().map(|t| index.get(t).copied().unwrap_or(UNK)));
    if config.boundaries {
        seq.push(EOS);
    }
    seq
}

impl NGramModel {
    pub fn config(&self) -> &KnConfig {
        &self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }

    pub fn fingerprint_hex(&self) -> String {
        self.fingerprint.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Vocabulary including the reserved `<unk>`, `<s>`, `</s>` entries.
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Id of a token; unknown tokens map to `<unk>`.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    /// Ids that can be predicted: everything except `<s>`.
    pub fn predictable_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.vocab.len() as u32).filter(|&i| i != BOS)
    }

    fn predictable_len(&self) -> usize {
        self.vocab.len() - 1
    }

    /// Conditional probability of `token` given `context` ids (most recent
    /// last). Longer contexts are cut to `order - 1`, shorter ones are left
    /// padded with `<s>`.
    pub fn prob_ids(&self, context: &[u32], token: u32) -> f64 {
        let h = self.config.order - 1;
        let mut ctx = Vec::with_capacity(h + 1);
        if context.len() >= h {
            ctx.extend_from_slice(&context[context.len() - h..]);
        } else {
            ctx.extend(std::iter::repeat_n(BOS, h - context.len()));
            ctx.extend_from_slice(context);
        }
        self.interpolated(&ctx, token)
    }

    /// Conditional probability by token strings. The reserved names
    /// `<unk>`, `<s>` and `</s>` refer to the special symbols.
    pub fn prob(&self, context: &[&str], token: &str) -> f64 {
        let query = |t: &str| match RESERVED.iter().position(|r| *r == t) {
            Some(i) => i as u32,
            None => self.id(t),
        };
        let ids: Vec<u32> = context.iter().map(|t| query(t)).collect();
        self.prob_ids(&ids, query(token))
    }

    fn interpolated(&self, ctx: &[u32], token: u32) -> f64 {
        let mut p = 1.0 / self.predictable_len() as f64;
        let mut key = Vec::with_capacity(ctx.len() + 1);
        for level in 1..=ctx.len() + 1 {
            let h = &ctx[ctx.len() + 1 - level..];
            let Some(stats) = self.contexts[level - 1].get(h) else {
                continue;
            };
            if stats.total == 0 {
                continue;
            }
            key.clear();
            key.extend_from_slice(h);
            key.push(token);
            let c = self.counts[level - 1].get(key.as_slice()).copied().unwrap_or(0) as f64;
            let d = self.config.discount_for(level);
            let total = stats.total as f64;
            p = (c - d).max(0.0) / total + d * stats.distinct as f64 / total * p;
        }
        p
    }

    /// Log-probability of a document in nats, including `</s>` when the model
    /// uses boundaries.
    pub fn log_prob(&self, doc: &TokenizedDoc) -> f64 {
        self.log_prob_tokens(&doc.tokens)
    }

    pub fn log_prob_tokens(&self, tokens: &[String]) -> f64 {
        let seq = encode(&self.index, tokens, &self.config);
        let h = self.config.order - 1;
        let start = if self.config.boundaries { h } else { 0 };
        let mut ctx = vec![BOS; h];
        let mut total = 0.0;
        for pos in start..seq.len() {
            ctx.clear();
            let from = pos.saturating_sub(h);
            ctx.extend(std::iter::repeat_n(BOS, h - (pos - from)));
            ctx.extend_from_slice(&seq[from..pos]);
            total += self.interpolated(&ctx, seq[pos]).ln();
        }
        total
    }

    /// Mean negative log-probability per document.
    pub fn corpus_cross_entropy(&self, docs: &[TokenizedDoc]) -> Result<f64> {
        if docs.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        let sum: f64 = docs.iter().map(|d| self.log_prob(d)).sum();
        Ok(-sum / docs.len() as f64)
    }

    // -- serialization ------------------------------------------------------

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend(FORMAT_VERSION.to_le_bytes());
        out.extend(config_bytes(&self.config));
        out.extend_from_slice(&self.fingerprint);
        out.extend((self.vocab.len() as u32).to_le_bytes());
        for w in &self.vocab {
            out.extend((w.len() as u32).to_le_bytes());
            out.extend_from_slice(w.as_bytes());
        }
        for table in &self.counts {
            let mut entries: Vec<(&Vec<u32>, &u64)> = table.iter().collect();
            entries.sort();
            out.extend((entries.len() as u64).to_le_bytes());
            for (key, &c) in entries {
                for id in key {
                    out.extend(id.to_le_bytes());
                }
                out.extend(c.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::parse("KNG1 header", "bad magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::parse("KNG1 header", format!("unsupported version {version}")));
        }
        let config = KnConfig {
            order: r.u32()? as usize,
            discount: f64::from_le_bytes(r.take(8)?.try_into().unwrap()),
            unigram_discount: f64::from_le_bytes(r.take(8)?.try_into().unwrap()),
            boundaries: r.take(1)?[0] != 0,
        };
        config.validate()?;
        let fingerprint: [u8; 32] = r.take(32)?.try_into().unwrap();
        let vocab_len = r.u32()? as usize;
        if vocab_len < RESERVED.len() {
            return Err(Error::parse("KNG1 vocab", "missing reserved entries"));
        }
        let mut vocab = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            let len = r.u32()? as usize;
            let s = std::str::from_utf8(r.take(len)?)
                .map_err(|e| Error::parse("KNG1 vocab", e.to_string()))?;
            vocab.push(s.to_owned());
        }
        let mut counts = Vec::with_capacity(config.order);
        for k in 1..=config.order {
            let entries = r.u64()? as usize;
            let mut table = HashMap::with_capacity(entries);
            for _ in 0..entries {
                let mut key = Vec::with_capacity(k);
                for _ in 0..k {
                    let id = r.u32()?;
                    if id as usize >= vocab_len {
                        return Err(Error::parse("KNG1 counts", format!("id {id} out of range")));
                    }
                    key.push(id);
                }
                table.insert(key, r.u64()?);
            }
            counts.push(table);
        }
        if r.pos != bytes.len() {
            return Err(Error::parse("KNG1", format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let index = build_index(&vocab);
        let contexts = context_stats(&counts);
        Ok(NGramModel {
            config,
            vocab,
            index,
            counts,
            contexts,
            fingerprint,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::parse(
                "KNG1",
                format!("truncated: need {} bytes at offset {}, have {}", n, self.pos, self.buf.len()),
            )
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
