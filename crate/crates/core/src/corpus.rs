//! Corpora: loading, tokenization, splitting and the perturbation suite.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Environment variable that overrides where the stopword list is read from.
pub const DATA_ENV: &str = "DIVERGELAB_DATA";
/// File name of the stopword list inside a data directory.
pub const STOPWORDS_FILE: &str = "stopwords_en.txt";

const EMBEDDED_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

/// An ordered collection of documents with unique, non-empty ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    docs: Vec<Document>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if d.id.is_empty() {
                return Err(Error::Validation(format!("document {i} has an empty id")));
            }
            if !seen.insert(d.id.as_str()) {
                return Err(Error::Validation(format!("duplicate document id {:?}", d.id)));
            }
        }
        Ok(Corpus { docs })
    }

    /// Build a corpus from bare texts, numbering ids `prefix0`, `prefix1`, ...
    pub fn from_texts<S: Into<String>>(prefix: &str, texts: impl IntoIterator<Item = S>) -> Self {
        let docs = texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| Document {
                id: format!("{prefix}{i}"),
                text: t.into(),
            })
            .collect();
        Corpus { docs }
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.docs.iter().map(|d| d.id.clone()).collect()
    }

    pub fn tokenize(&self, scheme: Scheme) -> Vec<TokenizedDoc> {
        self.docs
            .iter()
            .map(|d| TokenizedDoc {
                doc_id: d.id.clone(),
                tokens: tokenize(&d.text, scheme),
                scheme,
            })
            .collect()
    }

    /// Concatenate two corpora. Ids must stay unique.
    pub fn concat(&self, other: &Corpus) -> Result<Corpus> {
        let mut docs = self.docs.clone();
        docs.extend(other.docs.iter().cloned());
        Corpus::new(docs)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for d in &self.docs {
            let line = serde_json::to_string(d).expect("document serializes");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    Jsonl,
    PlainDir,
}

impl FromStr for CorpusFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "plain-dir" => Ok(CorpusFormat::PlainDir),
            other => Err(Error::config("format", format!("unknown corpus format {other:?}"))),
        }
    }
}

/// Load a corpus. JSONL: one `{"id","text"}` object per non-blank line, extra
/// fields ignored. Plain directory: one document per regular file, ordered by
/// file name, id = file name.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    match format {
        CorpusFormat::Jsonl => {
            let docs = read_jsonl_records::<Document>(path)?;
            Corpus::new(docs)
        }
        CorpusFormat::PlainDir => {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            let mut docs = Vec::with_capacity(entries.len());
            for p in entries {
                let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                let id = p
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                docs.push(Document { id, text });
            }
            Corpus::new(docs)
        }
    }
}

/// Parse every non-blank line of a JSONL file as `T`, reporting `path:line` on failure.
pub(crate) fn read_jsonl_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("{}:{}", path.display(), i + 1), e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Whitespace,
    #[default]
    UnicodeWord,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Whitespace => "whitespace",
            Scheme::UnicodeWord => "unicode-word",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(Scheme::Whitespace),
            "unicode-word" => Ok(Scheme::UnicodeWord),
            other => Err(Error::config("scheme", format!("unknown tokenization scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDoc {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub scheme: Scheme,
}

impl TokenizedDoc {
    pub fn new(doc_id: impl Into<String>, tokens: Vec<String>, scheme: Scheme) -> Self {
        TokenizedDoc {
            doc_id: doc_id.into(),
            tokens,
            scheme,
        }
    }

    /// Tokens joined by single spaces.
    pub fn normalized_text(&self) -> String {
        self.tokens.join(" ")
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Split text into tokens.
///
/// `whitespace` splits on Unicode whitespace. `unicode-word` additionally
/// separates every non-word character into its own token, keeping apostrophes
/// that sit between two word characters ("don't" stays whole).
pub fn tokenize(text: &str, scheme: Scheme) -> Vec<String> {
    match scheme {
        Scheme::Whitespace => text.split_whitespace().map(str::to_owned).collect(),
        Scheme::UnicodeWord => {
            let chars: Vec<char> = text.chars().collect();
            let mut tokens = Vec::new();
            let mut word = String::new();
            for (i, &c) in chars.iter().enumerate() {
                let inner_apostrophe = is_apostrophe(c)
                    && !word.is_empty()
                    && chars.get(i + 1).is_some_and(|&n| is_word_char(n));
                if is_word_char(c) || inner_apostrophe {
                    word.push(c);
                    continue;
                }
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                if !c.is_whitespace() {
                    tokens.push(c.to_string());
                }
            }
            if !word.is_empty() {
                tokens.push(word);
            }
            tokens
        }
    }
}

/// True when the token is made only of punctuation or symbol characters.
pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| !c.is_alphanumeric() && !c.is_whitespace())
}

// ---------------------------------------------------------------------------
// Stopwords
// ---------------------------------------------------------------------------

/// A lowercase stopword set. Matching is case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    /// The bundled 179-word English list.
    pub fn english() -> Self {
        Self::parse(EMBEDDED_STOPWORDS)
    }

    pub fn parse(contents: &str) -> Self {
        let words = contents
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        Stopwords { words }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let contents = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&contents))
    }

    /// Resolve the list: explicit path, then `$DIVERGELAB_DATA` (a file, or a
    /// directory holding `stopwords_en.txt`), then the bundled list.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        if let Some(p) = explicit {
            return Self::from_file(p);
        }
        if let Some(dir) = std::env::var_os(DATA_ENV) {
            let p = PathBuf::from(dir);
            let file = if p.is_dir() { p.join(STOPWORDS_FILE) } else { p };
            return Self::from_file(&file);
        }
        Ok(Self::english())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(&token.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Self::english()
    }
}

// ---------------------------------------------------------------------------
// Perturbations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    None,
    TruncateThird,
    RemoveArticles,
    RemoveStopwords,
    SwapFirstHalves,
    PermuteWords,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 6] = [
        PerturbationKind::None,
        PerturbationKind::TruncateThird,
        PerturbationKind::RemoveArticles,
        PerturbationKind::RemoveStopwords,
        PerturbationKind::SwapFirstHalves,
        PerturbationKind::PermuteWords,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::None => "none",
            PerturbationKind::TruncateThird => "truncate_third",
            PerturbationKind::RemoveArticles => "remove_articles",
            PerturbationKind::RemoveStopwords => "remove_stopwords",
            PerturbationKind::SwapFirstHalves => "swap_first_halves",
            PerturbationKind::PermuteWords => "permute_words",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PerturbationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("kind", format!("unknown perturbation kind {s:?}")))
    }
}

#[derive(Debug, Clone, Default)]
pub struct PerturbOptions {
    pub scheme: Scheme,
    pub stopwords: Stopwords,
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

fn is_article(token: &str) -> bool {
    ARTICLES.iter().any(|a| token.eq_ignore_ascii_case(a))
}

fn is_sentence_end(token: &str) -> bool {
    matches!(token, "." | "!" | "?")
}

/// Number of tokens kept by `truncate_third`.
pub fn truncated_len(n: usize) -> usize {
    (n / 3).max(1).min(n)
}

/// Index at which a token sequence is split into first and second half.
///
/// Candidates are positions right after a sentence-ending token, excluding the
/// end of the document. The candidate nearest to `n/2` wins, ties go to the
/// earlier one; with no candidate the split is at `floor(n/2)`.
pub fn half_split_index(tokens: &[String]) -> usize {
    let n = tokens.len();
    let mid = n as f64 / 2.0;
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in tokens.iter().enumerate() {
        let b = i + 1;
        if b >= n || !is_sentence_end(t) {
            continue;
        }
        let d = (b as f64 - mid).abs();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((b, d));
        }
    }
    best.map_or(n / 2, |(b, _)| b)
}

/// Apply one perturbation to every document of `corpus`.
///
/// Perturbed documents are re-emitted as their tokens joined with single
/// spaces; `None` returns the corpus unchanged.
pub fn perturb(corpus: &Corpus, kind: PerturbationKind, seed: u64, opts: &PerturbOptions) -> Result<Corpus> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus to perturb"));
    }
    if kind == PerturbationKind::None {
        return Ok(corpus.clone());
    }
    let tokenized = corpus.tokenize(opts.scheme);
    let new_tokens: Vec<Vec<String>> = match kind {
        PerturbationKind::None => unreachable!(),
        PerturbationKind::TruncateThird => tokenized
            .into_iter()
            .map(|d| {
                let keep = truncated_len(d.tokens.len());
                d.tokens[..keep].to_vec()
            })
            .collect(),
        PerturbationKind::RemoveArticles => tokenized
            .into_iter()
            .map(|d| d.tokens.into_iter().filter(|t| !is_article(t)).collect())
            .collect(),
        PerturbationKind::RemoveStopwords => tokenized
            .into_iter()
            .map(|d| d.tokens.into_iter().filter(|t| !opts.stopwords.contains(t)).collect())
            .collect(),
        PerturbationKind::PermuteWords => {
            let base = seed::derive(seed, seed::stream::PERTURB);
            tokenized
                .into_par_iter()
                .enumerate()
                .map(|(i, d)| {
                    let mut toks = d.tokens;
                    toks.shuffle(&mut seed::rng(seed::derive(base, i as u64)));
                    toks
                })
                .collect()
        }
        PerturbationKind::SwapFirstHalves => {
            if corpus.len() < 2 {
                return Err(Error::Validation(
                    "swap_first_halves needs at least 2 documents".into(),
                ));
            }
            let (firsts, seconds): (Vec<Vec<String>>, Vec<Vec<String>>) = tokenized
                .into_iter()
                .map(|d| {
                    let mut toks = d.tokens;
                    let second = toks.split_off(half_split_index(&toks));
                    (toks, second)
                })
                .unzip();
            let mut order: Vec<usize> = (0..firsts.len()).collect();
            order.shuffle(&mut seed::rng(seed::derive(seed, seed::stream::SWAP)));
            order
                .iter()
                .zip(seconds)
                .map(|(&src, second)| {
                    let mut toks = firsts[src].clone();
                    toks.extend(second);
                    toks
                })
                .collect()
        }
    };
    let docs = corpus
        .docs
        .iter()
        .zip(new_tokens)
        .map(|(d, toks)| Document {
            id: d.id.clone(),
            text: toks.join(" "),
        })
        .collect();
    Ok(Corpus { docs })
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// First `ceil(fraction * N)` documents vs. the rest.
    Positional,
    /// Seeded shuffle, then positional.
    Shuffled(u64),
}

pub fn split_corpus(corpus: &Corpus, fraction: f64, mode: SplitMode) -> Result<(Corpus, Corpus)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config("fraction", format!("{fraction} is not in (0, 1)")));
    }
    let n = corpus.len();
    let cut = (fraction * n as f64).ceil() as usize;
    if cut == 0 || cut >= n {
        return Err(Error::Validation(format!(
            "fraction {fraction} of {n} documents leaves an empty part"
        )));
    }
    let mut docs = corpus.docs.clone();
    if let SplitMode::Shuffled(s) = mode {
        docs.shuffle(&mut seed::rng(seed::derive(s, seed::stream::SPLIT)));
    }
    let rest = docs.split_off(cut);
    Ok((Corpus { docs }, Corpus { docs: rest }))
}
