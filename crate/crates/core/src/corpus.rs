//! Vocabularies, paired bag-of-words documents, and the JSON-lines corpus format.
//!
//! A corpus line looks like
//!
//! ```text
//! {"id":"v001","sensory":{"3":2,"17":1},"caption":["parade","music"],"category":"parade"}
//! ```
//!
//! `sensory` maps decimal indices into the sensory vocabulary to positive
//! counts, `caption` lists text-vocabulary tokens in order.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Bidirectional token ↔ index table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        Self::from_lines(tokens.into_iter().enumerate().map(|(i, t)| (i + 1, t)), "<memory>")
    }

    fn from_lines(lines: impl Iterator<Item = (usize, String)>, origin: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut index = HashMap::new();
        let mut first_line: HashMap<String, usize> = HashMap::new();
        for (line, token) in lines {
            if token.is_empty() {
                return Err(Error::parse(origin, line, "empty token"));
            }
            if token.chars().any(char::is_whitespace) {
                return Err(Error::parse(origin, line, format!("token {token:?} contains whitespace")));
            }
            if let Some(prev) = first_line.get(&token) {
                return Err(Error::parse(
                    origin,
                    line,
                    format!("duplicate token {token:?} (lines {prev} and {line})"),
                ));
            }
            first_line.insert(token.clone(), line);
            index.insert(token.clone(), tokens.len());
            tokens.push(token);
        }
        if tokens.is_empty() {
            return Err(Error::InvalidData(format!("{origin}: vocabulary is empty")));
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Reads one token per line; line `i` (zero-based) becomes index `i`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        if body.is_empty() {
            return Err(Error::InvalidData(format!("{origin}: vocabulary is empty")));
        }
        Self::from_lines(
            body.split('\n').enumerate().map(|(i, t)| (i + 1, t.to_string())),
            origin,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::new();
        for t in &self.tokens {
            text.push_str(t);
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Set of lowercase words removed from captions and queries.
#[derive(Debug, Clone, Default)]
pub struct Stoplist(HashSet<String>);

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

impl Stoplist {
    pub fn empty() -> Self {
        Stoplist(HashSet::new())
    }

    /// The bundled English list.
    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS, "<bundled>").expect("bundled stop-word list is valid")
    }

    /// Same file format as a vocabulary: one word per line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let vocab = Vocabulary::load(path)?;
        Ok(Self::from_words(vocab.tokens))
    }

    fn parse(text: &str, origin: &str) -> Result<Self> {
        Ok(Self::from_words(Vocabulary::parse(text, origin)?.tokens))
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Stoplist(words.into_iter().map(|w| w.as_ref().to_lowercase()).collect())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Result of [`tokenize_caption`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenizedText {
    /// In-vocabulary word indices in original order.
    pub indices: Vec<usize>,
    /// Tokens removed by the stoplist, in order of appearance.
    pub stopped: Vec<String>,
    /// Tokens missing from the vocabulary, in order of appearance.
    pub oov: Vec<String>,
}

impl TokenizedText {
    pub fn dropped_count(&self) -> usize {
        self.oov.len()
    }

    pub fn stopped_count(&self) -> usize {
        self.stopped.len()
    }
}

/// Lowercases, splits on every non-alphanumeric character, removes stop-words
/// and drops out-of-vocabulary tokens (recording them).
pub fn tokenize_caption(text: &str, vocab: &Vocabulary, stoplist: &Stoplist) -> TokenizedText {
    let lowered = text.to_lowercase();
    let mut out = TokenizedText::default();
    for token in lowered.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        if stoplist.contains(token) {
            out.stopped.push(token.to_string());
        } else if let Some(i) = vocab.index_of(token) {
            out.indices.push(i);
        } else {
            out.oov.push(token.to_string());
        }
    }
    out
}

/// Sparse count vector with strictly increasing word indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BowVector {
    entries: Vec<(usize, u32)>,
    total: u64,
}

impl BowVector {
    pub fn new(entries: Vec<(usize, u32)>) -> Result<Self> {
        for pair in entries.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(Error::InvalidData(format!(
                    "bag-of-words indices not strictly increasing ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        if let Some((w, _)) = entries.iter().find(|(_, c)| *c == 0) {
            return Err(Error::InvalidData(format!("zero count for word {w}")));
        }
        let total = entries.iter().map(|&(_, c)| u64::from(c)).sum();
        Ok(BowVector { entries, total })
    }

    /// Aggregates a sequence of word occurrences.
    pub fn from_occurrences(words: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = std::collections::BTreeMap::new();
        for w in words {
            *counts.entry(w).or_insert(0u32) += 1;
        }
        let entries: Vec<_> = counts.into_iter().collect();
        let total = entries.iter().map(|&(_, c)| u64::from(c)).sum();
        BowVector { entries, total }
    }

    pub fn entries(&self) -> &[(usize, u32)] {
        &self.entries
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|&(w, _)| w)
    }

    /// One word index per occurrence, in index order.
    pub fn expand(&self) -> Vec<usize> {
        self.entries
            .iter()
            .flat_map(|&(w, c)| std::iter::repeat_n(w, c as usize))
            .collect()
    }
}

/// A paired document: sensory counts plus an ordered caption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sensory: BowVector,
    pub caption: Vec<usize>,
    pub category: Option<String>,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        sensory: BowVector,
        caption: Vec<usize>,
        category: Option<String>,
    ) -> Result<Self> {
        let id = id.into();
        if sensory.total() == 0 {
            return Err(Error::InvalidData(format!("document {id:?} has no sensory words")));
        }
        Ok(Document {
            id,
            sensory,
            caption,
            category,
        })
    }

    fn check_ranges(&self, sensory_size: usize, text_size: usize) -> Result<()> {
        if let Some(w) = self.sensory.max_index().filter(|&w| w >= sensory_size) {
            return Err(Error::InvalidData(format!(
                "document {:?}: sensory index {w} out of range (vocabulary size {sensory_size})",
                self.id
            )));
        }
        if let Some(w) = self.caption.iter().copied().find(|&w| w >= text_size) {
            return Err(Error::InvalidData(format!(
                "document {:?}: caption index {w} out of range (vocabulary size {text_size})",
                self.id
            )));
        }
        Ok(())
    }
}

/// Ordered documents sharing one pair of vocabularies.
#[derive(Debug, Clone)]
pub struct Corpus {
    documents: Vec<Document>,
    sensory_vocab: Arc<Vocabulary>,
    text_vocab: Arc<Vocabulary>,
}

impl Corpus {
    pub fn new(
        documents: Vec<Document>,
        sensory_vocab: Arc<Vocabulary>,
        text_vocab: Arc<Vocabulary>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::InvalidData(format!("duplicate document id {:?}", doc.id)));
            }
            doc.check_ranges(sensory_vocab.len(), text_vocab.len())?;
        }
        Ok(Corpus {
            documents,
            sensory_vocab,
            text_vocab,
        })
    }

    pub fn load(
        path: impl AsRef<Path>,
        sensory_vocab: Arc<Vocabulary>,
        text_vocab: Arc<Vocabulary>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, sensory_vocab, text_vocab)
    }

    pub fn parse(
        text: &str,
        origin: &Path,
        sensory_vocab: Arc<Vocabulary>,
        text_vocab: Arc<Vocabulary>,
    ) -> Result<Self> {
        let mut documents = Vec::new();
        let mut seen = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let doc = parse_document_line(line, &sensory_vocab, &text_vocab)
                .map_err(|msg| Error::parse(origin, line_no, msg))?;
            if let Some(prev) = seen.insert(doc.id.clone(), line_no) {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!("duplicate document id {:?} (first on line {prev})", doc.id),
                ));
            }
            documents.push(doc);
        }
        Ok(Corpus {
            documents,
            sensory_vocab,
            text_vocab,
        })
    }

    /// Canonical JSON-lines rendering: numeric key order, compact separators.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        for doc in &self.documents {
            let line = DocumentLine {
                id: &doc.id,
                sensory: SensoryMap(doc.sensory.entries()),
                caption: doc
                    .caption
                    .iter()
                    .map(|&w| self.text_vocab.token(w).expect("caption index validated"))
                    .collect(),
                category: doc.category.as_deref(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn sensory_vocab(&self) -> &Arc<Vocabulary> {
        &self.sensory_vocab
    }

    pub fn text_vocab(&self) -> &Arc<Vocabulary> {
        &self.text_vocab
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    /// Deterministic disjoint (train, test) partition. The test part holds
    /// `round(len × test_fraction)` documents; each part keeps corpus order.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
        if self.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "cannot split a corpus of {} document(s)",
                self.len()
            )));
        }
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test fraction {test_fraction} outside (0, 1)"
            )));
        }
        let n_test = (self.len() as f64 * test_fraction).round() as usize;
        if n_test == 0 || n_test == self.len() {
            return Err(Error::InvalidArgument(format!(
                "test fraction {test_fraction} leaves an empty part for {} documents",
                self.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut crate::seeded_rng(seed));
        let mut is_test = vec![false; self.len()];
        for &i in &order[..n_test] {
            is_test[i] = true;
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (doc, t) in self.documents.iter().zip(is_test) {
            if t {
                test.push(doc.clone());
            } else {
                train.push(doc.clone());
            }
        }
        let part = |docs| Corpus {
            documents: docs,
            sensory_vocab: Arc::clone(&self.sensory_vocab),
            text_vocab: Arc::clone(&self.text_vocab),
        };
        Ok((part(train), part(test)))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    id: String,
    sensory: RawSensory,
    caption: Vec<String>,
    #[serde(default)]
    category: Option<String>,
}

struct RawSensory(Vec<(String, u64)>);

impl<'de> Deserialize<'de> for RawSensory {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;

        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = RawSensory;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping decimal word indices to positive counts")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<RawSensory, A::Error> {
                let mut entries = Vec::new();
                while let Some(entry) = map.next_entry::<String, u64>()? {
                    entries.push(entry);
                }
                Ok(RawSensory(entries))
            }
        }

        deserializer.deserialize_map(EntriesVisitor)
    }
}

fn parse_document_line(
    line: &str,
    sensory_vocab: &Vocabulary,
    text_vocab: &Vocabulary,
) -> std::result::Result<Document, String> {
    let raw: RawDocument = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let mut entries = Vec::with_capacity(raw.sensory.0.len());
    for (key, count) in raw.sensory.0 {
        let index: usize = key
            .parse()
            .ok()
            .filter(|_| key.bytes().all(|b| b.is_ascii_digit()))
            .ok_or_else(|| format!("sensory key {key:?} is not a decimal index"))?;
        if index >= sensory_vocab.len() {
            return Err(format!(
                "sensory index {index} out of range (vocabulary size {})",
                sensory_vocab.len()
            ));
        }
        if count == 0 {
            return Err(format!("sensory index {index} has count 0"));
        }
        let count = u32::try_from(count).map_err(|_| format!("count {count} too large"))?;
        entries.push((index, count));
    }
    entries.sort_unstable_by_key(|&(w, _)| w);
    if let Some(pair) = entries.windows(2).find(|p| p[0].0 == p[1].0) {
        return Err(format!("sensory index {} listed twice", pair[0].0));
    }
    if entries.is_empty() {
        return Err(format!("document {:?} has an empty sensory vector", raw.id));
    }
    let caption = raw
        .caption
        .iter()
        .map(|t| {
            text_vocab
                .index_of(t)
                .ok_or_else(|| format!("caption token {t:?} not in text vocabulary"))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let sensory = BowVector::new(entries).map_err(|e| e.to_string())?;
    Document::new(raw.id, sensory, caption, raw.category).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct DocumentLine<'a> {
    id: &'a str,
    sensory: SensoryMap<'a>,
    caption: Vec<&'a str>,
    category: Option<&'a str>,
}

struct SensoryMap<'a>(&'a [(usize, u32)]);

impl Serialize for SensoryMap<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (w, c) in self.0 {
            map.serialize_entry(&w.to_string(), c)?;
        }
        map.end()
    }
}
