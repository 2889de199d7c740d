//! Evaluation metrics: annotation perplexity, precision/recall at k, MAP,
//! mean per-word precision/recall, and precision-recall curves.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::indexing::annotation_scores;
use crate::inference::{infer_theta, TrainConfig};
use crate::model::ModelParams;
use crate::ranking::RankedList;

/// Size of the random annotations drawn by the per-word precision fallback.
pub const RANDOM_ANNOTATION_SIZE: usize = 10;

/// `exp(−Σ_i Σ_m ln P(d_m | V_i) / Σ_i M_i)` where each caption holds the
/// words to score (typically the document's own generated annotation).
pub fn perplexity(docs: &[Document], p: &ModelParams, cfg: &TrainConfig) -> Result<f64> {
    if docs.is_empty() {
        return Err(Error::InvalidArgument("perplexity needs at least one document".into()));
    }
    if let Some(d) = docs.iter().find(|d| d.caption.is_empty()) {
        return Err(Error::InvalidData(format!("document {:?} has an empty caption", d.id)));
    }
    p.ensure_strictly_positive()?;
    let per_doc: Vec<f64> = docs
        .par_iter()
        .map(|d| {
            p.check_document(d)?;
            let scores = annotation_scores(&infer_theta(&d.sensory, p, cfg)?, p)?;
            Ok(d.caption.iter().map(|&w| scores[w].ln()).sum())
        })
        .collect::<Result<_>>()?;
    let words: usize = docs.iter().map(|d| d.caption.len()).sum();
    let log_sum: f64 = per_doc.iter().sum();
    finite_perplexity(log_sum, words)
}

fn finite_perplexity(log_sum: f64, words: usize) -> Result<f64> {
    let value = (-log_sum / words as f64).exp();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical(format!("perplexity evaluated to {value}")))
    }
}

/// Which words the perplexity sweep scores at each length L.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptionSource {
    /// The model's own top-L annotation of every test document.
    Generated,
    /// The first L words of each document's reference caption (all of them
    /// when the caption is shorter). Documents without a caption are skipped.
    GroundTruth,
}

/// Perplexity at each annotation length. θ and the word scores are
/// computed once per document and shared across lengths.
pub fn perplexity_sweep(
    test: &Corpus,
    p: &ModelParams,
    cfg: &TrainConfig,
    lengths: &[usize],
    source: CaptionSource,
) -> Result<BTreeMap<usize, f64>> {
    if lengths.is_empty() {
        return Err(Error::InvalidArgument("no annotation lengths given".into()));
    }
    if let Some(&l) = lengths.iter().find(|&&l| l == 0 || l > p.text_size()) {
        return Err(Error::InvalidArgument(format!(
            "annotation length {l} outside 1..={}",
            p.text_size()
        )));
    }
    p.ensure_strictly_positive()?;
    let docs: Vec<&Document> = match source {
        CaptionSource::Generated => test.documents().iter().collect(),
        CaptionSource::GroundTruth => {
            test.documents().iter().filter(|d| !d.caption.is_empty()).collect()
        }
    };
    if docs.is_empty() {
        return Err(Error::InvalidData("no test documents to evaluate".into()));
    }
    let max_len = *lengths.iter().max().expect("nonempty");
    // Per document: log-probabilities of the first `max_len` scored words.
    let logs: Vec<Vec<f64>> = docs
        .par_iter()
        .map(|d| {
            p.check_document(d)?;
            let scores = annotation_scores(&infer_theta(&d.sensory, p, cfg)?, p)?;
            Ok(match source {
                CaptionSource::Generated => {
                    RankedList::from_scores(scores.into_iter().enumerate())?
                        .cut(max_len, None)
                        .items()
                        .iter()
                        .map(|&(_, s)| s.ln())
                        .collect()
                }
                CaptionSource::GroundTruth => {
                    d.caption.iter().take(max_len).map(|&w| scores[w].ln()).collect()
                }
            })
        })
        .collect::<Result<_>>()?;
    let mut out = BTreeMap::new();
    for &l in lengths {
        let mut log_sum = 0.0;
        let mut words = 0;
        for doc_logs in &logs {
            let take = doc_logs.len().min(l);
            log_sum += doc_logs[..take].iter().sum::<f64>();
            words += take;
        }
        out.insert(l, finite_perplexity(log_sum, words)?);
    }
    Ok(out)
}

fn hits_in_top<Id: Ord>(results: &RankedList<Id>, relevant: &BTreeSet<Id>, k: usize) -> usize {
    results.ids().take(k).filter(|id| relevant.contains(id)).count()
}

/// `(|top-k ∩ relevant| / k, |top-k ∩ relevant| / |relevant|)`.
pub fn precision_recall_at_k<Id: Ord>(
    results: &RankedList<Id>,
    relevant: &BTreeSet<Id>,
    k: usize,
) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be ≥ 1".into()));
    }
    if relevant.is_empty() {
        return Err(Error::InvalidArgument("relevant set is empty".into()));
    }
    let hits = hits_in_top(results, relevant, k) as f64;
    Ok((hits / k as f64, hits / relevant.len() as f64))
}

/// Truncated average precision: the sum of precision@r over relevant hits
/// at ranks r ≤ k, divided by `min(|relevant|, k)`.
pub fn average_precision_at_k<Id: Ord>(
    results: &RankedList<Id>,
    relevant: &BTreeSet<Id>,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be ≥ 1".into()));
    }
    if relevant.is_empty() {
        return Err(Error::InvalidArgument("relevant set is empty".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, id) in results.ids().take(k).enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / relevant.len().min(k) as f64)
}

/// Query string → relevant document ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelevanceJudgments(BTreeMap<String, BTreeSet<String>>);

impl RelevanceJudgments {
    pub fn new(map: BTreeMap<String, BTreeSet<String>>) -> Result<Self> {
        if let Some((q, _)) = map.iter().find(|(_, rel)| rel.is_empty()) {
            return Err(Error::InvalidData(format!("query {q:?} has no relevant documents")));
        }
        Ok(RelevanceJudgments(map))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map: BTreeMap<String, BTreeSet<String>> = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        Self::new(map)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("judgments serialize");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn get(&self, query: &str) -> Option<&BTreeSet<String>> {
        self.0.get(query)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.0.iter().map(|(q, r)| (q.as_str(), r))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Rejects any judged id that is not in `known`.
    pub fn check_ids<'a>(&self, known: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let known: BTreeSet<&str> = known.into_iter().collect();
        for (q, rel) in &self.0 {
            if let Some(id) = rel.iter().find(|id| !known.contains(id.as_str())) {
                return Err(Error::InvalidData(format!(
                    "judgments for query {q:?} reference unknown document {id:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Mean of the per-query truncated average precision.
pub fn map_at_k(
    per_query: &BTreeMap<String, RankedList<String>>,
    judgments: &RelevanceJudgments,
    k: usize,
) -> Result<f64> {
    if per_query.is_empty() {
        return Err(Error::InvalidArgument("no queries to evaluate".into()));
    }
    let mut sum = 0.0;
    for (q, results) in per_query {
        let relevant = judgments
            .get(q)
            .ok_or_else(|| Error::InvalidData(format!("no judgments for query {q:?}")))?;
        sum += average_precision_at_k(results, relevant, k)?;
    }
    Ok(sum / per_query.len() as f64)
}

/// `2PR / (P + R)`, or 0 when both are 0.
pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerWordMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// Truth words that entered the averages.
    pub words: usize,
    /// Words whose precision came from the random-annotation fallback.
    pub fallback_words: usize,
}

/// Mean per-word precision and recall over every word that appears in some
/// truth set. A word never produced by the annotator gets the precision a
/// random annotator would achieve: each of `mc_samples` rounds gives every
/// document `min(10, d_size)` distinct uniform words, and precision is
/// averaged over the rounds where the word was annotated at all (0 if never).
pub fn per_word_metrics(
    annotations: &BTreeMap<String, BTreeSet<usize>>,
    truth: &BTreeMap<String, BTreeSet<usize>>,
    d_size: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<PerWordMetrics> {
    if mc_samples < 1 {
        return Err(Error::InvalidArgument("mc_samples must be ≥ 1".into()));
    }
    if d_size == 0 {
        return Err(Error::InvalidArgument("dictionary size must be ≥ 1".into()));
    }
    if annotations.keys().ne(truth.keys()) {
        return Err(Error::InvalidData(
            "annotations and truth cover different documents".into(),
        ));
    }
    for (doc, words) in annotations.iter().chain(truth) {
        if let Some(w) = words.iter().find(|&&w| w >= d_size) {
            return Err(Error::InvalidData(format!(
                "document {doc:?}: word {w} outside dictionary of size {d_size}"
            )));
        }
    }

    let mut labeled: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
    for (doc, words) in truth {
        for &w in words {
            labeled.entry(w).or_default().insert(doc);
        }
    }
    let mut annotated: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
    for (doc, words) in annotations {
        for &w in words {
            annotated.entry(w).or_default().insert(doc);
        }
    }

    // Only membership of the word under study matters, and in a uniform
    // random size-s subset of d words each document contains it
    // independently with probability s/d.
    let inclusion = RANDOM_ANNOTATION_SIZE.min(d_size) as f64 / d_size as f64;
    let docs: Vec<&str> = truth.keys().map(String::as_str).collect();
    let mut rng = crate::seeded_rng(seed);

    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut fallback_words = 0;
    for (w, truth_docs) in &labeled {
        let hits = annotated
            .get(w)
            .map_or(0, |a| a.intersection(truth_docs).count());
        recall_sum += hits as f64 / truth_docs.len() as f64;
        precision_sum += match annotated.get(w) {
            Some(a) => hits as f64 / a.len() as f64,
            None => {
                fallback_words += 1;
                let mut sum = 0.0;
                let mut defined = 0usize;
                for _ in 0..mc_samples {
                    let mut chosen = 0usize;
                    let mut correct = 0usize;
                    for doc in &docs {
                        if rng.random_bool(inclusion) {
                            chosen += 1;
                            if truth_docs.contains(doc) {
                                correct += 1;
                            }
                        }
                    }
                    if chosen > 0 {
                        defined += 1;
                        sum += correct as f64 / chosen as f64;
                    }
                }
                if defined == 0 {
                    0.0
                } else {
                    sum / defined as f64
                }
            }
        };
    }
    let n = labeled.len();
    let (precision, recall) = if n == 0 {
        (0.0, 0.0)
    } else {
        (precision_sum / n as f64, recall_sum / n as f64)
    };
    Ok(PerWordMetrics {
        precision,
        recall,
        f_score: f_score(precision, recall),
        words: n,
        fallback_words,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub rank: usize,
    pub recall: f64,
    pub precision: f64,
}

/// One (recall@r, precision@r) point per rank of `results`.
pub fn pr_curve<Id: Ord>(results: &RankedList<Id>, relevant: &BTreeSet<Id>) -> Result<Vec<PrPoint>> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("empty ranking".into()));
    }
    if relevant.is_empty() {
        return Err(Error::InvalidArgument("relevant set is empty".into()));
    }
    let mut hits = 0usize;
    Ok(results
        .ids()
        .enumerate()
        .map(|(i, id)| {
            if relevant.contains(id) {
                hits += 1;
            }
            PrPoint {
                rank: i + 1,
                recall: hits as f64 / relevant.len() as f64,
                precision: hits as f64 / (i + 1) as f64,
            }
        })
        .collect())
}

/// CSV with header `rank,recall,precision`.
pub fn pr_curve_csv(points: &[PrPoint]) -> String {
    let mut out = String::from("rank,recall,precision\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.rank, p.recall, p.precision));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueryMetrics {
    pub precision: f64,
    pub recall: f64,
}

/// Aggregate evaluation output. Each subcommand fills the fields it computes.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub per_query: BTreeMap<String, QueryMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_at_k: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub perplexity_by_length: BTreeMap<usize, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mpw_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mpw_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_score: Option<f64>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
