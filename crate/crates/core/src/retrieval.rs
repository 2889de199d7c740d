//! Text-query retrieval: documents are scored by
//! `Score_i = Π_n Σ_k θ_{i,k} β_{k,q_n}` and ranked.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize_caption, Corpus, Stoplist, TokenizedText, Vocabulary};
use crate::error::{Error, Result};
use crate::inference::{infer_theta, TrainConfig, VariationalState};
use crate::model::ModelParams;
use crate::ranking::RankedList;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub theta: Vec<f64>,
    pub category: Option<String>,
}

/// Cached per-document topic mixtures, tied to one model by digest.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    pub model_digest: String,
    pub entries: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexHeader {
    model_digest: String,
    k: usize,
}

impl RetrievalIndex {
    /// Infers θ for every document (parallel, order preserved). With
    /// `train_states`, θ is taken from those γ instead of being re-inferred.
    pub fn build(
        corpus: &Corpus,
        p: &ModelParams,
        cfg: &TrainConfig,
        train_states: Option<&[VariationalState]>,
    ) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::InvalidArgument("cannot index an empty corpus".into()));
        }
        if corpus.sensory_vocab().len() != p.sensory_size()
            || corpus.text_vocab().len() != p.text_size()
        {
            return Err(Error::DimensionMismatch(format!(
                "corpus vocabularies ({}, {}) do not match model ({}, {})",
                corpus.sensory_vocab().len(),
                corpus.text_vocab().len(),
                p.sensory_size(),
                p.text_size()
            )));
        }
        if let Some(states) = train_states {
            if states.len() != corpus.len() || states.iter().any(|s| s.k() != p.k()) {
                return Err(Error::DimensionMismatch(
                    "training states do not match corpus/model".into(),
                ));
            }
        }
        let thetas: Vec<Vec<f64>> = corpus
            .documents()
            .par_iter()
            .enumerate()
            .map(|(i, d)| match train_states {
                Some(states) => Ok(states[i].theta()),
                None => infer_theta(&d.sensory, p, cfg),
            })
            .collect::<Result<_>>()?;
        let entries = corpus
            .documents()
            .iter()
            .zip(thetas)
            .map(|(d, theta)| IndexEntry {
                id: d.id.clone(),
                theta,
                category: d.category.clone(),
            })
            .collect();
        Ok(RetrievalIndex {
            model_digest: p.digest(),
            entries,
        })
    }

    pub fn k(&self) -> usize {
        self.entries.first().map_or(0, |e| e.theta.len())
    }

    pub fn check_model(&self, p: &ModelParams) -> Result<()> {
        let digest = p.digest();
        if digest != self.model_digest {
            return Err(Error::InvalidData(format!(
                "index was built for model {}, got {}",
                self.model_digest, digest
            )));
        }
        Ok(())
    }

    /// Header line `{"model_digest", "k"}`, then one entry per line.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        let header = IndexHeader {
            model_digest: self.model_digest.clone(),
            k: self.k(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "missing index header"))?;
        let header: IndexHeader =
            serde_json::from_str(first).map_err(|e| Error::parse(path, 1, e.to_string()))?;
        let mut entries = Vec::new();
        let mut ids = std::collections::HashSet::new();
        for (i, line) in lines {
            let entry: IndexEntry = serde_json::from_str(line)
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            if entry.theta.len() != header.k {
                return Err(Error::parse(path, i + 1, "theta length differs from header k"));
            }
            let sum: f64 = entry.theta.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || entry.theta.iter().any(|t| !(*t >= 0.0)) {
                return Err(Error::parse(path, i + 1, format!("theta sums to {sum}")));
            }
            if !ids.insert(entry.id.clone()) {
                return Err(Error::parse(path, i + 1, format!("duplicate id {:?}", entry.id)));
            }
            entries.push(entry);
        }
        Ok(RetrievalIndex {
            model_digest: header.model_digest,
            entries,
        })
    }
}

/// `Σ_k θ_k β_{k,w}` for one query word.
#[inline]
pub fn word_factor(theta: &[f64], p: &ModelParams, word: usize) -> f64 {
    theta.iter().enumerate().map(|(k, t)| t * p.beta(k, word)).sum()
}

/// Log of the query likelihood; every query occurrence contributes.
pub fn log_score_video(query: &[usize], theta: &[f64], p: &ModelParams) -> Result<f64> {
    if query.is_empty() {
        return Err(Error::EmptyQuery {
            stopped: Vec::new(),
            oov: Vec::new(),
        });
    }
    if theta.len() != p.k() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} topics, model has {}",
            theta.len(),
            p.k()
        )));
    }
    if let Some(&w) = query.iter().find(|&&w| w >= p.text_size()) {
        return Err(Error::DimensionMismatch(format!("query word {w} out of range")));
    }
    Ok(query.iter().map(|&w| word_factor(theta, p, w).ln()).sum())
}

pub fn score_video(query: &[usize], theta: &[f64], p: &ModelParams) -> Result<f64> {
    log_score_video(query, theta, p).map(f64::exp)
}

/// Ranked output plus the query tokens that were filtered out.
#[derive(Debug, Clone)]
pub struct RetrievalResult {
    pub ranking: RankedList<String>,
    pub query: TokenizedText,
}

/// Scores every index entry for a tokenized query. Ordering comes from the
/// log score so long queries cannot underflow into false ties; reported
/// scores are the exponentiated values.
pub fn rank_query(
    query: &[usize],
    index: &RetrievalIndex,
    p: &ModelParams,
) -> Result<RankedList<String>> {
    p.ensure_strictly_positive()?;
    let logs: Vec<(String, f64)> = index
        .entries
        .par_iter()
        .map(|e| log_score_video(query, &e.theta, p).map(|s| (e.id.clone(), s)))
        .collect::<Result<_>>()?;
    Ok(RankedList::from_scores(logs)?.map_scores(f64::exp))
}

/// Tokenizes and filters `query`, ranks the index, keeps the top `top_n`
/// and, if given, drops scores below `threshold`.
#[allow(clippy::too_many_arguments)]
pub fn retrieve(
    query: &str,
    index: &RetrievalIndex,
    p: &ModelParams,
    text_vocab: &Vocabulary,
    stoplist: &Stoplist,
    top_n: usize,
    threshold: Option<f64>,
) -> Result<RetrievalResult> {
    if top_n == 0 {
        return Err(Error::InvalidArgument("top_n must be ≥ 1".into()));
    }
    index.check_model(p)?;
    let tokens = tokenize_caption(query, text_vocab, stoplist);
    if tokens.indices.is_empty() {
        return Err(Error::EmptyQuery {
            stopped: tokens.stopped,
            oov: tokens.oov,
        });
    }
    let ranking = rank_query(&tokens.indices, index, p)?.cut(top_n, threshold);
    Ok(RetrievalResult {
        ranking,
        query: tokens,
    })
}
