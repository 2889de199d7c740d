//! Automatic annotation: rank the text dictionary by
//! `P(D_j | V*) = Σ_k θ_k β_{k,j}`.

use crate::corpus::BowVector;
use crate::error::{Error, Result};
use crate::inference::{infer_theta, TrainConfig};
use crate::model::ModelParams;
use crate::ranking::RankedList;

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub doc_id: String,
    /// Text-word indices with their scores.
    pub words: RankedList<usize>,
    pub length_requested: usize,
}

/// θ·β: one score per text word. Sums to 1 when θ and the β rows do.
pub fn annotation_scores(theta: &[f64], p: &ModelParams) -> Result<Vec<f64>> {
    if theta.len() != p.k() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} topics, model has {}",
            theta.len(),
            p.k()
        )));
    }
    let mut scores = vec![0.0; p.text_size()];
    for (k, &t) in theta.iter().enumerate() {
        for (s, b) in scores.iter_mut().zip(p.beta_row(k)) {
            *s += t * b;
        }
    }
    Ok(scores)
}

/// Ranks the dictionary for a known θ (ties by ascending word index).
pub fn annotate_theta(
    doc_id: &str,
    theta: &[f64],
    p: &ModelParams,
    top_k: usize,
    threshold: Option<f64>,
) -> Result<Annotation> {
    if top_k == 0 {
        return Err(Error::InvalidArgument("top_k must be ≥ 1".into()));
    }
    p.ensure_strictly_positive()?;
    let scores = annotation_scores(theta, p)?;
    let words = RankedList::from_scores(scores.into_iter().enumerate())?.cut(top_k, threshold);
    Ok(Annotation {
        doc_id: doc_id.to_string(),
        words,
        length_requested: top_k,
    })
}

/// Infers θ for `sensory` and annotates with the `top_k` best words,
/// optionally keeping only scores ≥ `threshold`.
pub fn annotate(
    doc_id: &str,
    sensory: &BowVector,
    p: &ModelParams,
    cfg: &TrainConfig,
    top_k: usize,
    threshold: Option<f64>,
) -> Result<Annotation> {
    if sensory.is_empty() {
        return Err(Error::InvalidData(format!("document {doc_id:?} has no sensory words")));
    }
    let theta = infer_theta(sensory, p, cfg)?;
    annotate_theta(doc_id, &theta, p, top_k, threshold)
}
