//! Descending-score result lists shared by retrieval and annotation.

use crate::error::{Error, Result};

/// `(id, score)` pairs ordered by non-increasing score, ties by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList<Id> {
    items: Vec<(Id, f64)>,
}

impl<Id: Ord> RankedList<Id> {
    /// Sorts arbitrary scored items. Non-finite scores are rejected.
    pub fn from_scores(items: impl IntoIterator<Item = (Id, f64)>) -> Result<Self> {
        let mut items: Vec<(Id, f64)> = items.into_iter().collect();
        if let Some((_, s)) = items.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::Numerical(format!("non-finite score {s}")));
        }
        items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(RankedList { items })
    }

    /// Keeps the first `n` items and, when given, only scores ≥ `threshold`.
    pub fn cut(mut self, n: usize, threshold: Option<f64>) -> Self {
        self.items.truncate(n);
        if let Some(t) = threshold {
            let keep = self.items.iter().take_while(|(_, s)| *s >= t).count();
            self.items.truncate(keep);
        }
        self
    }
}

impl<Id> RankedList<Id> {
    pub fn empty() -> Self {
        RankedList { items: Vec::new() }
    }

    pub fn items(&self) -> &[(Id, f64)] {
        &self.items
    }

    pub fn ids(&self) -> impl Iterator<Item = &Id> {
        self.items.iter().map(|(id, _)| id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Applies a monotone transform to every score, keeping the order.
    pub fn map_scores(self, f: impl Fn(f64) -> f64) -> Self {
        RankedList {
            items: self.items.into_iter().map(|(id, s)| (id, f(s))).collect(),
        }
    }

    pub fn into_items(self) -> Vec<(Id, f64)> {
        self.items
    }
}
