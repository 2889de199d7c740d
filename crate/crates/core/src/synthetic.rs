//! Synthetic corpora drawn from a known ground-truth model.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::RelevanceJudgments;
use crate::model::{DocumentSampler, LatentTrace, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub topics: usize,
    pub docs: usize,
    pub sensory_size: usize,
    pub text_size: usize,
    pub words_per_doc: usize,
    pub caption_len: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Give every topic its own contiguous block of each vocabulary.
    pub separated: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            topics: 3,
            docs: 100,
            sensory_size: 60,
            text_size: 30,
            words_per_doc: 50,
            caption_len: 5,
            alpha: 0.1,
            seed: 42,
            separated: false,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.topics == 0 || self.docs == 0 || self.words_per_doc == 0 {
            return bad(format!(
                "topics, docs and words-per-doc must be ≥ 1 (got {}, {}, {})",
                self.topics, self.docs, self.words_per_doc
            ));
        }
        if self.sensory_size == 0 || self.text_size == 0 {
            return bad("vocabulary sizes must be ≥ 1".into());
        }
        if self.separated && (self.sensory_size < self.topics || self.text_size < self.topics) {
            return bad(format!(
                "separated topics need at least {} words in each vocabulary",
                self.topics
            ));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        Ok(())
    }
}

/// Topic `k`'s block under separation: `[k·n/K, (k+1)·n/K)`.
pub fn block(k: usize, topics: usize, n: usize) -> std::ops::Range<usize> {
    k * n / topics..(k + 1) * n / topics
}

/// Rows drawn from a flat Dirichlet (normalized Exp(1) variates), restricted
/// to the topic's block in separated mode.
pub fn truth_params(cfg: &SyntheticConfig) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = crate::seeded_rng(cfg.seed);
    let mut table = |width: usize| {
        let mut t = vec![0.0; cfg.topics * width];
        for k in 0..cfg.topics {
            let support = if cfg.separated { block(k, cfg.topics, width) } else { 0..width };
            let row = &mut t[k * width..(k + 1) * width];
            for v in &mut row[support.clone()] {
                *v = -(1.0 - rng.random::<f64>()).ln();
            }
            let sum: f64 = row.iter().sum();
            row[support].iter_mut().for_each(|v| *v /= sum);
        }
        t
    };
    let pi = table(cfg.sensory_size);
    let beta = table(cfg.text_size);
    ModelParams::new(cfg.topics, cfg.alpha, cfg.sensory_size, cfg.text_size, pi, beta)
}

pub struct SyntheticData {
    pub params: ModelParams,
    pub corpus: Corpus,
    pub traces: Vec<LatentTrace>,
    /// Query = most probable text word of a topic, relevant = documents
    /// whose sampled θ is dominated by that topic.
    pub judgments: RelevanceJudgments,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    let params = truth_params(cfg)?;
    let sv = Arc::new(Vocabulary::new((0..cfg.sensory_size).map(|i| format!("s{i:04}")))?);
    let tv = Arc::new(Vocabulary::new((0..cfg.text_size).map(|i| format!("w{i:04}")))?);
    let sampler = DocumentSampler::new(&params);
    // Separate stream from the one that drew the parameters.
    let mut rng = crate::seeded_rng(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut docs = Vec::with_capacity(cfg.docs);
    let mut traces = Vec::with_capacity(cfg.docs);
    for i in 0..cfg.docs {
        let (mut doc, trace) =
            sampler.sample(format!("doc{i:05}"), cfg.words_per_doc, cfg.caption_len, &mut rng)?;
        doc.category = Some(format!("topic{}", argmax(&trace.theta)));
        docs.push(doc);
        traces.push(trace);
    }

    let mut relevant: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for k in 0..cfg.topics {
        let query = tv.token(argmax(params.beta_row(k))).expect("in range").to_string();
        let ids = docs
            .iter()
            .zip(&traces)
            .filter(|(_, t)| argmax(&t.theta) == k)
            .map(|(d, _)| d.id.clone());
        let set = relevant.entry(query).or_default();
        set.extend(ids);
    }
    relevant.retain(|_, s| !s.is_empty());

    Ok(SyntheticData {
        corpus: Corpus::new(docs, sv, tv)?,
        judgments: RelevanceJudgments::new(relevant)?,
        params,
        traces,
    })
}

/// File names written by [`SyntheticData::write_dir`].
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const SENSORY_VOCAB_FILE: &str = "sensory.vocab";
pub const TEXT_VOCAB_FILE: &str = "text.vocab";
pub const TRUTH_MODEL_FILE: &str = "truth.model";
pub const TRACES_FILE: &str = "traces.jsonl";
pub const JUDGMENTS_FILE: &str = "judgments.json";

impl SyntheticData {
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.corpus.save(dir.join(CORPUS_FILE))?;
        self.corpus.sensory_vocab().save(dir.join(SENSORY_VOCAB_FILE))?;
        self.corpus.text_vocab().save(dir.join(TEXT_VOCAB_FILE))?;
        self.params.save(dir.join(TRUTH_MODEL_FILE))?;
        self.judgments.save(dir.join(JUDGMENTS_FILE))?;
        let path = dir.join(TRACES_FILE);
        let mut buf = Vec::new();
        for (doc, t) in self.corpus.documents().iter().zip(&self.traces) {
            let line = serde_json::json!({ "id": doc.id, "theta": t.theta, "z": t.z, "y": t.y });
            serde_json::to_writer(&mut buf, &line).expect("in-memory write");
            buf.write_all(b"\n").expect("in-memory write");
        }
        std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_rows_live_in_their_blocks() {
        let cfg = SyntheticConfig {
            separated: true,
            sensory_size: 10,
            text_size: 7,
            ..Default::default()
        };
        let p = truth_params(&cfg).unwrap();
        for k in 0..3 {
            let b = block(k, 3, 7);
            for j in 0..7 {
                assert_eq!(p.beta(k, j) > 0.0, b.contains(&j), "topic {k} word {j}");
            }
            let b = block(k, 3, 10);
            for j in 0..10 {
                assert_eq!(p.pi(k, j) > 0.0, b.contains(&j));
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_consistent() {
        let cfg = SyntheticConfig {
            docs: 40,
            separated: true,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.corpus.to_jsonl(), b.corpus.to_jsonl());
        assert_eq!(a.params.to_bytes(), b.params.to_bytes());
        assert_eq!(a.judgments, b.judgments);
        for (d, t) in a.corpus.documents().iter().zip(&a.traces) {
            assert_eq!(d.sensory.total(), cfg.words_per_doc as u64);
            assert_eq!(d.caption.len(), cfg.caption_len);
            assert_eq!(t.z.len(), cfg.words_per_doc);
            // With disjoint supports each caption word belongs to the block
            // of the topic of the slot it aligns to.
            for (&w, &slot) in d.caption.iter().zip(&t.y) {
                assert!(block(t.z[slot], 3, cfg.text_size).contains(&w));
            }
        }
        let total: usize = a.judgments.iter().map(|(_, r)| r.len()).sum();
        assert_eq!(total, cfg.docs);
        let other = generate(&SyntheticConfig { seed: 7, ..cfg }).unwrap();
        assert_ne!(a.corpus.to_jsonl(), other.corpus.to_jsonl());
    }

    #[test]
    fn infeasible_configs_are_usage_errors() {
        for cfg in [
            SyntheticConfig { docs: 0, ..Default::default() },
            SyntheticConfig { topics: 0, ..Default::default() },
            SyntheticConfig { separated: true, text_size: 2, ..Default::default() },
            SyntheticConfig { alpha: 0.0, ..Default::default() },
        ] {
            assert_eq!(generate(&cfg).err().unwrap().exit_code(), 1, "{cfg:?}");
        }
    }

    #[test]
    fn write_dir_produces_loadable_files() {
        let data = generate(&SyntheticConfig { docs: 5, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        data.write_dir(dir.path()).unwrap();
        let sv = Arc::new(Vocabulary::load(dir.path().join(SENSORY_VOCAB_FILE)).unwrap());
        let tv = Arc::new(Vocabulary::load(dir.path().join(TEXT_VOCAB_FILE)).unwrap());
        let c = Corpus::load(dir.path().join(CORPUS_FILE), sv, tv).unwrap();
        assert_eq!(c.to_jsonl(), data.corpus.to_jsonl());
        assert_eq!(ModelParams::load(dir.path().join(TRUTH_MODEL_FILE)).unwrap(), data.params);
        let traces = std::fs::read_to_string(dir.path().join(TRACES_FILE)).unwrap();
        assert_eq!(traces.lines().count(), 5);
        assert_eq!(RelevanceJudgments::load(dir.path().join(JUDGMENTS_FILE)).unwrap(), data.judgments);
    }
}
