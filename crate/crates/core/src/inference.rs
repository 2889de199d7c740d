//! Mean-field variational EM.
//!
//! The variational family is q(θ | γ) · Π_m q(z_m | φ_m) · Π_n q(y_n | λ_n).
//! Sensory words are deduplicated per document: φ has one row per distinct
//! word (shared by all of its occurrences) and λ_n is collapsed onto
//! distinct words, so `λ_{nm}` is the total responsibility of the `c_m`
//! positions holding word m. Per-position responsibility is `λ_{nm} / c_m`.
//!
//! E-step updates, applied in the order φ → λ → γ:
//!
//! ```text
//! φ_{mk} ∝ Π_{k,v_m} · exp(Ψ(γ_k) − Ψ(Σ_j γ_j) + Σ_n (λ_{nm}/c_m) ln β_{k,w_n})
//! λ_{nm} ∝ c_m · exp(Σ_k φ_{mk} ln β_{k,w_n})
//! γ_k    = α + Σ_m c_m φ_{mk}
//! ```
//!
//! The M-step adds a pseudo-count η to every cell of Π and β before
//! normalizing. Training tracks the corpus ELBO plus the matching log-prior
//! term η Σ (ln Π + ln β); that objective is exactly what E and M steps
//! ascend, so it never decreases.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{BowVector, Corpus, Document};
use crate::error::{Error, Result};
use crate::model::{init_params, ModelParams};
use crate::special::{digamma, ln_gamma, softmax_in_place, xlogx};

/// How EM decides it has converged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convergence {
    /// |(L_t − L_{t−1}) / L_{t−1}| < threshold
    Relative,
    /// |L_t − L_{t−1}| < threshold
    Absolute,
}

impl FromStr for Convergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relative" => Ok(Convergence::Relative),
            "absolute" => Ok(Convergence::Absolute),
            other => Err(Error::InvalidArgument(format!(
                "convergence must be relative or absolute, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for Convergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convergence::Relative => "relative",
            Convergence::Absolute => "absolute",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub alpha: f64,
    pub max_em_iters: usize,
    pub em_threshold: f64,
    pub e_step_max_iters: usize,
    pub e_step_threshold: f64,
    pub smoothing_eta: f64,
    pub seed: u64,
    pub convergence: Convergence,
    /// Independent EM runs from init seeds `seed, seed + 1, …`; the run with
    /// the highest final objective is kept.
    #[serde(default = "one")]
    pub restarts: usize,
}

fn one() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 100,
            alpha: 0.2,
            max_em_iters: 1000,
            em_threshold: 1e-7,
            e_step_max_iters: 100,
            e_step_threshold: 1e-6,
            smoothing_eta: 1e-3,
            seed: 42,
            convergence: Convergence::Relative,
            restarts: 1,
        }
    }
}

impl TrainConfig {
    pub fn with_topics(k: usize) -> Self {
        TrainConfig {
            k,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("invalid {what}")));
        if self.k == 0 {
            return bad("k (must be ≥ 1)");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha (must be > 0)");
        }
        if self.max_em_iters == 0 || self.e_step_max_iters == 0 || self.restarts == 0 {
            return bad("iteration cap (must be ≥ 1)");
        }
        for (name, v) in [
            ("em_threshold", self.em_threshold),
            ("e_step_threshold", self.e_step_threshold),
            ("smoothing_eta", self.smoothing_eta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} (must be > 0)"));
            }
        }
        Ok(())
    }

    /// Sets one field from its `key=value` spelling.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value {value:?} for {key}")))
        }
        match key {
            "k" | "topics" => self.k = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "max_em_iters" => self.max_em_iters = parse(key, value)?,
            "em_threshold" | "threshold" => self.em_threshold = parse(key, value)?,
            "e_step_max_iters" => self.e_step_max_iters = parse(key, value)?,
            "e_step_threshold" => self.e_step_threshold = parse(key, value)?,
            "smoothing_eta" => self.smoothing_eta = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "convergence" => self.convergence = value.parse()?,
            "restarts" => self.restarts = parse(key, value)?,
            other => return Err(Error::InvalidArgument(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key=value` file body; `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("config line {}: expected key=value", i + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        format!(
            "k={}\nalpha={}\nmax_em_iters={}\nem_threshold={}\ne_step_max_iters={}\n\
             e_step_threshold={}\nsmoothing_eta={}\nseed={}\nconvergence={}\nrestarts={}\n",
            self.k,
            self.alpha,
            self.max_em_iters,
            self.em_threshold,
            self.e_step_max_iters,
            self.e_step_threshold,
            self.smoothing_eta,
            self.seed,
            self.convergence,
            self.restarts
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Penalized corpus ELBO after each EM iteration.
    pub elbo_per_iter: Vec<f64>,
    pub iters_run: usize,
    pub converged: bool,
    /// Seconds, summed over all restarts.
    pub wall_time: f64,
    /// Zero-based index of the restart that was kept.
    #[serde(default)]
    pub best_restart: usize,
}

/// Per-document variational parameters. `phi` is `distinct × K`, `lam` is
/// `N × distinct`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    k: usize,
    distinct: usize,
    gamma: Vec<f64>,
    phi: Vec<f64>,
    lam: Vec<f64>,
}

impl VariationalState {
    /// φ = 1/K, λ proportional to word counts, γ = α + M/K.
    pub fn uniform(sensory: &BowVector, caption_len: usize, k: usize, alpha: f64) -> Self {
        let distinct = sensory.distinct();
        let total = sensory.total() as f64;
        let lam_row: Vec<f64> = sensory.entries().iter().map(|&(_, c)| c as f64 / total).collect();
        VariationalState {
            k,
            distinct,
            gamma: vec![alpha + total / k as f64; k],
            phi: vec![1.0 / k as f64; distinct * k],
            lam: lam_row.iter().copied().cycle().take(caption_len * distinct).collect(),
        }
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn distinct(&self) -> usize {
        self.distinct
    }

    pub fn caption_len(&self) -> usize {
        if self.distinct == 0 {
            0
        } else {
            self.lam.len() / self.distinct
        }
    }

    pub fn phi_row(&self, m: usize) -> &[f64] {
        &self.phi[m * self.k..(m + 1) * self.k]
    }

    pub fn lam_row(&self, n: usize) -> &[f64] {
        &self.lam[n * self.distinct..(n + 1) * self.distinct]
    }

    /// Posterior mean of θ.
    pub fn theta(&self) -> Vec<f64> {
        let sum: f64 = self.gamma.iter().sum();
        self.gamma.iter().map(|g| g / sum).collect()
    }

    fn fits(&self, doc: &Document, k: usize) -> bool {
        self.k == k
            && self.distinct == doc.sensory.distinct()
            && self.lam.len() == doc.caption.len() * self.distinct
    }
}

/// Log-probability tables for one document under fixed parameters.
struct DocView<'a> {
    k: usize,
    alpha: f64,
    counts: Vec<f64>,
    total: f64,
    caption_len: usize,
    /// distinct × K
    log_pi: Vec<f64>,
    /// N × K
    log_beta: Vec<f64>,
    _doc: &'a Document,
}

impl<'a> DocView<'a> {
    fn new(doc: &'a Document, p: &ModelParams) -> Result<Self> {
        p.check_document(doc)?;
        let k = p.k();
        let entries = doc.sensory.entries();
        let mut log_pi = Vec::with_capacity(entries.len() * k);
        for &(w, _) in entries {
            log_pi.extend((0..k).map(|t| p.pi(t, w).ln()));
        }
        let mut log_beta = Vec::with_capacity(doc.caption.len() * k);
        for &w in &doc.caption {
            log_beta.extend((0..k).map(|t| p.beta(t, w).ln()));
        }
        Ok(DocView {
            k,
            alpha: p.alpha(),
            counts: entries.iter().map(|&(_, c)| c as f64).collect(),
            total: doc.sensory.total() as f64,
            caption_len: doc.caption.len(),
            log_pi,
            log_beta,
            _doc: doc,
        })
    }

    fn distinct(&self) -> usize {
        self.counts.len()
    }

    fn expected_log_theta(&self, gamma: &[f64]) -> Vec<f64> {
        let dsum = digamma(gamma.iter().sum());
        gamma.iter().map(|&g| digamma(g) - dsum).collect()
    }

    /// One φ → λ → γ sweep. Returns max |Δγ|.
    fn sweep(&self, s: &mut VariationalState) -> f64 {
        let (k, md, n) = (self.k, self.distinct(), self.caption_len);
        let elog = self.expected_log_theta(&s.gamma);

        let mut logits = vec![0.0; k];
        for m in 0..md {
            let inv_c = 1.0 / self.counts[m];
            for t in 0..k {
                let mut v = self.log_pi[m * k + t] + elog[t];
                for j in 0..n {
                    let l = s.lam[j * md + m];
                    if l > 0.0 {
                        v += l * inv_c * self.log_beta[j * k + t];
                    }
                }
                logits[t] = v;
            }
            softmax_in_place(&mut logits);
            s.phi[m * k..(m + 1) * k].copy_from_slice(&logits);
        }

        let mut row = vec![0.0; md];
        for j in 0..n {
            for m in 0..md {
                let mut v = self.counts[m].ln();
                for t in 0..k {
                    let f = s.phi[m * k + t];
                    if f > 0.0 {
                        v += f * self.log_beta[j * k + t];
                    }
                }
                row[m] = v;
            }
            softmax_in_place(&mut row);
            s.lam[j * md..(j + 1) * md].copy_from_slice(&row);
        }

        let mut delta: f64 = 0.0;
        for t in 0..k {
            let g = self.alpha
                + (0..md).map(|m| self.counts[m] * s.phi[m * k + t]).sum::<f64>();
            delta = delta.max((g - s.gamma[t]).abs());
            s.gamma[t] = g;
        }
        delta
    }

    fn elbo(&self, s: &VariationalState) -> f64 {
        let (k, md, n) = (self.k, self.distinct(), self.caption_len);
        let kf = k as f64;
        let elog = self.expected_log_theta(&s.gamma);
        let gamma_sum: f64 = s.gamma.iter().sum();

        // E[ln p(θ|α)] − E[ln q(θ|γ)]
        let mut v = ln_gamma(kf * self.alpha) - kf * ln_gamma(self.alpha) - ln_gamma(gamma_sum);
        for t in 0..k {
            v += (self.alpha - s.gamma[t]) * elog[t] + ln_gamma(s.gamma[t]);
        }

        // topic assignments, sensory emissions, − E[ln q(z)]
        for m in 0..md {
            let mut acc = 0.0;
            for t in 0..k {
                let f = s.phi[m * k + t];
                if f > 0.0 {
                    acc += f * (elog[t] + self.log_pi[m * k + t]) - xlogx(f);
                }
            }
            v += self.counts[m] * acc;
        }

        // uniform y prior, caption emissions, − E[ln q(y)]
        v -= n as f64 * self.total.ln();
        for j in 0..n {
            for m in 0..md {
                let l = s.lam[j * md + m];
                if l > 0.0 {
                    let mut emit = 0.0;
                    for t in 0..k {
                        let f = s.phi[m * k + t];
                        if f > 0.0 {
                            emit += f * self.log_beta[j * k + t];
                        }
                    }
                    v += l * (emit - (l / self.counts[m]).ln());
                }
            }
        }
        v
    }

    fn run(
        &self,
        state: &mut VariationalState,
        cfg: &TrainConfig,
        mut trace: Option<&mut Vec<f64>>,
    ) -> usize {
        for iter in 1..=cfg.e_step_max_iters {
            let delta = self.sweep(state);
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.elbo(state));
            }
            if delta < cfg.e_step_threshold {
                return iter;
            }
        }
        cfg.e_step_max_iters
    }
}

/// Coordinate ascent from the uniform state until max |Δγ| falls below
/// `cfg.e_step_threshold` or `cfg.e_step_max_iters` sweeps have run.
pub fn e_step(doc: &Document, p: &ModelParams, cfg: &TrainConfig) -> Result<VariationalState> {
    let view = DocView::new(doc, p)?;
    let mut state = VariationalState::uniform(&doc.sensory, doc.caption.len(), p.k(), p.alpha());
    view.run(&mut state, cfg, None);
    Ok(state)
}

/// Like [`e_step`] but continues from `state`, which must match the document.
pub fn e_step_from(
    doc: &Document,
    p: &ModelParams,
    cfg: &TrainConfig,
    mut state: VariationalState,
) -> Result<VariationalState> {
    let view = DocView::new(doc, p)?;
    if !state.fits(doc, p.k()) {
        return Err(Error::DimensionMismatch(format!(
            "variational state does not fit document {:?}",
            doc.id
        )));
    }
    view.run(&mut state, cfg, None);
    Ok(state)
}

/// [`e_step`] that also returns the ELBO after every sweep.
pub fn e_step_traced(
    doc: &Document,
    p: &ModelParams,
    cfg: &TrainConfig,
) -> Result<(VariationalState, Vec<f64>)> {
    let view = DocView::new(doc, p)?;
    let mut state = VariationalState::uniform(&doc.sensory, doc.caption.len(), p.k(), p.alpha());
    let mut trace = vec![view.elbo(&state)];
    view.run(&mut state, cfg, Some(&mut trace));
    Ok((state, trace))
}

/// Evidence lower bound of one document under `s`.
pub fn compute_elbo(doc: &Document, p: &ModelParams, s: &VariationalState) -> Result<f64> {
    let view = DocView::new(doc, p)?;
    if !s.fits(doc, p.k()) {
        return Err(Error::DimensionMismatch(format!(
            "variational state does not fit document {:?}",
            doc.id
        )));
    }
    Ok(view.elbo(s))
}

/// Posterior-mean topic mixture of a caption-less document.
pub fn infer_theta(sensory: &BowVector, p: &ModelParams, cfg: &TrainConfig) -> Result<Vec<f64>> {
    p.check_sensory(sensory)?;
    let doc = Document {
        id: String::new(),
        sensory: sensory.clone(),
        caption: Vec::new(),
        category: None,
    };
    Ok(e_step(&doc, p, cfg)?.theta())
}

/// Re-estimates Π and β from per-document states with pseudo-count η.
/// Accumulation runs in document order, then word order.
pub fn m_step(corpus: &Corpus, states: &[VariationalState], cfg: &TrainConfig) -> Result<ModelParams> {
    let (k, eta, alpha) = (cfg.k, cfg.smoothing_eta, cfg.alpha);
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("empty corpus".into()));
    }
    if states.len() != corpus.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} states for {} documents",
            states.len(),
            corpus.len()
        )));
    }
    let s_size = corpus.sensory_vocab().len();
    let d_size = corpus.text_vocab().len();
    let mut pi = vec![0.0; k * s_size];
    let mut beta = vec![0.0; k * d_size];
    for (doc, st) in corpus.documents().iter().zip(states) {
        if !st.fits(doc, k) {
            return Err(Error::DimensionMismatch(format!(
                "variational state does not fit document {:?}",
                doc.id
            )));
        }
        for (m, &(w, c)) in doc.sensory.entries().iter().enumerate() {
            let phi = st.phi_row(m);
            for t in 0..k {
                pi[t * s_size + w] += c as f64 * phi[t];
            }
        }
        for (j, &w) in doc.caption.iter().enumerate() {
            let lam = st.lam_row(j);
            for t in 0..k {
                let r: f64 = lam.iter().enumerate().map(|(m, l)| l * st.phi_row(m)[t]).sum();
                beta[t * d_size + w] += r;
            }
        }
    }
    normalize_rows(&mut pi, s_size, eta);
    normalize_rows(&mut beta, d_size, eta);
    Ok(ModelParams::from_parts_unchecked(k, alpha, s_size, d_size, pi, beta))
}

fn normalize_rows(table: &mut [f64], width: usize, eta: f64) {
    for row in table.chunks_exact_mut(width) {
        row.iter_mut().for_each(|v| *v += eta);
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

/// η Σ (ln Π + ln β): the log-prior matching the pseudo-count smoothing.
fn smoothing_log_prior(p: &ModelParams, eta: f64) -> f64 {
    let mut v = 0.0;
    for t in 0..p.k() {
        v += p.pi_row(t).iter().map(|x| x.ln()).sum::<f64>();
        v += p.beta_row(t).iter().map(|x| x.ln()).sum::<f64>();
    }
    eta * v
}

/// Penalized corpus objective: Σ_d ELBO_d + η Σ (ln Π + ln β).
pub fn corpus_objective(
    corpus: &Corpus,
    p: &ModelParams,
    states: &[VariationalState],
    eta: f64,
) -> Result<f64> {
    let per_doc: Vec<f64> = corpus
        .documents()
        .par_iter()
        .zip(states)
        .map(|(d, s)| compute_elbo(d, p, s))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for (doc, v) in corpus.documents().iter().zip(&per_doc) {
        if !v.is_finite() {
            return Err(Error::Numerical(format!("ELBO of document {:?} is {v}", doc.id)));
        }
        total += v;
    }
    Ok(total + smoothing_log_prior(p, eta))
}

/// Alternates full-corpus E-steps (warm-started from the previous states,
/// parallel across documents) and M-steps. With `cfg.restarts > 1` the whole
/// procedure is repeated from fresh initializations and the run ending at
/// the highest objective wins (ties go to the earlier run).
pub fn train(
    corpus: &Corpus,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport, Vec<VariationalState>)> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty corpus".into()));
    }
    let mut best: Option<(ModelParams, TrainReport, Vec<VariationalState>)> = None;
    let mut wall_time = 0.0;
    for r in 0..cfg.restarts {
        let run = train_once(corpus, cfg, cfg.seed.wrapping_add(r as u64))?;
        wall_time += run.1.wall_time;
        let score = |rep: &TrainReport| rep.elbo_per_iter.last().copied().unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|b| score(&run.1) > score(&b.1)) {
            let (p, mut rep, st) = run;
            rep.best_restart = r;
            best = Some((p, rep, st));
        }
    }
    let (params, mut report, states) = best.expect("restarts ≥ 1");
    report.wall_time = wall_time;
    Ok((params, report, states))
}

fn train_once(
    corpus: &Corpus,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(ModelParams, TrainReport, Vec<VariationalState>)> {
    let started = Instant::now();
    let mut params = init_params(
        cfg.k,
        corpus.sensory_vocab().len(),
        corpus.text_vocab().len(),
        cfg.alpha,
        seed,
    )?;
    let mut states: Vec<VariationalState> = corpus
        .documents()
        .iter()
        .map(|d| VariationalState::uniform(&d.sensory, d.caption.len(), cfg.k, cfg.alpha))
        .collect();
    let mut elbos: Vec<f64> = Vec::new();
    let mut converged = false;

    for _ in 0..cfg.max_em_iters {
        states = corpus
            .documents()
            .par_iter()
            .zip(states.into_par_iter())
            .map(|(d, s)| e_step_from(d, &params, cfg, s))
            .collect::<Result<_>>()?;
        params = m_step(corpus, &states, cfg)?;
        let objective = corpus_objective(corpus, &params, &states, cfg.smoothing_eta)?;
        let previous = elbos.last().copied();
        elbos.push(objective);
        if let Some(prev) = previous {
            let change = match cfg.convergence {
                Convergence::Relative => ((objective - prev) / prev).abs(),
                Convergence::Absolute => (objective - prev).abs(),
            };
            if change < cfg.em_threshold {
                converged = true;
                break;
            }
        }
    }

    let report = TrainReport {
        iters_run: elbos.len(),
        elbo_per_iter: elbos,
        converged,
        wall_time: started.elapsed().as_secs_f64(),
        best_restart: 0,
    };
    Ok((params, report, states))
}
