//! Model parameters, the generative process, and the binary model format.
//!
//! A document is generated as
//!
//! 1. θ ~ Dirichlet(α·1_K)
//! 2. for each sensory slot m: z_m ~ Mult(θ), v_m ~ Mult(Π_{z_m})
//! 3. for each caption slot n: y_n ~ Uniform{0..M−1}, w_n ~ Mult(β_{z_{y_n}})

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Gamma;
use sha2::{Digest, Sha256};

use crate::corpus::{BowVector, Document};
use crate::error::{Error, Result};
use crate::special::{ln_gamma, log_sum_exp};

/// Tolerance on row sums of Π and β.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Largest K^M · M^N accepted by [`exact_log_likelihood`].
pub const ENUMERATION_BUDGET: u128 = 10_000_000;

const MAGIC: &[u8; 4] = b"CLDA";
const FORMAT_VERSION: u32 = 1;

/// Topic count, symmetric Dirichlet prior and the two topic-word tables,
/// stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    k: usize,
    alpha: f64,
    sensory_size: usize,
    text_size: usize,
    pi: Vec<f64>,
    beta: Vec<f64>,
}

impl ModelParams {
    /// Validates dimensions, α > 0, finite non-negative entries and unit row
    /// sums. Zero entries are allowed here (ground-truth models with disjoint
    /// supports); estimated models are always strictly positive.
    pub fn new(
        k: usize,
        alpha: f64,
        sensory_size: usize,
        text_size: usize,
        pi: Vec<f64>,
        beta: Vec<f64>,
    ) -> Result<Self> {
        if k == 0 || sensory_size == 0 || text_size == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive (k={k}, |S|={sensory_size}, |D|={text_size})"
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        if pi.len() != k * sensory_size || beta.len() != k * text_size {
            return Err(Error::DimensionMismatch(format!(
                "tables have {} and {} entries, expected {} and {}",
                pi.len(),
                beta.len(),
                k * sensory_size,
                k * text_size
            )));
        }
        check_rows("pi", &pi, sensory_size)?;
        check_rows("beta", &beta, text_size)?;
        Ok(ModelParams {
            k,
            alpha,
            sensory_size,
            text_size,
            pi,
            beta,
        })
    }

    pub(crate) fn from_parts_unchecked(
        k: usize,
        alpha: f64,
        sensory_size: usize,
        text_size: usize,
        pi: Vec<f64>,
        beta: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(pi.len(), k * sensory_size);
        debug_assert_eq!(beta.len(), k * text_size);
        ModelParams {
            k,
            alpha,
            sensory_size,
            text_size,
            pi,
            beta,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sensory_size(&self) -> usize {
        self.sensory_size
    }

    pub fn text_size(&self) -> usize {
        self.text_size
    }

    pub fn pi_row(&self, topic: usize) -> &[f64] {
        &self.pi[topic * self.sensory_size..(topic + 1) * self.sensory_size]
    }

    pub fn beta_row(&self, topic: usize) -> &[f64] {
        &self.beta[topic * self.text_size..(topic + 1) * self.text_size]
    }

    #[inline]
    pub fn pi(&self, topic: usize, word: usize) -> f64 {
        self.pi[topic * self.sensory_size + word]
    }

    #[inline]
    pub fn beta(&self, topic: usize, word: usize) -> f64 {
        self.beta[topic * self.text_size + word]
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.pi.iter().chain(&self.beta).all(|&v| v > 0.0)
    }

    /// Rejects models with zero probabilities, which make query products vanish.
    pub fn ensure_strictly_positive(&self) -> Result<()> {
        if self.is_strictly_positive() {
            Ok(())
        } else {
            Err(Error::InvalidData(
                "model has zero probabilities; scoring needs a smoothed (trained) model".into(),
            ))
        }
    }

    pub fn check_document(&self, doc: &Document) -> Result<()> {
        self.check_sensory(&doc.sensory)?;
        if let Some(&w) = doc.caption.iter().find(|&&w| w >= self.text_size) {
            return Err(Error::DimensionMismatch(format!(
                "document {:?}: caption word {w} outside text dictionary of size {}",
                doc.id, self.text_size
            )));
        }
        Ok(())
    }

    pub fn check_sensory(&self, sensory: &BowVector) -> Result<()> {
        match sensory.max_index() {
            None => Err(Error::InvalidData("empty sensory vector".into())),
            Some(w) if w >= self.sensory_size => Err(Error::DimensionMismatch(format!(
                "sensory word {w} outside sensory dictionary of size {}",
                self.sensory_size
            ))),
            Some(_) => Ok(()),
        }
    }

    /// Serializes to the binary model format (little-endian, CRC-32 trailer).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * (self.pi.len() + self.beta.len()) + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for dim in [self.k, self.sensory_size, self.text_size] {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.alpha.to_le_bytes());
        for v in self.pi.iter().chain(&self.beta) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Checksum {
                stored: 0,
                computed: crc32fast::hash(bytes),
            });
        }
        let (payload, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        if payload.len() < 40 || &payload[..4] != MAGIC {
            return Err(Error::ModelFormat("missing CLDA header".into()));
        }
        let version = u32::from_le_bytes(payload[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let u64_at = |at: usize| u64::from_le_bytes(payload[at..at + 8].try_into().expect("8 bytes"));
        let dims = [u64_at(8), u64_at(16), u64_at(24)].map(|d| usize::try_from(d).ok());
        let [Some(k), Some(s), Some(d)] = dims else {
            return Err(Error::ModelFormat("dimensions overflow".into()));
        };
        let alpha = f64::from_le_bytes(payload[32..40].try_into().expect("8 bytes"));
        let expected = k
            .checked_mul(s)
            .and_then(|a| k.checked_mul(d).and_then(|b| a.checked_add(b)))
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(40));
        if expected != Some(payload.len()) {
            return Err(Error::ModelFormat(format!(
                "payload is {} bytes, header implies {:?}",
                payload.len(),
                expected
            )));
        }
        let mut values = payload[40..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let pi: Vec<f64> = values.by_ref().take(k * s).collect();
        let beta: Vec<f64> = values.collect();
        ModelParams::new(k, alpha, s, d, pi, beta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Hex SHA-256 of the serialized model.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

fn check_rows(name: &str, table: &[f64], width: usize) -> Result<()> {
    for (k, row) in table.chunks_exact(width).enumerate() {
        if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidData(format!("{name} row {k} has invalid entry {v}")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::InvalidData(format!("{name} row {k} sums to {sum}")));
        }
    }
    Ok(())
}

/// Rows of `(1 + u)` with u ~ U[0, 0.1), normalized; Π rows first, then β.
pub fn init_params(
    k: usize,
    sensory_size: usize,
    text_size: usize,
    alpha: f64,
    seed: u64,
) -> Result<ModelParams> {
    if k == 0 || sensory_size == 0 || text_size == 0 {
        return Err(Error::InvalidArgument(format!(
            "dimensions must be positive (k={k}, |S|={sensory_size}, |D|={text_size})"
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let mut rng = crate::seeded_rng(seed);
    let mut table = |width: usize| {
        let mut t = Vec::with_capacity(k * width);
        for _ in 0..k {
            let row: Vec<f64> = (0..width).map(|_| 1.0 + 0.1 * rng.random::<f64>()).collect();
            let sum: f64 = row.iter().sum();
            t.extend(row.into_iter().map(|v| v / sum));
        }
        t
    };
    let pi = table(sensory_size);
    let beta = table(text_size);
    Ok(ModelParams::from_parts_unchecked(k, alpha, sensory_size, text_size, pi, beta))
}

/// Latent variables behind one sampled document. `z` follows sampling order
/// of the sensory slots and `y` indexes into those slots (zero-based).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LatentTrace {
    pub theta: Vec<f64>,
    pub z: Vec<usize>,
    pub y: Vec<usize>,
}

/// Draws documents from fixed parameters; builds the per-topic categorical
/// tables once.
pub struct DocumentSampler<'a> {
    params: &'a ModelParams,
    sensory: Vec<WeightedIndex<f64>>,
    text: Vec<WeightedIndex<f64>>,
}

impl<'a> DocumentSampler<'a> {
    pub fn new(params: &'a ModelParams) -> Self {
        let build = |row: &dyn Fn(usize) -> &'a [f64]| -> Vec<WeightedIndex<f64>> {
            (0..params.k)
                .map(|k| WeightedIndex::new(row(k)).expect("rows are valid distributions"))
                .collect()
        };
        DocumentSampler {
            params,
            sensory: build(&|k| params.pi_row(k)),
            text: build(&|k| params.beta_row(k)),
        }
    }

    /// Samples θ ~ Dirichlet(α·1_K) through log-gamma variates so that small
    /// α cannot underflow every component.
    pub fn sample_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let k = self.params.k;
        if k == 1 {
            return vec![1.0];
        }
        let alpha = self.params.alpha;
        let mut logs: Vec<f64> = if alpha >= 1.0 {
            let g = Gamma::new(alpha, 1.0).expect("alpha > 0");
            (0..k).map(|_| g.sample(rng).ln()).collect()
        } else {
            // G(α) = G(α + 1) · U^(1/α)
            let g = Gamma::new(alpha + 1.0, 1.0).expect("alpha > 0");
            (0..k)
                .map(|_| {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    g.sample(rng).ln() + u.ln() / alpha
                })
                .collect()
        };
        crate::special::softmax_in_place(&mut logs);
        logs
    }

    /// Slot-level draw: sensory words in sampling order, caption, latents.
    pub fn sample_slots<R: Rng + ?Sized>(
        &self,
        m: usize,
        n: usize,
        rng: &mut R,
    ) -> Result<SampledSlots> {
        if m == 0 {
            return Err(Error::InvalidArgument(
                "documents need at least one sensory word".into(),
            ));
        }
        let theta = self.sample_theta(rng);
        let topic = WeightedIndex::new(&theta).expect("theta is a distribution");
        let mut z = Vec::with_capacity(m);
        let mut sensory = Vec::with_capacity(m);
        for _ in 0..m {
            let k = topic.sample(rng);
            z.push(k);
            sensory.push(self.sensory[k].sample(rng));
        }
        let mut y = Vec::with_capacity(n);
        let mut caption = Vec::with_capacity(n);
        for _ in 0..n {
            let slot = rng.random_range(0..m);
            y.push(slot);
            caption.push(self.text[z[slot]].sample(rng));
        }
        Ok(SampledSlots {
            sensory,
            caption,
            trace: LatentTrace { theta, z, y },
        })
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        id: impl Into<String>,
        m: usize,
        n: usize,
        rng: &mut R,
    ) -> Result<(Document, LatentTrace)> {
        let slots = self.sample_slots(m, n, rng)?;
        let doc = Document::new(id, BowVector::from_occurrences(slots.sensory), slots.caption, None)?;
        Ok((doc, slots.trace))
    }
}

/// Output of [`DocumentSampler::sample_slots`].
#[derive(Debug, Clone)]
pub struct SampledSlots {
    pub sensory: Vec<usize>,
    pub caption: Vec<usize>,
    pub trace: LatentTrace,
}

/// Samples one document with `m` sensory words and `n` caption words.
pub fn sample_document(
    params: &ModelParams,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<(Document, LatentTrace)> {
    let mut rng = crate::seeded_rng(seed);
    DocumentSampler::new(params).sample(format!("sample-{seed}"), m, n, &mut rng)
}

/// ln E_{θ~Dir(α)}[Π_k θ_k^{c_k}] for topic counts `counts` summing to `m`.
pub fn log_dirichlet_moment(alpha: f64, counts: &[usize]) -> f64 {
    let k = counts.len() as f64;
    let m: usize = counts.iter().sum();
    let mut v = ln_gamma(k * alpha) - ln_gamma(k * alpha + m as f64);
    for &c in counts {
        if c > 0 {
            v += ln_gamma(alpha + c as f64) - ln_gamma(alpha);
        }
    }
    v
}

/// Exact ln p(v_1..v_M, w_1..w_N) of one ordered realization by enumerating
/// every topic assignment z ∈ {0..K−1}^M. The caption factor sums over y in
/// closed form: Π_n (1/M) Σ_m β_{z_m, w_n}.
pub fn exact_log_likelihood_sequence(
    params: &ModelParams,
    sensory: &[usize],
    caption: &[usize],
) -> Result<f64> {
    let (k, m, n) = (params.k, sensory.len(), caption.len());
    if m == 0 {
        return Err(Error::InvalidArgument("no sensory words".into()));
    }
    let required = (k as u128)
        .checked_pow(m as u32)
        .and_then(|a| (m as u128).checked_pow(n as u32).and_then(|b| a.checked_mul(b)))
        .unwrap_or(u128::MAX);
    if required > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudget {
            required,
            budget: ENUMERATION_BUDGET,
        });
    }
    if let Some(&w) = sensory.iter().find(|&&w| w >= params.sensory_size) {
        return Err(Error::DimensionMismatch(format!("sensory word {w} out of range")));
    }
    if let Some(&w) = caption.iter().find(|&&w| w >= params.text_size) {
        return Err(Error::DimensionMismatch(format!("caption word {w} out of range")));
    }

    let ln_m = (m as f64).ln();
    let mut z = vec![0usize; m];
    let mut counts = vec![0usize; k];
    // Streaming log-sum-exp over assignments.
    let mut running_max = f64::NEG_INFINITY;
    let mut running_sum = 0.0;
    loop {
        counts.iter_mut().for_each(|c| *c = 0);
        z.iter().for_each(|&t| counts[t] += 1);
        let mut term = log_dirichlet_moment(params.alpha, &counts);
        for (&t, &v) in z.iter().zip(sensory) {
            term += params.pi(t, v).ln();
        }
        for &w in caption {
            let s: f64 = z.iter().map(|&t| params.beta(t, w)).sum();
            term += s.ln() - ln_m;
        }
        if term > running_max {
            if running_max > f64::NEG_INFINITY {
                running_sum *= (running_max - term).exp();
            }
            running_max = term;
            running_sum += 1.0;
        } else if term > f64::NEG_INFINITY {
            running_sum += (term - running_max).exp();
        }

        // odometer over {0..k-1}^m
        let mut pos = 0;
        loop {
            if pos == m {
                return Ok(if running_max == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    running_max + running_sum.ln()
                });
            }
            z[pos] += 1;
            if z[pos] < k {
                break;
            }
            z[pos] = 0;
            pos += 1;
        }
    }
}

/// [`exact_log_likelihood_sequence`] for a document, expanding its bag of
/// sensory words in index order. Exchangeability makes every ordering give
/// the same value.
pub fn exact_log_likelihood(params: &ModelParams, doc: &Document) -> Result<f64> {
    exact_log_likelihood_sequence(params, &doc.sensory.expand(), &doc.caption)
}

/// Exact posterior mean E[θ | v] for a caption-less document, by enumeration.
pub fn exact_posterior_theta(params: &ModelParams, sensory: &[usize]) -> Result<Vec<f64>> {
    let (k, m) = (params.k, sensory.len());
    let required = (k as u128).checked_pow(m as u32).unwrap_or(u128::MAX);
    if required > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudget {
            required,
            budget: ENUMERATION_BUDGET,
        });
    }
    let mut z = vec![0usize; m];
    let mut counts = vec![0usize; k];
    let mut log_weights = Vec::with_capacity(required as usize);
    let mut means = Vec::with_capacity(required as usize);
    let denom = k as f64 * params.alpha + m as f64;
    'outer: loop {
        counts.iter_mut().for_each(|c| *c = 0);
        z.iter().for_each(|&t| counts[t] += 1);
        let mut w = log_dirichlet_moment(params.alpha, &counts);
        for (&t, &v) in z.iter().zip(sensory) {
            w += params.pi(t, v).ln();
        }
        log_weights.push(w);
        means.push(counts.iter().map(|&c| (params.alpha + c as f64) / denom).collect::<Vec<_>>());
        for pos in 0..m {
            z[pos] += 1;
            if z[pos] < k {
                continue 'outer;
            }
            z[pos] = 0;
        }
        break;
    }
    let norm = log_sum_exp(&log_weights);
    let mut theta = vec![0.0; k];
    for (w, mean) in log_weights.iter().zip(&means) {
        let p = (w - norm).exp();
        for (t, v) in theta.iter_mut().zip(mean) {
            *t += p * v;
        }
    }
    Ok(theta)
}
