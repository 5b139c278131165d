//! Seeded Monte Carlo experiments: CER versus SNR for a fixed code and BER
//! versus codeword length at a fixed code rate.
//!
//! Every trial draws from its own generator keyed by
//! `(master_seed, point, trial)`, trials are grouped in fixed-size chunks
//! and chunk totals are added in chunk order, so a run gives identical
//! numbers for any worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    chernoff_union_bound, orderstat_bounds, skellam_union_bound, BoundError, BoundKind, DEFAULT_CHERNOFF_T,
};
use crate::channel::{sample_csi, transmit, ChannelError, Csi, CsiModel, ObservationVector};
use crate::codebook::{
    distance_spectrum, enumerate_full_scw, sample_partial_codebook, Codebook, CodebookError, Codeword,
    DistanceSpectrum, SymbolAlphabet, WeightVector,
};
use crate::detect::{
    detect_binary_cw_csi_free, detect_coherent_ml, detect_noncoherent_ml, detect_scw_csi_free_randomized,
    detect_scw_csi_free_with, detect_symbolwise_coherent, is_sort_consistent, DetectError, DetectionResult,
    TieOptions,
};
use crate::rng::{stream, SimRng};

/// Noise count used when sweeping SNR by scaling the release count.
pub const DEFAULT_NOISE_COUNT: f64 = 4.9;
pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_BOUND_SAMPLES: usize = 256;
/// Trials per aggregation chunk.
pub const CHUNK_TRIALS: u64 = 1024;

const WILSON_Z: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("rate {rate} needs {bits} bits at K = {length}, but the full code has only {available} codewords")]
    RateInfeasible {
        rate: f64,
        length: usize,
        bits: u32,
        available: usize,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// How a decision tie is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieConvention {
    /// The detector's own index-based tie-break.
    Deterministic,
    /// A uniform draw over the co-optimal set.
    UniformRandom,
    /// Expected error of a uniform draw: `(|T| − 1)/|T|` when the sent
    /// codeword is among the `|T|` tied ones.
    #[default]
    HalfError,
    /// Any tie counts as an error.
    AlwaysError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorKind {
    /// CSI-free sorting detector; needs a full SCW code.
    #[default]
    Sorting,
    /// CSI-free correlation detector; needs a binary codebook.
    Correlation,
    /// Exhaustive ML with the block's true CSI.
    CoherentMl,
    /// Exhaustive ML on the likelihood averaged over the CSI law.
    NoncoherentMl { n_mc: usize },
}

/// Code under test.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSpec {
    /// Explicit symbol levels; defaults to the uniform grid on `[0, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet: Option<Vec<f64>>,
    /// Per-level counts `ω̄` (SNR sweeps).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<usize>>,
    /// Per-level frequencies `ρ̄` (length sweeps); `ρ_ℓ·K` must be integral.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<f64>>,
    /// Random subset size for a partial codebook (SNR sweeps).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partial_size: Option<usize>,
    /// Seed for partial codebook sampling.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    /// CER over an SNR grid in dB.
    Snr { snr_db: Vec<f64> },
    /// BER over codeword lengths at code rate `rate` and fixed SNR.
    Length { lengths: Vec<usize>, rate: f64, snr_db: f64 },
}

fn default_channel() -> CsiModel {
    CsiModel::deterministic(Csi {
        c_s: DEFAULT_NOISE_COUNT,
        c_n: DEFAULT_NOISE_COUNT,
    })
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_COUNT
}

fn default_trials() -> u64 {
    DEFAULT_TRIALS
}

fn default_bound_samples() -> usize {
    DEFAULT_BOUND_SAMPLES
}

/// One experiment. SNR points are realised by scaling the signal against
/// the fixed `noise_count`, i.e. by changing the number of released
/// molecules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub master_seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    pub code: CodeSpec,
    #[serde(default = "default_channel")]
    pub channel: CsiModel,
    #[serde(default = "default_noise")]
    pub noise_count: f64,
    pub sweep: Sweep,
    #[serde(default)]
    pub tie_convention: TieConvention,
    #[serde(default)]
    pub detector: DetectorKind,
    /// Bounds attached to CER points.
    #[serde(default)]
    pub bounds: Vec<BoundKind>,
    /// CSI draws averaged per point when bounding a random channel.
    #[serde(default = "default_bound_samples")]
    pub bound_samples: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.noise_count >= 0.0 && self.noise_count.is_finite()) {
            return bad(format!("noise_count must be finite and non-negative, got {}", self.noise_count));
        }
        self.channel.validate()?;
        if let DetectorKind::NoncoherentMl { n_mc } = self.detector {
            if n_mc == 0 && !self.channel.is_deterministic() {
                return bad("detector.n_mc must be at least 1".into());
            }
        }
        match &self.sweep {
            Sweep::Snr { snr_db } => {
                if snr_db.is_empty() {
                    return bad("sweep.snr_db is empty".into());
                }
                if let Some(x) = snr_db.iter().find(|x| !x.is_finite()) {
                    return bad(format!("sweep.snr_db contains non-finite value {x}"));
                }
                if self.code.weights.is_none() {
                    return bad("code.weights is required for an SNR sweep".into());
                }
                if self.code.frequencies.is_some() {
                    return bad("code.frequencies is only used by length sweeps".into());
                }
                let book = self.build_codebook()?;
                self.check_detector(&book)?;
                if !self.bounds.is_empty() && self.bound_samples == 0 {
                    return bad("bound_samples must be at least 1".into());
                }
                for kind in &self.bounds {
                    check_bound(*kind, &book)?;
                }
            }
            Sweep::Length { lengths, rate, snr_db } => {
                if lengths.is_empty() {
                    return bad("sweep.lengths is empty".into());
                }
                if !(*rate > 0.0 && *rate <= 1.0) {
                    return bad(format!("sweep.rate must lie in (0, 1], got {rate}"));
                }
                if !snr_db.is_finite() {
                    return bad(format!("sweep.snr_db must be finite, got {snr_db}"));
                }
                if self.code.frequencies.is_none() {
                    return bad("code.frequencies is required for a length sweep".into());
                }
                if self.code.weights.is_some() || self.code.partial_size.is_some() {
                    return bad("code.weights and code.partial_size are only used by SNR sweeps".into());
                }
                if !self.bounds.is_empty() {
                    return bad("bounds are only attached to SNR sweeps".into());
                }
                if self.detector == DetectorKind::Sorting {
                    return bad("length sweeps use partial codebooks; pick correlation, coherent_ml or noncoherent_ml".into());
                }
                for &k in lengths {
                    let book = self.length_codebook(k)?;
                    self.check_detector(&book)?;
                }
            }
        }
        Ok(())
    }

    fn alphabet(&self, levels: usize) -> Result<SymbolAlphabet, SimError> {
        Ok(match &self.code.alphabet {
            Some(levels) => SymbolAlphabet::new(levels.clone())?,
            None => SymbolAlphabet::uniform(levels)?,
        })
    }

    fn check_detector(&self, book: &Codebook) -> Result<(), SimError> {
        match self.detector {
            DetectorKind::Sorting if !book.is_full() || book.weights().is_none() => Err(SimError::Config(
                "the sorting detector needs a full SCW code".into(),
            )),
            DetectorKind::Correlation if !book.is_binary() => Err(SimError::Config(
                "the correlation detector needs a binary alphabet".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Codebook of an SNR sweep.
    pub fn build_codebook(&self) -> Result<Codebook, SimError> {
        let counts = self
            .code
            .weights
            .clone()
            .ok_or_else(|| SimError::Config("code.weights is required".into()))?;
        let weights = WeightVector::new(counts)?;
        let full = enumerate_full_scw(&self.alphabet(weights.num_levels())?, &weights)?;
        Ok(match self.code.partial_size {
            Some(size) => sample_partial_codebook(&full, size, self.code.seed)?,
            None => full,
        })
    }

    fn length_weights(&self, length: usize) -> Result<WeightVector, SimError> {
        let freqs = self
            .code
            .frequencies
            .as_ref()
            .ok_or_else(|| SimError::Config("code.frequencies is required".into()))?;
        let counts = freqs
            .iter()
            .map(|&p| {
                let c = p * length as f64;
                let rounded = c.round();
                if !(p >= 0.0) || (c - rounded).abs() > 1e-9 {
                    Err(SimError::Config(format!("frequency {p} does not give an integral count at K = {length}")))
                } else {
                    Ok(rounded as usize)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let weights = WeightVector::new(counts)?;
        if weights.length() != length {
            return Err(SimError::Config(format!("code.frequencies do not sum to 1 at K = {length}")));
        }
        Ok(weights)
    }

    /// Partial codebook of `2^b` codewords used at length `K` of a length
    /// sweep, `b = ⌊R·K⌋`, drawn from the full code and kept in
    /// lexicographic order.
    pub fn length_codebook(&self, length: usize) -> Result<Codebook, SimError> {
        let Sweep::Length { rate, .. } = self.sweep else {
            return Err(SimError::Config("not a length sweep".into()));
        };
        let weights = self.length_weights(length)?;
        let full = enumerate_full_scw(&self.alphabet(weights.num_levels())?, &weights)?;
        let mapping = BitMapping::for_rate(rate, length);
        if mapping.bits >= usize::BITS || mapping.size() > full.len() {
            return Err(SimError::RateInfeasible {
                rate,
                length,
                bits: mapping.bits,
                available: full.len(),
            });
        }
        let seed = crate::rng::derive_seed(self.code.seed, &[length as u64]);
        Ok(sample_partial_codebook(&full, mapping.size(), seed)?)
    }
}

fn check_bound(kind: BoundKind, book: &Codebook) -> Result<(), SimError> {
    let binary_cw_full = book.is_binary() && book.is_full() && book.weights().is_some();
    match kind {
        BoundKind::Chernoff => Ok(()),
        BoundKind::SkellamUnion if book.is_binary() && book.weights().is_some() => Ok(()),
        BoundKind::OrderstatLower | BoundKind::OrderstatUpper if binary_cw_full => Ok(()),
        _ => Err(SimError::Config(format!("bound {} does not apply to this codebook", kind.name()))),
    }
}

/// Natural binary labelling of the first `2^b` codewords: codeword index
/// `i` carries the bits of `i`, most significant first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BitMapping {
    pub bits: u32,
}

impl BitMapping {
    /// `b = ⌊R·K⌋`.
    pub fn for_rate(rate: f64, length: usize) -> Self {
        Self {
            bits: (rate * length as f64 + 1e-9).floor() as u32,
        }
    }

    /// `b = ⌊log₂ M⌋`.
    pub fn for_size(size: usize) -> Self {
        Self {
            bits: if size == 0 { 0 } else { size.ilog2() },
        }
    }

    pub fn size(&self) -> usize {
        1usize << self.bits
    }

    pub fn bits_of(&self, index: usize) -> Vec<bool> {
        (0..self.bits).rev().map(|b| (index >> b) & 1 == 1).collect()
    }

    pub fn index_of(&self, bits: &[bool]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn bit_errors(&self, sent: usize, decided: usize) -> u32 {
        ((sent ^ decided) & (self.size() - 1)).count_ones()
    }
}

/// Wilson score interval at 95 %. Fractional error masses are accepted.
pub fn estimate_interval(errors: f64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = (errors / n).clamp(0.0, 1.0);
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let low = if errors <= 0.0 { 0.0 } else { (centre - half).max(0.0).min(p) };
    let high = if errors >= n { 1.0 } else { (centre + half).min(1.0).max(p) };
    (low, high)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointRecord {
    pub x: f64,
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
    pub trials: u64,
    /// Error mass behind `estimate` (bit errors for BER).
    pub errors: f64,
    /// Events behind `estimate`: trials for CER, bits for BER.
    pub events: u64,
    pub bounds: BTreeMap<String, f64>,
    pub extras: BTreeMap<String, f64>,
}

impl PointRecord {
    fn new(x: f64, errors: f64, trials: u64, events: u64) -> Self {
        let (low, high) = estimate_interval(errors, events);
        Self {
            x,
            estimate: errors / events as f64,
            low,
            high,
            trials,
            errors,
            events,
            bounds: BTreeMap::new(),
            extras: BTreeMap::new(),
        }
    }

    /// Binomial standard error of `estimate`.
    pub fn std_error(&self) -> f64 {
        (self.estimate * (1.0 - self.estimate) / self.events as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSeries {
    /// `"cer"` or `"ber"`.
    pub metric: String,
    /// `"snr_db"` or `"length"`.
    pub x_label: String,
    pub points: Vec<PointRecord>,
}

impl MetricSeries {
    fn columns(&self) -> (Vec<String>, Vec<String>) {
        let mut bounds: Vec<String> = Vec::new();
        let mut extras: Vec<String> = Vec::new();
        for p in &self.points {
            for k in p.bounds.keys() {
                if !bounds.contains(k) {
                    bounds.push(k.clone());
                }
            }
            for k in p.extras.keys() {
                if !extras.contains(k) {
                    extras.push(k.clone());
                }
            }
        }
        (bounds, extras)
    }

    /// Comma-separated table, header first, LF line endings.
    pub fn to_csv(&self) -> String {
        let (bounds, extras) = self.columns();
        let mut out = String::from("x,estimate,low,high,trials");
        for name in bounds.iter().chain(&extras) {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        let cell = |v: Option<&f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
        for p in &self.points {
            let _ = write!(out, "{},{:e},{:e},{:e},{}", p.x, p.estimate, p.low, p.high, p.trials);
            for name in &bounds {
                let _ = write!(out, ",{}", cell(p.bounds.get(name)));
            }
            for name in &extras {
                let _ = write!(out, ",{}", cell(p.extras.get(name)));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs `trials` trials of `trial` in fixed chunks on `pool` and adds the
/// per-trial tallies in trial order within a chunk and chunk order across
/// chunks.
fn run_trials<const N: usize, F>(pool: &rayon::ThreadPool, trials: u64, trial: F) -> [f64; N]
where
    F: Fn(u64) -> [f64; N] + Sync,
{
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    let partial: Vec<[f64; N]> = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = [0.0; N];
                for t in c * CHUNK_TRIALS..((c + 1) * CHUNK_TRIALS).min(trials) {
                    let tally = trial(t);
                    for i in 0..N {
                        acc[i] += tally[i];
                    }
                }
                acc
            })
            .collect()
    });
    partial.iter().fold([0.0; N], |mut acc, p| {
        for i in 0..N {
            acc[i] += p[i];
        }
        acc
    })
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, SimError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SimError::Pool(e.to_string()))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Runs the configured detector, with the random tie-break where the
/// convention asks for one.
fn detect(
    config: &ExperimentConfig,
    book: &Codebook,
    obs: &ObservationVector,
    csi: &Csi,
    model: &CsiModel,
    rng: &mut SimRng,
) -> Result<DetectionResult, SimError> {
    let random = config.tie_convention == TieConvention::UniformRandom;
    let mut result = match config.detector {
        DetectorKind::Sorting => {
            let weights = book.weights().expect("validated full SCW code");
            if random {
                return Ok(detect_scw_csi_free_randomized(obs, book.alphabet(), weights, rng)?);
            }
            detect_scw_csi_free_with(
                obs,
                book.alphabet(),
                weights,
                TieOptions {
                    enumerate: false,
                    cap: 0,
                },
            )?
        }
        DetectorKind::Correlation => detect_binary_cw_csi_free(obs, book)?,
        DetectorKind::CoherentMl => detect_coherent_ml(obs, book, csi)?,
        DetectorKind::NoncoherentMl { n_mc } => detect_noncoherent_ml(obs, book, model, n_mc, rng)?,
    };
    if random && result.ties.len() > 1 {
        result.best = result.ties[rng.random_range(0..result.ties.len())].clone();
    }
    Ok(result)
}

/// Whether `candidate` is in the co-optimal set of `result`.
fn in_tie_set(config: &ExperimentConfig, result: &DetectionResult, obs: &ObservationVector, candidate: &Codeword) -> bool {
    match config.detector {
        DetectorKind::Sorting => is_sort_consistent(obs, candidate),
        _ => result.is_tied_with(candidate),
    }
}

fn codeword_error(
    config: &ExperimentConfig,
    convention: TieConvention,
    result: &DetectionResult,
    obs: &ObservationVector,
    sent: &Codeword,
) -> f64 {
    let wrong = f64::from(u8::from(&result.best != sent));
    match convention {
        TieConvention::Deterministic | TieConvention::UniformRandom => wrong,
        TieConvention::AlwaysError if result.tie_count > 1 => 1.0,
        TieConvention::AlwaysError => wrong,
        TieConvention::HalfError if result.tie_count > 1 => {
            if in_tie_set(config, result, obs, sent) {
                let n = result.tie_count as f64;
                (n - 1.0) / n
            } else {
                1.0
            }
        }
        TieConvention::HalfError => wrong,
    }
}

/// Model used at one SNR point.
fn model_at(config: &ExperimentConfig, snr_db: f64) -> Result<CsiModel, SimError> {
    Ok(config.channel.at_snr(db_to_linear(snr_db), config.noise_count)?)
}

fn spectrum_for(config: &ExperimentConfig, book: &Codebook) -> Result<Option<DistanceSpectrum>, SimError> {
    if !config.bounds.contains(&BoundKind::SkellamUnion) {
        return Ok(None);
    }
    Ok(Some(match book.weights() {
        Some(w) if book.is_full() && book.is_binary() => DistanceSpectrum::full_binary_cw(w.length(), w.counts()[1]),
        _ => distance_spectrum(book)?,
    }))
}

/// Average of the requested bounds over the point's CSI law.
fn point_bounds(
    config: &ExperimentConfig,
    book: &Codebook,
    spectrum: Option<&DistanceSpectrum>,
    model: &CsiModel,
    point: u64,
) -> Result<BTreeMap<String, f64>, SimError> {
    let mut out = BTreeMap::new();
    if config.bounds.is_empty() {
        return Ok(out);
    }
    let samples: Vec<Csi> = match model {
        CsiModel::Deterministic { csi } => vec![*csi],
        CsiModel::FiniteMixture { .. } | CsiModel::ParametricRandom(_) => {
            let mut rng = stream(config.master_seed, &[point, u64::MAX]);
            (0..config.bound_samples).map(|_| sample_csi(model, &mut rng)).collect()
        }
    };
    for kind in &config.bounds {
        let mut total = 0.0;
        for csi in &samples {
            total += match kind {
                BoundKind::Chernoff => chernoff_union_bound(book, csi, DEFAULT_CHERNOFF_T)?.value,
                BoundKind::SkellamUnion => {
                    skellam_union_bound(spectrum.expect("binary code spectrum"), book.len(), csi)?.value
                }
                BoundKind::OrderstatLower | BoundKind::OrderstatUpper => {
                    let w = book.weights().expect("validated full binary code");
                    let (lower, upper) = orderstat_bounds(w.length(), w.counts()[1], csi)?;
                    if *kind == BoundKind::OrderstatLower {
                        lower.value
                    } else {
                        upper.value
                    }
                }
            };
        }
        out.insert(kind.name().to_string(), total / samples.len() as f64);
    }
    Ok(out)
}

/// CER versus SNR. Each trial draws a block CSI, a uniform message and the
/// channel output, detects, and scores the decision by the tie convention.
pub fn run_cer_experiment(config: &ExperimentConfig, workers: usize) -> Result<MetricSeries, SimError> {
    config.validate()?;
    let Sweep::Snr { snr_db } = &config.sweep else {
        return Err(SimError::Config("CER runs need an snr sweep".into()));
    };
    let book = config.build_codebook()?;
    let spectrum = spectrum_for(config, &book)?;
    let pool = build_pool(workers)?;
    let mut points = Vec::with_capacity(snr_db.len());
    for (point, &x) in snr_db.iter().enumerate() {
        let point = point as u64;
        let model = model_at(config, x)?;
        let [errors, alt_deterministic, alt_half] = run_trials(&pool, config.trials, |t| {
            let mut rng = stream(config.master_seed, &[point, t]);
            let csi = sample_csi(&model, &mut rng);
            let sent = &book.codewords()[rng.random_range(0..book.len())];
            let obs = transmit(sent, book.alphabet(), &csi, &mut rng);
            let result = detect(config, &book, &obs, &csi, &model, &mut rng).expect("validated detector");
            let score = |c| codeword_error(config, c, &result, &obs, sent);
            [score(config.tie_convention), score(TieConvention::Deterministic), score(TieConvention::HalfError)]
        });
        let mut record = PointRecord::new(x, errors, config.trials, config.trials);
        // The same decisions scored under the other deterministic conventions.
        if config.tie_convention != TieConvention::UniformRandom {
            let n = config.trials as f64;
            if config.tie_convention != TieConvention::Deterministic {
                record.extras.insert("deterministic".into(), alt_deterministic / n);
            }
            if config.tie_convention != TieConvention::HalfError {
                record.extras.insert("half_error".into(), alt_half / n);
            }
        }
        record.bounds = point_bounds(config, &book, spectrum.as_ref(), &model, point)?;
        points.push(record);
    }
    Ok(MetricSeries {
        metric: "cer".into(),
        x_label: "snr_db".into(),
        points,
    })
}

/// Bit errors of one coded decision under the tie convention.
fn coded_bit_errors(
    config: &ExperimentConfig,
    book: &Codebook,
    mapping: &BitMapping,
    result: &DetectionResult,
    sent: usize,
) -> f64 {
    let index = |cw: &Codeword| book.position(cw).expect("decision from codebook");
    let decided = mapping.bit_errors(sent, index(&result.best)) as f64;
    if result.ties.len() < 2 {
        return decided;
    }
    let tied = result.ties.iter().map(|cw| mapping.bit_errors(sent, index(cw)) as f64);
    match config.tie_convention {
        TieConvention::Deterministic | TieConvention::UniformRandom => decided,
        TieConvention::HalfError => tied.sum::<f64>() / result.ties.len() as f64,
        TieConvention::AlwaysError => tied.fold(0.0, f64::max),
    }
}

/// Uncoded levels per symbol and the bits each carries.
fn uncoded_scheme(alphabet: &SymbolAlphabet) -> (usize, u32) {
    let bits = alphabet.len().ilog2();
    (1usize << bits, bits)
}

/// BER versus codeword length at fixed rate. Each trial sends a random
/// `b`-bit message through the coded scheme and, on the same CSI draw,
/// `K` uncoded symbols detected symbol by symbol with the true CSI.
/// The uncoded BER is reported in the `uncoded`, `uncoded_low` and
/// `uncoded_high` extras.
pub fn run_ber_experiment(config: &ExperimentConfig, workers: usize) -> Result<MetricSeries, SimError> {
    config.validate()?;
    let Sweep::Length { lengths, rate, snr_db } = &config.sweep else {
        return Err(SimError::Config("BER runs need a length sweep".into()));
    };
    let model = model_at(config, *snr_db)?;
    let pool = build_pool(workers)?;
    let mut points = Vec::with_capacity(lengths.len());
    for (point, &length) in lengths.iter().enumerate() {
        let point = point as u64;
        let book = config.length_codebook(length)?;
        let mapping = BitMapping::for_rate(*rate, length);
        let alphabet = book.alphabet();
        let (uncoded_levels, uncoded_bits) = uncoded_scheme(alphabet);
        let [coded, uncoded] = run_trials(&pool, config.trials, |t| {
            let mut rng = stream(config.master_seed, &[point, t]);
            let csi = sample_csi(&model, &mut rng);
            let message = rng.random_range(0..mapping.size());
            let sent = &book.codewords()[message];
            let obs = transmit(sent, alphabet, &csi, &mut rng);
            let result = detect(config, &book, &obs, &csi, &model, &mut rng).expect("validated detector");
            let coded = coded_bit_errors(config, &book, &mapping, &result, message);

            let symbols: Vec<u8> = (0..length).map(|_| rng.random_range(0..uncoded_levels) as u8).collect();
            let obs = transmit(&Codeword::new(symbols.clone()), alphabet, &csi, &mut rng);
            let decided = detect_symbolwise_coherent(&obs, alphabet, &csi);
            let uncoded: u32 = symbols
                .iter()
                .zip(&decided)
                .map(|(&s, &d)| ((s ^ d) as u32 & ((1 << uncoded_bits) - 1)).count_ones())
                .sum();
            [coded, uncoded as f64]
        });
        let coded_bits = config.trials * mapping.bits as u64;
        let mut record = PointRecord::new(length as f64, coded, config.trials, coded_bits);
        let uncoded_events = config.trials * length as u64 * uncoded_bits as u64;
        let (low, high) = estimate_interval(uncoded, uncoded_events);
        record.extras.insert("uncoded".into(), uncoded / uncoded_events as f64);
        record.extras.insert("uncoded_low".into(), low);
        record.extras.insert("uncoded_high".into(), high);
        record.extras.insert("bits".into(), mapping.bits as f64);
        points.push(record);
    }
    Ok(MetricSeries {
        metric: "ber".into(),
        x_label: "length".into(),
        points,
    })
}

/// Dispatches on the sweep kind.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<MetricSeries, SimError> {
    match config.sweep {
        Sweep::Snr { .. } => run_cer_experiment(config, workers),
        Sweep::Length { .. } => run_ber_experiment(config, workers),
    }
}

/// Bounds alone over an SNR sweep, without simulation.
pub fn bound_series(config: &ExperimentConfig) -> Result<MetricSeries, SimError> {
    config.validate()?;
    let Sweep::Snr { snr_db } = &config.sweep else {
        return Err(SimError::Config("bounds need an snr sweep".into()));
    };
    let book = config.build_codebook()?;
    let spectrum = spectrum_for(config, &book)?;
    let points = snr_db
        .iter()
        .enumerate()
        .map(|(point, &x)| {
            let model = model_at(config, x)?;
            Ok(PointRecord {
                x,
                estimate: f64::NAN,
                low: f64::NAN,
                high: f64::NAN,
                trials: 0,
                errors: 0.0,
                events: 0,
                bounds: point_bounds(config, &book, spectrum.as_ref(), &model, point as u64)?,
                extras: BTreeMap::new(),
            })
        })
        .collect::<Result<_, SimError>>()?;
    Ok(MetricSeries {
        metric: "bounds".into(),
        x_label: "snr_db".into(),
        points,
    })
}
