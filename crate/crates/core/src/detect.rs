//! Sequence detectors for the Poisson counting channel.
//!
//! [`detect_scw_csi_free`] sorts the observations and fills levels in
//! ascending order; for a full SCW code this is the coherent and the
//! non-coherent ML decision at once, and it takes no channel argument.
//! The remaining detectors are references: correlation ML for binary CW
//! codebooks, exhaustive coherent ML, marginal-likelihood non-coherent ML,
//! and uncoded symbol-by-symbol coherent detection.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::analysis::special::ln_factorial;
use crate::channel::{sample_csi, Csi, CsiModel, ObservationVector};
use crate::codebook::{Codebook, Codeword, SymbolAlphabet, WeightVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("observation has {got} entries, codewords have {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("weight vector has {weights} levels, alphabet has {alphabet}")]
    DimensionMismatch { weights: usize, alphabet: usize },
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error("correlation detection needs a binary alphabet, got {0} levels")]
    NonBinary(usize),
    #[error("Monte Carlo marginalisation needs at least one CSI sample")]
    NoSamples,
}

/// Outcome of one detection.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Decision after deterministic tie-breaking.
    pub best: Codeword,
    /// All co-optimal codewords, `best` included, when they were listed.
    /// Empty when enumeration was not requested or exceeded its cap.
    pub ties: Vec<Codeword>,
    /// Size of the co-optimal set (saturating).
    pub tie_count: u128,
    /// Detector metric of `best`: log-likelihood, log marginal likelihood
    /// or correlation `Σ s[k]·r[k]`, depending on the detector.
    pub score: f64,
    pub tie_broken: bool,
}

impl DetectionResult {
    /// Whether `codeword` is among the listed co-optimal decisions.
    pub fn is_tied_with(&self, codeword: &Codeword) -> bool {
        &self.best == codeword || self.ties.contains(codeword)
    }
}

/// Co-optimal set enumeration for the sorting detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TieOptions {
    pub enumerate: bool,
    pub cap: usize,
}

impl Default for TieOptions {
    fn default() -> Self {
        Self {
            enumerate: true,
            cap: 1024,
        }
    }
}

fn check_weights(alphabet: &SymbolAlphabet, weights: &WeightVector, obs: &ObservationVector) -> Result<(), DetectError> {
    if weights.num_levels() != alphabet.len() {
        return Err(DetectError::DimensionMismatch {
            weights: weights.num_levels(),
            alphabet: alphabet.len(),
        });
    }
    if obs.len() != weights.length() {
        return Err(DetectError::LengthMismatch {
            expected: weights.length(),
            got: obs.len(),
        });
    }
    Ok(())
}

/// Level sequence in sorted order: ω̄₀ copies of 0, then ω̄₁ copies of 1, …
fn level_ladder(weights: &WeightVector) -> Vec<u8> {
    weights
        .counts()
        .iter()
        .enumerate()
        .flat_map(|(level, &c)| std::iter::repeat_n(level as u8, c))
        .collect()
}

fn correlation(obs: &[u64], symbols: &[u8], alphabet: &SymbolAlphabet) -> f64 {
    obs.iter()
        .zip(symbols)
        .map(|(&r, &s)| r as f64 * alphabet.level(s))
        .sum()
}

fn multinomial_saturating(counts: &[usize]) -> u128 {
    let mut size: u128 = 1;
    let mut placed: u128 = 0;
    for &c in counts {
        for i in 1..=c as u128 {
            placed += 1;
            size = match size.checked_mul(placed) {
                Some(v) => v / i,
                None => return u128::MAX,
            };
        }
    }
    size
}

/// Assigns levels along `order` and reports the co-optimal structure:
/// runs of equal observations that straddle a level boundary.
/// Positions of one straddling run and the levels they share among them.
type TieGroup = (Vec<usize>, Vec<u8>);

fn assign_sorted(
    obs: &[u64],
    order: &[usize],
    ladder: &[u8],
    levels: usize,
) -> (Vec<u8>, Vec<TieGroup>, u128) {
    let mut symbols = vec![0u8; obs.len()];
    for (&pos, &level) in order.iter().zip(ladder) {
        symbols[pos] = level;
    }
    let mut groups = Vec::new();
    let mut count: u128 = 1;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && obs[order[end]] == obs[order[start]] {
            end += 1;
        }
        let group_levels = &ladder[start..end];
        if group_levels.first() != group_levels.last() {
            let mut per_level = vec![0usize; levels];
            for &l in group_levels {
                per_level[l as usize] += 1;
            }
            count = count.saturating_mul(multinomial_saturating(&per_level));
            groups.push((order[start..end].to_vec(), group_levels.to_vec()));
        }
        start = end;
    }
    (symbols, groups, count)
}

fn next_permutation(seq: &mut [u8]) -> bool {
    let n = seq.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && seq[i - 1] >= seq[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while seq[j] <= seq[i - 1] {
        j -= 1;
    }
    seq.swap(i - 1, j);
    seq[i..].reverse();
    true
}

fn enumerate_ties(base: &[u8], groups: &[(Vec<usize>, Vec<u8>)]) -> Vec<Codeword> {
    let mut out = Vec::new();
    let mut current = base.to_vec();
    fn walk(idx: usize, current: &mut Vec<u8>, groups: &[(Vec<usize>, Vec<u8>)], out: &mut Vec<Codeword>) {
        let Some((positions, levels)) = groups.get(idx) else {
            out.push(Codeword::new(current.clone()));
            return;
        };
        let mut arrangement = levels.clone();
        arrangement.sort_unstable();
        loop {
            for (&p, &l) in positions.iter().zip(&arrangement) {
                current[p] = l;
            }
            walk(idx + 1, current, groups, out);
            if !next_permutation(&mut arrangement) {
                break;
            }
        }
    }
    walk(0, &mut current, groups, &mut out);
    out.sort_unstable();
    out
}

/// CSI-free ML detection for a full SCW code with default tie options.
pub fn detect_scw_csi_free(
    obs: &ObservationVector,
    alphabet: &SymbolAlphabet,
    weights: &WeightVector,
) -> Result<DetectionResult, DetectError> {
    detect_scw_csi_free_with(obs, alphabet, weights, TieOptions::default())
}

/// Sorts `r` ascending (stable, smaller index first among equal counts)
/// and gives the first ω̄₀ positions level 0, the next ω̄₁ level 1, and so
/// on.
pub fn detect_scw_csi_free_with(
    obs: &ObservationVector,
    alphabet: &SymbolAlphabet,
    weights: &WeightVector,
    ties: TieOptions,
) -> Result<DetectionResult, DetectError> {
    check_weights(alphabet, weights, obs)?;
    let r = obs.counts();
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by_key(|&k| r[k]);
    let ladder = level_ladder(weights);
    let (symbols, groups, tie_count) = assign_sorted(r, &order, &ladder, alphabet.len());
    let listed = if ties.enumerate && tie_count <= ties.cap as u128 {
        enumerate_ties(&symbols, &groups)
    } else {
        Vec::new()
    };
    Ok(DetectionResult {
        score: correlation(r, &symbols, alphabet),
        best: Codeword::new(symbols),
        ties: listed,
        tie_count,
        tie_broken: tie_count > 1,
    })
}

/// Sorting detector that resolves ties uniformly at random over the
/// co-optimal set instead of by index.
pub fn detect_scw_csi_free_randomized<R: Rng + ?Sized>(
    obs: &ObservationVector,
    alphabet: &SymbolAlphabet,
    weights: &WeightVector,
    rng: &mut R,
) -> Result<DetectionResult, DetectError> {
    check_weights(alphabet, weights, obs)?;
    let r = obs.counts();
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&k| r[k]);
    let ladder = level_ladder(weights);
    let (symbols, _, tie_count) = assign_sorted(r, &order, &ladder, alphabet.len());
    Ok(DetectionResult {
        score: correlation(r, &symbols, alphabet),
        best: Codeword::new(symbols),
        ties: Vec::new(),
        tie_count,
        tie_broken: tie_count > 1,
    })
}

/// True iff `candidate` never puts a lower level on a strictly larger
/// observation than a higher level, i.e. it is one of the sorting
/// detector's co-optimal decisions for its own level counts.
pub fn is_sort_consistent(obs: &ObservationVector, candidate: &Codeword) -> bool {
    let r = obs.counts();
    let s = candidate.symbols();
    if r.len() != s.len() {
        return false;
    }
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by_key(|&k| (r[k], s[k]));
    order.windows(2).all(|w| s[w[0]] <= s[w[1]])
}

/// Correlation ML `argmax Σ s[k]·r[k]` over a binary codebook, exact in
/// integer arithmetic. Ties are listed in codebook order and the first
/// one is the decision.
pub fn detect_binary_cw_csi_free(obs: &ObservationVector, codebook: &Codebook) -> Result<DetectionResult, DetectError> {
    if !codebook.is_binary() {
        return Err(DetectError::NonBinary(codebook.alphabet().len()));
    }
    let first = codebook.codewords().first().ok_or(DetectError::EmptyCodebook)?;
    if first.len() != obs.len() {
        return Err(DetectError::LengthMismatch {
            expected: first.len(),
            got: obs.len(),
        });
    }
    let r = obs.counts();
    let metric = |cw: &Codeword| -> u64 {
        cw.symbols()
            .iter()
            .zip(r)
            .map(|(&s, &x)| s as u64 * x)
            .sum()
    };
    let scores: Vec<u64> = codebook.codewords().iter().map(metric).collect();
    let max = *scores.iter().max().expect("nonempty");
    let ties: Vec<Codeword> = codebook
        .codewords()
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s == max)
        .map(|(cw, _)| cw.clone())
        .collect();
    Ok(DetectionResult {
        best: ties[0].clone(),
        tie_count: ties.len() as u128,
        tie_broken: ties.len() > 1,
        ties,
        score: max as f64,
    })
}

/// `Σ_k [ r[k]·ln(s[k]c_s + c_n) − (s[k]c_s + c_n) − ln r[k]! ]`;
/// `−∞` when a positive count falls on a zero-mean position.
pub fn log_likelihood(obs: &ObservationVector, codeword: &Codeword, alphabet: &SymbolAlphabet, csi: &Csi) -> f64 {
    obs.counts()
        .iter()
        .zip(codeword.symbols())
        .map(|(&r, &s)| {
            let mu = csi.mean(alphabet.level(s));
            let data = if r == 0 {
                0.0
            } else if mu == 0.0 {
                f64::NEG_INFINITY
            } else {
                r as f64 * mu.ln()
            };
            data - mu - ln_factorial(r)
        })
        .sum()
}

/// Sufficient statistics of a hypothesis: per-level observation sums and
/// per-level occupancy.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct LevelStats {
    sums: Vec<u64>,
    counts: Vec<u64>,
}

fn level_stats(obs: &[u64], codeword: &Codeword, levels: usize) -> LevelStats {
    let mut sums = vec![0u64; levels];
    let mut counts = vec![0u64; levels];
    for (&r, &s) in obs.iter().zip(codeword.symbols()) {
        sums[s as usize] += r;
        counts[s as usize] += 1;
    }
    LevelStats { sums, counts }
}

/// Per-CSI precomputation: levels sharing one Poisson mean are merged so
/// hypotheses with equal sufficient statistics get bit-identical scores.
struct MeanClasses {
    class_of: Vec<usize>,
    ln_means: Vec<f64>,
    means: Vec<f64>,
}

impl MeanClasses {
    fn new(alphabet: &SymbolAlphabet, csi: &Csi) -> Self {
        let mut means: Vec<f64> = Vec::new();
        let mut class_of = Vec::with_capacity(alphabet.len());
        for &eta in alphabet.levels() {
            let mu = csi.mean(eta);
            match means.iter().position(|&m| m == mu) {
                Some(c) => class_of.push(c),
                None => {
                    class_of.push(means.len());
                    means.push(mu);
                }
            }
        }
        let ln_means = means.iter().map(|m| m.ln()).collect();
        Self {
            class_of,
            ln_means,
            means,
        }
    }

    fn score(&self, stats: &LevelStats, ln_fact: f64) -> f64 {
        let classes = self.means.len();
        let mut sums = vec![0u64; classes];
        let mut counts = vec![0u64; classes];
        for (level, &c) in self.class_of.iter().enumerate() {
            sums[c] += stats.sums[level];
            counts[c] += stats.counts[level];
        }
        let mut total = -ln_fact;
        for c in 0..classes {
            if sums[c] > 0 {
                if self.means[c] == 0.0 {
                    return f64::NEG_INFINITY;
                }
                total += sums[c] as f64 * self.ln_means[c];
            }
            total -= counts[c] as f64 * self.means[c];
        }
        total
    }
}

fn check_codebook(obs: &ObservationVector, codebook: &Codebook) -> Result<(), DetectError> {
    let first = codebook.codewords().first().ok_or(DetectError::EmptyCodebook)?;
    if first.len() != obs.len() {
        return Err(DetectError::LengthMismatch {
            expected: first.len(),
            got: obs.len(),
        });
    }
    Ok(())
}

fn argmax_with_ties(codebook: &Codebook, scores: &[f64]) -> DetectionResult {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<Codeword> = codebook
        .codewords()
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s == max)
        .map(|(cw, _)| cw.clone())
        .collect();
    let ties = if ties.is_empty() {
        codebook.codewords().to_vec()
    } else {
        ties
    };
    DetectionResult {
        best: ties[0].clone(),
        tie_count: ties.len() as u128,
        tie_broken: ties.len() > 1,
        ties,
        score: max,
    }
}

/// Exhaustive coherent ML over `codebook` with known CSI. Equal scores are
/// exact: hypotheses with the same per-level sufficient statistics score
/// identically.
pub fn detect_coherent_ml(obs: &ObservationVector, codebook: &Codebook, csi: &Csi) -> Result<DetectionResult, DetectError> {
    check_codebook(obs, codebook)?;
    let r = obs.counts();
    let levels = codebook.alphabet().len();
    let ln_fact: f64 = r.iter().map(|&x| ln_factorial(x)).sum();
    let classes = MeanClasses::new(codebook.alphabet(), csi);
    let scores: Vec<f64> = codebook
        .codewords()
        .iter()
        .map(|cw| classes.score(&level_stats(r, cw, levels), ln_fact))
        .collect();
    Ok(argmax_with_ties(codebook, &scores))
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Non-coherent ML: argmax of the likelihood averaged over the CSI law.
///
/// A deterministic model reduces to coherent detection, a finite mixture
/// is summed exactly, and a parametric model is averaged over `n_mc`
/// CSI draws shared by every hypothesis.
pub fn detect_noncoherent_ml<R: Rng + ?Sized>(
    obs: &ObservationVector,
    codebook: &Codebook,
    model: &CsiModel,
    n_mc: usize,
    rng: &mut R,
) -> Result<DetectionResult, DetectError> {
    check_codebook(obs, codebook)?;
    let weighted: Vec<(Csi, f64)> = match model {
        CsiModel::Deterministic { csi } => return detect_coherent_ml(obs, codebook, csi),
        CsiModel::FiniteMixture { components } => components
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|&(c, p)| (c, p.ln()))
            .collect(),
        CsiModel::ParametricRandom(_) => {
            if n_mc == 0 {
                return Err(DetectError::NoSamples);
            }
            let ln_w = -(n_mc as f64).ln();
            (0..n_mc).map(|_| (sample_csi(model, rng), ln_w)).collect()
        }
    };
    let r = obs.counts();
    let levels = codebook.alphabet().len();
    let ln_fact: f64 = r.iter().map(|&x| ln_factorial(x)).sum();
    let classes: Vec<(MeanClasses, f64)> = weighted
        .iter()
        .map(|(c, lw)| (MeanClasses::new(codebook.alphabet(), c), *lw))
        .collect();
    let scores: Vec<f64> = codebook
        .codewords()
        .iter()
        .map(|cw| {
            let stats = level_stats(r, cw, levels);
            log_sum_exp(classes.iter().map(|(mc, lw)| lw + mc.score(&stats, ln_fact)))
        })
        .collect();
    Ok(argmax_with_ties(codebook, &scores))
}

/// Uncoded per-symbol coherent ML: each `r[k]` gets the level maximising
/// `r·ln(η·c_s + c_n) − η·c_s`; ties go to the lowest level.
pub fn detect_symbolwise_coherent(obs: &ObservationVector, alphabet: &SymbolAlphabet, csi: &Csi) -> Vec<u8> {
    let means: Vec<f64> = alphabet.levels().iter().map(|&eta| csi.mean(eta)).collect();
    obs.counts()
        .iter()
        .map(|&r| {
            let metric = |level: usize| -> f64 {
                let mu = means[level];
                let data = if r == 0 {
                    0.0
                } else if mu == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    r as f64 * mu.ln()
                };
                data - alphabet.levels()[level] * csi.c_s
            };
            lowest_argmax((0..means.len()).map(metric)) as u8
        })
        .collect()
}

/// Index of the first maximum.
fn lowest_argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_value || (i == 0) {
            best = i;
            best_value = v;
        }
    }
    best
}
