//! Strongly constant-weight codebooks: construction, enumeration, rate and
//! distance analysis, and the line-oriented text format.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Full enumeration is refused above this many codewords unless a larger
/// cap is requested explicitly.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodebookError {
    #[error("alphabet needs at least two levels, got {0}")]
    AlphabetTooSmall(usize),
    #[error("alphabet supports at most 256 levels, got {0}")]
    AlphabetTooLarge(usize),
    #[error("alphabet levels must be strictly increasing from 0 to 1: {0:?}")]
    InvalidLevels(Vec<f64>),
    #[error("weight vector has total length 0")]
    EmptyWeights,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("full enumeration would produce {count} codewords, above the cap of {cap}")]
    CapExceeded { count: BigUint, cap: u64 },
    #[error("symbol index {index} out of range for an alphabet of {levels} levels")]
    SymbolOutOfRange { index: u8, levels: usize },
    #[error("duplicate codeword {0}")]
    DuplicateCodeword(Codeword),
    #[error("codeword {0} does not satisfy the weight vector")]
    WeightViolation(Codeword),
    #[error("full codebook must hold {expected} codewords, got {got}")]
    NotFull { expected: BigUint, got: usize },
    #[error("partial codebook of {target} codewords requested from a base of {available}")]
    TargetTooLarge { target: usize, available: usize },
    #[error("operation requires a binary alphabet, got {0} levels")]
    NonBinary(usize),
    #[error("malformed codebook text at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Ordered CSK symbol levels `0 = η₀ < η₁ < … < η_{L−1} = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolAlphabet {
    levels: Vec<f64>,
}

impl SymbolAlphabet {
    pub fn new(levels: Vec<f64>) -> Result<Self, CodebookError> {
        if levels.len() < 2 {
            return Err(CodebookError::AlphabetTooSmall(levels.len()));
        }
        if levels.len() > 256 {
            return Err(CodebookError::AlphabetTooLarge(levels.len()));
        }
        let increasing = levels.windows(2).all(|w| w[0] < w[1]);
        if !increasing || levels[0] != 0.0 || levels[levels.len() - 1] != 1.0 {
            return Err(CodebookError::InvalidLevels(levels));
        }
        Ok(Self { levels })
    }

    /// Equally spaced levels `{0, 1/(L−1), …, 1}`.
    pub fn uniform(size: usize) -> Result<Self, CodebookError> {
        if size < 2 {
            return Err(CodebookError::AlphabetTooSmall(size));
        }
        let step = (size - 1) as f64;
        let mut levels: Vec<f64> = (0..size).map(|i| i as f64 / step).collect();
        levels[size - 1] = 1.0;
        Self::new(levels)
    }

    pub fn binary() -> Self {
        Self { levels: vec![0.0, 1.0] }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.levels.len() == 2
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn level(&self, index: u8) -> f64 {
        self.levels[index as usize]
    }
}

/// Per-level occurrence counts `ω̄` of an SCW code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WeightVector {
    counts: Vec<usize>,
}

impl WeightVector {
    pub fn new(counts: Vec<usize>) -> Result<Self, CodebookError> {
        if counts.len() < 2 {
            return Err(CodebookError::AlphabetTooSmall(counts.len()));
        }
        if counts.len() > 256 {
            return Err(CodebookError::AlphabetTooLarge(counts.len()));
        }
        if counts.iter().sum::<usize>() == 0 {
            return Err(CodebookError::EmptyWeights);
        }
        Ok(Self { counts })
    }

    /// Binary constant-weight code `CW(K, ω)` as the SCW vector `[K−ω, ω]`.
    pub fn binary(length: usize, weight: usize) -> Result<Self, CodebookError> {
        if weight > length {
            return Err(CodebookError::DimensionMismatch {
                expected: length,
                got: weight,
            });
        }
        Self::new(vec![length - weight, weight])
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_levels(&self) -> usize {
        self.counts.len()
    }

    /// Codeword length `K`.
    pub fn length(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Total weight `ω = Σ ω̄ℓ·ηℓ`.
    pub fn total_weight(&self, alphabet: &SymbolAlphabet) -> f64 {
        self.counts
            .iter()
            .zip(alphabet.levels())
            .map(|(&c, &eta)| c as f64 * eta)
            .sum()
    }

    pub fn is_balanced(&self) -> bool {
        self.counts.windows(2).all(|w| w[0] == w[1])
    }

    /// Level frequencies `ρℓ = ω̄ℓ / K`.
    pub fn frequencies(&self) -> Vec<f64> {
        let k = self.length() as f64;
        self.counts.iter().map(|&c| c as f64 / k).collect()
    }

    pub fn check_alphabet(&self, alphabet: &SymbolAlphabet) -> Result<(), CodebookError> {
        if self.counts.len() != alphabet.len() {
            return Err(CodebookError::DimensionMismatch {
                expected: alphabet.len(),
                got: self.counts.len(),
            });
        }
        Ok(())
    }
}

/// A length-`K` sequence of alphabet indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Codeword(Vec<u8>);

impl Codeword {
    pub fn new(symbols: Vec<u8>) -> Self {
        Self(symbols)
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Occurrence count of each level.
    pub fn level_counts(&self, levels: usize) -> Vec<usize> {
        let mut counts = vec![0; levels];
        for &s in &self.0 {
            if (s as usize) < levels {
                counts[s as usize] += 1;
            }
        }
        counts
    }

    /// Symbol values `s[k]` under `alphabet`.
    pub fn values(&self, alphabet: &SymbolAlphabet) -> Vec<f64> {
        self.0.iter().map(|&s| alphabet.level(s)).collect()
    }

    pub fn hamming_distance(&self, other: &Codeword) -> usize {
        self.0
            .iter()
            .zip(&other.0)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }
}

impl From<Vec<u8>> for Codeword {
    fn from(v: Vec<u8>) -> Self {
        Self(v)
    }
}

impl fmt::Display for Codeword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "]")
    }
}

/// An explicit set of codewords over one alphabet.
///
/// Codeword position is the message index; codebooks built by
/// [`enumerate_full_scw`] and [`sample_partial_codebook`] are in
/// lexicographic order, so the index equals the lexicographic rank.
#[derive(Debug, Clone)]
pub struct Codebook {
    alphabet: SymbolAlphabet,
    weights: Option<WeightVector>,
    codewords: Vec<Codeword>,
    full: bool,
    positions: HashMap<Codeword, usize>,
}

impl PartialEq for Codebook {
    fn eq(&self, other: &Self) -> bool {
        self.alphabet == other.alphabet
            && self.weights == other.weights
            && self.codewords == other.codewords
            && self.full == other.full
    }
}

impl Codebook {
    /// Builds a codebook, checking symbol ranges, duplicates, the weight
    /// constraint (when `weights` is given) and the full-code size.
    pub fn new(
        alphabet: SymbolAlphabet,
        weights: Option<WeightVector>,
        codewords: Vec<Codeword>,
        full: bool,
    ) -> Result<Self, CodebookError> {
        if let Some(w) = &weights {
            w.check_alphabet(&alphabet)?;
        }
        let levels = alphabet.len();
        let mut positions = HashMap::with_capacity(codewords.len());
        let length = codewords.first().map(Codeword::len);
        for (i, cw) in codewords.iter().enumerate() {
            if let Some(&bad) = cw.symbols().iter().find(|&&s| s as usize >= levels) {
                return Err(CodebookError::SymbolOutOfRange { index: bad, levels });
            }
            if Some(cw.len()) != length {
                return Err(CodebookError::DimensionMismatch {
                    expected: length.unwrap_or(0),
                    got: cw.len(),
                });
            }
            if let Some(w) = &weights {
                if cw.level_counts(levels) != w.counts() {
                    return Err(CodebookError::WeightViolation(cw.clone()));
                }
            }
            if positions.insert(cw.clone(), i).is_some() {
                return Err(CodebookError::DuplicateCodeword(cw.clone()));
            }
        }
        if full {
            let w = weights.as_ref().ok_or(CodebookError::EmptyWeights)?;
            let expected = codebook_size(w);
            if expected != BigUint::from(codewords.len()) {
                return Err(CodebookError::NotFull {
                    expected,
                    got: codewords.len(),
                });
            }
        }
        Ok(Self {
            alphabet,
            weights,
            codewords,
            full,
            positions,
        })
    }

    pub fn alphabet(&self) -> &SymbolAlphabet {
        &self.alphabet
    }

    pub fn weights(&self) -> Option<&WeightVector> {
        self.weights.as_ref()
    }

    pub fn codewords(&self) -> &[Codeword] {
        &self.codewords
    }

    pub fn is_full(&self) -> bool {
        self.full
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    /// Codeword length `K` (0 for an empty codebook).
    pub fn codeword_length(&self) -> usize {
        self.codewords.first().map_or(0, Codeword::len)
    }

    /// Message index of `codeword`, if it belongs to the codebook.
    pub fn position(&self, codeword: &Codeword) -> Option<usize> {
        self.positions.get(codeword).copied()
    }

    pub fn is_binary(&self) -> bool {
        self.alphabet.is_binary()
    }

    /// Serializes to the text format: a `L K M full|partial` header followed
    /// by one space-separated codeword per line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} {} {}\n",
            self.alphabet.len(),
            self.codeword_length(),
            self.len(),
            if self.full { "full" } else { "partial" }
        );
        for cw in &self.codewords {
            let line: Vec<String> = cw.symbols().iter().map(u8::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses the text format. The alphabet is the uniform one of the
    /// header's size; weights are inferred when every codeword shares the
    /// same per-level counts.
    pub fn from_text(text: &str) -> Result<Self, CodebookError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(CodebookError::Parse {
            line: 1,
            reason: "missing header".into(),
        })?;
        let parse_err = |line: usize, reason: String| CodebookError::Parse {
            line: line + 1,
            reason,
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(hline, "header must be `L K M full|partial`".into()));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| parse_err(hline, format!("bad header field {s:?}: {e}")))
        };
        let (levels, length, size) = (num(fields[0])?, num(fields[1])?, num(fields[2])?);
        let full = match fields[3] {
            "full" => true,
            "partial" => false,
            other => return Err(parse_err(hline, format!("unknown fullness flag {other:?}"))),
        };
        let alphabet = SymbolAlphabet::uniform(levels)?;
        let mut codewords = Vec::with_capacity(size);
        for (i, line) in lines {
            let symbols = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<u8>()
                        .map_err(|e| parse_err(i, format!("bad symbol {t:?}: {e}")))
                })
                .collect::<Result<Vec<u8>, _>>()?;
            if symbols.len() != length {
                return Err(parse_err(
                    i,
                    format!("expected {length} symbols, got {}", symbols.len()),
                ));
            }
            codewords.push(Codeword::new(symbols));
        }
        if codewords.len() != size {
            return Err(CodebookError::Parse {
                line: hline + 1,
                reason: format!("header declares {size} codewords, found {}", codewords.len()),
            });
        }
        let weights = infer_weights(&codewords, levels);
        if full && weights.is_none() {
            return Err(parse_err(hline, "full codebook is not strongly constant-weight".into()));
        }
        Self::new(alphabet, weights, codewords, full)
    }
}

fn infer_weights(codewords: &[Codeword], levels: usize) -> Option<WeightVector> {
    let first = codewords.first()?.level_counts(levels);
    codewords
        .iter()
        .all(|cw| cw.level_counts(levels) == first)
        .then(|| WeightVector::new(first).ok())
        .flatten()
}

/// Exact multinomial `K! / ∏ ω̄ℓ!`.
pub fn codebook_size(weights: &WeightVector) -> BigUint {
    let mut size = BigUint::one();
    let mut placed = 0usize;
    for &c in weights.counts() {
        placed += c;
        size *= binomial(placed as u64, c as u64);
    }
    size
}

/// Exact binomial coefficient.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Natural logarithm of an arbitrary-precision integer.
pub fn ln_biguint(value: &BigUint) -> f64 {
    if value.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = value.bits();
    if bits <= 1000 {
        return value.to_f64().map_or(f64::INFINITY, f64::ln);
    }
    let shift = bits - 64;
    let top: BigUint = value >> shift;
    top.to_f64().unwrap_or(f64::INFINITY).ln() + shift as f64 * std::f64::consts::LN_2
}

/// Enumerates every codeword satisfying `weights`, in lexicographic order,
/// refusing counts above [`DEFAULT_ENUMERATION_CAP`].
pub fn enumerate_full_scw(
    alphabet: &SymbolAlphabet,
    weights: &WeightVector,
) -> Result<Codebook, CodebookError> {
    enumerate_full_scw_capped(alphabet, weights, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_full_scw_capped(
    alphabet: &SymbolAlphabet,
    weights: &WeightVector,
    cap: u64,
) -> Result<Codebook, CodebookError> {
    weights.check_alphabet(alphabet)?;
    let count = codebook_size(weights);
    if count > BigUint::from(cap) {
        return Err(CodebookError::CapExceeded { count, cap });
    }
    let mut current: Vec<u8> = weights
        .counts()
        .iter()
        .enumerate()
        .flat_map(|(level, &c)| std::iter::repeat_n(level as u8, c))
        .collect();
    let mut codewords = Vec::with_capacity(count.to_usize().unwrap_or(0));
    loop {
        codewords.push(Codeword::new(current.clone()));
        if !next_permutation(&mut current) {
            break;
        }
    }
    Codebook::new(alphabet.clone(), Some(weights.clone()), codewords, true)
}

/// Advances to the next lexicographic multiset permutation; false at the end.
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

fn multinomial_u128(counts: &[usize]) -> Option<u128> {
    let mut size: u128 = 1;
    let mut placed: u128 = 0;
    for &c in counts {
        for i in 1..=c as u128 {
            placed += 1;
            size = size.checked_mul(placed)? / i;
        }
    }
    Some(size)
}

/// Lexicographic rank of `codeword` among all codewords with its level
/// counts. `None` if the count overflows `u128`.
pub fn rank_scw(codeword: &Codeword, levels: usize) -> Option<u128> {
    let mut counts = codeword.level_counts(levels);
    let mut rank: u128 = 0;
    for &s in codeword.symbols() {
        for smaller in 0..s as usize {
            if counts[smaller] > 0 {
                counts[smaller] -= 1;
                rank += multinomial_u128(&counts)?;
                counts[smaller] += 1;
            }
        }
        counts[s as usize] -= 1;
    }
    Some(rank)
}

/// Inverse of [`rank_scw`]: the codeword of lexicographic rank `rank` in
/// the full SCW code of `weights`.
pub fn unrank_scw(weights: &WeightVector, mut rank: u128) -> Option<Codeword> {
    let mut counts = weights.counts().to_vec();
    let total = multinomial_u128(&counts)?;
    if rank >= total {
        return None;
    }
    let mut symbols = Vec::with_capacity(weights.length());
    for _ in 0..weights.length() {
        for level in 0..counts.len() {
            if counts[level] == 0 {
                continue;
            }
            counts[level] -= 1;
            let block = multinomial_u128(&counts)?;
            if rank < block {
                symbols.push(level as u8);
                break;
            }
            rank -= block;
            counts[level] += 1;
        }
    }
    Some(Codeword::new(symbols))
}

/// Size and rate of a full SCW code.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodeRateReport {
    #[serde(serialize_with = "serialize_decimal")]
    pub size: BigUint,
    /// `log_L(M) / K`.
    pub rate: f64,
    /// `H_L(ρ)`, the large-`K` limit of the rate.
    pub asymptotic_rate: f64,
    /// `ω / K`, the mean fraction of `N^tx` released per symbol.
    pub release_fraction: f64,
}

fn serialize_decimal<S: serde::Serializer>(value: &BigUint, serializer: S) -> Result<S::Ok, S::Error> {
    serializer.collect_str(value)
}

pub fn code_rate(alphabet: &SymbolAlphabet, weights: &WeightVector) -> Result<CodeRateReport, CodebookError> {
    weights.check_alphabet(alphabet)?;
    let size = codebook_size(weights);
    let levels = weights.num_levels() as f64;
    let k = weights.length() as f64;
    let rate = ln_biguint(&size) / levels.ln() / k;
    let asymptotic_rate = -weights
        .frequencies()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
        / levels.ln();
    Ok(CodeRateReport {
        size,
        rate,
        asymptotic_rate,
        release_fraction: weights.total_weight(alphabet) / k,
    })
}

/// Uniform without-replacement subset of `base`, kept in base order.
pub fn sample_partial_codebook(
    base: &Codebook,
    target_size: usize,
    seed: u64,
) -> Result<Codebook, CodebookError> {
    if target_size > base.len() {
        return Err(CodebookError::TargetTooLarge {
            target: target_size,
            available: base.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, base.len(), target_size).into_vec();
    picked.sort_unstable();
    let codewords = picked.into_iter().map(|i| base.codewords[i].clone()).collect();
    Codebook::new(base.alphabet.clone(), base.weights.clone(), codewords, false)
}

/// Hamming-distance spectrum: ordered-pair counts keyed by distance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DistanceSpectrum(BTreeMap<usize, u64>);

impl DistanceSpectrum {
    pub fn from_counts(counts: BTreeMap<usize, u64>) -> Self {
        Self(counts)
    }

    /// Spectrum of the full binary code `CW(K, ω)`: each codeword has
    /// `C(ω,e)·C(K−ω,e)` neighbours at distance `2e`.
    pub fn full_binary_cw(length: usize, weight: usize) -> Self {
        let size = binomial(length as u64, weight as u64);
        let mut counts = BTreeMap::new();
        for e in 1..=weight.min(length - weight) {
            let per_codeword = binomial(weight as u64, e as u64)
                * binomial((length - weight) as u64, e as u64);
            let pairs = (&size * per_codeword).to_u64().unwrap_or(u64::MAX);
            counts.insert(2 * e, pairs);
        }
        Self(counts)
    }

    pub fn counts(&self) -> &BTreeMap<usize, u64> {
        &self.0
    }

    pub fn total_pairs(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.0.iter().map(|(&d, &n)| (d, n))
    }
}

/// Counts all ordered codeword pairs `i ≠ j` by Hamming distance.
pub fn distance_spectrum(codebook: &Codebook) -> Result<DistanceSpectrum, CodebookError> {
    if !codebook.is_binary() {
        return Err(CodebookError::NonBinary(codebook.alphabet.len()));
    }
    let mut counts = BTreeMap::new();
    let words = codebook.codewords();
    for (i, a) in words.iter().enumerate() {
        for b in &words[i + 1..] {
            *counts.entry(a.hamming_distance(b)).or_insert(0) += 2;
        }
    }
    Ok(DistanceSpectrum(counts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScwValidation {
    pub valid: bool,
    /// Index and value of the first codeword whose level counts differ.
    pub violator: Option<(usize, Codeword)>,
    pub diagnostics: String,
}

/// Checks that all codewords share one per-level count vector: the
/// codebook's weights when it has them, else those of the first codeword.
pub fn validate_scw(codebook: &Codebook) -> ScwValidation {
    validate_against(codebook.codewords(), codebook.alphabet.len(), codebook.weights.as_ref())
}

/// As [`validate_scw`] but against an explicit weight vector.
pub fn validate_scw_with(codebook: &Codebook, weights: &WeightVector) -> ScwValidation {
    validate_against(codebook.codewords(), codebook.alphabet.len(), Some(weights))
}

fn validate_against(
    codewords: &[Codeword],
    levels: usize,
    weights: Option<&WeightVector>,
) -> ScwValidation {
    let reference = match (weights, codewords.first()) {
        (Some(w), _) => w.counts().to_vec(),
        (None, Some(first)) => first.level_counts(levels),
        (None, None) => {
            return ScwValidation {
                valid: true,
                violator: None,
                diagnostics: "empty codebook".into(),
            }
        }
    };
    for (i, cw) in codewords.iter().enumerate() {
        let counts = cw.level_counts(levels);
        if counts != reference {
            return ScwValidation {
                valid: false,
                violator: Some((i, cw.clone())),
                diagnostics: format!(
                    "codeword {i} {cw} has level counts {counts:?}, expected {reference:?}"
                ),
            };
        }
    }
    ScwValidation {
        valid: true,
        violator: None,
        diagnostics: format!("{} codewords with level counts {reference:?}", codewords.len()),
    }
}
