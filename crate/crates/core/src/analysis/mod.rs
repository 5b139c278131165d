//! Closed-form CER bounds for SCW and binary constant-weight codes.
//!
//! * [`chernoff_union_bound`]: union bound over codeword pairs with a
//!   Chernoff bound on each pairwise error event; valid for any SCW code.
//! * [`skellam_union_bound`]: union bound with the exact Skellam pairwise
//!   error probability of binary CW codes, ties counted as half an error.
//! * [`orderstat_bounds`]: lower/upper sandwich for full binary CW codes
//!   from the law of the smallest "one" observation and the largest "zero"
//!   observation.
//!
//! Union bounds above 1 are returned as computed.

pub mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Csi;
use crate::codebook::{Codebook, DistanceSpectrum, SymbolAlphabet};
use special::{poisson_ln_cdf, poisson_ln_pmf, poisson_ln_sf, skellam_pmf};

/// Relative residual below which infinite sums are cut off.
pub const TRUNCATION_TOLERANCE: f64 = 1e-12;

/// Default Chernoff parameter.
pub const DEFAULT_CHERNOFF_T: f64 = 0.5;
pub const DEFAULT_T_MAX: f64 = 5.0;
pub const T_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("Chernoff parameter must be positive, got {0}")]
    NonPositiveT(f64),
    #[error("odd pairwise distance {0} cannot occur in a binary constant-weight code")]
    OddDistance(usize),
    #[error("weight {weight} is invalid for codeword length {length}")]
    InvalidWeight { length: usize, weight: usize },
    #[error("codebook alphabet does not match the bound's alphabet")]
    AlphabetMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Chernoff,
    SkellamUnion,
    OrderstatLower,
    OrderstatUpper,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Chernoff => "chernoff",
            BoundKind::SkellamUnion => "skellam_union",
            BoundKind::OrderstatLower => "orderstat_lower",
            BoundKind::OrderstatUpper => "orderstat_upper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub value: f64,
    /// Chernoff parameter, when one was used.
    pub t: Option<f64>,
    /// Last index of the truncated series, when one was summed.
    pub truncation: Option<u64>,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `μ_a·((μ_b/μ_a)^t − 1)`: the log-MGF contribution of one symbol position
/// whose true mean is `μ_a` and whose competing mean is `μ_b`.
fn mgf_exponent(mu_true: f64, mu_alt: f64, t: f64) -> f64 {
    if mu_true == mu_alt {
        return 0.0;
    }
    mu_alt.powf(t) * mu_true.powf(1.0 - t) - mu_true
}

/// Log-MGF exponent `Σ_k λ[k](e^{ϖ[k]t} − 1)` for one ordered pair.
pub fn pairwise_chernoff_exponent(table: &[Vec<f64>], sent: &[u8], alt: &[u8]) -> f64 {
    sent.iter()
        .zip(alt)
        .map(|(&a, &b)| table[a as usize][b as usize])
        .sum()
}

fn exponent_table(alphabet: &SymbolAlphabet, csi: &Csi, t: f64) -> Vec<Vec<f64>> {
    let means: Vec<f64> = alphabet.levels().iter().map(|&eta| csi.mean(eta)).collect();
    means
        .iter()
        .map(|&a| means.iter().map(|&b| mgf_exponent(a, b, t)).collect())
        .collect()
}

/// `(1/M) Σ_{s} Σ_{ŝ≠s} exp(Σ_k λ[k](e^{ϖ[k]t} − 1))`.
pub fn chernoff_union_bound(codebook: &Codebook, csi: &Csi, t: f64) -> Result<BoundReport, BoundError> {
    if !(t > 0.0) {
        return Err(BoundError::NonPositiveT(t));
    }
    Ok(BoundReport {
        kind: BoundKind::Chernoff,
        value: chernoff_value(codebook, csi, t),
        t: Some(t),
        truncation: None,
    })
}

fn chernoff_value(codebook: &Codebook, csi: &Csi, t: f64) -> f64 {
    let m = codebook.len();
    if m < 2 {
        return 0.0;
    }
    let table = exponent_table(codebook.alphabet(), csi, t);
    let words = codebook.codewords();
    let table = &table;
    let exponents = || {
        words.iter().enumerate().flat_map(move |(i, s)| {
            words
                .iter()
                .enumerate()
                .filter(move |&(j, _)| j != i)
                .map(move |(_, alt)| pairwise_chernoff_exponent(table, s.symbols(), alt.symbols()))
        })
    };
    let max = exponents().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut acc = CompensatedSum::default();
    for e in exponents() {
        acc.add((e - max).exp());
    }
    (max + acc.value().ln() - (m as f64).ln()).exp()
}

/// Golden-section minimisation of the Chernoff union bound over
/// `t ∈ (0, t_max]`. The result never exceeds the bound at `t = 0.5`.
pub fn optimize_chernoff_t(codebook: &Codebook, csi: &Csi) -> (f64, BoundReport) {
    optimize_chernoff_t_within(codebook, csi, DEFAULT_T_MAX, T_TOLERANCE)
}

pub fn optimize_chernoff_t_within(codebook: &Codebook, csi: &Csi, t_max: f64, tol: f64) -> (f64, BoundReport) {
    let report = |t: f64, value: f64| BoundReport {
        kind: BoundKind::Chernoff,
        value,
        t: Some(t),
        truncation: None,
    };
    if codebook.len() < 2 {
        return (t_max, report(t_max, 0.0));
    }
    let f = |t: f64| chernoff_value(codebook, csi, t);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, t_max);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let (mut t_star, mut best) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    let at_edge = f(t_max);
    if at_edge < best {
        t_star = t_max;
        best = at_edge;
    }
    let at_default = f(DEFAULT_CHERNOFF_T);
    if DEFAULT_CHERNOFF_T <= t_max && at_default < best {
        t_star = DEFAULT_CHERNOFF_T;
        best = at_default;
    }
    (t_star, report(t_star, best))
}

/// Chernoff bound on `P(N₂ − N₁ ≥ a)` for `a` above the mean `λ₂ − λ₁`.
fn skellam_upper_tail_bound(a: f64, lambda1: f64, lambda2: f64) -> f64 {
    if a <= lambda2 - lambda1 {
        return 1.0;
    }
    let e_t = (a + (a * a + 4.0 * lambda1 * lambda2).sqrt()) / (2.0 * lambda2);
    let t = e_t.ln();
    (-t * a + lambda2 * (e_t - 1.0) + lambda1 * (1.0 / e_t - 1.0)).exp()
}

/// `0.5·P(X = 0) + P(X ≥ 1)` for `X = N₂ − N₁`, the tie-halved pairwise
/// error probability of two binary codewords. Returns the value and the
/// last summed index.
pub fn skellam_pairwise_error(lambda1: f64, lambda2: f64) -> (f64, u64) {
    let mut acc = CompensatedSum::default();
    acc.add(0.5 * skellam_pmf(0, lambda1, lambda2));
    if lambda2 == 0.0 {
        return (acc.value(), 0);
    }
    let mean = lambda2 - lambda1;
    let limit = (mean.max(0.0) + 60.0 * (lambda1 + lambda2).sqrt() + 1000.0) as u64;
    let mut x = 1u64;
    loop {
        acc.add(skellam_pmf(x as i64, lambda1, lambda2));
        let residual = skellam_upper_tail_bound((x + 1) as f64, lambda1, lambda2);
        let done = (x as f64 > mean && residual <= TRUNCATION_TOLERANCE * acc.value())
            || residual < f64::MIN_POSITIVE
            || x >= limit;
        if done {
            return (acc.value(), x);
        }
        x += 1;
    }
}

/// `(1/M) Σ_{d} n_d · [0.5 f_X(0) + Σ_{x≥1} f_X(x)]` with Skellam means
/// `λ₁ = d(c_s + c_n)/2` and `λ₂ = d·c_n/2`.
pub fn skellam_union_bound(spectrum: &DistanceSpectrum, size: usize, csi: &Csi) -> Result<BoundReport, BoundError> {
    let mut acc = CompensatedSum::default();
    let mut deepest = 0;
    for (d, pairs) in spectrum.iter() {
        if d % 2 == 1 {
            return Err(BoundError::OddDistance(d));
        }
        let half = d as f64 / 2.0;
        let (pep, depth) = skellam_pairwise_error(half * (csi.c_s + csi.c_n), half * csi.c_n);
        deepest = deepest.max(depth);
        acc.add(pairs as f64 * pep);
    }
    let value = if size == 0 { 0.0 } else { acc.value() / size as f64 };
    Ok(BoundReport {
        kind: BoundKind::SkellamUnion,
        value,
        t: None,
        truncation: Some(deepest),
    })
}

/// How the pmf of the largest "zero" observation is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxPmfForm {
    /// `F(y)ⁿ − F(y−1)ⁿ`, the exact law of the maximum of `n` iid counts.
    #[default]
    Exact,
    /// `n·f(y)·F(y)ⁿ⁻¹`, the density-style expression; it overstates the
    /// pmf of a discrete maximum and its "lower" sum can exceed the CER.
    Density,
}

/// Lower and upper CER bounds for the full binary code `CW(K, ω)` with the
/// exact maximum pmf.
pub fn orderstat_bounds(length: usize, weight: usize, csi: &Csi) -> Result<(BoundReport, BoundReport), BoundError> {
    orderstat_bounds_with(length, weight, csi, MaxPmfForm::Exact)
}

/// `Σ_{y≥1} F_X(y−1) f_Y(y)` and `Σ_{y≥0} F_X(y) f_Y(y)` where
/// `F_X(x) = 1 − (1 − F_P(x, c_s + c_n))^ω` is the cdf of the smallest
/// observation at a "one" position and `f_Y` the pmf of the largest of the
/// `K − ω` observations at "zero" positions.
pub fn orderstat_bounds_with(
    length: usize,
    weight: usize,
    csi: &Csi,
    form: MaxPmfForm,
) -> Result<(BoundReport, BoundReport), BoundError> {
    if weight > length {
        return Err(BoundError::InvalidWeight { length, weight });
    }
    let report = |kind, value, depth| BoundReport {
        kind,
        value,
        t: None,
        truncation: Some(depth),
    };
    if weight == 0 || weight == length {
        return Ok((
            report(BoundKind::OrderstatLower, 0.0, 0),
            report(BoundKind::OrderstatUpper, 0.0, 0),
        ));
    }
    let ones = weight as f64;
    let zeros = (length - weight) as f64;
    let signal = csi.c_s + csi.c_n;
    let noise = csi.c_n;

    // cdf of the minimum over the "one" positions
    let min_cdf = |x: u64| -> f64 { -(ones * poisson_ln_sf(x, signal)).exp_m1() };
    let max_pmf = |y: u64, ln_cdf_prev: f64, ln_cdf: f64| -> f64 {
        match form {
            MaxPmfForm::Exact => {
                if ln_cdf_prev == f64::NEG_INFINITY {
                    (zeros * ln_cdf).exp()
                } else {
                    (zeros * ln_cdf_prev).exp() * (zeros * (ln_cdf - ln_cdf_prev)).exp_m1()
                }
            }
            MaxPmfForm::Density => {
                (zeros.ln() + poisson_ln_pmf(y, noise) + (zeros - 1.0) * ln_cdf).exp()
            }
        }
    };

    let limit = (noise + 60.0 * noise.sqrt() + 2000.0) as u64;
    let mut lower = CompensatedSum::default();
    let mut upper = CompensatedSum::default();
    let mut ln_cdf_prev = f64::NEG_INFINITY;
    let mut min_cdf_prev = 0.0;
    let mut y = 0u64;
    loop {
        let ln_cdf = poisson_ln_cdf(y, noise);
        let f_y = max_pmf(y, ln_cdf_prev, ln_cdf);
        let f_x = min_cdf(y);
        upper.add(f_x * f_y);
        if y >= 1 {
            lower.add(min_cdf_prev * f_y);
        }
        // mass of the maximum beyond y
        let tail = -(zeros * ln_cdf).exp_m1();
        let done = tail <= TRUNCATION_TOLERANCE * upper.value() || tail < f64::MIN_POSITIVE || y >= limit;
        if done {
            break;
        }
        ln_cdf_prev = ln_cdf;
        min_cdf_prev = f_x;
        y += 1;
    }
    Ok((
        report(BoundKind::OrderstatLower, lower.value(), y),
        report(BoundKind::OrderstatUpper, upper.value(), y),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{enumerate_full_scw, Codeword, WeightVector};
    use special::poisson_pmf;

    fn csi(c_s: f64, c_n: f64) -> Csi {
        Csi::new(c_s, c_n).unwrap()
    }

    #[test]
    fn chernoff_single_codeword_is_zero() {
        let cb = Codebook::new(SymbolAlphabet::binary(), None, vec![Codeword::new(vec![1, 0])], false).unwrap();
        assert_eq!(chernoff_union_bound(&cb, &csi(3.0, 1.0), 0.5).unwrap().value, 0.0);
        assert!(chernoff_union_bound(&cb, &csi(3.0, 1.0), 0.0).is_err());
        let (t, r) = optimize_chernoff_t(&cb, &csi(3.0, 1.0));
        assert_eq!(t, DEFAULT_T_MAX);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn identical_pair_has_unit_term() {
        let table = exponent_table(&SymbolAlphabet::uniform(3).unwrap(), &csi(5.0, 2.0), 0.7);
        assert_eq!(pairwise_chernoff_exponent(&table, &[0, 1, 2], &[0, 1, 2]), 0.0);
    }

    #[test]
    fn chernoff_matches_bhattacharyya_closed_form_for_binary() {
        // For a binary pair at distance 2e and t = 1/2 the exponent is
        // −e·(√(c_s+c_n) − √c_n)².
        let cb = Codebook::new(
            SymbolAlphabet::binary(),
            None,
            vec![Codeword::new(vec![1, 1, 0, 0]), Codeword::new(vec![0, 0, 1, 1])],
            false,
        )
        .unwrap();
        let c = csi(6.0, 2.0);
        let want = (-2.0 * (8f64.sqrt() - 2f64.sqrt()).powi(2)).exp();
        let got = chernoff_union_bound(&cb, &c, 0.5).unwrap().value;
        assert!((got - want).abs() < 1e-14 * want);
    }

    #[test]
    fn optimized_t_beats_default_and_grid() {
        let cb = enumerate_full_scw(&SymbolAlphabet::uniform(3).unwrap(), &WeightVector::new(vec![3, 2, 1]).unwrap())
            .unwrap();
        let c = csi(12.0, 4.9);
        let (t_star, best) = optimize_chernoff_t(&cb, &c);
        let at_half = chernoff_union_bound(&cb, &c, 0.5).unwrap().value;
        assert!(best.value <= at_half);
        let (t_grid, v_grid) = (1..=100)
            .map(|i| {
                let t = i as f64 * DEFAULT_T_MAX / 100.0;
                (t, chernoff_union_bound(&cb, &c, t).unwrap().value)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!(best.value <= v_grid * (1.0 + 1e-9));
        assert!((t_star - t_grid).abs() <= DEFAULT_T_MAX / 100.0 + T_TOLERANCE, "{t_star} vs {t_grid}");
    }

    #[test]
    fn chernoff_dominates_exact_pep_for_two_codewords() {
        // exhaustive joint outcomes for s = [1,0], ŝ = [0,1]; error if the
        // ŝ-metric is at least the s-metric (ties count).
        let cb = Codebook::new(
            SymbolAlphabet::binary(),
            None,
            vec![Codeword::new(vec![1, 0]), Codeword::new(vec![0, 1])],
            false,
        )
        .unwrap();
        for &(cs, cn) in &[(2.0, 1.0), (4.0, 0.5), (1.0, 3.0)] {
            let mut pep = 0.0;
            for r1 in 0..80u64 {
                for r2 in 0..80u64 {
                    if r2 >= r1 {
                        pep += poisson_pmf(r1, cs + cn) * poisson_pmf(r2, cn);
                    }
                }
            }
            let bound = chernoff_union_bound(&cb, &csi(cs, cn), 0.5).unwrap().value;
            // both ordered pairs contribute the same PEP, divided by M = 2
            assert!(bound >= pep, "{bound} < {pep}");
        }
    }

    fn skellam_tail_by_convolution(l1: f64, l2: f64) -> f64 {
        let mut half_tie = 0.0;
        let mut above = 0.0;
        for n1 in 0..200u64 {
            let p1 = poisson_pmf(n1, l1);
            for n2 in 0..200u64 {
                let p = p1 * poisson_pmf(n2, l2);
                if n2 == n1 {
                    half_tie += 0.5 * p;
                } else if n2 > n1 {
                    above += p;
                }
            }
        }
        half_tie + above
    }

    #[test]
    fn skellam_union_single_pair() {
        let c = csi(10.0, 1.0);
        let spec = DistanceSpectrum::from_counts([(2usize, 1u64)].into_iter().collect());
        let got = skellam_union_bound(&spec, 1, &c).unwrap().value;
        let want = skellam_tail_by_convolution(11.0, 1.0);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn skellam_union_degenerate_cases() {
        let spec = DistanceSpectrum::from_counts([(4usize, 1u64)].into_iter().collect());
        let v = skellam_union_bound(&spec, 1, &csi(0.0, 3.0)).unwrap().value;
        assert!((v - 0.5).abs() < 1e-11, "{v}");
        assert_eq!(skellam_union_bound(&DistanceSpectrum::default(), 4, &csi(3.0, 1.0)).unwrap().value, 0.0);
        let odd = DistanceSpectrum::from_counts([(3usize, 2u64)].into_iter().collect());
        assert!(matches!(skellam_union_bound(&odd, 2, &csi(3.0, 1.0)), Err(BoundError::OddDistance(3))));
    }

    /// Exact CER of CW(2,1) with uniform tie breaking.
    fn cw21_exact(cs: f64, cn: f64) -> f64 {
        let mut cer = 0.0;
        for one in 0..120u64 {
            for zero in 0..120u64 {
                let p = poisson_pmf(one, cs + cn) * poisson_pmf(zero, cn);
                if zero > one {
                    cer += p;
                } else if zero == one {
                    cer += 0.5 * p;
                }
            }
        }
        cer
    }

    #[test]
    fn orderstat_sandwich_cw21() {
        let c = csi(3.0, 1.0);
        let exact = cw21_exact(3.0, 1.0);
        for form in [MaxPmfForm::Exact, MaxPmfForm::Density] {
            let (lo, hi) = orderstat_bounds_with(2, 1, &c, form).unwrap();
            assert!(lo.value <= exact && exact <= hi.value, "{form:?}: {} {exact} {}", lo.value, hi.value);
        }
    }

    #[test]
    fn orderstat_high_snr_and_ordering() {
        let (lo, hi) = orderstat_bounds(10, 5, &csi(1e4, 1.0)).unwrap();
        assert!(lo.value < 1e-6 && hi.value < 1e-6);
        for k in 2..=12 {
            for w in 0..=k {
                for snr_db in [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0] {
                    let c = csi(4.9 * 10f64.powf(snr_db / 10.0), 4.9);
                    let (lo, hi) = orderstat_bounds(k, w, &c).unwrap();
                    assert!(lo.value <= hi.value && lo.value >= 0.0);
                }
            }
        }
        assert_eq!(orderstat_bounds(6, 0, &csi(1.0, 1.0)).unwrap().1.value, 0.0);
        assert!(orderstat_bounds(4, 5, &csi(1.0, 1.0)).is_err());
    }

    #[test]
    fn density_form_exceeds_one_at_low_snr() {
        let c = csi(4.9 * 10f64.powf(-0.5), 4.9);
        let (lo, _) = orderstat_bounds_with(10, 5, &c, MaxPmfForm::Density).unwrap();
        assert!(lo.value > 1.0);
        let (lo, hi) = orderstat_bounds(10, 5, &c).unwrap();
        assert!(lo.value < 1.0 && hi.value <= 1.0 + 1e-12);
    }
}
