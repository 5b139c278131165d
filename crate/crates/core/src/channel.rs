//! Diffusive channel model: the advection–diffusion–degradation CIR, CSI
//! construction and randomization across blocks, and Poisson counting
//! observations.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::special::ln_factorial;
use crate::codebook::{Codeword, SymbolAlphabet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("sampling time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("invalid physical parameter {field}: {value}")]
    InvalidParameter { field: &'static str, value: f64 },
    #[error("invalid CSI: c_s = {c_s}, c_n = {c_n}")]
    InvalidCsi { c_s: f64, c_n: f64 },
    #[error("SNR must be positive and finite, got {0}")]
    NonPositiveSnr(f64),
    #[error("mixture probabilities sum to {0}, expected 1")]
    MixtureNotNormalized(f64),
    #[error("mixture weight {0} is negative or not finite")]
    InvalidMixtureWeight(f64),
    #[error("mixture has no components")]
    EmptyMixture,
    #[error("invalid distribution for {field}: [{low}, {high}]")]
    InvalidDistribution {
        field: &'static str,
        low: f64,
        high: f64,
    },
}

/// Physical link parameters in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalParams {
    /// Molecules released for a full-amplitude symbol.
    pub n_tx: f64,
    /// Receiver sphere radius in m.
    pub rx_radius: f64,
    /// Transmitter–receiver distance in m.
    pub distance: f64,
    /// Diffusion coefficient in m²/s.
    pub diffusion: f64,
    /// Combined degradation rate `κ·c̄_e` in 1/s.
    pub enzyme_rate: f64,
    /// Flow component along the link axis in m/s.
    pub v_par: f64,
    /// Flow component across the link axis in m/s.
    pub v_perp: f64,
    /// Sampling time after release in s.
    pub t_samp: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            n_tx: 1e4,
            rx_radius: 50e-9,
            distance: 500e-9,
            diffusion: 4.3e-10,
            // κ = 2e-19 m³/s per molecule times ~1e21 molecules/m³ (1.66 µM).
            enzyme_rate: 200.0,
            v_par: 1e-3,
            v_perp: 1e-3,
            t_samp: 1e-4,
        }
    }
}

impl PhysicalParams {
    pub fn rx_volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.rx_radius.powi(3)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let fields: [(&'static str, f64); 8] = [
            ("n_tx", self.n_tx),
            ("rx_radius", self.rx_radius),
            ("distance", self.distance),
            ("diffusion", self.diffusion),
            ("enzyme_rate", self.enzyme_rate),
            ("v_par", self.v_par),
            ("v_perp", self.v_perp),
            ("t_samp", self.t_samp),
        ];
        for (field, value) in fields {
            if !value.is_finite() || value < 0.0 {
                return Err(ChannelError::InvalidParameter { field, value });
            }
        }
        if self.diffusion <= 0.0 {
            return Err(ChannelError::InvalidParameter {
                field: "diffusion",
                value: self.diffusion,
            });
        }
        if self.t_samp <= 0.0 {
            return Err(ChannelError::InvalidParameter {
                field: "t_samp",
                value: self.t_samp,
            });
        }
        Ok(())
    }
}

/// Expected number of molecules inside the receiver `t` seconds after
/// releasing `n_tx` molecules.
pub fn cir_expected_count(params: &PhysicalParams, t: f64) -> Result<f64, ChannelError> {
    if !(t > 0.0) {
        return Err(ChannelError::NonPositiveTime(t));
    }
    let spread = 4.0 * params.diffusion * t;
    let prefactor = params.n_tx * params.rx_volume() / (PI * spread).powf(1.5);
    let along = params.distance - params.v_par * t;
    let across = params.v_perp * t;
    let exponent = -params.enzyme_rate * t - (along * along + across * across) / spread;
    Ok(prefactor * exponent.exp())
}

/// Channel state: expected signal and noise counts per symbol interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Csi {
    pub c_s: f64,
    pub c_n: f64,
}

impl Csi {
    pub fn new(c_s: f64, c_n: f64) -> Result<Self, ChannelError> {
        if !(c_s >= 0.0 && c_n >= 0.0 && c_s.is_finite() && c_n.is_finite()) {
            return Err(ChannelError::InvalidCsi { c_s, c_n });
        }
        Ok(Self { c_s, c_n })
    }

    /// `c_s / c_n`, undefined without noise.
    pub fn snr(&self) -> Option<f64> {
        (self.c_n > 0.0).then(|| self.c_s / self.c_n)
    }

    /// Poisson mean of a symbol of level `eta`.
    pub fn mean(&self, eta: f64) -> f64 {
        eta * self.c_s + self.c_n
    }
}

/// How the noise level is specified when building CSI from physics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Expected noise count `c_n`.
    Count(f64),
    /// Linear SNR; `c_n = c_s / snr`.
    Snr(f64),
}

pub fn csi_from_params(params: &PhysicalParams, noise: NoiseSpec) -> Result<Csi, ChannelError> {
    params.validate()?;
    let c_s = cir_expected_count(params, params.t_samp)?;
    let c_n = match noise {
        NoiseSpec::Count(c_n) => c_n,
        NoiseSpec::Snr(snr) if snr > 0.0 && snr.is_finite() => c_s / snr,
        NoiseSpec::Snr(snr) => return Err(ChannelError::NonPositiveSnr(snr)),
    };
    Csi::new(c_s, c_n)
}

/// Parameters rescaled so the CIR at `t_samp` equals `snr · c_n`, by
/// changing only the number of released molecules.
pub fn params_for_snr(params: &PhysicalParams, snr: f64, c_n: f64) -> Result<PhysicalParams, ChannelError> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(ChannelError::NonPositiveSnr(snr));
    }
    params.validate()?;
    let per_molecule = cir_expected_count(&PhysicalParams { n_tx: 1.0, ..*params }, params.t_samp)?;
    if !(per_molecule > 0.0) {
        return Err(ChannelError::InvalidParameter {
            field: "n_tx",
            value: f64::INFINITY,
        });
    }
    Ok(PhysicalParams {
        n_tx: snr * c_n / per_molecule,
        ..*params
    })
}

/// Physical parameter that a [`ParametricCsi`] may randomize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamField {
    Distance,
    Diffusion,
    EnzymeRate,
    VPar,
    VPerp,
}

impl ParamField {
    fn name(self) -> &'static str {
        match self {
            ParamField::Distance => "distance",
            ParamField::Diffusion => "diffusion",
            ParamField::EnzymeRate => "enzyme_rate",
            ParamField::VPar => "v_par",
            ParamField::VPerp => "v_perp",
        }
    }

    fn set(self, params: &mut PhysicalParams, value: f64) {
        match self {
            ParamField::Distance => params.distance = value,
            ParamField::Diffusion => params.diffusion = value,
            ParamField::EnzymeRate => params.enzyme_rate = value,
            ParamField::VPar => params.v_par = value,
            ParamField::VPerp => params.v_perp = value,
        }
    }
}

/// Independent uniform draw of one physical parameter per block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformDraw {
    pub field: ParamField,
    pub low: f64,
    pub high: f64,
}

/// Random channel: selected physical parameters are redrawn every block and
/// mapped through the CIR; the noise count stays fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametricCsi {
    #[serde(default)]
    pub base: PhysicalParams,
    pub c_n: f64,
    pub draws: Vec<UniformDraw>,
}

impl ParametricCsi {
    /// Default stochastic channel: distance uniform on 400–600 nm and both
    /// flow components uniform on 0–2 mm/s around the nominal parameters.
    pub fn default_random(base: PhysicalParams, c_n: f64) -> Self {
        Self {
            base,
            c_n,
            draws: vec![
                UniformDraw {
                    field: ParamField::Distance,
                    low: 400e-9,
                    high: 600e-9,
                },
                UniformDraw {
                    field: ParamField::VPar,
                    low: 0.0,
                    high: 2e-3,
                },
                UniformDraw {
                    field: ParamField::VPerp,
                    low: 0.0,
                    high: 2e-3,
                },
            ],
        }
    }

    pub fn sample_params<R: Rng + ?Sized>(&self, rng: &mut R) -> PhysicalParams {
        let mut params = self.base;
        for draw in &self.draws {
            let value = if draw.high > draw.low {
                rng.random_range(draw.low..draw.high)
            } else {
                draw.low
            };
            draw.field.set(&mut params, value);
        }
        params
    }
}

/// Distribution of the CSI across blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CsiModel {
    Deterministic { csi: Csi },
    FiniteMixture { components: Vec<(Csi, f64)> },
    ParametricRandom(ParametricCsi),
}

impl CsiModel {
    pub fn deterministic(csi: Csi) -> Self {
        Self::Deterministic { csi }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        match self {
            CsiModel::Deterministic { csi } => Csi::new(csi.c_s, csi.c_n).map(|_| ()),
            CsiModel::FiniteMixture { components } => {
                if components.is_empty() {
                    return Err(ChannelError::EmptyMixture);
                }
                let mut total = 0.0;
                for (csi, p) in components {
                    Csi::new(csi.c_s, csi.c_n)?;
                    if !(*p >= 0.0 && p.is_finite()) {
                        return Err(ChannelError::InvalidMixtureWeight(*p));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(ChannelError::MixtureNotNormalized(total));
                }
                Ok(())
            }
            CsiModel::ParametricRandom(p) => {
                p.base.validate()?;
                Csi::new(0.0, p.c_n)?;
                for d in &p.draws {
                    let bad = !(d.low.is_finite() && d.high.is_finite())
                        || d.low < 0.0
                        || d.high < d.low
                        || (d.field == ParamField::Diffusion && d.low <= 0.0);
                    if bad {
                        return Err(ChannelError::InvalidDistribution {
                            field: d.field.name(),
                            low: d.low,
                            high: d.high,
                        });
                    }
                }
                Ok(())
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, CsiModel::Deterministic { .. })
    }

    /// Same channel with the signal scaled to reach linear `snr` against a
    /// fixed noise count `c_n`, the way a transmitter would by changing
    /// the number of released molecules. For random models the nominal
    /// operating point is scaled: the mixture's mean `c_s`, or the base
    /// parameters' CIR.
    pub fn at_snr(&self, snr: f64, c_n: f64) -> Result<Self, ChannelError> {
        if !(snr > 0.0 && snr.is_finite()) {
            return Err(ChannelError::NonPositiveSnr(snr));
        }
        Ok(match self {
            CsiModel::Deterministic { .. } => CsiModel::Deterministic {
                csi: Csi::new(snr * c_n, c_n)?,
            },
            CsiModel::FiniteMixture { components } => {
                let mean: f64 = components.iter().map(|(c, p)| c.c_s * p).sum();
                let factor = if mean > 0.0 { snr * c_n / mean } else { 0.0 };
                CsiModel::FiniteMixture {
                    components: components
                        .iter()
                        .map(|(c, p)| Ok((Csi::new(c.c_s * factor, c_n)?, *p)))
                        .collect::<Result<_, ChannelError>>()?,
                }
            }
            CsiModel::ParametricRandom(p) => CsiModel::ParametricRandom(ParametricCsi {
                base: params_for_snr(&p.base, snr, c_n)?,
                c_n,
                draws: p.draws.clone(),
            }),
        })
    }
}

/// Draws the CSI of one block.
pub fn sample_csi<R: Rng + ?Sized>(model: &CsiModel, rng: &mut R) -> Csi {
    match model {
        CsiModel::Deterministic { csi } => *csi,
        CsiModel::FiniteMixture { components } => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (csi, p) in components {
                acc += p;
                if u < acc {
                    return *csi;
                }
            }
            components.last().map(|(c, _)| *c).expect("validated mixture")
        }
        CsiModel::ParametricRandom(p) => {
            let params = p.sample_params(rng);
            let c_s = cir_expected_count(&params, params.t_samp).unwrap_or(0.0);
            Csi {
                c_s: if c_s.is_finite() { c_s.max(0.0) } else { 0.0 },
                c_n: p.c_n,
            }
        }
    }
}

/// Per-interval molecule counts `r[1..K]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObservationVector(Vec<u64>);

impl ObservationVector {
    pub fn new(counts: Vec<u64>) -> Self {
        Self(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<u64>> for ObservationVector {
    fn from(v: Vec<u64>) -> Self {
        Self(v)
    }
}

/// Sends one codeword through the counting channel with block-constant CSI:
/// `r[k] ~ Poisson(s[k]·c_s + c_n)`, independently over `k`.
pub fn transmit<R: Rng + ?Sized>(
    codeword: &Codeword,
    alphabet: &SymbolAlphabet,
    csi: &Csi,
    rng: &mut R,
) -> ObservationVector {
    let counts = codeword
        .symbols()
        .iter()
        .map(|&s| sample_poisson(csi.mean(alphabet.level(s)), rng))
        .collect();
    ObservationVector(counts)
}

const INVERSION_LIMIT: f64 = 30.0;

/// Poisson variate: sequential inversion below mean 30, Hörmann's PTRS
/// transformed rejection above.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < INVERSION_LIMIT {
        poisson_inversion(mean, rng)
    } else {
        poisson_ptrs(mean, rng)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut x = 0u64;
    // The cdf saturates at 1 − O(ε); the bound keeps u ≈ 1 from spinning.
    while u > cdf && x < 1000 {
        x += 1;
        p *= mean / x as f64;
        cdf += p;
        if p == 0.0 && cdf < u {
            break;
        }
    }
    x
}

fn poisson_ptrs<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}
