//! Strongly constant-weight (SCW) codes for diffusive molecular communication.
//!
//! The crate covers codebook construction and rate analysis ([`codebook`]),
//! the Poisson counting channel and its diffusion CIR ([`channel`]), the
//! CSI-free sorting detector together with coherent and non-coherent
//! reference detectors ([`detect`]), closed-form CER bounds ([`analysis`])
//! and a seeded Monte Carlo harness ([`sim`]).

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel;
pub mod codebook;
pub mod detect;
pub mod rng;
pub mod sim;

pub use channel::{Csi, CsiModel, ObservationVector, PhysicalParams};
pub use codebook::{Codebook, Codeword, SymbolAlphabet, WeightVector};
pub use detect::DetectionResult;
