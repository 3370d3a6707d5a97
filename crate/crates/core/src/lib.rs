//! Hybrid spatial-spectral precoding for multi-user MIMO-OFDM downlinks.
//!
//! The library optimizes digital per-subcarrier precoders, a shared
//! phase-shifter (PS) RF precoder, and per-user digital/RF combiners to
//! maximize the user sum-rate under per-subcarrier power, clipping, and
//! out-of-band (OOB) emission constraints. The outer loop is a WMMSE-based
//! block coordinate descent:
//!
//! * digital combiners and MSE weights have closed-form updates ([`wmmse`]),
//! * digital precoders are solved by a three-block ADMM with per-subcarrier
//!   power bisection and per-chain ball projections ([`admm`]),
//! * the unit-modulus PS stages are optimized either by element-wise
//!   coordinate descent ([`analog`]) or by a Riemannian conjugate gradient
//!   on the complex circle manifold ([`manifold`]); both are exposed behind
//!   the [`strategy::AnalogStrategy`] registry and selected by name,
//! * robust PS variants average the objective over Gaussian phase errors.
//!
//! Channel generation (frequency-selective Rician fading with 3GPP path
//! loss) lives in [`model`]; oversampled OFDM synthesis, PAPR/clipping and
//! spectral-notching machinery in [`ofdm`]; the outer loop and baselines in
//! [`bcd`].

pub mod admm;
pub mod analog;
pub mod bcd;
pub mod config;
pub mod error;
pub mod export;
pub mod linalg;
pub mod manifold;
pub mod model;
pub mod ofdm;
pub mod state;
pub mod strategy;
pub mod wmmse;

pub use config::SystemConfig;
pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
pub use model::ChannelSet;
pub use ofdm::SpectralPlan;
pub use state::HybridState;
