//! Simulation library for the Schalkwijk-Kailath (SK) and Modulo-SK
//! feedback coding schemes over paired AWGN channels.
//!
//! The crate provides:
//!
//! * the classical SK iteration with noiseless feedback, implemented with a
//!   split coarse/fine decoding statistic that stays numerically stable for
//!   any constellation up to 2^60 points ([`sk`]);
//! * the Modulo-SK scheme for noisy feedback: active, power-constrained,
//!   modulo-folded feedback with optional common-randomness dither
//!   ([`modulo_sk`]);
//! * analytical symbol-error upper bounds, uncoded-PAM predictions, and the
//!   finite-blocklength no-feedback converse in its normal approximation
//!   ([`bounds`]);
//! * a deterministic, embarrassingly parallel Monte-Carlo campaign engine
//!   with exact binomial confidence intervals ([`sim`]).

pub mod bounds;
pub mod channel;
pub mod error;
pub mod modulo_sk;
pub mod numerics;
pub mod pam;
pub mod sim;
pub mod sk;

pub use error::{Error, Result};
pub use numerics::{RandomSource, SnrSpec};
pub use pam::{MessageBits, PamConstellation};
pub use sim::{BerEstimate, CampaignResult, SchemeConfig, StopRule, TrialOutcome};
