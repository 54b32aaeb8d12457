//! Expert-based collaborative filtering with privacy-preserving
//! threshold-set recommendation.
//!
//! A recommender trains a latent-factor model on a public expert dataset
//! (after screening profiles with a robustness detector), computes
//! encrypted predictions for a privacy-aware user under the user's Paillier
//! key, and then runs one of two interactive protocols that tell the user
//! which unrated items have a rounded prediction in a small public set
//! `{V_1, .., V_T}`:
//!
//! * [`protocol::noproxy`]: user and recommender only, with the membership
//!   test evaluated under a batched somewhat-homomorphic scheme ([`swhe`]).
//! * [`protocol::proxy`]: adds a non-colluding proxy and replaces the
//!   membership test by matching key-homomorphic PRF values ([`khprf`]).
//!
//! [`harness`] wires the parties together over framed in-memory channels
//! and counts primitive operations.

pub mod counters;
pub mod expert;
pub mod harness;
pub mod khprf;
pub mod paillier;
pub mod protocol;
pub mod ratings;
pub mod rng;
pub mod swhe;

pub use counters::{OpCounters, PartyCounters};
pub use expert::{ExpertModel, TrainConfig};
pub use protocol::{FixedPointSpec, ThresholdSet};
pub use ratings::{RatingMatrix, RatingStats, RobDetVerdict};
