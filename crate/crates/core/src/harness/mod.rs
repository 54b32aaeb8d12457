//! Party orchestration: one thread per party, bounded in-memory channels
//! carrying fully encoded wire frames, a typed transcript and per-party
//! operation counters.

mod bench;
mod check;
mod histogram;
mod session;
pub mod wire;

pub use bench::{run_bench, BenchProfile, BenchReport, BenchRow, REFERENCE_TIMINGS};
pub use check::{assert_counters, expected_counters, table_rows, CounterDiff, CounterMismatch};
pub use histogram::{histogram, histogram_csv, Histogram};
pub use session::{
    replay_transcript, run_session, PredictionInput, SessionConfig, SessionOutcome,
    SessionRegistry, Transcript, TranscriptEntry,
};
pub use wire::{MsgType, WireError, WireMessage};

use std::str::FromStr;

use thiserror::Error;

use crate::counters::Party;
use crate::expert::ExpertError;
use crate::paillier::PaillierError;
use crate::protocol::ProtocolError;
use crate::ratings::RatingsError;
use crate::swhe::SwheError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolKind {
    NoProxy,
    Proxy,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::NoProxy => "noproxy",
            ProtocolKind::Proxy => "proxy",
        }
    }
}

impl FromStr for ProtocolKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noproxy" => Ok(ProtocolKind::NoProxy),
            "proxy" => Ok(ProtocolKind::Proxy),
            other => Err(HarnessError::Config(format!("unknown protocol '{other}'"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("framing: {0}")]
    Wire(#[from] WireError),
    #[error("session id already used")]
    Replay,
    #[error("duplicate {0} in session")]
    Duplicate(MsgType),
    #[error("peer aborted")]
    PeerAborted,
    #[error("{party} aborted at {}: {source}", message.map_or("start", MsgType::name), party = party.name())]
    Session {
        party: Party,
        message: Option<MsgType>,
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error(transparent)]
    Ratings(#[from] RatingsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<PaillierError> for HarnessError {
    fn from(e: PaillierError) -> Self {
        HarnessError::Protocol(e.into())
    }
}

impl From<SwheError> for HarnessError {
    fn from(e: SwheError) -> Self {
        HarnessError::Protocol(e.into())
    }
}

impl HarnessError {
    /// Whether this is a configuration problem rather than a run failure.
    pub fn is_config(&self) -> bool {
        match self {
            HarnessError::Config(_) => true,
            HarnessError::Protocol(e) => e.is_config(),
            HarnessError::Expert(ExpertError::InvalidConfig(_))
            | HarnessError::Expert(ExpertError::ScalingOverflow)
            | HarnessError::Expert(ExpertError::Paillier(PaillierError::KeyTooSmall { .. }))
            | HarnessError::Expert(ExpertError::Paillier(PaillierError::OddKeySize(_))) => true,
            HarnessError::Session { source, .. } => source.is_config(),
            _ => false,
        }
    }

    /// Message type at which a party aborted, if any.
    pub fn message(&self) -> Option<MsgType> {
        match self {
            HarnessError::Session { message, .. } => *message,
            _ => None,
        }
    }

    /// Process exit code: 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.is_config() {
            2
        } else {
            1
        }
    }
}
