//! Frame layout, little-endian:
//!
//! ```text
//! magic "XREC" | version u8 | session id [16] | type u8 | length u32 | payload
//! ```

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"XREC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 16 + 1 + 4;
/// Frames above this size are rejected before allocation.
pub const MAX_PAYLOAD: usize = 1 << 30;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated frame: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("payload length {0} exceeds limit")]
    TooLong(usize),
    #[error("trailing bytes after frame")]
    Trailing,
}

/// Message types; the discriminant is also the step order in a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum MsgType {
    PublicKeys = 1,
    EncryptedProfile = 2,
    SetupSeed = 3,
    ReduceMasked = 4,
    ReduceReply = 5,
    EvalResult = 6,
    GammaShares = 7,
    PrfSharesUser = 8,
    CheckValues = 9,
    PrfSharesRecsys = 10,
    MatchResult = 11,
}

impl MsgType {
    pub const ALL: [MsgType; 11] = [
        MsgType::PublicKeys,
        MsgType::EncryptedProfile,
        MsgType::SetupSeed,
        MsgType::ReduceMasked,
        MsgType::ReduceReply,
        MsgType::EvalResult,
        MsgType::GammaShares,
        MsgType::PrfSharesUser,
        MsgType::CheckValues,
        MsgType::PrfSharesRecsys,
        MsgType::MatchResult,
    ];

    pub fn from_u8(v: u8) -> Result<Self, WireError> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| *t as u8 == v)
            .ok_or(WireError::UnknownType(v))
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::PublicKeys => "PUBLIC_KEYS",
            MsgType::EncryptedProfile => "ENCRYPTED_PROFILE",
            MsgType::SetupSeed => "SETUP_SEED",
            MsgType::ReduceMasked => "REDUCE_MASKED",
            MsgType::ReduceReply => "REDUCE_REPLY",
            MsgType::EvalResult => "EVAL_RESULT",
            MsgType::GammaShares => "GAMMA_SHARES",
            MsgType::PrfSharesUser => "PRF_SHARES_USER",
            MsgType::CheckValues => "CHECK_VALUES",
            MsgType::PrfSharesRecsys => "PRF_SHARES_RECSYS",
            MsgType::MatchResult => "MATCH_RESULT",
        }
    }
}

impl std::fmt::Display for MsgType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub session: [u8; 16],
    pub kind: MsgType,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.session);
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes one frame from the front of `bytes`, returning bytes used.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Self, usize), WireError> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::Truncated {
                need: HEADER_LEN,
                have: bytes.len(),
            });
        }
        if bytes[..4] != MAGIC {
            return Err(WireError::BadMagic);
        }
        if bytes[4] != VERSION {
            return Err(WireError::BadVersion(bytes[4]));
        }
        let session: [u8; 16] = bytes[5..21].try_into().unwrap();
        let kind = MsgType::from_u8(bytes[21])?;
        let len = u32::from_le_bytes(bytes[22..26].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD {
            return Err(WireError::TooLong(len));
        }
        let end = HEADER_LEN + len;
        if bytes.len() < end {
            return Err(WireError::Truncated {
                need: end,
                have: bytes.len(),
            });
        }
        Ok((
            Self {
                session,
                kind,
                payload: bytes[HEADER_LEN..end].to_vec(),
            },
            end,
        ))
    }

    /// Decodes exactly one frame.
    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let (m, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(WireError::Trailing);
        }
        Ok(m)
    }
}
