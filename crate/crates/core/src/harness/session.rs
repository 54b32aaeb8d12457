use std::collections::{BTreeSet, HashSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, RecvTimeoutError, SyncSender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rand::RngCore;
use rug::Integer;

use super::wire::{MsgType, WireMessage};
use super::{HarnessError, ProtocolKind};
use crate::counters::{OpCounters, Party, PartyCounters};
use crate::expert::{encrypt_profile, EncryptedProfile, EncryptedScaling, ExpertModel};
use crate::paillier::{self, Ciphertext, PublicKey, MIN_KEY_BITS};
use crate::protocol::noproxy::{
    EvalResult, NoProxyConfig, NoProxyRecSys, NoProxyUser, ReduceMasked, ReduceReply,
};
use crate::protocol::proxy::{
    CheckValues, GammaShares, MatchResult, PrfShares, Proxy, ProxyConfig, ProxyRecSys, ProxyUser,
    SetupSeed,
};
use crate::protocol::{FixedPointSpec, ProtocolError, ThresholdSet};
use crate::rng::derive_rng;
use crate::swhe::{self, SwheContext, SwheParams, SwhePublicKey};

const CHANNEL_DEPTH: usize = 16;
const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub protocol: ProtocolKind,
    pub thresholds: ThresholdSet,
    pub fixed_point: FixedPointSpec,
    pub scaling: EncryptedScaling,
    pub paillier_bits: u32,
    pub swhe: SwheParams,
    /// Slot packing for the proxy-free protocol.
    pub batched: bool,
    pub seed: u64,
}

impl SessionConfig {
    /// θ = 10^15 so that `x·θ + y` is the prediction at the model scale 10^16.
    pub fn new(protocol: ProtocolKind, thresholds: ThresholdSet) -> Self {
        Self {
            protocol,
            thresholds,
            fixed_point: FixedPointSpec::with_theta(1_000_000_000_000_000),
            scaling: EncryptedScaling::default(),
            paillier_bits: paillier::DEFAULT_KEY_BITS,
            swhe: SwheParams::desk(),
            batched: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.fixed_point.validate()?;
        if Integer::from(self.fixed_point.scale()) != self.scaling.total() {
            return Err(HarnessError::Config(format!(
                "fixed-point scale {} differs from model scale {}",
                self.fixed_point.scale(),
                self.scaling.total()
            )));
        }
        if self.paillier_bits < MIN_KEY_BITS || self.paillier_bits % 2 != 0 {
            return Err(HarnessError::Config(format!(
                "Paillier key size {} must be even and at least {MIN_KEY_BITS}",
                self.paillier_bits
            )));
        }
        if self.protocol == ProtocolKind::NoProxy {
            self.swhe.validate()?;
        }
        Ok(())
    }

    fn session_id(&self) -> [u8; 16] {
        let mut rng = derive_rng(self.seed, &format!("session-{}", self.protocol.name()));
        let mut id = [0u8; 16];
        rng.fill_bytes(&mut id);
        id
    }
}

/// Where the encrypted predictions come from.
#[derive(Clone, Copy)]
pub enum PredictionInput<'a> {
    /// The recommender evaluates the model on the user's encrypted profile.
    Model {
        model: &'a ExpertModel,
        ratings: &'a [u8],
    },
    /// The user encrypts given `x·θ + y` values directly; protocol-only runs.
    Plain {
        values: &'a [Integer],
        rated: &'a [bool],
    },
}

impl PredictionInput<'_> {
    fn rated(&self) -> Vec<bool> {
        match self {
            PredictionInput::Model { ratings, .. } => ratings.iter().map(|&r| r != 0).collect(),
            PredictionInput::Plain { rated, .. } => rated.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub from: Party,
    pub to: Party,
    pub kind: MsgType,
    pub frame: Vec<u8>,
}

/// Frames of one session in step order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.entries.iter().flat_map(|e| e.frame.iter().copied()).collect()
    }

    pub fn total_bytes(&self) -> usize {
        self.entries.iter().map(|e| e.frame.len()).sum()
    }
}

/// Sessions seen so far; a session id is accepted once.
#[derive(Debug, Default)]
pub struct SessionRegistry {
    seen: HashSet<[u8; 16]>,
}

impl SessionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open(&mut self, id: [u8; 16]) -> Result<(), HarnessError> {
        if self.seen.insert(id) {
            Ok(())
        } else {
            Err(HarnessError::Replay)
        }
    }
}

/// Parses a serialized transcript, checking framing, a single fresh session
/// id and that no message type repeats.
pub fn replay_transcript(
    bytes: &[u8],
    registry: &mut SessionRegistry,
) -> Result<Vec<WireMessage>, HarnessError> {
    let mut out: Vec<WireMessage> = Vec::new();
    let mut kinds = HashSet::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let (m, used) = WireMessage::decode_prefix(&bytes[pos..])?;
        pos += used;
        if let Some(first) = out.first() {
            if first.session != m.session {
                return Err(ProtocolError::SessionMismatch.into());
            }
        } else {
            registry.open(m.session)?;
        }
        if !kinds.insert(m.kind) {
            return Err(HarnessError::Duplicate(m.kind));
        }
        out.push(m);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub items: BTreeSet<usize>,
    pub transcript: Transcript,
    pub counters: PartyCounters,
    pub session: [u8; 16],
}

struct Endpoint {
    me: Party,
    session: [u8; 16],
    inbox: Receiver<Vec<u8>>,
    peers: Vec<(Party, SyncSender<Vec<u8>>)>,
    seen: HashSet<MsgType>,
    current: Option<MsgType>,
    abort: Arc<AtomicBool>,
    log: Arc<Mutex<Vec<TranscriptEntry>>>,
}

impl Endpoint {
    fn send(&mut self, to: Party, kind: MsgType, payload: Vec<u8>) -> Result<(), HarnessError> {
        self.current = Some(kind);
        let frame = WireMessage {
            session: self.session,
            kind,
            payload,
        }
        .encode();
        self.log.lock().unwrap().push(TranscriptEntry {
            from: self.me,
            to,
            kind,
            frame: frame.clone(),
        });
        let tx = &self
            .peers
            .iter()
            .find(|(p, _)| *p == to)
            .expect("peer wired")
            .1;
        tx.send(frame).map_err(|_| HarnessError::PeerAborted)
    }

    fn recv(&mut self, expect: &[MsgType]) -> Result<WireMessage, HarnessError> {
        let bytes = loop {
            if self.abort.load(Ordering::Relaxed) {
                return Err(HarnessError::PeerAborted);
            }
            match self.inbox.recv_timeout(POLL) {
                Ok(b) => break b,
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => return Err(HarnessError::PeerAborted),
            }
        };
        let msg = WireMessage::decode(&bytes)?;
        self.current = Some(msg.kind);
        if msg.session != self.session {
            return Err(ProtocolError::SessionMismatch.into());
        }
        if !expect.contains(&msg.kind) {
            return Err(ProtocolError::Unexpected(msg.kind.name().into()).into());
        }
        if !self.seen.insert(msg.kind) {
            return Err(HarnessError::Duplicate(msg.kind));
        }
        Ok(msg)
    }
}

type PartyResult<T> = Result<T, HarnessError>;

struct UserOut {
    items: BTreeSet<usize>,
    counters: OpCounters,
    prep: OpCounters,
}

struct RecSysOut {
    counters: OpCounters,
    prep: OpCounters,
}

fn public_keys_payload(pk: &PublicKey, swhe: Option<&SwhePublicKey>) -> Vec<u8> {
    let mut out = pk.to_bytes();
    if let Some(s) = swhe {
        out.extend_from_slice(&s.to_bytes());
    }
    out
}

const PROFILE_RATINGS: u8 = 0;
const PROFILE_PREDICTIONS: u8 = 1;

fn ciphertext_list(cts: &[Ciphertext], out: &mut Vec<u8>) {
    out.extend_from_slice(&(cts.len() as u32).to_le_bytes());
    for c in cts {
        out.extend_from_slice(&c.to_bytes());
    }
}

fn parse_ciphertexts(bytes: &[u8], pos: &mut usize) -> Result<Vec<Ciphertext>, HarnessError> {
    let malformed = || ProtocolError::Malformed("encrypted profile".into());
    let n = bytes
        .get(*pos..*pos + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
        .ok_or_else(malformed)?;
    *pos += 4;
    if n > bytes.len() - *pos {
        return Err(malformed().into());
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (c, used) = Ciphertext::from_bytes(&bytes[*pos..])?;
        *pos += used;
        out.push(c);
    }
    Ok(out)
}

enum Profile {
    Ratings(EncryptedProfile),
    Predictions(Vec<Ciphertext>),
}

fn parse_profile(bytes: &[u8]) -> Result<Profile, HarnessError> {
    let malformed = |m: &str| HarnessError::Protocol(ProtocolError::Malformed(m.into()));
    let mode = *bytes.first().ok_or_else(|| malformed("empty profile"))?;
    let mut pos = 1;
    let cts = parse_ciphertexts(bytes, &mut pos)?;
    let profile = match mode {
        PROFILE_RATINGS => {
            let (mean, used) = Ciphertext::from_bytes(&bytes[pos..])?;
            pos += used;
            Profile::Ratings(EncryptedProfile { ratings: cts, mean })
        }
        PROFILE_PREDICTIONS => Profile::Predictions(cts),
        _ => return Err(malformed("unknown profile mode")),
    };
    if pos != bytes.len() {
        return Err(malformed("trailing bytes in profile"));
    }
    Ok(profile)
}

fn user_party(
    ep: &mut Endpoint,
    cfg: &SessionConfig,
    input: PredictionInput<'_>,
) -> PartyResult<UserOut> {
    let seed = cfg.seed;
    let keys = paillier::keygen(cfg.paillier_bits, &mut derive_rng(seed, "user-paillier"))?;
    let swhe_keys = match cfg.protocol {
        ProtocolKind::NoProxy => {
            let ctx = SwheContext::new(cfg.swhe.clone())?;
            Some(swhe::keygen(&ctx, &mut derive_rng(seed, "user-swhe")))
        }
        ProtocolKind::Proxy => None,
    };
    ep.send(
        Party::RecSys,
        MsgType::PublicKeys,
        public_keys_payload(&keys.public, swhe_keys.as_ref().map(|k| &k.public)),
    )?;

    let mut prep = OpCounters::default();
    let mut rng = derive_rng(seed, "user-profile");
    let mut payload = Vec::new();
    match input {
        PredictionInput::Model { model, ratings } => {
            if ratings.len() != model.num_items() {
                return Err(crate::expert::ExpertError::DimensionMismatch {
                    expected: model.num_items(),
                    got: ratings.len(),
                }
                .into());
            }
            let rated: Vec<f64> = ratings.iter().filter(|&&r| r != 0).map(|&r| r as f64).collect();
            let mean = if rated.is_empty() {
                model.global_mean
            } else {
                rated.iter().sum::<f64>() / rated.len() as f64
            };
            let p = encrypt_profile(&keys.secret, ratings, mean, cfg.scaling, &mut rng, &mut prep)?;
            payload.push(PROFILE_RATINGS);
            ciphertext_list(&p.ratings, &mut payload);
            payload.extend_from_slice(&p.mean.to_bytes());
        }
        PredictionInput::Plain { values, .. } => {
            let cts = values
                .iter()
                .map(|v| keys.secret.encrypt_signed(v, &mut rng))
                .collect::<Result<Vec<_>, _>>()?;
            prep.paillier_enc += cts.len() as u64;
            payload.push(PROFILE_PREDICTIONS);
            ciphertext_list(&cts, &mut payload);
        }
    }
    ep.send(Party::RecSys, MsgType::EncryptedProfile, payload)?;

    let rated = input.rated();
    let theta = cfg.fixed_point.theta;
    match cfg.protocol {
        ProtocolKind::NoProxy => {
            let swhe_keys = swhe_keys.expect("generated above");
            let ctx = swhe_keys.public.context().clone();
            let config = NoProxyConfig {
                theta,
                thresholds: cfg.thresholds.clone(),
                batched: cfg.batched,
            };
            let mut user = NoProxyUser::new(keys.secret, swhe_keys, rated, config, seed);
            let msg = ep.recv(&[MsgType::ReduceMasked])?;
            let reply = user.reply(&ReduceMasked::from_payload(&msg.payload)?)?;
            ep.send(Party::RecSys, MsgType::ReduceReply, reply.to_payload())?;
            let msg = ep.recv(&[MsgType::EvalResult])?;
            let items = user.select(&EvalResult::from_payload(&ctx, &msg.payload)?)?;
            Ok(UserOut {
                items,
                counters: user.counters,
                prep,
            })
        }
        ProtocolKind::Proxy => {
            let config = ProxyConfig {
                theta,
                thresholds: cfg.thresholds.clone(),
            };
            let mut user = ProxyUser::new(keys.secret, rated, config, seed);
            ep.send(Party::RecSys, MsgType::SetupSeed, user.setup_message().to_payload())?;
            let msg = ep.recv(&[MsgType::ReduceMasked])?;
            let gammas = user.reply(&ReduceMasked::from_payload(&msg.payload)?)?;
            ep.send(Party::RecSys, MsgType::GammaShares, gammas.to_payload())?;
            let (shares, checks) = user.prf_shares()?;
            ep.send(Party::Proxy, MsgType::PrfSharesUser, shares.to_payload())?;
            ep.send(Party::Proxy, MsgType::CheckValues, checks.to_payload())?;
            let msg = ep.recv(&[MsgType::MatchResult])?;
            let items = user.interpret(&MatchResult::from_payload(&msg.payload)?)?;
            Ok(UserOut {
                items,
                counters: user.counters,
                prep,
            })
        }
    }
}

fn recsys_party(
    ep: &mut Endpoint,
    cfg: &SessionConfig,
    model: Option<&ExpertModel>,
) -> PartyResult<RecSysOut> {
    let msg = ep.recv(&[MsgType::PublicKeys])?;
    let (pk, used) = PublicKey::from_bytes(&msg.payload)?;
    if pk.bits() != cfg.paillier_bits {
        return Err(ProtocolError::Malformed("unexpected Paillier key size".into()).into());
    }
    let swhe_pk = match cfg.protocol {
        ProtocolKind::NoProxy => {
            let ctx = SwheContext::new(cfg.swhe.clone())?;
            Some(SwhePublicKey::from_bytes(&ctx, &msg.payload[used..])?)
        }
        ProtocolKind::Proxy if used == msg.payload.len() => None,
        ProtocolKind::Proxy => {
            return Err(ProtocolError::Malformed("trailing bytes after key".into()).into())
        }
    };

    let msg = ep.recv(&[MsgType::EncryptedProfile])?;
    let mut prep = OpCounters::default();
    let predictions = match (parse_profile(&msg.payload)?, model) {
        (Profile::Ratings(profile), Some(model)) => {
            let items: Vec<usize> = (0..model.num_items()).collect();
            model.encrypted_predict(&pk, &profile, &items, cfg.scaling, &mut prep)?
        }
        (Profile::Predictions(cts), None) => cts,
        _ => return Err(ProtocolError::Unexpected("profile mode".into()).into()),
    };

    let theta = cfg.fixed_point.theta;
    let seed = cfg.seed;
    match cfg.protocol {
        ProtocolKind::NoProxy => {
            let swhe_pk = swhe_pk.expect("parsed above");
            let ctx = swhe_pk.context().clone();
            let config = NoProxyConfig {
                theta,
                thresholds: cfg.thresholds.clone(),
                batched: cfg.batched,
            };
            let mut rs = NoProxyRecSys::new(pk, swhe_pk, predictions, config, seed)?;
            ep.send(Party::User, MsgType::ReduceMasked, rs.reduction()?.to_payload())?;
            let msg = ep.recv(&[MsgType::ReduceReply])?;
            let result = rs.evaluate(&ReduceReply::from_payload(&ctx, &msg.payload)?)?;
            ep.send(Party::User, MsgType::EvalResult, result.to_payload())?;
            Ok(RecSysOut {
                counters: rs.counters,
                prep,
            })
        }
        ProtocolKind::Proxy => {
            let config = ProxyConfig {
                theta,
                thresholds: cfg.thresholds.clone(),
            };
            let mut rs = ProxyRecSys::new(pk, predictions, config, seed)?;
            let msg = ep.recv(&[MsgType::SetupSeed])?;
            rs.accept_setup(&SetupSeed::from_payload(&msg.payload)?);
            ep.send(Party::User, MsgType::ReduceMasked, rs.reduction()?.to_payload())?;
            let msg = ep.recv(&[MsgType::GammaShares])?;
            let shares = rs.prf_shares(&GammaShares::from_payload(&msg.payload)?)?;
            ep.send(Party::Proxy, MsgType::PrfSharesRecsys, shares.to_payload())?;
            Ok(RecSysOut {
                counters: rs.counters,
                prep,
            })
        }
    }
}

fn proxy_party(ep: &mut Endpoint) -> PartyResult<OpCounters> {
    let mut proxy = Proxy::default();
    let kinds = [
        MsgType::PrfSharesUser,
        MsgType::PrfSharesRecsys,
        MsgType::CheckValues,
    ];
    loop {
        let msg = ep.recv(&kinds)?;
        let done = match msg.kind {
            MsgType::PrfSharesUser => proxy.accept_user(PrfShares::from_payload(&msg.payload)?)?,
            MsgType::PrfSharesRecsys => {
                proxy.accept_recsys(PrfShares::from_payload(&msg.payload)?)?
            }
            _ => proxy.accept_checks(CheckValues::from_payload(&msg.payload)?)?,
        };
        if let Some(result) = done {
            ep.send(Party::User, MsgType::MatchResult, result.to_payload())?;
            return Ok(proxy.counters);
        }
    }
}

/// Runs one session with a thread per party and returns the user's output,
/// the transcript in step order and the merged counters.
pub fn run_session(
    registry: &mut SessionRegistry,
    input: PredictionInput<'_>,
    cfg: &SessionConfig,
) -> Result<SessionOutcome, HarnessError> {
    cfg.validate()?;
    let session = cfg.session_id();
    registry.open(session)?;

    let parties: &[Party] = match cfg.protocol {
        ProtocolKind::NoProxy => &[Party::User, Party::RecSys],
        ProtocolKind::Proxy => &Party::ALL,
    };
    let abort = Arc::new(AtomicBool::new(false));
    let log = Arc::new(Mutex::new(Vec::new()));
    let mut inboxes = Vec::new();
    let mut senders = Vec::new();
    for &p in parties {
        let (tx, rx) = sync_channel(CHANNEL_DEPTH);
        senders.push((p, tx));
        inboxes.push((p, rx));
    }
    let mut endpoints: Vec<Endpoint> = inboxes
        .into_iter()
        .map(|(me, inbox)| Endpoint {
            me,
            session,
            inbox,
            peers: senders.iter().filter(|(p, _)| *p != me).cloned().collect(),
            seen: HashSet::new(),
            current: None,
            abort: abort.clone(),
            log: log.clone(),
        })
        .collect();
    drop(senders);

    // scoped threads let the parties borrow the model and inputs
    let (user, recsys, proxy) = thread::scope(|s| {
        let user_ep = endpoints.remove(0);
        let recsys_ep = endpoints.remove(0);
        let proxy_ep = endpoints.pop();
        let model = match input {
            PredictionInput::Model { model, .. } => Some(model),
            PredictionInput::Plain { .. } => None,
        };
        let u = scoped_party(s, user_ep, move |ep| user_party(ep, cfg, input));
        let r = scoped_party(s, recsys_ep, move |ep| recsys_party(ep, cfg, model));
        let p = proxy_ep.map(|ep| scoped_party(s, ep, proxy_party));
        (
            u.join().expect("user thread panicked"),
            r.join().expect("recsys thread panicked"),
            p.map(|h| h.join().expect("proxy thread panicked")),
        )
    });

    let is_peer_abort = |e: &HarnessError| {
        matches!(e, HarnessError::Session { source, .. } if matches!(**source, HarnessError::PeerAborted))
    };
    let (user, recsys, proxy) = match (user, recsys, proxy.transpose()) {
        (Ok(u), Ok(r), Ok(p)) => (u, r, p.unwrap_or_default()),
        (u, r, p) => {
            // report the party that failed first, not the ones that saw it leave
            let mut errs: Vec<HarnessError> = [u.err(), r.err(), p.err()].into_iter().flatten().collect();
            let i = errs.iter().position(|e| !is_peer_abort(e)).unwrap_or(0);
            return Err(errs.swap_remove(i));
        }
    };

    let mut entries = Arc::try_unwrap(log).unwrap().into_inner().unwrap();
    entries.sort_by_key(|e| e.kind);
    let mut prep = user.prep;
    prep += recsys.prep;
    Ok(SessionOutcome {
        items: user.items,
        transcript: Transcript { entries },
        counters: PartyCounters {
            user: user.counters,
            recsys: recsys.counters,
            proxy,
            prep,
        },
        session,
    })
}

fn scoped_party<'scope, 'env, T, F>(
    s: &'scope thread::Scope<'scope, 'env>,
    mut ep: Endpoint,
    f: F,
) -> thread::ScopedJoinHandle<'scope, PartyResult<T>>
where
    T: Send + 'scope,
    F: FnOnce(&mut Endpoint) -> PartyResult<T> + Send + 'scope,
{
    s.spawn(move || {
        f(&mut ep).map_err(|e| {
            ep.abort.store(true, Ordering::Relaxed);
            HarnessError::Session {
                party: ep.me,
                message: ep.current,
                source: Box::new(e),
            }
        })
    })
}
