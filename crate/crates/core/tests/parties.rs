//! Drives the protocol parties directly, without the harness.

use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

use expertrec_core::harness::{run_session, PredictionInput, ProtocolKind, SessionConfig, SessionRegistry};
use expertrec_core::paillier::{keygen, Ciphertext, PaillierKeyPair};
use expertrec_core::protocol::noproxy::{EvalResult, NoProxyConfig, NoProxyRecSys, NoProxyUser};
use expertrec_core::protocol::proxy::{Proxy, ProxyConfig, ProxyRecSys, ProxyUser};
use expertrec_core::protocol::{
    carry, lift, mask_value, oracle_recommend, sample_masks, MaskSign, ThresholdSet, LAMBDA,
};
use expertrec_core::rng::derive_rng;
use expertrec_core::swhe::{self, SlotVector, SwheContext, SwheKeyPair, SwheParams};
use rand::Rng;
use rug::Integer;

const THETA: u64 = 1_000_000_000_000_000;

fn paillier() -> &'static PaillierKeyPair {
    static K: OnceLock<PaillierKeyPair> = OnceLock::new();
    K.get_or_init(|| keygen(1024, &mut derive_rng(1, "parties-paillier")).unwrap())
}

fn swhe_keys(seed: u64) -> SwheKeyPair {
    static C: OnceLock<Arc<SwheContext>> = OnceLock::new();
    let ctx = C.get_or_init(|| SwheContext::new(SwheParams::desk()).unwrap());
    swhe::keygen(ctx, &mut derive_rng(seed, "parties-swhe"))
}

/// `x θ + y` under the test key; `add_plain` on one fresh zero keeps large
/// instances cheap.
fn encrypt_all(x: &[i64], y: &[u64]) -> Vec<Ciphertext> {
    let kp = paillier();
    let zero = kp.public.encrypt(&Integer::new(), &mut derive_rng(2, "zero")).unwrap();
    x.iter()
        .zip(y)
        .map(|(&x, &y)| kp.public.add_plain(&zero, &(Integer::from(x) * THETA + y)).unwrap())
        .collect()
}

fn carries(y: &[u64], seed: u64) -> Vec<u8> {
    let rec = sample_masks(y.len(), THETA, &mut derive_rng(seed, "recsys-r1"), &mut derive_rng(seed, "reduction-r2"));
    y.iter().zip(&rec.entries).map(|(&y, e)| carry(y, e.r2, THETA)).collect()
}

struct NoProxyRun {
    user: NoProxyUser,
    recsys: NoProxyRecSys,
}

fn noproxy(rated: &[bool], thresholds: &ThresholdSet, cts: Vec<Ciphertext>, seed: u64) -> NoProxyRun {
    let kp = paillier();
    let config = NoProxyConfig {
        theta: THETA,
        thresholds: thresholds.clone(),
        batched: true,
    };
    let keys = swhe_keys(seed);
    let spk = keys.public.clone();
    let user = NoProxyUser::new(kp.secret.clone(), keys, rated.to_vec(), config.clone(), seed);
    let recsys = NoProxyRecSys::new(kp.public.clone(), spk, cts, config, seed).unwrap();
    NoProxyRun { user, recsys }
}

#[test]
fn noproxy_single_item_trace() {
    let seed = 4;
    let (x, y) = (47i64, 123_456_789u64);
    let mut run = noproxy(&[false], &ThresholdSet::new(vec![48, 47]).unwrap(), encrypt_all(&[x], &[y]), seed);
    let delta = run.recsys.reduction().unwrap();
    let e = sample_masks(1, THETA, &mut derive_rng(seed, "recsys-r1"), &mut derive_rng(seed, "reduction-r2")).entries[0];
    let want = Integer::from(x) * THETA + y + mask_value(&e, THETA, MaskSign::Plus);
    assert_eq!(paillier().secret.decrypt_signed(&delta.deltas[0]).unwrap(), want);
    assert_eq!(run.recsys.counters.paillier_add, 1);

    let reply = run.user.reply(&delta).unwrap();
    let gamma = run.user.decrypt_swhe(&reply.gammas[0]).unwrap();
    let eps = carry(y, e.r2, THETA) as u128;
    assert_eq!(gamma.get(0), x as u128 + e.r1 as u128 + eps);
    assert_eq!((run.user.counters.paillier_dec, run.user.counters.swhe_enc), (1, 1));

    let psi = run.recsys.evaluate(&reply).unwrap();
    let plain = run.user.decrypt_swhe(&psi.psis[0]).unwrap();
    assert_eq!(plain.is_zero(0), eps == 0 || x + 1 == 48);
    assert_eq!(run.user.select(&psi).unwrap(), BTreeSet::from([0]));
}

#[test]
fn noproxy_all_rated_sends_randoms() {
    let m = 40;
    let x = vec![50i64; m];
    let y = vec![0u64; m];
    let mut run = noproxy(&vec![true; m], &ThresholdSet::new(vec![50]).unwrap(), encrypt_all(&x, &y), 5);
    let delta = run.recsys.reduction().unwrap();
    let reply = run.user.reply(&delta).unwrap();
    let gamma = run.user.decrypt_swhe(&reply.gammas[0]).unwrap();
    let vals: BTreeSet<u128> = (0..m).map(|j| gamma.get(j)).collect();
    assert_eq!(vals.len(), m, "independent randoms");
    for j in 0..m {
        assert!(gamma.get(j) < 1 << LAMBDA);
        assert_ne!(Integer::from(gamma.get(j)), run.user.betas[j]);
    }
    let psi = run.recsys.evaluate(&reply).unwrap();
    assert!(run.user.select(&psi).unwrap().is_empty());
}

#[test]
fn noproxy_crafted_instance() {
    let m = 10;
    let mut x = vec![20i64; m];
    x[2] = 45;
    x[7] = 44;
    let y = vec![0u64; m];
    let mut rated = vec![false; m];
    rated[5] = true;
    x[5] = 45;
    let mut run = noproxy(&rated, &ThresholdSet::new(vec![45, 44]).unwrap(), encrypt_all(&x, &y), 6);
    let reply = run.user.reply(&run.recsys.reduction().unwrap()).unwrap();
    let psi = run.recsys.evaluate(&reply).unwrap();
    assert_eq!(run.user.select(&psi).unwrap(), BTreeSet::from([2, 7]));
}

#[test]
fn noproxy_select_respects_rated_mask() {
    let rated = [true, false, true, false, false, true];
    let v = ThresholdSet::new(vec![50]).unwrap();
    let mut run = noproxy(&rated, &v, encrypt_all(&[0; 6], &[0; 6]), 7);
    let pk = run.user.swhe_public().clone();
    let params = pk.context().params().clone();
    let mut rng = derive_rng(7, "forged");
    // every slot decrypts to zero, as if every r3 had collided into V
    let zeros = pk.encrypt(&SlotVector::zeros(&params), &mut rng).unwrap();
    let out = run.user.select(&EvalResult { psis: vec![zeros] }).unwrap();
    assert_eq!(out, BTreeSet::from([1, 3, 4]));
    let ones = SlotVector::encode(&params, &vec![1; params.slots()]).unwrap();
    let nonzero = pk.encrypt(&ones, &mut rng).unwrap();
    assert!(run.user.select(&EvalResult { psis: vec![nonzero] }).unwrap().is_empty());
}

#[test]
fn rand_never_produces_false_zeros() {
    let m = 10_000;
    let mut rng = derive_rng(8, "false-zero");
    let x: Vec<i64> = (0..m).map(|_| rng.gen_range(0..40)).collect();
    let y: Vec<u64> = (0..m).map(|_| rng.gen_range(0..THETA)).collect();
    let v = ThresholdSet::new(vec![50, 49]).unwrap();
    let mut run = noproxy(&vec![false; m], &v, encrypt_all(&x, &y), 8);
    let reply = run.user.reply(&run.recsys.reduction().unwrap()).unwrap();
    let psi = run.recsys.evaluate(&reply).unwrap();
    assert_eq!(psi.psis.len(), m.div_ceil(4096));
    let mut zeros = 0;
    let mut nonzero_both = 0;
    for (g, c) in psi.psis.iter().enumerate() {
        let plain = run.user.decrypt_swhe(c).unwrap();
        for slot in 0..4096.min(m - g * 4096) {
            let (a, b) = plain.residues(slot);
            zeros += plain.is_zero(slot) as usize;
            nonzero_both += (a != 0 && b != 0) as usize;
        }
    }
    assert_eq!(zeros, 0);
    assert_eq!(nonzero_both, m);
}

struct ProxyRun {
    user: ProxyUser,
    recsys: ProxyRecSys,
    proxy: Proxy,
}

fn proxy(rated: &[bool], thresholds: &ThresholdSet, cts: Vec<Ciphertext>, seed: u64) -> ProxyRun {
    let kp = paillier();
    let config = ProxyConfig {
        theta: THETA,
        thresholds: thresholds.clone(),
    };
    ProxyRun {
        user: ProxyUser::new(kp.secret.clone(), rated.to_vec(), config.clone(), seed),
        recsys: ProxyRecSys::new(kp.public.clone(), cts, config, seed).unwrap(),
        proxy: Proxy::default(),
    }
}

impl ProxyRun {
    fn go(&mut self) -> (BTreeSet<usize>, Vec<bool>) {
        self.recsys.accept_setup(&self.user.setup_message());
        let delta = self.recsys.reduction().unwrap();
        let gammas = self.user.reply(&delta).unwrap();
        let (shares, checks) = self.user.prf_shares().unwrap();
        let theirs = self.recsys.prf_shares(&gammas).unwrap();
        assert!(self.proxy.accept_checks(checks).unwrap().is_none());
        assert!(self.proxy.accept_recsys(theirs).unwrap().is_none());
        let result = self.proxy.accept_user(shares).unwrap().unwrap();
        (self.user.interpret(&result).unwrap(), result.bits)
    }
}

#[test]
fn proxy_reduction_trace() {
    let seed = 9;
    let x = [31i64, 44];
    let y = [THETA - 1, 17];
    let v = ThresholdSet::new(vec![45, 44]).unwrap();
    let mut run = proxy(&[false, true], &v, encrypt_all(&x, &y), seed);
    let (out, _) = run.go();
    let rec = sample_masks(2, THETA, &mut derive_rng(seed, "recsys-r1"), &mut derive_rng(seed, "reduction-r2"));
    let eps = carries(&y, seed);
    for j in 0..2 {
        let want = Integer::from(x[j]) + lift() - rec.entries[j].r1 + eps[j];
        assert_eq!(run.user.betas[j], want);
    }
    assert_eq!(out, oracle_recommend(&x, &[false, true], &v, &eps));
    assert_eq!(run.user.counters.paillier_dec, 2);
    assert_eq!(run.user.counters.prf_eval, 2 * 3);
    assert_eq!(run.recsys.counters.paillier_add, 2);
    assert_eq!(run.recsys.counters.prf_eval, 2);
    assert_eq!(run.proxy.counters.prf_hadd, 2);
}

#[test]
fn proxy_single_item_matches_exactly_one_tag() {
    for (seed, hit) in [(10u64, true), (11, false)] {
        let (x, y) = (40i64, 0u64);
        let v = if hit {
            ThresholdSet::new(vec![40]).unwrap()
        } else {
            ThresholdSet::new(vec![42, 43]).unwrap()
        };
        let mut run = proxy(&[false], &v, encrypt_all(&[x], &[y]), seed);
        let (out, bits) = run.go();
        assert_eq!(bits, vec![hit]);
        assert_eq!(out.len(), hit as usize);
    }
}

#[test]
fn proxy_crafted_instance() {
    let m = 8;
    let mut x = vec![10i64; m];
    x[1] = 50;
    x[4] = 49;
    let v = ThresholdSet::new(vec![50, 49]).unwrap();
    let mut run = proxy(&vec![false; m], &v, encrypt_all(&x, &vec![0; m]), 12);
    let (out, bits) = run.go();
    assert_eq!(out, BTreeSet::from([1, 4]));
    assert_eq!(bits.len(), m);
}

#[test]
fn proxy_rated_items_never_match() {
    let m = 10_000;
    let x = vec![45i64; m];
    let v = ThresholdSet::new(vec![46, 45]).unwrap();
    let mut run = proxy(&vec![true; m], &v, encrypt_all(&x, &vec![0; m]), 13);
    let (out, bits) = run.go();
    assert!(out.is_empty());
    assert_eq!(bits.iter().filter(|&&b| b).count(), 0);
}

#[test]
fn proxy_view_reveals_only_the_count() {
    let m = 12;
    let v = ThresholdSet::new(vec![50, 49]).unwrap();
    let views: Vec<(usize, [usize; 3])> = [[0usize, 5], [3, 11]]
        .iter()
        .enumerate()
        .map(|(i, hits)| {
            let mut x = vec![20i64; m];
            for &h in hits {
                x[h] = 50;
            }
            let mut run = proxy(&vec![false; m], &v, encrypt_all(&x, &vec![0; m]), 14 + i as u64);
            run.recsys.accept_setup(&run.user.setup_message());
            let delta = run.recsys.reduction().unwrap();
            let gammas = run.user.reply(&delta).unwrap();
            let (shares, checks) = run.user.prf_shares().unwrap();
            let theirs = run.recsys.prf_shares(&gammas).unwrap();
            let lens = [
                shares.to_payload().len(),
                theirs.to_payload().len(),
                checks.to_payload().len(),
            ];
            run.proxy.accept_user(shares).unwrap();
            run.proxy.accept_recsys(theirs).unwrap();
            let result = run.proxy.accept_checks(checks).unwrap().unwrap();
            let matches = result.bits.iter().filter(|&&b| b).count();
            let want: BTreeSet<usize> = hits.iter().copied().collect();
            assert_eq!(run.user.interpret(&result).unwrap(), want);
            (matches, lens)
        })
        .collect();
    assert_eq!(views[0], views[1]);
    assert_eq!(views[0].0, 2);
}

#[test]
fn recsys_view_is_independent_of_predictions() {
    let m = 30;
    let mut rng = derive_rng(15, "audit");
    let rated: Vec<bool> = (0..m).map(|_| rng.gen_bool(0.3)).collect();
    let thresholds = ThresholdSet::new(vec![50, 49]).unwrap();
    for protocol in [ProtocolKind::NoProxy, ProtocolKind::Proxy] {
        let shapes: Vec<Vec<(u8, usize)>> = (0..2)
            .map(|_| {
                let values: Vec<Integer> = (0..m)
                    .map(|_| Integer::from(rng.gen_range(0..60)) * THETA + rng.gen_range(0..THETA))
                    .collect();
                let mut cfg = SessionConfig::new(protocol, thresholds.clone());
                cfg.paillier_bits = 1024;
                cfg.seed = 15;
                let input = PredictionInput::Plain {
                    values: &values,
                    rated: &rated,
                };
                let out = run_session(&mut SessionRegistry::new(), input, &cfg).unwrap();
                out.transcript
                    .entries
                    .iter()
                    .map(|e| (e.kind as u8, e.frame.len()))
                    .collect()
            })
            .collect();
        assert_eq!(shapes[0], shapes[1], "{protocol:?}");
    }
}
