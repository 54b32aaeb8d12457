use std::sync::OnceLock;

use expertrec_core::khprf::{self, PrfInput, PrfKey, PrfOutput};
use expertrec_core::paillier::{keygen, PaillierKeyPair};
use expertrec_core::rng::{derive_rng, random_below};
use expertrec_core::swhe::{self, SlotVector, SwheContext, SwheParams, SwhePublicKey};
use proptest::prelude::*;
use rand::Rng;
use rug::Integer;

fn paillier() -> &'static PaillierKeyPair {
    static K: OnceLock<PaillierKeyPair> = OnceLock::new();
    K.get_or_init(|| keygen(1024, &mut derive_rng(1, "crypto-test")).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn paillier_homomorphisms(a in any::<u128>(), b in any::<u128>(), k in any::<u64>(), seed in any::<u64>()) {
        let kp = paillier();
        let pk = &kp.public;
        let mut rng = derive_rng(seed, "paillier-prop");
        let (a, b) = (Integer::from(a), Integer::from(b));
        let ca = pk.encrypt(&a, &mut rng).unwrap();
        let cb = pk.encrypt(&b, &mut rng).unwrap();
        prop_assert_eq!(kp.secret.decrypt(&ca).unwrap(), a.clone());
        prop_assert_eq!(kp.secret.decrypt(&pk.add(&ca, &cb).unwrap()).unwrap(), Integer::from(&a + &b));
        let k = Integer::from(k);
        prop_assert_eq!(kp.secret.decrypt(&pk.scalar_mul(&ca, &k).unwrap()).unwrap(), Integer::from(&a * &k));
        prop_assert_eq!(kp.secret.decrypt(&pk.add_plain(&ca, &k).unwrap()).unwrap(), Integer::from(&a + &k));
        let neg = Integer::from(-&a);
        let cn = pk.encrypt_signed(&neg, &mut rng).unwrap();
        prop_assert_eq!(kp.secret.decrypt_signed(&cn).unwrap(), neg);
    }
}

#[test]
fn paillier_wraps_mod_n() {
    let kp = paillier();
    let n = kp.public.n().clone();
    let mut rng = derive_rng(2, "wrap");
    let a = random_below(&mut rng, &n);
    let b = random_below(&mut rng, &n);
    let ca = kp.public.encrypt(&a, &mut rng).unwrap();
    let cb = kp.public.encrypt(&b, &mut rng).unwrap();
    let sum = kp.secret.decrypt(&kp.public.add(&ca, &cb).unwrap()).unwrap();
    assert_eq!(sum, (a + b) % n);
}

fn swhe_ctx() -> &'static std::sync::Arc<SwheContext> {
    static C: OnceLock<std::sync::Arc<SwheContext>> = OnceLock::new();
    C.get_or_init(|| SwheContext::new(SwheParams::desk()).unwrap())
}

fn random_slots<R: Rng>(params: &SwheParams, rng: &mut R) -> Vec<u128> {
    let t = params.plain_modulus();
    (0..params.slots()).map(|_| rng.gen_range(0..t)).collect()
}

#[test]
fn swhe_depth_two_is_slotwise_exact() {
    let ctx = swhe_ctx();
    let params = ctx.params();
    let t = Integer::from(params.plain_modulus());
    let mut rng = derive_rng(3, "swhe-depth2");
    let keys = swhe::keygen(ctx, &mut rng);
    let pk = &keys.public;
    for _ in 0..3 {
        let vals: Vec<Vec<u128>> = (0..5).map(|_| random_slots(params, &mut rng)).collect();
        let enc: Vec<_> = vals
            .iter()
            .map(|v| pk.encrypt(&SlotVector::encode(params, v).unwrap(), &mut rng).unwrap())
            .collect();
        // ((a·b)·(c − d)) · e_plain
        let ab = pk.mul(&enc[0], &enc[1]).unwrap();
        let cd = pk.sub(&enc[2], &enc[3]).unwrap();
        let prod = pk.mul(&ab, &cd).unwrap();
        let plain = SlotVector::encode(params, &vals[4]).unwrap();
        let out = keys.secret.decrypt(&pk.mul_plain(&prod, &plain).unwrap()).unwrap();
        assert!(keys.secret.noise_budget(&prod).unwrap() > 0);
        for s in 0..params.slots() {
            let v = |i: usize| Integer::from(vals[i][s]);
            let want = Integer::from(v(0) * v(1) * (v(2) - v(3)) * v(4)).div_rem_euc(t.clone()).1;
            assert_eq!(Integer::from(out.get(s)), want, "slot {s}");
        }
    }
}

#[test]
fn swhe_public_key_round_trip() {
    let ctx = swhe_ctx();
    let mut rng = derive_rng(4, "swhe-pk");
    let keys = swhe::keygen(ctx, &mut rng);
    let bytes = keys.public.to_bytes();
    let pk = SwhePublicKey::from_bytes(ctx, &bytes).unwrap();
    assert_eq!(pk.fingerprint(), keys.public.fingerprint());
    let v = random_slots(ctx.params(), &mut rng);
    let sv = SlotVector::encode(ctx.params(), &v).unwrap();
    let c = pk.encrypt(&sv, &mut rng).unwrap();
    assert_eq!(keys.secret.decrypt(&c).unwrap(), sv);
    assert!(SwhePublicKey::from_bytes(ctx, &bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn swhe_ciphertext_round_trip() {
    let ctx = swhe_ctx();
    let mut rng = derive_rng(5, "swhe-ct");
    let keys = swhe::keygen(ctx, &mut rng);
    let sv = SlotVector::encode(ctx.params(), &random_slots(ctx.params(), &mut rng)).unwrap();
    let c = keys.public.encrypt(&sv, &mut rng).unwrap();
    let bytes = c.to_bytes();
    let (back, used) = swhe::SwheCiphertext::from_bytes(ctx, &bytes).unwrap();
    assert_eq!(used, bytes.len());
    assert_eq!(keys.secret.decrypt(&back).unwrap(), sv);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn prf_is_key_homomorphic(s1 in any::<u64>(), a in any::<i64>(), b in any::<i64>(), msg in proptest::collection::vec(any::<u8>(), 0..64)) {
        let mut rng = derive_rng(s1, "prf-prop");
        let k1 = PrfKey::random(&mut rng);
        let k2 = PrfKey::random(&mut rng);
        let x = PrfInput::new(&msg);
        prop_assert_eq!(khprf::combine(&x.eval(&k1), &x.eval(&k2)), x.eval(&(k1 + k2)));
        prop_assert_eq!(khprf::combine(&x.eval(&k1), &PrfOutput::identity()), x.eval(&k1));
        let (a, b) = (a as i128, b as i128);
        let lhs = khprf::combine(&x.eval(&k1.key_sub(a)), &x.eval(&PrfKey::from_int(a + b)));
        prop_assert_eq!(lhs, x.eval(&k1.key_add(b)));
        prop_assert_eq!(PrfOutput::from_bytes(&x.eval(&k1).to_bytes()).unwrap(), x.eval(&k1));
    }
}
