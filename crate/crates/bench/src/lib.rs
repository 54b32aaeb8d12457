//! Fixtures shared by the primitive benchmarks.

use std::sync::Arc;

use rug::Integer;

use expertrec_core::harness::BenchProfile;
use expertrec_core::paillier::{self, Ciphertext, PaillierKeyPair};
use expertrec_core::rng::{derive_rng, random_bits};
use expertrec_core::swhe::{self, SlotVector, SwheCiphertext, SwheContext, SwheKeyPair};

pub struct Fixture {
    pub paillier: PaillierKeyPair,
    pub message: Integer,
    pub c1: Ciphertext,
    pub c2: Ciphertext,
    pub ctx: Arc<SwheContext>,
    pub swhe: SwheKeyPair,
    pub slots: SlotVector,
    pub s1: SwheCiphertext,
    pub s2: SwheCiphertext,
}

impl Fixture {
    pub fn new(profile: BenchProfile) -> Self {
        let mut rng = derive_rng(11, "bench-fixture");
        let paillier = paillier::keygen(profile.paillier_bits(), &mut rng).expect("keygen");
        let message = random_bits(&mut rng, 64);
        let c1 = paillier.public.encrypt(&message, &mut rng).expect("encrypt");
        let c2 = paillier.public.encrypt(&Integer::from(12345), &mut rng).expect("encrypt");
        let ctx = SwheContext::new(profile.swhe()).expect("valid profile");
        let swhe = swhe::keygen(&ctx, &mut rng);
        let vals: Vec<u128> = (0..ctx.slots()).map(|i| (i as u128 * 7919) % 1000).collect();
        let slots = SlotVector::encode(ctx.params(), &vals).expect("in range");
        let s1 = swhe.public.encrypt(&slots, &mut rng).expect("encrypt");
        let s2 = swhe.public.encrypt(&slots, &mut rng).expect("encrypt");
        Self {
            paillier,
            message,
            c1,
            c2,
            ctx,
            swhe,
            slots,
            s1,
            s2,
        }
    }
}
