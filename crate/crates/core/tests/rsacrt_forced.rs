use num_bigint::BigUint;
use pvlt::rsacrt::{unwrap_crt, RsaKeyPair, WrappedKey, FORCE_PRIMES_ENV};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

// Only test in this binary: it sets a process-wide variable.
#[test]
fn forced_primes_hook() {
    std::env::set_var(FORCE_PRIMES_ENV, "5,11");
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let k = RsaKeyPair::generate(512, &mut rng).unwrap();
    assert_eq!(k.n, BigUint::from(55u32));
    assert_eq!(k.e, BigUint::from(17u32));
    assert_eq!(k.d, BigUint::from(13u32));
    let w = WrappedKey { p_k: BigUint::from(54u32) };
    // 54^13 mod 55 = 54 does not decode as a payload
    assert!(unwrap_crt(&w, &k).is_err());
    std::env::set_var(FORCE_PRIMES_ENV, "5;11");
    assert!(RsaKeyPair::generate(512, &mut rng).is_err());
    std::env::remove_var(FORCE_PRIMES_ENV);
}
