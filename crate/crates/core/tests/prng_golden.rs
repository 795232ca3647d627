use num_bigint::BigUint;
use pvlt::prng::{generate_bits, generate_matrix, pad_message, PrngConfig};

fn golden() -> Vec<u64> {
    include_str!("data/prng_golden.txt")
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect()
}

#[test]
fn default_config_first_outputs() {
    let mut g = PrngConfig::default().generator().unwrap();
    for expected in golden() {
        assert_eq!(g.next_value().unwrap(), expected);
    }
}

/// Direct evaluation floor(s * M * i_num / i_den) mod n with big integers.
#[test]
fn fast_path_matches_bigint_for_ten_thousand_steps() {
    let c = PrngConfig::default();
    let m = BigUint::from(c.multiplier) * BigUint::from(c.i_num);
    let den = BigUint::from(c.i_den);
    let n = BigUint::from(c.modulus);
    let mut s = BigUint::from(c.seed);
    let mut g = c.generator().unwrap();
    for _ in 0..10_000 {
        s = (&s * &m / &den) % &n;
        let v = g.next_value().unwrap();
        assert!(v < c.modulus);
        assert_eq!(BigUint::from(v), s);
    }
}

#[test]
fn default_matrix_density() {
    let m = generate_matrix(&PrngConfig::default(), 256, 256).unwrap();
    let ones: u32 = m.as_bits().iter().map(|&b| b as u32).sum();
    let density = f64::from(ones) / 65_536.0;
    assert!((density - 0.5).abs() < 0.01, "density {density}");
}

#[test]
fn deterministic_across_runs() {
    let c = PrngConfig::default();
    assert_eq!(generate_bits(&c, 5000).unwrap(), generate_bits(&c, 5000).unwrap());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn unpad_inverts_pad(data in proptest::collection::vec(any::<u8>(), 1..2048), epoch in 0u64..1000) {
            let p = pad_message(&data, epoch, &PrngConfig::default()).unwrap();
            prop_assert_eq!(p.as_bytes().len(), data.len() + 24);
            prop_assert_eq!(p.unpad(), data);
        }

        #[test]
        fn outputs_stay_in_range(seed in 1u64..u64::MAX, modulus in 9u64..1_000_000) {
            prop_assume!(seed % modulus != 0);
            let c = PrngConfig { seed, modulus, ..PrngConfig::default() };
            let mut g = c.generator().unwrap();
            for _ in 0..200 {
                match g.next_value() {
                    Ok(v) => prop_assert!(v < modulus),
                    Err(_) => break,
                }
            }
        }
    }
}
