//! Runs every acceptance criterion in sequence and prints one line each.
//! Exits non-zero if any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use num_bigint::RandBigInt;
use pvlt::acl::UserType;
use pvlt::fbsc::{anti_involute, involute, keystream, Cipher, SymmetricKey, DEFAULT_PRECISION};
use pvlt::prng::PrngConfig;
use pvlt::protocol::{SimConfig, Simulator};
use pvlt::rsacrt::{time_decryption, RsaKeyPair};
use pvlt::secretshare::{
    consistent_secret_counts, generate_points, reconstruct_secret, ParabolicPolicy, Role, SharePoint,
};
use pvlt::statsuite::correlation::{correlation_bytes, Direction, DEFAULT_PAIRS};
use pvlt::statsuite::nist::*;
use pvlt::statsuite::{bytes_to_bits, nist_battery, NistParams};
use pvlt_cli::bench::{bench_attributes, linear_fit};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Check = Result<String, String>;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn table1() -> ParabolicPolicy {
    ParabolicPolicy::new(1234, 166, 94, 1_000_003).unwrap()
}

const TABLE1: [(u64, u64); 6] = [(1, 1494), (2, 1942), (3, 2578), (4, 3402), (5, 4414), (6, 5614)];

fn golden_points() -> Check {
    let pts = generate_points(&table1(), 6).map_err(|e| e.to_string())?;
    let got: Vec<(u64, u64)> = pts.iter().map(|p| (p.x, p.y)).collect();
    ensure(got == TABLE1, || format!("got {got:?}"))?;
    Ok(format!("{got:?}"))
}

fn point(x: u64, y: u64) -> SharePoint {
    SharePoint { x, y, role: Role::Receiver }
}

fn golden_reconstruction() -> Check {
    let p = table1().p;
    let r = reconstruct_secret(&[point(2, 1942), point(4, 3402), point(5, 4414)], p).map_err(|e| e.to_string())?;
    ensure((r.a0, r.a1, r.a2) == (1234, 166, 94), || format!("got {r:?}"))?;
    let mut subsets = 0;
    for i in 0..6 {
        for j in i + 1..6 {
            for k in j + 1..6 {
                let pts: Vec<SharePoint> = [i, j, k].iter().map(|&n| point(TABLE1[n].0, TABLE1[n].1)).collect();
                let r = reconstruct_secret(&pts, p).map_err(|e| e.to_string())?;
                ensure((r.a0, r.a1, r.a2) == (1234, 166, 94), || format!("subset {i},{j},{k}: {r:?}"))?;
                subsets += 1;
            }
        }
    }
    ensure(subsets == 20, || format!("{subsets} subsets"))?;
    Ok("a0=1234 a1=166 a2=94, 20/20 subsets agree".into())
}

fn threshold_hiding() -> Check {
    const P: u64 = 101;
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut pairs = 0;
    for n in 0..200 {
        let policy = ParabolicPolicy::new(rng.gen_range(0..P), rng.gen_range(0..P), rng.gen_range(1..P), P).unwrap();
        let pts = generate_points(&policy, 6).map_err(|e| e.to_string())?;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let counts = consistent_secret_counts(pts[i], pts[j], P);
                ensure(counts.len() == P as usize && counts.iter().all(|&c| c == 1), || {
                    format!("policy {n} points {i},{j}: {counts:?}")
                })?;
                pairs += 1;
            }
        }
    }
    Ok(format!("{pairs} share pairs, every candidate secret count is 1"))
}

fn involution_roundtrip() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut checked = 0;
    for _ in 0..50 {
        let pk: u64 = rng.gen_range(1u64 << 47..1u64 << 48);
        let key = SymmetricKey::new(pk, rng.gen_range(2..=16)).map_err(|e| e.to_string())?;
        for x in 0..=255u32 {
            let c = involute(x, &key, DEFAULT_PRECISION).map_err(|e| e.to_string())?;
            let back = anti_involute(&c, &key, DEFAULT_PRECISION).map_err(|e| format!("{key:?} x={x}: {e}"))?;
            ensure(u32::from(back) == x, || format!("{key:?}: {x} -> {back}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} symbols, 0 failures"))
}

fn crt_equivalence() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let kp = RsaKeyPair::generate(512, &mut rng).map_err(|e| e.to_string())?;
    for i in 0..1000 {
        let m = rng.gen_biguint_below(&kp.n);
        let c = kp.public().encrypt(&m);
        let (crt, plain) = (kp.decrypt_crt(&c), kp.decrypt_plain(&c));
        ensure(crt == plain && crt == m, || format!("message {i} differs"))?;
    }
    let big = RsaKeyPair::generate(2048, &mut rng).map_err(|e| e.to_string())?;
    let (crt, plain) = time_decryption(&big, 100, &mut rng);
    let ratio = crt / plain;
    ensure(ratio <= 0.4, || format!("median ratio {ratio:.3}"))?;
    Ok(format!(
        "1000/1000 equal at 512 bits; 2048-bit median crt {:.2} ms, plain {:.2} ms, ratio {ratio:.3}",
        crt * 1e3,
        plain * 1e3
    ))
}

fn close(got: f64, want: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() < 1e-4, || format!("{what}: got {got}, want {want}"))
}

fn bits(s: &str) -> Vec<u8> {
    s.bytes().map(|c| c - b'0').collect()
}

const PI_100: &str = "1100100100001111110110101010001000100001011010001100001000110100110001001100011001100010100010111000";

fn nist_reference() -> Result<usize, String> {
    let pi = bits(PI_100);
    close(frequency(&bits("1011010101")), 0.527089, "frequency")?;
    close(frequency(&pi), 0.109599, "frequency pi")?;
    close(block_frequency(&bits("0110011010"), 3), 0.801252, "block frequency")?;
    close(cumulative_sums(&bits("1011010111"), false), 0.4116588, "cusum")?;
    close(runs(&bits("1001101011")), 0.147232, "runs")?;
    close(runs(&pi), 0.500798, "runs pi")?;
    close(non_overlapping_templates(&bits("10100100101110010110"), &[vec![0, 0, 1]], 2)[0], 0.344154, "template")?;
    close(approximate_entropy(&bits("0100110101"), 3), 0.261961, "apen")?;
    let (p1, p2) = serial(&bits("0011011101"), 3);
    close(p1, 0.808792, "serial 1")?;
    close(p2, 0.670320, "serial 2")?;
    close(random_excursions(&bits("0110110101"))[4], 0.502529, "excursions")?;
    close(random_excursions_variant(&bits("0110110101"))[9], 0.683091, "variant")?;
    let bytes = std::fs::read(data("e_1e6.bin")).map_err(|e| e.to_string())?;
    let mut e = bytes_to_bits(&bytes);
    e.truncate(1_000_000);
    close(frequency(&e), 0.953749, "e frequency")?;
    close(block_frequency(&e, 128), 0.211072, "e block frequency")?;
    close(cumulative_sums(&e, false), 0.669887, "e cusum fwd")?;
    close(cumulative_sums(&e, true), 0.724266, "e cusum rev")?;
    close(runs(&e), 0.561917, "e runs")?;
    close(longest_run(&e), 0.718945, "e longest run")?;
    close(binary_rank(&e), 0.306156, "e rank")?;
    close(spectral(&e), 0.847187, "e dft")?;
    close(non_overlapping_templates(&e, &[vec![0, 0, 0, 0, 0, 0, 0, 0, 1]], 8)[0], 0.078790, "e template")?;
    close(overlapping_template(&e, 9, 1032, 5), 0.110434, "e overlapping")?;
    let (l, q) = universal_parameters(e.len());
    close(universal(&e, l, q).unwrap_or(f64::NAN), 0.282568, "e universal")?;
    close(approximate_entropy(&e, 10), 0.700073, "e apen")?;
    let (s1, s2) = serial(&e, 2);
    close(s1, 0.843764, "e serial 1")?;
    close(s2, 0.561915, "e serial 2")?;
    close(linear_complexity(&e, 1000), 0.845406, "e linear complexity")?;
    close(random_excursions(&e)[4], 0.786868, "e excursions +1")?;
    close(random_excursions_variant(&e)[8], 0.826009, "e variant -1")?;
    Ok(29)
}

/// Quantized ciphertext of `pixels` under a key drawn from the default
/// generator reseeded with `salt`.
fn cipher_bytes(pixels: &[u8], salt: u64) -> Result<Vec<u8>, String> {
    let config = PrngConfig::default().reseeded(salt);
    let mut gen = config.generator().map_err(|e| e.to_string())?;
    let key = SymmetricKey::generate(&mut gen).map_err(|e| e.to_string())?;
    let ks = keystream(&config, &key, 0, pixels.len()).map_err(|e| e.to_string())?;
    let cipher = Cipher::new(key, DEFAULT_PRECISION).map_err(|e| e.to_string())?;
    let elements = cipher.encrypt_stream(pixels, &ks).map_err(|e| e.to_string())?;
    cipher.quantize(&elements).map_err(|e| e.to_string())
}

fn nist_battery_checks() -> Check {
    let vectors = nist_reference()?;
    let img = pvlt::pgm::GrayImage::read(&data("camera_512.pgm")).map_err(|e| e.to_string())?;
    let mut stream = bytes_to_bits(&cipher_bytes(&img.pixels, 6)?);
    stream.truncate(1_000_000);
    let results = nist_battery(&stream, &NistParams::default()).map_err(|e| e.to_string())?;
    let failed: Vec<String> = results
        .iter()
        .filter(|r| r.pass == Some(false))
        .map(|r| format!("{} min p {:.6}", r.name, r.min_p().unwrap_or(f64::NAN)))
        .collect();
    let applicable = results.iter().filter(|r| r.pass.is_some()).count();
    ensure(failed.is_empty(), || format!("failed: {}", failed.join("; ")))?;
    Ok(format!("{vectors} reference values within 1e-4; camera_512 stream passes {applicable}/{applicable} applicable tests"))
}

fn correlation_bands() -> Check {
    let mut summary = Vec::new();
    let mut bad = Vec::new();
    for (n, name) in ["camera_256.pgm", "astronaut_256.pgm", "coffee_256.pgm"].iter().enumerate() {
        let img = pvlt::pgm::GrayImage::read(&data(name)).map_err(|e| e.to_string())?;
        let (w, h) = (img.width, img.height);
        let enc = cipher_bytes(&img.pixels, 7 + n as u64)?;
        for dir in Direction::ALL {
            let o = correlation_bytes(&img.pixels, w, h, dir, DEFAULT_PAIRS, 7).map_err(|e| e.to_string())?.coefficient;
            let e = correlation_bytes(&enc, w, h, dir, DEFAULT_PAIRS, 7).map_err(|e| e.to_string())?.coefficient;
            summary.push(format!("{name} {dir:?} {o:.4}/{e:+.4}"));
            if o <= 0.9 || e.abs() >= 0.01 {
                bad.push(format!("{name} {dir:?} original {o:.4} encrypted {e:+.4}"));
            }
        }
    }
    ensure(bad.is_empty(), || format!("out of band: {}", bad.join("; ")))?;
    Ok(summary.join(", "))
}

fn sim(seed: u64) -> Result<Simulator, String> {
    let mut s = Simulator::new(SimConfig { seed, ..SimConfig::default() }).map_err(|e| e.to_string())?;
    s.register("alice", UserType::Owner, &["dept:cardiology", "role:physician"]).map_err(|e| e.to_string())?;
    for (id, cred) in [("bob", "role:nurse"), ("carol", "role:pharmacist"), ("dave", "role:intern"), ("mallory", "role:visitor")] {
        s.register(id, UserType::User, &[cred]).map_err(|e| e.to_string())?;
    }
    Ok(s)
}

fn storage_audit() -> Check {
    let mut s = sim(8)?;
    for m in 1..=10usize {
        let creds: Vec<String> = (0..m).map(|i| format!("attr{m}:{i}")).collect();
        let refs: Vec<&str> = creds.iter().map(String::as_str).collect();
        let id = format!("u{m}");
        s.register(&id, UserType::User, &refs).map_err(|e| e.to_string())?;
        let file = format!("f{m}");
        s.store_file("alice", &file, b"audit", &[&id, "bob"]).map_err(|e| e.to_string())?;
        let user = s.user_audit(&id, &file).map_err(|e| e.to_string())?.parameters.len();
        let server = s.server_audit(&file).map_err(|e| e.to_string())?.parameters.len();
        ensure(user == m + 1 && server == 2, || format!("m={m}: user {user}, server {server}"))?;
    }
    Ok("m=1..10: user state m+1, server state K_c+1 = 2".into())
}

fn end_to_end() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let mut total = 0usize;
    for batch in 0..10u64 {
        let mut s = sim(900 + batch)?;
        for i in 0..10 {
            let len = rng.gen_range(1..=64 * 1024);
            let mut payload = vec![0u8; len];
            rng.fill_bytes(&mut payload);
            let f = format!("doc{batch}-{i}");
            let tag = |what: &str| format!("{f} ({len} bytes): {what}");
            s.store_file("alice", &f, &payload, &["bob", "carol", "dave"]).map_err(|e| tag(&e.to_string()))?;
            let back = s.request_access("bob", &f).map_err(|e| tag(&e.to_string()))?;
            ensure(back == payload, || tag("roundtrip differs"))?;
            let leaks = s.scan_cloud();
            ensure(leaks.is_empty(), || tag(&format!("cloud leaks {leaks:?}")))?;
            for holder in ["org", "bob"] {
                let o = s.attack_duplicate_point(&f, holder, 3);
                ensure(o.denied, || tag(&format!("{o:?}")))?;
            }
            let o = s.attack_collusion(&f, "bob", "carol", 101);
            ensure(o.denied, || tag(&format!("{o:?}")))?;
            let o = s.attack_stolen_point(&f, "bob", "mallory", &["role:visitor"]);
            ensure(o.denied, || tag(&format!("{o:?}")))?;
            s.revoke_and_reencrypt("alice", &f, "dave").map_err(|e| tag(&e.to_string()))?;
            match s.request_access("dave", &f) {
                Err(e) if e.is_denial() => {}
                other => return Err(tag(&format!("revoked access gave {other:?}"))),
            }
            for user in ["bob", "carol"] {
                let back = s.request_access(user, &f).map_err(|e| tag(&e.to_string()))?;
                ensure(back == payload, || tag("post re-encryption roundtrip differs"))?;
            }
            total += len;
        }
        let leaks = s.scan_cloud();
        ensure(leaks.is_empty(), || format!("batch {batch}: cloud leaks {leaks:?}"))?;
        ensure(s.scan_server().is_empty(), || format!("batch {batch}: server holds key material"))?;
    }
    Ok(format!("100 payloads ({total} bytes) roundtrip, no leaks, attacks and revoked access denied"))
}

fn benchmark_shape() -> Check {
    let counts = [2usize, 4, 8, 16, 32];
    let rows = bench_attributes(&SimConfig::default(), &counts, 10, 4096).map_err(|e| e.to_string())?;
    let xs: Vec<f64> = rows.iter().map(|r| r.count as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.encrypt_ms).collect();
    let fit = linear_fit(&xs, &ys);
    let shown: Vec<String> = rows.iter().map(|r| format!("{}:{:.3}ms", r.count, r.encrypt_ms)).collect();
    let detail = format!("{} slope {:.5} ms/attr R^2 {:.3}", shown.join(" "), fit.slope, fit.r_squared);
    ensure(fit.r_squared > 0.8, || detail.clone())?;
    Ok(detail)
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Check); 10] = [
        ("golden share vectors", Duration::from_millis(1), golden_points),
        ("golden reconstruction", Duration::from_millis(10), golden_reconstruction),
        ("threshold hiding", Duration::from_secs(10), threshold_hiding),
        ("involution roundtrip", Duration::from_secs(30), involution_roundtrip),
        ("crt equivalence and speed", Duration::from_secs(120), crt_equivalence),
        ("randomness battery", Duration::from_secs(300), nist_battery_checks),
        ("correlation bands", Duration::from_secs(60), correlation_bands),
        ("storage audit", Duration::MAX, storage_audit),
        ("end-to-end protocol", Duration::from_secs(120), end_to_end),
        ("benchmark shape", Duration::MAX, benchmark_shape),
    ];
    let mut failures = 0;
    for (n, (name, budget, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = run();
        let took = t.elapsed();
        let result = result.and_then(|d| {
            if took > *budget {
                Err(format!("took {took:?}, budget {budget:?}; {d}"))
            } else {
                Ok(d)
            }
        });
        match result {
            Ok(detail) => println!("criterion {:>2} PASS {name} [{took:.2?}] {detail}", n + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {:>2} FAIL {name} [{took:.2?}] {detail}", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
