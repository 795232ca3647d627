use std::cell::RefCell;

use proptest::prelude::*;
use pvlt::acl::{DenyReason, UserType};
use pvlt::protocol::{
    parse_script, run_script, MessageKind, Outcome, ProtocolError, SimConfig, Simulator,
};
use pvlt::secretshare::ShareError;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn sim(seed: u64) -> Simulator {
    let mut s = Simulator::new(SimConfig {
        seed,
        ..SimConfig::default()
    })
    .unwrap();
    s.register("alice", UserType::Owner, &["dept:radiology", "role:physician"]).unwrap();
    s.register("bob", UserType::User, &["role:nurse"]).unwrap();
    s.register("carol", UserType::User, &["role:pharmacist", "ward:3"]).unwrap();
    s
}

fn payload(seed: u64, len: usize) -> Vec<u8> {
    let mut d = vec![0u8; len];
    ChaCha20Rng::seed_from_u64(seed).fill_bytes(&mut d);
    d
}

#[test]
fn store_and_access() {
    let mut s = sim(1);
    let data = payload(1, 1024);
    let receipt = s.store_file("alice", "f", &data, &["bob", "carol"]).unwrap();
    let xs: Vec<(&str, u64)> = receipt.assignment.iter().map(|(h, x)| (h.as_str(), *x)).collect();
    assert_eq!(xs, [("org", 1), ("alice", 2), ("bob", 3), ("carol", 4)]);
    assert!(s.has_blob("f"));
    assert_eq!(s.files().count(), 1);
    assert_eq!(s.server_audit("f").unwrap().parameters.len(), 2);
    assert!(s.scan_cloud().is_empty());
    assert!(s.scan_server().is_empty());
    assert_eq!(s.request_access("bob", "f").unwrap(), data);
    assert_eq!(s.request_access("carol", "f").unwrap(), data);
    assert!(s.scan_server().is_empty());
}

#[test]
fn zero_sharers_stores_nothing() {
    let mut s = sim(2);
    let err = s.store_file("alice", "f", b"data", &[]).unwrap_err();
    assert!(matches!(err, ProtocolError::Share(ShareError::TooFewParticipants(2))));
    assert!(!s.has_blob("f"));
    assert!(s.policy_db().policy("f").is_err());
}

#[test]
fn one_key_per_file() {
    let mut s = sim(3);
    s.store_file("alice", "f", b"data", &["bob"]).unwrap();
    assert!(matches!(
        s.store_file("alice", "f", b"other", &["bob"]),
        Err(ProtocolError::DuplicateFile(_))
    ));
}

#[test]
fn users_cannot_store() {
    let mut s = sim(3);
    assert!(matches!(
        s.store_file("bob", "f", b"data", &["carol"]),
        Err(ProtocolError::Acl(_))
    ));
}

#[test]
fn withheld_approval_leaves_user_unchanged() {
    let mut s = sim(4);
    s.store_file("alice", "f", b"secret data", &["bob"]).unwrap();
    let before = s.party_snapshot("bob").unwrap();
    s.set_approval("alice", false).unwrap();
    assert!(matches!(
        s.request_access("bob", "f"),
        Err(ProtocolError::ApprovalWithheld(_))
    ));
    assert_eq!(s.party_snapshot("bob").unwrap(), before);
    assert!(!s.trace().iter().any(|m| m.kind == MessageKind::AccessResponse));
}

#[test]
fn revoked_user_denied_before_points() {
    let mut s = sim(5);
    s.store_file("alice", "f", b"secret data", &["bob", "carol"]).unwrap();
    s.revoke_and_reencrypt("alice", "f", "bob").unwrap().unwrap();
    let mark = s.trace().len();
    assert!(matches!(
        s.request_access("bob", "f"),
        Err(ProtocolError::Denied(DenyReason::Revoked))
    ));
    let kinds: Vec<MessageKind> = s.trace()[mark..].iter().map(|m| m.kind).collect();
    assert_eq!(kinds, [MessageKind::AccessRequest]);
}

#[test]
fn revoke_reencrypts_for_remaining() {
    let mut s = sim(6);
    let data = payload(6, 3000);
    s.store_file("alice", "f", &data, &["bob", "carol"]).unwrap();
    let old_blob = s.blob("f").unwrap().to_vec();
    let old_carol = s.point_of("carol", "f").unwrap();
    let receipt = s.revoke_and_reencrypt("alice", "f", "bob").unwrap().unwrap();
    assert_eq!(receipt.epoch, 1);
    assert_ne!(s.blob("f").unwrap(), old_blob.as_slice());
    assert_ne!(s.point_of("carol", "f").unwrap(), old_carol);
    assert_eq!(s.request_access("carol", "f").unwrap(), data);
    let stale = s.point_of("bob", "f").unwrap();
    assert!(matches!(
        s.probe_point("f", stale),
        Err(ProtocolError::BindingMismatch(_))
    ));
    assert!(s.probe_point("f", s.point_of("carol", "f").unwrap()).is_ok());
    assert!(!s.policy_db().policy("f").unwrap().needs_reencryption);
    assert!(s.scan_cloud().is_empty());
    assert!(s.scan_server().is_empty());
}

#[test]
fn regrant_restores_access() {
    let mut s = sim(7);
    let data = payload(7, 500);
    s.store_file("alice", "f", &data, &["bob", "carol"]).unwrap();
    s.revoke_and_reencrypt("alice", "f", "bob").unwrap();
    let receipt = s.grant("alice", "f", "bob").unwrap().unwrap();
    assert_eq!(receipt.epoch, 2);
    assert_eq!(s.request_access("bob", "f").unwrap(), data);
    assert_eq!(s.request_access("carol", "f").unwrap(), data);
}

#[test]
fn revoking_unknown_user_is_noop() {
    let mut s = sim(8);
    s.store_file("alice", "f", b"data", &["bob"]).unwrap();
    let digest = s.state_digest();
    assert_eq!(s.revoke_and_reencrypt("alice", "f", "nobody").unwrap(), None);
    assert_eq!(s.policy_db().policy("f").unwrap().epoch, 0);
    assert_eq!(s.state_digest(), digest);
}

#[test]
fn only_owner_revokes() {
    let mut s = sim(8);
    s.store_file("alice", "f", b"data", &["bob", "carol"]).unwrap();
    assert!(matches!(
        s.revoke_and_reencrypt("bob", "f", "carol"),
        Err(ProtocolError::Acl(_))
    ));
}

#[test]
fn revoking_last_sharer_keeps_old_blob() {
    let mut s = sim(9);
    let data = payload(9, 100);
    s.store_file("alice", "f", &data, &["bob"]).unwrap();
    let blob = s.blob("f").unwrap().to_vec();
    assert!(matches!(
        s.revoke_and_reencrypt("alice", "f", "bob"),
        Err(ProtocolError::Share(ShareError::TooFewParticipants(2)))
    ));
    assert_eq!(s.blob("f").unwrap(), blob.as_slice());
    assert!(s.policy_db().policy("f").unwrap().needs_reencryption);
    assert!(s.request_access("bob", "f").is_err());
}

#[test]
fn theorem_attacks_denied() {
    let mut s = sim(10);
    s.register("mallory", UserType::User, &["role:visitor"]).unwrap();
    s.store_file("alice", "f", b"payload", &["bob", "carol"]).unwrap();
    for holder in ["org", "alice", "bob"] {
        let o = s.attack_duplicate_point("f", holder, 5);
        assert!(o.denied, "{o:?}");
        assert!(o.detail.contains("duplicate x"));
    }
    let o = s.attack_collusion("f", "bob", "carol", 101);
    assert!(o.denied, "{o:?}");
    for (thief, creds) in [("mallory", vec!["role:visitor"]), ("eve", vec!["role:nurse"])] {
        let o = s.attack_stolen_point("f", "bob", thief, &creds);
        assert!(o.denied, "{o:?}");
    }
}

#[test]
fn deterministic_digest() {
    let run = |seed| {
        let mut s = sim(seed);
        s.store_file("alice", "f", &payload(1, 700), &["bob", "carol"]).unwrap();
        s.request_access("bob", "f").unwrap();
        s.revoke_and_reencrypt("alice", "f", "carol").unwrap();
        (s.state_digest(), s.trace_jsonl())
    };
    let (d1, t1) = run(11);
    let (d2, t2) = run(11);
    assert_eq!(d1, d2);
    assert_eq!(t1, t2);
    assert_ne!(run(12).0, d1);
    let seqs: Vec<u64> = t1.lines().map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["seq"].as_u64().unwrap()).collect();
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1));
}

#[test]
fn storage_audit_counts() {
    let mut s = sim(13);
    for m in 1..=10usize {
        let creds: Vec<String> = (0..m).map(|i| format!("attr{m}:{i}")).collect();
        let refs: Vec<&str> = creds.iter().map(String::as_str).collect();
        let id = format!("u{m}");
        s.register(&id, UserType::User, &refs).unwrap();
        let file = format!("f{m}");
        s.store_file("alice", &file, b"x", &[&id, "bob"]).unwrap();
        assert_eq!(s.user_audit(&id, &file).unwrap().parameters.len(), m + 1);
        assert_eq!(s.server_audit(&file).unwrap().parameters.len(), 2);
    }
}

#[test]
fn tick_revokes_stale_credentials() {
    let mut s = sim(14);
    let data = payload(14, 64);
    s.store_file("alice", "f", &data, &["bob", "carol"]).unwrap();
    s.set_local_credentials("carol", &["role:janitor"]).unwrap();
    let report = s.tick().unwrap();
    assert_eq!(report.epochs, [("f".to_string(), 1)]);
    assert_eq!(report.stale, [("f".to_string(), "carol".to_string())]);
    assert!(s.policy_db().policy("f").unwrap().revoked_user_ids.contains("carol"));
    assert_eq!(s.request_access("bob", "f").unwrap(), data);
}

#[test]
fn theorems_script() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scripts/theorems.script")).unwrap();
    let steps = parse_script(&text).unwrap();
    let mut s = Simulator::new(SimConfig::default()).unwrap();
    let report = run_script(&mut s, &steps);
    for step in &report.steps {
        assert!(step.matched, "line {}: {} -> {} ({})", step.line, step.text, step.outcome, step.detail);
    }
    assert!(report.steps.iter().any(|s| s.outcome == Outcome::Deny));
    let mut again = Simulator::new(SimConfig::default()).unwrap();
    assert_eq!(run_script(&mut again, &steps).digest, report.digest);
}

#[test]
fn script_errors() {
    assert_eq!(parse_script("frobnicate x").unwrap_err().line, 1);
    assert!(parse_script("\n\naccess bob").unwrap_err().reason.contains("usage"));
    assert!(parse_script("tick => maybe").is_err());
    assert!(parse_script("store a f blob:3 b").is_err());
}

thread_local! {
    static SHARED: RefCell<(Simulator, u64)> = RefCell::new((sim(99), 0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn roundtrip_any_payload(data in proptest::collection::vec(any::<u8>(), 1..2048)) {
        SHARED.with(|cell| {
            let (s, n) = &mut *cell.borrow_mut();
            *n += 1;
            let file = format!("p{n}");
            s.store_file("alice", &file, &data, &["bob", "carol"]).unwrap();
            prop_assert_eq!(s.request_access("carol", &file).unwrap(), data);
            prop_assert!(s.scan_cloud().is_empty());
            Ok(())
        })?;
    }
}
