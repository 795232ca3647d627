use std::collections::BTreeSet;

use proptest::prelude::*;
use pvlt::acl::{Decision, PolicyDb, UserRecord, UserType};

#[derive(Clone, Debug)]
enum Op {
    Revoke(usize),
    Grant(usize),
    Tick,
    Reencrypted,
    Reregister(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0usize..4).prop_map(Op::Revoke),
        (0usize..4).prop_map(Op::Grant),
        Just(Op::Tick),
        Just(Op::Reencrypted),
        (0usize..4).prop_map(Op::Reregister),
    ]
}

const USERS: [&str; 4] = ["u0", "u1", "u2", "u3"];

fn creds(i: usize) -> Vec<String> {
    vec![format!("dept:{}", i % 2), format!("id:{i}")]
}

proptest! {
    #[test]
    fn epochs_never_decrease_and_revocation_holds(ops in proptest::collection::vec(op(), 1..60)) {
        let mut db = PolicyDb::in_memory();
        db.register_user(UserRecord::new("own", UserType::Owner, vec!["o1", "o2"])).unwrap();
        for (i, u) in USERS.iter().enumerate() {
            db.register_user(UserRecord::new(u, UserType::User, creds(i))).unwrap();
        }
        let all: BTreeSet<String> = USERS.iter().map(|s| s.to_string()).collect();
        db.create_policy("own", "f", &all, 0).unwrap();
        let index_before = db.credential_index().clone();
        let mut last = 0;
        for op in ops {
            match op {
                Op::Revoke(i) => { db.revoke_user("own", "f", USERS[i]).unwrap(); }
                Op::Grant(i) => { db.grant_user("own", "f", USERS[i]).unwrap(); }
                Op::Tick => { db.advance_epoch("f").unwrap(); }
                Op::Reencrypted => db.mark_reencrypted("f").unwrap(),
                Op::Reregister(i) => {
                    prop_assert!(db.register_user(UserRecord::new(USERS[i], UserType::User, creds(i))).is_err());
                }
            }
            let p = db.policy("f").unwrap().clone();
            prop_assert!(p.epoch >= last);
            last = p.epoch;
            prop_assert!(p.revoked_user_ids.is_disjoint(&p.authorized_user_ids));
            for (i, u) in USERS.iter().enumerate() {
                let d = db.check_access(u, "f", &creds(i)).unwrap();
                prop_assert_eq!(d == Decision::Grant, !p.revoked_user_ids.contains(*u));
            }
        }
        prop_assert_eq!(db.credential_index(), &index_before);
        let replayed = PolicyDb::replay(db.export().as_bytes()).unwrap();
        prop_assert_eq!(replayed.policy("f").unwrap(), db.policy("f").unwrap());
    }
}
