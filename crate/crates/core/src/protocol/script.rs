//! Line-oriented scenario scripts.
//!
//! ```text
//! # comment
//! register owner alice dept:radiology role:physician
//! register user bob role:nurse
//! store alice scan1 random:4096 bob carol
//! access bob scan1
//! revoke alice scan1 bob
//! access bob scan1 => deny
//! attack t2 scan1 bob carol => deny
//! ```
//!
//! Each line may end in `=> ok`, `=> deny` or `=> error`; the default is
//! `ok`. For `attack` lines `deny` means the attack was stopped.

use std::collections::BTreeMap;
use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use super::{ProtocolError, Simulator, ORG_ID};
use crate::acl::UserType;

/// Prime for the brute-force posterior in collusion attacks.
const SMALL_PRIME: u64 = 101;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {reason}")]
pub struct ScriptError {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Deny,
    Error,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Ok => "ok",
            Outcome::Deny => "deny",
            Outcome::Error => "error",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Random(usize),
    Text(String),
    File(std::path::PathBuf),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Command {
    Register { id: String, user_type: UserType, credentials: Vec<String> },
    Credentials { id: String, credentials: Vec<String> },
    Forge { id: String, credentials: Vec<String> },
    Store { owner: String, file: String, payload: Payload, sharers: Vec<String> },
    Access { user: String, file: String },
    Revoke { owner: String, file: String, user: String },
    Grant { owner: String, file: String, user: String },
    Approve { owner: String, approves: bool },
    Tick,
    Probe { file: String, holder: String },
    DuplicatePoint { file: String, holder: String, copies: usize },
    Collude { file: String, a: String, b: String },
    Stolen { file: String, victim: String, thief: String, credentials: Vec<String> },
    Scan,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub line: usize,
    pub text: String,
    pub command: Command,
    pub expect: Outcome,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepReport {
    pub line: usize,
    pub text: String,
    pub expected: Outcome,
    pub outcome: Outcome,
    pub detail: String,
    pub matched: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScriptReport {
    pub steps: Vec<StepReport>,
    pub digest: String,
}

impl ScriptReport {
    pub fn all_matched(&self) -> bool {
        self.steps.iter().all(|s| s.matched)
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn parse_line(line: usize, body: &str) -> Result<Command, ScriptError> {
    let err = |reason: &str| ScriptError {
        line,
        reason: reason.to_string(),
    };
    let t: Vec<&str> = body.split_whitespace().collect();
    let need = |n: usize, usage: &str| {
        if t.len() < n {
            Err(err(&format!("usage: {usage}")))
        } else {
            Ok(())
        }
    };
    let cmd = match t[0] {
        "register" => {
            need(4, "register owner|user ID CREDENTIAL...")?;
            let user_type = match t[1] {
                "owner" => UserType::Owner,
                "user" => UserType::User,
                _ => return Err(err("user type must be owner or user")),
            };
            Command::Register {
                id: t[2].into(),
                user_type,
                credentials: strings(&t[3..]),
            }
        }
        "credentials" | "forge" => {
            need(3, "credentials|forge ID CREDENTIAL...")?;
            let (id, credentials) = (t[1].to_string(), strings(&t[2..]));
            if t[0] == "forge" {
                Command::Forge { id, credentials }
            } else {
                Command::Credentials { id, credentials }
            }
        }
        "store" => {
            need(4, "store OWNER FILE random:N|text:STRING|file:PATH [SHARER...]")?;
            let payload = if let Some(n) = t[3].strip_prefix("random:") {
                Payload::Random(n.parse().map_err(|_| err("bad random payload size"))?)
            } else if let Some(s) = t[3].strip_prefix("text:") {
                Payload::Text(s.to_string())
            } else if let Some(s) = t[3].strip_prefix("file:") {
                Payload::File(s.into())
            } else {
                return Err(err("payload must be random:N, text:STRING or file:PATH"));
            };
            Command::Store {
                owner: t[1].into(),
                file: t[2].into(),
                payload,
                sharers: strings(&t[4..]),
            }
        }
        "access" => {
            need(3, "access USER FILE")?;
            Command::Access {
                user: t[1].into(),
                file: t[2].into(),
            }
        }
        "revoke" | "grant" => {
            need(4, "revoke|grant OWNER FILE USER")?;
            let (owner, file, user) = (t[1].into(), t[2].into(), t[3].into());
            if t[0] == "revoke" {
                Command::Revoke { owner, file, user }
            } else {
                Command::Grant { owner, file, user }
            }
        }
        "approve" | "withhold" => {
            need(2, "approve|withhold OWNER")?;
            Command::Approve {
                owner: t[1].into(),
                approves: t[0] == "approve",
            }
        }
        "tick" => Command::Tick,
        "scan" => Command::Scan,
        "probe" => {
            need(3, "probe FILE HOLDER")?;
            Command::Probe {
                file: t[1].into(),
                holder: t[2].into(),
            }
        }
        "attack" => {
            need(3, "attack t1|t2|t3 FILE ...")?;
            match t[1] {
                "t1" => {
                    need(5, "attack t1 FILE HOLDER COPIES")?;
                    Command::DuplicatePoint {
                        file: t[2].into(),
                        holder: t[3].into(),
                        copies: t[4].parse().map_err(|_| err("bad copy count"))?,
                    }
                }
                "t2" => {
                    need(5, "attack t2 FILE RECEIVER RECEIVER")?;
                    Command::Collude {
                        file: t[2].into(),
                        a: t[3].into(),
                        b: t[4].into(),
                    }
                }
                "t3" => {
                    need(5, "attack t3 FILE VICTIM THIEF [CREDENTIAL...]")?;
                    Command::Stolen {
                        file: t[2].into(),
                        victim: t[3].into(),
                        thief: t[4].into(),
                        credentials: strings(&t[5..]),
                    }
                }
                _ => return Err(err("attack must be t1, t2 or t3")),
            }
        }
        other => return Err(err(&format!("unknown command {other:?}"))),
    };
    Ok(cmd)
}

pub fn parse_script(text: &str) -> Result<Vec<Step>, ScriptError> {
    let mut steps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (body, expect) = match content.split_once("=>") {
            Some((b, e)) => {
                let expect = match e.trim() {
                    "ok" => Outcome::Ok,
                    "deny" => Outcome::Deny,
                    "error" => Outcome::Error,
                    other => {
                        return Err(ScriptError {
                            line,
                            reason: format!("unknown expectation {other:?}"),
                        })
                    }
                };
                (b.trim(), expect)
            }
            None => (content, Outcome::Ok),
        };
        steps.push(Step {
            line,
            text: content.to_string(),
            command: parse_line(line, body)?,
            expect,
        });
    }
    Ok(steps)
}

fn classify<T>(r: Result<T, ProtocolError>, ok: impl FnOnce(T) -> String) -> (Outcome, String) {
    match r {
        Ok(v) => (Outcome::Ok, ok(v)),
        Err(e) if e.is_denial() => (Outcome::Deny, e.to_string()),
        Err(e) => (Outcome::Error, e.to_string()),
    }
}

fn attack(o: super::ScenarioOutcome) -> (Outcome, String) {
    let outcome = if o.denied { Outcome::Deny } else { Outcome::Ok };
    (outcome, format!("{}: {}", o.name, o.detail))
}

/// Replay `steps`, recording for each whether the outcome matched.
pub fn run_script(sim: &mut Simulator, steps: &[Step]) -> ScriptReport {
    run_script_with(sim, steps, |_, _| {})
}

/// Like [`run_script`], also handing every successfully accessed plaintext
/// to `on_access` with the step that produced it.
pub fn run_script_with(
    sim: &mut Simulator,
    steps: &[Step],
    mut on_access: impl FnMut(&Step, &[u8]),
) -> ScriptReport {
    let mut stored: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut reports = Vec::with_capacity(steps.len());
    for step in steps {
        let (outcome, detail) = match &step.command {
            Command::Register {
                id,
                user_type,
                credentials,
            } => {
                let creds: Vec<&str> = credentials.iter().map(String::as_str).collect();
                classify(sim.register(id, *user_type, &creds), |w| w.join("; "))
            }
            Command::Credentials { id, credentials } => {
                let creds: Vec<&str> = credentials.iter().map(String::as_str).collect();
                classify(sim.update_credentials(id, &creds), |_| String::new())
            }
            Command::Forge { id, credentials } => {
                let creds: Vec<&str> = credentials.iter().map(String::as_str).collect();
                classify(sim.set_local_credentials(id, &creds), |_| String::new())
            }
            Command::Store {
                owner,
                file,
                payload,
                sharers,
            } => {
                let data = match payload {
                    Payload::Text(s) => s.clone().into_bytes(),
                    Payload::Random(n) => {
                        let mut rng = ChaCha20Rng::seed_from_u64(sim.config().seed ^ step.line as u64);
                        let mut d = vec![0u8; *n];
                        rng.fill_bytes(&mut d);
                        d
                    }
                    Payload::File(path) => match std::fs::read(path) {
                        Ok(d) => d,
                        Err(e) => {
                            reports.push(StepReport {
                                line: step.line,
                                text: step.text.clone(),
                                expected: step.expect,
                                outcome: Outcome::Error,
                                detail: format!("{}: {e}", path.display()),
                                matched: step.expect == Outcome::Error,
                            });
                            continue;
                        }
                    },
                };
                let sh: Vec<&str> = sharers.iter().map(String::as_str).collect();
                let r = sim.store_file(owner, file, &data, &sh);
                if r.is_ok() {
                    stored.insert(file.clone(), data);
                }
                classify(r, |receipt| {
                    let xs: Vec<String> = receipt.assignment.iter().map(|(h, x)| format!("{h}:{x}")).collect();
                    format!("points {}", xs.join(" "))
                })
            }
            Command::Access { user, file } => match sim.request_access(user, file) {
                Ok(plain) if stored.get(file) == Some(&plain) => {
                    on_access(step, &plain);
                    (Outcome::Ok, format!("{} bytes match", plain.len()))
                }
                Ok(plain) => (Outcome::Error, format!("{} bytes differ from stored data", plain.len())),
                Err(e) => classify::<()>(Err(e), |_| String::new()),
            },
            Command::Revoke { owner, file, user } => classify(sim.revoke_and_reencrypt(owner, file, user), |r| match r {
                Some(r) => format!("re-keyed at epoch {}", r.epoch),
                None => "no change".into(),
            }),
            Command::Grant { owner, file, user } => classify(sim.grant(owner, file, user), |r| match r {
                Some(r) => format!("re-keyed at epoch {}", r.epoch),
                None => "no change".into(),
            }),
            Command::Approve { owner, approves } => classify(sim.set_approval(owner, *approves), |_| String::new()),
            Command::Tick => classify(sim.tick(), |r| format!("{} files refreshed, {} stale", r.epochs.len(), r.stale.len())),
            Command::Probe { file, holder } => match sim.point_of(holder, file) {
                Some(pt) => classify(sim.probe_point(file, pt), |_| "point consistent".into()),
                None => (Outcome::Deny, format!("{holder} holds no point")),
            },
            Command::DuplicatePoint { file, holder, copies } => attack(sim.attack_duplicate_point(file, holder, *copies)),
            Command::Collude { file, a, b } => attack(sim.attack_collusion(file, a, b, SMALL_PRIME)),
            Command::Stolen {
                file,
                victim,
                thief,
                credentials,
            } => {
                let creds: Vec<&str> = credentials.iter().map(String::as_str).collect();
                attack(sim.attack_stolen_point(file, victim, thief, &creds))
            }
            Command::Scan => {
                let mut leaks = sim.scan_cloud();
                leaks.extend(sim.scan_server());
                if leaks.is_empty() {
                    (Outcome::Ok, format!("no key material in {} or {ORG_ID}", super::CLOUD_ID))
                } else {
                    let what: Vec<String> = leaks.iter().map(|l| format!("{}: {}", l.holder, l.what)).collect();
                    (Outcome::Error, what.join("; "))
                }
            }
        };
        reports.push(StepReport {
            line: step.line,
            text: step.text.clone(),
            expected: step.expect,
            matched: outcome == step.expect,
            outcome,
            detail,
        });
    }
    ScriptReport {
        steps: reports,
        digest: sim.state_digest(),
    }
}
