//! User registry, per-file policies and the append-only Policy_DB.
//!
//! Every mutation is recorded as one JSON line with a monotone sequence
//! number. Loading a log replays it into the in-memory snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const POLICY_THRESHOLD: u32 = 3;

#[derive(Debug, Error)]
pub enum AclError {
    #[error("user id {0:?} already registered")]
    DuplicateId(String),
    #[error("user {0:?} has no credentials")]
    EmptyCredentials(String),
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("user {0:?} is not of type owner")]
    NotOwnerType(String),
    #[error("file {0:?} already has a policy (one key per file)")]
    DuplicatePolicy(String),
    #[error("no policy for file {0:?}")]
    NoPolicy(String),
    #[error("user {caller:?} does not own file {file_id:?}")]
    NotPolicyOwner { caller: String, file_id: String },
    #[error("log line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("policy db io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserType {
    Owner,
    User,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub user_type: UserType,
    pub credentials: Vec<String>,
}

impl UserRecord {
    pub fn new<S: Into<String>>(user_id: &str, user_type: UserType, credentials: Vec<S>) -> Self {
        UserRecord {
            user_id: user_id.to_string(),
            user_type,
            credentials: credentials.into_iter().map(Into::into).collect(),
        }
    }

    fn credential_set(&self) -> BTreeSet<&str> {
        self.credentials.iter().map(String::as_str).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub file_id: String,
    pub owner_id: String,
    pub authorized_user_ids: BTreeSet<String>,
    pub threshold: u32,
    pub epoch: u64,
    pub priority: i64,
    pub revoked_user_ids: BTreeSet<String>,
    pub needs_reencryption: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Grant,
    Deny(DenyReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    UnknownUser,
    NotAuthorized,
    Revoked,
    CredentialMismatch,
}

/// Result of a registration: the stored id plus any dedup warnings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Registered {
    pub user_id: String,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Event {
    Register { record: UserRecord },
    UpdateCredentials { user_id: String, credentials: Vec<String> },
    Create { entry: PolicyEntry },
    Revoke { file_id: String, user_id: String, epoch: u64 },
    Grant { file_id: String, user_id: String, epoch: u64 },
    Epoch { file_id: String, epoch: u64 },
    Reencrypted { file_id: String, epoch: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// The organisation server's policy store.
#[derive(Debug, Default)]
pub struct PolicyDb {
    users: BTreeMap<String, UserRecord>,
    index: BTreeMap<String, BTreeSet<String>>,
    policies: BTreeMap<String, PolicyEntry>,
    log: Vec<LogRecord>,
    path: Option<PathBuf>,
}

impl PolicyDb {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open a log file, replaying what it holds; later events are appended.
    pub fn open(path: &Path) -> Result<Self, AclError> {
        let mut db = if path.exists() {
            Self::replay(BufReader::new(File::open(path)?))?
        } else {
            Self::default()
        };
        db.path = Some(path.to_path_buf());
        Ok(db)
    }

    pub fn replay(reader: impl BufRead) -> Result<Self, AclError> {
        let mut db = Self::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |reason: String| AclError::CorruptLog { line: i + 1, reason };
            let rec: LogRecord = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if rec.seq != db.log.len() as u64 + 1 {
                return Err(corrupt(format!("sequence {} out of order", rec.seq)));
            }
            db.apply(&rec.event);
            db.log.push(rec);
        }
        Ok(db)
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    /// The whole log as JSON lines.
    pub fn export(&self) -> String {
        let mut s = String::new();
        for rec in &self.log {
            s.push_str(&serde_json::to_string(rec).expect("log record serializes"));
            s.push('\n');
        }
        s
    }

    fn record(&mut self, event: Event) -> Result<(), AclError> {
        let rec = LogRecord {
            seq: self.log.len() as u64 + 1,
            event,
        };
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{}", serde_json::to_string(&rec).expect("log record serializes"))?;
        }
        self.apply(&rec.event);
        self.log.push(rec);
        Ok(())
    }

    fn apply(&mut self, event: &Event) {
        match event {
            Event::Register { record } => {
                for c in &record.credentials {
                    self.index
                        .entry(c.clone())
                        .or_default()
                        .insert(record.user_id.clone());
                }
                self.users.insert(record.user_id.clone(), record.clone());
            }
            Event::UpdateCredentials {
                user_id,
                credentials,
            } => {
                if let Some(user) = self.users.get_mut(user_id) {
                    for c in &user.credentials {
                        if let Some(ids) = self.index.get_mut(c) {
                            ids.remove(user_id);
                            if ids.is_empty() {
                                self.index.remove(c);
                            }
                        }
                    }
                    user.credentials = credentials.clone();
                    for c in credentials {
                        self.index.entry(c.clone()).or_default().insert(user_id.clone());
                    }
                }
            }
            Event::Create { entry } => {
                self.policies.insert(entry.file_id.clone(), entry.clone());
            }
            Event::Revoke {
                file_id,
                user_id,
                epoch,
            } => {
                if let Some(p) = self.policies.get_mut(file_id) {
                    p.authorized_user_ids.remove(user_id);
                    p.revoked_user_ids.insert(user_id.clone());
                    p.needs_reencryption = true;
                    p.epoch = p.epoch.max(*epoch);
                }
            }
            Event::Grant {
                file_id,
                user_id,
                epoch,
            } => {
                if let Some(p) = self.policies.get_mut(file_id) {
                    p.revoked_user_ids.remove(user_id);
                    p.authorized_user_ids.insert(user_id.clone());
                    p.needs_reencryption = true;
                    p.epoch = p.epoch.max(*epoch);
                }
            }
            Event::Epoch { file_id, epoch } => {
                if let Some(p) = self.policies.get_mut(file_id) {
                    p.epoch = p.epoch.max(*epoch);
                }
            }
            Event::Reencrypted { file_id, epoch } => {
                if let Some(p) = self.policies.get_mut(file_id) {
                    p.needs_reencryption = false;
                    p.epoch = p.epoch.max(*epoch);
                }
            }
        }
    }

    pub fn register_user(&mut self, record: UserRecord) -> Result<Registered, AclError> {
        if self.users.contains_key(&record.user_id) {
            return Err(AclError::DuplicateId(record.user_id));
        }
        let mut warnings = Vec::new();
        let mut seen = BTreeSet::new();
        let mut credentials = Vec::new();
        for c in record.credentials {
            if seen.insert(c.clone()) {
                credentials.push(c);
            } else {
                warnings.push(format!("duplicate credential {c:?} merged"));
            }
        }
        if credentials.is_empty() {
            return Err(AclError::EmptyCredentials(record.user_id));
        }
        let record = UserRecord {
            credentials,
            ..record
        };
        let set = record.credential_set();
        for other in self.users.values() {
            if other.credential_set() == set {
                warnings.push(format!(
                    "credential set identical to user {:?}",
                    other.user_id
                ));
            }
        }
        let user_id = record.user_id.clone();
        self.record(Event::Register { record })?;
        Ok(Registered { user_id, warnings })
    }

    pub fn update_credentials(
        &mut self,
        user_id: &str,
        credentials: Vec<String>,
    ) -> Result<(), AclError> {
        if !self.users.contains_key(user_id) {
            return Err(AclError::UnknownUser(user_id.to_string()));
        }
        let mut seen = BTreeSet::new();
        let credentials: Vec<String> = credentials.into_iter().filter(|c| seen.insert(c.clone())).collect();
        if credentials.is_empty() {
            return Err(AclError::EmptyCredentials(user_id.to_string()));
        }
        self.record(Event::UpdateCredentials {
            user_id: user_id.to_string(),
            credentials,
        })
    }

    pub fn user(&self, user_id: &str) -> Option<&UserRecord> {
        self.users.get(user_id)
    }

    pub fn users(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    /// Ids of users holding a credential.
    pub fn holders(&self, credential: &str) -> Option<&BTreeSet<String>> {
        self.index.get(credential)
    }

    pub fn credential_index(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.index
    }

    pub fn policy(&self, file_id: &str) -> Result<&PolicyEntry, AclError> {
        self.policies
            .get(file_id)
            .ok_or_else(|| AclError::NoPolicy(file_id.to_string()))
    }

    pub fn policies(&self) -> impl Iterator<Item = &PolicyEntry> {
        self.policies.values()
    }

    pub fn create_policy(
        &mut self,
        owner_id: &str,
        file_id: &str,
        authorized: &BTreeSet<String>,
        priority: i64,
    ) -> Result<PolicyEntry, AclError> {
        let owner = self
            .users
            .get(owner_id)
            .ok_or_else(|| AclError::UnknownUser(owner_id.to_string()))?;
        if owner.user_type != UserType::Owner {
            return Err(AclError::NotOwnerType(owner_id.to_string()));
        }
        if let Some(u) = authorized.iter().find(|u| !self.users.contains_key(*u)) {
            return Err(AclError::UnknownUser(u.clone()));
        }
        if self.policies.contains_key(file_id) {
            return Err(AclError::DuplicatePolicy(file_id.to_string()));
        }
        let entry = PolicyEntry {
            file_id: file_id.to_string(),
            owner_id: owner_id.to_string(),
            authorized_user_ids: authorized.clone(),
            threshold: POLICY_THRESHOLD,
            epoch: 0,
            priority,
            revoked_user_ids: BTreeSet::new(),
            needs_reencryption: false,
        };
        self.record(Event::Create {
            entry: entry.clone(),
        })?;
        Ok(entry)
    }

    /// Grant iff the user is authorized, not revoked, and presents exactly
    /// its registered credential set.
    pub fn check_access(
        &self,
        user_id: &str,
        file_id: &str,
        presented: &[String],
    ) -> Result<Decision, AclError> {
        let policy = self.policy(file_id)?;
        let Some(user) = self.users.get(user_id) else {
            return Ok(Decision::Deny(DenyReason::UnknownUser));
        };
        if policy.revoked_user_ids.contains(user_id) {
            return Ok(Decision::Deny(DenyReason::Revoked));
        }
        if !policy.authorized_user_ids.contains(user_id) {
            return Ok(Decision::Deny(DenyReason::NotAuthorized));
        }
        let presented: BTreeSet<&str> = presented.iter().map(String::as_str).collect();
        if presented != user.credential_set() {
            return Ok(Decision::Deny(DenyReason::CredentialMismatch));
        }
        Ok(Decision::Grant)
    }

    fn owned(&self, caller: &str, file_id: &str) -> Result<&PolicyEntry, AclError> {
        let p = self.policy(file_id)?;
        if p.owner_id != caller {
            return Err(AclError::NotPolicyOwner {
                caller: caller.to_string(),
                file_id: file_id.to_string(),
            });
        }
        Ok(p)
    }

    /// Revoking a user who is not currently authorized changes nothing.
    pub fn revoke_user(
        &mut self,
        caller: &str,
        file_id: &str,
        user_id: &str,
    ) -> Result<PolicyEntry, AclError> {
        let p = self.owned(caller, file_id)?;
        if !p.authorized_user_ids.contains(user_id) {
            return Ok(p.clone());
        }
        let epoch = p.epoch + 1;
        self.record(Event::Revoke {
            file_id: file_id.to_string(),
            user_id: user_id.to_string(),
            epoch,
        })?;
        Ok(self.policies[file_id].clone())
    }

    pub fn grant_user(
        &mut self,
        caller: &str,
        file_id: &str,
        user_id: &str,
    ) -> Result<PolicyEntry, AclError> {
        let p = self.owned(caller, file_id)?;
        if !self.users.contains_key(user_id) {
            return Err(AclError::UnknownUser(user_id.to_string()));
        }
        if p.authorized_user_ids.contains(user_id) {
            return Ok(p.clone());
        }
        let epoch = p.epoch + 1;
        self.record(Event::Grant {
            file_id: file_id.to_string(),
            user_id: user_id.to_string(),
            epoch,
        })?;
        Ok(self.policies[file_id].clone())
    }

    pub fn advance_epoch(&mut self, file_id: &str) -> Result<u64, AclError> {
        let epoch = self.policy(file_id)?.epoch + 1;
        self.record(Event::Epoch {
            file_id: file_id.to_string(),
            epoch,
        })?;
        Ok(epoch)
    }

    pub fn mark_reencrypted(&mut self, file_id: &str) -> Result<(), AclError> {
        let epoch = self.policy(file_id)?.epoch;
        self.record(Event::Reencrypted {
            file_id: file_id.to_string(),
            epoch,
        })
    }

    /// Files awaiting re-encryption, highest priority first.
    pub fn reencryption_queue(&self) -> Vec<&PolicyEntry> {
        let mut q: Vec<&PolicyEntry> = self.policies.values().filter(|p| p.needs_reencryption).collect();
        q.sort_by(|a, b| b.priority.cmp(&a.priority).then_with(|| a.file_id.cmp(&b.file_id)));
        q
    }
}

/// Parameters stored per user and per file by the server, in units of one
/// field element: `(m + 1, k_c + 1)`.
pub fn storage_overhead(m: usize, k_c: usize) -> (usize, usize) {
    (m + 1, k_c + 1)
}
