//! Deterministic simulator of the four parties (data owner, organisation
//! server, cloud storage, data user) over an in-process message bus.
//!
//! Every message is appended to a trace with a strictly increasing sequence
//! number and handled before the next one is sent, so a run is a pure
//! function of its seed and the sequence of calls.

mod script;

use std::collections::{BTreeMap, BTreeSet};

use aho_corasick::AhoCorasick;
use num_bigint::BigUint;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::acl::{AclError, Decision, DenyReason, PolicyDb, UserRecord, UserType};
use crate::fbsc::{keystream, Cipher, EncryptedBlob, FbscError, SymmetricKey, DEFAULT_PRECISION};
use crate::prng::{pad_message, PaddedMessage, PrngConfig, PrngError};
use crate::rsacrt::{self, RsaError, RsaKeyPair, WrappedKey};
use crate::secretshare::{
    binding_code, consistent_secret_counts, derive_coefficients, generate_points, reconstruct_secret,
    BindingCode, ParabolicPolicy, PointFile, ShareError, SharePoint, DEFAULT_PRIME, THRESHOLD,
};

pub use script::{parse_script, run_script, run_script_with, Command, Outcome, Payload, ScriptError, ScriptReport, Step, StepReport};

pub const ORG_ID: &str = "org";
pub const CLOUD_ID: &str = "cloud";
pub const DEFAULT_RSA_BITS: u64 = 512;

const SEAL_DOMAIN: &[u8] = b"pvlt/seal/v1";
/// Needles shorter than this are not scanned for: they match by chance.
const MIN_NEEDLE_DIGITS: usize = 8;
const MIN_NEEDLE_BYTES: usize = 6;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("acl: {0}")]
    Acl(#[from] AclError),
    #[error("secretshare: {0}")]
    Share(#[from] ShareError),
    #[error("rsacrt: {0}")]
    Rsa(#[from] RsaError),
    #[error("fbsc: {0}")]
    Fbsc(#[from] FbscError),
    #[error("prng: {0}")]
    Prng(#[from] PrngError),
    #[error("protocol: unknown participant {0:?}")]
    UnknownParticipant(String),
    #[error("protocol: {0:?} already registered")]
    AlreadyRegistered(String),
    #[error("protocol: file {0:?} already stored, one key per file")]
    DuplicateFile(String),
    #[error("protocol: no stored file {0:?}")]
    UnknownFile(String),
    #[error("protocol: {0:?} cannot share with itself")]
    SelfShare(String),
    #[error("protocol: access denied ({0:?})")]
    Denied(DenyReason),
    #[error("protocol: owner {0:?} withheld approval")]
    ApprovalWithheld(String),
    #[error("protocol: {user:?} holds no point for {file_id:?}")]
    NoPoint { user: String, file_id: String },
    #[error("protocol: reconstructed secret fails the binding code of {0:?}")]
    BindingMismatch(String),
    #[error("protocol: no key envelope for {user:?} on {file_id:?}")]
    MissingEnvelope { user: String, file_id: String },
    #[error("protocol: key does not match the stored blob of {0:?}")]
    KeyMismatch(String),
}

impl ProtocolError {
    /// A refusal by the protocol, as opposed to a malformed request.
    pub fn is_denial(&self) -> bool {
        matches!(
            self,
            ProtocolError::Denied(_)
                | ProtocolError::ApprovalWithheld(_)
                | ProtocolError::NoPoint { .. }
                | ProtocolError::BindingMismatch(_)
                | ProtocolError::Share(ShareError::Threshold(_))
                | ProtocolError::Share(ShareError::DuplicateX(_))
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub prng: PrngConfig,
    pub prime: u64,
    pub rsa_bits: u64,
    pub precision: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            prng: PrngConfig::default(),
            prime: DEFAULT_PRIME,
            rsa_bits: DEFAULT_RSA_BITS,
            precision: DEFAULT_PRECISION,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    StoreRequest,
    PolicyCreate,
    PointIssue,
    AccessRequest,
    OwnerApproval,
    PointPresentation,
    AccessResponse,
    BlobPut,
    BlobGet,
    ReencryptNotice,
}

/// One delivered message. Payloads describe the message without carrying
/// key material, so traces can be written out freely.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimMessage {
    pub seq: u64,
    pub from: String,
    pub to: String,
    pub kind: MessageKind,
    pub payload: Value,
}

/// A data owner or data user.
#[derive(Clone, Debug, Serialize)]
struct Party {
    user_type: UserType,
    credentials: Vec<String>,
    keys: RsaKeyPair,
    points: BTreeMap<String, PointFile>,
    /// The owner's own wrapped copy of each file key it stored.
    owned: BTreeMap<String, WrappedKey>,
    approves: bool,
}

#[derive(Clone, Debug, Serialize)]
struct ServerFile {
    org: PointFile,
    key_epoch: u64,
    issued: BTreeMap<String, u64>,
}

#[derive(Debug)]
struct OrgServer {
    keys: RsaKeyPair,
    db: PolicyDb,
    files: BTreeMap<String, ServerFile>,
}

#[derive(Debug, Default, Serialize)]
struct Cloud {
    #[serde(skip)]
    blobs: BTreeMap<String, Vec<u8>>,
    envelopes: BTreeMap<String, BTreeMap<String, String>>,
    acl_backup: String,
}

/// Everything the harness saw being generated. Not part of any party's
/// state and not part of the digest; it only feeds the leak scans.
#[derive(Debug, Default)]
struct Observer {
    keys: Vec<SymmetricKey>,
    secrets: Vec<u64>,
    ys: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StoreReceipt {
    pub file_id: String,
    pub epoch: u64,
    /// Holder and `x` of every issued point, organisation first.
    pub assignment: Vec<(String, u64)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Leak {
    pub holder: String,
    pub what: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditRecord {
    pub holder: String,
    pub file_id: String,
    pub parameters: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub denied: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TickReport {
    pub epochs: Vec<(String, u64)>,
    pub stale: Vec<(String, String)>,
}

struct Prepared {
    file_id: String,
    epoch: u64,
    key: SymmetricKey,
    blob: Vec<u8>,
    secret: u64,
    ys: Vec<u64>,
    org: PointFile,
    holders: Vec<(String, PointFile)>,
    envelopes: BTreeMap<String, String>,
    owner_copy: WrappedKey,
}

pub struct Simulator {
    config: SimConfig,
    rng: ChaCha20Rng,
    server: OrgServer,
    cloud: Cloud,
    parties: BTreeMap<String, Party>,
    trace: Vec<SimMessage>,
    observer: Observer,
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn seal_mask(secret: u64, file_id: &str, epoch: u64, user: &str, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + 32);
    let mut counter = 0u32;
    while out.len() < len {
        let mut h = Sha256::new();
        h.update(SEAL_DOMAIN);
        h.update(secret.to_be_bytes());
        h.update((file_id.len() as u64).to_be_bytes());
        h.update(file_id.as_bytes());
        h.update(epoch.to_be_bytes());
        h.update(user.as_bytes());
        h.update(counter.to_be_bytes());
        out.extend_from_slice(&h.finalize());
        counter += 1;
    }
    out.truncate(len);
    out
}

/// A wrapped key XOR a mask only the holders of three points can derive.
fn seal(secret: u64, file_id: &str, epoch: u64, user: &str, wrapped: &WrappedKey, width: usize) -> String {
    let mut bytes = wrapped.p_k.to_bytes_be();
    let mut padded = vec![0u8; width.saturating_sub(bytes.len())];
    padded.append(&mut bytes);
    let mask = seal_mask(secret, file_id, epoch, user, padded.len());
    let sealed: Vec<u8> = padded.iter().zip(&mask).map(|(a, b)| a ^ b).collect();
    hex::encode(sealed)
}

fn unseal(secret: u64, file_id: &str, epoch: u64, user: &str, sealed: &str) -> WrappedKey {
    let bytes = hex::decode(sealed).unwrap_or_default();
    let mask = seal_mask(secret, file_id, epoch, user, bytes.len());
    let plain: Vec<u8> = bytes.iter().zip(&mask).map(|(a, b)| a ^ b).collect();
    WrappedKey {
        p_k: BigUint::from_bytes_be(&plain),
    }
}

fn needles_u64(label: &str, v: u64, out: &mut Vec<(String, Vec<u8>)>) {
    needles_big(label, &BigUint::from(v), out);
}

fn needles_big(label: &str, v: &BigUint, out: &mut Vec<(String, Vec<u8>)>) {
    let dec = v.to_str_radix(10);
    if dec.len() >= MIN_NEEDLE_DIGITS {
        out.push((format!("{label} (decimal)"), dec.into_bytes()));
    }
    let be = v.to_bytes_be();
    if be.len() >= MIN_NEEDLE_BYTES {
        out.push((format!("{label} (bytes)"), be));
    }
}

fn scan(holder: &str, haystack: &[u8], needles: &[(String, Vec<u8>)]) -> Vec<Leak> {
    if needles.is_empty() {
        return Vec::new();
    }
    let ac = AhoCorasick::new(needles.iter().map(|(_, n)| n)).expect("needles build");
    let hits: BTreeSet<usize> = ac.find_overlapping_iter(haystack).map(|m| m.pattern().as_usize()).collect();
    hits.into_iter()
        .map(|i| Leak {
            holder: holder.to_string(),
            what: needles[i].0.clone(),
        })
        .collect()
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self, ProtocolError> {
        config.prng.validate()?;
        if !crate::secretshare::is_prime(config.prime) {
            return Err(ShareError::NotPrime(config.prime).into());
        }
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let keys = RsaKeyPair::generate(config.rsa_bits, &mut rng)?;
        Ok(Simulator {
            config,
            rng,
            server: OrgServer {
                keys,
                db: PolicyDb::in_memory(),
                files: BTreeMap::new(),
            },
            cloud: Cloud::default(),
            parties: BTreeMap::new(),
            trace: Vec::new(),
            observer: Observer::default(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn trace(&self) -> &[SimMessage] {
        &self.trace
    }

    pub fn trace_jsonl(&self) -> String {
        let mut s = String::new();
        for m in &self.trace {
            s.push_str(&serde_json::to_string(m).expect("message serializes"));
            s.push('\n');
        }
        s
    }

    pub fn policy_db(&self) -> &PolicyDb {
        &self.server.db
    }

    fn send(&mut self, from: &str, to: &str, kind: MessageKind, payload: Value) {
        let seq = self.trace.len() as u64 + 1;
        self.trace.push(SimMessage {
            seq,
            from: from.to_string(),
            to: to.to_string(),
            kind,
            payload,
        });
    }

    fn party(&self, id: &str) -> Result<&Party, ProtocolError> {
        self.parties
            .get(id)
            .ok_or_else(|| ProtocolError::UnknownParticipant(id.to_string()))
    }

    fn party_mut(&mut self, id: &str) -> Result<&mut Party, ProtocolError> {
        self.parties
            .get_mut(id)
            .ok_or_else(|| ProtocolError::UnknownParticipant(id.to_string()))
    }

    /// Register an owner or user with the server and give it an RSA key pair.
    pub fn register(
        &mut self,
        id: &str,
        user_type: UserType,
        credentials: &[&str],
    ) -> Result<Vec<String>, ProtocolError> {
        if self.parties.contains_key(id) || id == ORG_ID || id == CLOUD_ID {
            return Err(ProtocolError::AlreadyRegistered(id.to_string()));
        }
        let registered = self
            .server
            .db
            .register_user(UserRecord::new(id, user_type, credentials.to_vec()))?;
        let keys = RsaKeyPair::generate(self.config.rsa_bits, &mut self.rng)?;
        let credentials = self.server.db.user(id).expect("just registered").credentials.clone();
        self.parties.insert(
            id.to_string(),
            Party {
                user_type,
                credentials,
                keys,
                points: BTreeMap::new(),
                owned: BTreeMap::new(),
                approves: true,
            },
        );
        self.backup_acl();
        Ok(registered.warnings)
    }

    pub fn update_credentials(&mut self, id: &str, credentials: &[&str]) -> Result<(), ProtocolError> {
        self.party(id)?;
        let creds: Vec<String> = credentials.iter().map(|s| s.to_string()).collect();
        self.server.db.update_credentials(id, creds)?;
        let stored = self.server.db.user(id).expect("registered").credentials.clone();
        self.party_mut(id)?.credentials = stored;
        self.backup_acl();
        Ok(())
    }

    /// Change what a party presents without touching the registry, as a
    /// party with a forgotten or forged credential would.
    pub fn set_local_credentials(&mut self, id: &str, credentials: &[&str]) -> Result<(), ProtocolError> {
        self.party_mut(id)?.credentials = credentials.iter().map(|s| s.to_string()).collect();
        Ok(())
    }

    pub fn set_approval(&mut self, owner: &str, approves: bool) -> Result<(), ProtocolError> {
        self.party_mut(owner)?.approves = approves;
        Ok(())
    }

    fn backup_acl(&mut self) {
        self.cloud.acl_backup = self.server.db.export();
    }

    fn prepare(
        &mut self,
        owner_id: &str,
        file_id: &str,
        data: &[u8],
        sharers: &[String],
        epoch: u64,
    ) -> Result<Prepared, ProtocolError> {
        let d_x = 2 + sharers.len();
        if d_x < THRESHOLD {
            return Err(ShareError::TooFewParticipants(d_x).into());
        }
        let p = self.config.prime;
        let attributes = self
            .server
            .db
            .user(owner_id)
            .ok_or_else(|| ProtocolError::UnknownParticipant(owner_id.to_string()))?
            .credentials
            .clone();
        crate::secretshare::attribute_coefficients(&attributes, p)?;

        let mut gen = self.config.prng.reseeded(self.rng.next_u64()).generator()?;
        let key = SymmetricKey::generate(&mut gen)?;
        let pad_config = self.config.prng.reseeded(self.rng.next_u64());
        let padded = pad_message(data, epoch, &pad_config)?;
        let ks = keystream(&self.config.prng, &key, epoch, padded.as_bytes().len())?;
        let cipher = Cipher::new(key.clone(), self.config.precision)?;
        let blob = EncryptedBlob {
            r_n: 0,
            precision: self.config.precision as u16,
            fingerprint: key.fingerprint(),
            n1_len: padded.n1_len() as u8,
            n2_len: padded.n2_len() as u8,
            epoch: epoch as u32,
            elements: cipher.encrypt_stream(padded.as_bytes(), &ks)?,
        };

        let secret = self.rng.gen_range(1..p);
        let policy = derive_coefficients(&attributes, secret, p)?;
        let points = generate_points(&policy, d_x)?;
        let sec = BigUint::from(secret);
        let point_file = |pt: &SharePoint| PointFile {
            p,
            x: pt.x,
            y: pt.y,
            role: pt.role,
            kc: binding_code(&sec, pt, p),
            file_id: file_id.to_string(),
            epoch,
        };
        let org = point_file(&points[0]);
        let mut holders = vec![(owner_id.to_string(), point_file(&points[1]))];
        let mut envelopes = BTreeMap::new();
        for (user, pt) in sharers.iter().zip(&points[2..]) {
            holders.push((user.clone(), point_file(pt)));
            let public = self.party(user)?.keys.public();
            let width = public.n.to_bytes_be().len();
            let wrapped = rsacrt::wrap(key.r_n(), key.pk_sk(), &public)?;
            envelopes.insert(user.clone(), seal(secret, file_id, epoch, user, &wrapped, width));
        }
        let owner_copy = rsacrt::wrap(key.r_n(), key.pk_sk(), &self.party(owner_id)?.keys.public())?;
        Ok(Prepared {
            file_id: file_id.to_string(),
            epoch,
            key,
            blob: blob.to_bytes(),
            secret,
            ys: points.iter().map(|pt| pt.y).collect(),
            org,
            holders,
            envelopes,
            owner_copy,
        })
    }

    fn commit(&mut self, owner_id: &str, prep: Prepared) -> StoreReceipt {
        let Prepared {
            file_id,
            epoch,
            key,
            blob,
            secret,
            ys,
            org,
            holders,
            envelopes,
            owner_copy,
        } = prep;
        self.observer.keys.push(key);
        self.observer.secrets.push(secret);
        self.observer.ys.extend(ys);

        let mut assignment = vec![(ORG_ID.to_string(), org.x)];
        let mut issued = BTreeMap::new();
        for (holder, pf) in holders {
            self.send(
                ORG_ID,
                &holder,
                MessageKind::PointIssue,
                json!({"file_id": file_id, "epoch": epoch, "x": pf.x, "role": pf.role}),
            );
            assignment.push((holder.clone(), pf.x));
            issued.insert(holder.clone(), pf.x);
            self.parties
                .get_mut(&holder)
                .expect("holders are registered")
                .points
                .insert(file_id.clone(), pf);
        }
        self.parties
            .get_mut(owner_id)
            .expect("owner is registered")
            .owned
            .insert(file_id.clone(), owner_copy);
        self.server.files.insert(
            file_id.clone(),
            ServerFile {
                org,
                key_epoch: epoch,
                issued,
            },
        );
        self.send(
            ORG_ID,
            CLOUD_ID,
            MessageKind::BlobPut,
            json!({"file_id": file_id, "epoch": epoch, "bytes": blob.len(), "envelopes": envelopes.len()}),
        );
        self.cloud.blobs.insert(file_id.clone(), blob);
        self.cloud.envelopes.insert(file_id.clone(), envelopes);
        self.backup_acl();
        StoreReceipt {
            file_id,
            epoch,
            assignment,
        }
    }

    /// Encrypt `data`, create its policy, issue one point to the server,
    /// the owner and each sharer, and upload the blob. Nothing is stored
    /// unless every step succeeds.
    pub fn store_file(
        &mut self,
        owner_id: &str,
        file_id: &str,
        data: &[u8],
        sharers: &[&str],
    ) -> Result<StoreReceipt, ProtocolError> {
        let owner = self.party(owner_id)?;
        if owner.user_type != UserType::Owner {
            return Err(AclError::NotOwnerType(owner_id.to_string()).into());
        }
        if self.server.files.contains_key(file_id) || self.server.db.policy(file_id).is_ok() {
            return Err(ProtocolError::DuplicateFile(file_id.to_string()));
        }
        let mut set = BTreeSet::new();
        for s in sharers {
            self.party(s)?;
            if *s == owner_id {
                return Err(ProtocolError::SelfShare(owner_id.to_string()));
            }
            set.insert(s.to_string());
        }
        let sharers: Vec<String> = set.iter().cloned().collect();
        let prep = self.prepare(owner_id, file_id, data, &sharers, 0)?;

        // The owner ships the blob with the key wrapped for the server, which
        // unwraps it only to derive the per-user envelopes.
        let for_server = rsacrt::wrap(prep.key.r_n(), prep.key.pk_sk(), &self.server.keys.public())?;
        let (r_n, pk) = rsacrt::unwrap_crt(&for_server, &self.server.keys)?;
        if SymmetricKey::new(pk, r_n)? != prep.key {
            return Err(ProtocolError::KeyMismatch(file_id.to_string()));
        }
        self.send(
            owner_id,
            ORG_ID,
            MessageKind::StoreRequest,
            json!({"file_id": file_id, "sharers": sharers, "bytes": prep.blob.len()}),
        );
        self.server.db.create_policy(owner_id, file_id, &set, 0)?;
        self.send(
            ORG_ID,
            CLOUD_ID,
            MessageKind::PolicyCreate,
            json!({"file_id": file_id, "authorized": sharers}),
        );
        Ok(self.commit(owner_id, prep))
    }

    /// Server side of an access: ACL check, owner approval, reconstruction,
    /// binding check and unsealing of the presenter's envelope.
    fn authorize(
        &mut self,
        identity: &str,
        credentials: &[String],
        point: Option<SharePoint>,
        file_id: &str,
    ) -> Result<WrappedKey, ProtocolError> {
        self.send(
            identity,
            ORG_ID,
            MessageKind::AccessRequest,
            json!({"file_id": file_id, "credentials": credentials.len()}),
        );
        if !self.server.files.contains_key(file_id) {
            return Err(ProtocolError::UnknownFile(file_id.to_string()));
        }
        match self.server.db.check_access(identity, file_id, credentials)? {
            Decision::Grant => {}
            Decision::Deny(reason) => return Err(ProtocolError::Denied(reason)),
        }
        let point = point.ok_or_else(|| ProtocolError::NoPoint {
            user: identity.to_string(),
            file_id: file_id.to_string(),
        })?;
        self.send(
            identity,
            ORG_ID,
            MessageKind::PointPresentation,
            json!({"file_id": file_id, "x": point.x}),
        );
        let owner_id = self.server.db.policy(file_id)?.owner_id.clone();
        self.send(
            ORG_ID,
            &owner_id,
            MessageKind::AccessRequest,
            json!({"file_id": file_id, "requester": identity}),
        );
        let owner = self.party(&owner_id)?;
        if !owner.approves {
            self.send(
                &owner_id,
                ORG_ID,
                MessageKind::OwnerApproval,
                json!({"file_id": file_id, "approved": false}),
            );
            return Err(ProtocolError::ApprovalWithheld(owner_id));
        }
        let owner_point = owner
            .points
            .get(file_id)
            .map(PointFile::point)
            .ok_or_else(|| ProtocolError::NoPoint {
                user: owner_id.clone(),
                file_id: file_id.to_string(),
            })?;
        self.send(
            &owner_id,
            ORG_ID,
            MessageKind::OwnerApproval,
            json!({"file_id": file_id, "approved": true, "x": owner_point.x}),
        );
        let file = &self.server.files[file_id];
        let (org, key_epoch) = (file.org.clone(), file.key_epoch);
        let secret = self.combine(file_id, &org, owner_point, point)?;
        self.send(
            ORG_ID,
            CLOUD_ID,
            MessageKind::BlobGet,
            json!({"file_id": file_id, "envelope": identity}),
        );
        let sealed = self
            .cloud
            .envelopes
            .get(file_id)
            .and_then(|e| e.get(identity))
            .ok_or_else(|| ProtocolError::MissingEnvelope {
                user: identity.to_string(),
                file_id: file_id.to_string(),
            })?;
        let wrapped = unseal(secret, file_id, key_epoch, identity, sealed);
        self.send(
            ORG_ID,
            identity,
            MessageKind::AccessResponse,
            json!({"file_id": file_id, "epoch": key_epoch}),
        );
        Ok(wrapped)
    }

    fn combine(
        &self,
        file_id: &str,
        org: &PointFile,
        owner_point: SharePoint,
        presented: SharePoint,
    ) -> Result<u64, ProtocolError> {
        let p = self.config.prime;
        let policy: ParabolicPolicy = reconstruct_secret(&[org.point(), owner_point, presented], p)?;
        if binding_code(&BigUint::from(policy.secret()), &org.point(), p) != org.kc {
            return Err(ProtocolError::BindingMismatch(file_id.to_string()));
        }
        Ok(policy.secret())
    }

    /// Check a point against the current epoch's polynomial, as the server
    /// would during an access, without any ACL step.
    pub fn probe_point(&self, file_id: &str, point: SharePoint) -> Result<(), ProtocolError> {
        let file = self
            .server
            .files
            .get(file_id)
            .ok_or_else(|| ProtocolError::UnknownFile(file_id.to_string()))?;
        let owner_id = &self.server.db.policy(file_id)?.owner_id;
        let owner_point = self.party(owner_id)?.points[file_id].point();
        self.combine(file_id, &file.org, owner_point, point).map(|_| ())
    }

    fn open_blob(&mut self, reader: &str, file_id: &str, key: SymmetricKey) -> Result<Vec<u8>, ProtocolError> {
        self.send(reader, CLOUD_ID, MessageKind::BlobGet, json!({"file_id": file_id}));
        let bytes = self
            .cloud
            .blobs
            .get(file_id)
            .ok_or_else(|| ProtocolError::UnknownFile(file_id.to_string()))?;
        let blob = EncryptedBlob::from_bytes(bytes)?;
        if blob.fingerprint != key.fingerprint() {
            return Err(ProtocolError::KeyMismatch(file_id.to_string()));
        }
        let epoch = u64::from(blob.epoch);
        let ks = keystream(&self.config.prng, &key, epoch, blob.elements.len())?;
        let cipher = Cipher::new(key, u32::from(blob.precision))?;
        let plain = cipher.decrypt_stream(&blob.elements, &ks)?;
        let padded = PaddedMessage::from_parts(plain, usize::from(blob.n1_len), usize::from(blob.n2_len), epoch)?;
        Ok(padded.unpad())
    }

    /// The full access path for a registered user presenting its own
    /// credentials and point.
    pub fn request_access(&mut self, user: &str, file_id: &str) -> Result<Vec<u8>, ProtocolError> {
        let party = self.party(user)?;
        let credentials = party.credentials.clone();
        let point = party.points.get(file_id).map(PointFile::point);
        let wrapped = self.authorize(user, &credentials, point, file_id)?;
        let (r_n, pk) = rsacrt::unwrap_crt(&wrapped, &self.party(user)?.keys)?;
        let key = SymmetricKey::new(pk, r_n)?;
        self.open_blob(user, file_id, key)
    }

    /// Revoke a user and re-encrypt under a fresh key for those who remain.
    /// Returns `None` when the user held no access, in which case nothing
    /// changes.
    pub fn revoke_and_reencrypt(
        &mut self,
        owner_id: &str,
        file_id: &str,
        user: &str,
    ) -> Result<Option<StoreReceipt>, ProtocolError> {
        let before = self.server.db.policy(file_id)?.epoch;
        let after = self.server.db.revoke_user(owner_id, file_id, user)?.epoch;
        if after == before {
            return Ok(None);
        }
        self.backup_acl();
        self.rekey(owner_id, file_id).map(Some)
    }

    /// Grant a user access; the file is re-keyed so the new user receives
    /// a point on a fresh polynomial.
    pub fn grant(&mut self, owner_id: &str, file_id: &str, user: &str) -> Result<Option<StoreReceipt>, ProtocolError> {
        let before = self.server.db.policy(file_id)?.epoch;
        let after = self.server.db.grant_user(owner_id, file_id, user)?.epoch;
        if after == before {
            return Ok(None);
        }
        self.backup_acl();
        self.rekey(owner_id, file_id).map(Some)
    }

    /// Re-encrypt the file under a fresh key for the current authorized set.
    /// The owner hands the old key to the server. On failure the old blob,
    /// points and envelopes stay in place.
    pub fn rekey(&mut self, owner_id: &str, file_id: &str) -> Result<StoreReceipt, ProtocolError> {
        let policy = self.server.db.policy(file_id)?.clone();
        if policy.owner_id != owner_id {
            return Err(AclError::NotPolicyOwner {
                caller: owner_id.to_string(),
                file_id: file_id.to_string(),
            }
            .into());
        }
        let epoch = policy.epoch;
        self.send(
            ORG_ID,
            owner_id,
            MessageKind::ReencryptNotice,
            json!({"file_id": file_id, "epoch": epoch}),
        );
        let owner = self.party(owner_id)?;
        if !owner.approves {
            self.send(
                owner_id,
                ORG_ID,
                MessageKind::OwnerApproval,
                json!({"file_id": file_id, "approved": false}),
            );
            return Err(ProtocolError::ApprovalWithheld(owner_id.to_string()));
        }
        let copy = owner
            .owned
            .get(file_id)
            .ok_or_else(|| ProtocolError::UnknownFile(file_id.to_string()))?;
        let (r_n, pk) = rsacrt::unwrap_crt(copy, &owner.keys)?;
        let for_server = rsacrt::wrap(r_n, &pk, &self.server.keys.public())?;
        self.send(
            owner_id,
            ORG_ID,
            MessageKind::OwnerApproval,
            json!({"file_id": file_id, "approved": true, "rekey": true}),
        );
        let (r_n, pk) = rsacrt::unwrap_crt(&for_server, &self.server.keys)?;
        let old_key = SymmetricKey::new(pk, r_n)?;
        let data = self.open_blob(ORG_ID, file_id, old_key)?;
        let sharers: Vec<String> = policy.authorized_user_ids.iter().cloned().collect();
        let prep = self.prepare(owner_id, file_id, &data, &sharers, epoch)?;
        for user in &policy.revoked_user_ids {
            self.send(
                ORG_ID,
                user,
                MessageKind::ReencryptNotice,
                json!({"file_id": file_id, "epoch": epoch, "revoked": true}),
            );
        }
        let receipt = self.commit(owner_id, prep);
        self.server.db.mark_reencrypted(file_id)?;
        self.backup_acl();
        Ok(receipt)
    }

    /// One policy refresh: every file's epoch advances and every authorized
    /// user whose held credentials no longer match the registry is revoked.
    pub fn tick(&mut self) -> Result<TickReport, ProtocolError> {
        let mut report = TickReport {
            epochs: Vec::new(),
            stale: Vec::new(),
        };
        let files: Vec<String> = self.server.files.keys().cloned().collect();
        for file_id in files {
            let epoch = self.server.db.advance_epoch(&file_id)?;
            report.epochs.push((file_id.clone(), epoch));
            let policy = self.server.db.policy(&file_id)?.clone();
            for user in &policy.authorized_user_ids {
                let held = &self.party(user)?.credentials;
                if self.server.db.check_access(user, &file_id, held)? != Decision::Grant {
                    report.stale.push((file_id.clone(), user.clone()));
                }
            }
        }
        self.backup_acl();
        let stale = report.stale.clone();
        for (file_id, user) in stale {
            let owner = self.server.db.policy(&file_id)?.owner_id.clone();
            self.revoke_and_reencrypt(&owner, &file_id, &user)?;
        }
        Ok(report)
    }

    pub fn point_of(&self, holder: &str, file_id: &str) -> Option<SharePoint> {
        if holder == ORG_ID {
            return self.server.files.get(file_id).map(|f| f.org.point());
        }
        self.parties.get(holder)?.points.get(file_id).map(PointFile::point)
    }

    pub fn point_file(&self, holder: &str, file_id: &str) -> Option<&PointFile> {
        self.parties.get(holder)?.points.get(file_id)
    }

    pub fn has_blob(&self, file_id: &str) -> bool {
        self.cloud.blobs.contains_key(file_id)
    }

    pub fn blob(&self, file_id: &str) -> Option<&[u8]> {
        self.cloud.blobs.get(file_id).map(Vec::as_slice)
    }

    pub fn files(&self) -> impl Iterator<Item = &String> {
        self.server.files.keys()
    }

    /// T1: one party's point copied `copies` times.
    pub fn attack_duplicate_point(&self, file_id: &str, holder: &str, copies: usize) -> ScenarioOutcome {
        let name = format!("T1 {copies} copies of the {holder} point");
        let Some(pt) = self.point_of(holder, file_id) else {
            return ScenarioOutcome {
                name,
                denied: true,
                detail: "no such point".into(),
            };
        };
        let points = vec![pt; copies];
        match reconstruct_secret(&points, self.config.prime) {
            Ok(_) => ScenarioOutcome {
                name,
                denied: false,
                detail: "reconstructed".into(),
            },
            Err(e) => ScenarioOutcome {
                name,
                denied: true,
                detail: e.to_string(),
            },
        }
    }

    /// T2: two receivers pool their points without the owner. Besides the
    /// failed reconstruction, the same pooling is replayed on a fresh
    /// policy over `Z_small_p` where every candidate secret can be counted.
    pub fn attack_collusion(&mut self, file_id: &str, a: &str, b: &str, small_p: u64) -> ScenarioOutcome {
        let name = format!("T2 {a} and {b} collude");
        let pooled: Vec<SharePoint> = [a, b].iter().filter_map(|h| self.point_of(h, file_id)).collect();
        let detail = match reconstruct_secret(&pooled, self.config.prime) {
            Ok(_) => {
                return ScenarioOutcome {
                    name,
                    denied: false,
                    detail: "reconstructed".into(),
                }
            }
            Err(e) => e.to_string(),
        };
        let a0 = self.rng.gen_range(0..small_p);
        let a1 = self.rng.gen_range(0..small_p);
        let a2 = self.rng.gen_range(1..small_p);
        let uniform = match ParabolicPolicy::new(a0, a1, a2, small_p).and_then(|pol| generate_points(&pol, 4)) {
            Ok(pts) => {
                let counts = consistent_secret_counts(pts[2], pts[3], small_p);
                counts.iter().all(|&c| c == 1)
            }
            Err(_) => false,
        };
        ScenarioOutcome {
            name,
            denied: uniform,
            detail: format!("{detail}; posterior over {small_p} secrets uniform: {uniform}"),
        }
    }

    /// T3: a stolen receiver point presented by another identity.
    pub fn attack_stolen_point(
        &mut self,
        file_id: &str,
        victim: &str,
        thief: &str,
        credentials: &[&str],
    ) -> ScenarioOutcome {
        let name = format!("T3 {thief} presents the point of {victim}");
        let point = self.point_of(victim, file_id);
        let creds: Vec<String> = credentials.iter().map(|s| s.to_string()).collect();
        let mark = self.trace.len();
        let result = self.authorize(thief, &creds, point, file_id);
        let approval_sent = self.trace[mark..]
            .iter()
            .any(|m| m.kind == MessageKind::OwnerApproval);
        match result {
            Ok(_) => ScenarioOutcome {
                name,
                denied: false,
                detail: "envelope released".into(),
            },
            Err(e) => ScenarioOutcome {
                name,
                denied: !approval_sent,
                detail: format!("{e}; owner point attached: {approval_sent}"),
            },
        }
    }

    /// Cloud state as bytes: envelopes and ACL backup as JSON, then every blob.
    pub fn cloud_snapshot(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(&self.cloud).expect("cloud serializes");
        for (id, blob) in &self.cloud.blobs {
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(blob);
        }
        out
    }

    pub fn server_snapshot(&self) -> Vec<u8> {
        let state = json!({
            "keys": self.server.keys,
            "files": self.server.files,
            "acl": self.server.db.export(),
        });
        serde_json::to_vec(&state).expect("server serializes")
    }

    pub fn party_snapshot(&self, id: &str) -> Option<Vec<u8>> {
        self.parties.get(id).map(|p| serde_json::to_vec(p).expect("party serializes"))
    }

    /// SHA-256 over the trace and every participant's state.
    pub fn state_digest(&self) -> String {
        let trace = self.trace_jsonl();
        let cloud = self.cloud_snapshot();
        let server = self.server_snapshot();
        let parties = serde_json::to_vec(&self.parties).expect("parties serialize");
        sha256_hex(&[trace.as_bytes(), &cloud, &server, &parties])
    }

    /// Every secret ever issued plus every private exponent and held point.
    fn all_needles(&self) -> Vec<(String, Vec<u8>)> {
        let mut n = self.ephemeral_needles();
        for &y in &self.observer.ys {
            needles_u64("point y", y, &mut n);
        }
        needles_big("server d", &self.server.keys.d, &mut n);
        for (id, party) in &self.parties {
            needles_big(&format!("{id} d"), &party.keys.d, &mut n);
            for pf in party.points.values() {
                needles_u64(&format!("{id} point y"), pf.y, &mut n);
            }
        }
        n
    }

    fn ephemeral_needles(&self) -> Vec<(String, Vec<u8>)> {
        let mut n = Vec::new();
        for key in &self.observer.keys {
            needles_big("pk_sk", key.pk_sk(), &mut n);
        }
        for &s in &self.observer.secrets {
            needles_u64("policy secret", s, &mut n);
        }
        n
    }

    /// Search the cloud state for any key, secret, private exponent or point.
    pub fn scan_cloud(&self) -> Vec<Leak> {
        let mut leaks = scan(CLOUD_ID, &self.cloud_snapshot(), &self.all_needles());
        for (id, blob) in &self.cloud.blobs {
            if EncryptedBlob::from_bytes(blob).map(|b| b.r_n != 0).unwrap_or(true) {
                leaks.push(Leak {
                    holder: CLOUD_ID.into(),
                    what: format!("r_n in blob {id}"),
                });
            }
        }
        let json = serde_json::to_string(&self.cloud).expect("cloud serializes");
        if json.contains("\"r_n\"") {
            leaks.push(Leak {
                holder: CLOUD_ID.into(),
                what: "r_n field".into(),
            });
        }
        leaks
    }

    /// Search the server state for file keys and policy secrets.
    pub fn scan_server(&self) -> Vec<Leak> {
        scan(ORG_ID, &self.server_snapshot(), &self.ephemeral_needles())
    }

    /// Credentials plus the point held for the file: `m + 1` entries.
    pub fn user_audit(&self, user: &str, file_id: &str) -> Result<AuditRecord, ProtocolError> {
        let party = self.party(user)?;
        let pf = party.points.get(file_id).ok_or_else(|| ProtocolError::NoPoint {
            user: user.to_string(),
            file_id: file_id.to_string(),
        })?;
        let mut parameters = party.credentials.clone();
        parameters.push(format!("({},{})", pf.x, pf.y));
        Ok(AuditRecord {
            holder: user.to_string(),
            file_id: file_id.to_string(),
            parameters,
        })
    }

    /// The organisation point plus its binding code: `K_c + 1` entries.
    pub fn server_audit(&self, file_id: &str) -> Result<AuditRecord, ProtocolError> {
        let file = self
            .server
            .files
            .get(file_id)
            .ok_or_else(|| ProtocolError::UnknownFile(file_id.to_string()))?;
        let BindingCode(kc) = file.org.kc;
        Ok(AuditRecord {
            holder: ORG_ID.to_string(),
            file_id: file_id.to_string(),
            parameters: vec![format!("({},{})", file.org.x, file.org.y), kc.to_string()],
        })
    }
}
