use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use pvlt::digest::fnv1a64;
use pvlt::fbsc::{keystream, Cipher, EncryptedBlob, SymmetricKey};
use pvlt::pgm::GrayImage;
use pvlt::prng::{pad_message, PaddedMessage};
use pvlt::protocol::{parse_script, run_script_with, Command as Step, Simulator};
use pvlt::rsacrt::RsaKeyPair;
use pvlt::statsuite::correlation::{correlation_bytes, correlation_csv, DEFAULT_PAIRS};
use pvlt::statsuite::{bytes_to_bits, histogram_uniformity, nist_battery, Direction, NistParams, TemplateChoice};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::bench::{bench_attributes, linear_fit, rows_csv};
use crate::config::{CliConfig, Overrides};

const KEY_SALT: u64 = 0x6b65_7967_656e;
const PAD_SALT: u64 = 0x7061_6464_696e;
const SESSION: &str = "session.script";

#[derive(Debug, Parser)]
#[command(name = "pvlt", version, about = "Multiparty authorization for encrypted storage")]
pub struct Cli {
    /// TOML file with seed, prime, rsa_bits, precision, out and a [prng] table.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Field prime for the sharing polynomial.
    #[arg(long, global = true, value_name = "P")]
    pub prime: Option<u64>,
    #[arg(long = "rsa-bits", global = true, value_name = "N")]
    pub rsa_bits: Option<u64>,
    /// Fractional digits F of cipher elements.
    #[arg(long, global = true, value_name = "F")]
    pub precision: Option<u32>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate an RSA key pair and a symmetric key.
    Keygen {
        #[arg(long, default_value = "pvlt")]
        name: String,
    },
    /// Pad and encrypt a file into a blob.
    Encrypt {
        file: PathBuf,
        /// Symmetric key JSON; generated from the seed when absent.
        #[arg(long)]
        key: Option<PathBuf>,
    },
    /// Decrypt a blob.
    Decrypt {
        blob: PathBuf,
        /// Defaults to the `.key.json` written next to the blob.
        #[arg(long)]
        key: Option<PathBuf>,
    },
    /// Store a file for an owner and its sharers in the session.
    Share {
        file: PathBuf,
        #[arg(long)]
        owner: String,
        #[arg(long, value_delimiter = ',', required = true)]
        users: Vec<String>,
        /// Owner attributes, at least two; defaults to `owner:ID,org:default`.
        #[arg(long, value_delimiter = ',')]
        attrs: Vec<String>,
    },
    /// Request access to a shared file.
    Access {
        file: String,
        #[arg(long)]
        user: String,
    },
    /// Revoke a user and re-encrypt the file.
    Revoke {
        file: String,
        #[arg(long)]
        user: String,
    },
    /// Replay a scenario script.
    Simulate { script: PathBuf },
    /// Statistics on raw files, PGM images or blobs.
    Analyze {
        #[command(subcommand)]
        kind: Analyze,
    },
    /// Time store and access against owner attribute counts.
    Bench {
        #[arg(long, value_delimiter = ',', required = true)]
        attrs: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 4096)]
        bytes: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum Analyze {
    /// The sixteen-test randomness battery.
    Nist {
        input: PathBuf,
        #[arg(long)]
        key: Option<PathBuf>,
        /// Input is text of '0' and '1' characters.
        #[arg(long)]
        ascii: bool,
        /// Run every aperiodic 9-bit template instead of one.
        #[arg(long)]
        all_templates: bool,
        /// Only the first N bits.
        #[arg(long)]
        bits: Option<usize>,
    },
    /// Adjacent-pixel correlation of an image and its encryption.
    Corr {
        image: PathBuf,
        #[arg(long)]
        encrypted: Option<PathBuf>,
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PAIRS)]
        pairs: usize,
    },
    /// Byte histogram and chi-square uniformity.
    Hist {
        input: PathBuf,
        #[arg(long)]
        key: Option<PathBuf>,
    },
}

/// Parse `argv`, run, and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let cfg = CliConfig::resolve(
        cli.config.as_deref(),
        Overrides {
            seed: cli.seed,
            prime: cli.prime,
            rsa_bits: cli.rsa_bits,
            precision: cli.precision,
            out: cli.out,
        },
    )?;
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("io: creating {}", cfg.out.display()))?;
    match cli.command {
        Cmd::Keygen { name } => keygen(&cfg, &name),
        Cmd::Encrypt { file, key } => encrypt(&cfg, &file, key.as_deref()),
        Cmd::Decrypt { blob, key } => decrypt(&cfg, &blob, key.as_deref()),
        Cmd::Share {
            file,
            owner,
            users,
            attrs,
        } => share(&cfg, &file, &owner, &users, &attrs),
        Cmd::Access { file, user } => access(&cfg, &file, &user),
        Cmd::Revoke { file, user } => revoke(&cfg, &file, &user),
        Cmd::Simulate { script } => simulate(&cfg, &script),
        Cmd::Analyze { kind } => analyze(&cfg, kind),
        Cmd::Bench { attrs, reps, bytes } => bench(&cfg, &attrs, reps, bytes),
    }
}

fn file_name(path: &Path) -> Result<String> {
    path.file_name()
        .and_then(|n| n.to_str())
        .map(str::to_string)
        .ok_or_else(|| anyhow!("io: {} has no usable file name", path.display()))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("io: reading {}", path.display()))
}

/// Write an output file, refusing to clobber one of the inputs.
fn write(path: &Path, bytes: &[u8], inputs: &[&Path]) -> Result<()> {
    let target = path.canonicalize().ok();
    for input in inputs {
        if target.is_some() && input.canonicalize().ok() == target {
            bail!("io: refusing to overwrite input {}", input.display());
        }
    }
    std::fs::write(path, bytes).with_context(|| format!("io: writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn generate_key(cfg: &CliConfig, salt: u64) -> Result<SymmetricKey> {
    let mut gen = cfg.seeded_prng(KEY_SALT ^ salt).generator().context("prng")?;
    SymmetricKey::generate(&mut gen).context("fbsc")
}

fn load_key(path: &Path) -> Result<SymmetricKey> {
    let text = std::fs::read_to_string(path).with_context(|| format!("io: reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("fbsc: key file {}", path.display()))
}

fn key_json(key: &SymmetricKey) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(key).expect("key serializes");
    s.push('\n');
    s.into_bytes()
}

fn keygen(cfg: &CliConfig, name: &str) -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let pair = RsaKeyPair::generate(cfg.rsa_bits, &mut rng).context("rsacrt")?;
    let rsa = serde_json::to_string_pretty(&pair).expect("key pair serializes") + "\n";
    write(&cfg.out.join(format!("{name}.rsa.json")), rsa.as_bytes(), &[])?;
    let public = serde_json::to_string_pretty(&pair.public()).expect("public key serializes") + "\n";
    write(&cfg.out.join(format!("{name}.pub.json")), public.as_bytes(), &[])?;
    let key = generate_key(cfg, fnv1a64(name.as_bytes()))?;
    write(&cfg.out.join(format!("{name}.key.json")), &key_json(&key), &[])
}

fn encrypt_bytes(cfg: &CliConfig, data: &[u8], key: &SymmetricKey, salt: u64) -> Result<EncryptedBlob> {
    let padded = pad_message(data, 0, &cfg.seeded_prng(PAD_SALT ^ salt)).context("prng")?;
    let ks = keystream(&cfg.prng, key, 0, padded.as_bytes().len()).context("fbsc")?;
    let cipher = Cipher::new(key.clone(), cfg.precision).context("fbsc")?;
    Ok(EncryptedBlob {
        r_n: 0,
        precision: cfg.precision as u16,
        fingerprint: key.fingerprint(),
        n1_len: padded.n1_len() as u8,
        n2_len: padded.n2_len() as u8,
        epoch: 0,
        elements: cipher.encrypt_stream(padded.as_bytes(), &ks).context("fbsc")?,
    })
}

fn open_blob(cfg: &CliConfig, blob: &EncryptedBlob, key: &SymmetricKey) -> Result<Vec<u8>> {
    if blob.fingerprint != key.fingerprint() {
        bail!("fbsc: key fingerprint does not match the blob");
    }
    let epoch = u64::from(blob.epoch);
    let ks = keystream(&cfg.prng, key, epoch, blob.elements.len()).context("fbsc")?;
    let cipher = Cipher::new(key.clone(), u32::from(blob.precision)).context("fbsc")?;
    let plain = cipher.decrypt_stream(&blob.elements, &ks).context("fbsc")?;
    let padded = PaddedMessage::from_parts(plain, usize::from(blob.n1_len), usize::from(blob.n2_len), epoch)
        .context("prng")?;
    Ok(padded.unpad())
}

fn sibling_key(blob: &Path) -> PathBuf {
    let name = blob.file_name().and_then(|n| n.to_str()).unwrap_or("blob");
    let stem = name.strip_suffix(".blob").unwrap_or(name);
    blob.with_file_name(format!("{stem}.key.json"))
}

fn encrypt(cfg: &CliConfig, file: &Path, key_path: Option<&Path>) -> Result<()> {
    let data = read(file)?;
    let name = file_name(file)?;
    let salt = fnv1a64(name.as_bytes());
    let key = match key_path {
        Some(p) => load_key(p)?,
        None => generate_key(cfg, salt)?,
    };
    let blob = encrypt_bytes(cfg, &data, &key, salt)?;
    write(&cfg.out.join(format!("{name}.blob")), &blob.to_bytes(), &[file])?;
    if key_path.is_none() {
        write(&cfg.out.join(format!("{name}.key.json")), &key_json(&key), &[file])?;
    }
    Ok(())
}

fn decrypt(cfg: &CliConfig, blob_path: &Path, key_path: Option<&Path>) -> Result<()> {
    let key_path = key_path.map(Path::to_path_buf).unwrap_or_else(|| sibling_key(blob_path));
    let key = load_key(&key_path)?;
    let blob = EncryptedBlob::from_bytes(&read(blob_path)?).context("fbsc")?;
    let plain = open_blob(cfg, &blob, &key)?;
    let name = file_name(blob_path)?;
    let stem = name.strip_suffix(".blob").unwrap_or(&name);
    write(&cfg.out.join(format!("{stem}.dec")), &plain, &[blob_path, &key_path])
}

fn session_path(cfg: &CliConfig) -> PathBuf {
    cfg.out.join(SESSION)
}

fn load_session(cfg: &CliConfig) -> Result<String> {
    let path = session_path(cfg);
    if path.exists() {
        std::fs::read_to_string(&path).with_context(|| format!("io: reading {}", path.display()))
    } else {
        Ok(String::new())
    }
}

/// Replay the session plus `extra`, failing unless every step had its
/// expected outcome. Returns the plaintexts of successful accesses.
fn replay(cfg: &CliConfig, session: &str, extra: &str) -> Result<BTreeMap<usize, Vec<u8>>> {
    let text = format!("{session}{extra}");
    let steps = parse_script(&text).map_err(|e| anyhow!("protocol: session script {e}"))?;
    let mut sim = Simulator::new(cfg.sim_config()).context("protocol")?;
    let mut plain = BTreeMap::new();
    let report = run_script_with(&mut sim, &steps, |step, bytes| {
        plain.insert(step.line, bytes.to_vec());
    });
    if let Some(bad) = report.steps.iter().find(|s| !s.matched) {
        bail!("protocol: {} ({})", bad.detail, bad.text);
    }
    Ok(plain)
}

fn registered(session: &str) -> Result<Vec<String>> {
    let steps = parse_script(session).map_err(|e| anyhow!("protocol: session script {e}"))?;
    Ok(steps
        .into_iter()
        .filter_map(|s| match s.command {
            Step::Register { id, .. } => Some(id),
            _ => None,
        })
        .collect())
}

fn check_token(what: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.contains(char::is_whitespace) || s.contains('#') || s.contains("=>") {
        bail!("protocol: {what} {s:?} must be a single token without '#' or '=>'");
    }
    Ok(())
}

fn share(cfg: &CliConfig, file: &Path, owner: &str, users: &[String], attrs: &[String]) -> Result<()> {
    let session = load_session(cfg)?;
    let known = registered(&session)?;
    let path = file
        .canonicalize()
        .with_context(|| format!("io: reading {}", file.display()))?;
    let path_str = path.to_str().ok_or_else(|| anyhow!("io: path is not UTF-8"))?;
    check_token("path", path_str)?;
    let file_id = file_name(file)?;
    check_token("file name", &file_id)?;
    let attrs: Vec<String> = if attrs.is_empty() {
        vec![format!("owner:{owner}"), "org:default".into()]
    } else {
        attrs.to_vec()
    };
    let mut extra = String::new();
    if !known.iter().any(|k| k == owner) {
        check_token("owner", owner)?;
        attrs.iter().try_for_each(|a| check_token("attribute", a))?;
        writeln!(extra, "register owner {owner} {}", attrs.join(" ")).unwrap();
    }
    for u in users {
        if !known.iter().any(|k| k == u) {
            check_token("user", u)?;
            writeln!(extra, "register user {u} user:{u}").unwrap();
        }
    }
    writeln!(extra, "store {owner} {file_id} file:{path_str} {}", users.join(" ")).unwrap();
    replay(cfg, &session, &extra)?;
    let mut updated = session;
    updated.push_str(&extra);
    write(&session_path(cfg), updated.as_bytes(), &[file])?;
    println!("stored {file_id} for {owner} with {}", users.join(", "));
    Ok(())
}

fn access(cfg: &CliConfig, file_id: &str, user: &str) -> Result<()> {
    check_token("file", file_id)?;
    check_token("user", user)?;
    let session = load_session(cfg)?;
    let extra = format!("access {user} {file_id}\n");
    let line = session.lines().count() + 1;
    let plain = replay(cfg, &session, &extra)?;
    let bytes = plain.get(&line).ok_or_else(|| anyhow!("protocol: access produced no plaintext"))?;
    write(&cfg.out.join(format!("{file_id}.{user}")), bytes, &[])
}

fn owner_of(session: &str, file_id: &str) -> Result<String> {
    let steps = parse_script(session).map_err(|e| anyhow!("protocol: session script {e}"))?;
    steps
        .into_iter()
        .find_map(|s| match s.command {
            Step::Store { owner, file, .. } if file == file_id => Some(owner),
            _ => None,
        })
        .ok_or_else(|| anyhow!("protocol: no stored file {file_id:?} in the session"))
}

fn revoke(cfg: &CliConfig, file_id: &str, user: &str) -> Result<()> {
    check_token("file", file_id)?;
    check_token("user", user)?;
    let session = load_session(cfg)?;
    let owner = owner_of(&session, file_id)?;
    let extra = format!("revoke {owner} {file_id} {user}\n");
    replay(cfg, &session, &extra)?;
    let mut updated = session;
    updated.push_str(&extra);
    write(&session_path(cfg), updated.as_bytes(), &[])?;
    println!("revoked {user} from {file_id}; remaining holders re-keyed");
    Ok(())
}

fn simulate(cfg: &CliConfig, script: &Path) -> Result<()> {
    let text = std::fs::read_to_string(script).with_context(|| format!("io: reading {}", script.display()))?;
    let steps = parse_script(&text).map_err(|e| anyhow!("protocol: {} {e}", script.display()))?;
    let mut sim = Simulator::new(cfg.sim_config()).context("protocol")?;
    let report = run_script_with(&mut sim, &steps, |_, _| {});
    for s in &report.steps {
        let mark = if s.matched { "ok" } else { "MISMATCH" };
        println!("{:>4} {:<8} {:<5} {} | {}", s.line, mark, s.outcome, s.text, s.detail);
    }
    println!("digest {}", report.digest);
    write(&cfg.out.join("trace.jsonl"), sim.trace_jsonl().as_bytes(), &[script])?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write(&cfg.out.join("report.json"), json.as_bytes(), &[script])?;
    let failed = report.steps.iter().filter(|s| !s.matched).count();
    if failed > 0 {
        bail!("protocol: {failed} step(s) did not have the expected outcome");
    }
    Ok(())
}

/// Bytes for statistics: a blob is quantized under its key, a PGM yields its
/// pixels, anything else is taken as is.
fn stat_bytes(input: &Path, key: Option<&Path>) -> Result<Vec<u8>> {
    let bytes = read(input)?;
    if bytes.starts_with(b"PVLT") {
        let key_path = key.map(Path::to_path_buf).unwrap_or_else(|| sibling_key(input));
        let blob = EncryptedBlob::from_bytes(&bytes).context("fbsc")?;
        let key = load_key(&key_path)?;
        let cipher = Cipher::new(key, u32::from(blob.precision)).context("fbsc")?;
        return cipher.quantize(&blob.elements).context("fbsc");
    }
    if bytes.starts_with(b"P5") {
        return Ok(GrayImage::parse(&bytes).context("pgm")?.pixels);
    }
    Ok(bytes)
}

fn analyze(cfg: &CliConfig, kind: Analyze) -> Result<()> {
    match kind {
        Analyze::Nist {
            input,
            key,
            ascii,
            all_templates,
            bits,
        } => {
            let mut seq = if ascii {
                read(&input)?
                    .into_iter()
                    .filter(|c| *c == b'0' || *c == b'1')
                    .map(|c| c - b'0')
                    .collect()
            } else {
                bytes_to_bits(&stat_bytes(&input, key.as_deref())?)
            };
            if let Some(n) = bits {
                seq.truncate(n);
            }
            let mut params = NistParams::default();
            if all_templates {
                params.templates = TemplateChoice::AllAperiodic;
            }
            let results = nist_battery(&seq, &params).context("statsuite")?;
            println!("{} bits, alpha = {}", seq.len(), params.alpha);
            for r in &results {
                let verdict = match r.pass {
                    Some(true) => "pass".to_string(),
                    Some(false) => "FAIL".to_string(),
                    None => format!("skipped ({})", r.skipped.as_deref().unwrap_or("")),
                };
                let p = r.min_p().map(|p| format!("{p:.6}")).unwrap_or_else(|| "-".into());
                println!("{:<28} p = {:<10} {:<8} [{}]", r.name, p, verdict, r.params);
            }
            let json = serde_json::to_string_pretty(&results).expect("results serialize") + "\n";
            write(&cfg.out.join(format!("{}.nist.json", file_name(&input)?)), json.as_bytes(), &[&input])
        }
        Analyze::Corr {
            image,
            encrypted,
            key,
            pairs,
        } => {
            let img = GrayImage::read(&image).context("pgm")?;
            let enc = match &encrypted {
                Some(blob_path) => {
                    let blob = EncryptedBlob::from_bytes(&read(blob_path)?).context("fbsc")?;
                    let key_path = key.clone().unwrap_or_else(|| sibling_key(blob_path));
                    let cipher = Cipher::new(load_key(&key_path)?, u32::from(blob.precision)).context("fbsc")?;
                    let q = cipher.quantize(&blob.elements).context("fbsc")?;
                    body_of(&q, &blob)
                }
                None => {
                    let salt = fnv1a64(file_name(&image)?.as_bytes());
                    let key = generate_key(cfg, salt)?;
                    let blob = encrypt_bytes(cfg, &img.pixels, &key, salt)?;
                    let cipher = Cipher::new(key, cfg.precision).context("fbsc")?;
                    body_of(&cipher.quantize(&blob.elements).context("fbsc")?, &blob)
                }
            };
            // A blob of the whole PGM file carries the header first.
            let enc = if enc.len() > img.pixels.len() {
                enc[enc.len() - img.pixels.len()..].to_vec()
            } else {
                enc
            };
            if enc.len() != img.pixels.len() {
                bail!("statsuite: encrypted body has {} bytes, image has {}", enc.len(), img.pixels.len());
            }
            let name = file_name(&image)?;
            let mut rows = Vec::new();
            for (i, dir) in Direction::ALL.into_iter().enumerate() {
                let seed = cfg.seed.wrapping_add(i as u64);
                let o = correlation_bytes(&img.pixels, img.width, img.height, dir, pairs, seed).context("statsuite")?;
                let e = correlation_bytes(&enc, img.width, img.height, dir, pairs, seed).context("statsuite")?;
                rows.push((name.clone(), dir, o.coefficient, e.coefficient));
            }
            let csv = correlation_csv(&rows);
            print!("{csv}");
            write(&cfg.out.join(format!("{name}.corr.csv")), csv.as_bytes(), &[&image])
        }
        Analyze::Hist { input, key } => {
            let data = stat_bytes(&input, key.as_deref())?;
            let r = histogram_uniformity(&data).context("statsuite")?;
            println!("{} bytes, chi-square = {:.3}, p = {:.6}", data.len(), r.chi_square, r.p_value);
            write(&cfg.out.join(format!("{}.hist.csv", file_name(&input)?)), r.to_csv().as_bytes(), &[&input])
        }
    }
}

/// Quantized elements without the padding prefix and suffix.
fn body_of(q: &[u8], blob: &EncryptedBlob) -> Vec<u8> {
    let (n1, n2) = (usize::from(blob.n1_len), usize::from(blob.n2_len));
    q[n1.min(q.len())..q.len().saturating_sub(n2)].to_vec()
}

fn bench(cfg: &CliConfig, counts: &[usize], reps: usize, bytes: usize) -> Result<()> {
    let rows = bench_attributes(&cfg.sim_config(), counts, reps, bytes).context("bench")?;
    let csv = rows_csv(&rows);
    print!("{csv}");
    if rows.len() >= 2 {
        let xs: Vec<f64> = rows.iter().map(|r| r.count as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.encrypt_ms).collect();
        let fit = linear_fit(&xs, &ys);
        eprintln!(
            "encrypt_ms ~ {:.5} * count + {:.4}, R^2 = {:.4}",
            fit.slope, fit.intercept, fit.r_squared
        );
    }
    write(&cfg.out.join("bench.csv"), csv.as_bytes(), &[])
}

