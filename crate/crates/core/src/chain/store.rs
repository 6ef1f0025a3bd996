//! On-disk wallet state: a canonical JSON snapshot at `<path>`, an
//! append-only JSON-lines log at `<path>.log`, and an exclusive writer lock
//! at `<path>.lock`.
//!
//! The log is the source of truth. Replaying it from an empty state must
//! reproduce the snapshot byte for byte.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::amount::decimal;
use super::{ChainError, Handler, Receipt, WalletState};
use crate::crypto::{from_hex, sha256, to_hex, RsaPublicKey};
use crate::proof::{EmailProof, ProofError};
use crate::vrm::VerifierArtifact;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("state {0} is locked by another writer (remove the lock file if it is stale)")]
    Locked(PathBuf),
    #[error("state {0} already exists")]
    AlreadyExists(PathBuf),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("{path}: {source}")]
    Proof { path: PathBuf, source: ProofError },
    #[error("corrupt log line {line}: {detail}")]
    CorruptLog { line: usize, detail: String },
    #[error("replay diverges at log line {line}: {detail}")]
    ReplayDivergence { line: usize, detail: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
#[allow(clippy::large_enum_variant)]
pub enum LogEntry {
    RegisterKey {
        domain: String,
        selector: String,
        key: RsaPublicKey,
    },
    RegisterRule {
        handler: Handler,
        /// Hex of the artifact's binary export.
        artifact: String,
    },
    InitPool {
        currency_a: String,
        #[serde(with = "decimal")]
        amount_a: BigUint,
        currency_b: String,
        #[serde(with = "decimal")]
        amount_b: BigUint,
    },
    Deposit {
        email: String,
        currency: String,
        #[serde(with = "decimal")]
        amount: BigUint,
    },
    Submit {
        /// Proof file, relative to the log's directory when it lies inside it.
        proof: String,
        proof_sha256: String,
        receipt: Receipt,
    },
}

/// Exclusive writer lock, released on drop.
#[derive(Debug)]
pub struct StateLock {
    path: PathBuf,
}

impl StateLock {
    pub fn acquire(state_path: &Path) -> Result<Self, StoreError> {
        let path = Store::lock_path(state_path);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(StoreError::Locked(state_path.to_path_buf())),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for StateLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub struct Store {
    state_path: PathBuf,
    state: WalletState,
    _lock: Option<StateLock>,
}

impl Store {
    pub fn log_path(state_path: &Path) -> PathBuf {
        suffixed(state_path, ".log")
    }

    pub fn lock_path(state_path: &Path) -> PathBuf {
        suffixed(state_path, ".lock")
    }

    /// Creates an empty state and log. Fails if the state file exists.
    pub fn init(state_path: &Path) -> Result<Self, StoreError> {
        let lock = StateLock::acquire(state_path)?;
        if state_path.exists() {
            return Err(StoreError::AlreadyExists(state_path.to_path_buf()));
        }
        let store = Self {
            state_path: state_path.to_path_buf(),
            state: WalletState::new(),
            _lock: Some(lock),
        };
        let log = Self::log_path(state_path);
        File::create(&log).map_err(io_err(&log))?;
        store.save()?;
        Ok(store)
    }

    /// Opens for reading only; mutating methods are still callable but
    /// the caller then bypasses the writer lock.
    pub fn open(state_path: &Path) -> Result<Self, StoreError> {
        let text = fs::read_to_string(state_path).map_err(io_err(state_path))?;
        Ok(Self {
            state_path: state_path.to_path_buf(),
            state: WalletState::from_snapshot(&text)?,
            _lock: None,
        })
    }

    /// Opens holding the writer lock until the store is dropped.
    pub fn open_for_write(state_path: &Path) -> Result<Self, StoreError> {
        let lock = StateLock::acquire(state_path)?;
        let mut store = Self::open(state_path)?;
        store._lock = Some(lock);
        Ok(store)
    }

    pub fn state(&self) -> &WalletState {
        &self.state
    }

    pub fn state_path(&self) -> &Path {
        &self.state_path
    }

    pub fn register_key(&mut self, domain: &str, selector: &str, key: RsaPublicKey) -> Result<(), StoreError> {
        self.state.register_sds_key(domain, selector, key.clone())?;
        self.record(&LogEntry::RegisterKey {
            domain: domain.to_string(),
            selector: selector.to_string(),
            key,
        })
    }

    pub fn register_rule(&mut self, artifact: VerifierArtifact, handler: Handler) -> Result<(), StoreError> {
        let hex = to_hex(&artifact.export());
        self.state.register_rule(artifact, handler)?;
        self.record(&LogEntry::RegisterRule { handler, artifact: hex })
    }

    pub fn init_pool(&mut self, currency_a: &str, amount_a: &BigUint, currency_b: &str, amount_b: &BigUint) -> Result<(), StoreError> {
        self.state.init_pool(currency_a, amount_a, currency_b, amount_b)?;
        self.record(&LogEntry::InitPool {
            currency_a: currency_a.to_string(),
            amount_a: amount_a.clone(),
            currency_b: currency_b.to_string(),
            amount_b: amount_b.clone(),
        })
    }

    pub fn deposit(&mut self, email: &str, currency: &str, amount: &BigUint) -> Result<(), StoreError> {
        self.state.deposit(email, currency, amount)?;
        self.record(&LogEntry::Deposit {
            email: email.to_ascii_lowercase(),
            currency: currency.to_string(),
            amount: amount.clone(),
        })
    }

    /// Reads a proof file and submits it. Both accepted and rejected
    /// submissions are logged with their receipts.
    pub fn submit_file(&mut self, proof_path: &Path) -> Result<Receipt, StoreError> {
        let bytes = fs::read(proof_path).map_err(io_err(proof_path))?;
        let proof = EmailProof::from_bytes(&bytes).map_err(|source| StoreError::Proof {
            path: proof_path.to_path_buf(),
            source,
        })?;
        let outcome = self.state.submit(&proof);
        let receipt = Receipt::for_submission(&proof, &outcome);
        self.record(&LogEntry::Submit {
            proof: self.relative_to_log(proof_path),
            proof_sha256: to_hex(&sha256(&bytes)),
            receipt: receipt.clone(),
        })?;
        Ok(receipt)
    }

    fn relative_to_log(&self, path: &Path) -> String {
        let abs = fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
        let base = log_dir(&self.state_path);
        let base = fs::canonicalize(&base).unwrap_or(base);
        abs.strip_prefix(&base).unwrap_or(&abs).to_string_lossy().into_owned()
    }

    fn record(&mut self, entry: &LogEntry) -> Result<(), StoreError> {
        let log = Self::log_path(&self.state_path);
        let mut line = serde_json::to_string(entry).expect("log entry serializes");
        line.push('\n');
        OpenOptions::new()
            .append(true)
            .create(true)
            .open(&log)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(io_err(&log))?;
        self.save()
    }

    fn save(&self) -> Result<(), StoreError> {
        let tmp = suffixed(&self.state_path, ".tmp");
        fs::write(&tmp, self.state.to_snapshot()).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &self.state_path).map_err(io_err(&self.state_path))
    }

    pub fn read_log(state_path: &Path) -> Result<Vec<LogEntry>, StoreError> {
        let log = Self::log_path(state_path);
        let text = fs::read_to_string(&log).map_err(io_err(&log))?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| StoreError::CorruptLog {
                    line: i + 1,
                    detail: e.to_string(),
                })
            })
            .collect()
    }

    /// Rebuilds the state from the log alone, checking every recorded
    /// receipt along the way, and compares the result with the snapshot on
    /// disk. Returns the rebuilt state.
    pub fn replay(state_path: &Path) -> Result<WalletState, StoreError> {
        let entries = Self::read_log(state_path)?;
        let base = log_dir(state_path);
        let mut state = WalletState::new();
        for (i, entry) in entries.into_iter().enumerate() {
            let line = i + 1;
            let diverge = |detail: String| StoreError::ReplayDivergence { line, detail };
            match entry {
                LogEntry::RegisterKey { domain, selector, key } => {
                    state.register_sds_key(&domain, &selector, key).map_err(|e| diverge(e.to_string()))?
                }
                LogEntry::RegisterRule { handler, artifact } => {
                    let artifact = from_hex(&artifact)
                        .ok_or_else(|| diverge("artifact is not hex".into()))
                        .and_then(|b| VerifierArtifact::import(&b).map_err(|e| diverge(e.to_string())))?;
                    state.register_rule(artifact, handler).map_err(|e| diverge(e.to_string()))?
                }
                LogEntry::InitPool {
                    currency_a,
                    amount_a,
                    currency_b,
                    amount_b,
                } => state
                    .init_pool(&currency_a, &amount_a, &currency_b, &amount_b)
                    .map_err(|e| diverge(e.to_string()))?,
                LogEntry::Deposit { email, currency, amount } => {
                    state.deposit(&email, &currency, &amount).map_err(|e| diverge(e.to_string()))?
                }
                LogEntry::Submit {
                    proof,
                    proof_sha256,
                    receipt,
                } => {
                    let path = base.join(&proof);
                    let bytes = fs::read(&path).map_err(|e| diverge(format!("{}: {e}", path.display())))?;
                    if to_hex(&sha256(&bytes)) != proof_sha256 {
                        return Err(diverge(format!("{} changed since it was submitted", path.display())));
                    }
                    let proof = EmailProof::from_bytes(&bytes).map_err(|e| diverge(e.to_string()))?;
                    let outcome = state.submit(&proof);
                    let replayed = Receipt::for_submission(&proof, &outcome);
                    if replayed != receipt {
                        return Err(diverge(format!(
                            "receipt differs: logged {:?}, replayed {:?}",
                            receipt.reason, replayed.reason
                        )));
                    }
                }
            }
        }
        let on_disk = fs::read_to_string(state_path).map_err(io_err(state_path))?;
        if state.to_snapshot() != on_disk {
            return Err(StoreError::ReplayDivergence {
                line: 0,
                detail: "replayed state differs from the snapshot on disk".into(),
            });
        }
        Ok(state)
    }
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn log_dir(state_path: &Path) -> PathBuf {
    match Store::log_path(state_path).parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
