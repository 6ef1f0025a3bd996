//! The relayer: turns signed emails into submitted transactions.
//!
//! The aggregator is untrusted. It only chooses which emails to relay and in
//! which order; everything it submits is re-verified by the wallet.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{Receipt, Store, StoreError, WalletState};
use crate::dkim::{DkimError, KeyLookup};
use crate::email::{parse_address, EmailError, EmailMessage};
use crate::proof::{prove, EmailProof, ProofError};
use crate::vrm::{VerifierArtifact, VrmError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregatorConfig {
    pub inbox: PathBuf,
    pub state: PathBuf,
    pub rules: Vec<PathBuf>,
    /// When set, only mail addressed to this address is relayed.
    pub address: Option<String>,
}

#[derive(Debug, Error)]
pub enum AggregatorError {
    #[error("inbox {0} is not a directory")]
    Inbox(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("rule artifact {path}: {source}")]
    Artifact { path: PathBuf, source: VrmError },
    #[error("two artifacts given for rule {0}")]
    DuplicateRule(u64),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub mod stage {
    pub const PARSE: &str = "parse";
    pub const RULE_ID: &str = "rule-id";
    pub const RULE_LOOKUP: &str = "rule-lookup";
    pub const MATCH: &str = "match";
    pub const PROVE: &str = "prove";
    pub const READ: &str = "read";
}

/// Artifacts the aggregator proves against, by rule id.
#[derive(Debug, Clone, Default)]
pub struct RuleSet(BTreeMap<u64, VerifierArtifact>);

impl RuleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, artifact: VerifierArtifact) -> bool {
        let id = artifact.rule_id();
        if self.0.contains_key(&id) {
            return false;
        }
        self.0.insert(id, artifact);
        true
    }

    pub fn get(&self, id: u64) -> Option<&VerifierArtifact> {
        self.0.get(&id)
    }

    pub fn load(paths: &[PathBuf]) -> Result<Self, AggregatorError> {
        let mut set = Self::new();
        for path in paths {
            let bytes = fs::read(path).map_err(|source| AggregatorError::Io {
                path: path.clone(),
                source,
            })?;
            let artifact = VerifierArtifact::import(&bytes).map_err(|source| AggregatorError::Artifact {
                path: path.clone(),
                source,
            })?;
            let id = artifact.rule_id();
            if !set.insert(artifact) {
                return Err(AggregatorError::DuplicateRule(id));
            }
        }
        Ok(set)
    }
}

impl FromIterator<VerifierArtifact> for RuleSet {
    fn from_iter<I: IntoIterator<Item = VerifierArtifact>>(iter: I) -> Self {
        let mut set = Self::new();
        for a in iter {
            set.insert(a);
        }
        set
    }
}

fn email_kind(e: &EmailError) -> &'static str {
    match e {
        EmailError::MalformedEmail(_) => "MalformedEmail",
        EmailError::MissingHeader(_) => "MissingHeader",
        EmailError::MalformedAddress(_) => "MalformedAddress",
        EmailError::MalformedSubject(_) => "MalformedSubject",
    }
}

fn vrm_kind(e: &VrmError) -> &'static str {
    match e {
        VrmError::UnsupportedSyntax { .. } => "UnsupportedSyntax",
        VrmError::Parse { .. } => "Parse",
        VrmError::StateBlowup { .. } => "StateBlowup",
        VrmError::InputTooLong { .. } => "InputTooLong",
        VrmError::NoMatch { .. } => "NoMatch",
        VrmError::MissingVariable(_) => "MissingVariable",
        VrmError::UnknownVariable(_) => "UnknownVariable",
        VrmError::InvalidRule(_) => "InvalidRule",
        VrmError::VersionMismatch { .. } => "VersionMismatch",
        VrmError::CorruptArtifact(_) => "CorruptArtifact",
    }
}

fn dkim_kind(e: &DkimError) -> &'static str {
    match e {
        DkimError::NoSignature => "NoSignature",
        DkimError::MultipleSignatures => "MultipleSignatures",
        DkimError::MalformedSignature(_) => "MalformedSignature",
        DkimError::UnknownDomainKey { .. } => "UnknownDomainKey",
        DkimError::BodyHashMismatch => "BodyHashMismatch",
        DkimError::SignatureInvalid => "SignatureInvalid",
        DkimError::DomainMismatch { .. } => "DomainMismatch",
        DkimError::Email(e) => email_kind(e),
        DkimError::Crypto(_) => "Crypto",
    }
}

fn proof_kind(e: &ProofError) -> &'static str {
    match e {
        ProofError::Email(e) => email_kind(e),
        ProofError::Dkim(e) => dkim_kind(e),
        ProofError::Vrm(e) => vrm_kind(e),
        ProofError::RuleMismatch { .. } => "RuleMismatch",
        ProofError::Format(_) => "Format",
    }
}

/// Everything up to (not including) submission: parse, pick the rule from
/// the Subject, match the body, then prove. Pure, so distinct emails can be
/// prepared in parallel.
#[allow(clippy::result_large_err)]
pub fn prepare(
    raw: &[u8],
    rules: &RuleSet,
    keys: &impl KeyLookup,
    address: Option<&str>,
) -> Result<EmailProof, Receipt> {
    let msg = EmailMessage::parse(raw).map_err(|e| Receipt::rejected(stage::PARSE, email_kind(&e), &e))?;
    if let Some(address) = address {
        let to = msg
            .header("To")
            .map(|h| parse_address(&h.unfolded_value()))
            .transpose()
            .map_err(|e| Receipt::rejected(stage::PARSE, email_kind(&e), &e))?;
        if to.as_deref() != Some(&address.to_ascii_lowercase()) {
            return Err(Receipt::rejected(
                stage::PARSE,
                "WrongRecipient",
                format!("not addressed to {address}"),
            ));
        }
    }
    let rule_id = msg
        .rule_id()
        .map_err(|e| Receipt::rejected(stage::RULE_ID, email_kind(&e), &e))?;
    let artifact = rules
        .get(rule_id)
        .ok_or_else(|| Receipt::rejected(stage::RULE_LOOKUP, "UnknownRule", format!("no rule with id {rule_id}")))?;
    let body = std::str::from_utf8(msg.trimmed_body()).map_err(|_| {
        let e = VrmError::NoMatch { segment: 0 };
        Receipt::rejected(stage::MATCH, vrm_kind(&e), "body is not UTF-8")
    })?;
    artifact
        .match_and_extract(body)
        .map_err(|e| Receipt::rejected(stage::MATCH, vrm_kind(&e), &e))?;
    prove(raw, artifact, keys).map_err(|e| Receipt::rejected(stage::PROVE, proof_kind(&e), &e))
}

/// Runs the whole pipeline for one email against an in-memory state.
pub fn process_email(raw: &[u8], rules: &RuleSet, state: &mut WalletState) -> Receipt {
    match prepare(raw, rules, state.key_registry(), None) {
        Ok(proof) => {
            let outcome = state.submit(&proof);
            Receipt::for_submission(&proof, &outcome)
        }
        Err(receipt) => receipt,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Summary {
    pub processed: usize,
    pub accepted: usize,
    pub rejected: usize,
    /// `(file name, receipt)` in processing order.
    pub receipts: Vec<(String, Receipt)>,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} accepted, {} rejected", self.accepted, self.rejected)
    }
}

/// `.eml` files of a directory in lexicographic file-name order.
pub fn inbox_files(inbox: &Path) -> Result<Vec<PathBuf>, AggregatorError> {
    if !inbox.is_dir() {
        return Err(AggregatorError::Inbox(inbox.to_path_buf()));
    }
    let io = |source| AggregatorError::Io {
        path: inbox.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(inbox).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "eml") {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Processes every `.eml` in the inbox. Proving runs in parallel;
/// submission is serialized in file-name order. Each email gets a
/// `<name>.receipt.json` (and `<name>.proof` once proved) beside it.
#[allow(clippy::result_large_err)]
pub fn run_inbox(config: &AggregatorConfig) -> Result<Summary, AggregatorError> {
    let files = inbox_files(&config.inbox)?;
    let rules = RuleSet::load(&config.rules)?;
    let mut store = Store::open_for_write(&config.state)?;

    let prepared: Vec<Result<EmailProof, Receipt>> = {
        let keys = store.state().key_registry();
        files
            .par_iter()
            .map(|path| match fs::read(path) {
                Ok(raw) => prepare(&raw, &rules, keys, config.address.as_deref()),
                Err(e) => Err(Receipt::rejected(stage::READ, "Io", e)),
            })
            .collect()
    };

    let mut summary = Summary::default();
    for (path, prepared) in files.iter().zip(prepared) {
        let stem = path.file_stem().expect("file has a name").to_string_lossy().into_owned();
        let sidecar = |ext: &str| path.with_file_name(format!("{stem}.{ext}"));
        let receipt = match prepared {
            Ok(proof) => {
                let proof_path = sidecar("proof");
                fs::write(&proof_path, proof.to_bytes()).map_err(|source| AggregatorError::Io {
                    path: proof_path.clone(),
                    source,
                })?;
                store.submit_file(&proof_path)?
            }
            Err(receipt) => receipt,
        };
        let receipt_path = sidecar("receipt.json");
        fs::write(&receipt_path, receipt.to_json()).map_err(|source| AggregatorError::Io {
            path: receipt_path.clone(),
            source,
        })?;
        summary.processed += 1;
        if receipt.is_accepted() {
            summary.accepted += 1;
        } else {
            summary.rejected += 1;
        }
        let name = path.file_name().expect("file has a name").to_string_lossy().into_owned();
        summary.receipts.push((name, receipt));
    }
    Ok(summary)
}
