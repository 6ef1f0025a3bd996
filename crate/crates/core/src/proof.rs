//! Email proofs.
//!
//! A proof here is transparent: it carries the signed email itself as the
//! witness, and verification replays every check a proving circuit would
//! constrain (body hash, RSA signature, key binding, sender binding, regex
//! acceptance of the claimed values, fixed length bound, nullifier). Nothing
//! is hidden and nothing is succinct; what is preserved is the exact set of
//! conditions under which a claim is accepted.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{from_hex, sha256, to_hex, Digest, RsaPublicKey};
use crate::dkim::{body_hash, dkim_verify, find_signature, signed_header_bytes, strip_b_value, DkimError, KeyLookup};
use crate::email::{address_domain, EmailError, EmailMessage};
use crate::vrm::{VariableValues, VerifierArtifact, VrmError};

pub const PROOF_MAGIC: &[u8; 4] = b"EWPF";

/// The public statement a proof establishes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub sender_email: String,
    pub rsa_pubkey: RsaPublicKey,
    pub rule_id: u64,
    pub variable_values: VariableValues,
}

impl Claim {
    /// JSON with object keys sorted at every level.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("claim serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn digest(&self) -> Digest {
        sha256(self.canonical_json().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmailProof {
    pub claim: Claim,
    pub witness: Vec<u8>,
    pub nullifier: Digest,
}

/// Why a proof was rejected. The numeric codes are stable.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProofFailure {
    #[error("witness is not a well-formed signed email: {0}")]
    WitnessMalformed(String),
    #[error("body hash does not match the signature's bh= tag")]
    BodyHash,
    #[error("RSA signature does not verify under the claimed key")]
    Signature,
    #[error("claimed key is not the key registered for the sender domain")]
    KeyMismatch,
    #[error("claimed sender does not match the signed From address or signing domain")]
    SenderMismatch,
    #[error("claimed rule and values do not reproduce the signed body")]
    RegexBinding,
    #[error("body of {len} bytes exceeds the rule's maximum of {max}")]
    BodyTooLong { len: usize, max: usize },
    #[error("nullifier does not match the signature")]
    Nullifier,
}

impl ProofFailure {
    pub fn code(&self) -> u8 {
        match self {
            ProofFailure::WitnessMalformed(_) => 1,
            ProofFailure::BodyHash => 2,
            ProofFailure::Signature => 3,
            ProofFailure::KeyMismatch => 4,
            ProofFailure::SenderMismatch => 5,
            ProofFailure::RegexBinding => 6,
            ProofFailure::BodyTooLong { .. } => 7,
            ProofFailure::Nullifier => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProofError {
    #[error(transparent)]
    Email(#[from] EmailError),
    #[error(transparent)]
    Dkim(#[from] DkimError),
    #[error(transparent)]
    Vrm(#[from] VrmError),
    #[error("subject names rule {subject} but the artifact is for rule {artifact}")]
    RuleMismatch { subject: u64, artifact: u64 },
    #[error("malformed proof file: {0}")]
    Format(String),
}

/// sha256 of the decoded `b=` signature bytes.
pub fn compute_nullifier(signed_email: &[u8]) -> Result<Digest, ProofError> {
    let msg = EmailMessage::parse(signed_email)?;
    let (_, sig) = find_signature(&msg)?;
    Ok(sha256(&sig.signature))
}

/// Builds a proof for a signed email whose body satisfies `artifact`.
pub fn prove(signed_email: &[u8], artifact: &VerifierArtifact, registry: &impl KeyLookup) -> Result<EmailProof, ProofError> {
    let msg = EmailMessage::parse(signed_email)?;
    let verified = dkim_verify(&msg, registry)?;
    let subject = msg.rule_id()?;
    if subject != artifact.rule_id() {
        return Err(ProofError::RuleMismatch {
            subject,
            artifact: artifact.rule_id(),
        });
    }
    let body = body_text(&msg).ok_or(VrmError::NoMatch { segment: 0 })?;
    let variable_values = artifact.match_and_extract(body)?;
    let proof = EmailProof {
        claim: Claim {
            sender_email: verified.sender,
            rsa_pubkey: verified.public_key,
            rule_id: artifact.rule_id(),
            variable_values,
        },
        witness: signed_email.to_vec(),
        nullifier: sha256(&verified.signature),
    };
    debug_assert_eq!(check(&proof, artifact, &proof.claim.rsa_pubkey), Ok(()));
    Ok(proof)
}

fn body_text(msg: &EmailMessage) -> Option<&str> {
    std::str::from_utf8(msg.trimmed_body()).ok()
}

pub fn verify(proof: &EmailProof, artifact: &VerifierArtifact, registered_key: &RsaPublicKey) -> bool {
    check(proof, artifact, registered_key).is_ok()
}

/// Runs every check in a fixed order and reports the first that fails.
/// The length bound is checked before regex binding so that an oversized
/// body is always reported as such.
pub fn check(proof: &EmailProof, artifact: &VerifierArtifact, registered_key: &RsaPublicKey) -> Result<(), ProofFailure> {
    let claim = &proof.claim;
    let malformed = |e: &dyn fmt::Display| ProofFailure::WitnessMalformed(e.to_string());

    let msg = EmailMessage::parse(&proof.witness).map_err(|e| malformed(&e))?;
    let (header, sig) = find_signature(&msg).map_err(|e| malformed(&e))?;
    let from = msg.sender_address().map_err(|e| malformed(&e))?;

    if body_hash(&msg, sig.canonicalization)[..] != sig.body_hash[..] {
        return Err(ProofFailure::BodyHash);
    }

    let signed = signed_header_bytes(
        &msg,
        &header.name,
        &strip_b_value(&header.raw_value),
        &sig.signed_headers,
        sig.canonicalization,
    );
    if !claim.rsa_pubkey.verify(&sha256(&signed), &sig.signature) {
        return Err(ProofFailure::Signature);
    }

    if claim.rsa_pubkey != *registered_key {
        return Err(ProofFailure::KeyMismatch);
    }

    if claim.sender_email != from || address_domain(&from) != sig.domain {
        return Err(ProofFailure::SenderMismatch);
    }

    let body = msg.trimmed_body();
    if body.len() > artifact.max_len() {
        return Err(ProofFailure::BodyTooLong {
            len: body.len(),
            max: artifact.max_len(),
        });
    }

    let bound = artifact.rule_id() == claim.rule_id
        && msg.rule_id().ok() == Some(claim.rule_id)
        && artifact.reconstruct_and_verify(&claim.variable_values) == Ok(true)
        && artifact
            .reconstruct(&claim.variable_values)
            .is_ok_and(|text| text.as_bytes() == body);
    if !bound {
        return Err(ProofFailure::RegexBinding);
    }

    if proof.nullifier != sha256(&sig.signature) {
        return Err(ProofFailure::Nullifier);
    }
    Ok(())
}

impl EmailProof {
    /// `EWPF`, then three sections each prefixed by a little-endian u32
    /// length: canonical claim JSON, witness bytes, nullifier as hex.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = PROOF_MAGIC.to_vec();
        for section in [
            self.claim.canonical_json().into_bytes(),
            self.witness.clone(),
            to_hex(&self.nullifier).into_bytes(),
        ] {
            out.extend_from_slice(&(section.len() as u32).to_le_bytes());
            out.extend_from_slice(&section);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProofError> {
        let bad = |m: &str| ProofError::Format(m.into());
        let rest = bytes.strip_prefix(PROOF_MAGIC).ok_or_else(|| bad("bad magic"))?;
        let mut sections = Vec::with_capacity(3);
        let mut rest = rest;
        for _ in 0..3 {
            if rest.len() < 4 {
                return Err(bad("truncated"));
            }
            let (len, tail) = rest.split_at(4);
            let len = u32::from_le_bytes(len.try_into().expect("4 bytes")) as usize;
            if tail.len() < len {
                return Err(bad("truncated"));
            }
            let (section, tail) = tail.split_at(len);
            sections.push(section);
            rest = tail;
        }
        if !rest.is_empty() {
            return Err(bad("trailing bytes"));
        }
        let claim: Claim = serde_json::from_slice(sections[0]).map_err(|e| ProofError::Format(format!("claim: {e}")))?;
        let nullifier = std::str::from_utf8(sections[2])
            .ok()
            .and_then(from_hex)
            .and_then(|v| <Digest>::try_from(v).ok())
            .ok_or_else(|| bad("nullifier is not 32 hex-encoded bytes"))?;
        Ok(Self {
            claim,
            witness: sections[1].to_vec(),
            nullifier,
        })
    }
}
