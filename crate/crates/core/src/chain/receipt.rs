//! Structured outcome of processing one transaction.

use serde::{Deserialize, Serialize};

use super::{ChainError, Effect};
use crate::crypto::to_hex;
use crate::proof::{Claim, EmailProof};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub status: Status,
    /// Pipeline stage that produced the outcome (`"submit"` once a proof
    /// reached the wallet).
    pub stage: String,
    /// Error kind, e.g. `"NullifierReused"`; absent on acceptance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Proof reason code 1 to 8 when the proof itself was rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason_code: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nullifier: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim: Option<Claim>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<Effect>,
}

impl Receipt {
    pub const SUBMIT: &'static str = "submit";

    pub fn rejected(stage: &str, reason: &str, detail: impl ToString) -> Self {
        Self {
            status: Status::Rejected,
            stage: stage.to_string(),
            reason: Some(reason.to_string()),
            reason_code: None,
            detail: Some(detail.to_string()),
            nullifier: None,
            claim: None,
            effect: None,
        }
    }

    /// Receipt for a proof that reached the wallet.
    pub fn for_submission(proof: &EmailProof, outcome: &Result<Effect, ChainError>) -> Self {
        let base = Self {
            status: Status::Accepted,
            stage: Self::SUBMIT.to_string(),
            reason: None,
            reason_code: None,
            detail: None,
            nullifier: Some(to_hex(&proof.nullifier)),
            claim: Some(proof.claim.clone()),
            effect: None,
        };
        match outcome {
            Ok(effect) => Self {
                effect: Some(effect.clone()),
                ..base
            },
            Err(e) => Self {
                status: Status::Rejected,
                reason: Some(e.kind().to_string()),
                reason_code: e.reason_code(),
                detail: Some(e.to_string()),
                ..base
            },
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.status == Status::Accepted
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("receipt serializes");
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }
}
