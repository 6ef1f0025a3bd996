//! DKIM signing (the sender domain server side) and verification.
//!
//! Only `a=rsa-sha256` is produced or accepted. Signing is deterministic:
//! the `t=`, `x=` and `l=` tags are never emitted and are ignored on input.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{base64, sha256, CryptoError, Digest, RsaPrivateKey, RsaPublicKey, Sha256};
use crate::email::{
    address_domain, canonicalize_body, canonicalize_header, CanonicalizationMode, EmailError,
    EmailMessage, Header,
};

pub const DKIM_HEADER: &str = "DKIM-Signature";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DkimError {
    #[error("message carries no DKIM-Signature")]
    NoSignature,
    #[error("message carries more than one DKIM-Signature")]
    MultipleSignatures,
    #[error("malformed DKIM-Signature: {0}")]
    MalformedSignature(String),
    #[error("no key registered for selector {selector:?} of domain {domain:?}")]
    UnknownDomainKey { domain: String, selector: String },
    #[error("body hash does not match bh=")]
    BodyHashMismatch,
    #[error("RSA signature does not verify")]
    SignatureInvalid,
    #[error("From domain {from:?} does not match signing domain {signer:?}")]
    DomainMismatch { from: String, signer: String },
    #[error(transparent)]
    Email(#[from] EmailError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Parsed `DKIM-Signature` tag list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DkimSignature {
    pub domain: String,
    pub selector: String,
    pub canonicalization: CanonicalizationMode,
    /// Lowercased header names from `h=`, in order.
    pub signed_headers: Vec<String>,
    pub body_hash: Vec<u8>,
    pub signature: Vec<u8>,
}

impl DkimSignature {
    pub const ALGORITHM: &'static str = "rsa-sha256";

    pub fn parse(raw_value: &[u8]) -> Result<Self, DkimError> {
        let bad = |m: String| DkimError::MalformedSignature(m);
        let text = std::str::from_utf8(raw_value).map_err(|_| bad("non-ASCII tag list".into()))?;
        let mut tags: BTreeMap<&str, String> = BTreeMap::new();
        for part in text.split(';') {
            if part.trim().is_empty() {
                continue;
            }
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("tag without '=': {:?}", part.trim())))?;
            let name = name.trim();
            if name.is_empty() || !name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') {
                return Err(bad(format!("invalid tag name {name:?}")));
            }
            let value: String = value
                .chars()
                .filter(|c| !matches!(c, ' ' | '\t' | '\r' | '\n'))
                .collect();
            if tags.insert(name, value).is_some() {
                return Err(bad(format!("duplicate tag {name}")));
            }
        }
        let take = |tags: &BTreeMap<&str, String>, t: &str| {
            tags.get(t)
                .cloned()
                .ok_or_else(|| DkimError::MalformedSignature(format!("missing {t}= tag")))
        };
        if take(&tags, "v")? != "1" {
            return Err(bad("unsupported version".into()));
        }
        if take(&tags, "a")? != Self::ALGORITHM {
            return Err(bad("unsupported algorithm".into()));
        }
        let canonicalization = match tags.get("c") {
            Some(c) => c.parse().map_err(bad)?,
            None => CanonicalizationMode::SIMPLE,
        };
        let signed_headers: Vec<String> = take(&tags, "h")?
            .split(':')
            .map(|h| h.to_ascii_lowercase())
            .collect();
        if signed_headers.iter().any(String::is_empty) {
            return Err(bad("empty header name in h=".into()));
        }
        if !signed_headers.iter().any(|h| h == "from") {
            return Err(bad("h= does not cover From".into()));
        }
        let body_hash =
            base64::decode(&take(&tags, "bh")?).map_err(|e| bad(format!("bh=: {e}")))?;
        if body_hash.len() != 32 {
            return Err(bad("bh= is not a SHA-256 digest".into()));
        }
        let signature =
            base64::decode(&take(&tags, "b")?).map_err(|e| bad(format!("b=: {e}")))?;
        if signature.is_empty() {
            return Err(bad("empty b=".into()));
        }
        let domain = take(&tags, "d")?.to_ascii_lowercase();
        let selector = take(&tags, "s")?;
        if domain.is_empty() || selector.is_empty() {
            return Err(bad("empty d= or s=".into()));
        }
        Ok(Self {
            domain,
            selector,
            canonicalization,
            signed_headers,
            body_hash,
            signature,
        })
    }

    /// Header value with an empty `b=`; the signed form of the header.
    fn unsigned_value(&self) -> String {
        format!(
            " v=1; a={}; c={}; d={}; s={}; h={}; bh={}; b=",
            Self::ALGORITHM,
            self.canonicalization,
            self.domain,
            self.selector,
            self.signed_headers.join(":"),
            base64::encode(&self.body_hash),
        )
    }
}

impl fmt::Display for DkimSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.unsigned_value(), base64::encode(&self.signature))
    }
}

/// Public keys by domain and selector, standing in for DNS TXT records.
pub trait KeyLookup {
    fn lookup(&self, domain: &str, selector: &str) -> Option<&RsaPublicKey>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRegistry(BTreeMap<String, BTreeMap<String, RsaPublicKey>>);

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `false` (and leaves the registry untouched) if the pair is
    /// already taken.
    pub fn insert(&mut self, domain: &str, selector: &str, key: RsaPublicKey) -> bool {
        let selectors = self.0.entry(domain.to_ascii_lowercase()).or_default();
        if selectors.contains_key(selector) {
            return false;
        }
        selectors.insert(selector.to_string(), key);
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &RsaPublicKey)> {
        self.0
            .iter()
            .flat_map(|(d, sel)| sel.iter().map(move |(s, k)| (d.as_str(), s.as_str(), k)))
    }
}

impl KeyLookup for KeyRegistry {
    fn lookup(&self, domain: &str, selector: &str) -> Option<&RsaPublicKey> {
        self.0.get(&domain.to_ascii_lowercase())?.get(selector)
    }
}

/// Result of a successful verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedEmail {
    pub sender: String,
    pub domain: String,
    pub selector: String,
    pub public_key: RsaPublicKey,
    /// The exact byte string whose SHA-256 was signed.
    pub signed_bytes: Vec<u8>,
    pub signature: Vec<u8>,
}

/// Returns the single DKIM-Signature header and its parsed form.
pub fn find_signature(msg: &EmailMessage) -> Result<(&Header, DkimSignature), DkimError> {
    let mut found = msg.headers_named(DKIM_HEADER);
    let header = found.next().ok_or(DkimError::NoSignature)?;
    if found.next().is_some() {
        return Err(DkimError::MultipleSignatures);
    }
    Ok((header, DkimSignature::parse(&header.raw_value)?))
}

pub fn body_hash(msg: &EmailMessage, mode: CanonicalizationMode) -> Digest {
    sha256(&canonicalize_body(msg.body(), mode.body))
}

/// Removes the value of the `b=` tag, keeping the tag itself.
pub fn strip_b_value(raw_value: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(raw_value.len());
    let mut start = 0;
    while start <= raw_value.len() {
        let end = raw_value[start..]
            .iter()
            .position(|&b| b == b';')
            .map_or(raw_value.len(), |p| start + p);
        let part = &raw_value[start..end];
        let eq = part.iter().position(|&b| b == b'=');
        let is_b = eq.is_some_and(|eq| {
            part[..eq]
                .iter()
                .filter(|b| !b.is_ascii_whitespace())
                .eq(b"b".iter())
        });
        match (is_b, eq) {
            (true, Some(eq)) => out.extend_from_slice(&part[..=eq]),
            _ => out.extend_from_slice(part),
        }
        if end < raw_value.len() {
            out.push(b';');
        }
        start = end + 1;
    }
    out
}

/// Canonical header block that the signature covers: the `h=` headers,
/// selected bottom-up, followed by the DKIM-Signature header itself (with an
/// empty `b=` and no trailing CRLF).
pub fn signed_header_bytes(
    msg: &EmailMessage,
    dkim_header_name: &str,
    dkim_unsigned_value: &[u8],
    signed_headers: &[String],
    mode: CanonicalizationMode,
) -> Vec<u8> {
    let mut out = Vec::new();
    let mut used: BTreeMap<&str, usize> = BTreeMap::new();
    for name in signed_headers {
        let count = used.entry(name.as_str()).or_default();
        let instance = msg
            .headers()
            .iter()
            .rev()
            .filter(|h| h.name.eq_ignore_ascii_case(name) && !h.name.eq_ignore_ascii_case(DKIM_HEADER))
            .nth(*count);
        *count += 1;
        if let Some(h) = instance {
            out.extend(canonicalize_header(&h.name, &h.raw_value, mode.header));
        }
    }
    let mut own = canonicalize_header(dkim_header_name, dkim_unsigned_value, mode.header);
    own.truncate(own.len() - 2);
    out.extend(own);
    out
}

pub fn dkim_sign(
    msg: &EmailMessage,
    key: &RsaPrivateKey,
    domain: &str,
    selector: &str,
    mode: CanonicalizationMode,
) -> Result<EmailMessage, DkimError> {
    for required in ["From", "Subject"] {
        if msg.header(required).is_none() {
            return Err(EmailError::MissingHeader(required.into()).into());
        }
    }
    if msg.header(DKIM_HEADER).is_some() {
        return Err(DkimError::MultipleSignatures);
    }
    let mut signed_headers = vec!["from".to_string()];
    if msg.header("To").is_some() {
        signed_headers.push("to".into());
    }
    signed_headers.push("subject".into());

    let mut sig = DkimSignature {
        domain: domain.to_ascii_lowercase(),
        selector: selector.to_string(),
        canonicalization: mode,
        signed_headers,
        body_hash: body_hash(msg, mode).to_vec(),
        signature: Vec::new(),
    };
    let unsigned = sig.unsigned_value();
    let data = signed_header_bytes(msg, DKIM_HEADER, unsigned.as_bytes(), &sig.signed_headers, mode);
    sig.signature = key.sign(&sha256(&data))?;

    let mut out = msg.clone();
    out.prepend_header(Header::new(DKIM_HEADER, sig.to_string()));
    Ok(out)
}

pub fn dkim_verify(msg: &EmailMessage, registry: &impl KeyLookup) -> Result<VerifiedEmail, DkimError> {
    let (header, sig) = find_signature(msg)?;
    let sender = msg.sender_address()?;
    let public_key = registry
        .lookup(&sig.domain, &sig.selector)
        .ok_or_else(|| DkimError::UnknownDomainKey {
            domain: sig.domain.clone(),
            selector: sig.selector.clone(),
        })?;
    if body_hash(msg, sig.canonicalization)[..] != sig.body_hash[..] {
        return Err(DkimError::BodyHashMismatch);
    }
    let signed_bytes = signed_header_bytes(
        msg,
        &header.name,
        &strip_b_value(&header.raw_value),
        &sig.signed_headers,
        sig.canonicalization,
    );
    let mut hasher = Sha256::new();
    hasher.update(&signed_bytes);
    if !public_key.verify(&hasher.finalize(), &sig.signature) {
        return Err(DkimError::SignatureInvalid);
    }
    let from_domain = address_domain(&sender);
    if from_domain != sig.domain {
        return Err(DkimError::DomainMismatch {
            from: from_domain.to_string(),
            signer: sig.domain,
        });
    }
    Ok(VerifiedEmail {
        sender,
        domain: sig.domain,
        selector: sig.selector,
        public_key: public_key.clone(),
        signed_bytes,
        signature: sig.signature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;
    use std::sync::OnceLock;

    fn keys() -> &'static (RsaPublicKey, RsaPrivateKey) {
        static KEYS: OnceLock<(RsaPublicKey, RsaPrivateKey)> = OnceLock::new();
        KEYS.get_or_init(|| keygen(1024, b"dkim-unit").unwrap())
    }

    fn registry() -> KeyRegistry {
        let mut r = KeyRegistry::new();
        r.insert("example.com", "s1", keys().0.clone());
        r
    }

    fn fixture() -> EmailMessage {
        EmailMessage::parse(
            b"From: Alice <alice@example.com>\r\nTo: wallet@relay.org\r\nSubject: 1\r\n\r\nTransfer 0.005 ETH to bob@d.org\r\n",
        )
        .unwrap()
    }

    fn signed(mode: CanonicalizationMode) -> EmailMessage {
        dkim_sign(&fixture(), &keys().1, "example.com", "s1", mode).unwrap()
    }

    #[test]
    fn round_trip_all_modes() {
        for mode in ["simple/simple", "relaxed/relaxed", "simple/relaxed", "relaxed/simple"] {
            let msg = signed(mode.parse().unwrap());
            let reparsed = EmailMessage::parse(&msg.to_bytes()).unwrap();
            let v = dkim_verify(&reparsed, &registry()).unwrap();
            assert_eq!(v.sender, "alice@example.com");
            assert_eq!(v.domain, "example.com");
        }
    }

    #[test]
    fn signing_is_deterministic() {
        let a = signed(CanonicalizationMode::RELAXED).to_bytes();
        let b = signed(CanonicalizationMode::RELAXED).to_bytes();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("DKIM-Signature: v=1; a=rsa-sha256; c=relaxed/relaxed; d=example.com; s=s1; h=from:to:subject; bh="));
        assert!(!text.contains("t="));
    }

    #[test]
    fn missing_from_is_reported() {
        let msg = EmailMessage::parse(b"Subject: 1\r\n\r\nx\r\n").unwrap();
        let err = dkim_sign(&msg, &keys().1, "example.com", "s1", Default::default()).unwrap_err();
        assert_eq!(err, DkimError::Email(EmailError::MissingHeader("From".into())));
    }

    #[test]
    fn tampering_yields_named_errors() {
        let msg = signed(CanonicalizationMode::RELAXED);

        let mut body = msg.clone();
        body.set_body(b"Transfer 0.006 ETH to bob@d.org\r\n".to_vec());
        assert_eq!(dkim_verify(&body, &registry()).unwrap_err(), DkimError::BodyHashMismatch);

        let raw = String::from_utf8(msg.to_bytes()).unwrap();
        let subject = raw.replace("Subject: 1", "Subject: 2");
        let subject = EmailMessage::parse(subject.as_bytes()).unwrap();
        assert_eq!(dkim_verify(&subject, &registry()).unwrap_err(), DkimError::SignatureInvalid);

        assert!(matches!(
            dkim_verify(&msg, &KeyRegistry::new()).unwrap_err(),
            DkimError::UnknownDomainKey { .. }
        ));

        let mut unsigned = msg.clone();
        unsigned.remove_headers(DKIM_HEADER);
        assert_eq!(dkim_verify(&unsigned, &registry()).unwrap_err(), DkimError::NoSignature);

        let mut double = msg.clone();
        double.prepend_header(msg.headers()[0].clone());
        assert_eq!(dkim_verify(&double, &registry()).unwrap_err(), DkimError::MultipleSignatures);
    }

    #[test]
    fn other_key_does_not_verify() {
        let (other, _) = keygen(1024, b"someone-else").unwrap();
        let mut r = KeyRegistry::new();
        r.insert("example.com", "s1", other);
        assert_eq!(
            dkim_verify(&signed(CanonicalizationMode::RELAXED), &r).unwrap_err(),
            DkimError::SignatureInvalid
        );
    }

    #[test]
    fn foreign_from_domain_is_rejected() {
        let msg = EmailMessage::parse(b"From: eve@evil.org\r\nSubject: 1\r\n\r\nx\r\n").unwrap();
        let signed = dkim_sign(&msg, &keys().1, "example.com", "s1", Default::default()).unwrap();
        assert!(matches!(
            dkim_verify(&signed, &registry()).unwrap_err(),
            DkimError::DomainMismatch { .. }
        ));
    }

    #[test]
    fn strip_b_keeps_bh() {
        assert_eq!(
            strip_b_value(b" v=1; bh=abc; b=xyz\r\n zz; d=x"),
            b" v=1; bh=abc; b=; d=x"
        );
        assert_eq!(strip_b_value(b"b = q"), b"b =");
    }

    #[test]
    fn tag_list_validation() {
        let ok = signed(CanonicalizationMode::RELAXED);
        let raw = String::from_utf8(ok.headers()[0].raw_value.clone()).unwrap();
        assert!(DkimSignature::parse(raw.as_bytes()).is_ok());
        for (from, to) in [
            ("a=rsa-sha256", "a=rsa-sha1"),
            ("h=from:to:subject", "h=to:subject"),
            ("v=1", "v=2"),
            ("d=example.com", "d=example.com; d=x.org"),
        ] {
            let bad = raw.replace(from, to);
            assert!(
                matches!(DkimSignature::parse(bad.as_bytes()), Err(DkimError::MalformedSignature(_))),
                "{to}"
            );
        }
    }
}
