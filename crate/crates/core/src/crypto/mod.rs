//! Hashing, encoding and signature primitives used by the DKIM layer.

pub mod base64;
pub mod rsa;
pub mod sha256;

use thiserror::Error;

pub use rsa::{keygen, RsaPrivateKey, RsaPublicKey};
pub use sha256::{from_hex, sha256, to_hex, Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("modulus too small for a PKCS#1 v1.5 SHA-256 encoding")]
    KeyTooSmall,
    #[error("digest must be 32 bytes, got {0}")]
    InvalidDigestLength(usize),
    #[error("unsupported key size {0} (expected 1024 or 2048)")]
    UnsupportedKeySize(u32),
    #[error("key generation seed must not be empty")]
    EmptySeed,
    #[error("invalid key: {0}")]
    KeyFormat(String),
}
