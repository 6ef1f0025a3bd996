//! RSASSA-PKCS1-v1_5 with SHA-256 (RFC 3447 section 8.2) over `num-bigint`.
//!
//! Key generation is seeded and fully deterministic so fixtures are
//! reproducible byte for byte. That makes it unsuitable for real keys.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{sha256, CryptoError};

/// DER prefix of the SHA-256 `DigestInfo` structure.
const SHA256_DIGEST_INFO: [u8; 19] = [
    0x30, 0x31, 0x30, 0x0d, 0x06, 0x09, 0x60, 0x86, 0x48, 0x01, 0x65, 0x03, 0x04, 0x02, 0x01, 0x05,
    0x00, 0x04, 0x20,
];

pub const DEFAULT_EXPONENT: u32 = 65537;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RsaPublicKey {
    n: BigUint,
    e: BigUint,
}

#[derive(Clone, PartialEq, Eq)]
pub struct RsaPrivateKey {
    n: BigUint,
    e: BigUint,
    d: BigUint,
}

impl fmt::Debug for RsaPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hex = self.n.to_str_radix(16);
        write!(f, "RsaPublicKey({} bits, n=0x{}.., e={})", self.bits(), &hex[..hex.len().min(16)], self.e)
    }
}

impl fmt::Debug for RsaPrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RsaPrivateKey({:?})", self.public_key())
    }
}

impl RsaPublicKey {
    pub fn new(n: BigUint, e: BigUint) -> Result<Self, CryptoError> {
        if n.is_even() || n.is_zero() {
            return Err(CryptoError::KeyFormat("modulus must be odd".into()));
        }
        if e.is_even() || e < BigUint::from(3u32) {
            return Err(CryptoError::KeyFormat("exponent must be odd and at least 3".into()));
        }
        Ok(Self { n, e })
    }

    pub fn from_be_bytes(modulus: &[u8], exponent: &[u8]) -> Result<Self, CryptoError> {
        Self::new(BigUint::from_bytes_be(modulus), BigUint::from_bytes_be(exponent))
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn exponent(&self) -> &BigUint {
        &self.e
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    /// Length in bytes of signatures under this key.
    pub fn size(&self) -> usize {
        self.n.bits().div_ceil(8) as usize
    }

    /// Full-block comparison against the expected encoding; any deviation,
    /// including a wrong signature length, yields `false`.
    pub fn verify(&self, digest: &[u8], signature: &[u8]) -> bool {
        let k = self.size();
        if signature.len() != k || digest.len() != 32 {
            return false;
        }
        let Ok(expected) = emsa_pkcs1_v15_encode(digest, k) else {
            return false;
        };
        let s = BigUint::from_bytes_be(signature);
        if s >= self.n {
            return false;
        }
        let m = s.modpow(&self.e, &self.n);
        i2osp(&m, k).is_some_and(|em| em == expected)
    }

    pub fn to_key_file(&self) -> String {
        format!("n=0x{}\ne={}\n", self.n.to_str_radix(16), self.e)
    }

    pub fn from_key_file(text: &str) -> Result<Self, CryptoError> {
        let fields = KeyFields::parse(text)?;
        Self::new(fields.require("n")?, fields.require("e")?)
    }
}

impl RsaPrivateKey {
    pub fn public_key(&self) -> RsaPublicKey {
        RsaPublicKey {
            n: self.n.clone(),
            e: self.e.clone(),
        }
    }

    pub fn size(&self) -> usize {
        self.n.bits().div_ceil(8) as usize
    }

    pub fn sign(&self, digest: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if digest.len() != 32 {
            return Err(CryptoError::InvalidDigestLength(digest.len()));
        }
        let k = self.size();
        let em = emsa_pkcs1_v15_encode(digest, k)?;
        let m = BigUint::from_bytes_be(&em);
        let s = m.modpow(&self.d, &self.n);
        Ok(i2osp(&s, k).expect("s < n fits in k bytes"))
    }

    pub fn to_key_file(&self) -> String {
        format!(
            "n=0x{}\ne={}\nd=0x{}\n",
            self.n.to_str_radix(16),
            self.e,
            self.d.to_str_radix(16)
        )
    }

    pub fn from_key_file(text: &str) -> Result<Self, CryptoError> {
        let fields = KeyFields::parse(text)?;
        let public = RsaPublicKey::new(fields.require("n")?, fields.require("e")?)?;
        let d = fields.require("d")?;
        if d.is_zero() || d >= public.n {
            return Err(CryptoError::KeyFormat("private exponent out of range".into()));
        }
        Ok(Self {
            n: public.n,
            e: public.e,
            d,
        })
    }
}

/// `0x00 01 FF..FF 00 || DigestInfo || H`, `k` bytes long.
pub fn emsa_pkcs1_v15_encode(digest: &[u8], k: usize) -> Result<Vec<u8>, CryptoError> {
    let t_len = SHA256_DIGEST_INFO.len() + digest.len();
    if k < t_len + 11 {
        return Err(CryptoError::KeyTooSmall);
    }
    let mut em = Vec::with_capacity(k);
    em.extend_from_slice(&[0x00, 0x01]);
    em.resize(k - t_len - 1, 0xff);
    em.push(0x00);
    em.extend_from_slice(&SHA256_DIGEST_INFO);
    em.extend_from_slice(digest);
    Ok(em)
}

fn i2osp(x: &BigUint, len: usize) -> Option<Vec<u8>> {
    let bytes = x.to_bytes_be();
    let bytes = if x.is_zero() { Vec::new() } else { bytes };
    if bytes.len() > len {
        return None;
    }
    let mut out = vec![0u8; len - bytes.len()];
    out.extend_from_slice(&bytes);
    Some(out)
}

pub fn sign(key: &RsaPrivateKey, digest: &[u8]) -> Result<Vec<u8>, CryptoError> {
    key.sign(digest)
}

pub fn verify(key: &RsaPublicKey, digest: &[u8], signature: &[u8]) -> bool {
    key.verify(digest, signature)
}

/// Deterministic key generation from `seed`. Only 1024- and 2048-bit
/// moduli are accepted.
pub fn keygen(bits: u32, seed: &[u8]) -> Result<(RsaPublicKey, RsaPrivateKey), CryptoError> {
    if bits != 1024 && bits != 2048 {
        return Err(CryptoError::UnsupportedKeySize(bits));
    }
    if seed.is_empty() {
        return Err(CryptoError::EmptySeed);
    }
    let mut material = b"email-wallet/rsa-keygen/v1".to_vec();
    material.extend_from_slice(&bits.to_be_bytes());
    material.extend_from_slice(seed);
    let mut rng = ChaCha20Rng::from_seed(sha256::sha256(&material));

    let e = BigUint::from(DEFAULT_EXPONENT);
    let one = BigUint::one();
    loop {
        let p = random_prime(&mut rng, bits / 2, DEFAULT_EXPONENT);
        let q = random_prime(&mut rng, bits / 2, DEFAULT_EXPONENT);
        if p == q {
            continue;
        }
        let n = &p * &q;
        debug_assert_eq!(n.bits(), u64::from(bits));
        let lambda = (&p - &one).lcm(&(&q - &one));
        let Some(d) = e.modinv(&lambda) else {
            continue;
        };
        let private = RsaPrivateKey {
            n: n.clone(),
            e: e.clone(),
            d,
        };
        return Ok((RsaPublicKey { n, e: e.clone() }, private));
    }
}

const SMALL_PRIMES: [u32; 53] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

fn random_biguint(rng: &mut ChaCha20Rng, bits: u32) -> BigUint {
    let mut buf = vec![0u8; bits.div_ceil(8) as usize];
    rng.fill_bytes(&mut buf);
    let excess = buf.len() as u32 * 8 - bits;
    buf[0] &= 0xff >> excess;
    BigUint::from_bytes_be(&buf)
}

/// A prime of exactly `bits` bits with the two top bits set, so the product
/// of two such primes has exactly `2 * bits` bits. `p - 1` is coprime to `e`.
fn random_prime(rng: &mut ChaCha20Rng, bits: u32, e: u32) -> BigUint {
    let top = (BigUint::one() << (bits - 1)) | (BigUint::one() << (bits - 2));
    loop {
        let candidate = random_biguint(rng, bits) | &top | BigUint::one();
        let divisible = SMALL_PRIMES
            .iter()
            .any(|&sp| (&candidate % sp).is_zero());
        if divisible || (&candidate % e) == BigUint::one() {
            continue;
        }
        if is_probable_prime(&candidate, 20, rng) {
            return candidate;
        }
    }
}

/// Miller-Rabin with random bases.
pub fn is_probable_prime(n: &BigUint, rounds: usize, rng: &mut ChaCha20Rng) -> bool {
    let one = BigUint::one();
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    if *n == two || *n == BigUint::from(3u32) {
        return true;
    }
    if n.is_even() {
        return false;
    }
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().expect("n > 1");
    let d = &n_minus_1 >> s;
    let bits = n.bits() as u32;
    'witness: for _ in 0..rounds {
        let a = loop {
            let a = random_biguint(rng, bits) % n;
            if a >= two && a < n_minus_1 {
                break a;
            }
        };
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

struct KeyFields(Vec<(String, BigUint)>);

impl KeyFields {
    fn parse(text: &str) -> Result<Self, CryptoError> {
        let mut fields = Vec::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CryptoError::KeyFormat(format!("expected key=value, got {line:?}")))?;
            let key = key.trim();
            if fields.iter().any(|(k, _)| k == key) {
                return Err(CryptoError::KeyFormat(format!("duplicate field {key}")));
            }
            fields.push((key.to_string(), parse_big(value.trim())?));
        }
        Ok(Self(fields))
    }

    fn require(&self, name: &str) -> Result<BigUint, CryptoError> {
        self.0
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| CryptoError::KeyFormat(format!("missing field {name}")))
    }
}

fn parse_big(value: &str) -> Result<BigUint, CryptoError> {
    let parsed = match value.strip_prefix("0x").or_else(|| value.strip_prefix("0X")) {
        Some(hex) => BigUint::parse_bytes(hex.as_bytes(), 16),
        None => BigUint::parse_bytes(value.as_bytes(), 10),
    };
    parsed.ok_or_else(|| CryptoError::KeyFormat(format!("bad integer {value:?}")))
}

impl FromStr for RsaPublicKey {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_key_file(s)
    }
}

#[derive(Serialize, Deserialize)]
struct PublicKeyRepr {
    n: String,
    e: String,
}

impl Serialize for RsaPublicKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PublicKeyRepr {
            n: format!("0x{}", self.n.to_str_radix(16)),
            e: self.e.to_string(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RsaPublicKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = PublicKeyRepr::deserialize(deserializer)?;
        let n = parse_big(&repr.n).map_err(serde::de::Error::custom)?;
        let e = parse_big(&repr.e).map_err(serde::de::Error::custom)?;
        Self::new(n, e).map_err(serde::de::Error::custom)
    }
}
