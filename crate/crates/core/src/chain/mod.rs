//! The simulated wallet contract.
//!
//! [`WalletState`] is a single-writer state machine. Every operation either
//! succeeds completely or returns an error with the state untouched.

pub mod amm;
pub mod amount;
pub mod receipt;
pub mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{from_hex, to_hex, Digest, RsaPublicKey};
use crate::dkim::{find_signature, KeyLookup, KeyRegistry};
use crate::email::{address_domain, parse_address, EmailMessage};
use crate::proof::{check, EmailProof, ProofFailure};
use crate::vrm::{VariableValues, VerifierArtifact};

pub use amm::{get_amount_out, AmmPool};
pub use amount::{format_amount, parse_amount, parse_base_units, validate_currency};
pub use receipt::{Receipt, Status};
pub use store::{LogEntry, StateLock, Store, StoreError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("a key is already registered for selector {selector:?} of {domain:?}")]
    DuplicateKey { domain: String, selector: String },
    #[error("rule {0} is already registered")]
    DuplicateRule(u64),
    #[error("unknown handler {0:?} (expected transfer or swap)")]
    UnknownHandler(String),
    #[error("no rule with id {0}")]
    UnknownRule(u64),
    #[error("no key registered for selector {selector:?} of {domain:?}")]
    UnknownDomainKey { domain: String, selector: String },
    #[error("proof rejected with reason {code}: {0}", code = .0.code())]
    ProofInvalid(ProofFailure),
    #[error("nullifier already used")]
    NullifierReused,
    #[error("{account} holds too little {currency}")]
    InsufficientBalance { account: String, currency: String },
    #[error("malformed amount {0:?}")]
    MalformedAmount(String),
    #[error("unknown currency {0}")]
    UnknownCurrency(String),
    #[error("invalid currency code {0:?}")]
    InvalidCurrency(String),
    #[error("invalid email address {0:?}")]
    InvalidAddress(String),
    #[error("invalid domain {0:?}")]
    InvalidDomain(String),
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("no pool for {0}/{1}")]
    NoPool(String, String),
    #[error("a pool for {0}/{1} already exists")]
    DuplicatePool(String, String),
    #[error("pool cannot pay out this swap")]
    InsufficientLiquidity,
    #[error("claim has no value for {0}")]
    MissingValue(String),
    #[error("invalid state snapshot: {0}")]
    Snapshot(String),
}

impl ChainError {
    /// Stable name used in receipts and logs.
    pub fn kind(&self) -> &'static str {
        match self {
            ChainError::DuplicateKey { .. } => "DuplicateKey",
            ChainError::DuplicateRule(_) => "DuplicateRule",
            ChainError::UnknownHandler(_) => "UnknownHandler",
            ChainError::UnknownRule(_) => "UnknownRule",
            ChainError::UnknownDomainKey { .. } => "UnknownDomainKey",
            ChainError::ProofInvalid(_) => "ProofInvalid",
            ChainError::NullifierReused => "NullifierReused",
            ChainError::InsufficientBalance { .. } => "InsufficientBalance",
            ChainError::MalformedAmount(_) => "MalformedAmount",
            ChainError::UnknownCurrency(_) => "UnknownCurrency",
            ChainError::InvalidCurrency(_) => "InvalidCurrency",
            ChainError::InvalidAddress(_) => "InvalidAddress",
            ChainError::InvalidDomain(_) => "InvalidDomain",
            ChainError::ZeroAmount => "ZeroAmount",
            ChainError::NoPool(..) => "NoPool",
            ChainError::DuplicatePool(..) => "DuplicatePool",
            ChainError::InsufficientLiquidity => "InsufficientLiquidity",
            ChainError::MissingValue(_) => "MissingValue",
            ChainError::Snapshot(_) => "Snapshot",
        }
    }

    /// Proof reason code (1 to 8) for `ProofInvalid`.
    pub fn reason_code(&self) -> Option<u8> {
        match self {
            ChainError::ProofInvalid(f) => Some(f.code()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handler {
    Transfer,
    Swap,
}

impl FromStr for Handler {
    type Err = ChainError;

    fn from_str(s: &str) -> Result<Self, ChainError> {
        match s {
            "transfer" => Ok(Handler::Transfer),
            "swap" => Ok(Handler::Swap),
            _ => Err(ChainError::UnknownHandler(s.to_string())),
        }
    }
}

impl fmt::Display for Handler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Handler::Transfer => "transfer",
            Handler::Swap => "swap",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisteredRule {
    pub artifact: VerifierArtifact,
    pub handler: Handler,
}

/// What an accepted transaction did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "handler", rename_all = "lowercase")]
pub enum Effect {
    Transfer {
        from: String,
        to: String,
        currency: String,
        #[serde(with = "amount::decimal")]
        amount: BigUint,
    },
    Swap {
        account: String,
        currency_in: String,
        #[serde(with = "amount::decimal")]
        amount_in: BigUint,
        currency_out: String,
        #[serde(with = "amount::decimal")]
        amount_out: BigUint,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WalletState {
    accounts: BTreeMap<String, BTreeMap<String, BigUint>>,
    keys: KeyRegistry,
    rules: BTreeMap<u64, RegisteredRule>,
    used_nullifiers: BTreeSet<Digest>,
    pools: BTreeMap<(String, String), AmmPool>,
    /// Everything ever brought in per currency: deposits plus initial pool
    /// reserves. A currency is known iff it appears here.
    supply: BTreeMap<String, BigUint>,
}

fn pool_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

fn normalize_address(email: &str) -> Result<String, ChainError> {
    match parse_address(email) {
        Ok(addr) if addr == email.trim().to_ascii_lowercase() => Ok(addr),
        _ => Err(ChainError::InvalidAddress(email.to_string())),
    }
}

impl WalletState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_sds_key(&mut self, domain: &str, selector: &str, key: RsaPublicKey) -> Result<(), ChainError> {
        if domain.is_empty() || !domain.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'.' || b == b'-') {
            return Err(ChainError::InvalidDomain(domain.to_string()));
        }
        if selector.is_empty() || !selector.bytes().all(|b| b.is_ascii_graphic() && b != b';') {
            return Err(ChainError::InvalidDomain(selector.to_string()));
        }
        if !self.keys.insert(domain, selector, key) {
            return Err(ChainError::DuplicateKey {
                domain: domain.to_ascii_lowercase(),
                selector: selector.to_string(),
            });
        }
        Ok(())
    }

    pub fn key_registry(&self) -> &KeyRegistry {
        &self.keys
    }

    pub fn lookup_key(&self, domain: &str, selector: &str) -> Result<&RsaPublicKey, ChainError> {
        self.keys
            .lookup(domain, selector)
            .ok_or_else(|| ChainError::UnknownDomainKey {
                domain: domain.to_string(),
                selector: selector.to_string(),
            })
    }

    pub fn register_rule(&mut self, artifact: VerifierArtifact, handler: Handler) -> Result<(), ChainError> {
        let id = artifact.rule_id();
        if self.rules.contains_key(&id) {
            return Err(ChainError::DuplicateRule(id));
        }
        self.rules.insert(id, RegisteredRule { artifact, handler });
        Ok(())
    }

    pub fn rule(&self, id: u64) -> Option<&RegisteredRule> {
        self.rules.get(&id)
    }

    pub fn rules(&self) -> impl Iterator<Item = (u64, &RegisteredRule)> {
        self.rules.iter().map(|(id, r)| (*id, r))
    }

    pub fn init_pool(&mut self, currency_a: &str, amount_a: &BigUint, currency_b: &str, amount_b: &BigUint) -> Result<(), ChainError> {
        validate_currency(currency_a)?;
        validate_currency(currency_b)?;
        if currency_a == currency_b {
            return Err(ChainError::InvalidCurrency(currency_b.to_string()));
        }
        if amount_a.is_zero() || amount_b.is_zero() {
            return Err(ChainError::ZeroAmount);
        }
        let key = pool_key(currency_a, currency_b);
        if self.pools.contains_key(&key) {
            return Err(ChainError::DuplicatePool(key.0, key.1));
        }
        let (reserve_a, reserve_b) = if currency_a == key.0 {
            (amount_a.clone(), amount_b.clone())
        } else {
            (amount_b.clone(), amount_a.clone())
        };
        *self.supply.entry(currency_a.to_string()).or_default() += amount_a;
        *self.supply.entry(currency_b.to_string()).or_default() += amount_b;
        self.pools.insert(
            key.clone(),
            AmmPool {
                currency_a: key.0,
                currency_b: key.1,
                reserve_a,
                reserve_b,
            },
        );
        Ok(())
    }

    pub fn pool(&self, a: &str, b: &str) -> Option<&AmmPool> {
        self.pools.get(&pool_key(a, b))
    }

    pub fn pools(&self) -> impl Iterator<Item = &AmmPool> {
        self.pools.values()
    }

    pub fn deposit(&mut self, email: &str, currency: &str, amount: &BigUint) -> Result<(), ChainError> {
        let email = normalize_address(email)?;
        validate_currency(currency)?;
        if amount.is_zero() {
            return Err(ChainError::ZeroAmount);
        }
        *self.supply.entry(currency.to_string()).or_default() += amount;
        self.credit(&email, currency, amount);
        Ok(())
    }

    /// Zero for unknown accounts and currencies.
    pub fn balance(&self, email: &str, currency: &str) -> BigUint {
        self.accounts
            .get(&email.to_ascii_lowercase())
            .and_then(|a| a.get(currency))
            .cloned()
            .unwrap_or_default()
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, BigUint>)> {
        self.accounts.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_nullifier_used(&self, nullifier: &Digest) -> bool {
        self.used_nullifiers.contains(nullifier)
    }

    pub fn currencies(&self) -> impl Iterator<Item = &str> {
        self.supply.keys().map(String::as_str)
    }

    /// Total ever deposited (including initial pool reserves).
    pub fn total_supply(&self, currency: &str) -> BigUint {
        self.supply.get(currency).cloned().unwrap_or_default()
    }

    /// Sum over all accounts and pool reserves.
    pub fn circulating(&self, currency: &str) -> BigUint {
        let held: BigUint = self.accounts.values().filter_map(|a| a.get(currency)).sum();
        let pooled: BigUint = self.pools.values().filter_map(|p| p.reserve(currency)).sum();
        held + pooled
    }

    fn credit(&mut self, email: &str, currency: &str, amount: &BigUint) {
        *self
            .accounts
            .entry(email.to_string())
            .or_default()
            .entry(currency.to_string())
            .or_default() += amount;
    }

    /// Caller has checked the balance covers `amount`.
    fn debit(&mut self, email: &str, currency: &str, amount: &BigUint) {
        let bal = self
            .accounts
            .get_mut(email)
            .and_then(|a| a.get_mut(currency))
            .expect("debit of checked balance");
        *bal -= amount;
    }

    /// Verifies a transaction and applies its handler.
    pub fn submit(&mut self, proof: &EmailProof) -> Result<Effect, ChainError> {
        let claim = &proof.claim;
        let rule = self.rules.get(&claim.rule_id).ok_or(ChainError::UnknownRule(claim.rule_id))?;
        let selector = EmailMessage::parse(&proof.witness)
            .ok()
            .and_then(|msg| find_signature(&msg).ok().map(|(_, sig)| sig.selector))
            .ok_or_else(|| ChainError::ProofInvalid(ProofFailure::WitnessMalformed("no readable DKIM-Signature".into())))?;
        let key = self.lookup_key(address_domain(&claim.sender_email), &selector)?;
        check(proof, &rule.artifact, key).map_err(ChainError::ProofInvalid)?;
        if self.used_nullifiers.contains(&proof.nullifier) {
            return Err(ChainError::NullifierReused);
        }
        let effect = match rule.handler {
            Handler::Transfer => self.plan_transfer(&claim.sender_email, &claim.variable_values)?,
            Handler::Swap => self.plan_swap(&claim.sender_email, &claim.variable_values)?,
        };
        self.used_nullifiers.insert(proof.nullifier);
        self.apply(&effect);
        Ok(effect)
    }

    fn value<'a>(values: &'a VariableValues, name: &str) -> Result<&'a str, ChainError> {
        values.get(name).ok_or_else(|| ChainError::MissingValue(name.to_string()))
    }

    fn require_known(&self, currency: &str) -> Result<(), ChainError> {
        validate_currency(currency)?;
        if self.supply.contains_key(currency) {
            Ok(())
        } else {
            Err(ChainError::UnknownCurrency(currency.to_string()))
        }
    }

    fn require_balance(&self, account: &str, currency: &str, amount: &BigUint) -> Result<(), ChainError> {
        if self.balance(account, currency) < *amount {
            return Err(ChainError::InsufficientBalance {
                account: account.to_string(),
                currency: currency.to_string(),
            });
        }
        Ok(())
    }

    /// Moves `A` of `T` from the sender to `Y`.
    fn plan_transfer(&self, sender: &str, values: &VariableValues) -> Result<Effect, ChainError> {
        let amount = parse_amount(Self::value(values, "A")?)?;
        let currency = Self::value(values, "T")?;
        let to = normalize_address(Self::value(values, "Y")?)?;
        self.require_known(currency)?;
        if amount.is_zero() {
            return Err(ChainError::ZeroAmount);
        }
        self.require_balance(sender, currency, &amount)?;
        Ok(Effect::Transfer {
            from: sender.to_string(),
            to,
            currency: currency.to_string(),
            amount,
        })
    }

    /// Swaps `A` of `T1` for `T2` through the pool.
    fn plan_swap(&self, sender: &str, values: &VariableValues) -> Result<Effect, ChainError> {
        let amount_in = parse_amount(Self::value(values, "A")?)?;
        let t1 = Self::value(values, "T1")?;
        let t2 = Self::value(values, "T2")?;
        self.require_known(t1)?;
        self.require_known(t2)?;
        let pool = self.pool(t1, t2).filter(|_| t1 != t2).ok_or_else(|| ChainError::NoPool(t1.to_string(), t2.to_string()))?;
        if amount_in.is_zero() {
            return Err(ChainError::ZeroAmount);
        }
        self.require_balance(sender, t1, &amount_in)?;
        let r_in = pool.reserve(t1).expect("pool holds t1");
        let r_out = pool.reserve(t2).expect("pool holds t2");
        let amount_out = get_amount_out(&amount_in, r_in, r_out);
        if amount_out.is_zero() || amount_out >= *r_out {
            return Err(ChainError::InsufficientLiquidity);
        }
        Ok(Effect::Swap {
            account: sender.to_string(),
            currency_in: t1.to_string(),
            amount_in,
            currency_out: t2.to_string(),
            amount_out,
        })
    }

    fn apply(&mut self, effect: &Effect) {
        match effect {
            Effect::Transfer { from, to, currency, amount } => {
                self.debit(from, currency, amount);
                self.credit(to, currency, amount);
            }
            Effect::Swap {
                account,
                currency_in,
                amount_in,
                currency_out,
                amount_out,
            } => {
                self.debit(account, currency_in, amount_in);
                self.credit(account, currency_out, amount_out);
                let pool = self.pools.get_mut(&pool_key(currency_in, currency_out)).expect("planned pool");
                *pool.reserve_mut(currency_in).expect("pool side") += amount_in;
                *pool.reserve_mut(currency_out).expect("pool side") -= amount_out;
            }
        }
    }

    /// Canonical JSON snapshot: sorted keys, amounts as decimal base-unit
    /// strings, artifacts as hex of their binary export.
    pub fn to_snapshot(&self) -> String {
        let snapshot = Snapshot {
            accounts: self
                .accounts
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|(c, a)| (c.clone(), a.to_str_radix(10))).collect()))
                .collect(),
            keys: self.keys.clone(),
            nullifiers: self.used_nullifiers.iter().map(|n| to_hex(n)).collect(),
            pools: self.pools.values().cloned().collect(),
            rules: self
                .rules
                .iter()
                .map(|(id, r)| SnapshotRule {
                    rule_id: *id,
                    handler: r.handler,
                    artifact: to_hex(&r.artifact.export()),
                })
                .collect(),
            supply: self.supply.iter().map(|(c, a)| (c.clone(), a.to_str_radix(10))).collect(),
        };
        let value = serde_json::to_value(&snapshot).expect("snapshot serializes");
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }

    pub fn from_snapshot(text: &str) -> Result<Self, ChainError> {
        let bad = |m: String| ChainError::Snapshot(m);
        let snap: Snapshot = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let mut state = WalletState {
            keys: snap.keys,
            ..Self::default()
        };
        for (email, balances) in snap.accounts {
            let mut map = BTreeMap::new();
            for (currency, amount) in balances {
                validate_currency(&currency)?;
                map.insert(currency, parse_base_units(&amount)?);
            }
            state.accounts.insert(normalize_address(&email)?, map);
        }
        for n in snap.nullifiers {
            let digest = from_hex(&n)
                .and_then(|v| Digest::try_from(v).ok())
                .ok_or_else(|| bad(format!("bad nullifier {n}")))?;
            state.used_nullifiers.insert(digest);
        }
        for pool in snap.pools {
            if pool.currency_a >= pool.currency_b {
                return Err(bad("pool currencies out of order".into()));
            }
            state.pools.insert((pool.currency_a.clone(), pool.currency_b.clone()), pool);
        }
        for rule in snap.rules {
            let bytes = from_hex(&rule.artifact).ok_or_else(|| bad("artifact is not hex".into()))?;
            let artifact = VerifierArtifact::import(&bytes).map_err(|e| bad(e.to_string()))?;
            if artifact.rule_id() != rule.rule_id {
                return Err(bad(format!("rule {} carries artifact for {}", rule.rule_id, artifact.rule_id())));
            }
            state.register_rule(artifact, rule.handler)?;
        }
        for (currency, amount) in snap.supply {
            state.supply.insert(currency, parse_base_units(&amount)?);
        }
        Ok(state)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Snapshot {
    accounts: BTreeMap<String, BTreeMap<String, String>>,
    keys: KeyRegistry,
    nullifiers: Vec<String>,
    pools: Vec<AmmPool>,
    rules: Vec<SnapshotRule>,
    supply: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotRule {
    rule_id: u64,
    handler: Handler,
    artifact: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eth(text: &str) -> BigUint {
        parse_amount(text).unwrap()
    }

    #[test]
    fn deposits_accumulate() {
        let mut s = WalletState::new();
        s.deposit("alice@example.com", "ETH", &eth("1")).unwrap();
        s.deposit("Alice@Example.com", "ETH", &eth("1")).unwrap();
        assert_eq!(s.balance("alice@example.com", "ETH"), eth("2"));
        assert_eq!(s.deposit("alice@example.com", "ETH", &BigUint::zero()), Err(ChainError::ZeroAmount));
        assert_eq!(s.balance("nobody@example.com", "ETH"), BigUint::zero());
        assert!(s.deposit("not-an-address", "ETH", &eth("1")).is_err());
    }

    #[test]
    fn duplicate_key() {
        let (k, _) = crate::crypto::keygen(1024, b"chain-unit").unwrap();
        let mut s = WalletState::new();
        s.register_sds_key("example.com", "s1", k.clone()).unwrap();
        assert_eq!(s.lookup_key("example.com", "s1").unwrap(), &k);
        assert!(matches!(s.register_sds_key("example.com", "s1", k.clone()), Err(ChainError::DuplicateKey { .. })));
        assert!(matches!(s.lookup_key("other.org", "s1"), Err(ChainError::UnknownDomainKey { .. })));
    }

    #[test]
    fn handler_names() {
        assert_eq!("swap".parse::<Handler>().unwrap(), Handler::Swap);
        assert_eq!("mint".parse::<Handler>(), Err(ChainError::UnknownHandler("mint".into())));
    }

    #[test]
    fn transfer_plan_checks() {
        let mut s = WalletState::new();
        s.deposit("alice@example.com", "ETH", &eth("0.01")).unwrap();
        let vals = |a: &str, t: &str| -> VariableValues { [("A", a), ("T", t), ("Y", "bob@d.org")].into_iter().collect() };
        let e = s.plan_transfer("alice@example.com", &vals("0.005", "ETH")).unwrap();
        s.apply(&e);
        assert_eq!(s.balance("alice@example.com", "ETH"), eth("0.005"));
        assert_eq!(s.balance("bob@d.org", "ETH"), eth("0.005"));
        assert!(matches!(s.plan_transfer("alice@example.com", &vals("1", "ETH")), Err(ChainError::InsufficientBalance { .. })));
        assert!(matches!(s.plan_transfer("alice@example.com", &vals("1", "DAI")), Err(ChainError::UnknownCurrency(_))));
        assert!(matches!(s.plan_transfer("alice@example.com", &vals("1.x", "ETH")), Err(ChainError::MalformedAmount(_))));
        let self_send = [("A", "0.001"), ("T", "ETH"), ("Y", "alice@example.com")].into_iter().collect();
        let e = s.plan_transfer("alice@example.com", &self_send).unwrap();
        s.apply(&e);
        assert_eq!(s.balance("alice@example.com", "ETH"), eth("0.005"));
    }

    #[test]
    fn swap_plan_checks() {
        let mut s = WalletState::new();
        s.deposit("bob@d.org", "ETH", &eth("0.005")).unwrap();
        let vals: VariableValues = [("A", "0.005"), ("T1", "ETH"), ("T2", "DAI")].into_iter().collect();
        s.deposit("carol@d.org", "DAI", &eth("1")).unwrap();
        assert!(matches!(s.plan_swap("bob@d.org", &vals), Err(ChainError::NoPool(..))));
        s.init_pool("ETH", &eth("1"), "DAI", &eth("2000")).unwrap();
        let before = s.pool("DAI", "ETH").unwrap().product();
        let e = s.plan_swap("bob@d.org", &vals).unwrap();
        s.apply(&e);
        assert!(s.pool("ETH", "DAI").unwrap().product() > before);
        assert_eq!(s.balance("bob@d.org", "ETH"), BigUint::zero());
        for c in ["ETH", "DAI"] {
            assert_eq!(s.circulating(c), s.total_supply(c));
        }
        let zero: VariableValues = [("A", "0"), ("T1", "ETH"), ("T2", "DAI")].into_iter().collect();
        assert_eq!(s.plan_swap("bob@d.org", &zero), Err(ChainError::ZeroAmount));
    }

    #[test]
    fn snapshot_round_trip() {
        let mut s = WalletState::new();
        s.deposit("alice@example.com", "ETH", &eth("0.01")).unwrap();
        s.init_pool("ETH", &eth("1"), "DAI", &eth("2000")).unwrap();
        s.used_nullifiers.insert([7; 32]);
        let text = s.to_snapshot();
        let back = WalletState::from_snapshot(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_snapshot(), text);
    }
}
