//! Fixtures shared by the integration tests.

#![allow(dead_code)]

pub mod oracle;

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};

use email_wallet::aggregator::RuleSet;
use email_wallet::chain::{parse_amount, Handler, WalletState};
use email_wallet::crypto::{keygen, RsaPrivateKey, RsaPublicKey};
use email_wallet::dkim::dkim_sign;
use email_wallet::email::{CanonicalizationMode, EmailMessage};
use email_wallet::vrm::{RegexRule, RuleTemplate, VerifierArtifact};

pub const RULE1_JSON: &str = include_str!("../../../../rules/rule1.json");
pub const RULE2_JSON: &str = include_str!("../../../../rules/rule2.json");

/// The regex used to illustrate fixed and variable parts.
pub const WEI_REGEX: &str = r"Transfer \d{1,20} wei Ether\.";

pub fn template(json: &str) -> RuleTemplate {
    RuleTemplate::from_json(json).unwrap()
}

pub fn rule1() -> &'static RegexRule {
    static R: OnceLock<RegexRule> = OnceLock::new();
    R.get_or_init(|| RegexRule::compile(&template(RULE1_JSON)).unwrap())
}

pub fn rule2() -> &'static RegexRule {
    static R: OnceLock<RegexRule> = OnceLock::new();
    R.get_or_init(|| RegexRule::compile(&template(RULE2_JSON)).unwrap())
}

pub fn rule_set() -> RuleSet {
    [rule1().artifact().clone(), rule2().artifact().clone()].into_iter().collect()
}

/// Whole-template pattern built independently of the library: fixed parts
/// quoted for the oracle, variables wrapped in groups.
pub fn oracle_pattern(t: &RuleTemplate) -> String {
    let json: serde_json::Value = serde_json::to_value(t).unwrap();
    json["segments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| match (s.get("fixed"), s.get("regex")) {
            (Some(f), _) => oracle::quote(f.as_str().unwrap()),
            (_, Some(r)) => format!("({})", r.as_str().unwrap()),
            _ => unreachable!(),
        })
        .collect()
}

pub struct Sds {
    pub domain: &'static str,
    pub selector: &'static str,
    pub public: RsaPublicKey,
    pub private: RsaPrivateKey,
}

impl Sds {
    pub fn sign(&self, from: &str, subject: &str, body: &str) -> Vec<u8> {
        self.sign_with(from, subject, body, CanonicalizationMode::RELAXED)
    }

    pub fn sign_with(&self, from: &str, subject: &str, body: &str, mode: CanonicalizationMode) -> Vec<u8> {
        let raw = format!("From: {from}\r\nTo: relay@aggregator.net\r\nSubject: {subject}\r\n\r\n{body}\r\n");
        let msg = EmailMessage::parse(raw.as_bytes()).unwrap();
        dkim_sign(&msg, &self.private, self.domain, self.selector, mode)
            .unwrap()
            .to_bytes()
    }
}

fn sds(domain: &'static str, seed: &[u8], bits: u32) -> Sds {
    let (public, private) = keygen(bits, seed).unwrap();
    Sds {
        domain,
        selector: "s1",
        public,
        private,
    }
}

/// Alice's mail provider (2048-bit key).
pub fn example_com() -> &'static Sds {
    static S: OnceLock<Sds> = OnceLock::new();
    S.get_or_init(|| sds("example.com", b"example.com sds", 2048))
}

/// Bob's mail provider (2048-bit key).
pub fn d_org() -> &'static Sds {
    static S: OnceLock<Sds> = OnceLock::new();
    S.get_or_init(|| sds("d.org", b"d.org sds", 2048))
}

/// Smaller keys for tests that sign hundreds of emails.
pub fn fast_sds() -> &'static [Sds; 2] {
    static S: OnceLock<[Sds; 2]> = OnceLock::new();
    S.get_or_init(|| [sds("one.test", b"one.test sds", 1024), sds("two.test", b"two.test sds", 1024)])
}

pub fn units(text: &str) -> num_bigint::BigUint {
    parse_amount(text).unwrap()
}

pub fn register_rules(state: &mut WalletState) {
    state.register_rule(rule1().artifact().clone(), Handler::Transfer).unwrap();
    state.register_rule(rule2().artifact().clone(), Handler::Swap).unwrap();
}

/// Keys and rules registered, a 1 ETH / 2000 DAI pool, and Alice's
/// 0.01 ETH deposit.
pub fn scenario_state() -> WalletState {
    let mut state = WalletState::new();
    for s in [example_com(), d_org()] {
        state.register_sds_key(s.domain, s.selector, s.public.clone()).unwrap();
    }
    register_rules(&mut state);
    state.init_pool("ETH", &units("1"), "DAI", &units("2000")).unwrap();
    state.deposit("alice@example.com", "ETH", &units("0.01")).unwrap();
    state
}

pub fn alice_transfer() -> Vec<u8> {
    example_com().sign("Alice <alice@example.com>", "1", "Transfer 0.005 ETH to bob@d.org")
}

pub fn bob_swap() -> Vec<u8> {
    d_org().sign("bob@d.org", "2", "Swap 0.005 ETH to DAI via Uniswap")
}

pub fn artifact_for(id: u64) -> &'static VerifierArtifact {
    match id {
        1 => rule1().artifact(),
        2 => rule2().artifact(),
        _ => panic!("no rule {id}"),
    }
}

/// Decimal token string for a base-unit amount, trailing zeros trimmed.
pub fn decimal(v: &num_bigint::BigUint) -> String {
    let s = email_wallet::chain::format_amount(v);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub const USERS: [(&str, usize); 4] = [
    ("alice@one.test", 0),
    ("carol@one.test", 0),
    ("bob@two.test", 1),
    ("dave@two.test", 1),
];

/// A state for random-transaction tests: both fast keys, both rules, an
/// ETH/DAI pool and some deposits.
pub fn fuzz_state() -> WalletState {
    let mut state = WalletState::new();
    for s in fast_sds() {
        state.register_sds_key(s.domain, s.selector, s.public.clone()).unwrap();
    }
    register_rules(&mut state);
    state.init_pool("ETH", &units("10"), "DAI", &units("20000")).unwrap();
    for (i, (user, _)) in USERS.iter().enumerate() {
        state.deposit(user, "ETH", &units(&format!("{}", i + 1))).unwrap();
        state.deposit(user, "DAI", &units(&format!("{}", 1000 * (i + 1)))).unwrap();
    }
    state
}

/// Random signed emails, valid and invalid. Replays reuse earlier outputs
/// verbatim.
pub fn random_emails(rng: &mut impl rand::Rng, count: usize) -> Vec<Vec<u8>> {
    use rand::seq::SliceRandom;
    let mut out: Vec<Vec<u8>> = Vec::with_capacity(count);
    let currencies = ["ETH", "DAI"];
    while out.len() < count {
        let (user, sds_idx) = *USERS.choose(rng).unwrap();
        let sds = &fast_sds()[sds_idx];
        // amounts up to ~2 whole tokens, sometimes more than the balance
        let raw: u128 = rng.gen_range(1..2_500_000_000_000_000_000u128);
        let amount = decimal(&num_bigint::BigUint::from(raw));
        let cur = *currencies.choose(rng).unwrap();
        let other = if cur == "ETH" { "DAI" } else { "ETH" };
        let email = match rng.gen_range(0..10) {
            0..=3 => {
                let (to, _) = USERS.choose(rng).unwrap();
                sds.sign(user, "1", &format!("Transfer {amount} {cur} to {to}"))
            }
            4..=5 => sds.sign(user, "2", &format!("Swap {amount} {cur} to {other} via Uniswap")),
            6 if !out.is_empty() => out.choose(rng).unwrap().clone(),
            7 => {
                let mut e = sds.sign(user, "1", &format!("Transfer {amount} {cur} to alice@one.test"));
                let at = rng.gen_range(0..e.len());
                e[at] ^= 1 << rng.gen_range(0..7);
                e
            }
            8 => {
                // signed by the other provider: a forged From domain
                let forger = &fast_sds()[1 - sds_idx];
                forger.sign(user, "1", &format!("Transfer {amount} {cur} to dave@two.test"))
            }
            _ => sds.sign(user, "1", &format!("Send {amount} {cur} to bob@two.test")),
        };
        out.push(email);
    }
    out
}

/// Every string over `alphabet` of length 0 to `max_len`.
pub fn all_strings(alphabet: &[u8], max_len: usize) -> impl Iterator<Item = Vec<u8>> + '_ {
    (0..=max_len).flat_map(move |len| {
        let total = alphabet.len().pow(len as u32);
        (0..total).map(move |mut idx| {
            let mut s = Vec::with_capacity(len);
            for _ in 0..len {
                s.push(alphabet[idx % alphabet.len()]);
                idx /= alphabet.len();
            }
            s
        })
    })
}

/// Accepted samples with a few random edits, plus some uniform noise.
pub fn random_inputs(seed: u64, sample: &str, max_len: usize, count: usize) -> Vec<Vec<u8>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<u8> = sample.bytes().chain(b"0123456789.@ AZaz-_+%\t".iter().copied()).collect();
    (0..count)
        .map(|_| {
            if rng.gen_bool(0.15) {
                let len = rng.gen_range(0..=max_len);
                return (0..len).map(|_| rng.gen_range(0x20..0x7f)).collect();
            }
            let mut s = sample.as_bytes().to_vec();
            for _ in 0..rng.gen_range(0..4) {
                let at = rng.gen_range(0..=s.len());
                let c = pool[rng.gen_range(0..pool.len())];
                match rng.gen_range(0..4) {
                    0 if at < s.len() => {
                        s.remove(at);
                    }
                    1 if at < s.len() => s[at] = c,
                    2 => {
                        // duplicate a run, which stresses counted repetition
                        let end = (at + rng.gen_range(1..8)).min(s.len());
                        let run = s[at..end].to_vec();
                        s.splice(at..at, run);
                    }
                    _ => s.insert(at, c),
                }
            }
            s.truncate(max_len);
            s
        })
        .collect()
}
