//! Proof generation and verification properties.

mod common;

use ::base64::Engine as _;
use common::{d_org, example_com, fast_sds, rule1, rule2, USERS};
use email_wallet::crypto::{keygen, sha256};
use email_wallet::dkim::{dkim_verify, DkimError, KeyRegistry};
use email_wallet::email::EmailMessage;
use email_wallet::proof::{check, compute_nullifier, prove, verify, EmailProof, ProofError, ProofFailure};
use email_wallet::vrm::VrmError;
use proptest::prelude::*;

fn registry() -> KeyRegistry {
    let mut r = KeyRegistry::new();
    for s in fast_sds().iter().chain([example_com(), d_org()]) {
        r.insert(s.domain, s.selector, s.public.clone());
    }
    r
}

/// Nullifier recomputed from the raw text: the `b=` tag of the
/// DKIM-Signature header, whitespace dropped, decoded by the `base64` crate.
fn raw_nullifier(witness: &[u8]) -> [u8; 32] {
    let text = String::from_utf8_lossy(witness);
    let start = text.find("DKIM-Signature:").unwrap();
    // the header runs until a line that does not start with WSP
    let mut end = start;
    loop {
        end += text[end..].find("\r\n").unwrap() + 2;
        if !text[end..].starts_with([' ', '\t']) {
            break;
        }
    }
    let header = &text[start..end];
    let b = header
        .split(';')
        .map(|t| t.trim())
        .find_map(|t| t.strip_prefix("b="))
        .unwrap();
    let b: String = b.chars().filter(|c| !c.is_whitespace()).collect();
    let sig = ::base64::engine::general_purpose::STANDARD.decode(b).unwrap();
    let mut out = [0; 32];
    out.copy_from_slice(&sha256(&sig));
    out
}

fn failure(proof: &EmailProof, key: &email_wallet::crypto::RsaPublicKey) -> Option<u8> {
    check(proof, rule1().artifact(), key).err().map(|f| f.code())
}

fn transfer_proof() -> EmailProof {
    let raw = common::alice_transfer();
    prove(&raw, rule1().artifact(), &registry()).unwrap()
}

#[test]
fn honest_proof_verifies() {
    let proof = transfer_proof();
    assert!(verify(&proof, rule1().artifact(), &example_com().public));
    assert_eq!(proof.claim.sender_email, "alice@example.com");
    assert_eq!(proof.claim.rule_id, 1);
    assert_eq!(proof.claim.variable_values.get("A"), Some("0.005"));
    assert_eq!(proof.claim.variable_values.get("T"), Some("ETH"));
    assert_eq!(proof.claim.variable_values.get("Y"), Some("bob@d.org"));
    assert_eq!(proof.nullifier, raw_nullifier(&proof.witness));
    assert_eq!(compute_nullifier(&proof.witness).unwrap(), proof.nullifier);
    assert_eq!(EmailProof::from_bytes(&proof.to_bytes()).unwrap(), proof);
}

#[test]
fn verification_is_pure() {
    let proof = transfer_proof();
    let before = proof.to_bytes();
    let results: Vec<bool> = (0..3).map(|_| verify(&proof, rule1().artifact(), &example_com().public)).collect();
    assert_eq!(results, [true; 3]);
    assert_eq!(proof.to_bytes(), before);
}

#[test]
fn each_check_reports_its_code() {
    let key = &example_com().public;
    let good = transfer_proof();

    let mut p = good.clone();
    p.witness = b"not an email".to_vec();
    assert_eq!(failure(&p, key), Some(1));

    let mut p = good.clone();
    let text = String::from_utf8(p.witness.clone()).unwrap().replace("0.005 ETH", "0.006 ETH");
    p.witness = text.into_bytes();
    assert_eq!(failure(&p, key), Some(2));

    let mut p = good.clone();
    let text = String::from_utf8(p.witness.clone()).unwrap().replace("To: relay@", "To: other@");
    p.witness = text.into_bytes();
    assert_eq!(failure(&p, key), Some(3));

    // signed by a key the wallet does not have registered for the domain
    let (rogue_pub, rogue_priv) = keygen(1024, b"rogue").unwrap();
    let rogue = common::Sds {
        domain: "example.com",
        selector: "s1",
        public: rogue_pub.clone(),
        private: rogue_priv,
    };
    let mut keys = KeyRegistry::new();
    keys.insert("example.com", "s1", rogue_pub);
    let forged = prove(&rogue.sign("alice@example.com", "1", "Transfer 1 ETH to eve@x.io"), rule1().artifact(), &keys).unwrap();
    assert_eq!(failure(&forged, key), Some(4));

    let mut p = good.clone();
    p.claim.sender_email = "mallory@example.com".into();
    assert_eq!(failure(&p, key), Some(5));

    let mut p = good.clone();
    p.claim.variable_values.insert("A", "5");
    assert_eq!(failure(&p, key), Some(6));

    let mut p = good.clone();
    p.claim.rule_id = 2;
    assert_eq!(check(&p, rule2().artifact(), key).unwrap_err().code(), 6);

    let long = example_com().sign("alice@example.com", "1", &format!("Transfer 1 ETH to {}@x.io", "a".repeat(300)));
    let mut p = good.clone();
    p.witness = long;
    p.nullifier = raw_nullifier(&p.witness);
    assert!(matches!(check(&p, rule1().artifact(), key), Err(ProofFailure::BodyTooLong { .. })));

    let mut p = good.clone();
    p.nullifier[0] ^= 1;
    assert_eq!(failure(&p, key), Some(8));
}

#[test]
fn prove_refuses_bad_inputs() {
    let reg = registry();
    let unsigned = b"From: a@one.test\r\nSubject: 1\r\n\r\nTransfer 1 ETH to b@two.test\r\n";
    assert_eq!(
        prove(unsigned, rule1().artifact(), &reg).unwrap_err(),
        ProofError::Dkim(DkimError::NoSignature)
    );
    let raw = fast_sds()[0].sign("a@one.test", "1", "Send 1 ETH to b@two.test");
    assert!(matches!(
        prove(&raw, rule1().artifact(), &reg).unwrap_err(),
        ProofError::Vrm(VrmError::NoMatch { .. })
    ));
    let raw = fast_sds()[0].sign("a@one.test", "2", "Transfer 1 ETH to b@two.test");
    assert_eq!(
        prove(&raw, rule1().artifact(), &reg).unwrap_err(),
        ProofError::RuleMismatch { subject: 2, artifact: 1 }
    );
    let raw = fast_sds()[1].sign("a@one.test", "1", "Transfer 1 ETH to b@two.test");
    assert!(matches!(prove(&raw, rule1().artifact(), &reg).unwrap_err(), ProofError::Dkim(DkimError::DomainMismatch { .. })));
}

fn transfer_body() -> impl Strategy<Value = (usize, String)> {
    (
        0..USERS.len(),
        "[1-9][0-9]{0,5}(\\.[0-9]{1,18})?",
        prop::sample::select(vec!["ETH", "DAI", "USDC", "WBTC"]),
        "[a-z0-9._+-]{1,12}@[a-z0-9-]{1,10}\\.[a-z]{2,4}",
    )
        .prop_map(|(u, a, t, y)| (u, format!("Transfer {a} {t} to {y}")))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Whatever the prover claims is exactly what an independent reading
    /// of the witness gives.
    #[test]
    fn claims_match_independent_reading((user, body) in transfer_body()) {
        let (from, idx) = USERS[user];
        let sds = &fast_sds()[idx];
        let raw = sds.sign(from, "1", &body);
        let proof = prove(&raw, rule1().artifact(), &registry()).unwrap();
        prop_assert!(verify(&proof, rule1().artifact(), &sds.public));

        let msg = EmailMessage::parse(&raw).unwrap();
        let verified = dkim_verify(&msg, &registry()).unwrap();
        prop_assert_eq!(&proof.claim.sender_email, &verified.sender);
        prop_assert_eq!(&proof.claim.sender_email, from);
        let values = rule1().match_and_extract(&body).unwrap();
        prop_assert_eq!(&proof.claim.variable_values, &values);
        prop_assert_eq!(rule1().artifact().reconstruct(&values).unwrap(), body);
        prop_assert_eq!(proof.nullifier, raw_nullifier(&raw));
    }

    /// A single-byte change to the witness is either rejected or is a
    /// DKIM-equivalent rewrite (relaxed canonicalization ignores header
    /// name case and collapses whitespace). In the second case the claim
    /// and nullifier are unchanged, so nothing new is authorized.
    #[test]
    fn witness_mutations_authorize_nothing_new(at in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let good = transfer_proof();
        let mut p = good.clone();
        let i = at.index(p.witness.len());
        p.witness[i] ^= flip;
        if verify(&p, rule1().artifact(), &example_com().public) {
            let reproved = prove(&p.witness, rule1().artifact(), &registry()).unwrap();
            prop_assert_eq!(&reproved.claim, &good.claim);
            prop_assert_eq!(reproved.nullifier, good.nullifier);
        }
    }
}
