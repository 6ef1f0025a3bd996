//! DFA acceptance against the backtracking oracle.

mod common;

use common::oracle::Backtracker;
use common::{all_strings, oracle_pattern, random_inputs, rule1, rule2, template, RULE1_JSON, RULE2_JSON, WEI_REGEX};
use email_wallet::vrm::{compile, parse_regex, Dfa, RegexRule};
use proptest::prelude::*;

fn disagreements(dfa: &Dfa, oracle: &Backtracker, inputs: impl Iterator<Item = Vec<u8>>) -> (usize, usize, Vec<String>) {
    let mut checked = 0;
    let mut accepted = 0;
    let mut bad = Vec::new();
    for s in inputs {
        checked += 1;
        let want = oracle.is_match(&s);
        accepted += want as usize;
        if dfa.accepts(&s) != want && bad.len() < 5 {
            bad.push(String::from_utf8_lossy(&s).into_owned());
        }
    }
    (checked, accepted, bad)
}

#[test]
fn wei_regex_short_strings() {
    let dfa = compile(&parse_regex(WEI_REGEX).unwrap()).unwrap();
    let oracle = Backtracker::new(WEI_REGEX);
    let (n, _, bad) = disagreements(&dfa, &oracle, all_strings(b"Tr 1w.Ex", 6));
    assert_eq!(n, (0..=6).map(|l| 8usize.pow(l)).sum::<usize>());
    assert!(bad.is_empty(), "{bad:?}");
    assert!(dfa.accepts(b"Transfer 42 wei Ether."));
}

/// Every string of up to `width` bytes over `alphabet` substituted into one
/// slot of an accepted sample; the rest of the sample stays fixed.
fn slot_variants<'a>(sample: &'a str, slot: &'a str, alphabet: &'a [u8], width: usize) -> impl Iterator<Item = Vec<u8>> + 'a {
    let at = sample.find(slot).unwrap();
    all_strings(alphabet, width).map(move |fill| {
        let mut s = sample.as_bytes()[..at].to_vec();
        s.extend(fill);
        s.extend(&sample.as_bytes()[at + slot.len()..]);
        s
    })
}

fn check_slots(rule: &RegexRule, json: &str, sample: &str, slots: &[(&str, &[u8])]) {
    let oracle = Backtracker::new(&oracle_pattern(&template(json)));
    let dfa = rule.artifact().template_dfa();
    assert!(oracle.is_match(sample.as_bytes()) && dfa.accepts(sample.as_bytes()));
    for (slot, alphabet) in slots {
        let (n, accepted, bad) = disagreements(dfa, &oracle, slot_variants(sample, slot, alphabet, 5));
        assert!(bad.is_empty(), "slot {slot}: {bad:?}");
        assert!(accepted > 0 && accepted < n, "slot {slot}: {accepted}/{n} accepted");
        for s in slot_variants(sample, slot, alphabet, 4) {
            let text = String::from_utf8(s).unwrap();
            match rule.match_and_extract(&text) {
                Ok(values) => {
                    assert!(oracle.is_match(text.as_bytes()), "{text}");
                    assert_eq!(rule.artifact().reconstruct(&values).unwrap(), text);
                    assert!(rule.reconstruct_and_verify(&values).unwrap());
                }
                Err(_) => assert!(!oracle.is_match(text.as_bytes()), "{text}"),
            }
        }
    }
}

#[test]
fn rule1_slots_exhaustive() {
    check_slots(
        rule1(),
        RULE1_JSON,
        "Transfer 0.005 ETH to bob@d.org",
        &[
            ("0.005", b"0.9 aE"),
            ("ETH", b"EHa1 ."),
            ("bob@d.org", b"b@.-_ A"),
            (" to ", b" to@."),
        ],
    );
}

#[test]
fn rule2_slots_exhaustive() {
    check_slots(
        rule2(),
        RULE2_JSON,
        "Swap 0.005 ETH to DAI via Uniswap",
        &[("0.005", b"05. a"), ("ETH", b"ETa1 "), ("DAI", b"DAI t "), (" via", b" via")],
    );
}

#[test]
fn templates_short_strings() {
    for (rule, json, alphabet) in [(rule1(), RULE1_JSON, &b"Tr 0.E@b"[..]), (rule2(), RULE2_JSON, b"Sw 0.EDv")] {
        let oracle = Backtracker::new(&oracle_pattern(&template(json)));
        let (_, _, bad) = disagreements(rule.artifact().template_dfa(), &oracle, all_strings(alphabet, 6));
        assert!(bad.is_empty(), "{bad:?}");
    }
}

#[test]
fn random_strings_agree() {
    let wei = compile(&parse_regex(WEI_REGEX).unwrap()).unwrap();
    let cases: [(&Dfa, String, &str, usize); 3] = [
        (&wei, WEI_REGEX.to_string(), "Transfer 12345 wei Ether.", 64),
        (
            rule1().artifact().template_dfa(),
            oracle_pattern(&template(RULE1_JSON)),
            "Transfer 10.25 DAI to carol.b@mail.example.org",
            rule1().max_len,
        ),
        (
            rule2().artifact().template_dfa(),
            oracle_pattern(&template(RULE2_JSON)),
            "Swap 3.000000000000000001 DAI to ETH via Uniswap",
            rule2().max_len,
        ),
    ];
    for (i, (dfa, pattern, sample, max_len)) in cases.into_iter().enumerate() {
        let oracle = Backtracker::new(&pattern);
        let inputs = random_inputs(i as u64, sample, max_len, 1000);
        let (n, accepted, bad) = disagreements(dfa, &oracle, inputs.into_iter());
        assert_eq!(n, 1000);
        assert!(bad.is_empty(), "{pattern}: {bad:?}");
        assert!(accepted > 50 && accepted < 950, "{pattern}: {accepted} accepted");
    }
}

#[test]
fn exported_artifact_behaves_identically() {
    let original = rule1().artifact();
    let imported = email_wallet::vrm::VerifierArtifact::import(&original.export()).unwrap();
    for s in random_inputs(99, "Transfer 1 ETH to x@y.z", 256, 50) {
        let text = String::from_utf8(s).unwrap();
        assert_eq!(original.match_and_extract(&text), imported.match_and_extract(&text));
        assert_eq!(original.template_dfa().accepts(text.as_bytes()), imported.template_dfa().accepts(text.as_bytes()));
    }
}

fn regex_strategy() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("a".to_string()),
        Just("b".to_string()),
        Just("c".to_string()),
        Just("[ab]".to_string()),
        Just("[^a]".to_string()),
        Just(r"\d".to_string()),
        Just(".".to_string()),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(|v| v.concat()),
            prop::collection::vec(inner.clone(), 2..4).prop_map(|v| format!("({})", v.join("|"))),
            (inner.clone(), prop_oneof![Just("*"), Just("+"), Just("?"), Just("{2}"), Just("{1,3}"), Just("{0,2}")])
                .prop_map(|(r, q)| format!("({r}){q}")),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_regexes_agree(pattern in regex_strategy(), inputs in prop::collection::vec(prop::collection::vec(prop::sample::select(b"abc1 ".to_vec()), 0..9), 40)) {
        let dfa = compile(&parse_regex(&pattern).unwrap()).unwrap();
        let oracle = Backtracker::new(&pattern);
        for s in inputs {
            prop_assert_eq!(dfa.accepts(&s), oracle.is_match(&s), "{:?} on {:?}", pattern, String::from_utf8_lossy(&s));
        }
    }

    #[test]
    fn minimal_form_is_canonical(pattern in regex_strategy()) {
        let once = compile(&parse_regex(&pattern).unwrap()).unwrap();
        let twice = compile(&parse_regex(&format!("({pattern})|({pattern})")).unwrap()).unwrap();
        prop_assert_eq!(once, twice);
    }
}
