//! A contract wallet driven by DKIM-signed emails.
//!
//! Users authorize transactions by sending mail whose body matches a
//! registered rule, e.g. `Transfer 0.005 ETH to bob@d.org`. An untrusted
//! aggregator turns each signed email into a proof; the wallet checks the
//! proof against the sender domain's registered DKIM key and the rule's
//! verifier artifact, then runs the rule's handler.
//!
//! The guide in `book/` walks through each module; its examples run as
//! doctests of this crate.

pub mod aggregator;
pub mod chain;
pub mod crypto;
pub mod dkim;
pub mod email;
pub mod proof;
pub mod vrm;

// The book's code blocks run as doctests, one module per chapter so a
// failure points at its chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/emails.md")]
    mod emails {}
    #[doc = include_str!("../../../book/src/rules.md")]
    mod rules {}
    #[doc = include_str!("../../../book/src/proofs.md")]
    mod proofs {}
    #[doc = include_str!("../../../book/src/wallet.md")]
    mod wallet {}
    #[doc = include_str!("../../../book/src/aggregator.md")]
    mod aggregator {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
