//! `ewallet`: key generation, SDS signing, rule compilation, wallet
//! administration and aggregation runs.
//!
//! Exit codes: 0 success, 1 internal or I/O error, 2 usage or validation
//! error, 3 verification failure, 4 replay (reused nullifier or a log that
//! does not replay to the stored state).

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use email_wallet::aggregator::{self, AggregatorConfig, AggregatorError};
use email_wallet::chain::{format_amount, parse_amount, ChainError, Handler, Receipt, Store, StoreError};
use email_wallet::crypto::{keygen, RsaPrivateKey, RsaPublicKey};
use email_wallet::dkim::{dkim_sign, DkimError};
use email_wallet::email::{CanonicalizationMode, EmailError, EmailMessage};
use email_wallet::vrm::{RegexRule, RuleTemplate, VerifierArtifact};

const INTERNAL: u8 = 1;
const USAGE: u8 = 2;
const VERIFICATION: u8 = 3;
const REPLAY: u8 = 4;

#[derive(Parser)]
#[command(name = "ewallet", version, about = "Email-driven contract wallet simulator")]
struct Cli {
    /// Wallet state snapshot; the log and lock live beside it.
    #[arg(long, global = true)]
    state: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic RSA key pair for a sender domain.
    Keygen {
        #[arg(long)]
        domain: String,
        #[arg(long)]
        selector: String,
        #[arg(long)]
        seed: String,
        /// Output prefix; writes <out>.pub and <out>.priv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2048)]
        bits: u32,
    },
    /// Sign an email as its sender domain server would.
    SdsSign {
        #[arg(long = "in")]
        input: PathBuf,
        /// Private key file.
        #[arg(long)]
        key: PathBuf,
        /// Defaults to the domain recorded in the key file.
        #[arg(long)]
        domain: Option<String>,
        /// Defaults to the selector recorded in the key file.
        #[arg(long)]
        selector: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "relaxed/relaxed")]
        canon: String,
    },
    /// Compile a rule template into a verifier artifact.
    RuleCompile {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Administer or query the wallet state.
    #[command(subcommand)]
    Chain(ChainCommand),
    /// Relay every email in an inbox directory.
    Aggregate {
        #[arg(long)]
        inbox: PathBuf,
        /// Verifier artifacts the aggregator proves against.
        #[arg(long, num_args = 1.., required = true)]
        rules: Vec<PathBuf>,
        /// Published aggregator address; mail to anyone else is ignored.
        #[arg(long)]
        address: Option<String>,
    },
}

#[derive(Subcommand)]
enum ChainCommand {
    Init,
    RegisterKey {
        #[arg(long)]
        domain: String,
        #[arg(long)]
        selector: String,
        /// Public key file.
        #[arg(long)]
        key: PathBuf,
    },
    RegisterRule {
        #[arg(long)]
        artifact: PathBuf,
        /// transfer or swap
        #[arg(long)]
        handler: String,
    },
    InitPool(PoolArgs),
    Deposit {
        #[arg(long)]
        email: String,
        #[arg(long)]
        currency: String,
        /// Decimal token amount, e.g. 0.01
        #[arg(long)]
        amount: String,
    },
    Balance {
        #[arg(long)]
        email: String,
        #[arg(long)]
        currency: String,
        /// Print base units instead of a decimal token amount.
        #[arg(long)]
        base_units: bool,
    },
    Submit {
        #[arg(long)]
        proof: PathBuf,
    },
    Log {
        /// Rebuild the state from the log and compare with the snapshot.
        #[arg(long)]
        replay: bool,
    },
}

#[derive(Args)]
struct PoolArgs {
    #[arg(long)]
    currency_a: String,
    #[arg(long)]
    amount_a: String,
    #[arg(long)]
    currency_b: String,
    #[arg(long)]
    amount_b: String,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn usage(message: impl Display) -> Failure {
    Failure::new(USAGE, message)
}

fn chain_code(e: &ChainError) -> u8 {
    match e {
        ChainError::ProofInvalid(_) | ChainError::UnknownRule(_) | ChainError::UnknownDomainKey { .. } => VERIFICATION,
        ChainError::NullifierReused => REPLAY,
        ChainError::Snapshot(_) => INTERNAL,
        _ => USAGE,
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::Chain(c) => chain_code(c),
            StoreError::Proof { .. } | StoreError::AlreadyExists(_) => USAGE,
            StoreError::ReplayDivergence { .. } => REPLAY,
            StoreError::Io { .. } | StoreError::Locked(_) | StoreError::CorruptLog { .. } => INTERNAL,
        };
        Failure::new(code, e)
    }
}

impl From<AggregatorError> for Failure {
    fn from(e: AggregatorError) -> Self {
        match e {
            AggregatorError::Store(s) => s.into(),
            AggregatorError::Io { .. } => Failure::new(INTERNAL, e),
            _ => usage(e),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Outcome {
    fs::write(path, bytes).map_err(|e| Failure::new(INTERNAL, format!("{}: {e}", path.display())))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Value of a `# name=value` comment line in a key file.
fn key_file_comment(text: &str, name: &str) -> Option<String> {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix('#'))
        .filter_map(|l| l.trim().split_once('='))
        .find(|(k, _)| k.trim() == name)
        .map(|(_, v)| v.trim().to_string())
}

fn cmd_keygen(domain: &str, selector: &str, seed: &str, out: &Path, bits: u32) -> Outcome {
    if seed.is_empty() {
        return Err(usage("--seed must not be empty"));
    }
    if domain.is_empty() || selector.is_empty() {
        return Err(usage("--domain and --selector must not be empty"));
    }
    let (public, private) = keygen(bits, seed.as_bytes()).map_err(usage)?;
    let header = format!("# domain={domain}\n# selector={selector}\n");
    write(&with_suffix(out, ".pub"), format!("{header}{}", public.to_key_file()))?;
    write(&with_suffix(out, ".priv"), format!("{header}{}", private.to_key_file()))?;
    println!("{}.pub ({} bits)", out.display(), public.bits());
    Ok(())
}

fn cmd_sds_sign(
    input: &Path,
    key: &Path,
    domain: Option<String>,
    selector: Option<String>,
    out: &Path,
    canon: &str,
) -> Outcome {
    let key_text = read_text(key)?;
    let private = RsaPrivateKey::from_key_file(&key_text).map_err(|e| usage(format!("{}: {e}", key.display())))?;
    let domain = domain
        .or_else(|| key_file_comment(&key_text, "domain"))
        .ok_or_else(|| usage("no --domain given and none recorded in the key file"))?;
    let selector = selector
        .or_else(|| key_file_comment(&key_text, "selector"))
        .ok_or_else(|| usage("no --selector given and none recorded in the key file"))?;
    let mode: CanonicalizationMode = canon.parse().map_err(|_| usage(format!("bad --canon {canon:?}")))?;
    let msg = EmailMessage::parse(&read(input)?).map_err(|e| usage(format!("{}: {e}", input.display())))?;
    let signed = dkim_sign(&msg, &private, &domain, &selector, mode).map_err(|e| match e {
        DkimError::Email(EmailError::MissingHeader(_)) => usage(e),
        DkimError::Crypto(_) => Failure::new(INTERNAL, e),
        _ => usage(e),
    })?;
    write(out, signed.to_bytes())
}

fn cmd_rule_compile(template: &Path, out: &Path) -> Outcome {
    let template = RuleTemplate::from_json(&read_text(template)?).map_err(usage)?;
    let rule = RegexRule::compile(&template).map_err(usage)?;
    write(out, rule.artifact().export())?;
    println!("rule {} -> {}", rule.rule_id, out.display());
    Ok(())
}

fn print_receipt(receipt: &Receipt) -> Outcome {
    print!("{}", receipt.to_json());
    if receipt.is_accepted() {
        return Ok(());
    }
    let code = match receipt.reason.as_deref() {
        Some("ProofInvalid" | "UnknownRule" | "UnknownDomainKey") => VERIFICATION,
        Some("NullifierReused") => REPLAY,
        _ => USAGE,
    };
    Err(Failure::new(code, receipt.detail.as_deref().unwrap_or("rejected")))
}

fn cmd_chain(state: &Path, command: ChainCommand, verbose: bool) -> Outcome {
    match command {
        ChainCommand::Init => {
            Store::init(state)?;
            println!("initialized {}", state.display());
        }
        ChainCommand::RegisterKey { domain, selector, key } => {
            let key = RsaPublicKey::from_key_file(&read_text(&key)?).map_err(usage)?;
            Store::open_for_write(state)?.register_key(&domain, &selector, key)?;
        }
        ChainCommand::RegisterRule { artifact, handler } => {
            let handler: Handler = handler.parse().map_err(usage)?;
            let artifact = VerifierArtifact::import(&read(&artifact)?).map_err(usage)?;
            Store::open_for_write(state)?.register_rule(artifact, handler)?;
        }
        ChainCommand::InitPool(p) => {
            let a = parse_amount(&p.amount_a).map_err(usage)?;
            let b = parse_amount(&p.amount_b).map_err(usage)?;
            Store::open_for_write(state)?.init_pool(&p.currency_a, &a, &p.currency_b, &b)?;
        }
        ChainCommand::Deposit { email, currency, amount } => {
            let amount = parse_amount(&amount).map_err(usage)?;
            Store::open_for_write(state)?.deposit(&email, &currency, &amount)?;
        }
        ChainCommand::Balance {
            email,
            currency,
            base_units,
        } => {
            let balance = Store::open(state)?.state().balance(&email, &currency);
            if base_units {
                println!("{balance}");
            } else {
                println!("{}", format_amount(&balance));
            }
        }
        ChainCommand::Submit { proof } => {
            let receipt = Store::open_for_write(state)?.submit_file(&proof)?;
            print_receipt(&receipt)?;
        }
        ChainCommand::Log { replay } => {
            if replay {
                let entries = Store::read_log(state)?.len();
                Store::replay(state)?;
                println!("replayed {entries} entries; state matches");
            } else {
                let log = Store::log_path(state);
                print!("{}", read_text(&log)?);
            }
        }
    }
    if verbose {
        eprintln!("state: {}", state.display());
    }
    Ok(())
}

fn cmd_aggregate(state: &Path, inbox: PathBuf, rules: Vec<PathBuf>, address: Option<String>, verbose: bool) -> Outcome {
    let config = AggregatorConfig {
        inbox,
        state: state.to_path_buf(),
        rules,
        address,
    };
    let summary = aggregator::run_inbox(&config)?;
    if verbose {
        for (name, receipt) in &summary.receipts {
            let outcome = receipt.reason.as_deref().unwrap_or("accepted");
            eprintln!("{name}: {} {outcome}", receipt.stage);
        }
    }
    println!("{summary}");
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let state = || cli.state.clone().ok_or_else(|| usage("--state is required for this command"));
    match cli.command {
        Command::Keygen {
            domain,
            selector,
            seed,
            out,
            bits,
        } => cmd_keygen(&domain, &selector, &seed, &out, bits),
        Command::SdsSign {
            input,
            key,
            domain,
            selector,
            out,
            canon,
        } => cmd_sds_sign(&input, &key, domain, selector, &out, &canon),
        Command::RuleCompile { template, out } => cmd_rule_compile(&template, &out),
        Command::Chain(command) => cmd_chain(&state()?, command, cli.verbose),
        Command::Aggregate { inbox, rules, address } => cmd_aggregate(&state()?, inbox, rules, address, cli.verbose),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
