use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use tiva_core::credential::{issue_credential, DelegationCredential, SpendConstraints};
use tiva_core::encoding::{canonical_decode, canonical_encode, decode_value};
use tiva_core::identity::{sign_revocation, DidRegistry};
use tiva_core::ledger::audit::{audit_report, render_audit};
use tiva_core::ledger::{
    payment_nonce, EventLog, IntentProof, PaymentBody, PaymentRequest, RevocationRequest,
};
use tiva_core::mandate::{sign_committed_mandate, sign_mandate, IntentMandate, MandateTerms, PriceOpening};
use tiva_core::scenario::{self, RunOptions, Scenario};
use tiva_core::zk::{compliance_context, derive_blinding, prove_price_within_limit};
use tiva_core::{Did, DidDocument, Digest, KeyPair};

#[derive(Parser)]
#[command(name = "tiva", version, about = "Agent payment authorization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write chain, report and audit to a directory.
    Run(RunArgs),
    /// Derive a key pair from a seed and write a key file.
    Keygen(KeygenArgs),
    /// Build a DID document for a key.
    Did(DidArgs),
    /// Issue a delegation credential to an agent.
    IssueVc(IssueVcArgs),
    /// Sign an intent mandate for an agent.
    SignMandate(SignMandateArgs),
    /// Build and sign a payment request.
    Pay(PayArgs),
    /// Sign a credential revocation.
    Revoke(RevokeArgs),
    /// Print the audit report of one wallet from a chain file.
    Audit(AuditArgs),
    /// Verify a chain file; names the first bad height on failure.
    VerifyChain(VerifyChainArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario path, or `bundled:<name>` for a scenario shipped with the tool.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    out: PathBuf,
    /// Commit every mandate price cap and prove prices in zero knowledge.
    #[arg(long)]
    zk: bool,
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct KeygenArgs {
    /// 32-byte hex seed.
    #[arg(long, conflicts_with = "label", required_unless_present = "label")]
    seed: Option<String>,
    /// Derive the seed from a label instead.
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DidArgs {
    #[arg(long)]
    key: PathBuf,
    /// Controller DID for agent documents; omit for a user.
    #[arg(long)]
    controller: Option<String>,
    #[arg(long, default_value_t = 0)]
    at: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IssueVcArgs {
    /// Issuer key file.
    #[arg(long)]
    key: PathBuf,
    /// DID document of the agent.
    #[arg(long)]
    subject_doc: PathBuf,
    #[arg(long)]
    limit: u64,
    #[arg(long)]
    period: u64,
    #[arg(long)]
    currency: String,
    #[arg(long = "payee")]
    payees: Vec<String>,
    #[arg(long = "category")]
    categories: Vec<String>,
    #[arg(long)]
    expires_at: u64,
    #[arg(long, default_value_t = 0)]
    at: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SignMandateArgs {
    /// User key file.
    #[arg(long)]
    key: PathBuf,
    /// DID document of the agent.
    #[arg(long)]
    agent_doc: PathBuf,
    #[arg(long)]
    item: String,
    #[arg(long)]
    max_unit_price: u64,
    #[arg(long)]
    max_quantity: u64,
    #[arg(long)]
    vendor: String,
    #[arg(long)]
    currency: String,
    #[arg(long)]
    expires_at: u64,
    #[arg(long, default_value_t = 0)]
    at: u64,
    /// Commit to the price cap; the opening is written to `--opening-out`.
    #[arg(long, requires = "opening_out")]
    zk: bool,
    #[arg(long)]
    opening_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PayArgs {
    /// Agent key file.
    #[arg(long)]
    key: PathBuf,
    /// Wallet id (hex).
    #[arg(long)]
    wallet: String,
    #[arg(long)]
    payee: String,
    #[arg(long)]
    item: String,
    #[arg(long)]
    price: u64,
    #[arg(long, default_value_t = 1)]
    quantity: u64,
    #[arg(long, default_value = "general")]
    category: String,
    #[arg(long)]
    currency: String,
    /// Nonce label; hashed into the request nonce.
    #[arg(long)]
    nonce: String,
    /// Mandate file to attach as intent proof.
    #[arg(long, conflicts_with = "policy")]
    mandate: Option<PathBuf>,
    /// Price-cap opening for a committed mandate; adds a range proof.
    #[arg(long, requires = "mandate")]
    opening: Option<PathBuf>,
    /// Ask the wallet's policy to authorize.
    #[arg(long)]
    policy: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RevokeArgs {
    /// Issuer key file.
    #[arg(long)]
    key: PathBuf,
    /// Credential file.
    #[arg(long)]
    credential: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    chain: PathBuf,
    /// Wallet id (hex).
    #[arg(long)]
    wallet: String,
    /// Also write the canonical report here.
    #[arg(long)]
    canon_out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyChainArgs {
    file: PathBuf,
}

/// An operation failure: reason on stderr, exit 1.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

/// Reads a canonical file, tolerating one trailing newline.
fn read_canonical<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let mut bytes = read(path)?;
    if bytes.last() == Some(&b'\n') {
        bytes.pop();
    }
    canonical_decode(&bytes).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| Failure(format!("{}: {e}", path.display()))),
        None => {
            println!("{}", String::from_utf8_lossy(bytes));
            Ok(())
        }
    }
}

fn emit_canonical<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<(), Failure> {
    emit(out, &canonical_encode(value)?)
}

fn load_key(path: &Path) -> Result<KeyPair, Failure> {
    let mut bytes = read(path)?;
    if bytes.last() == Some(&b'\n') {
        bytes.pop();
    }
    let value = decode_value(&bytes).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let seed = value
        .get("seed")
        .and_then(Value::as_str)
        .ok_or_else(|| Failure(format!("{}: key file has no seed", path.display())))?;
    let seed = hex::decode(seed).map_err(|_| Failure("seed is not hex".into()))?;
    Ok(KeyPair::from_seed(&seed)?)
}

fn parse_digest(s: &str) -> Result<Digest, Failure> {
    Digest::from_hex(s).map_err(Failure)
}

/// Registry holding the issuer as a user and the agent document.
fn registry_for(issuer: &KeyPair, agent_doc: &DidDocument) -> Result<DidRegistry, Failure> {
    let mut registry = DidRegistry::new();
    registry.register(DidDocument::for_user(issuer.public(), agent_doc.created_at))?;
    registry.register(agent_doc.clone())?;
    Ok(registry)
}

fn cmd_run(args: RunArgs) -> CmdResult {
    let text = match args.scenario.strip_prefix("bundled:") {
        Some(name) => match scenario::bundled(name) {
            Some(t) => t.to_string(),
            None => {
                eprintln!("no bundled scenario named {name:?}");
                return Ok(ExitCode::from(2));
            }
        },
        None => fs::read_to_string(&args.scenario).map_err(|e| Failure(format!("{}: {e}", args.scenario)))?,
    };
    let parsed = match Scenario::parse(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return Ok(ExitCode::from(e.exit_code() as u8));
        }
    };
    let output = scenario::run(&parsed, RunOptions { force_zk: args.zk });
    output.write_to(&args.out)?;
    let report = &output.report;
    if args.verbose {
        for s in &report.steps {
            let mark = match s.expectation_met {
                Some(true) => "pass",
                Some(false) => "FAIL",
                None => "-",
            };
            println!(
                "{:>4}  t={:<8} {:<17} {:<9} {:<22} {}",
                s.index,
                s.at,
                s.action,
                s.verdict,
                s.reason.as_deref().unwrap_or(""),
                mark
            );
        }
    }
    for m in &report.mismatches {
        eprintln!("{m}");
    }
    if !report.chain_verifies {
        eprintln!("internal error: chain does not verify");
    }
    for c in report.conservation.iter().filter(|c| !c.holds) {
        eprintln!("internal error: conservation fails for wallet {}", c.wallet);
    }
    println!(
        "{} steps, {} events, head {}, {} mismatches",
        report.steps.len(),
        report.event_count,
        report.final_chain_digest,
        report.mismatches.len()
    );
    Ok(ExitCode::from(report.exit_code() as u8))
}

fn cmd_keygen(args: KeygenArgs) -> CmdResult {
    let key = match (&args.seed, &args.label) {
        (Some(seed), _) => KeyPair::from_seed(&hex::decode(seed).map_err(|_| Failure("seed is not hex".into()))?)?,
        (None, Some(label)) => KeyPair::from_label(label),
        (None, None) => unreachable!("clap requires one of seed or label"),
    };
    let file = json!({"public_key": key.public().to_hex(), "seed": hex::encode(key.seed())});
    emit_canonical(args.out.as_deref(), &file)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_did(args: DidArgs) -> CmdResult {
    let key = load_key(&args.key)?;
    let doc = match &args.controller {
        Some(c) => DidDocument::for_agent(key.public(), c.parse::<Did>()?, args.at),
        None => DidDocument::for_user(key.public(), args.at),
    };
    emit_canonical(args.out.as_deref(), &doc)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_issue_vc(args: IssueVcArgs) -> CmdResult {
    let issuer = load_key(&args.key)?;
    let subject: DidDocument = read_canonical(&args.subject_doc)?;
    let registry = registry_for(&issuer, &subject)?;
    let constraints = SpendConstraints {
        limit_minor_units: args.limit,
        limit_period_seconds: args.period,
        currency: args.currency,
        allowed_payees: args.payees.into_iter().collect(),
        allowed_categories: args.categories.into_iter().collect(),
        expires_at: args.expires_at,
    };
    let cred = issue_credential(&issuer, subject.did, constraints, args.at, &registry)?;
    emit_canonical(args.out.as_deref(), &cred)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sign_mandate(args: SignMandateArgs) -> CmdResult {
    let user = load_key(&args.key)?;
    let agent: DidDocument = read_canonical(&args.agent_doc)?;
    let registry = registry_for(&user, &agent)?;
    let terms = MandateTerms {
        item_id: args.item,
        max_unit_price_minor: args.max_unit_price,
        max_quantity: args.max_quantity,
        vendor_account: args.vendor,
        currency: args.currency,
        expires_at: args.expires_at,
    };
    if args.zk {
        let label = format!("{}/{}", terms.item_id, args.at);
        let blinding = derive_blinding(&user.seed(), label.as_bytes());
        let (mandate, opening) = sign_committed_mandate(&user, agent.did, terms, blinding, args.at, &registry)?;
        let opening_out = args.opening_out.as_deref().expect("clap requires opening-out with zk");
        emit_canonical(Some(opening_out), &opening)?;
        emit_canonical(args.out.as_deref(), &mandate)?;
    } else {
        let mandate = sign_mandate(&user, agent.did, terms, args.at, &registry)?;
        emit_canonical(args.out.as_deref(), &mandate)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_pay(args: PayArgs) -> CmdResult {
    let agent = load_key(&args.key)?;
    let nonce = payment_nonce(&args.nonce);
    let intent_proof = match (&args.mandate, args.policy) {
        (Some(path), _) => {
            let mandate: IntentMandate = read_canonical(path)?;
            let range_proof = match &args.opening {
                Some(op) => {
                    let opening: PriceOpening = read_canonical(op)?;
                    let context = compliance_context(&mandate.mandate_id, &nonce);
                    Some(prove_price_within_limit(
                        opening.max_unit_price_minor,
                        &opening.blinding,
                        args.price,
                        &context,
                    )?)
                }
                None => None,
            };
            IntentProof::Mandate { mandate, range_proof }
        }
        (None, true) => IntentProof::Policy,
        (None, false) => IntentProof::None,
    };
    let body = PaymentBody {
        wallet_id: parse_digest(&args.wallet)?,
        agent: Did::from_public_key(&agent.public()),
        payee: args.payee,
        item_id: args.item,
        unit_price_minor: args.price,
        quantity: args.quantity,
        category: args.category,
        currency: args.currency,
        nonce,
        intent_proof,
    };
    let request = PaymentRequest::sign(&agent, body, Vec::new());
    emit_canonical(args.out.as_deref(), &request)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_revoke(args: RevokeArgs) -> CmdResult {
    let issuer = load_key(&args.key)?;
    let cred: DelegationCredential = read_canonical(&args.credential)?;
    if *cred.issuer() != Did::from_public_key(&issuer.public()) {
        return Err(Failure("key is not the credential issuer".into()));
    }
    let request = RevocationRequest {
        credential_id: cred.credential_id,
        signature: sign_revocation(&issuer, &cred.credential_id),
    };
    emit_canonical(args.out.as_deref(), &request)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_audit(args: AuditArgs) -> CmdResult {
    let log = EventLog::from_bytes(&read(&args.chain)?)?;
    let rows = audit_report(&log, &parse_digest(&args.wallet)?)?;
    print!("{}", render_audit(&rows));
    if let Some(path) = &args.canon_out {
        emit_canonical(Some(path), &rows)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify_chain(args: VerifyChainArgs) -> CmdResult {
    let count = tiva_core::ledger::verify_chain_bytes(&read(&args.file)?)?;
    println!("ok: {count} events");
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Keygen(a) => cmd_keygen(a),
        Command::Did(a) => cmd_did(a),
        Command::IssueVc(a) => cmd_issue_vc(a),
        Command::SignMandate(a) => cmd_sign_mandate(a),
        Command::Pay(a) => cmd_pay(a),
        Command::Revoke(a) => cmd_revoke(a),
        Command::Audit(a) => cmd_audit(a),
        Command::VerifyChain(a) => cmd_verify_chain(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure(reason)) => {
            eprintln!("error: {reason}");
            ExitCode::from(1)
        }
    }
}
