//! Declarative scenario files and a deterministic runner.
//!
//! A scenario names actors by explicit seed and lists steps, each with a
//! logical time, an action, its parameters and an optional expectation.
//! Running a scenario is a pure function of the file: the chain, report and
//! audit outputs are byte-identical across runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::attestation::{code_measurement, issue_quote, AttestationPolicy, EnclaveIdentity, DEFAULT_FRESHNESS_SECONDS};
use crate::credential::{issue_credential, CredentialError, DelegationCredential, SpendConstraints};
use crate::crypto::{Digest, KeyPair};
use crate::encoding::canonical_encode;
use crate::identity::{sign_revocation, Did, DidDocument, Registration};
use crate::ledger::audit::{audit_report, render_audit, wallet_flows, AuditRow};
use crate::ledger::{
    payment_nonce, AdminAction, AdminOrder, Chain, IntentProof, LedgerError, PaymentBody, PaymentRequest,
    RevocationRequest, Verdict, WalletConfig, WalletCreation,
};
use crate::mandate::{sign_committed_mandate, sign_mandate, IntentMandate, MandateBody, MandateError, MandateTerms, PriceLimit, PriceOpening};
use crate::policy::{deploy_policy, PolicyRules};
use crate::zk::{commit, compliance_context, derive_blinding, prove_price_within_limit, prove_range};

pub const SCENARIO_VERSION: u64 = 1;

/// Scenarios shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("happy_mandate", include_str!("../scenarios/happy_mandate.json")),
    ("revocation_race", include_str!("../scenarios/revocation_race.json")),
    ("five_eth_daily", include_str!("../scenarios/five_eth_daily.json")),
    ("ten_usdc_policy", include_str!("../scenarios/ten_usdc_policy.json")),
    ("impersonation", include_str!("../scenarios/impersonation.json")),
    ("stolen_key", include_str!("../scenarios/stolen_key.json")),
    ("attestation_quorum", include_str!("../scenarios/attestation_quorum.json")),
    ("zk_mandate", include_str!("../scenarios/zk_mandate.json")),
    ("empty", include_str!("../scenarios/empty.json")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse(_) | Self::Invalid(_) => 2,
            Self::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Agent,
    Enclave,
    Manufacturer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub role: Role,
    /// 32-byte hex seed.
    pub seed: String,
    /// Agents: the controlling user.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<String>,
    /// Enclaves: the code artifact they run, measured into the code hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    /// Enclaves: the manufacturer whose root key endorses them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endorsed_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    /// `accepted` or `rejected` for payments, `ok` or `error` otherwise.
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    pub at: u64,
    pub action: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u64,
    #[serde(default)]
    pub actors: BTreeMap<String, ActorSpec>,
    #[serde(default)]
    pub steps: Vec<StepSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisterParams {
    actor: String,
}

#[derive(Debug, Clone, Deserialize)]
struct IssueCredentialParams {
    name: String,
    issuer: String,
    subject: String,
    #[serde(flatten)]
    constraints: SpendConstraints,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeployPolicyParams {
    name: String,
    owner: String,
    agent: String,
    rules: PolicyRules,
}

#[derive(Debug, Clone, Deserialize)]
struct SignMandateParams {
    name: String,
    /// The key that signs.
    user: String,
    /// The issuer written into the mandate; defaults to `user`. Naming
    /// someone else produces a forged mandate.
    #[serde(default)]
    issuer: Option<String>,
    agent: String,
    #[serde(flatten)]
    terms: MandateTerms,
    /// Commit to the price cap. Unset follows the run's zk option.
    #[serde(default)]
    zk: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttestationParams {
    root: String,
    code: Vec<String>,
    k: u64,
    enclaves: Vec<String>,
    #[serde(default = "default_freshness")]
    freshness_window_seconds: u64,
}

fn default_freshness() -> u64 {
    DEFAULT_FRESHNESS_SECONDS
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateWalletParams {
    name: String,
    owner: String,
    agent: String,
    credential: String,
    #[serde(default)]
    zk_mode: bool,
    #[serde(default)]
    policy: Option<String>,
    #[serde(default)]
    allow_mandate_override: bool,
    #[serde(default)]
    attestation: Option<AttestationParams>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DepositParams {
    wallet: String,
    amount_minor: u64,
    #[serde(default)]
    signer: Option<String>,
    /// Overrides the wallet's current admin sequence (replay tests).
    #[serde(default)]
    sequence: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
enum IntentSpec {
    Mandate(String),
    #[serde(untagged)]
    Keyword(IntentKeyword),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum IntentKeyword {
    None,
    Policy,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PayParams {
    wallet: String,
    /// Key that signs the request; defaults to the wallet's agent.
    #[serde(default)]
    signer: Option<String>,
    /// Agent named in the request; defaults to the wallet's agent.
    #[serde(default)]
    agent: Option<String>,
    payee: String,
    #[serde(default = "default_item")]
    item_id: String,
    unit_price_minor: u64,
    #[serde(default = "default_quantity")]
    quantity: u64,
    #[serde(default = "default_category")]
    category: String,
    /// Defaults to the wallet's currency.
    #[serde(default)]
    currency: Option<String>,
    nonce: String,
    intent: IntentSpec,
    #[serde(default)]
    enclaves: Vec<String>,
    /// Quotes are issued this many seconds before the step.
    #[serde(default)]
    quote_age: u64,
}

fn default_item() -> String {
    "item".into()
}

fn default_quantity() -> u64 {
    1
}

fn default_category() -> String {
    "general".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RevokeParams {
    credential: String,
    #[serde(default)]
    signer: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct UpdateWhitelistParams {
    wallet: String,
    code: Vec<String>,
    #[serde(default)]
    signer: Option<String>,
}

#[derive(Debug, Clone)]
enum Action {
    Register(RegisterParams),
    IssueCredential(IssueCredentialParams),
    DeployPolicy(DeployPolicyParams),
    SignMandate(SignMandateParams),
    CreateWallet(CreateWalletParams),
    Deposit(DepositParams),
    Pay(PayParams),
    Revoke(RevokeParams),
    UpdateWhitelist(UpdateWhitelistParams),
}

impl Action {
    fn parse(name: &str, params: &Value) -> Result<Action, String> {
        fn p<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T, String> {
            serde_json::from_value(v.clone()).map_err(|e| e.to_string())
        }
        Ok(match name {
            "register" => Action::Register(p(params)?),
            "issue_credential" => Action::IssueCredential(p(params)?),
            "deploy_policy" => Action::DeployPolicy(p(params)?),
            "sign_mandate" => Action::SignMandate(p(params)?),
            "create_wallet" => Action::CreateWallet(p(params)?),
            "deposit" => Action::Deposit(p(params)?),
            "pay" => Action::Pay(p(params)?),
            "revoke" => Action::Revoke(p(params)?),
            "update_whitelist" => Action::UpdateWhitelist(p(params)?),
            other => return Err(format!("unknown action {other:?}")),
        })
    }

    fn is_payment(&self) -> bool {
        matches!(self, Action::Pay(_))
    }
}

/// A parsed and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    file: ScenarioFile,
    actions: Vec<Action>,
}

#[derive(Default)]
struct Names {
    credentials: BTreeSet<String>,
    policies: BTreeSet<String>,
    mandates: BTreeSet<String>,
    wallets: BTreeSet<String>,
}

fn define(set: &mut BTreeSet<String>, kind: &str, name: &str) -> Result<(), String> {
    if !set.insert(name.to_string()) {
        return Err(format!("{kind} {name:?} defined twice"));
    }
    Ok(())
}

fn need(set: &BTreeSet<String>, kind: &str, name: &str) -> Result<(), String> {
    if !set.contains(name) {
        return Err(format!("{kind} {name:?} is not defined by an earlier step"));
    }
    Ok(())
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Scenario::from_file(file)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
        let invalid = ScenarioError::Invalid;
        if file.version != SCENARIO_VERSION {
            return Err(invalid(format!("version must be {SCENARIO_VERSION}")));
        }
        for (name, a) in &file.actors {
            let seed = hex::decode(&a.seed).map_err(|_| invalid(format!("actor {name:?}: seed is not hex")))?;
            if seed.len() != 32 {
                return Err(invalid(format!("actor {name:?}: seed must be 32 bytes")));
            }
            let role_of = |n: &Option<String>, field: &str, role: Role| -> Result<(), ScenarioError> {
                match n {
                    Some(other) if file.actors.get(other).map(|o| o.role) == Some(role) => Ok(()),
                    Some(other) => Err(invalid(format!("actor {name:?}: {field} {other:?} is not a {role:?}"))),
                    None => Err(invalid(format!("actor {name:?}: {field} is required"))),
                }
            };
            match a.role {
                Role::Agent => role_of(&a.controller, "controller", Role::User)?,
                Role::Enclave => {
                    role_of(&a.endorsed_by, "endorsed_by", Role::Manufacturer)?;
                    if a.code.is_none() {
                        return Err(invalid(format!("actor {name:?}: enclaves need code")));
                    }
                }
                Role::User | Role::Manufacturer => {}
            }
        }
        let actor = |n: &str, roles: &[Role]| -> Result<(), String> {
            match file.actors.get(n) {
                Some(a) if roles.contains(&a.role) => Ok(()),
                Some(_) => Err(format!("actor {n:?} has the wrong role")),
                None => Err(format!("actor {n:?} is not defined")),
            }
        };
        let person = [Role::User, Role::Agent];
        let mut names = Names::default();
        let mut actions = Vec::new();
        let mut last_at = 0;
        for (i, step) in file.steps.iter().enumerate() {
            let ctx = |e: String| invalid(format!("step {i} ({}): {e}", step.action));
            if step.at < last_at {
                return Err(ctx("logical time went backwards".into()));
            }
            last_at = step.at;
            let action = Action::parse(&step.action, &step.params).map_err(ctx)?;
            let check = match &action {
                Action::Register(p) => actor(&p.actor, &person),
                Action::IssueCredential(p) => actor(&p.issuer, &person)
                    .and(actor(&p.subject, &person))
                    .and(define(&mut names.credentials, "credential", &p.name)),
                Action::DeployPolicy(p) => actor(&p.owner, &person)
                    .and(actor(&p.agent, &person))
                    .and(define(&mut names.policies, "policy", &p.name)),
                Action::SignMandate(p) => actor(&p.user, &person)
                    .and(p.issuer.as_deref().map_or(Ok(()), |n| actor(n, &person)))
                    .and(actor(&p.agent, &person))
                    .and(define(&mut names.mandates, "mandate", &p.name)),
                Action::CreateWallet(p) => actor(&p.owner, &person)
                    .and(actor(&p.agent, &person))
                    .and(need(&names.credentials, "credential", &p.credential))
                    .and(p.policy.as_deref().map_or(Ok(()), |n| need(&names.policies, "policy", n)))
                    .and(p.attestation.as_ref().map_or(Ok(()), |a| {
                        actor(&a.root, &[Role::Manufacturer])?;
                        a.enclaves.iter().try_for_each(|e| actor(e, &[Role::Enclave]))
                    }))
                    .and(define(&mut names.wallets, "wallet", &p.name)),
                Action::Deposit(p) => need(&names.wallets, "wallet", &p.wallet)
                    .and(p.signer.as_deref().map_or(Ok(()), |n| actor(n, &person))),
                Action::Pay(p) => need(&names.wallets, "wallet", &p.wallet)
                    .and(p.signer.as_deref().map_or(Ok(()), |n| actor(n, &person)))
                    .and(p.agent.as_deref().map_or(Ok(()), |n| actor(n, &person)))
                    .and(match &p.intent {
                        IntentSpec::Mandate(m) => need(&names.mandates, "mandate", m),
                        IntentSpec::Keyword(_) => Ok(()),
                    })
                    .and(p.enclaves.iter().try_for_each(|e| actor(e, &[Role::Enclave]))),
                Action::Revoke(p) => need(&names.credentials, "credential", &p.credential)
                    .and(p.signer.as_deref().map_or(Ok(()), |n| actor(n, &person))),
                Action::UpdateWhitelist(p) => need(&names.wallets, "wallet", &p.wallet)
                    .and(p.signer.as_deref().map_or(Ok(()), |n| actor(n, &person))),
            };
            check.map_err(ctx)?;
            if let Some(e) = &step.expect {
                let allowed: &[&str] = if action.is_payment() {
                    &["accepted", "rejected"]
                } else {
                    &["ok", "error"]
                };
                if !allowed.contains(&e.verdict.as_str()) {
                    return Err(ctx(format!("expected verdict must be one of {allowed:?}")));
                }
            }
            actions.push(action);
        }
        Ok(Scenario { file, actions })
    }

    pub fn file(&self) -> &ScenarioFile {
        &self.file
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Sign every mandate with a committed price cap and put every wallet
    /// without a policy into privacy mode.
    pub force_zk: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub index: u64,
    pub at: u64,
    pub action: String,
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expectation_met: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConservationCheck {
    pub wallet: String,
    pub balance_minor: u64,
    pub deposits_minor: u128,
    pub accepted_minor: u128,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub steps: Vec<StepOutcome>,
    pub event_count: u64,
    pub final_chain_digest: Digest,
    pub chain_verifies: bool,
    pub conservation: Vec<ConservationCheck>,
    pub conservation_holds: bool,
    pub mismatches: Vec<String>,
}

impl RunReport {
    /// 0 when every expectation is met and the chain checks out, 1 on an
    /// unmet expectation, 3 on a broken chain or conservation failure.
    pub fn exit_code(&self) -> i32 {
        if !self.chain_verifies || !self.conservation_holds {
            3
        } else if !self.mismatches.is_empty() {
            1
        } else {
            0
        }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub chain: Chain,
    /// Wallet name to wallet id.
    pub wallets: BTreeMap<String, Digest>,
}

#[derive(Serialize)]
struct WalletAudit<'a> {
    wallet_id: &'a Digest,
    rows: &'a [AuditRow],
}

impl RunOutput {
    pub fn chain_bytes(&self) -> Vec<u8> {
        self.chain.log().to_bytes()
    }

    pub fn report_bytes(&self) -> Vec<u8> {
        canonical_encode(&self.report).expect("reports are encodable")
    }

    fn audits(&self) -> Vec<(&String, &Digest, Vec<AuditRow>)> {
        self.wallets
            .iter()
            .map(|(name, id)| {
                let rows = audit_report(self.chain.log(), id).expect("wallets on a verified chain audit cleanly");
                (name, id, rows)
            })
            .collect()
    }

    /// Human-readable audit, one table per wallet.
    pub fn audit_text(&self) -> String {
        let mut out = String::new();
        for (name, id, rows) in self.audits() {
            out.push_str(&format!("wallet {name} {id}\n"));
            out.push_str(&render_audit(&rows));
            out.push('\n');
        }
        out
    }

    /// Canonical audit, wallet name to rows.
    pub fn audit_canonical(&self) -> Vec<u8> {
        let audits = self.audits();
        let map: BTreeMap<&String, WalletAudit<'_>> = audits
            .iter()
            .map(|(name, id, rows)| (*name, WalletAudit { wallet_id: id, rows }))
            .collect();
        canonical_encode(&map).expect("audits are encodable")
    }

    /// Writes `chain.log`, `report.canon`, `audit.txt` and `audit.canon`.
    pub fn write_to(&self, out_dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join("chain.log"), self.chain_bytes())?;
        fs::write(out_dir.join("report.canon"), self.report_bytes())?;
        if self.report.chain_verifies {
            fs::write(out_dir.join("audit.txt"), self.audit_text())?;
            fs::write(out_dir.join("audit.canon"), self.audit_canonical())?;
        }
        Ok(())
    }
}

struct Outcome {
    verdict: &'static str,
    reason: Option<String>,
    detail: Option<String>,
}

impl Outcome {
    fn ok(detail: impl Into<String>) -> Self {
        Self {
            verdict: "ok",
            reason: None,
            detail: Some(detail.into()),
        }
    }

    fn error(reason: impl Into<String>) -> Self {
        Self {
            verdict: "error",
            reason: Some(reason.into()),
            detail: None,
        }
    }
}

fn ledger_error(e: LedgerError) -> Outcome {
    Outcome::error(e.code())
}

struct Runner<'a> {
    options: RunOptions,
    actors: &'a BTreeMap<String, ActorSpec>,
    chain: Chain,
    keys: BTreeMap<&'a str, KeyPair>,
    enclaves: BTreeMap<&'a str, EnclaveIdentity>,
    credentials: BTreeMap<String, DelegationCredential>,
    policies: BTreeMap<String, Digest>,
    mandates: BTreeMap<String, (IntentMandate, Option<PriceOpening>)>,
    wallets: BTreeMap<String, Digest>,
}

impl<'a> Runner<'a> {
    fn new(file: &'a ScenarioFile, options: RunOptions) -> Self {
        let keys: BTreeMap<&str, KeyPair> = file
            .actors
            .iter()
            .map(|(name, a)| {
                let seed = hex::decode(&a.seed).expect("validated");
                (name.as_str(), KeyPair::from_seed(&seed).expect("validated"))
            })
            .collect();
        let enclaves = file
            .actors
            .iter()
            .filter(|(_, a)| a.role == Role::Enclave)
            .map(|(name, a)| {
                let root = &keys[a.endorsed_by.as_deref().expect("validated")];
                let code = code_measurement(a.code.as_deref().expect("validated").as_bytes());
                (name.as_str(), EnclaveIdentity::endorsed(root, keys[name.as_str()].clone(), code))
            })
            .collect();
        Self {
            options,
            actors: &file.actors,
            chain: Chain::new(),
            keys,
            enclaves,
            credentials: BTreeMap::new(),
            policies: BTreeMap::new(),
            mandates: BTreeMap::new(),
            wallets: BTreeMap::new(),
        }
    }

    fn did(&self, actor: &str) -> Did {
        Did::from_public_key(&self.keys[actor].public())
    }

    fn actor_with_did(&self, did: &Did) -> Option<&str> {
        self.keys
            .iter()
            .find(|(_, k)| Did::from_public_key(&k.public()) == *did)
            .map(|(n, _)| *n)
    }

    fn step(&mut self, at: u64, action: &Action) -> Outcome {
        match action {
            Action::Register(p) => {
                let spec = &self.actors[&p.actor];
                let public = self.keys[p.actor.as_str()].public();
                let doc = match &spec.controller {
                    Some(c) => DidDocument::for_agent(public, self.did(c), at),
                    None => DidDocument::for_user(public, at),
                };
                match self.chain.register_did(doc, at) {
                    Ok(Registration::New) => Outcome::ok(self.did(&p.actor).to_string()),
                    Ok(Registration::Unchanged) => Outcome::ok("unchanged"),
                    Err(e) => ledger_error(e),
                }
            }
            Action::IssueCredential(p) => {
                let issued = issue_credential(
                    &self.keys[p.issuer.as_str()],
                    self.did(&p.subject),
                    p.constraints.clone(),
                    at,
                    self.chain.dids(),
                );
                let cred = match issued {
                    Ok(c) => c,
                    Err(CredentialError::SubjectNotControlled) => return Outcome::error("SubjectNotControlled"),
                    Err(CredentialError::BadConstraints(_)) => return Outcome::error("BadConstraints"),
                };
                match self.chain.anchor_credential(&cred, at) {
                    Ok(id) => {
                        self.credentials.insert(p.name.clone(), cred);
                        Outcome::ok(id.to_hex())
                    }
                    Err(e) => ledger_error(e),
                }
            }
            Action::DeployPolicy(p) => {
                let deployment = match deploy_policy(
                    &self.keys[p.owner.as_str()],
                    self.did(&p.agent),
                    p.rules.clone(),
                    at,
                    self.chain.dids(),
                ) {
                    Ok(d) => d,
                    Err(e) => return ledger_error(e.into()),
                };
                match self.chain.deploy_policy(&deployment, at) {
                    Ok(id) => {
                        self.policies.insert(p.name.clone(), id);
                        Outcome::ok(id.to_hex())
                    }
                    Err(e) => ledger_error(e),
                }
            }
            Action::SignMandate(p) => self.sign_mandate(at, p),
            Action::CreateWallet(p) => self.create_wallet(at, p),
            Action::Deposit(p) => {
                let Some(&wallet_id) = self.wallets.get(&p.wallet) else {
                    return Outcome::error("UnknownWallet");
                };
                let owner = self.owner_of(&wallet_id);
                let signer = p.signer.as_deref().unwrap_or(owner);
                let sequence = p
                    .sequence
                    .unwrap_or_else(|| self.chain.admin_sequence(&wallet_id).expect("wallet exists"));
                let order = AdminOrder::sign(
                    &self.keys[signer],
                    wallet_id,
                    sequence,
                    AdminAction::Deposit {
                        amount_minor: p.amount_minor,
                    },
                );
                match self.chain.apply_admin(&order, at) {
                    Ok(()) => {
                        let balance = self.chain.wallet(&wallet_id).expect("exists").balance_minor;
                        Outcome::ok(format!("balance {balance}"))
                    }
                    Err(e) => ledger_error(e),
                }
            }
            Action::Pay(p) => self.pay(at, p),
            Action::Revoke(p) => {
                let Some(cred) = self.credentials.get(&p.credential) else {
                    return Outcome::error("UnknownCredential");
                };
                let issuer = self.actor_with_did(cred.issuer()).expect("issuers are actors");
                let signer = p.signer.as_deref().unwrap_or(issuer);
                let req = RevocationRequest {
                    credential_id: cred.credential_id,
                    signature: sign_revocation(&self.keys[signer], &cred.credential_id),
                };
                match self.chain.revoke_credential(&req, at) {
                    Ok(true) => Outcome::ok("revoked"),
                    Ok(false) => Outcome::ok("already revoked"),
                    Err(e) => ledger_error(e),
                }
            }
            Action::UpdateWhitelist(p) => {
                let Some(&wallet_id) = self.wallets.get(&p.wallet) else {
                    return Outcome::error("UnknownWallet");
                };
                let owner = self.owner_of(&wallet_id);
                let signer = p.signer.as_deref().unwrap_or(owner);
                let code_hashes = p.code.iter().map(|c| code_measurement(c.as_bytes())).collect();
                let order = AdminOrder::sign(
                    &self.keys[signer],
                    wallet_id,
                    self.chain.admin_sequence(&wallet_id).expect("wallet exists"),
                    AdminAction::UpdateWhitelist { code_hashes },
                );
                match self.chain.apply_admin(&order, at) {
                    Ok(()) => Outcome::ok("whitelist updated"),
                    Err(e) => ledger_error(e),
                }
            }
        }
    }

    fn owner_of(&self, wallet_id: &Digest) -> &'a str {
        let owner = self.chain.wallet(wallet_id).expect("wallet exists").owner;
        let name = self.actor_with_did(&owner).expect("owners are actors");
        self.actors.get_key_value(name).expect("actor").0.as_str()
    }

    fn sign_mandate(&mut self, at: u64, p: &SignMandateParams) -> Outcome {
        let user = &self.keys[p.user.as_str()];
        let agent = self.did(&p.agent);
        let zk = p.zk.unwrap_or(self.options.force_zk);
        let forged_issuer = p.issuer.as_deref().filter(|i| *i != p.user);
        let signed = if let Some(claimed) = forged_issuer {
            // A mandate naming `claimed` as issuer but signed by `user`.
            let cap = p.terms.max_unit_price_minor;
            let (price_limit, opening) = if zk {
                let blinding = derive_blinding(&user.seed(), p.name.as_bytes());
                let Ok(c) = commit(cap, &blinding) else {
                    return Outcome::error("BadBody");
                };
                (PriceLimit::Committed(c), Some(PriceOpening { max_unit_price_minor: cap, blinding }))
            } else {
                (PriceLimit::Plain(cap), None)
            };
            let body = MandateBody {
                issuer: self.did(claimed),
                agent,
                item_id: p.terms.item_id.clone(),
                price_limit,
                max_quantity: p.terms.max_quantity,
                vendor_account: p.terms.vendor_account.clone(),
                currency: p.terms.currency.clone(),
                expires_at: p.terms.expires_at,
                issued_at: at,
            };
            let signature = user.sign_canonical(&body).expect("encodable");
            Ok((
                IntentMandate {
                    mandate_id: body.id(),
                    body,
                    signature,
                },
                opening,
            ))
        } else if zk {
            let blinding = derive_blinding(&user.seed(), p.name.as_bytes());
            sign_committed_mandate(user, agent, p.terms.clone(), blinding, at, self.chain.dids())
                .map(|(m, o)| (m, Some(o)))
        } else {
            sign_mandate(user, agent, p.terms.clone(), at, self.chain.dids()).map(|m| (m, None))
        };
        match signed {
            Ok((mandate, opening)) => {
                let id = mandate.mandate_id;
                self.mandates.insert(p.name.clone(), (mandate, opening));
                Outcome::ok(id.to_hex())
            }
            Err(MandateError::AgentNotControlled) => Outcome::error("AgentNotControlled"),
            Err(MandateError::BadBody(_)) => Outcome::error("BadBody"),
        }
    }

    fn create_wallet(&mut self, at: u64, p: &CreateWalletParams) -> Outcome {
        let Some(cred) = self.credentials.get(&p.credential).cloned() else {
            return Outcome::error("UnknownCredential");
        };
        let policy_id = match &p.policy {
            Some(name) => match self.policies.get(name) {
                Some(id) => Some(*id),
                None => return Outcome::error("UnknownPolicy"),
            },
            None => None,
        };
        let attestation = p.attestation.as_ref().map(|a| AttestationPolicy {
            root_public_key: self.keys[a.root.as_str()].public(),
            whitelisted_code_hashes: a.code.iter().map(|c| code_measurement(c.as_bytes())).collect(),
            required_quotes_k: a.k,
            enclave_set: a.enclaves.iter().map(|e| self.keys[e.as_str()].public()).collect(),
            freshness_window_seconds: a.freshness_window_seconds,
        });
        let config = WalletConfig {
            zk_mode: p.zk_mode || (self.options.force_zk && policy_id.is_none()),
            policy_id,
            allow_mandate_override: p.allow_mandate_override,
            attestation,
        };
        let creation = WalletCreation::new(&self.keys[p.owner.as_str()], self.did(&p.agent), cred, config, at);
        match self.chain.create_wallet(&creation, at) {
            Ok(id) => {
                self.wallets.insert(p.name.clone(), id);
                Outcome::ok(id.to_hex())
            }
            Err(e) => ledger_error(e),
        }
    }

    fn pay(&mut self, at: u64, p: &PayParams) -> Outcome {
        let Some(&wallet_id) = self.wallets.get(&p.wallet) else {
            return Outcome::error("UnknownWallet");
        };
        let wallet = self.chain.wallet(&wallet_id).expect("wallet exists");
        let agent_name = self.actor_with_did(&wallet.agent).expect("agents are actors").to_string();
        let signer = p.signer.clone().unwrap_or_else(|| agent_name.clone());
        let agent = p.agent.as_deref().map_or(wallet.agent, |a| self.did(a));
        let nonce = payment_nonce(&p.nonce);
        let intent_proof = match &p.intent {
            IntentSpec::Keyword(IntentKeyword::None) => IntentProof::None,
            IntentSpec::Keyword(IntentKeyword::Policy) => IntentProof::Policy,
            IntentSpec::Mandate(name) => {
                let (mandate, opening) = &self.mandates[name];
                let range_proof = opening.as_ref().map(|o| {
                    let context = compliance_context(&mandate.mandate_id, &nonce);
                    prove_price_within_limit(o.max_unit_price_minor, &o.blinding, p.unit_price_minor, &context)
                        // The agent cannot prove a false statement; it submits
                        // a proof about a different commitment instead.
                        .unwrap_or_else(|_| prove_range(0, &o.blinding, &context).expect("0 is in range"))
                });
                IntentProof::Mandate {
                    mandate: mandate.clone(),
                    range_proof,
                }
            }
        };
        let body = PaymentBody {
            wallet_id,
            agent,
            payee: p.payee.clone(),
            item_id: p.item_id.clone(),
            unit_price_minor: p.unit_price_minor,
            quantity: p.quantity,
            category: p.category.clone(),
            currency: p.currency.clone().unwrap_or_else(|| wallet.currency.clone()),
            nonce,
            intent_proof,
        };
        let digest = body.digest();
        let quoted_at = at.saturating_sub(p.quote_age);
        let quotes = p
            .enclaves
            .iter()
            .map(|e| issue_quote(&self.enclaves[e.as_str()], digest, quoted_at))
            .collect();
        let request = PaymentRequest::sign(&self.keys[signer.as_str()], body, quotes);
        match self.chain.submit_payment(&request, at) {
            Ok(receipt) => match receipt.verdict {
                Verdict::Accepted => Outcome {
                    verdict: "accepted",
                    reason: None,
                    detail: Some(receipt.event_hash.to_hex()),
                },
                Verdict::Rejected(r) => Outcome {
                    verdict: "rejected",
                    reason: Some(r.code().to_string()),
                    detail: Some(receipt.event_hash.to_hex()),
                },
            },
            Err(e) => ledger_error(e),
        }
    }
}

/// Runs a validated scenario in memory.
pub fn run(scenario: &Scenario, options: RunOptions) -> RunOutput {
    let file = &scenario.file;
    let mut runner = Runner::new(file, options);
    let mut steps = Vec::new();
    let mut mismatches = Vec::new();
    for (i, (spec, action)) in file.steps.iter().zip(&scenario.actions).enumerate() {
        let outcome = runner.step(spec.at, action);
        let expectation_met = spec.expect.as_ref().map(|e| {
            e.verdict == outcome.verdict && (e.reason.is_none() || e.reason == outcome.reason)
        });
        // Steps other than payments are expected to succeed unless stated.
        let implicit_failure = spec.expect.is_none() && outcome.verdict == "error";
        if expectation_met == Some(false) || implicit_failure {
            let wanted = spec
                .expect
                .as_ref()
                .map(|e| format!("{}{}", e.verdict, e.reason.as_ref().map(|r| format!("({r})")).unwrap_or_default()))
                .unwrap_or_else(|| "ok".into());
            let got = format!(
                "{}{}",
                outcome.verdict,
                outcome.reason.as_ref().map(|r| format!("({r})")).unwrap_or_default()
            );
            mismatches.push(format!("step {i} ({}): expected {wanted}, got {got}", spec.action));
        }
        steps.push(StepOutcome {
            index: i as u64,
            at: spec.at,
            action: spec.action.clone(),
            verdict: outcome.verdict.to_string(),
            reason: outcome.reason,
            detail: outcome.detail,
            expectation_met,
        });
    }
    let chain = runner.chain;
    let log = chain.log();
    let conservation: Vec<ConservationCheck> = runner
        .wallets
        .iter()
        .map(|(name, id)| {
            let flows = wallet_flows(log, id);
            let balance = chain.wallet(id).expect("exists").balance_minor;
            ConservationCheck {
                wallet: name.clone(),
                balance_minor: balance,
                deposits_minor: flows.deposits_minor,
                accepted_minor: flows.accepted_minor,
                holds: flows.implied_balance() == Some(u128::from(balance)),
            }
        })
        .collect();
    let report = RunReport {
        steps,
        event_count: log.len() as u64,
        final_chain_digest: log.head_hash(),
        chain_verifies: log.verify().is_ok(),
        conservation_holds: conservation.iter().all(|c| c.holds),
        conservation,
        mismatches,
    };
    RunOutput {
        report,
        chain,
        wallets: runner.wallets,
    }
}

/// Parses, runs and writes outputs to `out_dir`.
pub fn run_file(path: &Path, out_dir: &Path, options: RunOptions) -> Result<RunOutput, ScenarioError> {
    let text = fs::read_to_string(path)?;
    let scenario = Scenario::parse(&text)?;
    let output = run(&scenario, options);
    output.write_to(out_dir)?;
    Ok(output)
}
