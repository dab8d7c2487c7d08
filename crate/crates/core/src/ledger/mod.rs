//! Simulated permissioned ledger: identity and revocation registries, policy
//! contracts, wallet contracts and the payment pipeline, all recorded in one
//! hash-chained event log.
//!
//! Every state change appends exactly one event. Idempotent no-ops (a
//! re-registered DID, a second revocation) append nothing. A rejected
//! payment appends one `PaymentRejected` event and changes nothing else.

pub mod audit;
pub mod event;
pub mod payment;
pub mod wallet;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::attestation::verify_quotes;
use crate::credential::{credential_status, verify_credential, CredentialRejection, DelegationCredential};
use crate::crypto::{digest_canonical, domain, verifies_canonical, Digest, Signature};
use crate::identity::{Did, DidDocument, DidRegistry, IdentityError, Registration, RevocationRegistry};
use crate::mandate::{check_mandate_with, IntentMandate, MandateApproval, MandatePayment, PriceEvidence};
use crate::policy::{evaluate, PolicyDeployment, PolicyError, PolicyPayment, PolicyState};
use crate::zk::compliance_context;

pub use event::{verify_chain, verify_chain_bytes, verify_segment, ChainCursor, ChainFault, EventKind, EventLog, LedgerEvent};
pub use payment::{payment_nonce, IntentProof, PaymentBody, PaymentRejection, PaymentRequest};
pub use wallet::{AdminAction, AdminOrder, IntentMode, WalletConfig, WalletContractState, WalletCreation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("time went backwards: {now} < {last}")]
    TimeRegression { now: u64, last: u64 },
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error("credential rejected: {0:?}")]
    Credential(CredentialRejection),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("unknown wallet {0}")]
    UnknownWallet(Digest),
    #[error("wallet {0} already exists")]
    DuplicateWallet(Digest),
    #[error("bad binding: {0}")]
    BadBinding(String),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("signature does not verify")]
    BadSignature,
    #[error("balance overflow")]
    Overflow,
    #[error("expected admin sequence {expected}, got {got}")]
    SequenceMismatch { expected: u64, got: u64 },
    #[error("wallet has no attestation policy")]
    NoAttestation,
}

impl LedgerError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::TimeRegression { .. } => "TimeRegression",
            Self::Identity(e) => e.code(),
            Self::Credential(_) => "CredentialRejected",
            Self::Policy(PolicyError::AgentNotControlled) => "AgentNotControlled",
            Self::Policy(PolicyError::BadRules(_)) => "BadRules",
            Self::Policy(PolicyError::BadSignature) => "BadSignature",
            Self::UnknownWallet(_) => "UnknownWallet",
            Self::DuplicateWallet(_) => "DuplicateWallet",
            Self::BadBinding(_) => "BadBinding",
            Self::BadConfig(_) => "BadConfig",
            Self::BadSignature => "BadSignature",
            Self::Overflow => "Overflow",
            Self::SequenceMismatch { .. } => "SequenceMismatch",
            Self::NoAttestation => "NoAttestation",
        }
    }
}

/// Issuer-signed revocation transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevocationRequest {
    pub credential_id: Digest,
    pub signature: Signature,
}

/// What authorized an accepted payment. Its digest is the event's
/// `intent_proof_digest`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentProofRecord {
    Mandate {
        mandate: IntentMandate,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        range_proof_digest: Option<Digest>,
        consumed_after: u64,
    },
    Policy {
        policy_id: Digest,
        epoch_index: u64,
        spent_before_minor: u64,
        spent_after_minor: u64,
        amount_minor: u64,
        nonce: Digest,
    },
}

impl IntentProofRecord {
    /// The mandate id, or a digest of the policy decision.
    pub fn digest(&self) -> Digest {
        match self {
            Self::Mandate { mandate, .. } => mandate.mandate_id,
            Self::Policy { .. } => {
                digest_canonical(domain::INTENT, self).expect("intent record is encodable")
            }
        }
    }

    /// True iff the record is internally consistent with `digest`.
    pub fn matches(&self, digest: &Digest) -> bool {
        match self {
            Self::Mandate { mandate, .. } => {
                mandate.mandate_id == *digest && mandate.body.id() == *digest
            }
            Self::Policy { .. } => self.digest() == *digest,
        }
    }
}

/// Payload of a `PaymentAccepted` event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptedPayment {
    pub wallet_id: Digest,
    pub request_digest: Digest,
    pub agent: Did,
    pub payee: String,
    pub item_id: String,
    pub category: String,
    pub currency: String,
    pub unit_price_minor: u64,
    pub quantity: u64,
    pub amount_minor: u64,
    pub nonce: Digest,
    pub intent_proof: IntentProofRecord,
    pub balance_after_minor: u64,
    pub at: u64,
}

/// Payload of a `PaymentRejected` event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedPayment {
    pub wallet_id: Digest,
    pub request_digest: Digest,
    pub agent: Did,
    pub payee: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amount_minor: Option<u64>,
    pub nonce: Digest,
    pub reason: String,
    pub at: u64,
}

/// Payload of a `Deposited` event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepositRecord {
    pub wallet_id: Digest,
    pub amount_minor: u64,
    pub sequence: u64,
    pub balance_after_minor: u64,
    pub at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    Rejected(PaymentRejection),
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted)
    }

    pub fn rejection(&self) -> Option<PaymentRejection> {
        match self {
            Verdict::Accepted => None,
            Verdict::Rejected(r) => Some(*r),
        }
    }
}

/// Outcome of a submitted payment and the event recording it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub verdict: Verdict,
    pub height: u64,
    pub event_hash: Digest,
}

/// State changes of an approved payment, applied all at once.
struct Approval {
    amount: u64,
    period_epoch: u64,
    period_spend_after: u64,
    mandate: Option<MandateApproval>,
    policy_after: Option<PolicyState>,
    intent: IntentProofRecord,
}

#[derive(Debug, Clone)]
pub struct Chain {
    log: EventLog,
    now: u64,
    dids: DidRegistry,
    revocations: RevocationRegistry,
    policies: BTreeMap<Digest, PolicyState>,
    wallets: BTreeMap<Digest, WalletContractState>,
}

impl Default for Chain {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Serialize)]
struct StateSnapshot<'a> {
    dids: &'a DidRegistry,
    revocations: &'a RevocationRegistry,
    policies: &'a BTreeMap<Digest, PolicyState>,
    wallets: &'a BTreeMap<Digest, WalletContractState>,
}

impl Chain {
    pub fn new() -> Self {
        Self {
            log: EventLog::genesis(),
            now: 0,
            dids: DidRegistry::new(),
            revocations: RevocationRegistry::new(),
            policies: BTreeMap::new(),
            wallets: BTreeMap::new(),
        }
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn dids(&self) -> &DidRegistry {
        &self.dids
    }

    pub fn revocations(&self) -> &RevocationRegistry {
        &self.revocations
    }

    pub fn policy(&self, policy_id: &Digest) -> Option<&PolicyState> {
        self.policies.get(policy_id)
    }

    pub fn wallet(&self, wallet_id: &Digest) -> Option<&WalletContractState> {
        self.wallets.get(wallet_id)
    }

    pub fn wallets(&self) -> impl Iterator<Item = &WalletContractState> {
        self.wallets.values()
    }

    /// Digest of all contract and registry state, excluding the event log.
    pub fn state_digest(&self) -> Digest {
        digest_canonical(
            domain::EVENT_PAYLOAD,
            &StateSnapshot {
                dids: &self.dids,
                revocations: &self.revocations,
                policies: &self.policies,
                wallets: &self.wallets,
            },
        )
        .expect("state is encodable")
    }

    fn check_time(&self, now: u64) -> Result<(), LedgerError> {
        if now < self.now {
            return Err(LedgerError::TimeRegression {
                now,
                last: self.now,
            });
        }
        Ok(())
    }

    fn record(&mut self, now: u64, kind: EventKind, payload: Value, intent: Option<Digest>) -> (u64, Digest) {
        self.now = now;
        let e = self.log.append(kind, payload, intent);
        (e.height, e.event_hash)
    }

    fn next_height(&self) -> u64 {
        self.log.len() as u64
    }

    pub fn register_did(&mut self, doc: DidDocument, now: u64) -> Result<Registration, LedgerError> {
        self.check_time(now)?;
        let payload = serde_json::to_value(&doc).expect("documents are serializable");
        let outcome = self.dids.register(doc)?;
        if outcome == Registration::New {
            self.record(now, EventKind::Registered, payload, None);
        }
        Ok(outcome)
    }

    /// Records a credential's digest so its issuer can later revoke it.
    /// Anchoring the same credential twice is a no-op.
    pub fn anchor_credential(&mut self, cred: &DelegationCredential, now: u64) -> Result<Digest, LedgerError> {
        self.check_time(now)?;
        let id = cred.credential_id;
        if self.revocations.issuer_of(&id).is_some() {
            return Ok(id);
        }
        verify_credential(cred, &self.dids, &self.revocations, now).map_err(LedgerError::Credential)?;
        self.revocations.anchor(id, *cred.issuer());
        self.record(
            now,
            EventKind::Issued,
            json!({"credential_id": id, "issuer": cred.issuer(), "subject": cred.subject(), "at": now}),
            None,
        );
        Ok(id)
    }

    /// Returns whether the revocation is new. Takes effect for every payment
    /// after this event.
    pub fn revoke_credential(&mut self, req: &RevocationRequest, now: u64) -> Result<bool, LedgerError> {
        self.check_time(now)?;
        let height = self.next_height();
        let fresh = self
            .revocations
            .revoke_credential(&req.signature, &req.credential_id, &self.dids, height)?;
        if fresh {
            self.record(
                now,
                EventKind::Revoked,
                json!({"credential_id": req.credential_id, "at": now}),
                None,
            );
        }
        Ok(fresh)
    }

    pub fn deploy_policy(&mut self, deployment: &PolicyDeployment, now: u64) -> Result<Digest, LedgerError> {
        self.check_time(now)?;
        deployment.verify(&self.dids)?;
        if deployment.deployed_at > now {
            return Err(PolicyError::BadRules("deployed_at is in the future".into()).into());
        }
        let id = deployment.policy_id();
        if self.policies.contains_key(&id) {
            return Ok(id);
        }
        self.policies.insert(id, deployment.state());
        self.record(
            now,
            EventKind::PolicyDeployed,
            json!({
                "policy_id": id,
                "owner": deployment.owner,
                "bound_agent": deployment.bound_agent,
                "rules": deployment.rules,
                "deployed_at": deployment.deployed_at,
            }),
            None,
        );
        Ok(id)
    }

    pub fn create_wallet(&mut self, creation: &WalletCreation, now: u64) -> Result<Digest, LedgerError> {
        self.check_time(now)?;
        let owner_doc = self.dids.resolve(&creation.owner)?;
        if !creation.verify_signature(&owner_doc.public_key) {
            return Err(LedgerError::BadSignature);
        }
        if creation.created_at > now {
            return Err(LedgerError::BadConfig("created_at is in the future".into()));
        }
        let cred = &creation.credential;
        if self.revocations.issuer_of(&cred.credential_id).is_none() {
            return Err(LedgerError::BadBinding("credential is not anchored".into()));
        }
        if *cred.issuer() != creation.owner || *cred.subject() != creation.agent {
            return Err(LedgerError::BadBinding(
                "credential must be issued by the owner to the agent".into(),
            ));
        }
        verify_credential(cred, &self.dids, &self.revocations, now).map_err(LedgerError::Credential)?;
        let config = &creation.config;
        let mode = config.intent_mode().map_err(LedgerError::BadConfig)?;
        if let Some(att) = &config.attestation {
            att.validate()
                .map_err(|e| LedgerError::BadConfig(e.to_string()))?;
        }
        let currency = cred.constraints().currency.clone();
        if let IntentMode::Policy { policy_id, .. } = mode {
            let policy = self
                .policies
                .get(&policy_id)
                .ok_or_else(|| LedgerError::BadConfig(format!("unknown policy {policy_id}")))?;
            if policy.owner != creation.owner || policy.bound_agent != creation.agent {
                return Err(LedgerError::BadBinding(
                    "policy must belong to the owner and bind the agent".into(),
                ));
            }
            if policy.rules.currency != currency {
                return Err(LedgerError::BadConfig(
                    "policy currency differs from credential currency".into(),
                ));
            }
        }
        let wallet_id = creation.wallet_id();
        if self.wallets.contains_key(&wallet_id) {
            return Err(LedgerError::DuplicateWallet(wallet_id));
        }
        let state = WalletContractState {
            wallet_id,
            owner: creation.owner,
            agent: creation.agent,
            currency: currency.clone(),
            balance_minor: 0,
            credential: cred.clone(),
            config: config.clone(),
            mandate_consumption: Default::default(),
            period_epoch: cred.constraints().epoch(now),
            period_spend_minor: 0,
            nonce_seen: Default::default(),
            admin_sequence: 0,
        };
        self.wallets.insert(wallet_id, state);
        self.record(
            now,
            EventKind::WalletCreated,
            json!({
                "wallet_id": wallet_id,
                "owner": creation.owner,
                "agent": creation.agent,
                "credential_id": cred.credential_id,
                "currency": currency,
                "config": config,
                "at": now,
            }),
            None,
        );
        Ok(wallet_id)
    }

    /// Sequence number the next admin order for `wallet_id` must carry.
    pub fn admin_sequence(&self, wallet_id: &Digest) -> Option<u64> {
        self.wallets.get(wallet_id).map(|w| w.admin_sequence)
    }

    /// Applies an owner-signed deposit or whitelist update.
    pub fn apply_admin(&mut self, order: &AdminOrder, now: u64) -> Result<(), LedgerError> {
        self.check_time(now)?;
        let wallet = self
            .wallets
            .get(&order.wallet_id)
            .ok_or(LedgerError::UnknownWallet(order.wallet_id))?;
        let owner_doc = self.dids.resolve(&wallet.owner)?;
        if !order.verify_signature(&owner_doc.public_key) {
            return Err(LedgerError::BadSignature);
        }
        if order.sequence != wallet.admin_sequence {
            return Err(LedgerError::SequenceMismatch {
                expected: wallet.admin_sequence,
                got: order.sequence,
            });
        }
        let (kind, payload) = match &order.action {
            AdminAction::Deposit { amount_minor } => {
                let balance = wallet
                    .balance_minor
                    .checked_add(*amount_minor)
                    .ok_or(LedgerError::Overflow)?;
                let w = self.wallets.get_mut(&order.wallet_id).expect("checked above");
                w.balance_minor = balance;
                w.admin_sequence += 1;
                let record = DepositRecord {
                    wallet_id: order.wallet_id,
                    amount_minor: *amount_minor,
                    sequence: order.sequence,
                    balance_after_minor: balance,
                    at: now,
                };
                (EventKind::Deposited, serde_json::to_value(record).expect("serializable"))
            }
            AdminAction::UpdateWhitelist { code_hashes } => {
                if wallet.config.attestation.is_none() {
                    return Err(LedgerError::NoAttestation);
                }
                let w = self.wallets.get_mut(&order.wallet_id).expect("checked above");
                w.config
                    .attestation
                    .as_mut()
                    .expect("checked above")
                    .whitelisted_code_hashes = code_hashes.clone();
                w.admin_sequence += 1;
                (
                    EventKind::WhitelistUpdated,
                    json!({
                        "wallet_id": order.wallet_id,
                        "sequence": order.sequence,
                        "code_hashes": code_hashes,
                        "at": now,
                    }),
                )
            }
        };
        self.record(now, kind, payload, None);
        Ok(())
    }

    /// Runs the payment pipeline and records the verdict. Only a time
    /// regression is an error; every other outcome is a receipt.
    pub fn submit_payment(&mut self, req: &PaymentRequest, now: u64) -> Result<Receipt, LedgerError> {
        self.check_time(now)?;
        let body = &req.body;
        let request_digest = req.payment_digest();
        match self.check_payment(req, now) {
            Ok(approval) => {
                let wallet = self.wallets.get_mut(&body.wallet_id).expect("approved wallets exist");
                wallet.balance_minor -= approval.amount;
                wallet.period_epoch = approval.period_epoch;
                wallet.period_spend_minor = approval.period_spend_after;
                wallet.nonce_seen.insert(body.nonce);
                if let Some(m) = &approval.mandate {
                    wallet.mandate_consumption.apply(m);
                }
                let balance_after = wallet.balance_minor;
                if let Some(p) = approval.policy_after {
                    self.policies.insert(p.policy_id, p);
                }
                let intent_digest = approval.intent.digest();
                let record = AcceptedPayment {
                    wallet_id: body.wallet_id,
                    request_digest,
                    agent: body.agent,
                    payee: body.payee.clone(),
                    item_id: body.item_id.clone(),
                    category: body.category.clone(),
                    currency: body.currency.clone(),
                    unit_price_minor: body.unit_price_minor,
                    quantity: body.quantity,
                    amount_minor: approval.amount,
                    nonce: body.nonce,
                    intent_proof: approval.intent,
                    balance_after_minor: balance_after,
                    at: now,
                };
                let (height, event_hash) = self.record(
                    now,
                    EventKind::PaymentAccepted,
                    serde_json::to_value(record).expect("serializable"),
                    Some(intent_digest),
                );
                Ok(Receipt {
                    verdict: Verdict::Accepted,
                    height,
                    event_hash,
                })
            }
            Err(reason) => {
                let record = RejectedPayment {
                    wallet_id: body.wallet_id,
                    request_digest,
                    agent: body.agent,
                    payee: body.payee.clone(),
                    amount_minor: body.amount(),
                    nonce: body.nonce,
                    reason: reason.code().to_string(),
                    at: now,
                };
                let (height, event_hash) = self.record(
                    now,
                    EventKind::PaymentRejected,
                    serde_json::to_value(record).expect("serializable"),
                    None,
                );
                Ok(Receipt {
                    verdict: Verdict::Rejected(reason),
                    height,
                    event_hash,
                })
            }
        }
    }

    /// The verdict `submit_payment` would record, without recording it.
    pub fn dry_run(&self, req: &PaymentRequest, now: u64) -> Verdict {
        match self.check_payment(req, now) {
            Ok(_) => Verdict::Accepted,
            Err(r) => Verdict::Rejected(r),
        }
    }

    fn check_payment(&self, req: &PaymentRequest, now: u64) -> Result<Approval, PaymentRejection> {
        use PaymentRejection as R;
        let body = &req.body;
        let wallet = self.wallets.get(&body.wallet_id).ok_or(R::UnknownWallet)?;
        let amount = body
            .amount()
            .filter(|_| body.quantity >= 1)
            .ok_or(R::MalformedRequest)?;
        if wallet.nonce_seen.contains(&body.nonce) {
            return Err(R::NonceReplay);
        }

        let agent_doc = self.dids.resolve(&wallet.agent).map_err(|_| R::BadAgentSignature)?;
        if !verifies_canonical(&agent_doc.public_key, body, &req.agent_signature) {
            return Err(R::BadAgentSignature);
        }
        if body.agent != wallet.agent {
            return Err(R::AgentMismatch);
        }

        let cred = &wallet.credential;
        // Signature and controller were verified when the wallet was created;
        // DID documents and the stored credential never change afterwards.
        credential_status(cred, &self.revocations, now)?;
        let constraints = cred.constraints();
        let period_epoch = constraints.epoch(now).max(wallet.period_epoch);
        let period_spend_after = wallet
            .period_spend_at(now)
            .checked_add(amount)
            .filter(|s| *s <= constraints.limit_minor_units)
            .ok_or(R::CredentialLimit)?;
        if body.currency != wallet.currency {
            return Err(R::Currency);
        }
        if !constraints.admits_payee(&body.payee) {
            return Err(R::CredentialPayee);
        }
        if !constraints.admits_category(&body.category) {
            return Err(R::CredentialCategory);
        }

        let (mandate, policy_after, intent) = self.check_intent(wallet, req, amount, now)?;

        if let Some(att) = &wallet.config.attestation {
            verify_quotes(&req.quotes, &req.payment_digest(), att, now)
                .map_err(|_| R::AttestationQuorum)?;
        }
        if wallet.balance_minor < amount {
            return Err(R::InsufficientBalance);
        }
        Ok(Approval {
            amount,
            period_epoch,
            period_spend_after,
            mandate,
            policy_after,
            intent,
        })
    }

    #[allow(clippy::type_complexity)]
    fn check_intent(
        &self,
        wallet: &WalletContractState,
        req: &PaymentRequest,
        amount: u64,
        now: u64,
    ) -> Result<(Option<MandateApproval>, Option<PolicyState>, IntentProofRecord), PaymentRejection> {
        use PaymentRejection as R;
        let body = &req.body;
        let mode = wallet
            .config
            .intent_mode()
            .expect("wallet configs are validated at creation");
        match &body.intent_proof {
            IntentProof::None => Err(R::NoIntentProof),
            IntentProof::Policy => {
                let IntentMode::Policy { policy_id, .. } = mode else {
                    return Err(R::IntentModeMismatch);
                };
                let state = self.policies.get(&policy_id).expect("wallet policies exist");
                let payment = PolicyPayment {
                    amount_minor: amount,
                    payee: &body.payee,
                    category: &body.category,
                    currency: &body.currency,
                    caller: &body.agent,
                };
                let spent_before = state.rolled_over(now).spent_this_epoch_minor;
                let next = evaluate(state, &payment, now)?;
                let record = IntentProofRecord::Policy {
                    policy_id,
                    epoch_index: next.epoch_index,
                    spent_before_minor: spent_before,
                    spent_after_minor: next.spent_this_epoch_minor,
                    amount_minor: amount,
                    nonce: body.nonce,
                };
                Ok((None, Some(next), record))
            }
            IntentProof::Mandate {
                mandate,
                range_proof,
            } => {
                let shape_ok = match mode {
                    IntentMode::PlainMandate
                    | IntentMode::Policy {
                        allow_mandate_override: true,
                        ..
                    } => !mandate.is_committed() && range_proof.is_none(),
                    IntentMode::ZkMandate => mandate.is_committed() && range_proof.is_some(),
                    IntentMode::Policy { .. } => false,
                };
                if !shape_ok {
                    return Err(R::IntentModeMismatch);
                }
                let owner_doc = self.dids.resolve(&wallet.owner).map_err(|_| R::BadMandateSignature)?;
                if mandate.body.issuer != wallet.owner || !mandate.verify_signature(&owner_doc.public_key) {
                    return Err(R::BadMandateSignature);
                }
                if mandate.body.agent != wallet.agent {
                    return Err(R::MandateAgent);
                }
                let payment = MandatePayment {
                    item_id: &body.item_id,
                    unit_price_minor: body.unit_price_minor,
                    quantity: body.quantity,
                    payee: &body.payee,
                    currency: &body.currency,
                };
                let context = compliance_context(&mandate.mandate_id, &body.nonce);
                let evidence = match range_proof {
                    Some(proof) => PriceEvidence::Proof {
                        proof,
                        context: &context,
                    },
                    None => PriceEvidence::Plaintext,
                };
                let approval =
                    check_mandate_with(mandate, &payment, evidence, &wallet.mandate_consumption, now)?;
                let record = IntentProofRecord::Mandate {
                    mandate: mandate.clone(),
                    range_proof_digest: range_proof.as_ref().map(|p| p.digest()),
                    consumed_after: approval.consumed_after,
                };
                Ok((Some(approval), None, record))
            }
        }
    }
}
