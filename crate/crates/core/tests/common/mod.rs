//! Fixtures shared by the integration suites: a builder for a funded wallet
//! on a fresh chain, plus a reference model of the payment rules in
//! `model`.
#![allow(dead_code)]

pub mod model;

use std::collections::BTreeSet;

use rand::{Rng, RngCore};
use tiva_core::attestation::{code_measurement, issue_quote, AttestationPolicy, EnclaveIdentity};
use tiva_core::credential::{issue_credential, DelegationCredential, SpendConstraints};
use tiva_core::identity::sign_revocation;
use tiva_core::ledger::{
    AdminAction, AdminOrder, Chain, IntentProof, PaymentBody, PaymentRequest, Receipt, RevocationRequest,
    WalletConfig, WalletCreation,
};
use tiva_core::mandate::{sign_committed_mandate, sign_mandate, IntentMandate, MandateBody, MandateTerms, PriceLimit, PriceOpening};
use tiva_core::policy::{deploy_policy, PolicyRules};
use tiva_core::zk::{self, compliance_context, derive_blinding, RangeProof};
use tiva_core::{Did, DidDocument, Digest, KeyPair};

pub const GOOD_CODE: &[u8] = b"agent-logic v1";
pub const TAMPERED_CODE: &[u8] = b"agent-logic v1 (tampered)";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Plain,
    Zk,
    Policy,
    PolicyOverride,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Plain, Mode::Zk, Mode::Policy, Mode::PolicyOverride];

    pub fn has_policy(self) -> bool {
        matches!(self, Mode::Policy | Mode::PolicyOverride)
    }

    pub fn takes_plain_mandates(self) -> bool {
        matches!(self, Mode::Plain | Mode::PolicyOverride)
    }
}

/// Enclave quorum: `tampered[i]` marks enclave `i` as running unlisted code.
#[derive(Debug, Clone)]
pub struct QuorumSpec {
    pub k: u64,
    pub tampered: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct WorldSpec {
    pub label: String,
    pub mode: Mode,
    pub constraints: SpendConstraints,
    /// Required for the policy modes.
    pub policy: Option<PolicyRules>,
    pub quorum: Option<QuorumSpec>,
    pub deposit: u64,
    pub start: u64,
}

pub fn constraints(limit: u64, period: u64, currency: &str, expires_at: u64) -> SpendConstraints {
    SpendConstraints {
        limit_minor_units: limit,
        limit_period_seconds: period,
        currency: currency.into(),
        allowed_payees: BTreeSet::new(),
        allowed_categories: BTreeSet::new(),
        expires_at,
    }
}

pub fn rules(per_period: u64, period: u64, currency: &str) -> PolicyRules {
    PolicyRules {
        per_period_limit_minor: per_period,
        period_seconds: period,
        allowed_categories: BTreeSet::new(),
        allowed_payees: BTreeSet::new(),
        per_tx_limit_minor: None,
        currency: currency.into(),
    }
}

impl WorldSpec {
    /// Roomy defaults: large limits, no allow-lists, long expiry.
    pub fn simple(label: &str, mode: Mode) -> Self {
        Self {
            label: label.into(),
            mode,
            constraints: constraints(u64::MAX / 4, 86_400, "USD", u64::MAX / 2),
            policy: mode.has_policy().then(|| rules(u64::MAX / 4, 86_400, "USD")),
            quorum: None,
            deposit: u64::MAX / 8,
            start: 1_000,
        }
    }
}

pub struct World {
    pub chain: Chain,
    pub mode: Mode,
    pub owner: KeyPair,
    pub agent: KeyPair,
    /// A second agent of the same owner, for mandates naming the wrong agent.
    pub other_agent: KeyPair,
    pub owner_did: Did,
    pub agent_did: Did,
    pub other_agent_did: Did,
    pub credential: DelegationCredential,
    pub wallet_id: Digest,
    pub policy_id: Option<Digest>,
    pub enclaves: Vec<EnclaveIdentity>,
    /// Manufacturer key that endorsed the enclaves.
    pub root: KeyPair,
    pub currency: String,
    label: String,
    mandates_signed: u64,
}

impl World {
    pub fn build(spec: &WorldSpec) -> World {
        let now = spec.start;
        let owner = KeyPair::from_label(&format!("{}/owner", spec.label));
        let agent = KeyPair::from_label(&format!("{}/agent", spec.label));
        let other_agent = KeyPair::from_label(&format!("{}/agent-2", spec.label));
        let owner_doc = DidDocument::for_user(owner.public(), now);
        let owner_did = owner_doc.did;
        let agent_doc = DidDocument::for_agent(agent.public(), owner_did, now);
        let other_doc = DidDocument::for_agent(other_agent.public(), owner_did, now);
        let (agent_did, other_agent_did) = (agent_doc.did, other_doc.did);

        let mut chain = Chain::new();
        for doc in [owner_doc, agent_doc, other_doc] {
            chain.register_did(doc, now).unwrap();
        }
        let credential =
            issue_credential(&owner, agent_did, spec.constraints.clone(), now, chain.dids()).unwrap();
        chain.anchor_credential(&credential, now).unwrap();

        let policy_id = if spec.mode.has_policy() {
            let rules = spec.policy.clone().expect("policy modes need rules");
            let deployment = deploy_policy(&owner, agent_did, rules, now, chain.dids()).unwrap();
            Some(chain.deploy_policy(&deployment, now).unwrap())
        } else {
            None
        };

        let root = KeyPair::from_label(&format!("{}/manufacturer", spec.label));
        let good = code_measurement(GOOD_CODE);
        let enclaves: Vec<_> = spec
            .quorum
            .iter()
            .flat_map(|q| q.tampered.iter().copied().enumerate())
            .map(|(i, bad)| {
                let code = code_measurement(if bad { TAMPERED_CODE } else { GOOD_CODE });
                EnclaveIdentity::endorsed(&root, KeyPair::from_label(&format!("{}/enclave-{i}", spec.label)), code)
            })
            .collect();
        let attestation = spec.quorum.as_ref().map(|q| AttestationPolicy {
            root_public_key: root.public(),
            whitelisted_code_hashes: [good].into(),
            required_quotes_k: q.k,
            enclave_set: enclaves.iter().map(EnclaveIdentity::public_key).collect(),
            freshness_window_seconds: 300,
        });

        let config = WalletConfig {
            zk_mode: spec.mode == Mode::Zk,
            policy_id,
            allow_mandate_override: spec.mode == Mode::PolicyOverride,
            attestation,
        };
        let creation = WalletCreation::new(&owner, agent_did, credential.clone(), config, now);
        let wallet_id = chain.create_wallet(&creation, now).unwrap();
        let mut world = World {
            chain,
            mode: spec.mode,
            owner,
            agent,
            other_agent,
            owner_did,
            agent_did,
            other_agent_did,
            credential,
            wallet_id,
            policy_id,
            enclaves,
            root,
            currency: spec.constraints.currency.clone(),
            label: spec.label.clone(),
            mandates_signed: 0,
        };
        if spec.deposit > 0 {
            world.deposit(spec.deposit, now);
        }
        world
    }

    pub fn deposit(&mut self, amount: u64, now: u64) {
        let seq = self.chain.admin_sequence(&self.wallet_id).unwrap();
        let order = AdminOrder::sign(&self.owner, self.wallet_id, seq, AdminAction::Deposit { amount_minor: amount });
        self.chain.apply_admin(&order, now).unwrap();
    }

    pub fn revoke(&mut self, now: u64) -> bool {
        let id = self.credential.credential_id;
        let req = RevocationRequest {
            credential_id: id,
            signature: sign_revocation(&self.owner, &id),
        };
        self.chain.revoke_credential(&req, now).unwrap()
    }

    pub fn balance(&self) -> u64 {
        self.chain.wallet(&self.wallet_id).unwrap().balance_minor
    }

    pub fn terms(&self, item: &str, cap: u64, max_quantity: u64, vendor: &str, expires_at: u64) -> MandateTerms {
        MandateTerms {
            item_id: item.into(),
            max_unit_price_minor: cap,
            max_quantity,
            vendor_account: vendor.into(),
            currency: self.currency.clone(),
            expires_at,
        }
    }

    /// Plaintext mandate from the owner, for `agent` (the wallet agent unless
    /// overridden).
    pub fn plain_mandate(&mut self, terms: MandateTerms, agent: Option<Did>, now: u64) -> IntentMandate {
        self.mandates_signed += 1;
        let agent = agent.unwrap_or(self.agent_did);
        sign_mandate(&self.owner, agent, terms, now, self.chain.dids()).unwrap()
    }

    pub fn committed_mandate(
        &mut self,
        terms: MandateTerms,
        agent: Option<Did>,
        now: u64,
    ) -> (IntentMandate, PriceOpening) {
        self.mandates_signed += 1;
        let blinding = derive_blinding(
            &self.owner.seed(),
            format!("{}/mandate-{}", self.label, self.mandates_signed).as_bytes(),
        );
        let agent = agent.unwrap_or(self.agent_did);
        sign_committed_mandate(&self.owner, agent, terms, blinding, now, self.chain.dids()).unwrap()
    }

    /// A mandate that names the owner as issuer but is signed by `forger`.
    pub fn forged_mandate(
        &self,
        forger: &KeyPair,
        terms: &MandateTerms,
        commit_with: Option<&PriceOpening>,
        now: u64,
    ) -> IntentMandate {
        let price_limit = match commit_with {
            Some(o) => PriceLimit::Committed(zk::commit(o.max_unit_price_minor, &o.blinding).unwrap()),
            None => PriceLimit::Plain(terms.max_unit_price_minor),
        };
        let body = MandateBody {
            issuer: self.owner_did,
            agent: self.agent_did,
            item_id: terms.item_id.clone(),
            price_limit,
            max_quantity: terms.max_quantity,
            vendor_account: terms.vendor_account.clone(),
            currency: terms.currency.clone(),
            expires_at: terms.expires_at,
            issued_at: now,
        };
        let signature = forger.sign_canonical(&body).unwrap();
        IntentMandate {
            mandate_id: body.id(),
            body,
            signature,
        }
    }

    pub fn body(&self, payee: &str, item: &str, price: u64, quantity: u64, nonce: Digest, intent: IntentProof) -> PaymentBody {
        PaymentBody {
            wallet_id: self.wallet_id,
            agent: self.agent_did,
            payee: payee.into(),
            item_id: item.into(),
            unit_price_minor: price,
            quantity,
            category: "general".into(),
            currency: self.currency.clone(),
            nonce,
            intent_proof: intent,
        }
    }

    /// Signs `body` and attaches quotes from the enclaves in `quoting`, all
    /// issued at `issued_at`.
    pub fn request(&self, signer: &KeyPair, body: PaymentBody, quoting: &[usize], issued_at: u64) -> PaymentRequest {
        let mut req = PaymentRequest::sign(signer, body, Vec::new());
        let digest = req.payment_digest();
        req.quotes = quoting
            .iter()
            .map(|&i| issue_quote(&self.enclaves[i], digest, issued_at))
            .collect();
        req
    }

    /// Honest request: agent-signed, quoted by every enclave.
    pub fn honest(&self, body: PaymentBody, now: u64) -> PaymentRequest {
        let all: Vec<usize> = (0..self.enclaves.len()).collect();
        self.request(&self.agent, body, &all, now)
    }

    pub fn submit(&mut self, req: &PaymentRequest, now: u64) -> Receipt {
        self.chain.submit_payment(req, now).unwrap()
    }
}

/// Range proof that `price` is within the committed cap, bound to the
/// mandate and nonce the wallet will check it against.
pub fn price_proof(mandate: &IntentMandate, opening: &PriceOpening, price: u64, nonce: &Digest) -> Option<RangeProof> {
    let ctx = compliance_context(&mandate.mandate_id, nonce);
    zk::prove_price_within_limit(opening.max_unit_price_minor, &opening.blinding, price, &ctx).ok()
}

pub fn random_keypair(rng: &mut impl RngCore) -> KeyPair {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    KeyPair::from_seed(&seed).unwrap()
}

pub fn random_nonce(rng: &mut impl RngCore) -> Digest {
    let mut n = [0u8; 32];
    rng.fill_bytes(&mut n);
    Digest(n)
}

pub fn pick<'a, T>(rng: &mut impl Rng, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}
