//! Straight-line reference model of the wallet's payment rules.
//!
//! It never looks at signatures, commitments or proofs. The request
//! generator labels each request with the ground truth (who signed it,
//! whether a proof is honest, how many distinct good quotes it carries) and
//! the model derives the verdict from those labels and its own bookkeeping.
//! Verdicts are reason codes as strings.

use std::collections::{BTreeMap, BTreeSet};

use super::Mode;

#[derive(Debug, Clone)]
pub struct CredentialTerms {
    pub limit: u64,
    pub period: u64,
    pub currency: String,
    pub payees: BTreeSet<String>,
    pub categories: BTreeSet<String>,
    pub expires_at: u64,
}

#[derive(Debug, Clone)]
pub struct PolicyTerms {
    pub per_period: u64,
    pub period: u64,
    pub categories: BTreeSet<String>,
    pub payees: BTreeSet<String>,
    pub per_tx: Option<u64>,
}

/// What the model knows about a mandate.
#[derive(Debug, Clone)]
pub struct MandateFacts {
    pub key: usize,
    /// Signed by the wallet owner and untouched since.
    pub genuine: bool,
    /// Names the wallet's agent.
    pub for_wallet_agent: bool,
    pub committed: bool,
    pub item: String,
    pub vendor: String,
    pub currency: String,
    pub cap: u64,
    pub max_quantity: u64,
    pub expires_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProofFacts {
    Absent,
    /// Generated for exactly this price, mandate and nonce.
    Honest,
    /// Anything else: another price, nonce or commitment.
    Bogus,
}

#[derive(Debug, Clone)]
pub enum IntentFacts {
    None,
    Policy,
    Mandate(MandateFacts, ProofFacts),
}

#[derive(Debug, Clone)]
pub struct Attempt {
    pub at: u64,
    pub wallet_known: bool,
    pub signed_by_agent: bool,
    pub names_wallet_agent: bool,
    pub nonce: [u8; 32],
    pub payee: String,
    pub item: String,
    pub category: String,
    pub currency: String,
    pub unit_price: u64,
    pub quantity: u64,
    pub intent: IntentFacts,
    /// Distinct enclaves with a fresh, bound quote from whitelisted code.
    pub good_quotes: usize,
}

pub struct Model {
    pub mode: Mode,
    pub cred: CredentialTerms,
    pub policy: Option<PolicyTerms>,
    pub quorum: Option<usize>,
    pub balance: u64,
    pub revoked: bool,
    used_nonces: BTreeSet<[u8; 32]>,
    cred_window: u64,
    cred_spent: u64,
    policy_window: u64,
    policy_spent: u64,
    units: BTreeMap<usize, u64>,
}

fn allowed(list: &BTreeSet<String>, x: &str) -> bool {
    list.is_empty() || list.contains(x)
}

impl Model {
    pub fn new(
        mode: Mode,
        cred: CredentialTerms,
        policy: Option<PolicyTerms>,
        quorum: Option<usize>,
        created_at: u64,
    ) -> Self {
        let cred_window = created_at / cred.period;
        let policy_window = policy.as_ref().map_or(0, |p| created_at / p.period);
        Self {
            mode,
            cred,
            policy,
            quorum,
            balance: 0,
            revoked: false,
            used_nonces: BTreeSet::new(),
            cred_window,
            cred_spent: 0,
            policy_window,
            policy_spent: 0,
            units: BTreeMap::new(),
        }
    }

    pub fn units_used(&self, mandate_key: usize) -> u64 {
        self.units.get(&mandate_key).copied().unwrap_or(0)
    }

    /// Decides `a` and, if accepted, books it.
    pub fn decide(&mut self, a: &Attempt) -> Result<(), &'static str> {
        if !a.wallet_known {
            return Err("UnknownWallet");
        }
        if a.quantity == 0 {
            return Err("MalformedRequest");
        }
        let amount = (a.unit_price as u128) * (a.quantity as u128);
        if amount > u64::MAX as u128 {
            return Err("MalformedRequest");
        }
        let amount = amount as u64;
        if self.used_nonces.contains(&a.nonce) {
            return Err("NonceReplay");
        }
        if !a.signed_by_agent {
            return Err("BadAgentSignature");
        }
        if !a.names_wallet_agent {
            return Err("AgentMismatch");
        }
        if self.revoked {
            return Err("Revoked");
        }
        if a.at > self.cred.expires_at {
            return Err("CredentialExpired");
        }

        let cred_window = a.at / self.cred.period;
        let cred_spent = if cred_window > self.cred_window { 0 } else { self.cred_spent };
        if cred_spent as u128 + amount as u128 > self.cred.limit as u128 {
            return Err("CredentialLimit");
        }
        if a.currency != self.cred.currency {
            return Err("Currency");
        }
        if !allowed(&self.cred.payees, &a.payee) {
            return Err("CredentialPayee");
        }
        if !allowed(&self.cred.categories, &a.category) {
            return Err("CredentialCategory");
        }

        let mut policy_after = None;
        let mut units_after = None;
        match &a.intent {
            IntentFacts::None => return Err("NoIntentProof"),
            IntentFacts::Policy => {
                let Some(p) = &self.policy else {
                    return Err("IntentModeMismatch");
                };
                let window = a.at / p.period;
                let spent = if window > self.policy_window { 0 } else { self.policy_spent };
                // Caller and currency already match: the agent and the
                // payment currency were checked above and the policy shares
                // the credential's currency.
                if !allowed(&p.categories, &a.category) {
                    return Err("PolicyCategory");
                }
                if !allowed(&p.payees, &a.payee) {
                    return Err("PolicyPayee");
                }
                if p.per_tx.is_some_and(|cap| amount > cap) {
                    return Err("PolicyPerTx");
                }
                if spent as u128 + amount as u128 > p.per_period as u128 {
                    return Err("PolicyPerPeriod");
                }
                policy_after = Some((window.max(self.policy_window), spent + amount));
            }
            IntentFacts::Mandate(m, proof) => {
                let shape_ok = match self.mode {
                    Mode::Plain | Mode::PolicyOverride => !m.committed && *proof == ProofFacts::Absent,
                    Mode::Zk => m.committed && *proof != ProofFacts::Absent,
                    Mode::Policy => false,
                };
                if !shape_ok {
                    return Err("IntentModeMismatch");
                }
                if !m.genuine {
                    return Err("BadMandateSignature");
                }
                if !m.for_wallet_agent {
                    return Err("MandateAgent");
                }
                if a.at > m.expires_at {
                    return Err("MandateExpired");
                }
                if a.item != m.item {
                    return Err("Item");
                }
                if a.payee != m.vendor {
                    return Err("Vendor");
                }
                if a.currency != m.currency {
                    return Err("MandateCurrency");
                }
                let price_ok = if m.committed {
                    *proof == ProofFacts::Honest && a.unit_price <= m.cap
                } else {
                    a.unit_price <= m.cap
                };
                if !price_ok {
                    return Err("Price");
                }
                let used = self.units_used(m.key);
                if used as u128 + a.quantity as u128 > m.max_quantity as u128 {
                    return Err("Quantity");
                }
                units_after = Some((m.key, used + a.quantity));
            }
        }

        if let Some(k) = self.quorum {
            if a.good_quotes < k {
                return Err("AttestationQuorum");
            }
        }
        if self.balance < amount {
            return Err("InsufficientBalance");
        }

        self.balance -= amount;
        self.used_nonces.insert(a.nonce);
        self.cred_window = cred_window.max(self.cred_window);
        self.cred_spent = cred_spent + amount;
        if let Some((w, s)) = policy_after {
            self.policy_window = w;
            self.policy_spent = s;
        }
        if let Some((k, u)) = units_after {
            self.units.insert(k, u);
        }
        Ok(())
    }
}
