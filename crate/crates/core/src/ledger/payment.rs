//! Payment requests, intent proofs and rejection reasons.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::attestation::AttestationQuote;
use crate::credential::CredentialRejection;
use crate::crypto::{digest, digest_canonical, domain, Digest, KeyPair, Signature};
use crate::identity::Did;
use crate::mandate::{IntentMandate, MandateRejection};
use crate::policy::PolicyDenial;
use crate::zk::RangeProof;

/// Evidence of user intent attached to a payment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentProof {
    Mandate {
        mandate: IntentMandate,
        /// Required for mandates whose price cap is committed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        range_proof: Option<RangeProof>,
    },
    /// Ask the wallet's policy contract to authorize the payment.
    Policy,
    None,
}

/// The agent-signed part of a payment request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentBody {
    pub wallet_id: Digest,
    pub agent: Did,
    pub payee: String,
    pub item_id: String,
    pub unit_price_minor: u64,
    pub quantity: u64,
    pub category: String,
    pub currency: String,
    pub nonce: Digest,
    pub intent_proof: IntentProof,
}

impl PaymentBody {
    /// Digest enclave quotes bind to as their report data.
    pub fn digest(&self) -> Digest {
        digest_canonical(domain::PAYMENT, self).expect("payment body is encodable")
    }

    /// `unit_price × quantity`, `None` on overflow.
    pub fn amount(&self) -> Option<u64> {
        self.unit_price_minor.checked_mul(self.quantity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentRequest {
    #[serde(flatten)]
    pub body: PaymentBody,
    #[serde(default)]
    pub quotes: Vec<AttestationQuote>,
    pub agent_signature: Signature,
}

impl PaymentRequest {
    /// Signs `body`. Quotes are not covered by the agent signature; each is
    /// bound to the body digest by its enclave.
    pub fn sign(agent: &KeyPair, body: PaymentBody, quotes: Vec<AttestationQuote>) -> Self {
        let agent_signature = agent.sign_canonical(&body).expect("payment body is encodable");
        Self {
            body,
            quotes,
            agent_signature,
        }
    }

    pub fn payment_digest(&self) -> Digest {
        self.body.digest()
    }
}

/// Nonce derived from a caller-chosen label.
pub fn payment_nonce(label: &str) -> Digest {
    digest(domain::NONCE, label.as_bytes())
}

/// Why the wallet refused a payment. Pipeline stages run in the order the
/// variants are declared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PaymentRejection {
    UnknownWallet,
    MalformedRequest,
    NonceReplay,
    BadAgentSignature,
    AgentMismatch,
    BadCredentialSignature,
    CredentialController,
    Revoked,
    CredentialExpired,
    CredentialLimit,
    Currency,
    CredentialPayee,
    CredentialCategory,
    NoIntentProof,
    IntentModeMismatch,
    BadMandateSignature,
    MandateAgent,
    MandateExpired,
    Item,
    Vendor,
    MandateCurrency,
    Price,
    Quantity,
    PolicyCaller,
    PolicyCurrency,
    PolicyCategory,
    PolicyPayee,
    PolicyPerTx,
    PolicyPerPeriod,
    AttestationQuorum,
    InsufficientBalance,
}

impl PaymentRejection {
    pub const ALL: [PaymentRejection; 31] = [
        Self::UnknownWallet,
        Self::MalformedRequest,
        Self::NonceReplay,
        Self::BadAgentSignature,
        Self::AgentMismatch,
        Self::BadCredentialSignature,
        Self::CredentialController,
        Self::Revoked,
        Self::CredentialExpired,
        Self::CredentialLimit,
        Self::Currency,
        Self::CredentialPayee,
        Self::CredentialCategory,
        Self::NoIntentProof,
        Self::IntentModeMismatch,
        Self::BadMandateSignature,
        Self::MandateAgent,
        Self::MandateExpired,
        Self::Item,
        Self::Vendor,
        Self::MandateCurrency,
        Self::Price,
        Self::Quantity,
        Self::PolicyCaller,
        Self::PolicyCurrency,
        Self::PolicyCategory,
        Self::PolicyPayee,
        Self::PolicyPerTx,
        Self::PolicyPerPeriod,
        Self::AttestationQuorum,
        Self::InsufficientBalance,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            Self::UnknownWallet => "UnknownWallet",
            Self::MalformedRequest => "MalformedRequest",
            Self::NonceReplay => "NonceReplay",
            Self::BadAgentSignature => "BadAgentSignature",
            Self::AgentMismatch => "AgentMismatch",
            Self::BadCredentialSignature => "BadCredentialSignature",
            Self::CredentialController => "CredentialController",
            Self::Revoked => "Revoked",
            Self::CredentialExpired => "CredentialExpired",
            Self::CredentialLimit => "CredentialLimit",
            Self::Currency => "Currency",
            Self::CredentialPayee => "CredentialPayee",
            Self::CredentialCategory => "CredentialCategory",
            Self::NoIntentProof => "NoIntentProof",
            Self::IntentModeMismatch => "IntentModeMismatch",
            Self::BadMandateSignature => "BadMandateSignature",
            Self::MandateAgent => "MandateAgent",
            Self::MandateExpired => "MandateExpired",
            Self::Item => "Item",
            Self::Vendor => "Vendor",
            Self::MandateCurrency => "MandateCurrency",
            Self::Price => "Price",
            Self::Quantity => "Quantity",
            Self::PolicyCaller => "PolicyCaller",
            Self::PolicyCurrency => "PolicyCurrency",
            Self::PolicyCategory => "PolicyCategory",
            Self::PolicyPayee => "PolicyPayee",
            Self::PolicyPerTx => "PolicyPerTx",
            Self::PolicyPerPeriod => "PolicyPerPeriod",
            Self::AttestationQuorum => "AttestationQuorum",
            Self::InsufficientBalance => "InsufficientBalance",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|r| r.code() == code)
    }
}

impl fmt::Display for PaymentRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl From<CredentialRejection> for PaymentRejection {
    fn from(r: CredentialRejection) -> Self {
        match r {
            CredentialRejection::BadSignature => Self::BadCredentialSignature,
            CredentialRejection::Controller => Self::CredentialController,
            CredentialRejection::Revoked => Self::Revoked,
            CredentialRejection::Expired => Self::CredentialExpired,
        }
    }
}

impl From<MandateRejection> for PaymentRejection {
    fn from(r: MandateRejection) -> Self {
        match r {
            MandateRejection::Expired => Self::MandateExpired,
            MandateRejection::Item => Self::Item,
            MandateRejection::Vendor => Self::Vendor,
            MandateRejection::Currency => Self::MandateCurrency,
            MandateRejection::Price => Self::Price,
            MandateRejection::Quantity => Self::Quantity,
        }
    }
}

impl From<PolicyDenial> for PaymentRejection {
    fn from(d: PolicyDenial) -> Self {
        match d {
            PolicyDenial::Caller => Self::PolicyCaller,
            PolicyDenial::Currency => Self::PolicyCurrency,
            PolicyDenial::Category => Self::PolicyCategory,
            PolicyDenial::Payee => Self::PolicyPayee,
            PolicyDenial::PerTx => Self::PolicyPerTx,
            PolicyDenial::PerPeriod => Self::PolicyPerPeriod,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip_and_are_unique() {
        let mut seen = std::collections::HashSet::new();
        for r in PaymentRejection::ALL {
            assert!(seen.insert(r.code()));
            assert_eq!(PaymentRejection::from_code(r.code()), Some(r));
        }
        assert_eq!(PaymentRejection::from_code("Nope"), None);
    }

    #[test]
    fn amount_overflow() {
        let body = PaymentBody {
            wallet_id: Digest::ZERO,
            agent: Did::from_public_key(&KeyPair::from_label("a").public()),
            payee: "p".into(),
            item_id: "i".into(),
            unit_price_minor: u64::MAX,
            quantity: 2,
            category: "c".into(),
            currency: "USD".into(),
            nonce: payment_nonce("n"),
            intent_proof: IntentProof::None,
        };
        assert_eq!(body.amount(), None);
        let ok = PaymentBody { quantity: 1, ..body };
        assert_eq!(ok.amount(), Some(u64::MAX));
    }
}
