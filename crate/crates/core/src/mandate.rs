//! Pre-signed, transaction-scoped intent mandates.
//!
//! A mandate is a quantity budget: payments may draw on it repeatedly until
//! `max_quantity` units are used. The unit-price cap is either plaintext or,
//! in privacy mode, a Pedersen commitment whose opening only the agent holds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::credential::is_currency_code;
use crate::crypto::{digest_canonical, domain, verifies_canonical, Digest, KeyPair, PublicKey, Signature};
use crate::group::Scalar;
use crate::identity::{Did, DidRegistry};
use crate::zk::{self, Commitment, RangeProof};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MandateError {
    #[error("bad mandate body: {0}")]
    BadBody(String),
    #[error("agent is not controlled by the mandate issuer")]
    AgentNotControlled,
}

/// Unit-price cap, flattened into the mandate as either
/// `max_unit_price_minor` or `max_unit_price_commitment`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriceLimit {
    #[serde(rename = "max_unit_price_minor")]
    Plain(u64),
    #[serde(rename = "max_unit_price_commitment")]
    Committed(Commitment),
}

/// What the user wants to authorize.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MandateTerms {
    pub item_id: String,
    pub max_unit_price_minor: u64,
    pub max_quantity: u64,
    pub vendor_account: String,
    pub currency: String,
    pub expires_at: u64,
}

impl MandateTerms {
    fn validate(&self) -> Result<(), MandateError> {
        let bad = |m: &str| Err(MandateError::BadBody(m.to_string()));
        if self.max_quantity == 0 {
            return bad("max_quantity must be at least 1");
        }
        if self.item_id.is_empty() {
            return bad("item_id must be nonempty");
        }
        if self.vendor_account.is_empty() {
            return bad("vendor_account must be nonempty");
        }
        if !is_currency_code(&self.currency) {
            return bad("currency must be a short uppercase code");
        }
        Ok(())
    }
}

/// The signed part of a mandate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MandateBody {
    pub issuer: Did,
    pub agent: Did,
    pub item_id: String,
    #[serde(flatten)]
    pub price_limit: PriceLimit,
    pub max_quantity: u64,
    pub vendor_account: String,
    pub currency: String,
    pub expires_at: u64,
    pub issued_at: u64,
}

impl MandateBody {
    pub fn id(&self) -> Digest {
        digest_canonical(domain::MANDATE, self).expect("mandate body is encodable")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentMandate {
    pub mandate_id: Digest,
    #[serde(flatten)]
    pub body: MandateBody,
    pub signature: Signature,
}

impl IntentMandate {
    /// True iff the id matches the body and the signature verifies under
    /// `issuer_key`.
    pub fn verify_signature(&self, issuer_key: &PublicKey) -> bool {
        self.mandate_id == self.body.id()
            && verifies_canonical(issuer_key, &self.body, &self.signature)
    }

    pub fn is_committed(&self) -> bool {
        matches!(self.body.price_limit, PriceLimit::Committed(_))
    }
}

/// Opening of a committed price cap, handed to the agent off-ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceOpening {
    pub max_unit_price_minor: u64,
    pub blinding: Scalar,
}

fn sign_body(
    user: &KeyPair,
    agent: Did,
    terms: MandateTerms,
    price_limit: PriceLimit,
    now: u64,
    registry: &DidRegistry,
) -> Result<IntentMandate, MandateError> {
    terms.validate()?;
    let issuer = Did::from_public_key(&user.public());
    if !registry.controls(&issuer, &agent) {
        return Err(MandateError::AgentNotControlled);
    }
    let body = MandateBody {
        issuer,
        agent,
        item_id: terms.item_id,
        price_limit,
        max_quantity: terms.max_quantity,
        vendor_account: terms.vendor_account,
        currency: terms.currency,
        expires_at: terms.expires_at,
        issued_at: now,
    };
    let signature = user.sign_canonical(&body).expect("mandate body is encodable");
    Ok(IntentMandate {
        mandate_id: body.id(),
        body,
        signature,
    })
}

/// Signs a plaintext mandate. An already-expired mandate is created but will
/// never match a payment.
pub fn sign_mandate(
    user: &KeyPair,
    agent: Did,
    terms: MandateTerms,
    now: u64,
    registry: &DidRegistry,
) -> Result<IntentMandate, MandateError> {
    let limit = PriceLimit::Plain(terms.max_unit_price_minor);
    sign_body(user, agent, terms, limit, now, registry)
}

/// Signs a mandate whose price cap is replaced by a commitment.
pub fn sign_committed_mandate(
    user: &KeyPair,
    agent: Did,
    terms: MandateTerms,
    blinding: Scalar,
    now: u64,
    registry: &DidRegistry,
) -> Result<(IntentMandate, PriceOpening), MandateError> {
    let cap = terms.max_unit_price_minor;
    let commitment = zk::commit(cap, &blinding).map_err(|e| MandateError::BadBody(e.to_string()))?;
    let mandate = sign_body(user, agent, terms, PriceLimit::Committed(commitment), now, registry)?;
    Ok((
        mandate,
        PriceOpening {
            max_unit_price_minor: cap,
            blinding,
        },
    ))
}

/// The parts of a payment a mandate constrains.
#[derive(Debug, Clone, Copy)]
pub struct MandatePayment<'a> {
    pub item_id: &'a str,
    pub unit_price_minor: u64,
    pub quantity: u64,
    pub payee: &'a str,
    pub currency: &'a str,
}

/// Checked in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MandateRejection {
    Expired,
    Item,
    Vendor,
    Currency,
    Price,
    Quantity,
}

/// Units consumed per mandate. Never exceeds the mandate's `max_quantity`
/// and never decreases.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MandateConsumption {
    consumed: BTreeMap<Digest, u64>,
}

impl MandateConsumption {
    pub fn consumed(&self, mandate_id: &Digest) -> u64 {
        self.consumed.get(mandate_id).copied().unwrap_or(0)
    }

    pub fn apply(&mut self, approval: &MandateApproval) {
        let entry = self.consumed.entry(approval.mandate_id).or_insert(0);
        debug_assert!(approval.consumed_after >= *entry);
        *entry = approval.consumed_after;
    }
}

/// New consumption level for one mandate after an approved payment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MandateApproval {
    pub mandate_id: Digest,
    pub consumed_after: u64,
}

/// How the price cap is checked.
#[derive(Debug, Clone, Copy)]
pub enum PriceEvidence<'a> {
    /// Compare against a plaintext cap.
    Plaintext,
    /// Verify a range proof against a committed cap.
    Proof {
        proof: &'a RangeProof,
        context: &'a Digest,
    },
}

fn price_within(mandate: &IntentMandate, unit_price: u64, evidence: PriceEvidence<'_>) -> bool {
    match (&mandate.body.price_limit, evidence) {
        (PriceLimit::Plain(cap), PriceEvidence::Plaintext) => unit_price <= *cap,
        (PriceLimit::Committed(c), PriceEvidence::Proof { proof, context }) => {
            zk::verify_price_within_limit(c, unit_price, proof, context)
        }
        _ => false,
    }
}

/// Matches a payment against a mandate whose signature the caller has
/// already verified.
pub fn check_mandate_with(
    mandate: &IntentMandate,
    payment: &MandatePayment<'_>,
    evidence: PriceEvidence<'_>,
    consumption: &MandateConsumption,
    now: u64,
) -> Result<MandateApproval, MandateRejection> {
    let body = &mandate.body;
    if now > body.expires_at {
        return Err(MandateRejection::Expired);
    }
    if payment.item_id != body.item_id {
        return Err(MandateRejection::Item);
    }
    if payment.payee != body.vendor_account {
        return Err(MandateRejection::Vendor);
    }
    if payment.currency != body.currency {
        return Err(MandateRejection::Currency);
    }
    if !price_within(mandate, payment.unit_price_minor, evidence) {
        return Err(MandateRejection::Price);
    }
    let consumed_after = consumption
        .consumed(&mandate.mandate_id)
        .checked_add(payment.quantity)
        .filter(|total| *total <= body.max_quantity)
        .ok_or(MandateRejection::Quantity)?;
    Ok(MandateApproval {
        mandate_id: mandate.mandate_id,
        consumed_after,
    })
}

/// Plaintext mandate check.
pub fn check_mandate(
    mandate: &IntentMandate,
    payment: &MandatePayment<'_>,
    consumption: &MandateConsumption,
    now: u64,
) -> Result<MandateApproval, MandateRejection> {
    check_mandate_with(mandate, payment, PriceEvidence::Plaintext, consumption, now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::DidDocument;
    use crate::zk::{compliance_context, derive_blinding, prove_price_within_limit};

    struct Fixture {
        user: KeyPair,
        agent: Did,
        registry: DidRegistry,
    }

    fn fixture() -> Fixture {
        let user = KeyPair::from_label("user");
        let agent_kp = KeyPair::from_label("agent");
        let mut registry = DidRegistry::new();
        let u = DidDocument::for_user(user.public(), 0);
        registry.register(u.clone()).unwrap();
        let a = DidDocument::for_agent(agent_kp.public(), u.did, 0);
        registry.register(a.clone()).unwrap();
        Fixture {
            user,
            agent: a.did,
            registry,
        }
    }

    /// "up to 3 units of item Z at <= $100 each from vendor Y"
    fn three_units_of_z() -> MandateTerms {
        MandateTerms {
            item_id: "Z".into(),
            max_unit_price_minor: 10_000,
            max_quantity: 3,
            vendor_account: "vendor-Y".into(),
            currency: "USD".into(),
            expires_at: 5_000,
        }
    }

    fn pay(price: u64, qty: u64) -> MandatePayment<'static> {
        MandatePayment {
            item_id: "Z",
            unit_price_minor: price,
            quantity: qty,
            payee: "vendor-Y",
            currency: "USD",
        }
    }

    #[test]
    fn signed_mandate_verifies() {
        let f = fixture();
        let m = sign_mandate(&f.user, f.agent, three_units_of_z(), 100, &f.registry).unwrap();
        assert!(m.verify_signature(&f.user.public()));
        assert_eq!(m.mandate_id, m.body.id());
        assert!(!m.verify_signature(&KeyPair::from_label("mallory").public()));
    }

    #[test]
    fn zero_quantity_is_bad_body() {
        let f = fixture();
        let mut t = three_units_of_z();
        t.max_quantity = 0;
        assert!(matches!(
            sign_mandate(&f.user, f.agent, t, 1, &f.registry),
            Err(MandateError::BadBody(_))
        ));
    }

    #[test]
    fn foreign_agent_is_rejected() {
        let f = fixture();
        let stranger = KeyPair::from_label("stranger");
        assert_eq!(
            sign_mandate(&stranger, f.agent, three_units_of_z(), 1, &f.registry),
            Err(MandateError::AgentNotControlled)
        );
    }

    #[test]
    fn expired_mandate_never_matches() {
        let f = fixture();
        let mut t = three_units_of_z();
        t.expires_at = 50;
        let m = sign_mandate(&f.user, f.agent, t, 100, &f.registry).unwrap();
        let c = MandateConsumption::default();
        assert_eq!(check_mandate(&m, &pay(1, 1), &c, 100), Err(MandateRejection::Expired));
    }

    #[test]
    fn boundary_values_of_three_unit_mandate() {
        let f = fixture();
        let m = sign_mandate(&f.user, f.agent, three_units_of_z(), 100, &f.registry).unwrap();
        let mut c = MandateConsumption::default();
        let ok = check_mandate(&m, &pay(10_000, 3), &c, 5_000).unwrap();
        assert_eq!(ok.consumed_after, 3);
        c.apply(&ok);
        assert_eq!(c.consumed(&m.mandate_id), 3);
        assert_eq!(
            check_mandate(&m, &pay(1, 1), &c, 5_000),
            Err(MandateRejection::Quantity)
        );
        let fresh = MandateConsumption::default();
        assert_eq!(
            check_mandate(&m, &pay(10_001, 1), &fresh, 5_000),
            Err(MandateRejection::Price)
        );
    }

    #[test]
    fn two_then_two_exceeds_budget() {
        let f = fixture();
        let m = sign_mandate(&f.user, f.agent, three_units_of_z(), 100, &f.registry).unwrap();
        let mut c = MandateConsumption::default();
        let first = check_mandate(&m, &pay(500, 2), &c, 200).unwrap();
        c.apply(&first);
        assert_eq!(check_mandate(&m, &pay(500, 2), &c, 200), Err(MandateRejection::Quantity));
        assert_eq!(check_mandate(&m, &pay(500, 1), &c, 200).unwrap().consumed_after, 3);
    }

    #[test]
    fn rejection_order() {
        let f = fixture();
        let m = sign_mandate(&f.user, f.agent, three_units_of_z(), 100, &f.registry).unwrap();
        let c = MandateConsumption::default();
        let all_wrong = MandatePayment {
            item_id: "W",
            unit_price_minor: 99_999,
            quantity: 9,
            payee: "vendor-Q",
            currency: "EUR",
        };
        assert_eq!(check_mandate(&m, &all_wrong, &c, 9_999), Err(MandateRejection::Expired));
        assert_eq!(check_mandate(&m, &all_wrong, &c, 1), Err(MandateRejection::Item));
        let p = MandatePayment { item_id: "Z", ..all_wrong };
        assert_eq!(check_mandate(&m, &p, &c, 1), Err(MandateRejection::Vendor));
        let p = MandatePayment { payee: "vendor-Y", ..p };
        assert_eq!(check_mandate(&m, &p, &c, 1), Err(MandateRejection::Currency));
        let p = MandatePayment { currency: "USD", ..p };
        assert_eq!(check_mandate(&m, &p, &c, 1), Err(MandateRejection::Price));
        let p = MandatePayment { unit_price_minor: 1, ..p };
        assert_eq!(check_mandate(&m, &p, &c, 1), Err(MandateRejection::Quantity));
    }

    #[test]
    fn quantity_overflow_is_rejected() {
        let f = fixture();
        let m = sign_mandate(&f.user, f.agent, three_units_of_z(), 100, &f.registry).unwrap();
        let mut c = MandateConsumption::default();
        c.apply(&check_mandate(&m, &pay(1, 1), &c, 1).unwrap());
        assert_eq!(
            check_mandate(&m, &pay(1, u64::MAX), &c, 1),
            Err(MandateRejection::Quantity)
        );
    }

    #[test]
    fn committed_mandate_checks_price_by_proof() {
        let f = fixture();
        let blinding = derive_blinding(b"user secret", b"mandate-1");
        let (m, opening) =
            sign_committed_mandate(&f.user, f.agent, three_units_of_z(), blinding, 100, &f.registry)
                .unwrap();
        assert!(m.is_committed());
        assert!(m.verify_signature(&f.user.public()));
        let text = String::from_utf8(crate::encoding::canonical_encode(&m).unwrap()).unwrap();
        assert!(text.contains("max_unit_price_commitment"));
        assert!(!text.contains("10000"));

        let nonce = Digest([9; 32]);
        let context = compliance_context(&m.mandate_id, &nonce);
        let proof =
            prove_price_within_limit(opening.max_unit_price_minor, &opening.blinding, 9_900, &context)
                .unwrap();
        let c = MandateConsumption::default();
        let ev = PriceEvidence::Proof { proof: &proof, context: &context };
        assert!(check_mandate_with(&m, &pay(9_900, 1), ev, &c, 200).is_ok());
        // The same proof does not cover a higher public price.
        assert_eq!(
            check_mandate_with(&m, &pay(9_901, 1), ev, &c, 200),
            Err(MandateRejection::Price)
        );
        // A committed cap cannot be checked in plaintext.
        assert_eq!(check_mandate(&m, &pay(9_900, 1), &c, 200), Err(MandateRejection::Price));
    }

    #[test]
    fn committed_cap_must_fit_range() {
        let f = fixture();
        let mut t = three_units_of_z();
        t.max_unit_price_minor = 1 << 40;
        assert!(matches!(
            sign_committed_mandate(&f.user, f.agent, t, Scalar::ONE, 1, &f.registry),
            Err(MandateError::BadBody(_))
        ));
    }
}
