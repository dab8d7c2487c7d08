//! User-signed delegation credentials.
//!
//! A credential states an agent's standing authority: a periodic spending
//! limit, optional payee and category allow-lists (empty means unrestricted)
//! and an expiry. `credential_id` is the hash of the unsigned body.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{digest_canonical, domain, verifies_canonical, Digest, KeyPair, Signature};
use crate::identity::{Did, DidRegistry, RevocationRegistry};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CredentialError {
    #[error("subject is not an agent controlled by the issuer")]
    SubjectNotControlled,
    #[error("bad constraints: {0}")]
    BadConstraints(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpendConstraints {
    pub limit_minor_units: u64,
    pub limit_period_seconds: u64,
    pub currency: String,
    #[serde(default)]
    pub allowed_payees: BTreeSet<String>,
    #[serde(default)]
    pub allowed_categories: BTreeSet<String>,
    pub expires_at: u64,
}

impl SpendConstraints {
    pub fn validate(&self) -> Result<(), CredentialError> {
        let bad = |m: &str| Err(CredentialError::BadConstraints(m.to_string()));
        if self.limit_period_seconds == 0 {
            return bad("limit_period_seconds must be positive");
        }
        if !is_currency_code(&self.currency) {
            return bad("currency must be a short uppercase code");
        }
        if self.expires_at == 0 {
            return bad("expires_at must be positive");
        }
        if self
            .allowed_categories
            .iter()
            .any(|c| c.is_empty() || *c != c.to_lowercase())
        {
            return bad("categories must be nonempty lowercase strings");
        }
        if self.allowed_payees.iter().any(String::is_empty) {
            return bad("payee ids must be nonempty");
        }
        Ok(())
    }

    pub fn admits_payee(&self, payee: &str) -> bool {
        self.allowed_payees.is_empty() || self.allowed_payees.contains(payee)
    }

    pub fn admits_category(&self, category: &str) -> bool {
        self.allowed_categories.is_empty() || self.allowed_categories.contains(category)
    }

    /// Epoch index for `now` under the credential's period.
    pub fn epoch(&self, now: u64) -> u64 {
        now / self.limit_period_seconds
    }
}

/// 1..=8 characters, uppercase ASCII letters or digits, leading letter.
pub fn is_currency_code(code: &str) -> bool {
    (1..=8).contains(&code.len())
        && code.bytes().next().is_some_and(|b| b.is_ascii_uppercase())
        && code
            .bytes()
            .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())
}

/// The signed part of a credential.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialBody {
    pub issuer: Did,
    pub subject: Did,
    pub constraints: SpendConstraints,
    pub issued_at: u64,
}

impl CredentialBody {
    pub fn id(&self) -> Digest {
        digest_canonical(domain::CREDENTIAL, self).expect("credential body is encodable")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelegationCredential {
    pub credential_id: Digest,
    #[serde(flatten)]
    pub body: CredentialBody,
    pub signature: Signature,
}

impl DelegationCredential {
    pub fn issuer(&self) -> &Did {
        &self.body.issuer
    }

    pub fn subject(&self) -> &Did {
        &self.body.subject
    }

    pub fn constraints(&self) -> &SpendConstraints {
        &self.body.constraints
    }
}

pub fn issue_credential(
    issuer: &KeyPair,
    subject: Did,
    constraints: SpendConstraints,
    now: u64,
    registry: &DidRegistry,
) -> Result<DelegationCredential, CredentialError> {
    constraints.validate()?;
    let issuer_did = Did::from_public_key(&issuer.public());
    if !registry.controls(&issuer_did, &subject) {
        return Err(CredentialError::SubjectNotControlled);
    }
    let body = CredentialBody {
        issuer: issuer_did,
        subject,
        constraints,
        issued_at: now,
    };
    let signature = issuer
        .sign_canonical(&body)
        .expect("credential body is encodable");
    Ok(DelegationCredential {
        credential_id: body.id(),
        body,
        signature,
    })
}

/// Why a credential was rejected. Checked in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CredentialRejection {
    BadSignature,
    Controller,
    Revoked,
    Expired,
}

/// Accepts iff the signature verifies under the issuer's registered key, the
/// subject is controlled by the issuer, the credential is not revoked and
/// `now <= expires_at`. A `credential_id` that does not match the body counts
/// as a bad signature.
pub fn verify_credential(
    cred: &DelegationCredential,
    registry: &DidRegistry,
    revocations: &RevocationRegistry,
    now: u64,
) -> Result<(), CredentialRejection> {
    let signature_ok = cred.credential_id == cred.body.id()
        && registry
            .resolve(&cred.body.issuer)
            .is_ok_and(|doc| verifies_canonical(&doc.public_key, &cred.body, &cred.signature));
    if !signature_ok {
        return Err(CredentialRejection::BadSignature);
    }
    if !registry.controls(&cred.body.issuer, &cred.body.subject) {
        return Err(CredentialRejection::Controller);
    }
    credential_status(cred, revocations, now)
}

/// The time- and revocation-dependent half of [`verify_credential`]. For a
/// credential whose signature and controller already verified against an
/// append-only registry, this gives the same answer as the full check.
pub fn credential_status(
    cred: &DelegationCredential,
    revocations: &RevocationRegistry,
    now: u64,
) -> Result<(), CredentialRejection> {
    if revocations.is_revoked(&cred.credential_id) {
        return Err(CredentialRejection::Revoked);
    }
    if now > cred.body.constraints.expires_at {
        return Err(CredentialRejection::Expired);
    }
    Ok(())
}
