//! Stateful spending-policy contract with fixed-window epoch accounting.
//!
//! Epochs are `floor(now / period_seconds)`. A payment that does not fit the
//! current epoch is denied; the owner may authorize it separately with an
//! explicit mandate.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::credential::is_currency_code;
use crate::crypto::{digest_canonical, domain, verifies_canonical, Digest, KeyPair, Signature};
use crate::identity::{Did, DidRegistry};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("bound agent is not controlled by the policy owner")]
    AgentNotControlled,
    #[error("bad rules: {0}")]
    BadRules(String),
    #[error("deployment signature does not verify")]
    BadSignature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRules {
    pub per_period_limit_minor: u64,
    pub period_seconds: u64,
    #[serde(default)]
    pub allowed_categories: BTreeSet<String>,
    #[serde(default)]
    pub allowed_payees: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_tx_limit_minor: Option<u64>,
    pub currency: String,
}

impl PolicyRules {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.period_seconds == 0 {
            return Err(PolicyError::BadRules("period_seconds must be positive".into()));
        }
        if !is_currency_code(&self.currency) {
            return Err(PolicyError::BadRules("currency must be a short uppercase code".into()));
        }
        Ok(())
    }
}

/// Owner-signed deployment transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDeployment {
    pub owner: Did,
    pub bound_agent: Did,
    pub rules: PolicyRules,
    pub deployed_at: u64,
    pub signature: Signature,
}

#[derive(Serialize)]
struct DeploymentBody<'a> {
    owner: &'a Did,
    bound_agent: &'a Did,
    rules: &'a PolicyRules,
    deployed_at: u64,
}

impl PolicyDeployment {
    fn body(&self) -> DeploymentBody<'_> {
        DeploymentBody {
            owner: &self.owner,
            bound_agent: &self.bound_agent,
            rules: &self.rules,
            deployed_at: self.deployed_at,
        }
    }

    pub fn policy_id(&self) -> Digest {
        digest_canonical(domain::POLICY, &self.body()).expect("deployment body is encodable")
    }

    /// Checks rules, binding and the owner's signature against `registry`.
    pub fn verify(&self, registry: &DidRegistry) -> Result<(), PolicyError> {
        self.rules.validate()?;
        let owner = registry
            .resolve(&self.owner)
            .map_err(|_| PolicyError::BadSignature)?;
        if !verifies_canonical(&owner.public_key, &self.body(), &self.signature) {
            return Err(PolicyError::BadSignature);
        }
        if !registry.controls(&self.owner, &self.bound_agent) {
            return Err(PolicyError::AgentNotControlled);
        }
        Ok(())
    }

    /// Fresh contract state: nothing spent, epoch at deployment time.
    pub fn state(&self) -> PolicyState {
        PolicyState {
            policy_id: self.policy_id(),
            epoch_index: self.deployed_at / self.rules.period_seconds,
            spent_this_epoch_minor: 0,
            bound_agent: self.bound_agent,
            owner: self.owner,
            rules: self.rules.clone(),
        }
    }
}

pub fn deploy_policy(
    owner: &KeyPair,
    bound_agent: Did,
    rules: PolicyRules,
    now: u64,
    registry: &DidRegistry,
) -> Result<PolicyDeployment, PolicyError> {
    rules.validate()?;
    let owner_did = Did::from_public_key(&owner.public());
    if !registry.controls(&owner_did, &bound_agent) {
        return Err(PolicyError::AgentNotControlled);
    }
    let body = DeploymentBody {
        owner: &owner_did,
        bound_agent: &bound_agent,
        rules: &rules,
        deployed_at: now,
    };
    let signature = owner.sign_canonical(&body).expect("deployment body is encodable");
    Ok(PolicyDeployment {
        owner: owner_did,
        bound_agent,
        rules,
        deployed_at: now,
        signature,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyState {
    pub policy_id: Digest,
    pub rules: PolicyRules,
    pub epoch_index: u64,
    pub spent_this_epoch_minor: u64,
    pub bound_agent: Did,
    pub owner: Did,
}

#[derive(Debug, Clone, Copy)]
pub struct PolicyPayment<'a> {
    pub amount_minor: u64,
    pub payee: &'a str,
    pub category: &'a str,
    pub currency: &'a str,
    pub caller: &'a Did,
}

/// Checked in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyDenial {
    Caller,
    Currency,
    Category,
    Payee,
    PerTx,
    PerPeriod,
}

impl PolicyState {
    /// State after rolling over to the epoch containing `now`, if later.
    pub fn rolled_over(&self, now: u64) -> PolicyState {
        let epoch = now / self.rules.period_seconds;
        let mut next = self.clone();
        if epoch > self.epoch_index {
            next.epoch_index = epoch;
            next.spent_this_epoch_minor = 0;
        }
        next
    }
}

/// Authorizes the payment and returns the new state, or names the first rule
/// it breaks. The input state is never modified.
pub fn evaluate(
    state: &PolicyState,
    payment: &PolicyPayment<'_>,
    now: u64,
) -> Result<PolicyState, PolicyDenial> {
    let mut next = state.rolled_over(now);
    let rules = &next.rules;
    if *payment.caller != next.bound_agent {
        return Err(PolicyDenial::Caller);
    }
    if payment.currency != rules.currency {
        return Err(PolicyDenial::Currency);
    }
    if !rules.allowed_categories.is_empty() && !rules.allowed_categories.contains(payment.category)
    {
        return Err(PolicyDenial::Category);
    }
    if !rules.allowed_payees.is_empty() && !rules.allowed_payees.contains(payment.payee) {
        return Err(PolicyDenial::Payee);
    }
    if rules
        .per_tx_limit_minor
        .is_some_and(|cap| payment.amount_minor > cap)
    {
        return Err(PolicyDenial::PerTx);
    }
    let spent = next
        .spent_this_epoch_minor
        .checked_add(payment.amount_minor)
        .filter(|s| *s <= rules.per_period_limit_minor)
        .ok_or(PolicyDenial::PerPeriod)?;
    next.spent_this_epoch_minor = spent;
    Ok(next)
}
