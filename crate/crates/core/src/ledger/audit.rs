//! Per-wallet audit reports rebuilt from the event log alone.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::event::{ChainFault, EventKind, EventLog};
use super::{AcceptedPayment, DepositRecord, IntentProofRecord, RejectedPayment};
use crate::crypto::Digest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRow {
    pub height: u64,
    pub event_hash: Digest,
    pub at: u64,
    /// `accepted` or `rejected`.
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amount_minor: Option<u64>,
    pub payee: String,
    pub nonce: Digest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_proof_digest: Option<Digest>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuditError {
    #[error(transparent)]
    Chain(#[from] ChainFault),
    #[error("payload at height {0} does not parse")]
    MalformedPayload(u64),
    #[error("intent proof at height {0} does not match its digest")]
    IntentMismatch(u64),
    #[error("no wallet {0} on this chain")]
    UnknownWallet(Digest),
}

fn wallet_exists(log: &EventLog, wallet_id: &Digest) -> bool {
    let id = serde_json::Value::String(wallet_id.to_hex());
    log.events()
        .iter()
        .any(|e| e.kind == EventKind::WalletCreated && e.payload.get("wallet_id") == Some(&id))
}

/// One row per payment decision on `wallet_id`, in chain order. The chain is
/// verified first, and every accepted row's intent proof must resolve to a
/// record matching its digest.
pub fn audit_report(log: &EventLog, wallet_id: &Digest) -> Result<Vec<AuditRow>, AuditError> {
    log.verify()?;
    if !wallet_exists(log, wallet_id) {
        return Err(AuditError::UnknownWallet(*wallet_id));
    }
    let mut rows = Vec::new();
    for e in log.events() {
        match e.kind {
            EventKind::PaymentAccepted => {
                let p: AcceptedPayment = e.payload_as().ok_or(AuditError::MalformedPayload(e.height))?;
                if p.wallet_id != *wallet_id {
                    continue;
                }
                let digest = e.intent_proof_digest.ok_or(AuditError::IntentMismatch(e.height))?;
                if !p.intent_proof.matches(&digest) {
                    return Err(AuditError::IntentMismatch(e.height));
                }
                rows.push(AuditRow {
                    height: e.height,
                    event_hash: e.event_hash,
                    at: p.at,
                    verdict: "accepted".into(),
                    reason: None,
                    amount_minor: Some(p.amount_minor),
                    payee: p.payee,
                    nonce: p.nonce,
                    intent_proof_digest: Some(digest),
                });
            }
            EventKind::PaymentRejected => {
                let p: RejectedPayment = e.payload_as().ok_or(AuditError::MalformedPayload(e.height))?;
                if p.wallet_id != *wallet_id {
                    continue;
                }
                rows.push(AuditRow {
                    height: e.height,
                    event_hash: e.event_hash,
                    at: p.at,
                    verdict: "rejected".into(),
                    reason: Some(p.reason),
                    amount_minor: p.amount_minor,
                    payee: p.payee,
                    nonce: p.nonce,
                    intent_proof_digest: None,
                });
            }
            _ => {}
        }
    }
    Ok(rows)
}

/// Finds the intent proof recorded under `digest` by any accepted payment.
pub fn resolve_intent_proof(log: &EventLog, digest: &Digest) -> Option<IntentProofRecord> {
    log.events()
        .iter()
        .filter(|e| e.kind == EventKind::PaymentAccepted && e.intent_proof_digest.as_ref() == Some(digest))
        .filter_map(|e| e.payload_as::<AcceptedPayment>())
        .map(|p| p.intent_proof)
        .find(|r| r.matches(digest))
}

/// Money flows of one wallet as recorded on the log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WalletFlows {
    pub deposits_minor: u128,
    pub accepted_minor: u128,
    pub accepted_count: u64,
    pub rejected_count: u64,
}

impl WalletFlows {
    /// Balance implied by the log, `None` if payments exceed deposits.
    pub fn implied_balance(&self) -> Option<u128> {
        self.deposits_minor.checked_sub(self.accepted_minor)
    }
}

pub fn wallet_flows(log: &EventLog, wallet_id: &Digest) -> WalletFlows {
    let mut flows = WalletFlows::default();
    for e in log.events() {
        match e.kind {
            EventKind::Deposited => {
                if let Some(d) = e.payload_as::<DepositRecord>() {
                    if d.wallet_id == *wallet_id {
                        flows.deposits_minor += u128::from(d.amount_minor);
                    }
                }
            }
            EventKind::PaymentAccepted => {
                if let Some(p) = e.payload_as::<AcceptedPayment>() {
                    if p.wallet_id == *wallet_id {
                        flows.accepted_minor += u128::from(p.amount_minor);
                        flows.accepted_count += 1;
                    }
                }
            }
            EventKind::PaymentRejected => {
                if let Some(p) = e.payload_as::<RejectedPayment>() {
                    if p.wallet_id == *wallet_id {
                        flows.rejected_count += 1;
                    }
                }
            }
            _ => {}
        }
    }
    flows
}

/// Fixed-width text table of audit rows.
pub fn render_audit(rows: &[AuditRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>6}  {:>10}  {:<8}  {:<20}  {:>14}  {:<16}  {}",
        "height", "at", "verdict", "reason", "amount", "payee", "intent"
    );
    for r in rows {
        let amount = r.amount_minor.map(|a| a.to_string()).unwrap_or_else(|| "-".into());
        let intent = r
            .intent_proof_digest
            .map(|d| d.to_hex()[..16].to_string())
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:>6}  {:>10}  {:<8}  {:<20}  {:>14}  {:<16}  {}",
            r.height,
            r.at,
            r.verdict,
            r.reason.as_deref().unwrap_or("-"),
            amount,
            r.payee,
            intent
        );
    }
    out
}
