//! Wallet contract state and the owner-signed transactions that manage it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::attestation::AttestationPolicy;
use crate::credential::DelegationCredential;
use crate::crypto::{digest_canonical, domain, verifies_canonical, Digest, KeyPair, PublicKey, Signature};
use crate::identity::Did;
use crate::mandate::MandateConsumption;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalletConfig {
    /// Require committed-price mandates with range proofs.
    #[serde(default)]
    pub zk_mode: bool,
    /// Authorize through this deployed policy contract.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_id: Option<Digest>,
    /// With a policy, also accept explicit plaintext mandates.
    #[serde(default)]
    pub allow_mandate_override: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attestation: Option<AttestationPolicy>,
}

/// Which intent proofs a wallet accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntentMode {
    PlainMandate,
    ZkMandate,
    Policy {
        policy_id: Digest,
        allow_mandate_override: bool,
    },
}

impl WalletConfig {
    pub fn intent_mode(&self) -> Result<IntentMode, String> {
        match (self.policy_id, self.zk_mode) {
            (Some(_), true) => Err("zk_mode and policy are mutually exclusive".into()),
            (Some(policy_id), false) => Ok(IntentMode::Policy {
                policy_id,
                allow_mandate_override: self.allow_mandate_override,
            }),
            (None, _) if self.allow_mandate_override => {
                Err("allow_mandate_override requires a policy".into())
            }
            (None, true) => Ok(IntentMode::ZkMandate),
            (None, false) => Ok(IntentMode::PlainMandate),
        }
    }
}

#[derive(Serialize)]
struct CreationBody<'a> {
    owner: &'a Did,
    agent: &'a Did,
    credential_id: &'a Digest,
    config: &'a WalletConfig,
    created_at: u64,
}

/// Owner-signed request to create a wallet bound to one agent and one
/// anchored credential.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalletCreation {
    pub owner: Did,
    pub agent: Did,
    pub credential: DelegationCredential,
    pub config: WalletConfig,
    pub created_at: u64,
    pub signature: Signature,
}

impl WalletCreation {
    pub fn new(
        owner: &KeyPair,
        agent: Did,
        credential: DelegationCredential,
        config: WalletConfig,
        now: u64,
    ) -> Self {
        let owner_did = Did::from_public_key(&owner.public());
        let signature = owner
            .sign_canonical(&CreationBody {
                owner: &owner_did,
                agent: &agent,
                credential_id: &credential.credential_id,
                config: &config,
                created_at: now,
            })
            .expect("creation body is encodable");
        Self {
            owner: owner_did,
            agent,
            credential,
            config,
            created_at: now,
            signature,
        }
    }

    fn body(&self) -> CreationBody<'_> {
        CreationBody {
            owner: &self.owner,
            agent: &self.agent,
            credential_id: &self.credential.credential_id,
            config: &self.config,
            created_at: self.created_at,
        }
    }

    pub fn wallet_id(&self) -> Digest {
        digest_canonical(domain::WALLET, &self.body()).expect("creation body is encodable")
    }

    pub fn verify_signature(&self, owner_key: &PublicKey) -> bool {
        verifies_canonical(owner_key, &self.body(), &self.signature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalletContractState {
    pub wallet_id: Digest,
    pub owner: Did,
    pub agent: Did,
    pub currency: String,
    pub balance_minor: u64,
    pub credential: DelegationCredential,
    pub config: WalletConfig,
    pub mandate_consumption: MandateConsumption,
    /// Credential-limit accounting for the epoch `period_epoch`.
    pub period_epoch: u64,
    pub period_spend_minor: u64,
    pub nonce_seen: BTreeSet<Digest>,
    /// Sequence number the next admin transaction must carry.
    pub admin_sequence: u64,
}

impl WalletContractState {
    /// Spend counted against the credential limit at `now`.
    pub fn period_spend_at(&self, now: u64) -> u64 {
        if self.credential.constraints().epoch(now) > self.period_epoch {
            0
        } else {
            self.period_spend_minor
        }
    }
}

/// Owner-authorized admin actions. Each carries the wallet's current admin
/// sequence number so a signed order cannot be replayed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdminAction {
    Deposit { amount_minor: u64 },
    UpdateWhitelist { code_hashes: BTreeSet<Digest> },
}

#[derive(Serialize)]
struct AdminBody<'a> {
    wallet_id: &'a Digest,
    sequence: u64,
    action: &'a AdminAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdminOrder {
    pub wallet_id: Digest,
    pub sequence: u64,
    pub action: AdminAction,
    pub signature: Signature,
}

impl AdminOrder {
    pub fn sign(owner: &KeyPair, wallet_id: Digest, sequence: u64, action: AdminAction) -> Self {
        let signature = owner
            .sign_canonical(&AdminBody {
                wallet_id: &wallet_id,
                sequence,
                action: &action,
            })
            .expect("admin body is encodable");
        Self {
            wallet_id,
            sequence,
            action,
            signature,
        }
    }

    pub fn verify_signature(&self, owner_key: &PublicKey) -> bool {
        verifies_canonical(
            owner_key,
            &AdminBody {
                wallet_id: &self.wallet_id,
                sequence: self.sequence,
                action: &self.action,
            },
            &self.signature,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intent_modes() {
        let p = Digest([1; 32]);
        let plain = WalletConfig::default();
        assert_eq!(plain.intent_mode(), Ok(IntentMode::PlainMandate));
        let zk = WalletConfig { zk_mode: true, ..Default::default() };
        assert_eq!(zk.intent_mode(), Ok(IntentMode::ZkMandate));
        let pol = WalletConfig { policy_id: Some(p), ..Default::default() };
        assert_eq!(
            pol.intent_mode(),
            Ok(IntentMode::Policy { policy_id: p, allow_mandate_override: false })
        );
        assert!(WalletConfig { zk_mode: true, ..pol.clone() }.intent_mode().is_err());
        let stray = WalletConfig { allow_mandate_override: true, ..Default::default() };
        assert!(stray.intent_mode().is_err());
    }

    #[test]
    fn admin_orders_bind_sequence_and_wallet() {
        let owner = KeyPair::from_label("owner");
        let w = Digest([2; 32]);
        let order = AdminOrder::sign(&owner, w, 3, AdminAction::Deposit { amount_minor: 10 });
        assert!(order.verify_signature(&owner.public()));
        let replayed = AdminOrder { sequence: 4, ..order.clone() };
        assert!(!replayed.verify_signature(&owner.public()));
        let moved = AdminOrder { wallet_id: Digest([3; 32]), ..order };
        assert!(!moved.verify_signature(&owner.public()));
    }
}
