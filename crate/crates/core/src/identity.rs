//! Decentralized identifiers, the DID registry and the revocation registry.
//!
//! A DID is `did:tiva:<hex(hash("tiva/did", public_key))>`. Users control
//! themselves; an agent's document names its controlling user. Chains are at
//! most two deep (user -> agent).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::crypto::{digest, domain, verifies, Digest, KeyPair, PublicKey, Signature};
use crate::encoding::{canonical_encode, hex_array};

pub const DID_PREFIX: &str = "did:tiva:";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdentityError {
    #[error("DID {0} is already registered with different contents")]
    DidConflict(Did),
    #[error("bad DID document: {0}")]
    BadDocument(String),
    #[error("DID {0} not found")]
    NotFound(Did),
    #[error("revocation signature does not verify under the issuer key")]
    BadSignature,
    #[error("no anchored credential {0}")]
    UnknownIssuer(Digest),
    #[error("malformed DID string: {0}")]
    MalformedDid(String),
}

impl IdentityError {
    pub fn code(&self) -> &'static str {
        match self {
            IdentityError::DidConflict(_) => "DidConflict",
            IdentityError::BadDocument(_) => "BadDocument",
            IdentityError::NotFound(_) => "NotFound",
            IdentityError::BadSignature => "BadSignature",
            IdentityError::UnknownIssuer(_) => "UnknownIssuer",
            IdentityError::MalformedDid(_) => "MalformedDid",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Did(Digest);

impl Did {
    pub fn from_public_key(public: &PublicKey) -> Self {
        Did(digest(domain::DID, public.as_bytes()))
    }

    pub fn id(&self) -> &Digest {
        &self.0
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{DID_PREFIX}{}", self.0.to_hex())
    }
}

impl fmt::Debug for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Did({self})")
    }
}

impl FromStr for Did {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let id = s
            .strip_prefix(DID_PREFIX)
            .ok_or_else(|| IdentityError::MalformedDid(s.to_string()))?;
        hex_array::parse::<32>(id)
            .map(|b| Did(Digest(b)))
            .map_err(|_| IdentityError::MalformedDid(s.to_string()))
    }
}

impl Serialize for Did {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Did {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DidDocument {
    pub did: Did,
    pub public_key: PublicKey,
    pub controller: Did,
    pub created_at: u64,
}

impl DidDocument {
    /// Self-controlled document for a user.
    pub fn for_user(public_key: PublicKey, created_at: u64) -> Self {
        let did = Did::from_public_key(&public_key);
        Self {
            did,
            public_key,
            controller: did,
            created_at,
        }
    }

    /// Agent document controlled by `controller`.
    pub fn for_agent(public_key: PublicKey, controller: Did, created_at: u64) -> Self {
        Self {
            did: Did::from_public_key(&public_key),
            public_key,
            controller,
            created_at,
        }
    }

    pub fn is_self_controlled(&self) -> bool {
        self.controller == self.did
    }
}

/// Outcome of a successful registration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Registration {
    New,
    /// The identical document was already present.
    Unchanged,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DidRegistry {
    documents: BTreeMap<Did, DidDocument>,
}

impl DidRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, doc: DidDocument) -> Result<Registration, IdentityError> {
        if let Some(existing) = self.documents.get(&doc.did) {
            if *existing == doc {
                return Ok(Registration::Unchanged);
            }
            return Err(IdentityError::DidConflict(doc.did));
        }
        if Did::from_public_key(&doc.public_key) != doc.did {
            return Err(IdentityError::BadDocument(
                "did does not match the public key".into(),
            ));
        }
        if !doc.is_self_controlled() {
            match self.documents.get(&doc.controller) {
                Some(controller) if controller.is_self_controlled() => {}
                Some(_) => {
                    return Err(IdentityError::BadDocument(
                        "controller is itself delegated; depth is capped at 2".into(),
                    ))
                }
                None => {
                    return Err(IdentityError::BadDocument(format!(
                        "controller {} is not registered",
                        doc.controller
                    )))
                }
            }
        }
        self.documents.insert(doc.did, doc);
        Ok(Registration::New)
    }

    pub fn resolve(&self, did: &Did) -> Result<&DidDocument, IdentityError> {
        self.documents
            .get(did)
            .ok_or(IdentityError::NotFound(*did))
    }

    /// True iff `subject` is a registered agent whose controller is `controller`.
    pub fn controls(&self, controller: &Did, subject: &Did) -> bool {
        controller != subject
            && self
                .documents
                .get(subject)
                .is_some_and(|d| d.controller == *controller)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Canonical snapshot for audit.
    pub fn snapshot(&self) -> Vec<u8> {
        canonical_encode(self).expect("registry contents are encodable")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevocationEntry {
    pub credential_id: Digest,
    pub height: u64,
}

/// Monotone set of revoked credential digests.
///
/// Credentials are anchored (digest -> issuer) when they are issued on the
/// ledger; only the anchored issuer can revoke.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RevocationRegistry {
    anchored: BTreeMap<Digest, Did>,
    revoked: BTreeSet<Digest>,
    log: Vec<RevocationEntry>,
}

/// The message an issuer signs to revoke `credential_id`.
pub fn revocation_message(credential_id: &Digest) -> Vec<u8> {
    let mut body = BTreeMap::new();
    body.insert("revoke", credential_id);
    canonical_encode(&body).expect("digest map is encodable")
}

pub fn sign_revocation(issuer: &KeyPair, credential_id: &Digest) -> Signature {
    issuer.sign(&revocation_message(credential_id))
}

impl RevocationRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn anchor(&mut self, credential_id: Digest, issuer: Did) {
        self.anchored.entry(credential_id).or_insert(issuer);
    }

    pub fn issuer_of(&self, credential_id: &Digest) -> Option<&Did> {
        self.anchored.get(credential_id)
    }

    /// Revokes `credential_id` if `user_sig` is the anchored issuer's
    /// signature over [`revocation_message`]. Returns whether the entry is
    /// new; revoking twice leaves the registry unchanged.
    pub fn revoke_credential(
        &mut self,
        user_sig: &Signature,
        credential_id: &Digest,
        dids: &DidRegistry,
        height: u64,
    ) -> Result<bool, IdentityError> {
        let issuer = self
            .anchored
            .get(credential_id)
            .ok_or(IdentityError::UnknownIssuer(*credential_id))?;
        let doc = dids
            .resolve(issuer)
            .map_err(|_| IdentityError::UnknownIssuer(*credential_id))?;
        if !verifies(&doc.public_key, &revocation_message(credential_id), user_sig) {
            return Err(IdentityError::BadSignature);
        }
        if !self.revoked.insert(*credential_id) {
            return Ok(false);
        }
        self.log.push(RevocationEntry {
            credential_id: *credential_id,
            height,
        });
        Ok(true)
    }

    pub fn is_revoked(&self, credential_id: &Digest) -> bool {
        self.revoked.contains(credential_id)
    }

    pub fn entries(&self) -> &[RevocationEntry] {
        &self.log
    }

    pub fn snapshot(&self) -> Vec<u8> {
        canonical_encode(self).expect("registry contents are encodable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::hash;

    fn user(label: &str) -> (KeyPair, DidDocument) {
        let kp = KeyPair::from_label(label);
        let doc = DidDocument::for_user(kp.public(), 10);
        (kp, doc)
    }

    #[test]
    fn did_matches_independent_hash() {
        // hash("tiva/did", pk(zero seed)), computed with Python hashlib.
        let kp = KeyPair::from_seed(&[0u8; 32]).unwrap();
        let did = Did::from_public_key(&kp.public());
        assert_eq!(
            did.to_string(),
            "did:tiva:0ccd4bcfc33c94985cffe65ac55039f5f498f87448ff5522d5b5423e0d0c72f8"
        );
        assert_eq!(*did.id(), hash("tiva/did", kp.public().as_bytes()).unwrap());
    }

    #[test]
    fn did_parse_render_round_trip() {
        let did = Did::from_public_key(&KeyPair::from_label("x").public());
        let s = did.to_string();
        assert_eq!(s.parse::<Did>().unwrap(), did);
        assert!(s.to_uppercase().parse::<Did>().is_err());
        assert!("did:web:abc".parse::<Did>().is_err());
        assert!(s[..s.len() - 1].parse::<Did>().is_err());
    }

    #[test]
    fn register_and_resolve() {
        let mut reg = DidRegistry::new();
        let (_, alice) = user("alice");
        let agent = KeyPair::from_label("agent");
        let agent_doc = DidDocument::for_agent(agent.public(), alice.did, 11);
        assert_eq!(reg.register(alice.clone()).unwrap(), Registration::New);
        assert_eq!(reg.register(agent_doc.clone()).unwrap(), Registration::New);
        assert_eq!(reg.resolve(&agent_doc.did).unwrap(), &agent_doc);
        assert_eq!(
            reg.register(agent_doc.clone()).unwrap(),
            Registration::Unchanged
        );
        assert!(reg.controls(&alice.did, &agent_doc.did));
        assert!(!reg.controls(&alice.did, &alice.did));
    }

    #[test]
    fn resolve_unknown_is_not_found() {
        let reg = DidRegistry::new();
        let did = Did::from_public_key(&KeyPair::from_label("ghost").public());
        assert_eq!(reg.resolve(&did), Err(IdentityError::NotFound(did)));
    }

    #[test]
    fn reusing_did_with_other_key_conflicts() {
        let mut reg = DidRegistry::new();
        let (_, alice) = user("alice");
        reg.register(alice.clone()).unwrap();
        let mut forged = DidDocument::for_user(KeyPair::from_label("mallory").public(), 10);
        forged.did = alice.did;
        forged.controller = alice.did;
        assert_eq!(reg.register(forged), Err(IdentityError::DidConflict(alice.did)));
        assert_eq!(reg.resolve(&alice.did).unwrap(), &alice);
    }

    #[test]
    fn inconsistent_and_deep_documents_are_rejected() {
        let mut reg = DidRegistry::new();
        let (_, alice) = user("alice");
        let mut bad = alice.clone();
        bad.public_key = KeyPair::from_label("other").public();
        assert!(matches!(reg.register(bad), Err(IdentityError::BadDocument(_))));

        reg.register(alice.clone()).unwrap();
        let agent = DidDocument::for_agent(KeyPair::from_label("a1").public(), alice.did, 1);
        reg.register(agent.clone()).unwrap();
        let sub_agent = DidDocument::for_agent(KeyPair::from_label("a2").public(), agent.did, 1);
        assert!(matches!(
            reg.register(sub_agent),
            Err(IdentityError::BadDocument(_))
        ));
        let orphan = DidDocument::for_agent(
            KeyPair::from_label("a3").public(),
            Did::from_public_key(&KeyPair::from_label("nobody").public()),
            1,
        );
        assert!(matches!(reg.register(orphan), Err(IdentityError::BadDocument(_))));
    }

    #[test]
    fn revocation_by_issuer_only_and_idempotent() {
        let mut dids = DidRegistry::new();
        let (alice_kp, alice) = user("alice");
        dids.register(alice.clone()).unwrap();
        let (mallory_kp, mallory) = user("mallory");
        dids.register(mallory).unwrap();

        let cred = digest(domain::CREDENTIAL, b"some credential");
        let mut rev = RevocationRegistry::new();
        rev.anchor(cred, alice.did);

        let before = rev.clone();
        let stranger = sign_revocation(&mallory_kp, &cred);
        assert_eq!(
            rev.revoke_credential(&stranger, &cred, &dids, 5),
            Err(IdentityError::BadSignature)
        );
        assert_eq!(rev, before);

        let sig = sign_revocation(&alice_kp, &cred);
        assert_eq!(rev.revoke_credential(&sig, &cred, &dids, 6), Ok(true));
        assert!(rev.is_revoked(&cred));
        let after_first = rev.clone();
        assert_eq!(rev.revoke_credential(&sig, &cred, &dids, 7), Ok(false));
        assert_eq!(rev, after_first);
        assert_eq!(rev.entries().len(), 1);
    }

    #[test]
    fn revoking_unanchored_credential_is_unknown_issuer() {
        let dids = DidRegistry::new();
        let mut rev = RevocationRegistry::new();
        let cred = digest(domain::CREDENTIAL, b"never anchored");
        let sig = sign_revocation(&KeyPair::from_label("alice"), &cred);
        assert_eq!(
            rev.revoke_credential(&sig, &cred, &dids, 1),
            Err(IdentityError::UnknownIssuer(cred))
        );
    }

    #[test]
    fn revocation_message_is_canonical_map() {
        let d = Digest([0xab; 32]);
        assert_eq!(
            revocation_message(&d),
            format!("{{\"revoke\":\"{}\"}}", "ab".repeat(32)).into_bytes()
        );
    }
}
