//! Hashing, Ed25519 keys and signatures.
//!
//! All hashing is SHA-256 with a length-prefixed domain tag:
//! `H(len(tag) || tag || payload)`, with `len` a single byte.

use std::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::encoding::{canonical_encode, hex_array, EncodingError};

pub const DIGEST_LEN: usize = 32;
pub const SEED_LEN: usize = 32;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const MAX_TAG_LEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("seed must be {SEED_LEN} bytes, got {0}")]
    SeedLength(usize),
    #[error("domain tag must be 1..={MAX_TAG_LEN} bytes, got {0}")]
    TagLength(usize),
    #[error("malformed public key")]
    MalformedKey,
    #[error("malformed signature")]
    MalformedSignature,
}

/// A domain-separation tag, length-checked at compile time when built in a
/// `const` context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainTag(&'static str);

impl DomainTag {
    pub const fn new(tag: &'static str) -> Self {
        assert!(!tag.is_empty() && tag.len() <= MAX_TAG_LEN);
        Self(tag)
    }

    pub const fn as_str(&self) -> &'static str {
        self.0
    }
}

/// Every hash domain used by the crate.
pub mod domain {
    use super::DomainTag;

    pub const DID: DomainTag = DomainTag::new("tiva/did");
    pub const CREDENTIAL: DomainTag = DomainTag::new("tiva/vc");
    pub const MANDATE: DomainTag = DomainTag::new("tiva/mandate");
    pub const POLICY: DomainTag = DomainTag::new("tiva/policy");
    pub const WALLET: DomainTag = DomainTag::new("tiva/wallet");
    pub const PAYMENT: DomainTag = DomainTag::new("tiva/payment");
    pub const NONCE: DomainTag = DomainTag::new("tiva/nonce");
    pub const INTENT: DomainTag = DomainTag::new("tiva/intent");
    pub const EVENT: DomainTag = DomainTag::new("tiva/event");
    pub const EVENT_PAYLOAD: DomainTag = DomainTag::new("tiva/event/payload");
    pub const CODE: DomainTag = DomainTag::new("tiva/code");
    pub const SEED: DomainTag = DomainTag::new("tiva/seed");
    pub const ZK_RANGE: DomainTag = DomainTag::new("tiva/zk/range");
    pub const ZK_CONTEXT: DomainTag = DomainTag::new("tiva/zk/context");
    pub const ZK_NONCE: DomainTag = DomainTag::new("tiva/zk/nonce");
    pub const ZK_BATCH: DomainTag = DomainTag::new("tiva/zk/batch");
    pub const ZK_BLINDING: DomainTag = DomainTag::new("tiva/zk/blinding");
    pub const ZK_GENERATOR: DomainTag = DomainTag::new("tiva/zk/generator-h");
    pub const SCENARIO: DomainTag = DomainTag::new("tiva/scenario");
}

/// 32-byte SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, String> {
        hex_array::parse(s).map(Digest)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        hex_array::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        hex_array::deserialize(d).map(Digest)
    }
}

/// `H(len(tag) || tag || payload)` for a runtime tag.
pub fn hash(domain_tag: &str, payload: &[u8]) -> Result<Digest, CryptoError> {
    let tag = domain_tag.as_bytes();
    if tag.is_empty() || tag.len() > MAX_TAG_LEN {
        return Err(CryptoError::TagLength(tag.len()));
    }
    let mut h = Sha256::new();
    h.update([tag.len() as u8]);
    h.update(tag);
    h.update(payload);
    Ok(Digest(h.finalize().into()))
}

/// Infallible variant for the crate's fixed domains.
pub fn digest(tag: DomainTag, payload: &[u8]) -> Digest {
    hash(tag.as_str(), payload).expect("domain tags are length-checked at construction")
}

/// Hash of the canonical encoding of `value`.
pub fn digest_canonical<T: Serialize + ?Sized>(
    tag: DomainTag,
    value: &T,
) -> Result<Digest, EncodingError> {
    Ok(digest(tag, &canonical_encode(value)?))
}

/// 32-byte Ed25519 public key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        hex_array::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        hex_array::deserialize(d).map(PublicKey)
    }
}

/// 64-byte Ed25519 signature.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", self.to_hex())
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        hex_array::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        hex_array::deserialize(d).map(Signature)
    }
}

/// Deterministic Ed25519 key pair. The seed never appears in any serialized
/// public structure; `Debug` redacts it.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn from_seed(seed: &[u8]) -> Result<Self, CryptoError> {
        let seed: [u8; SEED_LEN] = seed
            .try_into()
            .map_err(|_| CryptoError::SeedLength(seed.len()))?;
        let signing = SigningKey::from_bytes(&seed);
        let public = PublicKey(signing.verifying_key().to_bytes());
        Ok(Self { signing, public })
    }

    /// Key pair whose seed is `hash("tiva/seed", label)`. Handy for fixtures.
    pub fn from_label(label: &str) -> Self {
        let seed = digest(domain::SEED, label.as_bytes());
        Self::from_seed(&seed.0).expect("digest is seed-sized")
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn seed(&self) -> [u8; SEED_LEN] {
        self.signing.to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }

    /// Signs the canonical encoding of `value`.
    pub fn sign_canonical<T: Serialize + ?Sized>(
        &self,
        value: &T,
    ) -> Result<Signature, EncodingError> {
        Ok(self.sign(&canonical_encode(value)?))
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .field("secret", &"<redacted>")
            .finish()
    }
}

/// Verifies `signature` over `message`.
///
/// Returns `Ok(false)` for a well-formed signature that does not verify, and
/// an error when the key is not a valid curve point or the signature's scalar
/// half is not canonical.
pub fn verify(
    public: &PublicKey,
    message: &[u8],
    signature: &Signature,
) -> Result<bool, CryptoError> {
    let key = VerifyingKey::from_bytes(&public.0).map_err(|_| CryptoError::MalformedKey)?;
    let s: [u8; 32] = signature.0[32..].try_into().expect("fixed split");
    if bool::from(curve25519_dalek::Scalar::from_canonical_bytes(s).is_none()) {
        return Err(CryptoError::MalformedSignature);
    }
    let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
    Ok(key.verify_strict(message, &sig).is_ok())
}

/// Verification that folds malformed inputs into `false`.
pub fn verifies(public: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    verify(public, message, signature).unwrap_or(false)
}

/// Verifies a signature over the canonical encoding of `value`.
pub fn verifies_canonical<T: Serialize + ?Sized>(
    public: &PublicKey,
    value: &T,
    signature: &Signature,
) -> bool {
    match canonical_encode(value) {
        Ok(bytes) => verifies(public, &bytes, signature),
        Err(_) => false,
    }
}
