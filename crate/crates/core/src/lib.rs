//! Verifiable authorization for agent-initiated payments.
//!
//! A payment leaves an agent wallet only when four things check out against a
//! simulated ledger: the agent's identity (a key-derived DID), the user's
//! delegation credential, a transaction-specific intent proof (a pre-signed
//! mandate, a passing on-chain policy, or a zero-knowledge compliance proof),
//! and, when the wallet asks for it, a quorum of enclave attestation quotes.
//!
//! Modules, bottom-up:
//!
//! - [`encoding`], [`crypto`], [`group`]: canonical bytes, hashing, Ed25519,
//!   Ristretto255.
//! - [`identity`]: DIDs, the DID registry and the revocation registry.
//! - [`credential`]: delegation credentials.
//! - [`mandate`]: intent mandates and the mandate predicate.
//! - [`policy`]: the stateful spending-policy contract.
//! - [`zk`]: Pedersen commitments and bit-decomposition range proofs.
//! - [`attestation`]: simulated enclave quotes and k-of-n quorum checks.
//! - [`ledger`]: the wallet contract, payment pipeline and hash-chained log.
//! - [`scenario`]: declarative scenario files and the runner.

pub mod attestation;
pub mod credential;
pub mod crypto;
pub mod encoding;
pub mod group;
pub mod identity;
pub mod ledger;
pub mod mandate;
pub mod policy;
pub mod scenario;
pub mod zk;

pub use crypto::{Digest, KeyPair, PublicKey, Signature};
pub use identity::{Did, DidDocument};
