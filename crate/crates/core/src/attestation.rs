//! Simulated enclave attestation.
//!
//! A software manufacturer root key endorses `(enclave_pub, code_hash)`
//! pairs. An enclave then signs quotes binding its measurement to one payment
//! digest. Wallets that opt in require quotes from at least `k` distinct
//! enclaves of a configured set of `n`.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{digest, domain, verifies_canonical, Digest, KeyPair, PublicKey, Signature};

/// Freshness window applied when a configuration does not set one.
pub const DEFAULT_FRESHNESS_SECONDS: u64 = 300;

/// Measurement of an agent-logic artifact.
pub fn code_measurement(artifact: &[u8]) -> Digest {
    digest(domain::CODE, artifact)
}

#[derive(Serialize)]
struct EndorsementBody<'a> {
    code_hash: &'a Digest,
    enclave_pub: &'a PublicKey,
}

#[derive(Debug, Clone)]
pub struct EnclaveIdentity {
    keypair: KeyPair,
    pub code_hash: Digest,
    pub endorsement: Signature,
}

impl EnclaveIdentity {
    /// An enclave endorsed by `root`. Endorsing with any other key yields an
    /// identity whose quotes fail the endorsement check.
    pub fn endorsed(root: &KeyPair, keypair: KeyPair, code_hash: Digest) -> Self {
        let endorsement = root
            .sign_canonical(&EndorsementBody {
                code_hash: &code_hash,
                enclave_pub: &keypair.public(),
            })
            .expect("endorsement body is encodable");
        Self {
            keypair,
            code_hash,
            endorsement,
        }
    }

    pub fn public_key(&self) -> PublicKey {
        self.keypair.public()
    }
}

#[derive(Serialize)]
struct QuoteBody<'a> {
    code_hash: &'a Digest,
    enclave_pub: &'a PublicKey,
    issued_at: u64,
    report_data: &'a Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationQuote {
    pub enclave_pub: PublicKey,
    pub code_hash: Digest,
    pub report_data: Digest,
    pub issued_at: u64,
    pub quote_sig: Signature,
    pub endorsement: Signature,
}

impl AttestationQuote {
    fn body(&self) -> QuoteBody<'_> {
        QuoteBody {
            code_hash: &self.code_hash,
            enclave_pub: &self.enclave_pub,
            issued_at: self.issued_at,
            report_data: &self.report_data,
        }
    }
}

pub fn issue_quote(enclave: &EnclaveIdentity, payment_digest: Digest, now: u64) -> AttestationQuote {
    let enclave_pub = enclave.public_key();
    let quote_sig = enclave
        .keypair
        .sign_canonical(&QuoteBody {
            code_hash: &enclave.code_hash,
            enclave_pub: &enclave_pub,
            issued_at: now,
            report_data: &payment_digest,
        })
        .expect("quote body is encodable");
    AttestationQuote {
        enclave_pub,
        code_hash: enclave.code_hash,
        report_data: payment_digest,
        issued_at: now,
        quote_sig,
        endorsement: enclave.endorsement,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttestationConfigError {
    #[error("need 1 <= k <= n, got k = {k}, n = {n}")]
    Quorum { k: u64, n: usize },
    #[error("enclave set contains duplicates")]
    DuplicateEnclave,
    #[error("freshness window must be positive")]
    Freshness,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationPolicy {
    pub root_public_key: PublicKey,
    pub whitelisted_code_hashes: BTreeSet<Digest>,
    pub required_quotes_k: u64,
    pub enclave_set: Vec<PublicKey>,
    pub freshness_window_seconds: u64,
}

impl AttestationPolicy {
    pub fn validate(&self) -> Result<(), AttestationConfigError> {
        let n = self.enclave_set.len();
        if self.required_quotes_k == 0 || self.required_quotes_k > n as u64 {
            return Err(AttestationConfigError::Quorum {
                k: self.required_quotes_k,
                n,
            });
        }
        if self.enclave_set.iter().collect::<HashSet<_>>().len() != n {
            return Err(AttestationConfigError::DuplicateEnclave);
        }
        if self.freshness_window_seconds == 0 {
            return Err(AttestationConfigError::Freshness);
        }
        Ok(())
    }
}

/// Why a single quote does not count toward the quorum. Checked in
/// declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuoteFault {
    Signature,
    Endorsement,
    UnknownEnclave,
    CodeHash,
    Binding,
    Freshness,
}

pub fn check_quote(
    quote: &AttestationQuote,
    payment_digest: &Digest,
    policy: &AttestationPolicy,
    now: u64,
) -> Result<(), QuoteFault> {
    if !verifies_canonical(&quote.enclave_pub, &quote.body(), &quote.quote_sig) {
        return Err(QuoteFault::Signature);
    }
    let endorsement = EndorsementBody {
        code_hash: &quote.code_hash,
        enclave_pub: &quote.enclave_pub,
    };
    if !verifies_canonical(&policy.root_public_key, &endorsement, &quote.endorsement) {
        return Err(QuoteFault::Endorsement);
    }
    if !policy.enclave_set.contains(&quote.enclave_pub) {
        return Err(QuoteFault::UnknownEnclave);
    }
    if !policy.whitelisted_code_hashes.contains(&quote.code_hash) {
        return Err(QuoteFault::CodeHash);
    }
    if quote.report_data != *payment_digest {
        return Err(QuoteFault::Binding);
    }
    if quote.issued_at > now || now - quote.issued_at > policy.freshness_window_seconds {
        return Err(QuoteFault::Freshness);
    }
    Ok(())
}

/// Not enough distinct valid quotes. `faults` lists, per rejected quote
/// index, the first check it failed; duplicates of an already counted
/// enclave are not faults, they just do not count twice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuorumFailure {
    pub valid: usize,
    pub required: u64,
    pub faults: Vec<(usize, QuoteFault)>,
}

/// Accepts iff at least `k` distinct enclaves supplied a valid quote.
/// Returns the number of distinct valid enclaves.
pub fn verify_quotes(
    quotes: &[AttestationQuote],
    payment_digest: &Digest,
    policy: &AttestationPolicy,
    now: u64,
) -> Result<usize, QuorumFailure> {
    let mut valid = BTreeSet::new();
    let mut faults = Vec::new();
    for (i, quote) in quotes.iter().enumerate() {
        match check_quote(quote, payment_digest, policy, now) {
            Ok(()) => {
                valid.insert(quote.enclave_pub);
            }
            Err(fault) => faults.push((i, fault)),
        }
    }
    if valid.len() as u64 >= policy.required_quotes_k {
        Ok(valid.len())
    } else {
        Err(QuorumFailure {
            valid: valid.len(),
            required: policy.required_quotes_k,
            faults,
        })
    }
}
