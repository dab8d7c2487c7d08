//! Pedersen commitments and non-interactive range proofs.
//!
//! A commitment is `C = v·G + r·H`. A [`RangeProof`] shows that `C` opens to
//! some `v ∈ [0, 2^32)` without revealing `v`:
//!
//! 1. `v` is split into bits `b_i`, each committed as `C_i = b_i·G + r_i·H`.
//! 2. For every `C_i` a two-branch sigma OR-proof shows that either `C_i` or
//!    `C_i − G` is a multiple of `H` (so `b_i ∈ {0, 1}`). The branch that is
//!    not true is simulated.
//! 3. `D = C − Σ 2^i·C_i` must equal `δ·H` for a known `δ`; a Schnorr proof of
//!    knowledge of `δ` links the bits back to `C`.
//!
//! All branches share one Fiat–Shamir challenge
//! `e = hash("tiva/zk/range", transcript)`; for every bit the two branch
//! challenges must sum to `e`. The transcript covers the statement label, the
//! context digest, `C`, every `C_i`, every branch commitment and the Schnorr
//! commitment. Prover randomness is derived from the witness and the
//! statement, so proofs are deterministic.
//!
//! The two compliance statements reduce to a range proof on a shifted
//! commitment: "limit ≥ threshold" proves `C_limit − threshold·G` is in range,
//! and "price ≤ limit" proves `C_limit − price·G` is in range.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{digest, domain, Digest};
use crate::group::{generator_g, mul_g, mul_h, GroupElement, Scalar};

/// Bit width of committed values.
pub const RANGE_BITS: usize = 32;
pub const MAX_VALUE: u64 = (1u64 << RANGE_BITS) - 1;

const LABEL_RANGE: &[u8] = b"range";
const LABEL_AT_LEAST: &[u8] = b"at-least";
const LABEL_PRICE: &[u8] = b"price-within-limit";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ZkError {
    #[error("value {0} is outside [0, 2^32)")]
    ValueRange(u64),
    #[error("threshold {threshold} exceeds the committed limit")]
    ThresholdExceedsLimit { threshold: u64 },
    #[error("price {price} exceeds the committed limit")]
    PriceExceedsLimit { price: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Commitment(pub GroupElement);

impl Commitment {
    /// Checks that the commitment opens to `(value, blinding)`.
    pub fn opens_to(&self, value: u64, blinding: &Scalar) -> bool {
        self.0 == mul_g(&Scalar::from_u64(value)) + mul_h(blinding)
    }

    /// `C − amount·G`: a commitment to `v − amount` under the same blinding.
    pub fn shifted_down(&self, amount: u64) -> Commitment {
        Commitment(self.0 - mul_g(&Scalar::from_u64(amount)))
    }

    pub fn element(&self) -> &GroupElement {
        &self.0
    }
}

impl std::ops::Add for Commitment {
    type Output = Commitment;
    fn add(self, rhs: Commitment) -> Commitment {
        Commitment(self.0 + rhs.0)
    }
}

/// `value·G + blinding·H` for `value < 2^32`.
pub fn commit(value: u64, blinding: &Scalar) -> Result<Commitment, ZkError> {
    if value > MAX_VALUE {
        return Err(ZkError::ValueRange(value));
    }
    Ok(commit_unchecked(value, blinding))
}

fn commit_unchecked(value: u64, blinding: &Scalar) -> Commitment {
    Commitment(mul_g(&Scalar::from_u64(value)) + mul_h(blinding))
}

/// Deterministic blinding factor derived from caller-held secret material.
pub fn derive_blinding(secret: &[u8], label: &[u8]) -> Scalar {
    let mut payload = Vec::with_capacity(secret.len() + label.len() + 8);
    payload.extend_from_slice(&(secret.len() as u64).to_le_bytes());
    payload.extend_from_slice(secret);
    payload.extend_from_slice(label);
    Scalar::derive(domain::ZK_BLINDING, &payload)
}

/// OR-proof transcript for one bit commitment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitProof {
    /// Branch commitments for "bit = 0" and "bit = 1".
    pub commitments: [GroupElement; 2],
    pub challenges: [Scalar; 2],
    pub responses: [Scalar; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeProof {
    pub bit_commitments: Vec<Commitment>,
    pub or_proofs: Vec<BitProof>,
    pub consistency_commitment: GroupElement,
    pub consistency_response: Scalar,
}

impl RangeProof {
    /// Serialized size in group elements and scalars:
    /// `n` bit commitments, `n` OR transcripts (2 elements + 4 scalars each),
    /// plus one linking commitment and one linking response.
    pub const fn element_count() -> (usize, usize) {
        (RANGE_BITS + 2 * RANGE_BITS + 1, 4 * RANGE_BITS + 1)
    }

    pub fn digest(&self) -> Digest {
        crate::crypto::digest_canonical(domain::ZK_RANGE, self).expect("proof is encodable")
    }
}

struct Transcript(Vec<u8>);

impl Transcript {
    fn new(label: &[u8], context: &Digest, commitment: &Commitment) -> Self {
        let mut t = Transcript(Vec::with_capacity(64 * (3 * RANGE_BITS + 3)));
        t.append(label);
        t.append(context.as_bytes());
        t.append(&commitment.0.to_bytes());
        t
    }

    fn append(&mut self, bytes: &[u8]) {
        self.0.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        self.0.extend_from_slice(bytes);
    }

    fn challenge(&self) -> Scalar {
        Scalar::from_bytes_mod_order(digest(domain::ZK_RANGE, &self.0).0)
    }
}

/// Per-proof nonce source keyed by the witness and the statement.
struct NonceSource(Vec<u8>);

impl NonceSource {
    fn new(value: u64, blinding: &Scalar, label: &[u8], context: &Digest) -> Self {
        let mut seed = Vec::with_capacity(128);
        seed.extend_from_slice(&value.to_le_bytes());
        seed.extend_from_slice(&blinding.to_bytes());
        seed.extend_from_slice(&(label.len() as u32).to_le_bytes());
        seed.extend_from_slice(label);
        seed.extend_from_slice(context.as_bytes());
        NonceSource(seed)
    }

    fn scalar(&self, role: u8, index: usize) -> Scalar {
        let mut payload = self.0.clone();
        payload.push(role);
        payload.extend_from_slice(&(index as u32).to_le_bytes());
        Scalar::derive(domain::ZK_NONCE, &payload)
    }
}

fn prove_committed(
    value: u64,
    blinding: &Scalar,
    commitment: &Commitment,
    label: &[u8],
    context: &Digest,
) -> RangeProof {
    debug_assert!(value <= MAX_VALUE);
    let nonces = NonceSource::new(value, blinding, label, context);
    let g = generator_g();

    let mut transcript = Transcript::new(label, context, commitment);
    let mut bit_blindings = Vec::with_capacity(RANGE_BITS);
    let mut bit_commitments = Vec::with_capacity(RANGE_BITS);
    for i in 0..RANGE_BITS {
        let bit = (value >> i) & 1;
        let r_i = nonces.scalar(0, i);
        let c_i = Commitment(if bit == 1 { g + mul_h(&r_i) } else { mul_h(&r_i) });
        transcript.append(&c_i.0.to_bytes());
        bit_blindings.push(r_i);
        bit_commitments.push(c_i);
    }

    // Branch commitments: the real branch uses a fresh nonce, the other is
    // simulated from a pre-chosen challenge and response.
    struct Pending {
        real: usize,
        k: Scalar,
        sim_challenge: Scalar,
        sim_response: Scalar,
        commitments: [GroupElement; 2],
    }
    let mut pending = Vec::with_capacity(RANGE_BITS);
    for i in 0..RANGE_BITS {
        let real = ((value >> i) & 1) as usize;
        let fake = 1 - real;
        let k = nonces.scalar(1, i);
        let sim_challenge = nonces.scalar(2, i);
        let sim_response = nonces.scalar(3, i);
        // C_i − fake·G = (real − fake)·G + r_i·H, so the simulated branch
        // z·H − c·(C_i − fake·G) needs only fixed-base multiplications.
        let mut commitments = [GroupElement::identity(); 2];
        commitments[real] = mul_h(&k);
        let shift = mul_g(&sim_challenge);
        let simulated = mul_h(&(sim_response - sim_challenge * bit_blindings[i]));
        commitments[fake] = if real == 1 { simulated - shift } else { simulated + shift };
        transcript.append(&commitments[0].to_bytes());
        transcript.append(&commitments[1].to_bytes());
        pending.push(Pending {
            real,
            k,
            sim_challenge,
            sim_response,
            commitments,
        });
    }

    let mut weighted = Scalar::ZERO;
    let mut pow = Scalar::ONE;
    let two = Scalar::from_u64(2);
    for r_i in &bit_blindings {
        weighted = weighted + pow * *r_i;
        pow = pow * two;
    }
    let delta = *blinding - weighted;
    let k_link = nonces.scalar(4, 0);
    let consistency_commitment = mul_h(&k_link);
    transcript.append(&consistency_commitment.to_bytes());

    let e = transcript.challenge();
    let or_proofs = pending
        .into_iter()
        .zip(&bit_blindings)
        .map(|(p, r_i)| {
            let fake = 1 - p.real;
            let real_challenge = e - p.sim_challenge;
            let mut challenges = [Scalar::ZERO; 2];
            let mut responses = [Scalar::ZERO; 2];
            challenges[p.real] = real_challenge;
            challenges[fake] = p.sim_challenge;
            responses[p.real] = p.k + real_challenge * *r_i;
            responses[fake] = p.sim_response;
            BitProof {
                commitments: p.commitments,
                challenges,
                responses,
            }
        })
        .collect();

    RangeProof {
        bit_commitments,
        or_proofs,
        consistency_commitment,
        consistency_response: k_link + e * delta,
    }
}

fn verify_committed(
    commitment: &Commitment,
    proof: &RangeProof,
    label: &[u8],
    context: &Digest,
) -> bool {
    if proof.bit_commitments.len() != RANGE_BITS || proof.or_proofs.len() != RANGE_BITS {
        return false;
    }
    let mut transcript = Transcript::new(label, context, commitment);
    for c_i in &proof.bit_commitments {
        transcript.append(&c_i.0.to_bytes());
    }
    for bp in &proof.or_proofs {
        transcript.append(&bp.commitments[0].to_bytes());
        transcript.append(&bp.commitments[1].to_bytes());
    }
    transcript.append(&proof.consistency_commitment.to_bytes());
    let e = transcript.challenge();

    if proof
        .or_proofs
        .iter()
        .any(|bp| bp.challenges[0] + bp.challenges[1] != e)
    {
        return false;
    }

    // Equations, all checked at once as a random linear combination:
    //   z_j·H − c_j·(C_i − j·G) − A_j = 0   for every bit i and j ∈ {0, 1}
    //   z·H − T − e·(C − Σ 2^i·C_i) = 0     (weight 1)
    // The weights are derived from the whole transcript, after the prover
    // has fixed every element.
    let weight_seed = digest(domain::ZK_BATCH, &transcript.0).0;
    let weight = |i: usize, j: usize| {
        let mut payload = weight_seed.to_vec();
        payload.extend_from_slice(&((2 * i + j) as u32).to_le_bytes());
        Scalar::derive(domain::ZK_BATCH, &payload)
    };

    let n = 3 * RANGE_BITS + 4;
    let mut scalars = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    let mut h_coeff = proof.consistency_response;
    let mut g_coeff = Scalar::ZERO;
    let mut pow = Scalar::ONE;
    let two = Scalar::from_u64(2);
    for (i, (c_i, bp)) in proof.bit_commitments.iter().zip(&proof.or_proofs).enumerate() {
        let w = [weight(i, 0), weight(i, 1)];
        h_coeff = h_coeff + w[0] * bp.responses[0] + w[1] * bp.responses[1];
        g_coeff = g_coeff + w[1] * bp.challenges[1];
        scalars.push(e * pow - w[0] * bp.challenges[0] - w[1] * bp.challenges[1]);
        points.push(c_i.0);
        for j in 0..2 {
            scalars.push(-w[j]);
            points.push(bp.commitments[j]);
        }
        pow = pow * two;
    }
    scalars.extend([h_coeff, g_coeff, -e, -Scalar::ONE]);
    points.extend([
        crate::group::generator_h(),
        generator_g(),
        commitment.0,
        proof.consistency_commitment,
    ]);
    GroupElement::multiscalar(&scalars, &points).is_identity()
}

/// Proves that `commit(value, blinding)` opens to a value in `[0, 2^32)`.
pub fn prove_range(value: u64, blinding: &Scalar, context: &Digest) -> Result<RangeProof, ZkError> {
    let commitment = commit(value, blinding)?;
    Ok(prove_committed(value, blinding, &commitment, LABEL_RANGE, context))
}

/// Never errors: malformed or mutated proofs simply fail.
pub fn verify_range(commitment: &Commitment, proof: &RangeProof, context: &Digest) -> bool {
    verify_committed(commitment, proof, LABEL_RANGE, context)
}

/// Selective disclosure: commits to `limit` and proves `limit ≥ threshold`.
pub fn prove_at_least(
    limit: u64,
    blinding: &Scalar,
    threshold: u64,
    context: &Digest,
) -> Result<(Commitment, RangeProof), ZkError> {
    let limit_commitment = commit(limit, blinding)?;
    if threshold > MAX_VALUE {
        return Err(ZkError::ValueRange(threshold));
    }
    let diff = limit
        .checked_sub(threshold)
        .ok_or(ZkError::ThresholdExceedsLimit { threshold })?;
    let shifted = limit_commitment.shifted_down(threshold);
    let proof = prove_committed(diff, blinding, &shifted, LABEL_AT_LEAST, context);
    Ok((limit_commitment, proof))
}

pub fn verify_at_least(
    limit_commitment: &Commitment,
    threshold: u64,
    proof: &RangeProof,
    context: &Digest,
) -> bool {
    verify_committed(
        &limit_commitment.shifted_down(threshold),
        proof,
        LABEL_AT_LEAST,
        context,
    )
}

/// Intent compliance: proves the public `price` does not exceed the
/// committed `limit`.
pub fn prove_price_within_limit(
    limit: u64,
    blinding: &Scalar,
    price: u64,
    context: &Digest,
) -> Result<RangeProof, ZkError> {
    let limit_commitment = commit(limit, blinding)?;
    let diff = limit
        .checked_sub(price)
        .ok_or(ZkError::PriceExceedsLimit { price })?;
    let shifted = limit_commitment.shifted_down(price);
    Ok(prove_committed(diff, blinding, &shifted, LABEL_PRICE, context))
}

pub fn verify_price_within_limit(
    limit_commitment: &Commitment,
    price: u64,
    proof: &RangeProof,
    context: &Digest,
) -> bool {
    verify_committed(
        &limit_commitment.shifted_down(price),
        proof,
        LABEL_PRICE,
        context,
    )
}

/// Binds a proof to one credential or mandate and one payment nonce.
pub fn compliance_context(subject_id: &Digest, payment_nonce: &Digest) -> Digest {
    let mut payload = [0u8; 64];
    payload[..32].copy_from_slice(subject_id.as_bytes());
    payload[32..].copy_from_slice(payment_nonce.as_bytes());
    digest(domain::ZK_CONTEXT, &payload)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplianceKind {
    AtLeast { threshold_minor: u64 },
    AtMostCommitted { public_price_minor: u64 },
}

/// A public statement about a committed value, checked against a proof.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceStatement {
    pub kind: ComplianceKind,
    pub subject_commitment: Commitment,
    pub context: Digest,
}

impl ComplianceStatement {
    pub fn verify(&self, proof: &RangeProof) -> bool {
        match self.kind {
            ComplianceKind::AtLeast { threshold_minor } => {
                verify_at_least(&self.subject_commitment, threshold_minor, proof, &self.context)
            }
            ComplianceKind::AtMostCommitted { public_price_minor } => verify_price_within_limit(
                &self.subject_commitment,
                public_price_minor,
                proof,
                &self.context,
            ),
        }
    }
}
