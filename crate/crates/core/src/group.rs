//! Prime-order group used for commitments: Ristretto255 over Curve25519.
//!
//! The group has order
//! `q = 2^252 + 27742317777372353535851937790883648493`.
//! `G` is the standard basepoint; `H` is derived by hashing a fixed domain
//! tag to the group, so nobody knows `log_G(H)`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use curve25519_dalek::constants::{RISTRETTO_BASEPOINT_POINT, RISTRETTO_BASEPOINT_TABLE};
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoBasepointTable, RistrettoPoint};
use curve25519_dalek::traits::{Identity, VartimeMultiscalarMul};
use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

use crate::crypto::{digest, domain, DomainTag};
use crate::encoding::hex_array;

/// Group order `q`, little-endian.
pub const GROUP_ORDER_LE: [u8; 32] = [
    0xed, 0xd3, 0xf5, 0x5c, 0x1a, 0x63, 0x12, 0x58, 0xd6, 0x9c, 0xf7, 0xa2, 0xde, 0xf9, 0xde, 0x14,
    0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x10,
];

/// Scalar modulo `q`.
#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct Scalar(pub(crate) curve25519_dalek::Scalar);

impl Scalar {
    pub const ZERO: Scalar = Scalar(curve25519_dalek::Scalar::ZERO);
    pub const ONE: Scalar = Scalar(curve25519_dalek::Scalar::ONE);

    pub fn from_u64(v: u64) -> Self {
        Scalar(curve25519_dalek::Scalar::from(v))
    }

    /// Reduces 32 little-endian bytes modulo `q`.
    pub fn from_bytes_mod_order(bytes: [u8; 32]) -> Self {
        Scalar(curve25519_dalek::Scalar::from_bytes_mod_order(bytes))
    }

    /// Accepts only canonical (already reduced) encodings.
    pub fn from_canonical_bytes(bytes: [u8; 32]) -> Option<Self> {
        Option::from(curve25519_dalek::Scalar::from_canonical_bytes(bytes)).map(Scalar)
    }

    /// Uniform scalar derived from `payload` via two tagged hashes and a wide
    /// reduction.
    pub fn derive(tag: DomainTag, payload: &[u8]) -> Self {
        let mut buf = Vec::with_capacity(payload.len() + 1);
        let mut wide = [0u8; 64];
        for (i, half) in wide.chunks_exact_mut(32).enumerate() {
            buf.clear();
            buf.push(i as u8);
            buf.extend_from_slice(payload);
            half.copy_from_slice(digest(tag, &buf).as_bytes());
        }
        Scalar(curve25519_dalek::Scalar::from_bytes_mod_order_wide(&wide))
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn invert(&self) -> Self {
        Scalar(self.0.invert())
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", hex::encode(self.to_bytes()))
    }
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 + rhs.0)
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 - rhs.0)
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 * rhs.0)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        hex_array::serialize(&self.to_bytes(), s)
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let bytes: [u8; 32] = hex_array::deserialize(d)?;
        Scalar::from_canonical_bytes(bytes).ok_or_else(|| D::Error::custom("non-canonical scalar"))
    }
}

/// Element of the Ristretto255 group, written additively.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct GroupElement(pub(crate) RistrettoPoint);

impl GroupElement {
    pub fn identity() -> Self {
        GroupElement(RistrettoPoint::identity())
    }

    pub fn is_identity(&self) -> bool {
        self.0 == RistrettoPoint::identity()
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.compress().to_bytes()
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Option<Self> {
        CompressedRistretto(bytes).decompress().map(GroupElement)
    }

    /// `Σ scalars[i] · points[i]`, variable time (verifier side only).
    pub fn multiscalar(scalars: &[Scalar], points: &[GroupElement]) -> GroupElement {
        GroupElement(RistrettoPoint::vartime_multiscalar_mul(
            scalars.iter().map(|s| s.0),
            points.iter().map(|p| p.0),
        ))
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({})", hex::encode(self.to_bytes()))
    }
}

impl Add for GroupElement {
    type Output = GroupElement;
    fn add(self, rhs: GroupElement) -> GroupElement {
        GroupElement(self.0 + rhs.0)
    }
}

impl Sub for GroupElement {
    type Output = GroupElement;
    fn sub(self, rhs: GroupElement) -> GroupElement {
        GroupElement(self.0 - rhs.0)
    }
}

impl Neg for GroupElement {
    type Output = GroupElement;
    fn neg(self) -> GroupElement {
        GroupElement(-self.0)
    }
}

impl Mul<Scalar> for GroupElement {
    type Output = GroupElement;
    fn mul(self, rhs: Scalar) -> GroupElement {
        GroupElement(self.0 * rhs.0)
    }
}

impl Serialize for GroupElement {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        hex_array::serialize(&self.to_bytes(), s)
    }
}

impl<'de> Deserialize<'de> for GroupElement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let bytes: [u8; 32] = hex_array::deserialize(d)?;
        GroupElement::from_bytes(bytes).ok_or_else(|| D::Error::custom("invalid group element"))
    }
}

/// The standard basepoint `G`.
pub fn generator_g() -> GroupElement {
    GroupElement(RISTRETTO_BASEPOINT_POINT)
}

/// The independent generator `H`.
pub fn generator_h() -> GroupElement {
    GroupElement(*h_point())
}

fn h_point() -> &'static RistrettoPoint {
    static H: OnceLock<RistrettoPoint> = OnceLock::new();
    H.get_or_init(|| {
        let mut wide = [0u8; 64];
        wide[..32].copy_from_slice(digest(domain::ZK_GENERATOR, b"\x00").as_bytes());
        wide[32..].copy_from_slice(digest(domain::ZK_GENERATOR, b"\x01").as_bytes());
        RistrettoPoint::from_uniform_bytes(&wide)
    })
}

fn h_table() -> &'static RistrettoBasepointTable {
    static TABLE: OnceLock<RistrettoBasepointTable> = OnceLock::new();
    TABLE.get_or_init(|| RistrettoBasepointTable::create(h_point()))
}

/// `s · G` using the precomputed table.
pub fn mul_g(s: &Scalar) -> GroupElement {
    GroupElement(&s.0 * RISTRETTO_BASEPOINT_TABLE)
}

/// `s · H` using a precomputed table.
pub fn mul_h(s: &Scalar) -> GroupElement {
    GroupElement(&s.0 * h_table())
}
