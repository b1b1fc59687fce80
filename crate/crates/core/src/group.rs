//! Prime-order group arithmetic and plain Schnorr signatures.
//!
//! Everything above this module is generic over [`Group`], so the whole
//! protocol runs unchanged on the production group ([`Ristretto255`]) and on
//! [`ToyGroup`], the order-11 subgroup of the integers modulo 23 whose
//! discrete logarithms can be enumerated by hand.

use std::fmt::Debug;

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_TABLE;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar as DalekScalar;
use curve25519_dalek::traits::{Identity, VartimeMultiscalarMul};
use rand::{CryptoRng, RngCore};
use sha2::{Digest as _, Sha512};
use thiserror::Error;

/// Domain tag for plain Schnorr signatures.
pub const TAG_SIGNATURE: &[u8] = b"cosi-v1/schnorr\0";
/// Domain tag for proofs of secret-key possession.
pub const TAG_POSSESSION: &[u8] = b"cosi-v1/possession\0";
/// Domain tag for collective challenges in restart mode.
pub const TAG_COLLECTIVE: &[u8] = b"cosi-v1/collective\0";
/// Domain tag for collective challenges bound to a commit tree.
pub const TAG_COLLECTIVE_TREE: &[u8] = b"cosi-v1/collective-tree\0";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("non-canonical scalar encoding")]
    NonCanonicalScalar,
    #[error("encoding is not an element of the prime-order group")]
    InvalidElement,
    #[error("unknown group id {0}")]
    UnknownGroup(u8),
    #[error("truncated input")]
    Truncated,
    #[error("malformed: {0}")]
    Malformed(&'static str),
}

/// A cyclic group of prime order `q` with a fixed generator.
///
/// The group operation is written multiplicatively (`op`, `pow`) to match the
/// usual Schnorr notation, even when the backend is an elliptic curve.
pub trait Group: Copy + Clone + Debug + Send + Sync + 'static {
    type Scalar: Copy + Clone + Eq + Debug + Send + Sync + 'static;
    type Element: Copy + Clone + Eq + Debug + Send + Sync + 'static;

    /// One-byte identifier used in wire formats.
    const ID: u8;
    const NAME: &'static str;
    const SCALAR_LEN: usize;
    const ELEMENT_LEN: usize;

    fn generator() -> Self::Element;
    fn identity() -> Self::Element;
    fn op(a: &Self::Element, b: &Self::Element) -> Self::Element;
    fn invert(a: &Self::Element) -> Self::Element;
    fn pow(base: &Self::Element, exp: &Self::Scalar) -> Self::Element;

    fn base_pow(exp: &Self::Scalar) -> Self::Element {
        Self::pow(&Self::generator(), exp)
    }

    /// `prod base_i ^ exp_i`, variable time.
    fn multi_pow(terms: &[(Self::Scalar, Self::Element)]) -> Self::Element {
        terms
            .iter()
            .fold(Self::identity(), |acc, (s, e)| Self::op(&acc, &Self::pow(e, s)))
    }

    fn scalar_zero() -> Self::Scalar;
    fn scalar_one() -> Self::Scalar;
    fn scalar_from_u64(v: u64) -> Self::Scalar;
    fn scalar_add(a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn scalar_sub(a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn scalar_mul(a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    /// Multiplicative inverse; `None` for zero.
    fn scalar_invert(a: &Self::Scalar) -> Option<Self::Scalar>;
    /// Reduce a 64-byte little-endian integer modulo `q`.
    fn scalar_from_wide(bytes: &[u8; 64]) -> Self::Scalar;

    fn random_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Self::Scalar {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        Self::scalar_from_wide(&wide)
    }

    fn encode_scalar(s: &Self::Scalar) -> Vec<u8>;
    fn decode_scalar(bytes: &[u8]) -> Result<Self::Scalar, DecodeError>;
    fn encode_element(e: &Self::Element) -> Vec<u8>;
    fn decode_element(bytes: &[u8]) -> Result<Self::Element, DecodeError>;
}

fn check_len(bytes: &[u8], expected: usize) -> Result<(), DecodeError> {
    if bytes.len() != expected {
        return Err(DecodeError::Length { expected, actual: bytes.len() });
    }
    Ok(())
}

/// Ristretto255: the prime-order quotient of Curve25519.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ristretto255;

impl Group for Ristretto255 {
    type Scalar = DalekScalar;
    type Element = RistrettoPoint;

    const ID: u8 = 0x01;
    const NAME: &'static str = "prod";
    const SCALAR_LEN: usize = 32;
    const ELEMENT_LEN: usize = 32;

    fn generator() -> RistrettoPoint {
        curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT
    }

    fn identity() -> RistrettoPoint {
        RistrettoPoint::identity()
    }

    fn op(a: &RistrettoPoint, b: &RistrettoPoint) -> RistrettoPoint {
        a + b
    }

    fn invert(a: &RistrettoPoint) -> RistrettoPoint {
        -a
    }

    fn pow(base: &RistrettoPoint, exp: &DalekScalar) -> RistrettoPoint {
        base * exp
    }

    fn base_pow(exp: &DalekScalar) -> RistrettoPoint {
        exp * RISTRETTO_BASEPOINT_TABLE
    }

    fn multi_pow(terms: &[(DalekScalar, RistrettoPoint)]) -> RistrettoPoint {
        RistrettoPoint::vartime_multiscalar_mul(terms.iter().map(|t| t.0), terms.iter().map(|t| t.1))
    }

    fn scalar_zero() -> DalekScalar {
        DalekScalar::ZERO
    }

    fn scalar_one() -> DalekScalar {
        DalekScalar::ONE
    }

    fn scalar_from_u64(v: u64) -> DalekScalar {
        DalekScalar::from(v)
    }

    fn scalar_add(a: &DalekScalar, b: &DalekScalar) -> DalekScalar {
        a + b
    }

    fn scalar_sub(a: &DalekScalar, b: &DalekScalar) -> DalekScalar {
        a - b
    }

    fn scalar_mul(a: &DalekScalar, b: &DalekScalar) -> DalekScalar {
        a * b
    }

    fn scalar_invert(a: &DalekScalar) -> Option<DalekScalar> {
        (*a != DalekScalar::ZERO).then(|| a.invert())
    }

    fn scalar_from_wide(bytes: &[u8; 64]) -> DalekScalar {
        DalekScalar::from_bytes_mod_order_wide(bytes)
    }

    fn encode_scalar(s: &DalekScalar) -> Vec<u8> {
        s.to_bytes().to_vec()
    }

    fn decode_scalar(bytes: &[u8]) -> Result<DalekScalar, DecodeError> {
        check_len(bytes, 32)?;
        let arr: [u8; 32] = bytes.try_into().expect("length checked");
        Option::from(DalekScalar::from_canonical_bytes(arr)).ok_or(DecodeError::NonCanonicalScalar)
    }

    fn encode_element(e: &RistrettoPoint) -> Vec<u8> {
        e.compress().to_bytes().to_vec()
    }

    fn decode_element(bytes: &[u8]) -> Result<RistrettoPoint, DecodeError> {
        check_len(bytes, 32)?;
        CompressedRistretto::from_slice(bytes)
            .map_err(|_| DecodeError::InvalidElement)?
            .decompress()
            .ok_or(DecodeError::InvalidElement)
    }
}

/// Modulus of the toy group's ambient field.
pub const TOY_P: u32 = 23;
/// Order of the toy group.
pub const TOY_Q: u32 = 11;
/// Generator of the toy group.
pub const TOY_G: u32 = 2;

/// The order-11 subgroup of `(Z/23Z)*` generated by 2.
///
/// Discrete logs are trivially brute-forced, which is the point: tests can
/// check protocol arithmetic against direct enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ToyScalar(u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ToyElement(u8);

impl ToyScalar {
    pub fn new(v: u32) -> Self {
        ToyScalar((v % TOY_Q) as u8)
    }

    pub fn value(self) -> u32 {
        self.0 as u32
    }
}

impl ToyElement {
    /// Returns `None` unless `v` lies in the order-11 subgroup.
    pub fn new(v: u32) -> Option<Self> {
        let in_subgroup = v != 0 && v < TOY_P && toy_modpow(v, TOY_Q) == 1;
        in_subgroup.then_some(ToyElement(v as u8))
    }

    pub fn value(self) -> u32 {
        self.0 as u32
    }
}

fn toy_modpow(base: u32, exp: u32) -> u32 {
    let mut acc = 1u32;
    let mut b = base % TOY_P;
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % TOY_P;
        }
        b = b * b % TOY_P;
        e >>= 1;
    }
    acc
}

impl Group for ToyGroup {
    type Scalar = ToyScalar;
    type Element = ToyElement;

    const ID: u8 = 0x00;
    const NAME: &'static str = "toy";
    const SCALAR_LEN: usize = 2;
    const ELEMENT_LEN: usize = 2;

    fn generator() -> ToyElement {
        ToyElement(TOY_G as u8)
    }

    fn identity() -> ToyElement {
        ToyElement(1)
    }

    fn op(a: &ToyElement, b: &ToyElement) -> ToyElement {
        ToyElement((a.value() * b.value() % TOY_P) as u8)
    }

    fn invert(a: &ToyElement) -> ToyElement {
        // a^(p-2) by Fermat.
        ToyElement(toy_modpow(a.value(), TOY_P - 2) as u8)
    }

    fn pow(base: &ToyElement, exp: &ToyScalar) -> ToyElement {
        ToyElement(toy_modpow(base.value(), exp.value()) as u8)
    }

    fn scalar_zero() -> ToyScalar {
        ToyScalar(0)
    }

    fn scalar_one() -> ToyScalar {
        ToyScalar(1)
    }

    fn scalar_from_u64(v: u64) -> ToyScalar {
        ToyScalar((v % TOY_Q as u64) as u8)
    }

    fn scalar_add(a: &ToyScalar, b: &ToyScalar) -> ToyScalar {
        ToyScalar::new(a.value() + b.value())
    }

    fn scalar_sub(a: &ToyScalar, b: &ToyScalar) -> ToyScalar {
        ToyScalar::new(a.value() + TOY_Q - b.value())
    }

    fn scalar_mul(a: &ToyScalar, b: &ToyScalar) -> ToyScalar {
        ToyScalar::new(a.value() * b.value())
    }

    fn scalar_invert(a: &ToyScalar) -> Option<ToyScalar> {
        (1..TOY_Q).map(ToyScalar::new).find(|b| a.value() * b.value() % TOY_Q == 1)
    }

    fn scalar_from_wide(bytes: &[u8; 64]) -> ToyScalar {
        // Horner evaluation from the most significant (last) byte.
        let r = bytes.iter().rev().fold(0u32, |acc, &b| (acc * 256 + b as u32) % TOY_Q);
        ToyScalar(r as u8)
    }

    fn encode_scalar(s: &ToyScalar) -> Vec<u8> {
        (s.0 as u16).to_le_bytes().to_vec()
    }

    fn decode_scalar(bytes: &[u8]) -> Result<ToyScalar, DecodeError> {
        check_len(bytes, 2)?;
        let v = u16::from_le_bytes([bytes[0], bytes[1]]) as u32;
        if v >= TOY_Q {
            return Err(DecodeError::NonCanonicalScalar);
        }
        Ok(ToyScalar(v as u8))
    }

    fn encode_element(e: &ToyElement) -> Vec<u8> {
        (e.0 as u16).to_le_bytes().to_vec()
    }

    fn decode_element(bytes: &[u8]) -> Result<ToyElement, DecodeError> {
        check_len(bytes, 2)?;
        let v = u16::from_le_bytes([bytes[0], bytes[1]]) as u32;
        ToyElement::new(v).ok_or(DecodeError::InvalidElement)
    }
}

/// `H(tag || encode(commit) || message...)` reduced modulo the group order.
pub fn challenge_hash<G: Group>(commit: &G::Element, statement: &[u8], tag: &[u8]) -> G::Scalar {
    challenge_hash_parts::<G>(tag, commit, &[statement])
}

pub(crate) fn challenge_hash_parts<G: Group>(
    tag: &[u8],
    commit: &G::Element,
    parts: &[&[u8]],
) -> G::Scalar {
    let mut h = Sha512::new();
    h.update(tag);
    h.update(G::encode_element(commit));
    for p in parts {
        h.update(p);
    }
    let wide: [u8; 64] = h.finalize().into();
    G::scalar_from_wide(&wide)
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct KeyPair<G: Group> {
    secret: G::Scalar,
    public: G::Element,
}

impl<G: Group> Debug for KeyPair<G> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public).finish_non_exhaustive()
    }
}

impl<G: Group> KeyPair<G> {
    /// Draws a uniformly random nonzero secret key.
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        loop {
            let secret = G::random_scalar(rng);
            if secret != G::scalar_zero() {
                return Self::from_secret(secret).expect("nonzero");
            }
        }
    }

    /// Fails on a zero secret.
    pub fn from_secret(secret: G::Scalar) -> Option<Self> {
        if secret == G::scalar_zero() {
            return None;
        }
        Some(KeyPair { secret, public: G::base_pow(&secret) })
    }

    pub fn secret(&self) -> &G::Scalar {
        &self.secret
    }

    pub fn public(&self) -> &G::Element {
        &self.public
    }
}

/// A Schnorr signature `(c, r)`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Signature<G: Group> {
    pub challenge: G::Scalar,
    pub response: G::Scalar,
}

impl<G: Group> Signature<G> {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = G::encode_scalar(&self.challenge);
        out.extend(G::encode_scalar(&self.response));
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        check_len(bytes, 2 * G::SCALAR_LEN)?;
        let (c, r) = bytes.split_at(G::SCALAR_LEN);
        Ok(Signature { challenge: G::decode_scalar(c)?, response: G::decode_scalar(r)? })
    }
}

/// Signs with an explicit nonce. Callers must never reuse `nonce` across
/// different challenges.
pub fn sign_with_nonce<G: Group>(
    keypair: &KeyPair<G>,
    statement: &[u8],
    tag: &[u8],
    nonce: &G::Scalar,
) -> Signature<G> {
    let commit = G::base_pow(nonce);
    let challenge = challenge_hash::<G>(&commit, statement, tag);
    let response = G::scalar_sub(nonce, &G::scalar_mul(&challenge, &keypair.secret));
    Signature { challenge, response }
}

pub fn sign_tagged<G: Group, R: RngCore + CryptoRng>(
    keypair: &KeyPair<G>,
    statement: &[u8],
    tag: &[u8],
    rng: &mut R,
) -> Signature<G> {
    let nonce = G::random_scalar(rng);
    sign_with_nonce(keypair, statement, tag, &nonce)
}

/// Accepts iff `c == H(G^r X^c || statement)`.
pub fn verify_tagged<G: Group>(
    public: &G::Element,
    statement: &[u8],
    tag: &[u8],
    sig: &Signature<G>,
) -> bool {
    let commit = recompute_commit::<G>(public, &sig.challenge, &sig.response);
    challenge_hash::<G>(&commit, statement, tag) == sig.challenge
}

/// `G^r * X^c`.
pub fn recompute_commit<G: Group>(
    public: &G::Element,
    challenge: &G::Scalar,
    response: &G::Scalar,
) -> G::Element {
    G::multi_pow(&[(*response, G::generator()), (*challenge, *public)])
}

pub fn schnorr_sign<G: Group, R: RngCore + CryptoRng>(
    keypair: &KeyPair<G>,
    statement: &[u8],
    rng: &mut R,
) -> Signature<G> {
    sign_tagged(keypair, statement, TAG_SIGNATURE, rng)
}

pub fn schnorr_verify<G: Group>(public: &G::Element, statement: &[u8], sig: &Signature<G>) -> bool {
    verify_tagged(public, statement, TAG_SIGNATURE, sig)
}

/// A public key together with a proof that its owner knows the secret.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SelfSignedKey<G: Group> {
    pub public: G::Element,
    pub proof: Signature<G>,
}

pub fn prove_possession<G: Group, R: RngCore + CryptoRng>(
    keypair: &KeyPair<G>,
    rng: &mut R,
) -> SelfSignedKey<G> {
    let encoded = G::encode_element(&keypair.public);
    SelfSignedKey { public: keypair.public, proof: sign_tagged(keypair, &encoded, TAG_POSSESSION, rng) }
}

pub fn verify_possession<G: Group>(key: &SelfSignedKey<G>) -> bool {
    verify_tagged(&key.public, &G::encode_element(&key.public), TAG_POSSESSION, &key.proof)
}
