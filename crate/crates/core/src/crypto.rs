//! Cryptographic primitives backing the pairing protocol.
//!
//! Key agreement runs on NIST P-256. The derived-value functions (`f1`
//! commitments, the six-digit comparison value `g`, link-key derivation
//! `f2`, and the stage-2 check value `f3`) are keyed-hash constructions
//! over HMAC-SHA-256 with fixed domain-separation tags and big-endian
//! field encodings. They are simulator-local constructions, not the bit
//! layouts from the Bluetooth core specification, and they are pinned by
//! golden vectors in the test suite.
//!
//! Nothing here attempts constant-time execution; the simulator's threat
//! model is protocol-level, not side-channel.

use hmac::{Hmac, KeyInit, Mac};
use p256::elliptic_curve::sec1::ToSec1Point;
use p256::{NonZeroScalar, Sec1Point};
use rand_core::RngCore;
use sha2::{Digest, Sha256};

use crate::Address;

type HmacSha256 = Hmac<Sha256>;

/// Domain tag for link-key derivation.
const TAG_LINK_KEY: &[u8; 4] = b"btlk";
/// Domain tag for stage-2 check values.
const TAG_CHECK: &[u8; 4] = b"btck";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    /// Peer public key failed the on-curve / non-identity check. A
    /// malformed or tampered key exchange message surfaces here.
    #[error("peer public key is not a valid curve point")]
    InvalidPoint,
    /// Sealed payload failed authentication (wrong key or tampered bytes).
    #[error("sealed payload failed authentication")]
    UnsealFailure,
}

/// Uncompressed P-256 point carried on the wire as x || y (64 bytes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicPoint {
    bytes: [u8; 64],
}

impl PublicPoint {
    pub fn from_bytes(bytes: [u8; 64]) -> Self {
        PublicPoint { bytes }
    }

    pub fn as_bytes(&self) -> &[u8; 64] {
        &self.bytes
    }

    /// X coordinate, the part that enters the hash constructions.
    pub fn x(&self) -> [u8; 32] {
        self.bytes[..32].try_into().unwrap()
    }

    pub fn y(&self) -> [u8; 32] {
        self.bytes[32..].try_into().unwrap()
    }

    fn decode(&self) -> Result<p256::PublicKey, CryptoError> {
        let (x, y) = (self.x(), self.y());
        let point = Sec1Point::from_affine_coordinates((&x).into(), (&y).into(), false);
        p256::PublicKey::from_sec1_bytes(point.as_bytes()).map_err(|_| CryptoError::InvalidPoint)
    }

    /// True when the coordinates decode to a point on the curve.
    pub fn is_on_curve(&self) -> bool {
        self.decode().is_ok()
    }
}

/// P-256 key pair; the private scalar never leaves this struct.
#[derive(Clone)]
pub struct KeyPair {
    secret: NonZeroScalar,
    public: PublicPoint,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("public_x", &hex::encode(self.public.x()))
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn public(&self) -> PublicPoint {
        self.public
    }

    /// Builds a key pair from an explicit big-endian scalar. Returns `None`
    /// for zero or out-of-range scalars.
    pub fn from_scalar_bytes(bytes: [u8; 32]) -> Option<Self> {
        let secret: Option<NonZeroScalar> = NonZeroScalar::from_repr(bytes.into()).into();
        secret.map(|secret| {
            let public = encode_public(&p256::PublicKey::from_secret_scalar(&secret));
            KeyPair { secret, public }
        })
    }
}

fn encode_public(pk: &p256::PublicKey) -> PublicPoint {
    let point = pk.to_sec1_point(false);
    let mut bytes = [0u8; 64];
    bytes[..32].copy_from_slice(point.x().expect("uncompressed point has x"));
    bytes[32..].copy_from_slice(point.y().expect("uncompressed point has y"));
    PublicPoint::from_bytes(bytes)
}

/// Generates a fresh key pair by rejection-sampling a scalar in [1, n-1].
pub fn generate_keypair(rng: &mut impl RngCore) -> KeyPair {
    loop {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        if let Some(pair) = KeyPair::from_scalar_bytes(bytes) {
            return pair;
        }
    }
}

/// 32-byte ECDH shared secret (x-coordinate of the shared point).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DhKey {
    bytes: [u8; 32],
}

impl DhKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.bytes
    }
}

/// ECDH: x-coordinate of `own.secret · peer`.
pub fn derive_dh_key(own: &KeyPair, peer: &PublicPoint) -> Result<DhKey, CryptoError> {
    let peer_key = peer.decode()?;
    let shared = p256::ecdh::diffie_hellman(&own.secret, peer_key.as_affine());
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(shared.raw_secret_bytes().as_slice());
    Ok(DhKey { bytes })
}

/// 16-byte pairing nonce (Nx).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Nonce(pub [u8; 16]);

impl Nonce {
    pub const ZERO: Nonce = Nonce([0u8; 16]);

    pub fn random(rng: &mut impl RngCore) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        Nonce(bytes)
    }
}

/// 16-byte randomizer (rx). All-zero for Numeric Comparison and Just
/// Works, the zero-padded passkey for Passkey Entry, and a fresh random
/// value carried over the OOB channel for Out of Band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomizerR(pub [u8; 16]);

impl RandomizerR {
    pub const ZERO: RandomizerR = RandomizerR([0u8; 16]);

    pub fn random(rng: &mut impl RngCore) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        RandomizerR(bytes)
    }

    /// Zero-padded big-endian encoding of a six-digit passkey.
    pub fn from_passkey(passkey: u32) -> Self {
        let mut bytes = [0u8; 16];
        bytes[12..].copy_from_slice(&passkey.to_be_bytes());
        RandomizerR(bytes)
    }
}

/// 16-byte commitment value (Cx).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Commitment(pub [u8; 16]);

/// 16-byte link key shared by both endpoints after successful pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkKey(pub [u8; 16]);

fn hmac_sha256(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts any key length");
    for part in parts {
        mac.update(part);
    }
    mac.finalize().into_bytes().into()
}

fn truncate16(digest: [u8; 32]) -> [u8; 16] {
    digest[..16].try_into().unwrap()
}

/// Commitment function: HMAC-SHA-256 keyed by the nonce over
/// x(PKa) || x(PKb) || r, truncated to the leading 128 bits.
pub fn f1_commit(pk_a: &PublicPoint, pk_b: &PublicPoint, n: &Nonce, r: &RandomizerR) -> Commitment {
    Commitment(truncate16(hmac_sha256(&n.0, &[&pk_a.x(), &pk_b.x(), &r.0])))
}

/// Six-digit verification value displayed during Numeric Comparison:
/// the low 32 bits of SHA-256(x(PKa) || x(PKb) || Na || Nb) reduced
/// modulo 10^6.
pub fn g_verify_value(pk_a: &PublicPoint, pk_b: &PublicPoint, n_a: &Nonce, n_b: &Nonce) -> u32 {
    let mut hasher = Sha256::new();
    hasher.update(pk_a.x());
    hasher.update(pk_b.x());
    hasher.update(n_a.0);
    hasher.update(n_b.0);
    let digest = hasher.finalize();
    let low = u32::from_be_bytes(digest[28..32].try_into().unwrap());
    low % 1_000_000
}

/// Link-key derivation, keyed by the DH secret with the "btlk" tag.
pub fn f2_link_key(
    dh: &DhKey,
    n_a: &Nonce,
    n_b: &Nonce,
    addr_a: Address,
    addr_b: Address,
) -> LinkKey {
    LinkKey(truncate16(hmac_sha256(
        dh.as_bytes(),
        &[
            TAG_LINK_KEY,
            &n_a.0,
            &n_b.0,
            &addr_a.to_bytes(),
            &addr_b.to_bytes(),
        ],
    )))
}

/// Stage-2 check value, keyed by the DH secret with the "btck" tag. The
/// verifying side recomputes it from its own view of the session and
/// compares for equality.
pub fn f3_check_value(
    dh: &DhKey,
    n_a: &Nonce,
    n_b: &Nonce,
    r: &RandomizerR,
    io_caps: u8,
    addr_a: Address,
    addr_b: Address,
) -> [u8; 16] {
    truncate16(hmac_sha256(
        dh.as_bytes(),
        &[
            TAG_CHECK,
            &n_a.0,
            &n_b.0,
            &r.0,
            &[io_caps],
            &addr_a.to_bytes(),
            &addr_b.to_bytes(),
        ],
    ))
}

/// Sealed application payload: XOR keystream plus a 16-byte MAC tag.
///
/// This is the encryption *stub* the simulator uses after pairing — just
/// enough authenticated encryption to show who can read relayed traffic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedPacket {
    pub counter: u64,
    pub ciphertext: Vec<u8>,
    pub tag: [u8; 16],
}

impl SealedPacket {
    /// Wire encoding: counter (8 BE) || tag (16) || ciphertext.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.ciphertext.len());
        out.extend_from_slice(&self.counter.to_be_bytes());
        out.extend_from_slice(&self.tag);
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() < 24 {
            return None;
        }
        Some(SealedPacket {
            counter: u64::from_be_bytes(bytes[..8].try_into().unwrap()),
            tag: bytes[8..24].try_into().unwrap(),
            ciphertext: bytes[24..].to_vec(),
        })
    }
}

fn keystream(key: &LinkKey, counter: u64, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len);
    let mut block: u32 = 0;
    while out.len() < len {
        let ks = hmac_sha256(
            &key.0,
            &[b"strm", &counter.to_be_bytes(), &block.to_be_bytes()],
        );
        out.extend_from_slice(&ks);
        block += 1;
    }
    out.truncate(len);
    out
}

fn seal_tag(key: &LinkKey, counter: u64, ciphertext: &[u8]) -> [u8; 16] {
    truncate16(hmac_sha256(
        &key.0,
        &[b"auth", &counter.to_be_bytes(), ciphertext],
    ))
}

/// Seals `plaintext` under `key` with an explicit message counter.
pub fn seal(key: &LinkKey, counter: u64, plaintext: &[u8]) -> SealedPacket {
    let ks = keystream(key, counter, plaintext.len());
    let ciphertext: Vec<u8> = plaintext.iter().zip(ks).map(|(p, k)| p ^ k).collect();
    let tag = seal_tag(key, counter, &ciphertext);
    SealedPacket {
        counter,
        ciphertext,
        tag,
    }
}

/// Opens a sealed packet; fails when the key is wrong or the packet was
/// modified in flight.
pub fn unseal(key: &LinkKey, packet: &SealedPacket) -> Result<Vec<u8>, CryptoError> {
    if seal_tag(key, packet.counter, &packet.ciphertext) != packet.tag {
        return Err(CryptoError::UnsealFailure);
    }
    let ks = keystream(key, packet.counter, packet.ciphertext.len());
    Ok(packet.ciphertext.iter().zip(ks).map(|(c, k)| c ^ k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    const G_X: &str = "6b17d1f2e12c4247f8bce6e563a440f277037d812deb33a0f4a13945d898c296";
    const G_Y: &str = "4fe342e2fe1a7f9b8ee7eb4a7c0f9e162bce33576b315ececbb6406837bf51f5";

    #[test]
    fn scalar_one_yields_base_point() {
        let mut scalar = [0u8; 32];
        scalar[31] = 1;
        let pair = KeyPair::from_scalar_bytes(scalar).unwrap();
        assert_eq!(hex::encode(pair.public().x()), G_X);
        assert_eq!(hex::encode(pair.public().y()), G_Y);
    }

    #[test]
    fn keygen_is_deterministic_under_seed() {
        let a = generate_keypair(&mut rng(99));
        let b = generate_keypair(&mut rng(99));
        assert_eq!(a.public(), b.public());
        let c = generate_keypair(&mut rng(100));
        assert_ne!(a.public(), c.public());
    }

    #[test]
    fn dh_is_symmetric() {
        let mut r = rng(7);
        let a = generate_keypair(&mut r);
        let b = generate_keypair(&mut r);
        let ab = derive_dh_key(&a, &b.public()).unwrap();
        let ba = derive_dh_key(&b, &a.public()).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn dh_rejects_off_curve_point() {
        let mut r = rng(8);
        let a = generate_keypair(&mut r);
        let b = generate_keypair(&mut r);
        let mut bytes = *b.public().as_bytes();
        bytes[63] ^= 1;
        let bad = PublicPoint::from_bytes(bytes);
        assert!(!bad.is_on_curve());
        assert_eq!(derive_dh_key(&a, &bad), Err(CryptoError::InvalidPoint));
    }

    fn pattern_point(start: u8) -> PublicPoint {
        // Raw x-coordinate carrier for hash-function vectors; these bytes
        // are never decoded as a curve point.
        let mut bytes = [0u8; 64];
        for (i, b) in bytes.iter_mut().enumerate() {
            *b = start.wrapping_add(i as u8);
        }
        PublicPoint::from_bytes(bytes)
    }

    #[test]
    fn f1_matches_frozen_oracle_value() {
        let pk_a = pattern_point(0);
        let pk_b = pattern_point(32);
        let n = Nonce(core::array::from_fn(|i| i as u8));
        let r = RandomizerR(core::array::from_fn(|i| 16 + i as u8));
        let c = f1_commit(&pk_a, &pk_b, &n, &r);
        assert_eq!(hex::encode(c.0), "45e4b4bd76625cebbb0f7f4fad6fdb9f");
        // determinism
        assert_eq!(f1_commit(&pk_a, &pk_b, &n, &r), c);
    }

    #[test]
    fn f1_changes_on_any_single_bit_flip_of_r() {
        let pk_a = pattern_point(1);
        let pk_b = pattern_point(65);
        let n = Nonce([7u8; 16]);
        let r = RandomizerR([42u8; 16]);
        let base = f1_commit(&pk_a, &pk_b, &n, &r);
        for bit in 0..128 {
            let mut flipped = r;
            flipped.0[bit / 8] ^= 1 << (bit % 8);
            assert_ne!(f1_commit(&pk_a, &pk_b, &n, &flipped), base, "bit {bit}");
        }
    }

    #[test]
    fn g_zero_inputs_golden_value() {
        let zero = PublicPoint::from_bytes([0u8; 64]);
        let v = g_verify_value(&zero, &zero, &Nonce::ZERO, &Nonce::ZERO);
        assert_eq!(v, 255_956);
    }

    #[test]
    fn g_stays_in_six_digit_range() {
        let mut r = rng(5);
        for _ in 0..200 {
            let pa = {
                let mut b = [0u8; 64];
                r.fill_bytes(&mut b);
                PublicPoint::from_bytes(b)
            };
            let pb = {
                let mut b = [0u8; 64];
                r.fill_bytes(&mut b);
                PublicPoint::from_bytes(b)
            };
            let v = g_verify_value(&pa, &pb, &Nonce::random(&mut r), &Nonce::random(&mut r));
            assert!(v < 1_000_000);
        }
    }

    #[test]
    fn f2_matches_frozen_oracle_value() {
        let dh = DhKey {
            bytes: core::array::from_fn(|i| 64 + i as u8),
        };
        let n_a = Nonce(core::array::from_fn(|i| i as u8));
        let n_b = Nonce(core::array::from_fn(|i| 16 + i as u8));
        let addr_a = Address::from_bytes([0x0A, 0x1B, 0x2C, 0x3D, 0x4E, 0x5F]);
        let addr_b = Address::from_bytes([0xA0, 0xB1, 0xC2, 0xD3, 0xE4, 0xF5]);
        let lk = f2_link_key(&dh, &n_a, &n_b, addr_a, addr_b);
        assert_eq!(hex::encode(lk.0), "dcaefda9f5ea7dc59ff91d31f083e340");

        let other = DhKey { bytes: [9u8; 32] };
        assert_ne!(f2_link_key(&other, &n_a, &n_b, addr_a, addr_b), lk);
    }

    #[test]
    fn f3_matches_frozen_oracle_value() {
        let dh = DhKey {
            bytes: core::array::from_fn(|i| 64 + i as u8),
        };
        let n_a = Nonce(core::array::from_fn(|i| i as u8));
        let n_b = Nonce(core::array::from_fn(|i| 16 + i as u8));
        let r = RandomizerR(core::array::from_fn(|i| 16 + i as u8));
        let addr_a = Address::from_bytes([0x0A, 0x1B, 0x2C, 0x3D, 0x4E, 0x5F]);
        let addr_b = Address::from_bytes([0xA0, 0xB1, 0xC2, 0xD3, 0xE4, 0xF5]);
        let chk = f3_check_value(&dh, &n_a, &n_b, &r, 1, addr_a, addr_b);
        assert_eq!(hex::encode(chk), "4dfbe3180a7375b25d9d863cffb650e5");

        let substituted = DhKey { bytes: [3u8; 32] };
        assert_ne!(
            f3_check_value(&substituted, &n_a, &n_b, &r, 1, addr_a, addr_b),
            chk
        );
    }

    #[test]
    fn passkey_randomizer_is_zero_padded() {
        let r = RandomizerR::from_passkey(123_456);
        assert_eq!(&r.0[..12], &[0u8; 12]);
        assert_eq!(u32::from_be_bytes(r.0[12..].try_into().unwrap()), 123_456);
    }

    #[test]
    fn seal_roundtrip_and_authentication() {
        let key = LinkKey([5u8; 16]);
        let packet = seal(&key, 3, b"hello world");
        assert_eq!(unseal(&key, &packet).unwrap(), b"hello world");

        let wrong = LinkKey([6u8; 16]);
        assert_eq!(unseal(&wrong, &packet), Err(CryptoError::UnsealFailure));

        let mut tampered = packet.clone();
        tampered.ciphertext[0] ^= 0xFF;
        assert_eq!(unseal(&key, &tampered), Err(CryptoError::UnsealFailure));

        let decoded = SealedPacket::from_bytes(&packet.to_bytes()).unwrap();
        assert_eq!(decoded, packet);
    }
}
