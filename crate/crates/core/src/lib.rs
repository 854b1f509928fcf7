//! Deterministic simulator of Bluetooth Secure Simple Pairing (SSP).
//!
//! The crate models the pieces of the BR/EDR pairing story that matter for
//! man-in-the-middle analysis:
//!
//! * [`crypto`] — ECDH key agreement on P-256, commitment values, the
//!   six-digit comparison value, link-key derivation and check values.
//! * [`pairing`] — the per-device SSP state machine covering all four
//!   association models (Numeric Comparison, Just Works, Passkey Entry,
//!   Out of Band).
//! * [`radio`] — a lock-step, slot-clocked 79-channel frequency-hopping
//!   medium with collision/jamming semantics and eavesdropping taps.
//! * [`oob`] — the out-of-band side channel (an abstracted NFC touch),
//!   including a frequency-varying schedule and configurable attacker
//!   access for assumption testing.
//! * [`attacker`] — an active adversary that jams, impersonates both
//!   victims, downgrades IO capabilities, and relays sealed traffic.
//! * [`scenario`] — declarative experiment descriptions, seeded execution,
//!   outcome classification, and the attack-feasibility matrix.
//!
//! Everything is driven from explicit 64-bit seeds: the same scenario and
//! seed always reproduce the same transcript, byte for byte.

pub mod attacker;
pub mod crypto;
pub mod oob;
pub mod pairing;
pub mod radio;
pub mod scenario;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The deterministic RNG used throughout the simulator. Every stream is
/// derived from an explicit 64-bit seed.
pub type SimRng = rand_chacha::ChaCha12Rng;

/// 48-bit Bluetooth device address (BD_ADDR).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Address(u64);

impl Address {
    /// Builds an address from a raw integer; the value is masked to 48 bits.
    pub const fn new(raw: u64) -> Self {
        Address(raw & 0xFFFF_FFFF_FFFF)
    }

    pub const fn raw(self) -> u64 {
        self.0
    }

    /// Big-endian 6-byte encoding used in hash inputs and wire payloads.
    pub fn to_bytes(self) -> [u8; 6] {
        let b = self.0.to_be_bytes();
        [b[2], b[3], b[4], b[5], b[6], b[7]]
    }

    pub fn from_bytes(bytes: [u8; 6]) -> Self {
        let mut raw = 0u64;
        for b in bytes {
            raw = (raw << 8) | u64::from(b);
        }
        Address(raw)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.to_bytes();
        write!(
            f,
            "{:02X}:{:02X}:{:02X}:{:02X}:{:02X}:{:02X}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid address literal {0:?}, expected AA:BB:CC:DD:EE:FF")]
pub struct AddressParseError(String);

impl FromStr for Address {
    type Err = AddressParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 6 {
            return Err(AddressParseError(s.to_string()));
        }
        let mut bytes = [0u8; 6];
        for (dst, part) in bytes.iter_mut().zip(&parts) {
            *dst = u8::from_str_radix(part, 16).map_err(|_| AddressParseError(s.to_string()))?;
        }
        Ok(Address::from_bytes(bytes))
    }
}

impl TryFrom<String> for Address {
    type Error = AddressParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Address> for String {
    fn from(addr: Address) -> String {
        addr.to_string()
    }
}

/// Splitmix64 finalizer; the workhorse for deriving sub-seeds and keyed
/// pseudo-random values from scenario seeds.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
