//! The out-of-band side channel — an abstracted NFC touch.
//!
//! The exchange is an atomic, loss-free transaction outside the radio
//! slot clock: each device hands the other (address, r, C) where C binds
//! its in-band public key. By default the channel is trusted (the OOB
//! security assumption); attacker read/modify access is an explicit
//! experiment knob, and even then the attacker only reaches payloads on
//! frequencies it knows. Frequency ids are abstract 16-bit labels; a
//! varying schedule models an OOB bearer that changes frequency on every
//! exchange.

use std::collections::BTreeSet;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::crypto::{f1_commit, Commitment, Nonce, PublicPoint, RandomizerR};
use crate::{mix64, Address};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OobError {
    #[error("device {0} has no out-of-band transport")]
    OobUnavailable(Address),
}

/// What one device hands the other over the OOB channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OobPayload {
    pub sender_address: Address,
    pub r: RandomizerR,
    pub c: Commitment,
    pub freq_id: u16,
    /// Taint marker: true once an attacker has observed or authored this
    /// payload. Not part of the wire encoding.
    pub seen_by_attacker: bool,
}

impl OobPayload {
    /// Wire encoding: 6-byte address || 16-byte r || 16-byte c ||
    /// 2-byte freq_id, big-endian.
    pub fn to_bytes(&self) -> [u8; 40] {
        let mut out = [0u8; 40];
        out[..6].copy_from_slice(&self.sender_address.to_bytes());
        out[6..22].copy_from_slice(&self.r.0);
        out[22..38].copy_from_slice(&self.c.0);
        out[38..].copy_from_slice(&self.freq_id.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8; 40]) -> Self {
        OobPayload {
            sender_address: Address::from_bytes(bytes[..6].try_into().unwrap()),
            r: RandomizerR(bytes[6..22].try_into().unwrap()),
            c: Commitment(bytes[22..38].try_into().unwrap()),
            freq_id: u16::from_be_bytes(bytes[38..].try_into().unwrap()),
            seen_by_attacker: false,
        }
    }
}

/// Frequency selection for the OOB bearer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum FrequencySchedule {
    Fixed { freq_id: u16 },
    Varying { seed: u64 },
}

impl Default for FrequencySchedule {
    fn default() -> Self {
        FrequencySchedule::Fixed { freq_id: 0 }
    }
}

/// Frequency id for the exchange with the given session counter. Fixed
/// mode returns the constant; Varying mode is a 16-bit PRF of
/// (seed, counter).
pub fn next_oob_frequency(schedule: &FrequencySchedule, counter: u32) -> u16 {
    match schedule {
        FrequencySchedule::Fixed { freq_id } => *freq_id,
        FrequencySchedule::Varying { seed } => {
            (mix64(seed ^ 0x6F6F // "oo"
                ^ (u64::from(counter) << 16)) & 0xFFFF) as u16
        }
    }
}

/// Channel configuration; the defaults encode the OOB trust assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OobChannelConfig {
    pub attacker_can_read: bool,
    pub attacker_can_modify: bool,
    pub frequency_schedule: FrequencySchedule,
}

/// True when a read-capable attacker is listening on the session's OOB
/// frequency. Frequency variation is what raises this bar.
pub fn attacker_oob_intercept_possible(
    cfg: &OobChannelConfig,
    counter: u32,
    attacker_known_freqs: &BTreeSet<u16>,
) -> bool {
    cfg.attacker_can_read
        && attacker_known_freqs.contains(&next_oob_frequency(&cfg.frequency_schedule, counter))
}

/// One side of the exchange: its identity plus the (r, C) pair bound to
/// its in-band public key.
#[derive(Debug, Clone)]
pub struct OobEndpoint {
    pub address: Address,
    pub oob_available: bool,
    pub r: RandomizerR,
    pub c: Commitment,
}

impl OobEndpoint {
    /// Draws a fresh randomizer and commits to the device's in-band
    /// public key: C = f1(PK, PK, 0, r).
    pub fn prepare(
        address: Address,
        oob_available: bool,
        public: &PublicPoint,
        rng: &mut impl RngCore,
    ) -> Self {
        let r = RandomizerR::random(rng);
        let c = f1_commit(public, public, &Nonce::ZERO, &r);
        OobEndpoint {
            address,
            oob_available,
            r,
            c,
        }
    }
}

/// A forged (r, C) pair the attacker substitutes for one direction,
/// binding the attacker's own public key instead of the victim's.
#[derive(Debug, Clone)]
pub struct OobForgery {
    pub r: RandomizerR,
    pub c: Commitment,
}

impl OobForgery {
    pub fn binding(public: &PublicPoint, rng: &mut impl RngCore) -> Self {
        let r = RandomizerR::random(rng);
        let c = f1_commit(public, public, &Nonce::ZERO, &r);
        OobForgery { r, c }
    }
}

/// Attacker access to one exchange. Read and modify only engage when the
/// exchange happens on a frequency the attacker knows.
#[derive(Debug, Clone, Default)]
pub struct OobInterceptor {
    pub can_read: bool,
    pub can_modify: bool,
    pub known_freqs: BTreeSet<u16>,
    /// Replacement for the payload delivered to device A.
    pub forge_toward_a: Option<OobForgery>,
    /// Replacement for the payload delivered to device B.
    pub forge_toward_b: Option<OobForgery>,
}

/// Outcome of one OOB exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OobExchange {
    /// Payload delivered to device A (authored by B, unless forged).
    pub payload_for_a: OobPayload,
    /// Payload delivered to device B (authored by A, unless forged).
    pub payload_for_b: OobPayload,
    /// Copies of the genuine payloads (from A, from B) if the attacker
    /// could read.
    pub attacker_view: Option<(OobPayload, OobPayload)>,
    pub freq_id: u16,
    pub modified: bool,
}

/// Performs the touch: swaps (address, r, C) payloads between the two
/// endpoints, applying attacker access where configuration and frequency
/// knowledge allow it.
pub fn exchange_oob(
    a: &OobEndpoint,
    b: &OobEndpoint,
    cfg: &OobChannelConfig,
    counter: u32,
    interceptor: Option<&OobInterceptor>,
) -> Result<OobExchange, OobError> {
    if !a.oob_available {
        return Err(OobError::OobUnavailable(a.address));
    }
    if !b.oob_available {
        return Err(OobError::OobUnavailable(b.address));
    }
    let freq_id = next_oob_frequency(&cfg.frequency_schedule, counter);

    let genuine_from_a = OobPayload {
        sender_address: a.address,
        r: a.r,
        c: a.c,
        freq_id,
        seen_by_attacker: false,
    };
    let genuine_from_b = OobPayload {
        sender_address: b.address,
        r: b.r,
        c: b.c,
        freq_id,
        seen_by_attacker: false,
    };

    let mut payload_for_a = genuine_from_b.clone();
    let mut payload_for_b = genuine_from_a.clone();
    let mut attacker_view = None;
    let mut modified = false;

    if let Some(atk) = interceptor {
        let on_known_freq = atk.known_freqs.contains(&freq_id);
        if cfg.attacker_can_read && atk.can_read && on_known_freq {
            let mut from_a = genuine_from_a.clone();
            let mut from_b = genuine_from_b.clone();
            from_a.seen_by_attacker = true;
            from_b.seen_by_attacker = true;
            attacker_view = Some((from_a, from_b));
        }
        if cfg.attacker_can_modify && atk.can_modify && on_known_freq {
            if let Some(forgery) = &atk.forge_toward_a {
                payload_for_a = OobPayload {
                    sender_address: b.address,
                    r: forgery.r,
                    c: forgery.c,
                    freq_id,
                    seen_by_attacker: true,
                };
                modified = true;
            }
            if let Some(forgery) = &atk.forge_toward_b {
                payload_for_b = OobPayload {
                    sender_address: a.address,
                    r: forgery.r,
                    c: forgery.c,
                    freq_id,
                    seen_by_attacker: true,
                };
                modified = true;
            }
        }
    }

    Ok(OobExchange {
        payload_for_a,
        payload_for_b,
        attacker_view,
        freq_id,
        modified,
    })
}
