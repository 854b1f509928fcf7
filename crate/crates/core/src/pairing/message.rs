//! In-band pairing message wire format.
//!
//! Layout: 1 tag byte, 2-byte big-endian length, payload. Curve points
//! travel uncompressed as x || y (64 bytes); all multi-byte integers are
//! big-endian. Transcripts and golden files use this encoding.

use crate::crypto::{Commitment, Nonce, PublicPoint};
use crate::pairing::{AbortReason, IoCapability};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairingMessage {
    IoCapabilityExchange {
        io: IoCapability,
        oob_available: bool,
    },
    PublicKeyX(PublicPoint),
    CommitmentMsg(Commitment),
    NonceReveal(Nonce),
    DhKeyCheck([u8; 16]),
    PairComplete,
    Abort(AbortReason),
}

const TAG_IO_CAPS: u8 = 0x01;
const TAG_PUBLIC_KEY: u8 = 0x02;
const TAG_COMMITMENT: u8 = 0x03;
const TAG_NONCE: u8 = 0x04;
const TAG_DHKEY_CHECK: u8 = 0x05;
const TAG_PAIR_COMPLETE: u8 = 0x06;
const TAG_ABORT: u8 = 0x07;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("message truncated")]
    Truncated,
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("payload length {got} invalid for tag {tag:#04x}")]
    BadLength { tag: u8, got: usize },
    #[error("invalid field value in payload")]
    BadField,
}

impl PairingMessage {
    pub fn tag(&self) -> u8 {
        match self {
            PairingMessage::IoCapabilityExchange { .. } => TAG_IO_CAPS,
            PairingMessage::PublicKeyX(_) => TAG_PUBLIC_KEY,
            PairingMessage::CommitmentMsg(_) => TAG_COMMITMENT,
            PairingMessage::NonceReveal(_) => TAG_NONCE,
            PairingMessage::DhKeyCheck(_) => TAG_DHKEY_CHECK,
            PairingMessage::PairComplete => TAG_PAIR_COMPLETE,
            PairingMessage::Abort(_) => TAG_ABORT,
        }
    }

    pub fn tag_name(&self) -> &'static str {
        match self {
            PairingMessage::IoCapabilityExchange { .. } => "io_capability",
            PairingMessage::PublicKeyX(_) => "public_key",
            PairingMessage::CommitmentMsg(_) => "commitment",
            PairingMessage::NonceReveal(_) => "nonce",
            PairingMessage::DhKeyCheck(_) => "dhkey_check",
            PairingMessage::PairComplete => "pair_complete",
            PairingMessage::Abort(_) => "abort",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload: Vec<u8> = match self {
            PairingMessage::IoCapabilityExchange { io, oob_available } => {
                vec![io.as_byte(), u8::from(*oob_available)]
            }
            PairingMessage::PublicKeyX(point) => point.as_bytes().to_vec(),
            PairingMessage::CommitmentMsg(c) => c.0.to_vec(),
            PairingMessage::NonceReveal(n) => n.0.to_vec(),
            PairingMessage::DhKeyCheck(check) => check.to_vec(),
            PairingMessage::PairComplete => Vec::new(),
            PairingMessage::Abort(reason) => vec![reason.wire_code()],
        };
        let mut out = Vec::with_capacity(3 + payload.len());
        out.push(self.tag());
        out.extend_from_slice(&(payload.len() as u16).to_be_bytes());
        out.extend_from_slice(&payload);
        out
    }

    /// Decodes one message from the front of `bytes`; returns the message
    /// and the number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(PairingMessage, usize), WireError> {
        if bytes.len() < 3 {
            return Err(WireError::Truncated);
        }
        let tag = bytes[0];
        let len = u16::from_be_bytes([bytes[1], bytes[2]]) as usize;
        if bytes.len() < 3 + len {
            return Err(WireError::Truncated);
        }
        let payload = &bytes[3..3 + len];
        let expect = |want: usize| -> Result<(), WireError> {
            if len == want {
                Ok(())
            } else {
                Err(WireError::BadLength { tag, got: len })
            }
        };
        let msg = match tag {
            TAG_IO_CAPS => {
                expect(2)?;
                let io = IoCapability::from_byte(payload[0]).ok_or(WireError::BadField)?;
                let oob_available = match payload[1] {
                    0 => false,
                    1 => true,
                    _ => return Err(WireError::BadField),
                };
                PairingMessage::IoCapabilityExchange { io, oob_available }
            }
            TAG_PUBLIC_KEY => {
                expect(64)?;
                PairingMessage::PublicKeyX(PublicPoint::from_bytes(payload.try_into().unwrap()))
            }
            TAG_COMMITMENT => {
                expect(16)?;
                PairingMessage::CommitmentMsg(Commitment(payload.try_into().unwrap()))
            }
            TAG_NONCE => {
                expect(16)?;
                PairingMessage::NonceReveal(Nonce(payload.try_into().unwrap()))
            }
            TAG_DHKEY_CHECK => {
                expect(16)?;
                PairingMessage::DhKeyCheck(payload.try_into().unwrap())
            }
            TAG_PAIR_COMPLETE => {
                expect(0)?;
                PairingMessage::PairComplete
            }
            TAG_ABORT => {
                expect(1)?;
                PairingMessage::Abort(AbortReason::from_wire_code(payload[0]))
            }
            other => return Err(WireError::UnknownTag(other)),
        };
        Ok((msg, 3 + len))
    }
}
