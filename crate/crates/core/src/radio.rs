//! Discrete-time frequency-hopping radio medium.
//!
//! Time advances in lock-step slots (nominally 625 µs each). Every radio
//! listens either on the channel selected by a hop sequence or in scan
//! mode (all channels, modelling page scan). One frame per (channel,
//! slot) is deliverable; two or more frames on the same channel in the
//! same slot destroy each other. Noise frames are never delivered — they
//! exist purely to destroy. Taps observe every frame, including destroyed
//! ones.
//!
//! The hop kernel is a keyed pseudo-random function of (seed, slot)
//! reduced mod 79; it reproduces hop-following behaviour, not the real
//! Bluetooth hop-selection kernel.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::pairing::message::PairingMessage;
use crate::{mix64, Address};

/// Number of radio channels in the hopping band.
pub const CHANNEL_COUNT: u8 = 79;

/// Abstract 625 µs slot index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TimeSlot(pub u64);

impl TimeSlot {
    pub fn next(self) -> TimeSlot {
        TimeSlot(self.0 + 1)
    }
}

/// Deterministic channel-hopping sequence, keyed by a 64-bit seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopSequence {
    seed: u64,
}

impl HopSequence {
    pub fn new(seed: u64) -> Self {
        HopSequence { seed }
    }

    /// Sequence used by a piconet whose master has the given address and
    /// started the connection at `clock`. Re-connections at different
    /// clock values get fresh sequences.
    pub fn from_master(master: Address, clock: u64) -> Self {
        HopSequence {
            seed: mix64(master.raw() ^ mix64(clock)),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Channel for a slot, in [0, 78].
    pub fn channel(&self, slot: TimeSlot) -> u8 {
        hop_channel(self, slot)
    }
}

/// Keyed pseudo-random hop: deterministic in (seed, slot), full-range
/// over long runs.
pub fn hop_channel(seq: &HopSequence, slot: TimeSlot) -> u8 {
    (mix64(seq.seed ^ mix64(slot.0)) % u64::from(CHANNEL_COUNT)) as u8
}

/// What a frame carries. Poll and Null mirror the master/slave keepalive
/// packets: a slave may transmit only in the slot after it was addressed,
/// so an idle master polls and an idle slave answers with Null.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FramePayload {
    Pairing(PairingMessage),
    /// Sealed application bytes (encrypted link traffic).
    Sealed(Vec<u8>),
    Poll,
    Null,
    Noise,
}

impl FramePayload {
    pub fn tag(&self) -> &'static str {
        match self {
            FramePayload::Pairing(msg) => msg.tag_name(),
            FramePayload::Sealed(_) => "sealed",
            FramePayload::Poll => "poll",
            FramePayload::Null => "null",
            FramePayload::Noise => "noise",
        }
    }
}

/// One radio transmission. `claimed_sender` is what the frame asserts and
/// is spoofable; `sender` is ground truth used for bookkeeping only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadioFrame {
    pub sender: Address,
    pub claimed_sender: Address,
    pub slot: TimeSlot,
    pub channel: u8,
    pub payload: FramePayload,
    pub is_noise: bool,
}

/// How an attached radio selects its receive channel each slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListenMode {
    /// Follow a hop sequence (connected to a piconet).
    Sequence(HopSequence),
    /// Page scan: hears any channel (synchronizing to a new master).
    Scan,
    /// Radio off.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DeliveryOutcome {
    Delivered,
    Collided,
    Jammed,
}

impl fmt::Display for DeliveryOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeliveryOutcome::Delivered => write!(f, "DELIVERED"),
            DeliveryOutcome::Collided => write!(f, "COLLIDED"),
            DeliveryOutcome::Jammed => write!(f, "JAMMED"),
        }
    }
}

/// Per-frame delivery record; one line of the delivery-log export.
#[derive(Debug, Clone, Serialize)]
pub struct DeliveryEvent {
    pub slot: u64,
    pub channel: u8,
    pub sender: Address,
    pub claimed_sender: Address,
    pub outcome: DeliveryOutcome,
    pub payload_tag: &'static str,
    pub recipients: Vec<Address>,
}

impl DeliveryEvent {
    /// Canonical export line: slot, channel, sender, claimed_sender,
    /// outcome, payload tag.
    pub fn export_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.slot, self.channel, self.sender, self.claimed_sender, self.outcome,
            self.payload_tag
        )
    }
}

/// Result of resolving one slot: the delivery events for protocol frames
/// plus the raw tap view (every frame, destroyed or not).
#[derive(Debug, Clone)]
pub struct SlotResolution {
    pub slot: TimeSlot,
    pub events: Vec<DeliveryEvent>,
    /// Delivered frames per recipient, in deterministic order.
    pub delivered: Vec<(Address, RadioFrame)>,
    /// Everything transmitted this slot, visible to taps.
    pub tap_view: Vec<RadioFrame>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RadioError {
    #[error("frame scheduled for slot {frame} but current slot is {current}")]
    WrongSlot { frame: u64, current: u64 },
}

/// The shared radio medium. Multiple logical piconets (distinct hop
/// sequences) coexist in one `Piconet` world; they interact only through
/// channel collisions.
#[derive(Debug, Default)]
pub struct Piconet {
    slot: u64,
    members: BTreeMap<Address, ListenMode>,
    pending: Vec<RadioFrame>,
}

impl Piconet {
    pub fn new() -> Self {
        Piconet::default()
    }

    pub fn current_slot(&self) -> TimeSlot {
        TimeSlot(self.slot)
    }

    pub fn attach(&mut self, addr: Address, mode: ListenMode) {
        self.members.insert(addr, mode);
    }

    pub fn set_mode(&mut self, addr: Address, mode: ListenMode) {
        self.members.insert(addr, mode);
    }

    /// Queues a frame for delivery resolution at the current slot.
    pub fn transmit(&mut self, frame: RadioFrame) -> Result<(), RadioError> {
        if frame.slot.0 != self.slot {
            return Err(RadioError::WrongSlot {
                frame: frame.slot.0,
                current: self.slot,
            });
        }
        self.pending.push(frame);
        Ok(())
    }

    fn listens_on(&self, addr: Address, channel: u8) -> bool {
        match self.members.get(&addr) {
            Some(ListenMode::Sequence(seq)) => seq.channel(TimeSlot(self.slot)) == channel,
            Some(ListenMode::Scan) => true,
            Some(ListenMode::Off) | None => false,
        }
    }

    /// Resolves all transmissions queued for the current slot and advances
    /// the slot clock. Deterministic: event order is a fixed function of
    /// (channel, sender address).
    pub fn resolve_slot(&mut self) -> SlotResolution {
        let slot = TimeSlot(self.slot);
        let mut frames = std::mem::take(&mut self.pending);
        frames.sort_by_key(|f| (f.channel, f.sender));

        let mut per_channel: BTreeMap<u8, Vec<&RadioFrame>> = BTreeMap::new();
        for frame in &frames {
            per_channel.entry(frame.channel).or_default().push(frame);
        }

        let mut events = Vec::new();
        let mut delivered = Vec::new();
        for (&channel, group) in &per_channel {
            let noise_present = group.iter().any(|f| f.is_noise);
            let destroyed = group.len() > 1;
            for frame in group {
                if frame.is_noise {
                    continue;
                }
                let outcome = if !destroyed {
                    DeliveryOutcome::Delivered
                } else if noise_present {
                    DeliveryOutcome::Jammed
                } else {
                    DeliveryOutcome::Collided
                };
                let mut recipients = Vec::new();
                if outcome == DeliveryOutcome::Delivered {
                    for (&addr, _) in &self.members {
                        if addr != frame.sender && self.listens_on(addr, channel) {
                            recipients.push(addr);
                            delivered.push((addr, (*frame).clone()));
                        }
                    }
                }
                events.push(DeliveryEvent {
                    slot: slot.0,
                    channel,
                    sender: frame.sender,
                    claimed_sender: frame.claimed_sender,
                    outcome,
                    payload_tag: frame.payload.tag(),
                    recipients,
                });
            }
        }

        self.slot += 1;
        SlotResolution {
            slot,
            events,
            delivered,
            tap_view: frames,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(n: u64) -> Address {
        Address::new(n)
    }

    fn data_frame(sender: Address, slot: TimeSlot, channel: u8) -> RadioFrame {
        RadioFrame {
            sender,
            claimed_sender: sender,
            slot,
            channel,
            payload: FramePayload::Null,
            is_noise: false,
        }
    }

    fn noise_frame(sender: Address, slot: TimeSlot, channel: u8) -> RadioFrame {
        RadioFrame {
            sender,
            claimed_sender: sender,
            slot,
            channel,
            payload: FramePayload::Noise,
            is_noise: true,
        }
    }

    #[test]
    fn hop_is_deterministic() {
        let seq = HopSequence::new(42);
        assert_eq!(seq.channel(TimeSlot(17)), seq.channel(TimeSlot(17)));
    }

    #[test]
    fn hop_covers_all_channels() {
        let seq = HopSequence::new(3);
        let mut seen = [false; CHANNEL_COUNT as usize];
        for t in 0..100_000u64 {
            seen[seq.channel(TimeSlot(t)) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn distinct_seeds_diverge() {
        let a = HopSequence::new(1);
        let b = HopSequence::new(2);
        let differing = (0..10_000u64)
            .filter(|&t| a.channel(TimeSlot(t)) != b.channel(TimeSlot(t)))
            .count();
        assert!(differing > 9_000, "only {differing} of 10000 slots differ");
    }

    #[test]
    fn lone_frame_is_delivered_to_listener() {
        let mut net = Piconet::new();
        let seq = HopSequence::new(9);
        net.attach(addr(1), ListenMode::Sequence(seq));
        net.attach(addr(2), ListenMode::Sequence(seq));
        let ch = seq.channel(TimeSlot(0));
        net.transmit(data_frame(addr(1), TimeSlot(0), ch)).unwrap();
        let res = net.resolve_slot();
        assert_eq!(res.events.len(), 1);
        assert_eq!(res.events[0].outcome, DeliveryOutcome::Delivered);
        assert_eq!(res.events[0].recipients, vec![addr(2)]);
        assert_eq!(res.delivered.len(), 1);
    }

    #[test]
    fn wrong_slot_is_rejected() {
        let mut net = Piconet::new();
        let err = net.transmit(data_frame(addr(1), TimeSlot(5), 0)).unwrap_err();
        assert_eq!(
            err,
            RadioError::WrongSlot {
                frame: 5,
                current: 0
            }
        );
    }

    #[test]
    fn two_frames_on_same_channel_collide() {
        let mut net = Piconet::new();
        net.attach(addr(3), ListenMode::Scan);
        net.transmit(data_frame(addr(1), TimeSlot(0), 7)).unwrap();
        net.transmit(data_frame(addr(2), TimeSlot(0), 7)).unwrap();
        let res = net.resolve_slot();
        assert_eq!(res.events.len(), 2);
        assert!(res
            .events
            .iter()
            .all(|e| e.outcome == DeliveryOutcome::Collided && e.recipients.is_empty()));
        assert!(res.delivered.is_empty());
    }

    #[test]
    fn noise_jams_but_is_never_delivered() {
        let mut net = Piconet::new();
        let seq = HopSequence::new(11);
        net.attach(addr(1), ListenMode::Sequence(seq));
        net.attach(addr(2), ListenMode::Sequence(seq));
        let ch = seq.channel(TimeSlot(0));
        net.transmit(data_frame(addr(1), TimeSlot(0), ch)).unwrap();
        net.transmit(noise_frame(addr(9), TimeSlot(0), ch)).unwrap();
        let res = net.resolve_slot();
        // the victim frame is jammed; the noise frame produces no event
        assert_eq!(res.events.len(), 1);
        assert_eq!(res.events[0].outcome, DeliveryOutcome::Jammed);
        assert!(res.delivered.is_empty());
        // taps still see both frames
        assert_eq!(res.tap_view.len(), 2);
    }

    #[test]
    fn lone_noise_destroys_nothing_and_logs_nothing() {
        let mut net = Piconet::new();
        net.attach(addr(2), ListenMode::Scan);
        net.transmit(noise_frame(addr(9), TimeSlot(0), 3)).unwrap();
        let res = net.resolve_slot();
        assert!(res.events.is_empty());
        assert!(res.delivered.is_empty());
        assert_eq!(res.tap_view.len(), 1);
    }

    #[test]
    fn matched_seed_jamming_blocks_everything() {
        let victim_seq = HopSequence::new(77);
        let mut net = Piconet::new();
        net.attach(addr(1), ListenMode::Sequence(victim_seq));
        net.attach(addr(2), ListenMode::Sequence(victim_seq));
        let mut delivered = 0;
        for t in 0..10_000u64 {
            let ch = victim_seq.channel(TimeSlot(t));
            net.transmit(data_frame(addr(1), TimeSlot(t), ch)).unwrap();
            net.transmit(noise_frame(addr(9), TimeSlot(t), ch)).unwrap();
            delivered += net.resolve_slot().delivered.len();
        }
        assert_eq!(delivered, 0);
    }

    #[test]
    fn honest_traffic_has_no_spurious_collisions() {
        let seq = HopSequence::new(123);
        let mut net = Piconet::new();
        net.attach(addr(1), ListenMode::Sequence(seq));
        net.attach(addr(2), ListenMode::Sequence(seq));
        let mut delivered = 0;
        for t in 0..10_000u64 {
            let sender = if t % 2 == 0 { addr(1) } else { addr(2) };
            let ch = seq.channel(TimeSlot(t));
            net.transmit(data_frame(sender, TimeSlot(t), ch)).unwrap();
            delivered += net.resolve_slot().delivered.len();
        }
        assert_eq!(delivered, 10_000);
    }

    #[test]
    fn export_line_format() {
        let event = DeliveryEvent {
            slot: 12,
            channel: 43,
            sender: addr(0x0000_0000_0001),
            claimed_sender: addr(0x0000_0000_0002),
            outcome: DeliveryOutcome::Jammed,
            payload_tag: "public_key",
            recipients: vec![],
        };
        assert_eq!(
            event.export_line(),
            "12,43,00:00:00:00:00:01,00:00:00:00:00:02,JAMMED,public_key"
        );
    }
}
