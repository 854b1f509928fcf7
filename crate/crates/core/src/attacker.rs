//! The man-in-the-middle adversary.
//!
//! The attack proceeds in the four classic steps: jam the victims'
//! piconet by hopping along with it and spraying noise into every slot,
//! impersonate each victim toward the other once their direct link dies,
//! intercept everything, and relay sealed traffic between the two inner
//! sessions so the victims observe a working link.
//!
//! The attacker is a full protocol participant. It runs real key pairs
//! and real sessions and succeeds only where the protocol permits: an
//! IO-capability downgrade claim is enough against comparison-based
//! models with careless users, while authentic out-of-band commitments
//! stop it cold unless it can both read and modify the OOB channel.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand_chacha::rand_core::SeedableRng;
use rand_core::RngCore;
use serde::Serialize;

use crate::crypto::{self, KeyPair, LinkKey, RandomizerR, SealedPacket};
use crate::oob::{OobForgery, OobInterceptor, OobPayload};
use crate::pairing::message::PairingMessage;
use crate::pairing::{
    DeviceConfig, IoCapability, PairingSession, Role, SecurityPolicy, SessionEvent, SessionState,
    StepInput, UserDecision, UserPromptRequest,
};
use crate::radio::{FramePayload, HopSequence, Piconet, RadioFrame, SlotResolution, TimeSlot};
use crate::{mix64, Address, SimRng};

/// Consecutive silent slots on the victims' piconet that count as "both
/// victims gave up".
const QUIET_THRESHOLD: u32 = 16;
/// Slots without inner-session progress before the attacker walks away.
const PATIENCE_SLOTS: u64 = 192;
/// Slots the attacker lingers after a completed relay before going quiet.
const LINGER_SLOTS: u64 = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AttackerError {
    #[error("attacker lacks required capability: {0}")]
    CapabilityMissing(&'static str),
    #[error("relay requires both captured link keys")]
    KeysMissing,
    #[error("relay could not unseal victim traffic")]
    UnsealFailure,
}

/// Capability switches for the adversary. The full four-step attack
/// requires jam, impersonate and relay together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackerConfig {
    pub address: Address,
    pub can_jam: bool,
    pub can_impersonate: bool,
    pub can_relay: bool,
    /// IO capability claimed toward both victims; `None` mimics the
    /// impersonated device's own capability.
    pub spoofed_io: Option<IoCapability>,
    pub knows_hop_seed: bool,
    /// Attacker-side OOB access; only effective where the scenario's
    /// channel configuration also grants it.
    pub oob_read: bool,
    pub oob_modify: bool,
    pub known_oob_freqs: BTreeSet<u16>,
    /// When set, relayed plaintext is replaced with these bytes (active
    /// tampering demonstration).
    pub tamper_payload: Option<Vec<u8>>,
}

impl AttackerConfig {
    pub const DEFAULT_ADDRESS: u64 = 0xEE_EE_EE_EE_EE_01;

    /// Jam + impersonate + relay with hop-seed knowledge.
    pub fn full() -> Self {
        AttackerConfig {
            address: Address::new(Self::DEFAULT_ADDRESS),
            can_jam: true,
            can_impersonate: true,
            can_relay: true,
            spoofed_io: None,
            knows_hop_seed: true,
            oob_read: false,
            oob_modify: false,
            known_oob_freqs: [0u16].into_iter().collect(),
            tamper_payload: None,
        }
    }

    /// Full attack plus the NoInputNoOutput downgrade claim.
    pub fn downgrade() -> Self {
        AttackerConfig {
            spoofed_io: Some(IoCapability::NoInputNoOutput),
            ..AttackerConfig::full()
        }
    }

    /// Denial-of-service only: jams but never connects.
    pub fn jam_only() -> Self {
        AttackerConfig {
            can_impersonate: false,
            can_relay: false,
            ..AttackerConfig::full()
        }
    }

    pub fn has_full_mitm_chain(&self) -> bool {
        self.can_jam && self.can_impersonate && self.can_relay
    }
}

/// One plaintext the attacker lifted out of relayed traffic.
#[derive(Debug, Clone, Serialize)]
pub struct InterceptRecord {
    pub slot: u64,
    pub from: Address,
    pub to: Address,
    pub plaintext_hex: String,
    pub modified: bool,
}

impl InterceptRecord {
    /// Export line: slot, direction, plaintext-hex, modified flag.
    pub fn export_line(&self) -> String {
        format!(
            "{},{}->{},{},{}",
            self.slot, self.from, self.to, self.plaintext_hex, self.modified
        )
    }
}

/// Events surfaced to the scenario transcript.
#[derive(Debug, Clone, Serialize)]
pub enum AttackerEvent {
    JamStarted,
    JamStopped { noise_slots: u64 },
    ImpersonationStarted { target: Address, claiming: Address },
    InnerSession { target: Address, event: SessionEvent },
    LinkKeyCaptured { victim: Address },
    RelayForwarded { from: Address, to: Address, modified: bool },
    GaveUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AttackPhase {
    Idle,
    Jamming,
    Running,
    Lingering,
    Done,
}

struct InnerLink {
    target: Address,
    claiming: Address,
    keys: KeyPair,
    seq: Option<HopSequence>,
    session: Option<PairingSession>,
    outbox: VecDeque<PairingMessage>,
    relay_outbox: VecDeque<Vec<u8>>,
    /// Genuine OOB payload from the target (read access) presented when
    /// verifying the target's in-band key.
    oob_payload: Option<OobPayload>,
    /// Randomizer behind the forged OOB commitment the target received.
    own_oob_r: Option<RandomizerR>,
    key_captured: bool,
    seal_counter: u64,
    relays_forwarded: u64,
}

impl InnerLink {
    fn link_key(&self) -> Option<LinkKey> {
        self.session.as_ref().and_then(|s| s.link_key())
    }
}

/// Summary of where the attack ended up.
#[derive(Debug, Clone, Serialize)]
pub struct AttackerOutcome {
    pub keys_captured: usize,
    pub relays_to_a: u64,
    pub relays_to_b: u64,
    pub session_a_state: Option<&'static str>,
    pub session_b_state: Option<&'static str>,
}

/// The adversary's radio driver, advanced in lock step with the victims.
pub struct MitmAttacker {
    cfg: AttackerConfig,
    rng: SimRng,
    phase: AttackPhase,
    victim_a: DeviceConfig,
    victim_b: DeviceConfig,
    /// The victims' direct piconet sequence (assumed known).
    victim_seq: HopSequence,
    links: [InnerLink; 2],
    captured: BTreeMap<Address, LinkKey>,
    intercept_log: Vec<InterceptRecord>,
    events: Vec<AttackerEvent>,
    noise_slots: u64,
    quiet_streak: u32,
    last_progress: u64,
    linger_until: u64,
}

impl MitmAttacker {
    /// `victim_seq` is the hop sequence of the victims' own connection
    /// attempt; the attacker is assumed to know it (hop-seed secrecy is
    /// not modelled).
    pub fn new(
        cfg: AttackerConfig,
        victim_a: DeviceConfig,
        victim_b: DeviceConfig,
        victim_seq: HopSequence,
        seed: u64,
    ) -> Self {
        let mut rng = SimRng::seed_from_u64(mix64(seed ^ 0xA77A));
        let keys_toward_a = crypto::generate_keypair(&mut rng);
        let keys_toward_b = crypto::generate_keypair(&mut rng);
        let mk_link = |target: &DeviceConfig, claiming: &DeviceConfig, keys: KeyPair| InnerLink {
            target: target.address,
            claiming: claiming.address,
            keys,
            seq: None,
            session: None,
            outbox: VecDeque::new(),
            relay_outbox: VecDeque::new(),
            oob_payload: None,
            own_oob_r: None,
            key_captured: false,
            seal_counter: 0,
            relays_forwarded: 0,
        };
        MitmAttacker {
            links: [
                mk_link(&victim_a, &victim_b, keys_toward_a),
                mk_link(&victim_b, &victim_a, keys_toward_b),
            ],
            cfg,
            rng,
            phase: AttackPhase::Idle,
            victim_a,
            victim_b,
            victim_seq,
            captured: BTreeMap::new(),
            intercept_log: Vec::new(),
            events: Vec::new(),
            noise_slots: 0,
            quiet_streak: 0,
            last_progress: 0,
            linger_until: 0,
        }
    }

    pub fn address(&self) -> Address {
        self.cfg.address
    }

    pub fn config(&self) -> &AttackerConfig {
        &self.cfg
    }

    /// Builds the interceptor describing this attacker's access to the
    /// victims' OOB exchange. Forgeries bind the attacker's own session
    /// keys; they only take effect where channel configuration and
    /// frequency knowledge allow modification.
    pub fn oob_interceptor(&mut self) -> OobInterceptor {
        let forge_toward_a = OobForgery::binding(&self.links[0].keys.public(), &mut self.rng);
        let forge_toward_b = OobForgery::binding(&self.links[1].keys.public(), &mut self.rng);
        self.links[0].own_oob_r = Some(forge_toward_a.r);
        self.links[1].own_oob_r = Some(forge_toward_b.r);
        OobInterceptor {
            can_read: self.cfg.oob_read,
            can_modify: self.cfg.oob_modify,
            known_freqs: self.cfg.known_oob_freqs.clone(),
            forge_toward_a: Some(forge_toward_a),
            forge_toward_b: Some(forge_toward_b),
        }
    }

    /// Absorbs the result of the victims' OOB exchange: with read access
    /// the genuine payloads let the attacker satisfy each victim's
    /// stage-2 expectations; without a successful forgery its own OOB
    /// randomizers are worthless and dropped.
    pub fn absorb_oob_exchange(&mut self, view: Option<(OobPayload, OobPayload)>, modified: bool) {
        if let Some((from_a, from_b)) = view {
            self.links[0].oob_payload = Some(from_a);
            self.links[1].oob_payload = Some(from_b);
        }
        if !modified {
            self.links[0].own_oob_r = None;
            self.links[1].own_oob_r = None;
        }
    }

    /// Capability gate for the jamming phase.
    pub fn begin_jam(&mut self) -> Result<(), AttackerError> {
        if !self.cfg.can_jam {
            return Err(AttackerError::CapabilityMissing("can_jam"));
        }
        if !self.cfg.knows_hop_seed {
            return Err(AttackerError::CapabilityMissing("knows_hop_seed"));
        }
        self.phase = AttackPhase::Jamming;
        self.events.push(AttackerEvent::JamStarted);
        Ok(())
    }

    /// Unseals a victim's sealed packet with one captured key, records
    /// the plaintext, and reseals it for the other victim. Requires both
    /// link keys — if pairing failed earlier there is nothing to relay
    /// with.
    pub fn relay(
        &mut self,
        slot: u64,
        from: Address,
        packet: &SealedPacket,
    ) -> Result<SealedPacket, AttackerError> {
        if !self.cfg.can_relay {
            return Err(AttackerError::CapabilityMissing("can_relay"));
        }
        if self.captured.len() < 2 {
            return Err(AttackerError::KeysMissing);
        }
        let to = if from == self.victim_a.address {
            self.victim_b.address
        } else {
            self.victim_a.address
        };
        let key_from = *self.captured.get(&from).ok_or(AttackerError::KeysMissing)?;
        let key_to = *self.captured.get(&to).ok_or(AttackerError::KeysMissing)?;
        let plaintext =
            crypto::unseal(&key_from, packet).map_err(|_| AttackerError::UnsealFailure)?;
        let (forwarded, modified) = match &self.cfg.tamper_payload {
            Some(tampered) => (tampered.clone(), true),
            None => (plaintext.clone(), false),
        };
        self.intercept_log.push(InterceptRecord {
            slot,
            from,
            to,
            plaintext_hex: hex::encode(&plaintext),
            modified,
        });
        let out_link = self.link_for_target_mut(to);
        let counter = out_link.seal_counter;
        out_link.seal_counter += 1;
        self.events
            .push(AttackerEvent::RelayForwarded { from, to, modified });
        Ok(crypto::seal(&key_to, counter, &forwarded))
    }

    fn link_for_target_mut(&mut self, target: Address) -> &mut InnerLink {
        if self.links[0].target == target {
            &mut self.links[0]
        } else {
            &mut self.links[1]
        }
    }

    pub fn intercept_log(&self) -> &[InterceptRecord] {
        &self.intercept_log
    }

    pub fn captured_link_keys(&self) -> &BTreeMap<Address, LinkKey> {
        &self.captured
    }

    pub fn take_events(&mut self) -> Vec<AttackerEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn outcome(&self) -> AttackerOutcome {
        AttackerOutcome {
            keys_captured: self.captured.len(),
            relays_to_a: self.links[0].relays_forwarded,
            relays_to_b: self.links[1].relays_forwarded,
            session_a_state: self.links[0].session.as_ref().map(|s| s.state().name()),
            session_b_state: self.links[1].session.as_ref().map(|s| s.state().name()),
        }
    }

    /// True once the attacker will never transmit again.
    pub fn is_quiet(&self) -> bool {
        matches!(self.phase, AttackPhase::Done | AttackPhase::Idle)
    }

    /// Relay verified in both directions.
    pub fn relays_complete(&self) -> bool {
        self.links[0].relays_forwarded > 0 && self.links[1].relays_forwarded > 0
    }

    /// Transmission half of the slot cycle.
    pub fn on_slot_start(&mut self, net: &mut Piconet) {
        let slot = net.current_slot();
        match self.phase {
            AttackPhase::Idle => {
                if self.cfg.can_jam && self.cfg.knows_hop_seed && slot.0 == 0 {
                    self.begin_jam().expect("capabilities checked");
                    self.transmit_noise(net, slot);
                }
            }
            AttackPhase::Jamming => {
                self.transmit_noise(net, slot);
            }
            AttackPhase::Running => {
                self.serve_inner_links(net, slot);
                if slot.0.saturating_sub(self.last_progress) > PATIENCE_SLOTS {
                    self.phase = AttackPhase::Done;
                    self.events.push(AttackerEvent::GaveUp);
                }
            }
            AttackPhase::Lingering => {
                self.serve_inner_links(net, slot);
                if slot.0 >= self.linger_until {
                    self.phase = AttackPhase::Done;
                }
            }
            AttackPhase::Done => {}
        }
    }

    fn transmit_noise(&mut self, net: &mut Piconet, slot: TimeSlot) {
        let frame = RadioFrame {
            sender: self.cfg.address,
            claimed_sender: self.cfg.address,
            slot,
            channel: self.victim_seq.channel(slot),
            payload: FramePayload::Noise,
            is_noise: true,
        };
        net.transmit(frame).expect("current slot");
        self.noise_slots += 1;
    }

    /// Round-robin service of the two inner piconets: the attacker is one
    /// radio, so each even slot carries at most one master frame,
    /// alternating between targets.
    fn serve_inner_links(&mut self, net: &mut Piconet, slot: TimeSlot) {
        if slot.0 % 2 != 0 || !self.cfg.can_impersonate {
            return;
        }
        let idx = usize::from(slot.0 % 4 == 2);
        if self.links[idx].session.is_none() {
            self.open_inner_session(idx, slot);
            self.events.push(AttackerEvent::ImpersonationStarted {
                target: self.links[idx].target,
                claiming: self.links[idx].claiming,
            });
        }
        let link = &mut self.links[idx];
        let seq = match link.seq {
            Some(seq) => seq,
            None => return,
        };
        let session_active = link
            .session
            .as_ref()
            .is_some_and(|s| s.state() != SessionState::Aborted);
        let payload = if let Some(msg) = link.outbox.pop_front() {
            FramePayload::Pairing(msg)
        } else if let Some(bytes) = link.relay_outbox.pop_front() {
            link.relays_forwarded += 1;
            FramePayload::Sealed(bytes)
        } else if session_active {
            FramePayload::Poll
        } else {
            return;
        };
        let frame = RadioFrame {
            sender: self.cfg.address,
            claimed_sender: link.claiming,
            slot,
            channel: seq.channel(slot),
            payload,
            is_noise: false,
        };
        net.transmit(frame).expect("current slot");
    }

    /// Opens the impersonated pairing toward one victim: claimed address
    /// and OOB flag mimic the replaced device, the IO capability is the
    /// downgrade claim when configured, and the key pair is the
    /// attacker's own — it cannot forge the victim's.
    fn open_inner_session(&mut self, idx: usize, slot: TimeSlot) {
        let mimic = if self.links[idx].claiming == self.victim_a.address {
            self.victim_a
        } else {
            self.victim_b
        };
        let spoofed_io = self.cfg.spoofed_io;
        let session_seed = self.rng.next_u64();
        let link = &mut self.links[idx];
        let impersonated = DeviceConfig {
            address: mimic.address,
            io: spoofed_io.unwrap_or(mimic.io),
            oob_available: mimic.oob_available,
            policy: SecurityPolicy::default(),
        };
        let seq = HopSequence::from_master(link.claiming, slot.0);
        let (mut session, outbound) = PairingSession::start(
            impersonated,
            Role::Initiator,
            link.target,
            link.keys.clone(),
            SimRng::seed_from_u64(session_seed),
        );
        if let Some(r) = link.own_oob_r {
            session.set_own_oob_randomizer(r);
        }
        link.seq = Some(seq);
        link.outbox = outbound.into();
        link.session = Some(session);
        self.last_progress = slot.0;
    }

    /// Observation half of the slot cycle: the attacker taps every frame
    /// (including destroyed ones) and processes frames delivered to its
    /// scanning radio.
    pub fn on_slot_end(&mut self, resolution: &SlotResolution, delivered: Vec<RadioFrame>) {
        let slot = resolution.slot.0;
        match self.phase {
            AttackPhase::Jamming => {
                let victim_activity = resolution.tap_view.iter().any(|f| {
                    !f.is_noise
                        && (f.claimed_sender == self.victim_a.address
                            || f.claimed_sender == self.victim_b.address)
                });
                if victim_activity {
                    self.quiet_streak = 0;
                } else {
                    self.quiet_streak += 1;
                    if self.quiet_streak >= QUIET_THRESHOLD {
                        self.events.push(AttackerEvent::JamStopped {
                            noise_slots: self.noise_slots,
                        });
                        self.phase = if self.cfg.can_impersonate {
                            AttackPhase::Running
                        } else {
                            AttackPhase::Done
                        };
                        self.last_progress = slot;
                    }
                }
            }
            AttackPhase::Running | AttackPhase::Lingering => {
                for frame in delivered {
                    self.handle_inner_frame(slot, frame);
                }
                if self.phase == AttackPhase::Running
                    && self.relays_complete()
                    && self.links.iter().all(|l| l.relay_outbox.is_empty())
                {
                    self.phase = AttackPhase::Lingering;
                    self.linger_until = slot + LINGER_SLOTS;
                }
            }
            _ => {}
        }
    }

    fn handle_inner_frame(&mut self, slot: u64, frame: RadioFrame) {
        let idx = if frame.claimed_sender == self.victim_a.address {
            0
        } else if frame.claimed_sender == self.victim_b.address {
            1
        } else {
            return;
        };
        // only frames on the inner piconet's current channel belong to it
        let on_channel = self.links[idx]
            .seq
            .is_some_and(|seq| seq.channel(TimeSlot(slot)) == frame.channel);
        if !on_channel {
            return;
        }
        match frame.payload {
            FramePayload::Pairing(msg) => {
                self.step_inner_session(idx, StepInput::inbound(msg));
                self.last_progress = slot;
            }
            FramePayload::Sealed(bytes) => {
                if let Some(packet) = SealedPacket::from_bytes(&bytes) {
                    let from = self.links[idx].target;
                    if let Ok(resealed) = self.relay(slot, from, &packet) {
                        let other = 1 - idx;
                        self.links[other]
                            .relay_outbox
                            .push_back(resealed.to_bytes());
                    }
                }
                self.last_progress = slot;
            }
            FramePayload::Null => {
                self.last_progress = slot;
            }
            FramePayload::Poll | FramePayload::Noise => {}
        }
    }

    /// Feeds one input into an inner session, auto-answering prompts and
    /// harvesting the link key when the session completes.
    fn step_inner_session(&mut self, idx: usize, input: StepInput) {
        let oob = self.links[idx].oob_payload.clone();
        let input = StepInput { oob, ..input };
        let target = self.links[idx].target;
        let session = match self.links[idx].session.as_mut() {
            Some(s) if s.state() != SessionState::Aborted => s,
            _ => return,
        };
        match session.step(input) {
            Ok(out) => {
                let events = session.take_events();
                for event in events {
                    self.events
                        .push(AttackerEvent::InnerSession { target, event });
                }
                self.links[idx].outbox.extend(out.outbound);
                let mut decisions = Vec::new();
                for prompt in out.prompts {
                    match prompt {
                        // the attacker happily confirms its own sessions
                        UserPromptRequest::CompareValues { .. } => {
                            decisions.push(UserDecision::Confirm(true));
                        }
                        // the victim's display is out of reach; guess
                        UserPromptRequest::EnterPasskey => {
                            decisions
                                .push(UserDecision::PasskeyInput(self.rng.next_u32() % 1_000_000));
                        }
                        UserPromptRequest::DisplayPasskey { .. } => {}
                    }
                }
                for decision in decisions {
                    self.step_inner_session(idx, StepInput::decision(decision));
                }
                self.after_session_progress(idx);
            }
            Err(_) => {
                let session = self.links[idx].session.as_mut().unwrap();
                let reason = session.abort_reason().unwrap();
                for event in session.take_events() {
                    self.events
                        .push(AttackerEvent::InnerSession { target, event });
                }
                self.links[idx]
                    .outbox
                    .push_back(PairingMessage::Abort(reason));
            }
        }
    }

    fn after_session_progress(&mut self, idx: usize) {
        let link = &mut self.links[idx];
        let session = match link.session.as_mut() {
            Some(s) => s,
            None => return,
        };
        if session.state() == SessionState::LinkKeyReady {
            session.enable_encryption().expect("link key ready");
            for event in session.take_events() {
                self.events.push(AttackerEvent::InnerSession {
                    target: link.target,
                    event,
                });
            }
        }
        if !link.key_captured {
            if let Some(key) = link.link_key() {
                link.key_captured = true;
                let victim = link.target;
                self.captured.insert(victim, key);
                self.events.push(AttackerEvent::LinkKeyCaptured { victim });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn victims() -> (DeviceConfig, DeviceConfig) {
        (
            DeviceConfig::new(Address::new(1), IoCapability::DisplayYesNo),
            DeviceConfig::new(Address::new(2), IoCapability::DisplayYesNo),
        )
    }

    fn attacker(cfg: AttackerConfig) -> MitmAttacker {
        let (a, b) = victims();
        MitmAttacker::new(cfg, a, b, HopSequence::new(1), 7)
    }

    #[test]
    fn jam_requires_capability_and_seed_knowledge() {
        let mut no_jam = attacker(AttackerConfig {
            can_jam: false,
            ..AttackerConfig::full()
        });
        assert_eq!(
            no_jam.begin_jam(),
            Err(AttackerError::CapabilityMissing("can_jam"))
        );

        let mut no_seed = attacker(AttackerConfig {
            knows_hop_seed: false,
            ..AttackerConfig::full()
        });
        assert_eq!(
            no_seed.begin_jam(),
            Err(AttackerError::CapabilityMissing("knows_hop_seed"))
        );

        assert!(attacker(AttackerConfig::full()).begin_jam().is_ok());
    }

    #[test]
    fn relay_without_keys_fails() {
        let mut atk = attacker(AttackerConfig::full());
        let key = LinkKey([1u8; 16]);
        let packet = crypto::seal(&key, 0, b"hi");
        assert_eq!(
            atk.relay(0, Address::new(1), &packet),
            Err(AttackerError::KeysMissing)
        );
    }

    #[test]
    fn relay_without_capability_fails() {
        let mut atk = attacker(AttackerConfig {
            can_relay: false,
            ..AttackerConfig::full()
        });
        let key = LinkKey([1u8; 16]);
        let packet = crypto::seal(&key, 0, b"hi");
        assert_eq!(
            atk.relay(0, Address::new(1), &packet),
            Err(AttackerError::CapabilityMissing("can_relay"))
        );
    }

    #[test]
    fn relay_reseals_and_logs_plaintext() {
        let mut atk = attacker(AttackerConfig::full());
        let key_a = LinkKey([1u8; 16]);
        let key_b = LinkKey([2u8; 16]);
        atk.captured.insert(Address::new(1), key_a);
        atk.captured.insert(Address::new(2), key_b);

        let packet = crypto::seal(&key_a, 0, b"hello");
        let forwarded = atk.relay(9, Address::new(1), &packet).unwrap();
        assert_eq!(crypto::unseal(&key_b, &forwarded).unwrap(), b"hello");
        assert_eq!(atk.intercept_log().len(), 1);
        let record = &atk.intercept_log()[0];
        assert_eq!(record.plaintext_hex, hex::encode(b"hello"));
        assert!(!record.modified);
        assert_eq!(
            record.export_line(),
            format!(
                "9,{}->{},{},false",
                Address::new(1),
                Address::new(2),
                hex::encode(b"hello")
            )
        );
    }

    #[test]
    fn relay_with_tampering_substitutes_payload() {
        let mut atk = attacker(AttackerConfig {
            tamper_payload: Some(b"evil".to_vec()),
            ..AttackerConfig::full()
        });
        let key_a = LinkKey([1u8; 16]);
        let key_b = LinkKey([2u8; 16]);
        atk.captured.insert(Address::new(1), key_a);
        atk.captured.insert(Address::new(2), key_b);

        let packet = crypto::seal(&key_a, 0, b"hello");
        let forwarded = atk.relay(0, Address::new(1), &packet).unwrap();
        assert_eq!(crypto::unseal(&key_b, &forwarded).unwrap(), b"evil");
        assert!(atk.intercept_log()[0].modified);
        // the original plaintext is what was intercepted
        assert_eq!(atk.intercept_log()[0].plaintext_hex, hex::encode(b"hello"));
    }

    #[test]
    fn relay_rejects_garbage_ciphertext() {
        let mut atk = attacker(AttackerConfig::full());
        atk.captured.insert(Address::new(1), LinkKey([1u8; 16]));
        atk.captured.insert(Address::new(2), LinkKey([2u8; 16]));
        // sealed under an unrelated key
        let packet = crypto::seal(&LinkKey([9u8; 16]), 0, b"hello");
        assert_eq!(
            atk.relay(0, Address::new(1), &packet),
            Err(AttackerError::UnsealFailure)
        );
    }
}
