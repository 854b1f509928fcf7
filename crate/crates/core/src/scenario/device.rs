//! Radio-facing driver for one simulated device.
//!
//! Bridges the pure pairing state machine onto the slot-clocked medium:
//! masters transmit on even slots and poll when idle, slaves answer only
//! in the slot after they were addressed, and a link that stays silent
//! past the timeout is treated as lost. A device whose link died goes
//! back to scanning and accepts the next inbound connection claiming its
//! expected peer — which is exactly the opening an impersonator needs.

use std::collections::VecDeque;

use rand_chacha::rand_core::SeedableRng;
use rand_core::RngCore;
use serde::Serialize;

use crate::crypto::{self, KeyPair, LinkKey, SealedPacket};
use crate::oob::OobPayload;
use crate::pairing::message::PairingMessage;
use crate::pairing::{
    AbortReason, AssociationModel, DeviceConfig, PairingSession, Role, SessionEvent, SessionState,
    StepInput, UserDecision, UserPromptRequest,
};
use crate::radio::{FramePayload, HopSequence, ListenMode, Piconet, RadioFrame, TimeSlot};
use crate::{Address, SimRng};

/// Slots without any frame from the peer before the link counts as lost.
pub const LINK_TIMEOUT_SLOTS: u32 = 64;

/// Device-level happenings, wrapped into the scenario transcript.
#[derive(Debug, Clone, Serialize)]
pub enum DeviceEvent {
    ConnectionInitiated { peer: Address },
    ConnectionAccepted { peer: Address },
    ServiceDiscovery,
    Session(SessionEvent),
    Prompt(UserPromptRequest),
    Decision(UserDecision),
    LinkTimeout,
    AppPayloadSent,
    AppPayloadReceived { payload_hex: String },
    UnsealFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Scanning,
    InSession,
    Ready,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RadioRole {
    Master,
    Slave,
}

pub struct DeviceDriver {
    config: DeviceConfig,
    peer: Address,
    keys: KeyPair,
    rng: SimRng,
    phase: Phase,
    session: Option<PairingSession>,
    radio: Option<(RadioRole, HopSequence)>,
    outbox: VecDeque<PairingMessage>,
    /// Initiate a connection toward the peer at this slot (once).
    initiate_at: Option<u64>,
    reply_due: bool,
    silent_slots: u32,
    own_oob_payload_r: Option<crypto::RandomizerR>,
    peer_oob_payload: Option<OobPayload>,
    pending_prompts: Vec<UserPromptRequest>,
    app_payload: Vec<u8>,
    app_sent: bool,
    seal_counter: u64,
    received_app: Vec<Vec<u8>>,
    link_key: Option<LinkKey>,
    final_states: Vec<SessionState>,
    abort_reasons: Vec<AbortReason>,
    models: Vec<AssociationModel>,
    events: Vec<DeviceEvent>,
}

impl DeviceDriver {
    pub fn new(
        config: DeviceConfig,
        peer: Address,
        keys: KeyPair,
        rng: SimRng,
        initiate_at: Option<u64>,
        app_payload: Vec<u8>,
    ) -> Self {
        DeviceDriver {
            config,
            peer,
            keys,
            rng,
            phase: Phase::Scanning,
            session: None,
            radio: None,
            outbox: VecDeque::new(),
            initiate_at,
            reply_due: false,
            silent_slots: 0,
            own_oob_payload_r: None,
            peer_oob_payload: None,
            pending_prompts: Vec::new(),
            app_payload,
            app_sent: false,
            seal_counter: 0,
            received_app: Vec::new(),
            link_key: None,
            final_states: Vec::new(),
            abort_reasons: Vec::new(),
            models: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn address(&self) -> Address {
        self.config.address
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    pub fn public_key(&self) -> crypto::PublicPoint {
        self.keys.public()
    }

    /// Installs the out-of-band material: the randomizer this device
    /// published and the payload it received from (what it believes is)
    /// the peer.
    pub fn install_oob(&mut self, own_r: crypto::RandomizerR, peer_payload: OobPayload) {
        self.own_oob_payload_r = Some(own_r);
        self.peer_oob_payload = Some(peer_payload);
    }

    pub fn peer_oob_payload(&self) -> Option<&OobPayload> {
        self.peer_oob_payload.as_ref()
    }

    pub fn link_key(&self) -> Option<LinkKey> {
        self.link_key
    }

    pub fn abort_reasons(&self) -> &[AbortReason] {
        &self.abort_reasons
    }

    pub fn models(&self) -> &[AssociationModel] {
        &self.models
    }

    pub fn received_app_payloads(&self) -> &[Vec<u8>] {
        &self.received_app
    }

    pub fn is_encrypted(&self) -> bool {
        matches!(self.phase, Phase::Ready | Phase::Finished) && self.link_key.is_some()
    }

    pub fn is_satisfied(&self) -> bool {
        self.is_encrypted() && self.app_sent && !self.received_app.is_empty()
    }

    /// True when the device will not transmit unless spoken to.
    pub fn is_quiet(&self) -> bool {
        match self.phase {
            Phase::Scanning => self.initiate_at.is_none() && self.outbox.is_empty(),
            Phase::Finished => true,
            Phase::InSession | Phase::Ready => false,
        }
    }

    pub fn take_events(&mut self) -> Vec<DeviceEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn take_prompts(&mut self) -> Vec<UserPromptRequest> {
        std::mem::take(&mut self.pending_prompts)
    }

    /// Transmission half of the slot cycle.
    pub fn on_slot_start(&mut self, net: &mut Piconet) {
        let slot = net.current_slot();
        if self.phase == Phase::Ready && self.is_satisfied() {
            self.phase = Phase::Finished;
            net.set_mode(self.config.address, ListenMode::Off);
        }
        match self.phase {
            Phase::Scanning => {
                if self.initiate_at == Some(slot.0) {
                    self.initiate_at = None;
                    self.start_initiator_session(net, slot);
                    self.transmit_turn(net, slot);
                }
            }
            Phase::InSession | Phase::Ready => {
                self.tick_link_timer(net);
                if self.phase != Phase::Scanning {
                    self.transmit_turn(net, slot);
                }
            }
            Phase::Finished => {}
        }
    }

    fn start_initiator_session(&mut self, net: &mut Piconet, slot: TimeSlot) {
        let seq = HopSequence::from_master(self.config.address, slot.0);
        let session_rng = SimRng::seed_from_u64(self.rng.next_u64());
        let (mut session, outbound) = PairingSession::start(
            self.config,
            Role::Initiator,
            self.peer,
            self.keys.clone(),
            session_rng,
        );
        if let Some(r) = self.own_oob_payload_r {
            session.set_own_oob_randomizer(r);
        }
        self.session = Some(session);
        self.outbox = outbound.into();
        self.radio = Some((RadioRole::Master, seq));
        self.phase = Phase::InSession;
        self.silent_slots = 0;
        net.set_mode(self.config.address, ListenMode::Sequence(seq));
        self.events
            .push(DeviceEvent::ConnectionInitiated { peer: self.peer });
        self.events.push(DeviceEvent::ServiceDiscovery);
    }

    fn tick_link_timer(&mut self, net: &mut Piconet) {
        self.silent_slots += 1;
        if self.silent_slots > LINK_TIMEOUT_SLOTS {
            self.events.push(DeviceEvent::LinkTimeout);
            if let Some(session) = self.session.as_mut() {
                if !session.is_settled() {
                    session.abort(AbortReason::LinkLoss);
                }
            }
            self.collect_session_events();
            self.teardown_to_scanning(net);
        }
    }

    fn transmit_turn(&mut self, net: &mut Piconet, slot: TimeSlot) {
        let (role, seq) = match self.radio {
            Some(pair) => pair,
            None => return,
        };
        let my_turn = match role {
            RadioRole::Master => slot.0 % 2 == 0,
            RadioRole::Slave => {
                let due = self.reply_due;
                if slot.0 % 2 == 1 {
                    self.reply_due = false;
                }
                due && slot.0 % 2 == 1
            }
        };
        if !my_turn {
            return;
        }
        let payload = if let Some(msg) = self.outbox.pop_front() {
            FramePayload::Pairing(msg)
        } else if self.phase == Phase::Ready && !self.app_sent {
            self.app_sent = true;
            self.events.push(DeviceEvent::AppPayloadSent);
            let key = self.link_key.expect("encrypted phase has a key");
            let counter = self.seal_counter;
            self.seal_counter += 1;
            FramePayload::Sealed(crypto::seal(&key, counter, &self.app_payload).to_bytes())
        } else {
            match role {
                RadioRole::Master => FramePayload::Poll,
                RadioRole::Slave => FramePayload::Null,
            }
        };
        let frame = RadioFrame {
            sender: self.config.address,
            claimed_sender: self.config.address,
            slot,
            channel: seq.channel(slot),
            payload,
            is_noise: false,
        };
        net.transmit(frame).expect("current slot");
        // a session that had nothing left but its abort notice is done
        if self.outbox.is_empty() {
            if let Some(session) = &self.session {
                if session.state() == SessionState::Aborted {
                    self.teardown_to_scanning(net);
                }
            }
        }
    }

    /// Delivery half of the slot cycle.
    pub fn on_frames(&mut self, net: &mut Piconet, frames: Vec<RadioFrame>) {
        for frame in frames {
            if frame.claimed_sender != self.peer {
                continue;
            }
            match self.phase {
                Phase::Scanning => {
                    if let FramePayload::Pairing(msg @ PairingMessage::IoCapabilityExchange { .. }) =
                        &frame.payload
                    {
                        self.accept_connection(net, frame.slot, msg.clone());
                    }
                }
                Phase::InSession | Phase::Ready => {
                    // any frame from the piconet master addresses us
                    self.silent_slots = 0;
                    if matches!(self.radio, Some((RadioRole::Slave, _))) {
                        self.reply_due = true;
                    }
                    match frame.payload {
                        FramePayload::Pairing(msg) => self.feed_session(net, msg),
                        FramePayload::Sealed(bytes) => self.receive_sealed(&bytes),
                        FramePayload::Poll | FramePayload::Null => {}
                        FramePayload::Noise => {}
                    }
                }
                Phase::Finished => {}
            }
        }
    }

    fn accept_connection(&mut self, net: &mut Piconet, slot: TimeSlot, msg: PairingMessage) {
        let seq = HopSequence::from_master(self.peer, slot.0);
        let session_rng = SimRng::seed_from_u64(self.rng.next_u64());
        let (mut session, outbound) = PairingSession::start(
            self.config,
            Role::Responder,
            self.peer,
            self.keys.clone(),
            session_rng,
        );
        debug_assert!(outbound.is_empty());
        if let Some(r) = self.own_oob_payload_r {
            session.set_own_oob_randomizer(r);
        }
        self.session = Some(session);
        self.outbox.clear();
        self.radio = Some((RadioRole::Slave, seq));
        self.phase = Phase::InSession;
        self.silent_slots = 0;
        self.reply_due = true;
        self.app_sent = false;
        net.set_mode(self.config.address, ListenMode::Sequence(seq));
        self.events
            .push(DeviceEvent::ConnectionAccepted { peer: self.peer });
        self.events.push(DeviceEvent::ServiceDiscovery);
        self.feed_session(net, msg);
    }

    fn feed_session(&mut self, net: &mut Piconet, msg: PairingMessage) {
        let input = StepInput {
            inbound: Some(msg),
            decision: None,
            oob: self.peer_oob_payload.clone(),
        };
        self.step_session(net, input);
    }

    /// Applies a user decision produced by the scenario's user agent.
    pub fn give_decision(&mut self, net: &mut Piconet, decision: UserDecision) {
        self.events.push(DeviceEvent::Decision(decision));
        let input = StepInput {
            inbound: None,
            decision: Some(decision),
            oob: self.peer_oob_payload.clone(),
        };
        self.step_session(net, input);
    }

    fn step_session(&mut self, net: &mut Piconet, input: StepInput) {
        let session = match self.session.as_mut() {
            Some(s) if s.state() != SessionState::Aborted => s,
            _ => return,
        };
        match session.step(input) {
            Ok(out) => {
                self.outbox.extend(out.outbound);
                for prompt in out.prompts {
                    self.events.push(DeviceEvent::Prompt(prompt));
                    self.pending_prompts.push(prompt);
                }
                self.collect_session_events();
                self.after_session_progress();
            }
            Err(_) => {
                let reason = self
                    .session
                    .as_ref()
                    .and_then(|s| s.abort_reason())
                    .unwrap_or(AbortReason::ProtocolViolation);
                self.collect_session_events();
                self.outbox.clear();
                self.pending_prompts.clear();
                if reason != AbortReason::PeerAborted {
                    self.outbox.push_back(PairingMessage::Abort(reason));
                } else {
                    self.teardown_to_scanning(net);
                }
            }
        }
        // a peer abort arrives as a regular message: the session lands in
        // Aborted without a local error
        if self
            .session
            .as_ref()
            .is_some_and(|s| s.state() == SessionState::Aborted)
            && self.outbox.is_empty()
        {
            self.teardown_to_scanning(net);
        }
    }

    fn after_session_progress(&mut self) {
        let session = match self.session.as_mut() {
            Some(s) => s,
            None => return,
        };
        if session.state() == SessionState::LinkKeyReady {
            session.enable_encryption().expect("link key ready");
            self.link_key = session.link_key();
            self.phase = Phase::Ready;
            self.collect_session_events();
        }
    }

    fn collect_session_events(&mut self) {
        let session = match self.session.as_mut() {
            Some(s) => s,
            None => return,
        };
        for event in session.take_events() {
            if let SessionEvent::ModelSelected(model) = event {
                self.models.push(model);
            }
            if let SessionEvent::Aborted(reason) = event {
                self.abort_reasons.push(reason);
            }
            self.events.push(DeviceEvent::Session(event));
        }
    }

    fn teardown_to_scanning(&mut self, net: &mut Piconet) {
        if let Some(session) = self.session.take() {
            self.final_states.push(session.state());
        }
        self.outbox.clear();
        self.pending_prompts.clear();
        self.radio = None;
        self.reply_due = false;
        self.silent_slots = 0;
        self.phase = Phase::Scanning;
        net.set_mode(self.config.address, ListenMode::Scan);
    }

    fn receive_sealed(&mut self, bytes: &[u8]) {
        if self.phase != Phase::Ready {
            return;
        }
        let key = match self.link_key {
            Some(key) => key,
            None => return,
        };
        match SealedPacket::from_bytes(bytes).map(|p| crypto::unseal(&key, &p)) {
            Some(Ok(plaintext)) => {
                self.events.push(DeviceEvent::AppPayloadReceived {
                    payload_hex: hex::encode(&plaintext),
                });
                self.received_app.push(plaintext);
            }
            _ => self.events.push(DeviceEvent::UnsealFailed),
        }
    }
}
