//! The per-device pairing state machine.
//!
//! One `PairingSession` tracks a single pairing attempt from one side.
//! It is fed inbound messages, user decisions and (for the OOB model) the
//! peer's out-of-band payload, and produces outbound messages plus user
//! prompts. Sessions never touch the radio; a driver owns scheduling.
//!
//! State order is fixed: Idle → PublicKeySent → Stage1InProgress →
//! Stage1Done → Stage2InProgress → LinkKeyReady → Encrypted, with Aborted
//! terminal from anywhere. Every failure carries an enumerated reason —
//! there are no silent aborts.

use rand_core::RngCore;
use serde::Serialize;

use crate::crypto::{
    self, Commitment, DhKey, KeyPair, LinkKey, Nonce, PublicPoint, RandomizerR,
};
use crate::oob::OobPayload;
use crate::pairing::message::PairingMessage;
use crate::pairing::{
    select_association_model, AbortReason, AssociationModel, DeviceConfig, IoCapability,
    PolicyRejectReason, Role, UserDecision, UserPromptRequest,
};
use crate::{Address, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SessionState {
    Idle,
    PublicKeySent,
    Stage1InProgress,
    Stage1Done,
    Stage2InProgress,
    LinkKeyReady,
    Encrypted,
    Aborted,
}

impl SessionState {
    pub fn name(self) -> &'static str {
        match self {
            SessionState::Idle => "idle",
            SessionState::PublicKeySent => "public_key_sent",
            SessionState::Stage1InProgress => "stage1_in_progress",
            SessionState::Stage1Done => "stage1_done",
            SessionState::Stage2InProgress => "stage2_in_progress",
            SessionState::LinkKeyReady => "link_key_ready",
            SessionState::Encrypted => "encrypted",
            SessionState::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PairingError {
    #[error("stage-1 commitment verification failed")]
    CommitmentMismatch,
    #[error("stage-2 check value verification failed")]
    CheckValueMismatch,
    #[error("user rejected the pairing")]
    UserRejected,
    #[error("protocol violation: {0}")]
    ProtocolViolation(&'static str),
    #[error("out-of-band payload required but unavailable")]
    MissingOob,
    #[error("security policy rejected the pairing: {0}")]
    PolicyRejected(PolicyRejectReason),
    #[error("peer public key is not a valid curve point")]
    InvalidPoint,
    #[error("operation not legal in the current state")]
    NotReady,
}

impl PairingError {
    pub fn abort_reason(&self) -> AbortReason {
        match self {
            PairingError::CommitmentMismatch => AbortReason::CommitmentMismatch,
            PairingError::CheckValueMismatch => AbortReason::CheckValueMismatch,
            PairingError::UserRejected => AbortReason::UserRejected,
            PairingError::ProtocolViolation(_) => AbortReason::ProtocolViolation,
            PairingError::MissingOob => AbortReason::MissingOob,
            PairingError::PolicyRejected(_) => AbortReason::PolicyRejected,
            PairingError::InvalidPoint => AbortReason::ProtocolViolation,
            PairingError::NotReady => AbortReason::ProtocolViolation,
        }
    }
}

/// Protocol-visible events, drained by the driver into the run transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SessionEvent {
    ModelSelected(AssociationModel),
    PasskeyGenerated(u32),
    OobCommitmentVerified,
    CommitmentVerified,
    CheckValueVerified,
    LinkKeyNotification,
    AuthenticationComplete,
    EncryptionEnabled,
    Aborted(AbortReason),
    PeerAbortReceived(AbortReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, Default)]
pub struct StepInput {
    pub inbound: Option<PairingMessage>,
    pub decision: Option<UserDecision>,
    pub oob: Option<OobPayload>,
}

impl StepInput {
    pub fn inbound(msg: PairingMessage) -> Self {
        StepInput {
            inbound: Some(msg),
            ..StepInput::default()
        }
    }

    pub fn decision(decision: UserDecision) -> Self {
        StepInput {
            decision: Some(decision),
            ..StepInput::default()
        }
    }
}

#[derive(Debug, Default)]
pub struct StepOutput {
    pub outbound: Vec<PairingMessage>,
    pub prompts: Vec<UserPromptRequest>,
}

pub struct PairingSession {
    role: Role,
    config: DeviceConfig,
    peer_address: Address,
    state: SessionState,
    model: Option<AssociationModel>,
    own_keys: KeyPair,
    peer_io: Option<IoCapability>,
    peer_oob_flag: bool,
    peer_public: Option<PublicPoint>,
    n_own: Nonce,
    n_peer: Option<Nonce>,
    r_own: Option<RandomizerR>,
    r_peer: Option<RandomizerR>,
    c_peer: Option<Commitment>,
    dh: Option<DhKey>,
    link_key: Option<LinkKey>,
    own_oob_r: Option<RandomizerR>,
    own_pk_sent: bool,
    commitment_sent: bool,
    nonce_sent: bool,
    oob_verified: bool,
    awaiting_confirm: bool,
    awaiting_passkey: bool,
    check_sent: bool,
    peer_check_verified: bool,
    pending_peer_check: Option<[u8; 16]>,
    rng: SimRng,
    transcript: Vec<(Direction, PairingMessage)>,
    events: Vec<SessionEvent>,
    abort_reason: Option<AbortReason>,
}

impl PairingSession {
    /// Opens a session. The initiator immediately queues its capability
    /// announcement and public key; the responder stays quiet until the
    /// initiator's first message arrives.
    pub fn start(
        config: DeviceConfig,
        role: Role,
        peer_address: Address,
        keys: KeyPair,
        mut rng: SimRng,
    ) -> (Self, Vec<PairingMessage>) {
        let n_own = Nonce::random(&mut rng);
        let mut session = PairingSession {
            role,
            config,
            peer_address,
            state: SessionState::Idle,
            model: None,
            own_keys: keys,
            peer_io: None,
            peer_oob_flag: false,
            peer_public: None,
            n_own,
            n_peer: None,
            r_own: None,
            r_peer: None,
            c_peer: None,
            dh: None,
            link_key: None,
            own_oob_r: None,
            own_pk_sent: false,
            commitment_sent: false,
            nonce_sent: false,
            oob_verified: false,
            awaiting_confirm: false,
            awaiting_passkey: false,
            check_sent: false,
            peer_check_verified: false,
            pending_peer_check: None,
            rng,
            transcript: Vec::new(),
            events: Vec::new(),
            abort_reason: None,
        };
        let mut outbound = Vec::new();
        if role == Role::Initiator {
            session.push_msg(
                &mut outbound,
                PairingMessage::IoCapabilityExchange {
                    io: config.io,
                    oob_available: config.oob_available,
                },
            );
            let pk = session.own_keys.public();
            session.push_msg(&mut outbound, PairingMessage::PublicKeyX(pk));
            session.own_pk_sent = true;
            session.state = SessionState::PublicKeySent;
        }
        (session, outbound)
    }

    /// Convenience constructor that also generates the key pair from the
    /// session RNG.
    pub fn start_with_fresh_keys(
        config: DeviceConfig,
        role: Role,
        peer_address: Address,
        mut rng: SimRng,
    ) -> (Self, Vec<PairingMessage>) {
        let keys = crypto::generate_keypair(&mut rng);
        Self::start(config, role, peer_address, keys, rng)
    }

    /// Registers the randomizer this device published over the OOB
    /// channel; required before an OOB-model session can complete.
    pub fn set_own_oob_randomizer(&mut self, r: RandomizerR) {
        self.own_oob_r = Some(r);
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn model(&self) -> Option<AssociationModel> {
        self.model
    }

    pub fn link_key(&self) -> Option<LinkKey> {
        self.link_key
    }

    pub fn abort_reason(&self) -> Option<AbortReason> {
        self.abort_reason
    }

    pub fn own_address(&self) -> Address {
        self.config.address
    }

    pub fn peer_address(&self) -> Address {
        self.peer_address
    }

    pub fn own_public(&self) -> PublicPoint {
        self.own_keys.public()
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.state, SessionState::Aborted)
    }

    /// True once nothing more is expected from the peer.
    pub fn is_settled(&self) -> bool {
        matches!(
            self.state,
            SessionState::LinkKeyReady | SessionState::Encrypted | SessionState::Aborted
        )
    }

    pub fn take_events(&mut self) -> Vec<SessionEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn transcript(&self) -> &[(Direction, PairingMessage)] {
        &self.transcript
    }

    /// Driver-triggered abort (link loss or external policy).
    pub fn abort(&mut self, reason: AbortReason) {
        if self.state != SessionState::Aborted {
            self.state = SessionState::Aborted;
            self.abort_reason = Some(reason);
            self.events.push(SessionEvent::Aborted(reason));
        }
    }

    /// Advances the state machine. On error the session is already moved
    /// to Aborted with the matching reason; the caller is responsible for
    /// notifying the peer.
    pub fn step(&mut self, input: StepInput) -> Result<StepOutput, PairingError> {
        if self.state == SessionState::Aborted {
            return Err(PairingError::NotReady);
        }
        let mut out = StepOutput::default();
        let result = self.step_inner(input, &mut out);
        if let Err(err) = &result {
            self.abort(err.abort_reason());
        }
        result.map(|()| out)
    }

    fn step_inner(&mut self, input: StepInput, out: &mut StepOutput) -> Result<(), PairingError> {
        if let Some(decision) = input.decision {
            self.handle_decision(decision, out)?;
        }
        if let Some(msg) = input.inbound {
            self.transcript.push((Direction::Received, msg.clone()));
            self.handle_message(msg, input.oob.as_ref(), out)?;
        }
        // A check value that raced ahead of a pending user decision is
        // replayed once stage 1 completes.
        if self.role == Role::Responder
            && self.state == SessionState::Stage1Done
            && self.pending_peer_check.is_some()
        {
            let check = self.pending_peer_check.take().unwrap();
            self.handle_peer_check(check, out)?;
        }
        Ok(())
    }

    fn push_msg(&mut self, sink: &mut Vec<PairingMessage>, msg: PairingMessage) {
        self.transcript.push((Direction::Sent, msg.clone()));
        sink.push(msg);
    }

    fn send(&mut self, out: &mut StepOutput, msg: PairingMessage) {
        self.transcript.push((Direction::Sent, msg.clone()));
        out.outbound.push(msg);
    }

    fn require_model(&self) -> Result<AssociationModel, PairingError> {
        self.model
            .ok_or(PairingError::ProtocolViolation("message before io exchange"))
    }

    fn handle_message(
        &mut self,
        msg: PairingMessage,
        oob: Option<&OobPayload>,
        out: &mut StepOutput,
    ) -> Result<(), PairingError> {
        match msg {
            PairingMessage::IoCapabilityExchange { io, oob_available } => {
                self.handle_io_exchange(io, oob_available, out)
            }
            PairingMessage::PublicKeyX(point) => self.handle_public_key(point, oob, out),
            PairingMessage::CommitmentMsg(c) => self.handle_commitment(c, out),
            PairingMessage::NonceReveal(n) => self.handle_nonce(n, out),
            PairingMessage::DhKeyCheck(check) => self.handle_check_message(check, out),
            PairingMessage::PairComplete => self.handle_pair_complete(),
            PairingMessage::Abort(reason) => {
                self.events.push(SessionEvent::PeerAbortReceived(reason));
                self.abort(AbortReason::PeerAborted);
                Ok(())
            }
        }
    }

    fn handle_io_exchange(
        &mut self,
        io: IoCapability,
        peer_oob: bool,
        out: &mut StepOutput,
    ) -> Result<(), PairingError> {
        if self.peer_io.is_some() {
            return Err(PairingError::ProtocolViolation("duplicate io exchange"));
        }
        self.peer_io = Some(io);
        self.peer_oob_flag = peer_oob;
        let model = select_association_model(
            self.config.io,
            io,
            self.config.oob_available,
            peer_oob,
            &self.config.policy,
        )
        .map_err(PairingError::PolicyRejected)?;
        self.model = Some(model);
        self.events.push(SessionEvent::ModelSelected(model));
        if self.role == Role::Responder {
            let reply = PairingMessage::IoCapabilityExchange {
                io: self.config.io,
                oob_available: self.config.oob_available,
            };
            self.send(out, reply);
        }
        Ok(())
    }

    fn handle_public_key(
        &mut self,
        point: PublicPoint,
        oob: Option<&OobPayload>,
        out: &mut StepOutput,
    ) -> Result<(), PairingError> {
        self.require_model()?;
        if self.peer_public.is_some() {
            return Err(PairingError::ProtocolViolation("duplicate public key"));
        }
        let dh = crypto::derive_dh_key(&self.own_keys, &point)
            .map_err(|_| PairingError::InvalidPoint)?;
        self.peer_public = Some(point);
        self.dh = Some(dh);
        if self.role == Role::Responder && !self.own_pk_sent {
            let pk = self.own_keys.public();
            self.send(out, PairingMessage::PublicKeyX(pk));
            self.own_pk_sent = true;
            self.state = SessionState::PublicKeySent;
        }
        self.stage1_kickoff(oob, out)
    }

    fn stage1_kickoff(
        &mut self,
        oob: Option<&OobPayload>,
        out: &mut StepOutput,
    ) -> Result<(), PairingError> {
        self.state = SessionState::Stage1InProgress;
        match self.require_model()? {
            AssociationModel::NumericComparison | AssociationModel::JustWorks => {
                self.r_own = Some(RandomizerR::ZERO);
                self.r_peer = Some(RandomizerR::ZERO);
                if self.role == Role::Responder {
                    self.send_own_commitment(out);
                }
            }
            AssociationModel::PasskeyEntry => {
                if self.config.io == IoCapability::KeyboardOnly {
                    self.awaiting_passkey = true;
                    out.prompts.push(UserPromptRequest::EnterPasskey);
                } else {
                    let passkey = self.rng.next_u32() % 1_000_000;
                    self.r_own = Some(RandomizerR::from_passkey(passkey));
                    self.events.push(SessionEvent::PasskeyGenerated(passkey));
                    out.prompts.push(UserPromptRequest::DisplayPasskey { passkey });
                    if self.role == Role::Initiator {
                        self.send_own_commitment(out);
                    }
                }
            }
            AssociationModel::OutOfBand => {
                let payload = oob.ok_or(PairingError::MissingOob)?.clone();
                if self.own_oob_r.is_none() {
                    return Err(PairingError::MissingOob);
                }
                if payload.sender_address != self.peer_address {
                    return Err(PairingError::ProtocolViolation("oob payload address"));
                }
                let peer_pk = self.peer_public.as_ref().unwrap();
                let expected =
                    crypto::f1_commit(peer_pk, peer_pk, &Nonce::ZERO, &payload.r);
                if expected != payload.c {
                    return Err(PairingError::CommitmentMismatch);
                }
                self.r_own = self.own_oob_r;
                self.r_peer = Some(payload.r);
                self.oob_verified = true;
                self.events.push(SessionEvent::OobCommitmentVerified);
                if self.role == Role::Initiator {
                    self.send_nonce(out);
                }
            }
        }
        Ok(())
    }

    fn send_own_commitment(&mut self, out: &mut StepOutput) {
        let c = crypto::f1_commit(
            &self.own_keys.public(),
            self.peer_public.as_ref().unwrap(),
            &self.n_own,
            self.r_own.as_ref().unwrap(),
        );
        self.send(out, PairingMessage::CommitmentMsg(c));
        self.commitment_sent = true;
    }

    fn send_nonce(&mut self, out: &mut StepOutput) {
        let n = self.n_own;
        self.send(out, PairingMessage::NonceReveal(n));
        self.nonce_sent = true;
    }

    fn handle_commitment(
        &mut self,
        c: Commitment,
        out: &mut StepOutput,
    ) -> Result<(), PairingError> {
        if self.state != SessionState::Stage1InProgress || self.c_peer.is_some() {
            return Err(PairingError::ProtocolViolation("unexpected commitment"));
        }
        match self.require_model()? {
            AssociationModel::NumericComparison | AssociationModel::JustWorks => {
                if self.role != Role::Initiator {
                    return Err(PairingError::ProtocolViolation(
                        "commitment from initiator in comparison flow",
                    ));
                }
                self.c_peer = Some(c);
                self.send_nonce(out);
            }
            AssociationModel::PasskeyEntry => {
                match self.role {
                    Role::Initiator => {
                        if !self.commitment_sent {
                            return Err(PairingError::ProtocolViolation(
                                "responder committed first",
                            ));
                        }
                        self.c_peer = Some(c);
                        self.send_nonce(out);
                    }
                    Role::Responder => {
                        self.c_peer = Some(c);
                        if self.r_own.is_some() {
                            self.send_own_commitment(out);
                        }
                        // otherwise the passkey prompt is still pending;
                        // the commitment goes out with the decision
                    }
                }
            }
            AssociationModel::OutOfBand => {
                return Err(PairingError::ProtocolViolation(
                    "in-band commitment in oob flow",
                ));
            }
        }
        Ok(())
    }

    fn handle_nonce(&mut self, n: Nonce, out: &mut StepOutput) -> Result<(), PairingError> {
        if self.state != SessionState::Stage1InProgress || self.n_peer.is_some() {
            return Err(PairingError::ProtocolViolation("unexpected nonce"));
        }
        match self.require_model()? {
            AssociationModel::NumericComparison | AssociationModel::JustWorks => {
                match self.role {
                    Role::Responder => {
                        if !self.commitment_sent {
                            return Err(PairingError::ProtocolViolation(
                                "nonce before commitment",
                            ));
                        }
                        self.n_peer = Some(n);
                        self.send_nonce(out);
                    }
                    Role::Initiator => {
                        if !self.nonce_sent {
                            return Err(PairingError::ProtocolViolation(
                                "responder revealed nonce first",
                            ));
                        }
                        self.n_peer = Some(n);
                        self.verify_peer_commitment()?;
                    }
                }
                self.comparison_stage(out)?;
            }
            AssociationModel::PasskeyEntry => {
                match self.role {
                    Role::Responder => {
                        if !self.commitment_sent {
                            return Err(PairingError::ProtocolViolation(
                                "nonce before commitment",
                            ));
                        }
                        self.n_peer = Some(n);
                        self.verify_peer_commitment()?;
                        self.send_nonce(out);
                    }
                    Role::Initiator => {
                        if !self.nonce_sent {
                            return Err(PairingError::ProtocolViolation(
                                "responder revealed nonce first",
                            ));
                        }
                        self.n_peer = Some(n);
                        self.verify_peer_commitment()?;
                    }
                }
                self.complete_stage1(out)?;
            }
            AssociationModel::OutOfBand => {
                if !self.oob_verified {
                    return Err(PairingError::ProtocolViolation("nonce before oob check"));
                }
                if self.role == Role::Initiator && !self.nonce_sent {
                    return Err(PairingError::ProtocolViolation(
                        "responder revealed nonce first",
                    ));
                }
                self.n_peer = Some(n);
                if self.role == Role::Responder {
                    self.send_nonce(out);
                }
                self.complete_stage1(out)?;
            }
        }
        Ok(())
    }

    /// Checks the stored peer commitment against the revealed nonce. Uses
    /// the local randomizer view: zero for comparison flows, the locally
    /// entered passkey for Passkey Entry.
    fn verify_peer_commitment(&mut self) -> Result<(), PairingError> {
        let c_peer = self.c_peer.ok_or(PairingError::ProtocolViolation(
            "nonce before commitment",
        ))?;
        let r = match self.require_model()? {
            AssociationModel::PasskeyEntry => self.r_own.unwrap(),
            _ => RandomizerR::ZERO,
        };
        let expected = crypto::f1_commit(
            self.peer_public.as_ref().unwrap(),
            &self.own_keys.public(),
            self.n_peer.as_ref().unwrap(),
            &r,
        );
        if expected != c_peer {
            return Err(PairingError::CommitmentMismatch);
        }
        // a verified commitment pins the peer's randomizer to the local
        // view (zero, or the shared passkey)
        self.r_peer = Some(r);
        self.events.push(SessionEvent::CommitmentVerified);
        Ok(())
    }

    /// Numeric Comparison shows the six-digit value and waits; Just Works
    /// runs the same flow with the confirmation auto-accepted and nothing
    /// displayed.
    fn comparison_stage(&mut self, out: &mut StepOutput) -> Result<(), PairingError> {
        match self.require_model()? {
            AssociationModel::NumericComparison => {
                let value = self.verification_value();
                self.awaiting_confirm = true;
                out.prompts.push(UserPromptRequest::CompareValues { value });
                Ok(())
            }
            AssociationModel::JustWorks => self.complete_stage1(out),
            _ => unreachable!("comparison stage only runs for comparison models"),
        }
    }

    /// Six-digit value over (initiator, responder) ordered inputs.
    pub fn verification_value(&self) -> u32 {
        let own_pk = self.own_keys.public();
        let peer_pk = self.peer_public.as_ref().unwrap();
        let (pk_i, pk_r, n_i, n_r) = match self.role {
            Role::Initiator => (&own_pk, peer_pk, &self.n_own, self.n_peer.as_ref().unwrap()),
            Role::Responder => (peer_pk, &own_pk, self.n_peer.as_ref().unwrap(), &self.n_own),
        };
        crypto::g_verify_value(pk_i, pk_r, n_i, n_r)
    }

    fn complete_stage1(&mut self, out: &mut StepOutput) -> Result<(), PairingError> {
        self.state = SessionState::Stage1Done;
        if self.role == Role::Initiator {
            self.send_own_check(out);
        }
        Ok(())
    }

    fn send_own_check(&mut self, out: &mut StepOutput) {
        let check = crypto::f3_check_value(
            self.dh.as_ref().unwrap(),
            &self.n_own,
            self.n_peer.as_ref().unwrap(),
            self.r_peer.as_ref().unwrap(),
            self.config.io.as_byte(),
            self.config.address,
            self.peer_address,
        );
        self.send(out, PairingMessage::DhKeyCheck(check));
        self.check_sent = true;
        self.state = SessionState::Stage2InProgress;
    }

    fn handle_check_message(
        &mut self,
        check: [u8; 16],
        out: &mut StepOutput,
    ) -> Result<(), PairingError> {
        if self.peer_check_verified || self.pending_peer_check.is_some() {
            return Err(PairingError::ProtocolViolation("duplicate check value"));
        }
        match self.role {
            Role::Responder => match self.state {
                SessionState::Stage1InProgress => {
                    // The initiator finished stage 1 while our user
                    // decision is still pending; hold the check.
                    if self.awaiting_confirm || self.awaiting_passkey {
                        self.pending_peer_check = Some(check);
                        Ok(())
                    } else {
                        Err(PairingError::ProtocolViolation("check before stage 1"))
                    }
                }
                SessionState::Stage1Done => self.handle_peer_check(check, out),
                _ => Err(PairingError::ProtocolViolation("unexpected check value")),
            },
            Role::Initiator => {
                if self.state != SessionState::Stage2InProgress || !self.check_sent {
                    return Err(PairingError::ProtocolViolation("unexpected check value"));
                }
                self.handle_peer_check(check, out)
            }
        }
    }

    fn handle_peer_check(
        &mut self,
        check: [u8; 16],
        out: &mut StepOutput,
    ) -> Result<(), PairingError> {
        let expected = crypto::f3_check_value(
            self.dh.as_ref().unwrap(),
            self.n_peer.as_ref().unwrap(),
            &self.n_own,
            self.r_own.as_ref().unwrap(),
            self.peer_io.unwrap().as_byte(),
            self.peer_address,
            self.config.address,
        );
        if expected != check {
            return Err(PairingError::CheckValueMismatch);
        }
        self.peer_check_verified = true;
        self.events.push(SessionEvent::CheckValueVerified);
        match self.role {
            Role::Responder => {
                self.send_own_check(out);
            }
            Role::Initiator => {
                self.send(out, PairingMessage::PairComplete);
                self.finalize_stage2()?;
            }
        }
        Ok(())
    }

    fn handle_pair_complete(&mut self) -> Result<(), PairingError> {
        if self.role != Role::Responder
            || self.state != SessionState::Stage2InProgress
            || !self.peer_check_verified
            || !self.check_sent
        {
            return Err(PairingError::ProtocolViolation("unexpected pair complete"));
        }
        self.finalize_stage2()
    }

    /// Computes the link key once both stage-2 checks verified. Emits
    /// LinkKeyNotification on both sides and AuthenticationComplete on
    /// the initiator.
    pub fn finalize_stage2(&mut self) -> Result<(), PairingError> {
        if !(self.peer_check_verified && self.check_sent) {
            return Err(PairingError::NotReady);
        }
        let (n_i, n_r, addr_i, addr_r) = match self.role {
            Role::Initiator => (
                &self.n_own,
                self.n_peer.as_ref().unwrap(),
                self.config.address,
                self.peer_address,
            ),
            Role::Responder => (
                self.n_peer.as_ref().unwrap(),
                &self.n_own,
                self.peer_address,
                self.config.address,
            ),
        };
        let link_key = crypto::f2_link_key(self.dh.as_ref().unwrap(), n_i, n_r, addr_i, addr_r);
        self.link_key = Some(link_key);
        self.state = SessionState::LinkKeyReady;
        self.events.push(SessionEvent::LinkKeyNotification);
        if self.role == Role::Initiator {
            self.events.push(SessionEvent::AuthenticationComplete);
        }
        Ok(())
    }

    /// Moves a completed session into the encrypted state; subsequent
    /// traffic is sealed under the link key.
    pub fn enable_encryption(&mut self) -> Result<(), PairingError> {
        if self.state != SessionState::LinkKeyReady {
            return Err(PairingError::NotReady);
        }
        self.state = SessionState::Encrypted;
        self.events.push(SessionEvent::EncryptionEnabled);
        Ok(())
    }

    fn handle_decision(
        &mut self,
        decision: UserDecision,
        out: &mut StepOutput,
    ) -> Result<(), PairingError> {
        match decision {
            UserDecision::Confirm(yes) => {
                if !self.awaiting_confirm {
                    return Err(PairingError::ProtocolViolation("unsolicited confirmation"));
                }
                self.awaiting_confirm = false;
                if !yes {
                    return Err(PairingError::UserRejected);
                }
                self.complete_stage1(out)
            }
            UserDecision::PasskeyInput(passkey) => {
                if !self.awaiting_passkey {
                    return Err(PairingError::ProtocolViolation("unsolicited passkey"));
                }
                self.awaiting_passkey = false;
                self.r_own = Some(RandomizerR::from_passkey(passkey % 1_000_000));
                match self.role {
                    Role::Initiator => self.send_own_commitment(out),
                    Role::Responder => {
                        if self.c_peer.is_some() {
                            self.send_own_commitment(out);
                        }
                    }
                }
                Ok(())
            }
            UserDecision::NoInteraction => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairing::SecurityPolicy;
    use rand_chacha::rand_core::SeedableRng;

    fn rng(seed: u64) -> SimRng {
        SimRng::seed_from_u64(seed)
    }

    fn device(addr: u64, io: IoCapability) -> DeviceConfig {
        DeviceConfig::new(Address::new(addr), io)
    }

    struct Pump {
        a: PairingSession,
        b: PairingSession,
        to_b: Vec<PairingMessage>,
        to_a: Vec<PairingMessage>,
        prompts_a: Vec<UserPromptRequest>,
        prompts_b: Vec<UserPromptRequest>,
    }

    impl Pump {
        fn new(cfg_a: DeviceConfig, cfg_b: DeviceConfig, seed: u64) -> Self {
            let (a, first) = PairingSession::start(
                cfg_a,
                Role::Initiator,
                cfg_b.address,
                crypto::generate_keypair(&mut rng(seed)),
                rng(seed + 1),
            );
            let (b, none) = PairingSession::start(
                cfg_b,
                Role::Responder,
                cfg_a.address,
                crypto::generate_keypair(&mut rng(seed + 2)),
                rng(seed + 3),
            );
            assert!(none.is_empty());
            Pump {
                a,
                b,
                to_b: first,
                to_a: Vec::new(),
                prompts_a: Vec::new(),
                prompts_b: Vec::new(),
            }
        }

        /// Shuttles queued messages until both directions drain.
        fn run(&mut self) -> Result<(), PairingError> {
            for _ in 0..64 {
                if self.to_a.is_empty() && self.to_b.is_empty() {
                    return Ok(());
                }
                for msg in std::mem::take(&mut self.to_b) {
                    let out = self.b.step(StepInput::inbound(msg))?;
                    self.to_a.extend(out.outbound);
                    self.prompts_b.extend(out.prompts);
                }
                for msg in std::mem::take(&mut self.to_a) {
                    let out = self.a.step(StepInput::inbound(msg))?;
                    self.to_b.extend(out.outbound);
                    self.prompts_a.extend(out.prompts);
                }
            }
            Ok(())
        }

        fn decide_a(&mut self, decision: UserDecision) -> Result<(), PairingError> {
            let out = self.a.step(StepInput::decision(decision))?;
            self.to_b.extend(out.outbound);
            self.prompts_a.extend(out.prompts);
            Ok(())
        }

        fn decide_b(&mut self, decision: UserDecision) -> Result<(), PairingError> {
            let out = self.b.step(StepInput::decision(decision))?;
            self.to_a.extend(out.outbound);
            self.prompts_b.extend(out.prompts);
            Ok(())
        }
    }

    #[test]
    fn initiator_start_emits_caps_then_public_key() {
        let (session, outbound) = PairingSession::start_with_fresh_keys(
            device(1, IoCapability::DisplayYesNo),
            Role::Initiator,
            Address::new(2),
            rng(0),
        );
        assert_eq!(session.state(), SessionState::PublicKeySent);
        assert_eq!(outbound.len(), 2);
        assert!(matches!(
            outbound[0],
            PairingMessage::IoCapabilityExchange { .. }
        ));
        assert!(matches!(outbound[1], PairingMessage::PublicKeyX(_)));
    }

    #[test]
    fn start_is_deterministic_under_seed() {
        let mk = || {
            PairingSession::start_with_fresh_keys(
                device(1, IoCapability::DisplayYesNo),
                Role::Initiator,
                Address::new(2),
                rng(42),
            )
        };
        let (_, out1) = mk();
        let (_, out2) = mk();
        let bytes1: Vec<u8> = out1.iter().flat_map(|m| m.encode()).collect();
        let bytes2: Vec<u8> = out2.iter().flat_map(|m| m.encode()).collect();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn responder_withholds_public_key_until_initiators_arrives() {
        let (mut b, none) = PairingSession::start_with_fresh_keys(
            device(2, IoCapability::DisplayYesNo),
            Role::Responder,
            Address::new(1),
            rng(7),
        );
        assert!(none.is_empty());
        let out = b
            .step(StepInput::inbound(PairingMessage::IoCapabilityExchange {
                io: IoCapability::DisplayYesNo,
                oob_available: false,
            }))
            .unwrap();
        assert_eq!(out.outbound.len(), 1, "only the capability reply");
        assert!(matches!(
            out.outbound[0],
            PairingMessage::IoCapabilityExchange { .. }
        ));
    }

    #[test]
    fn honest_numeric_comparison_completes_with_equal_keys() {
        let mut pump = Pump::new(
            device(1, IoCapability::DisplayYesNo),
            device(2, IoCapability::DisplayYesNo),
            10,
        );
        pump.run().unwrap();
        // both sides should now be waiting on the comparison prompt
        let va = match pump.prompts_a[..] {
            [UserPromptRequest::CompareValues { value }] => value,
            _ => panic!("initiator prompt missing"),
        };
        let vb = match pump.prompts_b[..] {
            [UserPromptRequest::CompareValues { value }] => value,
            _ => panic!("responder prompt missing"),
        };
        assert_eq!(va, vb, "honest run must display identical values");
        pump.decide_a(UserDecision::Confirm(true)).unwrap();
        pump.decide_b(UserDecision::Confirm(true)).unwrap();
        pump.run().unwrap();
        assert_eq!(pump.a.state(), SessionState::LinkKeyReady);
        assert_eq!(pump.b.state(), SessionState::LinkKeyReady);
        assert_eq!(pump.a.link_key().unwrap(), pump.b.link_key().unwrap());
    }

    #[test]
    fn initiator_logs_authentication_complete_responder_does_not() {
        let mut pump = Pump::new(
            device(1, IoCapability::NoInputNoOutput),
            device(2, IoCapability::NoInputNoOutput),
            11,
        );
        pump.run().unwrap();
        let events_a = pump.a.take_events();
        let events_b = pump.b.take_events();
        assert!(events_a.contains(&SessionEvent::LinkKeyNotification));
        assert!(events_b.contains(&SessionEvent::LinkKeyNotification));
        assert!(events_a.contains(&SessionEvent::AuthenticationComplete));
        assert!(!events_b.contains(&SessionEvent::AuthenticationComplete));
    }

    #[test]
    fn just_works_completes_without_prompts() {
        let mut pump = Pump::new(
            device(1, IoCapability::NoInputNoOutput),
            device(2, IoCapability::DisplayYesNo),
            12,
        );
        pump.run().unwrap();
        assert!(pump.prompts_a.is_empty());
        assert!(pump.prompts_b.is_empty());
        assert_eq!(pump.a.model(), Some(AssociationModel::JustWorks));
        assert_eq!(pump.a.state(), SessionState::LinkKeyReady);
        assert_eq!(pump.b.state(), SessionState::LinkKeyReady);
    }

    #[test]
    fn rejecting_user_aborts_with_user_rejected() {
        let mut pump = Pump::new(
            device(1, IoCapability::DisplayYesNo),
            device(2, IoCapability::DisplayYesNo),
            13,
        );
        pump.run().unwrap();
        let err = pump.decide_a(UserDecision::Confirm(false)).unwrap_err();
        assert_eq!(err, PairingError::UserRejected);
        assert_eq!(pump.a.state(), SessionState::Aborted);
        assert_eq!(pump.a.abort_reason(), Some(AbortReason::UserRejected));
        assert!(pump.a.link_key().is_none());
    }

    #[test]
    fn honest_passkey_entry_completes() {
        let mut pump = Pump::new(
            device(1, IoCapability::KeyboardOnly),
            device(2, IoCapability::DisplayOnly),
            14,
        );
        pump.run().unwrap();
        // responder displays, initiator is asked to type
        assert!(matches!(pump.prompts_a[..], [UserPromptRequest::EnterPasskey]));
        let shown = match pump.prompts_b[..] {
            [UserPromptRequest::DisplayPasskey { passkey }] => passkey,
            _ => panic!("display prompt missing"),
        };
        pump.decide_a(UserDecision::PasskeyInput(shown)).unwrap();
        pump.run().unwrap();
        assert_eq!(pump.a.state(), SessionState::LinkKeyReady);
        assert_eq!(pump.b.state(), SessionState::LinkKeyReady);
        assert_eq!(pump.a.link_key().unwrap(), pump.b.link_key().unwrap());
    }

    #[test]
    fn wrong_passkey_is_caught_by_commitment_check() {
        let mut pump = Pump::new(
            device(1, IoCapability::KeyboardOnly),
            device(2, IoCapability::DisplayOnly),
            15,
        );
        pump.run().unwrap();
        let shown = match pump.prompts_b[..] {
            [UserPromptRequest::DisplayPasskey { passkey }] => passkey,
            _ => panic!("display prompt missing"),
        };
        let wrong = (shown + 1) % 1_000_000;
        pump.decide_a(UserDecision::PasskeyInput(wrong)).unwrap();
        let err = pump.run().unwrap_err();
        assert_eq!(err, PairingError::CommitmentMismatch);
    }

    #[test]
    fn policy_reject_fires_during_io_exchange() {
        let mut cfg_b = device(2, IoCapability::NoInputNoOutput);
        cfg_b.policy = SecurityPolicy {
            allow_just_works: false,
            ..SecurityPolicy::default()
        };
        let (mut b, _) = PairingSession::start_with_fresh_keys(
            cfg_b,
            Role::Responder,
            Address::new(1),
            rng(16),
        );
        let err = b
            .step(StepInput::inbound(PairingMessage::IoCapabilityExchange {
                io: IoCapability::NoInputNoOutput,
                oob_available: false,
            }))
            .unwrap_err();
        assert_eq!(
            err,
            PairingError::PolicyRejected(PolicyRejectReason::JustWorksDisabled)
        );
        assert_eq!(b.abort_reason(), Some(AbortReason::PolicyRejected));
    }

    #[test]
    fn out_of_order_message_aborts_with_protocol_violation() {
        let (mut b, _) = PairingSession::start_with_fresh_keys(
            device(2, IoCapability::DisplayYesNo),
            Role::Responder,
            Address::new(1),
            rng(17),
        );
        // public key before the io exchange
        let pk = crypto::generate_keypair(&mut rng(18)).public();
        let err = b
            .step(StepInput::inbound(PairingMessage::PublicKeyX(pk)))
            .unwrap_err();
        assert!(matches!(err, PairingError::ProtocolViolation(_)));
        assert_eq!(b.state(), SessionState::Aborted);
    }

    #[test]
    fn enable_encryption_requires_link_key() {
        let (mut a, _) = PairingSession::start_with_fresh_keys(
            device(1, IoCapability::DisplayYesNo),
            Role::Initiator,
            Address::new(2),
            rng(19),
        );
        assert_eq!(a.enable_encryption(), Err(PairingError::NotReady));

        let mut pump = Pump::new(
            device(1, IoCapability::NoInputNoOutput),
            device(2, IoCapability::NoInputNoOutput),
            20,
        );
        pump.run().unwrap();
        pump.a.enable_encryption().unwrap();
        assert_eq!(pump.a.state(), SessionState::Encrypted);
    }

    #[test]
    fn no_link_key_after_abort() {
        let mut pump = Pump::new(
            device(1, IoCapability::DisplayYesNo),
            device(2, IoCapability::DisplayYesNo),
            21,
        );
        pump.run().unwrap();
        let _ = pump.decide_b(UserDecision::Confirm(false));
        assert_eq!(pump.b.state(), SessionState::Aborted);
        assert!(pump.b.link_key().is_none());
    }

    #[test]
    fn spliced_check_value_from_foreign_session_is_rejected() {
        // two independent honest sessions; a check value from one is
        // replayed into the other, standing in for a MITM-substituted DH
        let mut p1 = Pump::new(
            device(1, IoCapability::NoInputNoOutput),
            device(2, IoCapability::NoInputNoOutput),
            22,
        );
        // drive p1 until the initiator has emitted its DhKeyCheck
        let mut foreign_check = None;
        'outer: for _ in 0..32 {
            for msg in std::mem::take(&mut p1.to_b) {
                if let PairingMessage::DhKeyCheck(c) = msg {
                    foreign_check = Some(c);
                    break 'outer;
                }
                let out = p1.b.step(StepInput::inbound(msg)).unwrap();
                p1.to_a.extend(out.outbound);
            }
            for msg in std::mem::take(&mut p1.to_a) {
                let out = p1.a.step(StepInput::inbound(msg)).unwrap();
                p1.to_b.extend(out.outbound);
            }
        }
        let foreign_check = foreign_check.expect("initiator check captured");

        let mut p2 = Pump::new(
            device(1, IoCapability::NoInputNoOutput),
            device(2, IoCapability::NoInputNoOutput),
            23,
        );
        // advance p2's responder to the point where it expects a check
        for _ in 0..32 {
            let msgs = std::mem::take(&mut p2.to_b);
            for msg in msgs {
                if matches!(msg, PairingMessage::DhKeyCheck(_)) {
                    let err = p2
                        .b
                        .step(StepInput::inbound(PairingMessage::DhKeyCheck(foreign_check)))
                        .unwrap_err();
                    assert_eq!(err, PairingError::CheckValueMismatch);
                    return;
                }
                let out = p2.b.step(StepInput::inbound(msg)).unwrap();
                p2.to_a.extend(out.outbound);
            }
            for msg in std::mem::take(&mut p2.to_a) {
                let out = p2.a.step(StepInput::inbound(msg)).unwrap();
                p2.to_b.extend(out.outbound);
            }
        }
        panic!("responder never reached the check stage");
    }
}
