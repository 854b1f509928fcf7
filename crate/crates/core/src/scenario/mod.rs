//! Declarative scenario execution and outcome classification.
//!
//! A `ScenarioSpec` plus a 64-bit seed fully determines a run: device
//! capabilities and policies, optional attacker, OOB channel knobs, and
//! the slot budget. The harness advances the radio world in lock step,
//! shuttles prompts to the shared user agent, and classifies the finished
//! transcript into exactly one outcome.

pub mod device;
pub mod file;
pub mod matrix;
pub mod report;
pub mod user;

use rand_chacha::rand_core::SeedableRng;
use serde::Serialize;

use crate::attacker::{AttackerEvent, AttackerOutcome, InterceptRecord, MitmAttacker};
use crate::crypto;
use crate::oob::{exchange_oob, OobChannelConfig, OobEndpoint};
use crate::pairing::{AbortReason, AssociationModel, DeviceConfig};
use crate::radio::{DeliveryEvent, DeliveryOutcome, HopSequence, ListenMode, Piconet};
use crate::{mix64, Address, SimRng};

pub use crate::attacker::AttackerConfig;
pub use device::{DeviceDriver, DeviceEvent};
pub use user::{UserAgentPolicy, UserContext};

/// One device's part in a scenario.
#[derive(Debug, Clone, Copy)]
pub struct DeviceSpec {
    pub config: DeviceConfig,
    pub user_agent: UserAgentPolicy,
}

/// Complete, deterministic experiment description.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub device_a: DeviceSpec,
    pub device_b: DeviceSpec,
    pub attacker: Option<AttackerConfig>,
    pub oob_config: OobChannelConfig,
    /// Session counter fed into the OOB frequency schedule.
    pub oob_session_counter: u32,
    pub seed: u64,
    pub max_slots: u64,
}

impl ScenarioSpec {
    pub const DEFAULT_MAX_SLOTS: u64 = 10_000;

    /// Two honest devices with the given capabilities, honest users, no
    /// attacker.
    pub fn honest(
        io_a: crate::pairing::IoCapability,
        io_b: crate::pairing::IoCapability,
        oob: bool,
        seed: u64,
    ) -> Self {
        let mut config_a = DeviceConfig::new(Address::new(0xAA_AA_AA_AA_AA_01), io_a);
        let mut config_b = DeviceConfig::new(Address::new(0xBB_BB_BB_BB_BB_02), io_b);
        config_a.oob_available = oob;
        config_b.oob_available = oob;
        ScenarioSpec {
            device_a: DeviceSpec {
                config: config_a,
                user_agent: UserAgentPolicy::HonestComparing,
            },
            device_b: DeviceSpec {
                config: config_b,
                user_agent: UserAgentPolicy::HonestComparing,
            },
            attacker: None,
            oob_config: OobChannelConfig::default(),
            oob_session_counter: 0,
            seed,
            max_slots: Self::DEFAULT_MAX_SLOTS,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_attacker(mut self, attacker: AttackerConfig) -> Self {
        self.attacker = Some(attacker);
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("io failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

/// Classified result of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    SecurePaired,
    AttackSucceeded,
    AttackDetected,
    PolicyBlocked,
    Inconclusive,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::SecurePaired => "secure_paired",
            Outcome::AttackSucceeded => "attack_succeeded",
            Outcome::AttackDetected => "attack_detected",
            Outcome::PolicyBlocked => "policy_blocked",
            Outcome::Inconclusive => "inconclusive",
        }
    }
}

/// One transcript entry; rendering is canonical and byte-stable.
#[derive(Debug, Clone, Serialize)]
pub struct TranscriptEvent {
    pub slot: u64,
    pub entry: EventKind,
}

#[derive(Debug, Clone, Serialize)]
pub enum EventKind {
    OobExchange {
        freq_id: u16,
        attacker_read: bool,
        attacker_modified: bool,
    },
    Device {
        device: Address,
        event: DeviceEvent,
    },
    Attacker(AttackerEvent),
    Radio(DeliveryEvent),
}

impl TranscriptEvent {
    pub fn render(&self) -> String {
        let body = match &self.entry {
            EventKind::OobExchange {
                freq_id,
                attacker_read,
                attacker_modified,
            } => format!(
                "oob exchange freq={freq_id} read={attacker_read} modified={attacker_modified}"
            ),
            EventKind::Device { device, event } => format!("device {device} {event:?}"),
            EventKind::Attacker(event) => format!("attacker {event:?}"),
            EventKind::Radio(event) => format!("radio {}", event.export_line()),
        };
        format!("[{:05}] {body}", self.slot)
    }
}

/// Everything a finished run reports.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult {
    pub outcome: Outcome,
    pub abort_reason: Option<AbortReason>,
    pub link_keys_match: bool,
    pub relay_verified: bool,
    pub attacker_keys_captured: usize,
    pub model: Option<AssociationModel>,
    pub slots_used: u64,
    pub seed: u64,
    pub attacker_outcome: Option<AttackerOutcome>,
    pub intercept_log: Vec<InterceptRecord>,
    pub transcript: Vec<TranscriptEvent>,
}

impl ScenarioResult {
    /// Canonical line-per-event transcript serialization; byte-identical
    /// across repeated runs of the same spec.
    pub fn transcript_text(&self) -> String {
        let mut out = String::new();
        for event in &self.transcript {
            out.push_str(&event.render());
            out.push('\n');
        }
        out
    }
}

/// Mechanical classification inputs; see [`classify_outcome`].
#[derive(Debug, Clone, Copy)]
pub struct ClassificationInputs {
    pub has_attacker: bool,
    pub policy_rejected: bool,
    pub detected_reason: Option<AbortReason>,
    pub keys_captured: usize,
    pub relay_verified: bool,
    pub both_encrypted: bool,
    pub link_keys_equal: bool,
    pub attacker_frame_delivered: bool,
    pub first_abort: Option<AbortReason>,
}

/// Fixed-precedence outcome classification:
/// PolicyBlocked > AttackDetected > AttackSucceeded > SecurePaired >
/// Inconclusive. Policy enforcement masks downstream noise, and a success
/// claim requires the full evidence chain (both keys plus a verified
/// relay round-trip).
pub fn classify_outcome(inputs: &ClassificationInputs) -> (Outcome, Option<AbortReason>) {
    if inputs.policy_rejected {
        return (Outcome::PolicyBlocked, Some(AbortReason::PolicyRejected));
    }
    if inputs.has_attacker {
        if let Some(reason) = inputs.detected_reason {
            return (Outcome::AttackDetected, Some(reason));
        }
        if inputs.keys_captured == 2 && inputs.relay_verified {
            return (Outcome::AttackSucceeded, None);
        }
    }
    if inputs.both_encrypted && inputs.link_keys_equal && !inputs.attacker_frame_delivered {
        return (Outcome::SecurePaired, None);
    }
    (Outcome::Inconclusive, inputs.first_abort)
}

fn sub_rng(seed: u64, tag: u64) -> SimRng {
    SimRng::seed_from_u64(mix64(seed ^ tag))
}

fn app_payload_for(addr: Address) -> Vec<u8> {
    format!("ping-from-{addr}").into_bytes()
}

/// Runs one scenario to completion (or slot exhaustion) and classifies
/// the outcome. Two invocations with the same spec produce byte-identical
/// transcripts.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioResult, ScenarioError> {
    let addr_a = spec.device_a.config.address;
    let addr_b = spec.device_b.config.address;
    if addr_a == addr_b {
        return Err(ScenarioError::InvalidSpec(
            "device addresses must be distinct".into(),
        ));
    }
    if let Some(attacker) = &spec.attacker {
        if attacker.address == addr_a || attacker.address == addr_b {
            return Err(ScenarioError::InvalidSpec(
                "attacker address collides with a victim".into(),
            ));
        }
    }
    if spec.max_slots == 0 {
        return Err(ScenarioError::InvalidSpec("max_slots must be > 0".into()));
    }

    let mut transcript: Vec<TranscriptEvent> = Vec::new();
    let mut net = Piconet::new();
    net.attach(addr_a, ListenMode::Scan);
    net.attach(addr_b, ListenMode::Scan);

    let mut rng_a = sub_rng(spec.seed, 0xD0A);
    let mut rng_b = sub_rng(spec.seed, 0xD0B);
    let keys_a = crypto::generate_keypair(&mut rng_a);
    let keys_b = crypto::generate_keypair(&mut rng_b);

    // the victims' own connection attempt always starts at slot 0, and
    // its hop sequence is derived from the initiator's address — which
    // the attacker is assumed to know
    let victim_seq = HopSequence::from_master(addr_a, 0);

    let mut attacker = spec.attacker.clone().map(|cfg| {
        net.attach(cfg.address, ListenMode::Scan);
        MitmAttacker::new(
            cfg,
            spec.device_a.config,
            spec.device_b.config,
            victim_seq,
            spec.seed,
        )
    });

    let mut driver_a = DeviceDriver::new(
        spec.device_a.config,
        addr_b,
        keys_a,
        rng_a,
        Some(0),
        app_payload_for(addr_a),
    );
    let mut driver_b = DeviceDriver::new(
        spec.device_b.config,
        addr_a,
        keys_b,
        rng_b,
        None,
        app_payload_for(addr_b),
    );

    // the OOB touch happens before any radio traffic
    if spec.device_a.config.oob_available && spec.device_b.config.oob_available {
        let mut oob_rng = sub_rng(spec.seed, 0x00B);
        let endpoint_a = OobEndpoint::prepare(addr_a, true, &driver_a.public_key(), &mut oob_rng);
        let endpoint_b = OobEndpoint::prepare(addr_b, true, &driver_b.public_key(), &mut oob_rng);
        let interceptor = attacker.as_mut().map(|atk| atk.oob_interceptor());
        let exchange = exchange_oob(
            &endpoint_a,
            &endpoint_b,
            &spec.oob_config,
            spec.oob_session_counter,
            interceptor.as_ref(),
        )
        .expect("both endpoints advertise oob");
        transcript.push(TranscriptEvent {
            slot: 0,
            entry: EventKind::OobExchange {
                freq_id: exchange.freq_id,
                attacker_read: exchange.attacker_view.is_some(),
                attacker_modified: exchange.modified,
            },
        });
        driver_a.install_oob(endpoint_a.r, exchange.payload_for_a.clone());
        driver_b.install_oob(endpoint_b.r, exchange.payload_for_b.clone());
        if let Some(atk) = attacker.as_mut() {
            atk.absorb_oob_exchange(exchange.attacker_view.clone(), exchange.modified);
        }
    }

    let mut user = UserContext::new(
        addr_a,
        spec.device_a.user_agent,
        addr_b,
        spec.device_b.user_agent,
        sub_rng(spec.seed, 0x05E),
    );

    let mut slots_used = 0;
    for _ in 0..spec.max_slots {
        driver_a.on_slot_start(&mut net);
        driver_b.on_slot_start(&mut net);
        if let Some(atk) = attacker.as_mut() {
            atk.on_slot_start(&mut net);
        }

        let resolution = net.resolve_slot();
        slots_used = resolution.slot.0 + 1;
        for event in &resolution.events {
            transcript.push(TranscriptEvent {
                slot: resolution.slot.0,
                entry: EventKind::Radio(event.clone()),
            });
        }

        let mut frames_a = Vec::new();
        let mut frames_b = Vec::new();
        let mut frames_atk = Vec::new();
        let attacker_addr = attacker.as_ref().map(|a| a.address());
        for (recipient, frame) in resolution.delivered.clone() {
            if recipient == addr_a {
                frames_a.push(frame);
            } else if recipient == addr_b {
                frames_b.push(frame);
            } else if Some(recipient) == attacker_addr {
                frames_atk.push(frame);
            }
        }
        driver_a.on_frames(&mut net, frames_a);
        driver_b.on_frames(&mut net, frames_b);
        if let Some(atk) = attacker.as_mut() {
            atk.on_slot_end(&resolution, frames_atk);
        }

        for prompt in driver_a.take_prompts() {
            user.observe_prompt(addr_a, prompt);
        }
        for prompt in driver_b.take_prompts() {
            user.observe_prompt(addr_b, prompt);
        }
        for (device, decision) in user.decide() {
            if device == addr_a {
                driver_a.give_decision(&mut net, decision);
            } else {
                driver_b.give_decision(&mut net, decision);
            }
        }

        for event in driver_a.take_events() {
            transcript.push(TranscriptEvent {
                slot: resolution.slot.0,
                entry: EventKind::Device {
                    device: addr_a,
                    event,
                },
            });
        }
        for event in driver_b.take_events() {
            transcript.push(TranscriptEvent {
                slot: resolution.slot.0,
                entry: EventKind::Device {
                    device: addr_b,
                    event,
                },
            });
        }
        if let Some(atk) = attacker.as_mut() {
            for event in atk.take_events() {
                transcript.push(TranscriptEvent {
                    slot: resolution.slot.0,
                    entry: EventKind::Attacker(event),
                });
            }
        }

        let attacker_quiet = attacker.as_ref().map_or(true, |a| a.is_quiet());
        if driver_a.is_quiet() && driver_b.is_quiet() && attacker_quiet {
            break;
        }
    }

    // --- classification ---------------------------------------------
    let payload_a = app_payload_for(addr_a);
    let payload_b = app_payload_for(addr_b);
    let victim_reasons: Vec<AbortReason> = driver_a
        .abort_reasons()
        .iter()
        .chain(driver_b.abort_reasons())
        .copied()
        .collect();
    let policy_rejected = victim_reasons
        .iter()
        .any(|r| *r == AbortReason::PolicyRejected);
    let detected_reason = victim_reasons
        .iter()
        .find(|r| {
            matches!(
                r,
                AbortReason::CommitmentMismatch
                    | AbortReason::CheckValueMismatch
                    | AbortReason::UserRejected
            )
        })
        .copied();
    let first_abort = victim_reasons.first().copied();

    let (keys_captured, relays_done, intercept_log) = match &attacker {
        Some(atk) => (
            atk.captured_link_keys().len(),
            atk.relays_complete(),
            atk.intercept_log().to_vec(),
        ),
        None => (0, false, Vec::new()),
    };
    let relay_verified = relays_done
        && !intercept_log.is_empty()
        && driver_a
            .received_app_payloads()
            .iter()
            .any(|p| *p == payload_b)
        && driver_b
            .received_app_payloads()
            .iter()
            .any(|p| *p == payload_a);

    let attacker_frame_delivered = attacker.is_some()
        && transcript.iter().any(|e| match &e.entry {
            EventKind::Radio(event) => {
                Some(event.sender) == attacker.as_ref().map(|a| a.address())
                    && event.outcome == DeliveryOutcome::Delivered
            }
            _ => false,
        });

    let link_keys_equal = match (driver_a.link_key(), driver_b.link_key()) {
        (Some(ka), Some(kb)) => ka == kb,
        _ => false,
    };
    let inputs = ClassificationInputs {
        has_attacker: attacker.is_some(),
        policy_rejected,
        detected_reason,
        keys_captured,
        relay_verified,
        both_encrypted: driver_a.is_encrypted() && driver_b.is_encrypted(),
        link_keys_equal,
        attacker_frame_delivered,
        first_abort,
    };
    let (outcome, abort_reason) = classify_outcome(&inputs);

    let model = driver_a
        .models()
        .first()
        .or(driver_b.models().first())
        .copied();
    Ok(ScenarioResult {
        outcome,
        abort_reason,
        link_keys_match: link_keys_equal,
        relay_verified,
        attacker_keys_captured: keys_captured,
        model,
        slots_used,
        seed: spec.seed,
        attacker_outcome: attacker.as_ref().map(|a| a.outcome()),
        intercept_log,
        transcript,
    })
}
