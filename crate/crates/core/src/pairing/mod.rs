//! Per-device Secure Simple Pairing: association-model selection and the
//! protocol state machine.
//!
//! Model selection follows the IO-capability rules: Out of Band wins
//! whenever both sides have OOB data, Numeric Comparison needs a display
//! plus confirm input on both sides, Passkey Entry pairs an input-only
//! device with a display-capable one, and everything else falls back to
//! Just Works — the model with no MITM protection. Security policies can
//! veto the fallback.

pub mod message;
pub mod session;

use serde::{Deserialize, Serialize};

use crate::Address;

pub use session::{
    PairingError, PairingSession, SessionEvent, SessionState, StepInput, StepOutput,
};

/// Input/output capabilities a device announces during pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IoCapability {
    DisplayOnly,
    DisplayYesNo,
    KeyboardOnly,
    NoInputNoOutput,
    KeyboardDisplay,
}

impl IoCapability {
    pub const ALL: [IoCapability; 5] = [
        IoCapability::DisplayOnly,
        IoCapability::DisplayYesNo,
        IoCapability::KeyboardOnly,
        IoCapability::NoInputNoOutput,
        IoCapability::KeyboardDisplay,
    ];

    pub fn as_byte(self) -> u8 {
        match self {
            IoCapability::DisplayOnly => 0x00,
            IoCapability::DisplayYesNo => 0x01,
            IoCapability::KeyboardOnly => 0x02,
            IoCapability::NoInputNoOutput => 0x03,
            IoCapability::KeyboardDisplay => 0x04,
        }
    }

    pub fn from_byte(byte: u8) -> Option<Self> {
        match byte {
            0x00 => Some(IoCapability::DisplayOnly),
            0x01 => Some(IoCapability::DisplayYesNo),
            0x02 => Some(IoCapability::KeyboardOnly),
            0x03 => Some(IoCapability::NoInputNoOutput),
            0x04 => Some(IoCapability::KeyboardDisplay),
            _ => None,
        }
    }

    /// Can show a six-digit number.
    fn has_display(self) -> bool {
        matches!(
            self,
            IoCapability::DisplayOnly | IoCapability::DisplayYesNo | IoCapability::KeyboardDisplay
        )
    }

    /// Can show a six-digit number *and* take a yes/no confirmation.
    fn can_display_and_confirm(self) -> bool {
        matches!(
            self,
            IoCapability::DisplayYesNo | IoCapability::KeyboardDisplay
        )
    }
}

/// The user-interaction variant of Authentication Stage 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssociationModel {
    NumericComparison,
    JustWorks,
    OutOfBand,
    PasskeyEntry,
}

impl std::fmt::Display for AssociationModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            AssociationModel::NumericComparison => "NumericComparison",
            AssociationModel::JustWorks => "JustWorks",
            AssociationModel::OutOfBand => "OutOfBand",
            AssociationModel::PasskeyEntry => "PasskeyEntry",
        };
        write!(f, "{name}")
    }
}

/// Local security policy knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SecurityPolicy {
    /// Permit the Just Works fallback. Disabling this removes the one
    /// model with no MITM protection.
    pub allow_just_works: bool,
    /// Abort pairing unless both sides can run the OOB model.
    pub require_oob: bool,
    /// Reject any selection that provides no MITM protection.
    pub require_mitm_protection: bool,
}

impl Default for SecurityPolicy {
    fn default() -> Self {
        SecurityPolicy {
            allow_just_works: true,
            require_oob: false,
            require_mitm_protection: false,
        }
    }
}

/// Why a policy vetoed the selected model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PolicyRejectReason {
    OobRequired,
    JustWorksDisabled,
    MitmProtectionRequired,
}

impl std::fmt::Display for PolicyRejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            PolicyRejectReason::OobRequired => "oob_required",
            PolicyRejectReason::JustWorksDisabled => "just_works_disabled",
            PolicyRejectReason::MitmProtectionRequired => "mitm_protection_required",
        };
        write!(f, "{name}")
    }
}

/// Static identity and capability description of one device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceConfig {
    pub address: Address,
    pub io: IoCapability,
    pub oob_available: bool,
    pub policy: SecurityPolicy,
}

impl DeviceConfig {
    pub fn new(address: Address, io: IoCapability) -> Self {
        DeviceConfig {
            address,
            io,
            oob_available: false,
            policy: SecurityPolicy::default(),
        }
    }
}

/// Selects the association model from both devices' capabilities, then
/// applies the local policy. Symmetric in its two devices.
pub fn select_association_model(
    io_a: IoCapability,
    io_b: IoCapability,
    oob_a: bool,
    oob_b: bool,
    policy: &SecurityPolicy,
) -> Result<AssociationModel, PolicyRejectReason> {
    let model = if oob_a && oob_b {
        AssociationModel::OutOfBand
    } else if io_a.can_display_and_confirm() && io_b.can_display_and_confirm() {
        AssociationModel::NumericComparison
    } else if (io_a == IoCapability::KeyboardOnly && io_b.has_display())
        || (io_b == IoCapability::KeyboardOnly && io_a.has_display())
    {
        AssociationModel::PasskeyEntry
    } else {
        AssociationModel::JustWorks
    };

    if policy.require_oob && model != AssociationModel::OutOfBand {
        return Err(PolicyRejectReason::OobRequired);
    }
    if model == AssociationModel::JustWorks {
        if !policy.allow_just_works {
            return Err(PolicyRejectReason::JustWorksDisabled);
        }
        if policy.require_mitm_protection {
            return Err(PolicyRejectReason::MitmProtectionRequired);
        }
    }
    Ok(model)
}

/// Which end initiated the pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Role {
    Initiator,
    Responder,
}

/// Terminal cause carried in abort messages and transcripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AbortReason {
    /// Stage-1 commitment verification failed.
    CommitmentMismatch,
    /// Stage-2 check value verification failed.
    CheckValueMismatch,
    /// The user answered "no".
    UserRejected,
    /// Out-of-order or malformed protocol message.
    ProtocolViolation,
    /// OOB model selected but no OOB payload available.
    MissingOob,
    /// Local security policy vetoed the selected model.
    PolicyRejected,
    /// Link went silent past the timeout.
    LinkLoss,
    /// The peer sent an abort.
    PeerAborted,
}

impl AbortReason {
    pub fn wire_code(self) -> u8 {
        match self {
            AbortReason::PeerAborted => 0,
            AbortReason::CommitmentMismatch => 1,
            AbortReason::CheckValueMismatch => 2,
            AbortReason::UserRejected => 3,
            AbortReason::ProtocolViolation => 4,
            AbortReason::MissingOob => 5,
            AbortReason::PolicyRejected => 6,
            AbortReason::LinkLoss => 7,
        }
    }

    pub fn from_wire_code(code: u8) -> Self {
        match code {
            1 => AbortReason::CommitmentMismatch,
            2 => AbortReason::CheckValueMismatch,
            3 => AbortReason::UserRejected,
            4 => AbortReason::ProtocolViolation,
            5 => AbortReason::MissingOob,
            6 => AbortReason::PolicyRejected,
            7 => AbortReason::LinkLoss,
            _ => AbortReason::PeerAborted,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AbortReason::CommitmentMismatch => "commitment_mismatch",
            AbortReason::CheckValueMismatch => "check_value_mismatch",
            AbortReason::UserRejected => "user_rejected",
            AbortReason::ProtocolViolation => "protocol_violation",
            AbortReason::MissingOob => "missing_oob",
            AbortReason::PolicyRejected => "policy_rejected",
            AbortReason::LinkLoss => "link_loss",
            AbortReason::PeerAborted => "peer_aborted",
        }
    }
}

/// A question the protocol asks the user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UserPromptRequest {
    /// Both devices display a six-digit value; the user confirms whether
    /// they match. Blocks the session until answered.
    CompareValues { value: u32 },
    /// Input-only device asks for the passkey shown on the peer. Blocks.
    EnterPasskey,
    /// Display-capable device shows the generated passkey. Informational.
    DisplayPasskey { passkey: u32 },
}

/// Answer supplied by a user-agent policy, never by a live human.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UserDecision {
    Confirm(bool),
    PasskeyInput(u32),
    NoInteraction,
}

#[cfg(test)]
mod tests {
    use super::*;
    use IoCapability::*;

    fn select_open(
        io_a: IoCapability,
        io_b: IoCapability,
        oob: bool,
    ) -> Result<AssociationModel, PolicyRejectReason> {
        select_association_model(io_a, io_b, oob, oob, &SecurityPolicy::default())
    }

    #[test]
    fn both_rich_displays_select_numeric_comparison() {
        assert_eq!(
            select_open(DisplayYesNo, DisplayYesNo, false),
            Ok(AssociationModel::NumericComparison)
        );
    }

    #[test]
    fn headset_class_device_falls_back_to_just_works() {
        assert_eq!(
            select_open(NoInputNoOutput, DisplayYesNo, false),
            Ok(AssociationModel::JustWorks)
        );
    }

    #[test]
    fn keyboard_plus_display_selects_passkey_entry() {
        assert_eq!(
            select_open(KeyboardOnly, DisplayOnly, false),
            Ok(AssociationModel::PasskeyEntry)
        );
    }

    #[test]
    fn oob_takes_precedence_over_everything() {
        for io_a in IoCapability::ALL {
            for io_b in IoCapability::ALL {
                let policy = SecurityPolicy {
                    require_oob: true,
                    ..SecurityPolicy::default()
                };
                assert_eq!(
                    select_association_model(io_a, io_b, true, true, &policy),
                    Ok(AssociationModel::OutOfBand)
                );
            }
        }
    }

    #[test]
    fn one_sided_oob_is_not_enough() {
        assert_eq!(
            select_association_model(
                DisplayYesNo,
                DisplayYesNo,
                true,
                false,
                &SecurityPolicy::default()
            ),
            Ok(AssociationModel::NumericComparison)
        );
    }

    #[test]
    fn policy_can_disable_just_works() {
        let policy = SecurityPolicy {
            allow_just_works: false,
            ..SecurityPolicy::default()
        };
        assert_eq!(
            select_association_model(NoInputNoOutput, NoInputNoOutput, false, false, &policy),
            Err(PolicyRejectReason::JustWorksDisabled)
        );
    }

    #[test]
    fn require_oob_rejects_in_band_only_pairing() {
        let policy = SecurityPolicy {
            require_oob: true,
            ..SecurityPolicy::default()
        };
        assert_eq!(
            select_association_model(DisplayYesNo, DisplayYesNo, false, false, &policy),
            Err(PolicyRejectReason::OobRequired)
        );
    }

    #[test]
    fn mitm_protection_policy_rejects_just_works_only() {
        let policy = SecurityPolicy {
            require_mitm_protection: true,
            ..SecurityPolicy::default()
        };
        assert_eq!(
            select_association_model(NoInputNoOutput, DisplayYesNo, false, false, &policy),
            Err(PolicyRejectReason::MitmProtectionRequired)
        );
        assert_eq!(
            select_association_model(DisplayYesNo, DisplayYesNo, false, false, &policy),
            Ok(AssociationModel::NumericComparison)
        );
    }

    #[test]
    fn selection_is_symmetric_for_all_pairs() {
        let policy = SecurityPolicy::default();
        for io_a in IoCapability::ALL {
            for io_b in IoCapability::ALL {
                for (oob_a, oob_b) in [(false, false), (false, true), (true, false), (true, true)] {
                    assert_eq!(
                        select_association_model(io_a, io_b, oob_a, oob_b, &policy),
                        select_association_model(io_b, io_a, oob_b, oob_a, &policy),
                        "asymmetry for {io_a:?}/{io_b:?} oob={oob_a}/{oob_b}"
                    );
                }
            }
        }
    }

    #[test]
    fn abort_reason_wire_codes_roundtrip() {
        for code in 0..=7 {
            let reason = AbortReason::from_wire_code(code);
            assert_eq!(reason.wire_code(), code);
        }
    }
}
