//! Scenario file loading.
//!
//! Scenarios are TOML with `[device.a]`, `[device.b]`, optional
//! `[attacker]`, `[oob]` and `[run]` sections — line-oriented key = value
//! pairs, diff-friendly and hand-writable:
//!
//! ```toml
//! [device.a]
//! io = "display-yes-no"
//!
//! [device.b]
//! io = "no-input-no-output"
//!
//! [attacker]
//! spoofed_io = "no-input-no-output"
//!
//! [run]
//! seed = 7
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;

use crate::attacker::AttackerConfig;
use crate::oob::{FrequencySchedule, OobChannelConfig};
use crate::pairing::{DeviceConfig, IoCapability, SecurityPolicy};
use crate::scenario::{DeviceSpec, ScenarioError, ScenarioSpec, UserAgentPolicy};
use crate::Address;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    device: DevicesSection,
    attacker: Option<AttackerSection>,
    #[serde(default)]
    oob: OobSection,
    #[serde(default)]
    run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DevicesSection {
    a: DeviceSection,
    b: DeviceSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceSection {
    address: Option<Address>,
    io: IoCapability,
    #[serde(default)]
    oob_available: bool,
    #[serde(default = "default_true")]
    allow_just_works: bool,
    #[serde(default)]
    require_oob: bool,
    #[serde(default)]
    require_mitm_protection: bool,
    #[serde(default = "default_agent")]
    user_agent: String,
    #[serde(default = "default_accept_probability")]
    inattentive_accept_probability: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttackerSection {
    address: Option<Address>,
    #[serde(default = "default_true")]
    jam: bool,
    #[serde(default = "default_true")]
    impersonate: bool,
    #[serde(default = "default_true")]
    relay: bool,
    spoofed_io: Option<IoCapability>,
    #[serde(default = "default_true")]
    knows_hop_seed: bool,
    #[serde(default)]
    oob_read: bool,
    #[serde(default)]
    oob_modify: bool,
    #[serde(default = "default_known_freqs")]
    known_oob_freqs: Vec<u16>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OobSection {
    #[serde(default)]
    attacker_can_read: bool,
    #[serde(default)]
    attacker_can_modify: bool,
    /// "fixed" (default) or "varying".
    mode: Option<String>,
    freq_id: Option<u16>,
    seed: Option<u64>,
    #[serde(default)]
    session_counter: u32,
}

impl OobSection {
    fn schedule(&self) -> Result<FrequencySchedule, ScenarioError> {
        match self.mode.as_deref() {
            None | Some("fixed") => Ok(FrequencySchedule::Fixed {
                freq_id: self.freq_id.unwrap_or(0),
            }),
            Some("varying") => Ok(FrequencySchedule::Varying {
                seed: self.seed.unwrap_or(0),
            }),
            Some(other) => Err(ScenarioError::InvalidSpec(format!(
                "unknown oob mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_max_slots")]
    max_slots: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: default_seed(),
            max_slots: default_max_slots(),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_agent() -> String {
    "honest-comparing".into()
}

fn default_accept_probability() -> f64 {
    0.5
}

fn default_known_freqs() -> Vec<u16> {
    vec![0]
}

fn default_seed() -> u64 {
    1
}

fn default_max_slots() -> u64 {
    ScenarioSpec::DEFAULT_MAX_SLOTS
}

fn parse_agent(name: &str, accept_probability: f64) -> Result<UserAgentPolicy, ScenarioError> {
    match name {
        "honest-comparing" => Ok(UserAgentPolicy::HonestComparing),
        "always-accept" => Ok(UserAgentPolicy::AlwaysAccept),
        "always-reject" => Ok(UserAgentPolicy::AlwaysReject),
        "honest-passkey-transfer" => Ok(UserAgentPolicy::HonestPasskeyTransfer),
        "inattentive" => Ok(UserAgentPolicy::Inattentive { accept_probability }),
        other => Err(ScenarioError::InvalidSpec(format!(
            "unknown user agent {other:?}"
        ))),
    }
}

fn device_spec(section: &DeviceSection, default_address: u64) -> Result<DeviceSpec, ScenarioError> {
    let config = DeviceConfig {
        address: section.address.unwrap_or(Address::new(default_address)),
        io: section.io,
        oob_available: section.oob_available,
        policy: SecurityPolicy {
            allow_just_works: section.allow_just_works,
            require_oob: section.require_oob,
            require_mitm_protection: section.require_mitm_protection,
        },
    };
    Ok(DeviceSpec {
        config,
        user_agent: parse_agent(&section.user_agent, section.inattentive_accept_probability)?,
    })
}

/// Parses scenario TOML text into a runnable spec.
pub fn parse_scenario(text: &str, seed_override: Option<u64>) -> Result<ScenarioSpec, ScenarioError> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| ScenarioError::InvalidSpec(e.to_string()))?;

    let device_a = device_spec(&file.device.a, 0xAA_AA_AA_AA_AA_01)?;
    let device_b = device_spec(&file.device.b, 0xBB_BB_BB_BB_BB_02)?;

    let attacker = file.attacker.as_ref().map(|section| AttackerConfig {
        address: section
            .address
            .unwrap_or(Address::new(AttackerConfig::DEFAULT_ADDRESS)),
        can_jam: section.jam,
        can_impersonate: section.impersonate,
        can_relay: section.relay,
        spoofed_io: section.spoofed_io,
        knows_hop_seed: section.knows_hop_seed,
        oob_read: section.oob_read,
        oob_modify: section.oob_modify,
        known_oob_freqs: section.known_oob_freqs.iter().copied().collect::<BTreeSet<_>>(),
        tamper_payload: None,
    });

    let oob_config = OobChannelConfig {
        attacker_can_read: file.oob.attacker_can_read,
        attacker_can_modify: file.oob.attacker_can_modify,
        frequency_schedule: file.oob.schedule()?,
    };

    Ok(ScenarioSpec {
        device_a,
        device_b,
        attacker,
        oob_config,
        oob_session_counter: file.oob.session_counter,
        seed: seed_override.unwrap_or(file.run.seed),
        max_slots: file.run.max_slots,
    })
}

/// Loads a scenario from disk.
pub fn load_scenario(
    path: &Path,
    seed_override: Option<u64>,
) -> Result<ScenarioSpec, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::InvalidSpec(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text, seed_override)
}
