//! User-agent policies: scripted stand-ins for the human in the loop.
//!
//! The context is shared between the two victim devices because it models
//! one person holding both: an honest user compares the six-digit values
//! shown on the two screens and faithfully carries a displayed passkey
//! from one device to the other. Careless variants confirm without
//! looking, which is what the downgrade attack relies on.

use std::collections::BTreeMap;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::pairing::{UserDecision, UserPromptRequest};
use crate::{Address, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UserAgentPolicy {
    /// Confirms iff the values displayed on both devices match; carries
    /// passkeys faithfully.
    HonestComparing,
    /// Confirms everything immediately without comparing.
    AlwaysAccept,
    /// Rejects every confirmation; types a wrong passkey.
    AlwaysReject,
    /// Same honest behaviour with the emphasis on passkey transfer.
    HonestPasskeyTransfer,
    /// Confirms with the given probability, without comparing.
    Inattentive { accept_probability: f64 },
}

impl UserAgentPolicy {
    fn compares_honestly(&self) -> bool {
        matches!(
            self,
            UserAgentPolicy::HonestComparing | UserAgentPolicy::HonestPasskeyTransfer
        )
    }
}

/// The shared human: collects prompts from both victim devices and
/// produces decisions according to each device's policy.
pub struct UserContext {
    addr_a: Address,
    policy_a: UserAgentPolicy,
    addr_b: Address,
    policy_b: UserAgentPolicy,
    rng: SimRng,
    /// Last comparison value shown per device.
    shown_values: BTreeMap<Address, u32>,
    /// Last passkey displayed per device.
    shown_passkeys: BTreeMap<Address, u32>,
    pending_compare: BTreeMap<Address, u32>,
    pending_passkey: BTreeMap<Address, ()>,
}

impl UserContext {
    pub fn new(
        addr_a: Address,
        policy_a: UserAgentPolicy,
        addr_b: Address,
        policy_b: UserAgentPolicy,
        rng: SimRng,
    ) -> Self {
        UserContext {
            addr_a,
            policy_a,
            addr_b,
            policy_b,
            rng,
            shown_values: BTreeMap::new(),
            shown_passkeys: BTreeMap::new(),
            pending_compare: BTreeMap::new(),
            pending_passkey: BTreeMap::new(),
        }
    }

    fn policy_for(&self, device: Address) -> UserAgentPolicy {
        if device == self.addr_a {
            self.policy_a
        } else {
            self.policy_b
        }
    }

    fn other(&self, device: Address) -> Address {
        if device == self.addr_a {
            self.addr_b
        } else {
            self.addr_a
        }
    }

    pub fn observe_prompt(&mut self, device: Address, prompt: UserPromptRequest) {
        match prompt {
            UserPromptRequest::CompareValues { value } => {
                self.shown_values.insert(device, value);
                self.pending_compare.insert(device, value);
            }
            UserPromptRequest::EnterPasskey => {
                self.pending_passkey.insert(device, ());
            }
            UserPromptRequest::DisplayPasskey { passkey } => {
                self.shown_passkeys.insert(device, passkey);
            }
        }
    }

    /// Resolves whatever prompts can be answered now. Honest comparison
    /// waits until both devices have shown their values; honest passkey
    /// transfer waits until some device has displayed one.
    pub fn decide(&mut self) -> Vec<(Address, UserDecision)> {
        let mut decisions = Vec::new();

        let compares: Vec<(Address, u32)> = self
            .pending_compare
            .iter()
            .map(|(&d, &v)| (d, v))
            .collect();
        for (device, value) in compares {
            let policy = self.policy_for(device);
            let decision = match policy {
                UserAgentPolicy::AlwaysAccept => Some(UserDecision::Confirm(true)),
                UserAgentPolicy::AlwaysReject => Some(UserDecision::Confirm(false)),
                UserAgentPolicy::Inattentive { accept_probability } => {
                    let draw = f64::from(self.rng.next_u32()) / f64::from(u32::MAX);
                    Some(UserDecision::Confirm(draw < accept_probability))
                }
                _ if policy.compares_honestly() => self
                    .shown_values
                    .get(&self.other(device))
                    .map(|&peer_value| UserDecision::Confirm(peer_value == value)),
                _ => None,
            };
            if let Some(decision) = decision {
                self.pending_compare.remove(&device);
                decisions.push((device, decision));
            }
        }

        let entries: Vec<Address> = self.pending_passkey.keys().copied().collect();
        for device in entries {
            let shown = self.shown_passkeys.get(&self.other(device)).copied();
            let policy = self.policy_for(device);
            let decision = match (policy, shown) {
                (UserAgentPolicy::AlwaysReject, shown) => Some(UserDecision::PasskeyInput(
                    shown.map_or(0, |p| (p + 1) % 1_000_000),
                )),
                (_, Some(passkey)) => Some(UserDecision::PasskeyInput(passkey)),
                (_, None) => None,
            };
            if let Some(decision) = decision {
                self.pending_passkey.remove(&device);
                decisions.push((device, decision));
            }
        }

        decisions
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    fn ctx(policy_a: UserAgentPolicy, policy_b: UserAgentPolicy) -> UserContext {
        UserContext::new(
            Address::new(1),
            policy_a,
            Address::new(2),
            policy_b,
            SimRng::seed_from_u64(0),
        )
    }

    #[test]
    fn honest_user_waits_for_both_values_then_compares() {
        let mut user = ctx(
            UserAgentPolicy::HonestComparing,
            UserAgentPolicy::HonestComparing,
        );
        user.observe_prompt(
            Address::new(1),
            UserPromptRequest::CompareValues { value: 123 },
        );
        assert!(user.decide().is_empty(), "one value is not comparable");
        user.observe_prompt(
            Address::new(2),
            UserPromptRequest::CompareValues { value: 123 },
        );
        let decisions = user.decide();
        assert_eq!(decisions.len(), 2);
        assert!(decisions
            .iter()
            .all(|(_, d)| *d == UserDecision::Confirm(true)));
    }

    #[test]
    fn honest_user_rejects_differing_values() {
        let mut user = ctx(
            UserAgentPolicy::HonestComparing,
            UserAgentPolicy::HonestComparing,
        );
        user.observe_prompt(
            Address::new(1),
            UserPromptRequest::CompareValues { value: 111_111 },
        );
        user.observe_prompt(
            Address::new(2),
            UserPromptRequest::CompareValues { value: 222_222 },
        );
        let decisions = user.decide();
        assert_eq!(decisions.len(), 2);
        assert!(decisions
            .iter()
            .all(|(_, d)| *d == UserDecision::Confirm(false)));
    }

    #[test]
    fn careless_user_confirms_without_peer_value() {
        let mut user = ctx(
            UserAgentPolicy::AlwaysAccept,
            UserAgentPolicy::AlwaysAccept,
        );
        user.observe_prompt(
            Address::new(1),
            UserPromptRequest::CompareValues { value: 1 },
        );
        assert_eq!(
            user.decide(),
            vec![(Address::new(1), UserDecision::Confirm(true))]
        );
    }

    #[test]
    fn passkey_is_carried_from_the_peer_display() {
        let mut user = ctx(
            UserAgentPolicy::HonestPasskeyTransfer,
            UserAgentPolicy::HonestPasskeyTransfer,
        );
        user.observe_prompt(Address::new(1), UserPromptRequest::EnterPasskey);
        assert!(user.decide().is_empty(), "nothing displayed yet");
        user.observe_prompt(
            Address::new(2),
            UserPromptRequest::DisplayPasskey { passkey: 42 },
        );
        assert_eq!(
            user.decide(),
            vec![(Address::new(1), UserDecision::PasskeyInput(42))]
        );
    }

    #[test]
    fn rejecting_user_types_a_wrong_passkey() {
        let mut user = ctx(
            UserAgentPolicy::AlwaysReject,
            UserAgentPolicy::HonestComparing,
        );
        user.observe_prompt(
            Address::new(2),
            UserPromptRequest::DisplayPasskey { passkey: 42 },
        );
        user.observe_prompt(Address::new(1), UserPromptRequest::EnterPasskey);
        assert_eq!(
            user.decide(),
            vec![(Address::new(1), UserDecision::PasskeyInput(43))]
        );
    }
}
