//! Attack strategies for the smart-device testbed.
//!
//! This crate deliberately depends only on the protocol layer and the
//! network fabric. A strategy can forge, respond, intercept, relay, replay,
//! and observe — it has no way to read the app's or a device's internal
//! state, so a FEASIBLE outcome is always backed by bytes that actually
//! crossed the fabric.

pub mod outcome;
pub mod rogue;
pub mod strategies;

pub use outcome::{AttackOutcome, AttackResult, Loot, Reason, Scenario};
pub use rogue::{
    Capture, CapturedCreds, ForgeTemplate, ForgedId, ForgedOwner, Impersonation, LoginCapture,
    RogueConfig, RogueDevice, RogueState,
};
pub use strategies::{
    conclude, conclude_witness, deploy_as1, deploy_as2, deploy_as3, deploy_as4, deploy_as5,
    deploy_as6, deploy_downgrade_probe, poison_step, replay_step, wrong_discovery_secret,
    As1Config, As2Config, As3Config, As4Config, As5Config, As6Config, DeployedAttack, FirmwareCtx,
    Gate, ProbeConfig, WitnessKind, WitnessOutcome,
};
