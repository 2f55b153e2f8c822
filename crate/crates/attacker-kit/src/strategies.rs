//! Scripted attack strategies and their outcome classification.
//!
//! Each strategy deploys the rogue endpoint in a scenario-specific shape,
//! optionally runs active steps (path poisoning, replay injection) between
//! victim actions, and concludes by classifying only what the attacker
//! actually observed on the fabric. Firmware generation is experiment
//! metadata — the operator knows which build is under test — but loot is
//! never anything other than decoded traffic.

use std::cell::RefCell;
use std::rc::Rc;

use serde::Serialize;

use netsim_fabric::{Fabric, Net, NodeId, SecurityClass};

use crate::outcome::{AttackOutcome, AttackResult, Loot, Reason, Scenario};
use crate::rogue::{
    ForgeTemplate, ForgedId, ForgedOwner, Impersonation, RogueConfig, RogueDevice, RogueState,
};

/// Which firmware generation the experiment targets. Public context, like
/// the device model; not an oracle into victim state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FirmwareCtx {
    Vulnerable,
    Fixed,
}

#[derive(Debug, Clone, Serialize)]
pub struct As1Config {
    pub impersonation: Impersonation,
    /// The discovery secret this attacker holds; the hardcoded constant
    /// unless a mutation strips it.
    #[serde(skip)]
    pub secret: proto_core::DiscoverySecret,
}

impl As1Config {
    pub fn new(impersonation: Impersonation) -> Self {
        As1Config { impersonation, secret: proto_core::DiscoverySecret::hardcoded() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct As2Config {
    pub impersonation: Impersonation,
    /// The victim's owner id, a scenario input the attacker must already
    /// hold for this scenario (and for no other).
    pub victim_owner_id: String,
    #[serde(skip)]
    pub secret: proto_core::DiscoverySecret,
}

impl As2Config {
    pub fn new(impersonation: Impersonation, victim_owner_id: impl Into<String>) -> Self {
        As2Config {
            impersonation,
            victim_owner_id: victim_owner_id.into(),
            secret: proto_core::DiscoverySecret::hardcoded(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct As3Config {}

#[derive(Debug, Clone, Serialize)]
pub struct As4Config {}

#[derive(Debug, Clone, Serialize)]
pub struct As5Config {}

/// Unlike [`As2Config`] there is no owner-id field here: the strategy
/// cannot receive one.
#[derive(Debug, Clone, Serialize)]
pub struct As6Config {
    pub impersonation: Impersonation,
    #[serde(skip)]
    pub secret: proto_core::DiscoverySecret,
}

impl As6Config {
    pub fn new(impersonation: Impersonation) -> Self {
        As6Config { impersonation, secret: proto_core::DiscoverySecret::hardcoded() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeConfig {
    pub impersonation: Impersonation,
    #[serde(skip)]
    pub secret: proto_core::DiscoverySecret,
}

impl ProbeConfig {
    pub fn new(impersonation: Impersonation) -> Self {
        ProbeConfig { impersonation, secret: proto_core::DiscoverySecret::hardcoded() }
    }
}

/// A strategy wired into the fabric, ready for the victim to act.
pub struct DeployedAttack {
    pub scenario: Scenario,
    pub firmware: FirmwareCtx,
    pub node: NodeId,
    pub state: Rc<RefCell<RogueState>>,
}

fn deploy(
    fabric: &mut Fabric,
    attacker: NodeId,
    scenario: Scenario,
    firmware: FirmwareCtx,
    cfg: RogueConfig,
    seed: u64,
) -> DeployedAttack {
    fabric.net.set_promiscuous(attacker, true);
    let (rogue, state) = RogueDevice::new(attacker, cfg, seed);
    fabric.install_endpoint(attacker, Box::new(rogue));
    DeployedAttack { scenario, firmware, node: attacker, state }
}

/// AS1: forge discovery replies for an unconfigured device of the target
/// model and count how the app acts on them.
pub fn deploy_as1(
    fabric: &mut Fabric,
    attacker: NodeId,
    cfg: As1Config,
    firmware: FirmwareCtx,
    seed: u64,
) -> DeployedAttack {
    deploy(
        fabric,
        attacker,
        Scenario::As1FakeDiscovery,
        firmware,
        RogueConfig {
            secret: cfg.secret,
            forge: Some(ForgeTemplate {
                impersonation: cfg.impersonation,
                factory_default: true,
                owner: ForgedOwner::RandomHex,
                device_id: ForgedId::RandomHex,
            }),
            ..Default::default()
        },
        seed,
    )
}

/// AS2: impersonate the victim's own configured device (this needs the
/// owner id) and harvest the login that follows.
pub fn deploy_as2(
    fabric: &mut Fabric,
    attacker: NodeId,
    cfg: As2Config,
    firmware: FirmwareCtx,
    seed: u64,
) -> DeployedAttack {
    deploy(
        fabric,
        attacker,
        Scenario::As2AccountExfiltration,
        firmware,
        RogueConfig {
            secret: cfg.secret,
            forge: Some(ForgeTemplate {
                impersonation: cfg.impersonation,
                factory_default: false,
                owner: ForgedOwner::Known(cfg.victim_owner_id),
                device_id: ForgedId::Zeros,
            }),
            ..Default::default()
        },
        seed,
    )
}

/// AS3: no forgery — poison the path to the configured device and relay.
pub fn deploy_as3(
    fabric: &mut Fabric,
    attacker: NodeId,
    _cfg: As3Config,
    firmware: FirmwareCtx,
    seed: u64,
) -> DeployedAttack {
    deploy(
        fabric,
        attacker,
        Scenario::As3MitmConfigured,
        firmware,
        RogueConfig { relay: true, ..Default::default() },
        seed,
    )
}

/// AS4: pure eavesdropping followed by an active replay step.
pub fn deploy_as4(
    fabric: &mut Fabric,
    attacker: NodeId,
    _cfg: As4Config,
    firmware: FirmwareCtx,
    seed: u64,
) -> DeployedAttack {
    deploy(
        fabric,
        attacker,
        Scenario::As4Replay,
        firmware,
        RogueConfig { respond_key_exchange: false, ..Default::default() },
        seed,
    )
}

/// AS5: poison the setup-AP path during association and relay.
pub fn deploy_as5(
    fabric: &mut Fabric,
    attacker: NodeId,
    _cfg: As5Config,
    firmware: FirmwareCtx,
    seed: u64,
) -> DeployedAttack {
    deploy(
        fabric,
        attacker,
        Scenario::As5MitmUnconfigured,
        firmware,
        RogueConfig { relay: true, ..Default::default() },
        seed,
    )
}

/// AS6: forge an unconfigured device on the attacker's own network and
/// serve the whole association. No owner id exists anywhere in its inputs.
pub fn deploy_as6(
    fabric: &mut Fabric,
    attacker: NodeId,
    cfg: As6Config,
    firmware: FirmwareCtx,
    seed: u64,
) -> DeployedAttack {
    deploy(
        fabric,
        attacker,
        Scenario::As6UnconfiguredExfiltration,
        firmware,
        RogueConfig {
            secret: cfg.secret,
            forge: Some(ForgeTemplate {
                impersonation: cfg.impersonation,
                factory_default: true,
                owner: ForgedOwner::RandomHex,
                device_id: ForgedId::RandomHex,
            }),
            ..Default::default()
        },
        seed,
    )
}

/// Downgrade probe: forge the target model while claiming no HTTPS support.
pub fn deploy_downgrade_probe(
    fabric: &mut Fabric,
    attacker: NodeId,
    cfg: ProbeConfig,
    firmware: FirmwareCtx,
    seed: u64,
) -> DeployedAttack {
    let impersonation = Impersonation { supports_https: false, ..cfg.impersonation };
    deploy(
        fabric,
        attacker,
        Scenario::DowngradeProbe,
        firmware,
        RogueConfig {
            secret: cfg.secret,
            forge: Some(ForgeTemplate {
                impersonation,
                factory_default: true,
                owner: ForgedOwner::RandomHex,
                device_id: ForgedId::RandomHex,
            }),
            ..Default::default()
        },
        seed,
    )
}

/// A wrong discovery secret: models an attacker who never obtained the
/// hardcoded constant.
pub fn wrong_discovery_secret() -> proto_core::DiscoverySecret {
    proto_core::DiscoverySecret::custom(b"wrong!!")
}

/// Active step for AS3/AS5: poison the path from the last observed
/// broadcaster (the victim's app) to every device seen in discovery
/// traffic. Returns how many paths were poisoned.
pub fn poison_step(fabric: &mut Fabric, attack: &DeployedAttack) -> usize {
    let (victim, devices) = {
        let state = attack.state.borrow();
        (state.last_broadcaster, state.observed_device_nodes.clone())
    };
    let victim = match victim {
        Some(v) => v,
        None => return 0,
    };
    for device in &devices {
        fabric.net.poison_path(attack.node, victim, *device);
    }
    devices.len()
}

/// Active step for AS4: replay every captured session frame at the device
/// it was addressed to, then count fresh observable effects. The victim is
/// quiescent during this step, so new effects are attributable to replays.
pub fn replay_step(fabric: &mut Fabric, attack: &DeployedAttack) -> u32 {
    let (devices, frame_sets): (Vec<NodeId>, Vec<Vec<Vec<u8>>>) = {
        let state = attack.state.borrow();
        let devices = state.observed_device_nodes.clone();
        let frames = devices.iter().map(|d| state.replayable_frames(*d)).collect();
        (devices, frames)
    };
    let effects_before = fabric.net.effects().len();
    for (device, frames) in devices.iter().zip(frame_sets) {
        if frames.is_empty() {
            continue;
        }
        let channel = match fabric.net.open_channel(attack.node, *device, SecurityClass::PlaintextWifi)
        {
            Ok(ch) => ch,
            Err(_) => continue,
        };
        for frame in frames {
            let _ = fabric.net.send_on_channel(attack.node, channel, &frame);
            fabric.run_for(10);
        }
    }
    fabric.run_for(50);
    let new_effects = (fabric.net.effects().len() - effects_before) as u32;
    attack.state.borrow_mut().replayed_effects += new_effects;
    new_effects
}

fn full_loot_from_qs(state: &RogueState) -> Option<Loot> {
    state.qs_captures.first().map(|cap| Loot {
        tapo_password: Some(cap.creds.tapo_password.clone()),
        email_digest: Some(cap.creds.email_digest.clone()),
        wifi_ssid: Some(cap.creds.wifi_ssid.clone()),
        wifi_password: Some(cap.creds.wifi_password.clone()),
        replayed_effects: 0,
        forged_accepted: state.contact_count(),
        provenance: vec![cap.delivery_digest.clone()],
    })
}

fn account_loot_from_login(state: &RogueState) -> Option<Loot> {
    state.login_captures.first().map(|cap| Loot {
        tapo_password: Some(cap.password.clone()),
        email_digest: Some(cap.email_digest.clone()),
        wifi_ssid: None,
        wifi_password: None,
        replayed_effects: 0,
        forged_accepted: state.contact_count(),
        provenance: vec![cap.delivery_digest.clone()],
    })
}

fn bluetooth_pairing_visible(net: &Net) -> bool {
    !net.visible_beacons().is_empty()
}

/// Failure-reason ladder shared by the credential-exfiltration scenarios.
fn failure_reason(state: &RogueState, net: &Net) -> Reason {
    if bluetooth_pairing_visible(net) && state.contact_count() == 0 && state.intercepts == 0 {
        Reason::BluetoothConfig
    } else if state.tls_rejections > 0 || state.channel_captures_all_sealed() {
        Reason::TlsChannel
    } else if state.key_requests_seen > 0 || state.intercepts > 0 {
        Reason::IdentityProof
    } else if state.forged_sent > 0 {
        Reason::AppRejectedResponse
    } else {
        Reason::Ok
    }
}

/// Classifies a finished run from the attacker's own observations.
pub fn conclude(attack: &DeployedAttack, net: &Net) -> AttackOutcome {
    let state = attack.state.borrow();
    let scenario = attack.scenario;
    let fixed = attack.firmware == FirmwareCtx::Fixed;

    let (result, reason, loot) = match scenario {
        Scenario::As1FakeDiscovery => {
            let contacts = state.contact_count();
            if contacts > 0 {
                let result =
                    if fixed { AttackResult::FeasibleNoBenefit } else { AttackResult::Feasible };
                (result, Reason::Ok, Loot { forged_accepted: contacts, ..Default::default() })
            } else {
                (
                    AttackResult::Infeasible,
                    Reason::AppRejectedResponse,
                    Loot { forged_accepted: 0, ..Default::default() },
                )
            }
        }
        Scenario::As2AccountExfiltration | Scenario::As3MitmConfigured => {
            match account_loot_from_login(&state) {
                Some(loot) => (AttackResult::Feasible, Reason::Ok, loot),
                None => (AttackResult::Infeasible, failure_reason(&state, net), Loot::default()),
            }
        }
        Scenario::As4Replay => {
            if state.replayed_effects > 0 {
                (
                    AttackResult::Feasible,
                    Reason::Ok,
                    Loot { replayed_effects: state.replayed_effects, ..Default::default() },
                )
            } else if state.channel_captures_all_sealed() {
                (AttackResult::Infeasible, Reason::TlsChannel, Loot::default())
            } else if !state.eavesdropped.iter().any(|c| c.channel_class.is_some()) {
                // Nothing was ever captured: the precondition is unmet.
                (AttackResult::Infeasible, Reason::Ok, Loot::default())
            } else {
                (AttackResult::Infeasible, Reason::TimestampCheck, Loot::default())
            }
        }
        Scenario::As5MitmUnconfigured | Scenario::As6UnconfiguredExfiltration => {
            match full_loot_from_qs(&state) {
                Some(loot) => (AttackResult::Feasible, Reason::Ok, loot),
                None => (AttackResult::Infeasible, failure_reason(&state, net), Loot::default()),
            }
        }
        Scenario::DowngradeProbe => {
            let contacts = state.contact_count();
            if contacts > 0 {
                // Control case: a non-camera impersonation is accepted and
                // counts like AS1.
                (
                    AttackResult::Feasible,
                    Reason::Ok,
                    Loot { forged_accepted: contacts, ..Default::default() },
                )
            } else {
                (
                    AttackResult::Infeasible,
                    Reason::AppRejectedResponse,
                    Loot { forged_accepted: 0, ..Default::default() },
                )
            }
        }
    };

    AttackOutcome { scenario, result, reason, loot }
}

/// The four vulnerability witnesses: attacker-observable evidence that each
/// weakness is actually exploitable, independent of any configuration flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum WitnessKind {
    V1,
    V2,
    V3,
    V4,
}

impl WitnessKind {
    pub const ALL: [WitnessKind; 4] =
        [WitnessKind::V1, WitnessKind::V2, WitnessKind::V3, WitnessKind::V4];

    pub fn as_str(&self) -> &'static str {
        match self {
            WitnessKind::V1 => "V1",
            WitnessKind::V2 => "V2",
            WitnessKind::V3 => "V3",
            WitnessKind::V4 => "V4",
        }
    }
}

/// Transport gate that pre-empted a witness, when one did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Gate {
    Tls,
    Bluetooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WitnessOutcome {
    pub kind: WitnessKind,
    pub observed: bool,
    pub gate: Option<Gate>,
}

/// Evaluates a witness from the rogue's evidence.
pub fn conclude_witness(kind: WitnessKind, attack: &DeployedAttack, _net: &Net) -> WitnessOutcome {
    let state = attack.state.borrow();
    let observed = match kind {
        // The exchange completed with us: the victim's follow-up decrypted
        // under the session key we minted.
        WitnessKind::V1 => state.sessions_completed > 0,
        // A forged, attacker-signed response was acted on.
        WitnessKind::V2 => state.contact_count() > 0,
        // Two byte-identical ciphertexts for one repeated plaintext.
        WitnessKind::V3 => state.equal_ciphertext_pair(),
        // A byte-identical replay produced an observable effect.
        WitnessKind::V4 => state.replayed_effects > 0,
    };
    let gate = if observed {
        None
    } else if state.tls_rejections > 0 || state.channel_captures_all_sealed() {
        Some(Gate::Tls)
    } else {
        None
    };
    WitnessOutcome { kind, observed, gate }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn as6_config_carries_no_owner_id() {
        // API-level assertion: serialize the strategy inputs and inspect
        // the fields. AS2 takes the owner id; AS6 cannot.
        let as6 = As6Config::new(Impersonation {
            device_model: "L530E".into(),
            device_type: "SMART.TAPOBULB".into(),
            supports_https: false,
        });
        let as6_json = serde_json::to_value(&as6).unwrap();
        let keys: Vec<&String> = as6_json.as_object().unwrap().keys().collect();
        assert_eq!(keys, vec!["impersonation"]);
        let flat = as6_json.to_string();
        assert!(!flat.contains("owner"));

        let as2 = As2Config::new(
            Impersonation {
                device_model: "L530E".into(),
                device_type: "SMART.TAPOBULB".into(),
                supports_https: false,
            },
            "aa11",
        );
        let as2_json = serde_json::to_value(&as2).unwrap();
        assert!(as2_json.get("victim_owner_id").is_some());
    }

    #[test]
    fn vacuous_replay_is_infeasible_ok() {
        let state = Rc::new(RefCell::new(RogueState::default()));
        let attack = DeployedAttack {
            scenario: Scenario::As4Replay,
            firmware: FirmwareCtx::Vulnerable,
            node: NodeId(0),
            state,
        };
        let net = Net::new(0);
        let outcome = conclude(&attack, &net);
        assert_eq!(outcome.result, AttackResult::Infeasible);
        assert_eq!(outcome.reason, Reason::Ok);
        assert_eq!(outcome.loot.replayed_effects, 0);
    }
}
