//! Topology presets for the four experiment setups.
//!
//! - A: victim and attacker share a network; the device sits on a remote one.
//! - B: victim, attacker, and an already-configured device share one LAN.
//! - C: the device is back in setup mode on its own open AP, with the victim
//!   and the attacker both joined to it and an attacker honeypot AP cloning
//!   the home SSID at a higher priority.
//! - D: the victim's app is joined to an attacker-controlled network that it
//!   believes is the device's setup AP; the attacker is not on the real AP.

use crate::ids::{NetworkId, NodeId};
use crate::net::Net;

pub const HOME_SSID: &str = "homenet";
pub const DEVICE_AP_SSID: &str = "Tapo_Device_AP";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SetupKind {
    SetupA,
    SetupB,
    SetupC,
    SetupD,
}

impl SetupKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SetupKind::SetupA => "SETUP_A",
            SetupKind::SetupB => "SETUP_B",
            SetupKind::SetupC => "SETUP_C",
            SetupKind::SetupD => "SETUP_D",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SETUP_A" | "A" => Some(SetupKind::SetupA),
            "SETUP_B" | "B" => Some(SetupKind::SetupB),
            "SETUP_C" | "C" => Some(SetupKind::SetupC),
            "SETUP_D" | "D" => Some(SetupKind::SetupD),
            _ => None,
        }
    }
}

/// Concrete node and network handles for one materialized setup.
#[derive(Debug, Clone)]
pub struct Topology {
    pub kind: SetupKind,
    pub app: NodeId,
    pub attacker: NodeId,
    pub device: NodeId,
    /// Network the victim's app is attached to at scenario start.
    pub app_network: NetworkId,
    /// Network the device is attached to at scenario start, when any.
    pub device_network: Option<NetworkId>,
    pub honeypot: Option<NetworkId>,
    pub honeypot_owner: Option<NodeId>,
}

/// Builds the fabric-level topology for a setup. The seed participates only
/// through the fabric it was constructed with; node and network creation is
/// fully deterministic.
pub fn make_setup(kind: SetupKind, net: &mut Net) -> Topology {
    let app = net.add_node("app");
    let attacker = net.add_node("attacker");
    let device = net.add_node("device");
    match kind {
        SetupKind::SetupA => {
            let home = net.add_network("home", HOME_SSID, 10, None);
            let remote = net.add_network("remote", "remotenet", 10, None);
            net.attach(app, home).expect("fresh network");
            net.attach(attacker, home).expect("fresh network");
            net.attach(device, remote).expect("fresh network");
            Topology {
                kind,
                app,
                attacker,
                device,
                app_network: home,
                device_network: Some(remote),
                honeypot: None,
                honeypot_owner: None,
            }
        }
        SetupKind::SetupB => {
            let home = net.add_network("home", HOME_SSID, 10, None);
            // The attacker joins before the device so its forged replies to
            // any broadcast race ahead deterministically.
            net.attach(app, home).expect("fresh network");
            net.attach(attacker, home).expect("fresh network");
            net.attach(device, home).expect("fresh network");
            Topology {
                kind,
                app,
                attacker,
                device,
                app_network: home,
                device_network: Some(home),
                honeypot: None,
                honeypot_owner: None,
            }
        }
        SetupKind::SetupC => {
            let ap_x = net.add_network("ap_x", DEVICE_AP_SSID, 10, Some(device));
            let honeypot = net.add_network("honeypot_y", HOME_SSID, 20, Some(attacker));
            net.attach(device, ap_x).expect("fresh network");
            net.attach(app, ap_x).expect("fresh network");
            net.attach(attacker, ap_x).expect("fresh network");
            net.attach(attacker, honeypot).expect("fresh network");
            Topology {
                kind,
                app,
                attacker,
                device,
                app_network: ap_x,
                device_network: Some(ap_x),
                honeypot: Some(honeypot),
                honeypot_owner: Some(attacker),
            }
        }
        SetupKind::SetupD => {
            let ap_x = net.add_network("ap_x", DEVICE_AP_SSID, 10, Some(device));
            // The victim believes this is the device AP; it is the attacker's.
            let net_y = net.add_network("net_y", DEVICE_AP_SSID, 20, Some(attacker));
            net.attach(device, ap_x).expect("fresh network");
            net.attach(attacker, net_y).expect("fresh network");
            net.attach(app, net_y).expect("fresh network");
            Topology {
                kind,
                app,
                attacker,
                device,
                app_network: net_y,
                device_network: Some(ap_x),
                honeypot: Some(net_y),
                honeypot_owner: Some(attacker),
            }
        }
    }
}

/// The Setup D invariant: app and attacker share an attacker-owned network,
/// the device sits alone on its own AP, and the attacker is not on that AP.
pub fn satisfies_setup_d(net: &Net, app: NodeId, attacker: NodeId, device: NodeId) -> bool {
    let shared = match net.shared_network(app, attacker) {
        Some(id) => id,
        None => return false,
    };
    let shared_ok = net
        .network(shared)
        .map(|n| n.owner == Some(attacker) && !n.members.contains(&device))
        .unwrap_or(false);
    let device_nets = net.networks_of(device);
    let device_ok = !device_nets.is_empty()
        && device_nets.iter().all(|id| {
            net.network(*id)
                .map(|n| n.owner == Some(device) && !n.members.contains(&attacker) && !n.members.contains(&app))
                .unwrap_or(false)
        });
    shared_ok && device_ok
}
