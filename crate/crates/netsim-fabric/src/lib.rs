//! Deterministic simulated network for protocol security experiments.
//!
//! The fabric is a single-threaded discrete-event loop. Reactive actors
//! (devices, rogue endpoints) register as [`Endpoint`]s and are dispatched
//! as their deliveries come due; initiating actors drive the loop and drain
//! their own inboxes. Identical seeds and scripts replay byte-identically,
//! including the exported event log.

pub mod error;
pub mod event;
pub mod ids;
pub mod net;
pub mod topology;

pub use error::{FabricError, Result};
pub use event::{payload_digest, EventKind, EventLog, LogEntry};
pub use ids::{ChannelId, NetworkId, NodeId};
pub use net::{
    BeaconInfo, Channel, Delivery, DeliveryKind, Effect, Net, ScriptedAction, SecurityClass,
    HOP_LATENCY_MS,
};
pub use topology::{make_setup, satisfies_setup_d, SetupKind, Topology, DEVICE_AP_SSID, HOME_SSID};

/// A reactive actor owned by the fabric: it is handed each delivery
/// addressed to its node and may send, open channels, or emit effects in
/// response. One logical actor per node.
pub trait Endpoint {
    fn on_delivery(&mut self, net: &mut Net, delivery: &Delivery);
}

/// The fabric proper: core state plus the endpoint registry and event pump.
pub struct Fabric {
    pub net: Net,
    endpoints: std::collections::BTreeMap<NodeId, Option<Box<dyn Endpoint>>>,
}

impl Fabric {
    pub fn new(seed: u64) -> Self {
        Fabric { net: Net::new(seed), endpoints: std::collections::BTreeMap::new() }
    }

    pub fn install_endpoint(&mut self, node: NodeId, endpoint: Box<dyn Endpoint>) {
        self.endpoints.insert(node, Some(endpoint));
    }

    pub fn remove_endpoint(&mut self, node: NodeId) -> Option<Box<dyn Endpoint>> {
        self.endpoints.remove(&node).flatten()
    }

    fn dispatch(&mut self, delivery: Delivery) {
        let to = delivery.to;
        match self.endpoints.get_mut(&to) {
            Some(slot) => {
                if let Some(mut endpoint) = slot.take() {
                    endpoint.on_delivery(&mut self.net, &delivery);
                    if let Some(slot) = self.endpoints.get_mut(&to) {
                        *slot = Some(endpoint);
                    }
                } else {
                    self.net.push_inbox(delivery);
                }
            }
            None => self.net.push_inbox(delivery),
        }
    }

    /// Processes every event due at or before `t_ms`.
    pub fn run_until(&mut self, t_ms: u64) {
        while let Some(delivery) = self.net.advance(t_ms) {
            self.dispatch(delivery);
        }
        self.net.finish_until(t_ms);
    }

    pub fn run_for(&mut self, dt_ms: u64) {
        let target = self.net.now_ms() + dt_ms;
        self.run_until(target);
    }

    /// Pumps events until a delivery lands in `node`'s inbox or the deadline
    /// passes. Returns true when something arrived.
    pub fn run_until_delivery(&mut self, node: NodeId, deadline_ms: u64) -> bool {
        loop {
            if self.net.inbox_len(node) > 0 {
                return true;
            }
            match self.net.advance(deadline_ms) {
                Some(delivery) => self.dispatch(delivery),
                None => {
                    self.net.finish_until(deadline_ms);
                    return self.net.inbox_len(node) > 0;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_counts_and_requires_attachment() {
        let mut fabric = Fabric::new(0);
        let a = fabric.net.add_node("a");
        let b = fabric.net.add_node("b");
        let c = fabric.net.add_node("c");
        let outsider = fabric.net.add_node("outsider");
        let lan = fabric.net.add_network("lan", "lan", 10, None);
        for node in [a, b, c] {
            fabric.net.attach(node, lan).unwrap();
        }
        assert_eq!(fabric.net.broadcast(a, lan, b"hello").unwrap(), 2);
        assert_eq!(
            fabric.net.broadcast(outsider, lan, b"hello").unwrap_err(),
            FabricError::NotAttached(outsider)
        );
        fabric.run_for(10);
        assert_eq!(fabric.net.take_inbox(b).len(), 1);
        assert_eq!(fabric.net.take_inbox(c).len(), 1);
        assert_eq!(fabric.net.take_inbox(outsider).len(), 0);
    }

    #[test]
    fn plaintext_channel_leaks_to_promiscuous_member() {
        let mut fabric = Fabric::new(0);
        let app = fabric.net.add_node("app");
        let dev = fabric.net.add_node("dev");
        let attacker = fabric.net.add_node("attacker");
        let lan = fabric.net.add_network("lan", "lan", 10, None);
        for node in [app, dev, attacker] {
            fabric.net.attach(node, lan).unwrap();
        }
        fabric.net.set_promiscuous(attacker, true);
        let ch = fabric.net.open_channel(app, dev, SecurityClass::PlaintextWifi).unwrap();
        assert!(fabric.net.channel(ch).unwrap().eavesdroppers.contains(&attacker));
        fabric.net.send_on_channel(app, ch, b"secret").unwrap();
        fabric.run_for(10);
        let observed = fabric.net.take_inbox(attacker);
        assert_eq!(observed.len(), 1);
        assert_eq!(observed[0].bytes, b"secret");
        assert!(!observed[0].sealed);
    }

    #[test]
    fn tls_channel_seals_eavesdropped_payloads() {
        let mut fabric = Fabric::new(7);
        let app = fabric.net.add_node("app");
        let cam = fabric.net.add_node("cam");
        let attacker = fabric.net.add_node("attacker");
        let lan = fabric.net.add_network("lan", "lan", 10, None);
        for node in [app, cam, attacker] {
            fabric.net.attach(node, lan).unwrap();
        }
        fabric.net.set_promiscuous(attacker, true);
        fabric.net.install_certificate(cam, "cam-device");
        let ch = fabric.net.open_channel(app, cam, SecurityClass::Tls).unwrap();
        fabric.net.send_on_channel(app, ch, b"very secret payload").unwrap();
        fabric.run_for(10);
        let observed = fabric.net.take_inbox(attacker);
        assert_eq!(observed.len(), 1);
        assert!(observed[0].sealed);
        assert_eq!(observed[0].bytes.len(), b"very secret payload".len());
        assert_ne!(observed[0].bytes, b"very secret payload".to_vec());
        // Two sends of the same plaintext seal to different blobs: the blob
        // carries no information beyond length.
        fabric.net.send_on_channel(app, ch, b"very secret payload").unwrap();
        fabric.net.send_on_channel(app, ch, b"very secret payload").unwrap();
        fabric.run_for(10);
        let again = fabric.net.take_inbox(attacker);
        assert_eq!(again.len(), 2);
        assert_ne!(again[0].bytes, again[1].bytes);
    }

    #[test]
    fn tls_requires_responder_certificate() {
        let mut fabric = Fabric::new(0);
        let app = fabric.net.add_node("app");
        let rogue = fabric.net.add_node("rogue");
        let lan = fabric.net.add_network("lan", "lan", 10, None);
        fabric.net.attach(app, lan).unwrap();
        fabric.net.attach(rogue, lan).unwrap();
        let err = fabric.net.open_channel(app, rogue, SecurityClass::Tls).unwrap_err();
        assert_eq!(err, FabricError::TlsRejected(rogue));
        fabric.run_for(10);
        let inbox = fabric.net.take_inbox(rogue);
        assert_eq!(inbox.len(), 1);
        assert_eq!(inbox[0].kind, DeliveryKind::TlsHandshakeRejected);
    }

    #[test]
    fn bluetooth_needs_pairing_and_excludes_wifi_eavesdroppers() {
        let mut fabric = Fabric::new(0);
        let app = fabric.net.add_node("app");
        let plug = fabric.net.add_node("plug");
        let attacker = fabric.net.add_node("attacker");
        let lan = fabric.net.add_network("lan", "lan", 10, None);
        fabric.net.attach(app, lan).unwrap();
        fabric.net.attach(attacker, lan).unwrap();
        fabric.net.set_promiscuous(attacker, true);
        assert_eq!(
            fabric.net.open_channel(app, plug, SecurityClass::Bluetooth).unwrap_err(),
            FabricError::NoPath(app, plug)
        );
        fabric.net.pair_bluetooth(app, plug);
        let ch = fabric.net.open_channel(app, plug, SecurityClass::Bluetooth).unwrap();
        assert!(fabric.net.channel(ch).unwrap().eavesdroppers.is_empty());
        fabric.net.send_on_channel(app, ch, b"pairing data").unwrap();
        fabric.run_for(10);
        assert_eq!(fabric.net.take_inbox(attacker).len(), 0);
        assert_eq!(fabric.net.take_inbox(plug).len(), 1);
    }

    #[test]
    fn poisoned_plaintext_path_redirects_to_attacker() {
        let mut fabric = Fabric::new(0);
        let app = fabric.net.add_node("app");
        let dev = fabric.net.add_node("dev");
        let attacker = fabric.net.add_node("attacker");
        let lan = fabric.net.add_network("lan", "lan", 10, None);
        for node in [app, dev, attacker] {
            fabric.net.attach(node, lan).unwrap();
        }
        fabric.net.poison_path(attacker, app, dev);
        let ch = fabric.net.open_channel(app, dev, SecurityClass::PlaintextWifi).unwrap();
        assert_eq!(fabric.net.channel(ch).unwrap().endpoints, (app, attacker));
        fabric.run_for(10);
        let inbox = fabric.net.take_inbox(attacker);
        assert_eq!(inbox.len(), 1);
        assert_eq!(inbox[0].kind, DeliveryKind::InterceptedOpen { intended: dev });
    }

    #[test]
    fn poisoned_tls_path_falls_back_to_genuine_peer() {
        let mut fabric = Fabric::new(0);
        let app = fabric.net.add_node("app");
        let cam = fabric.net.add_node("cam");
        let attacker = fabric.net.add_node("attacker");
        let lan = fabric.net.add_network("lan", "lan", 10, None);
        for node in [app, cam, attacker] {
            fabric.net.attach(node, lan).unwrap();
        }
        fabric.net.install_certificate(cam, "cam-device");
        fabric.net.poison_path(attacker, app, cam);
        let ch = fabric.net.open_channel(app, cam, SecurityClass::Tls).unwrap();
        assert_eq!(fabric.net.channel(ch).unwrap().endpoints, (app, cam));
        fabric.run_for(10);
        let inbox = fabric.net.take_inbox(attacker);
        assert_eq!(inbox.len(), 1);
        assert_eq!(inbox[0].kind, DeliveryKind::TlsHandshakeRejected);
    }

    #[test]
    fn deauth_detaches_and_reattach_prefers_priority() {
        let mut fabric = Fabric::new(0);
        let app = fabric.net.add_node("app");
        let attacker = fabric.net.add_node("attacker");
        let ap_x = fabric.net.add_network("ap_x", "Tapo_Device_AP", 10, None);
        let honeypot = fabric.net.add_network("net_y", "Tapo_Device_AP", 20, Some(attacker));
        fabric.net.attach(app, ap_x).unwrap();
        fabric.net.attach(attacker, honeypot).unwrap();
        fabric.net.set_reattach_script(app, &["Tapo_Device_AP"], 50);
        fabric.net.deauth(attacker, app, ap_x).unwrap();
        assert!(!fabric.net.is_attached(app, ap_x));
        fabric.run_for(100);
        assert!(fabric.net.is_attached(app, honeypot));
        assert!(!fabric.net.is_attached(app, ap_x));
    }

    #[test]
    fn deauth_without_honeypot_reattaches_to_real_ap() {
        let mut fabric = Fabric::new(0);
        let app = fabric.net.add_node("app");
        let attacker = fabric.net.add_node("attacker");
        let ap_x = fabric.net.add_network("ap_x", "Tapo_Device_AP", 10, None);
        fabric.net.attach(app, ap_x).unwrap();
        fabric.net.set_reattach_script(app, &["Tapo_Device_AP"], 50);
        fabric.net.deauth(attacker, app, ap_x).unwrap();
        fabric.run_for(100);
        assert!(fabric.net.is_attached(app, ap_x));
    }

    #[test]
    fn deauth_non_member_fails() {
        let mut fabric = Fabric::new(0);
        let attacker = fabric.net.add_node("attacker");
        let ghost = fabric.net.add_node("ghost");
        let lan = fabric.net.add_network("lan", "lan", 10, None);
        assert_eq!(
            fabric.net.deauth(attacker, ghost, lan).unwrap_err(),
            FabricError::NoSuchMember(ghost, lan)
        );
    }

    #[test]
    fn deauth_device_surfaces_scripted_reset() {
        let mut fabric = Fabric::new(0);
        let attacker = fabric.net.add_node("attacker");
        let dev = fabric.net.add_node("dev");
        let lan = fabric.net.add_network("lan", "lan", 10, None);
        fabric.net.attach(dev, lan).unwrap();
        fabric.net.set_reset_script(dev, 500);
        fabric.net.deauth(attacker, dev, lan).unwrap();
        fabric.run_for(499);
        assert!(fabric.net.take_pending_actions().is_empty());
        fabric.run_for(1);
        assert_eq!(fabric.net.take_pending_actions(), vec![ScriptedAction::ResetDevice(dev)]);
    }

    #[test]
    fn unattached_node_observes_nothing() {
        let mut fabric = Fabric::new(0);
        let a = fabric.net.add_node("a");
        let b = fabric.net.add_node("b");
        let outsider = fabric.net.add_node("outsider");
        let lan = fabric.net.add_network("lan", "lan", 10, None);
        fabric.net.attach(a, lan).unwrap();
        fabric.net.attach(b, lan).unwrap();
        fabric.net.set_promiscuous(outsider, true);
        let ch = fabric.net.open_channel(a, b, SecurityClass::PlaintextWifi).unwrap();
        assert!(fabric.net.channel(ch).unwrap().eavesdroppers.is_empty());
        fabric.net.broadcast(a, lan, b"ping").unwrap();
        fabric.net.send_on_channel(a, ch, b"pong").unwrap();
        fabric.run_for(10);
        assert_eq!(fabric.net.take_inbox(outsider).len(), 0);
    }

    #[test]
    fn setup_presets_shape() {
        let mut fabric = Fabric::new(3);
        let topo = make_setup(SetupKind::SetupB, &mut fabric.net);
        let home = topo.app_network;
        for node in [topo.app, topo.attacker, topo.device] {
            assert!(fabric.net.is_attached(node, home));
        }

        let mut fabric_d = Fabric::new(3);
        let topo_d = make_setup(SetupKind::SetupD, &mut fabric_d.net);
        assert!(satisfies_setup_d(&fabric_d.net, topo_d.app, topo_d.attacker, topo_d.device));
        assert!(!satisfies_setup_d(&fabric.net, topo.app, topo.attacker, topo.device));
    }

    #[test]
    fn setup_d_reached_from_b_by_deauth_sequence() {
        // deauth device -> scripted reset -> deauth app -> honeypot attach.
        let mut fabric = Fabric::new(0);
        let topo = make_setup(SetupKind::SetupB, &mut fabric.net);
        let home = topo.app_network;
        fabric.net.set_reset_script(topo.device, 100);
        fabric.net.set_reattach_script(topo.app, &[DEVICE_AP_SSID], 100);

        fabric.net.deauth(topo.attacker, topo.device, home).unwrap();
        fabric.run_for(200);
        let actions = fabric.net.take_pending_actions();
        assert_eq!(actions, vec![ScriptedAction::ResetDevice(topo.device)]);
        // The scripted victim resets the device: it re-exposes its setup AP.
        let ap_x = fabric.net.add_network("ap_x", DEVICE_AP_SSID, 10, Some(topo.device));
        fabric.net.attach(topo.device, ap_x).unwrap();

        // The attacker detaches itself from home and brings up the honeypot
        // cloning the AP SSID at higher priority, then deauths the app off
        // the home network.
        fabric.net.detach(topo.attacker, home).unwrap();
        let net_y = fabric.net.add_network("net_y", DEVICE_AP_SSID, 20, Some(topo.attacker));
        fabric.net.attach(topo.attacker, net_y).unwrap();
        fabric.net.deauth(topo.attacker, topo.app, home).unwrap();
        fabric.run_for(200);

        assert!(satisfies_setup_d(&fabric.net, topo.app, topo.attacker, topo.device));
    }

    #[test]
    fn identical_seeds_identical_logs() {
        let run = |seed: u64| {
            let mut fabric = Fabric::new(seed);
            let topo = make_setup(SetupKind::SetupB, &mut fabric.net);
            fabric.net.broadcast(topo.app, topo.app_network, b"probe").unwrap();
            let ch = fabric
                .net
                .open_channel(topo.app, topo.device, SecurityClass::PlaintextWifi)
                .unwrap();
            fabric.net.send_on_channel(topo.app, ch, b"payload").unwrap();
            fabric.run_for(50);
            fabric.net.log().to_jsonl()
        };
        assert_eq!(run(9), run(9));
        // Different seed, same script: logs still equal because the script
        // is seed-independent; sealed blobs are the only seed-sensitive
        // bytes and none were produced here.
        assert_eq!(run(9), run(10));
    }

    #[test]
    fn datagram_requires_shared_network() {
        let mut fabric = Fabric::new(0);
        let a = fabric.net.add_node("a");
        let b = fabric.net.add_node("b");
        let lan = fabric.net.add_network("lan", "lan", 10, None);
        fabric.net.attach(a, lan).unwrap();
        assert_eq!(
            fabric.net.send_datagram(a, b, b"x").unwrap_err(),
            FabricError::NoPath(a, b)
        );
        fabric.net.attach(b, lan).unwrap();
        fabric.net.send_datagram(a, b, b"x").unwrap();
        fabric.run_for(5);
        assert_eq!(fabric.net.take_inbox(b).len(), 1);
    }

    #[test]
    fn event_log_jsonl_shape() {
        let mut fabric = Fabric::new(0);
        let a = fabric.net.add_node("a");
        let b = fabric.net.add_node("b");
        let lan = fabric.net.add_network("lan", "lan", 10, None);
        fabric.net.attach(a, lan).unwrap();
        fabric.net.attach(b, lan).unwrap();
        fabric.net.broadcast(a, lan, b"x").unwrap();
        fabric.run_for(5);
        let jsonl = fabric.net.log().to_jsonl();
        for line in jsonl.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v.get("at").is_some());
            assert!(v.get("kind").is_some());
            assert!(v.get("from").is_some());
            assert!(v.get("to").is_some());
        }
        assert!(jsonl.contains("\"kind\":\"DELIVER\""));
        assert!(jsonl.contains("\"kind\":\"ATTACH\""));
    }
}
