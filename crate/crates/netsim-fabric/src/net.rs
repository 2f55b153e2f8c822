//! Core fabric state: nodes, networks, channels, the event queue, and the
//! scripted behaviors that deauthentication can trigger.
//!
//! All queued events are processed in `(time, insertion order)` order and
//! every collection is ordered, so identical inputs replay identically.

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use crate::error::{FabricError, Result};
use crate::event::{payload_digest, EventKind, EventLog, LogEntry};
use crate::ids::{ChannelId, NetworkId, NodeId};

/// Fixed per-hop latency in simulated milliseconds.
pub const HOP_LATENCY_MS: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SecurityClass {
    PlaintextWifi,
    Tls,
    Bluetooth,
}

impl SecurityClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            SecurityClass::PlaintextWifi => "PLAINTEXT_WIFI",
            SecurityClass::Tls => "TLS",
            SecurityClass::Bluetooth => "BLUETOOTH",
        }
    }
}

/// Point-to-point ordered channel between two nodes.
#[derive(Debug, Clone)]
pub struct Channel {
    pub id: ChannelId,
    pub endpoints: (NodeId, NodeId),
    pub security_class: SecurityClass,
    /// Promiscuous nodes that observe this channel's traffic.
    pub eavesdroppers: BTreeSet<NodeId>,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub name: String,
    pub ssid: String,
    /// Reattachment preference weight; a honeypot clones an SSID with a
    /// higher priority to win the rejoin race.
    pub priority: i32,
    pub owner: Option<NodeId>,
    pub members: Vec<NodeId>,
    index: u32,
    ip_counter: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeliveryKind {
    /// Network-wide broadcast datagram.
    Broadcast,
    /// Unicast datagram within a shared network.
    Datagram,
    /// Message on an open channel.
    Channel,
    /// Copy of someone else's traffic observed by a promiscuous node.
    Eavesdrop,
    /// A poisoned path landed a victim's channel on this node.
    InterceptedOpen { intended: NodeId },
    /// A TLS handshake to this node was aborted: no valid certificate.
    TlsHandshakeRejected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub at: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: DeliveryKind,
    pub channel: Option<ChannelId>,
    pub network: Option<NetworkId>,
    pub bytes: Vec<u8>,
    /// True when the payload was replaced by an opaque length-preserving
    /// blob because the channel is TLS class.
    pub sealed: bool,
}

/// Observable side effect of a device executing a command (a bulb visibly
/// toggling, say). Anyone in radio range — any fabric node — can watch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Effect {
    pub at: u64,
    pub node: NodeId,
    pub label: String,
}

/// Beacon advertised by a device pairing over Bluetooth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeaconInfo {
    pub device_id: String,
    pub device_model: String,
}

/// Deferred behavior owed to the scenario driver rather than the fabric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptedAction {
    /// The scripted victim resets this device after it lost its network.
    ResetDevice(NodeId),
}

#[derive(Debug)]
enum Queued {
    Deliver(Delivery),
    Reattach(NodeId),
    Scripted(ScriptedAction),
}

#[derive(Debug, Clone)]
struct ReattachScript {
    known_ssids: BTreeSet<String>,
    delay_ms: u64,
}

/// The simulated network fabric.
#[derive(Debug)]
pub struct Net {
    now: u64,
    seq: u64,
    seal_seed: u64,
    seal_counter: u64,
    node_names: Vec<String>,
    networks: BTreeMap<NetworkId, Network>,
    next_network: u32,
    channels: BTreeMap<ChannelId, Channel>,
    next_channel: u32,
    queue: BTreeMap<(u64, u64), Queued>,
    inboxes: BTreeMap<NodeId, Vec<Delivery>>,
    log: EventLog,
    effects: Vec<Effect>,
    ip_index: BTreeMap<String, NodeId>,
    node_ips: BTreeMap<NodeId, BTreeMap<NetworkId, String>>,
    promiscuous: BTreeSet<NodeId>,
    certs: BTreeMap<NodeId, String>,
    beacons: BTreeMap<NodeId, BeaconInfo>,
    bt_pairs: BTreeSet<(NodeId, NodeId)>,
    poison: BTreeMap<(NodeId, NodeId), NodeId>,
    reattach: BTreeMap<NodeId, ReattachScript>,
    reset_scripts: BTreeMap<NodeId, u64>,
    pending_actions: Vec<ScriptedAction>,
}

impl Net {
    pub fn new(seed: u64) -> Self {
        Net {
            now: 0,
            seq: 0,
            seal_seed: seed,
            seal_counter: 0,
            node_names: Vec::new(),
            networks: BTreeMap::new(),
            next_network: 0,
            channels: BTreeMap::new(),
            next_channel: 0,
            queue: BTreeMap::new(),
            inboxes: BTreeMap::new(),
            log: EventLog::default(),
            effects: Vec::new(),
            ip_index: BTreeMap::new(),
            node_ips: BTreeMap::new(),
            promiscuous: BTreeSet::new(),
            certs: BTreeMap::new(),
            beacons: BTreeMap::new(),
            bt_pairs: BTreeSet::new(),
            poison: BTreeMap::new(),
            reattach: BTreeMap::new(),
            reset_scripts: BTreeMap::new(),
            pending_actions: Vec::new(),
        }
    }

    pub fn now_ms(&self) -> u64 {
        self.now
    }

    pub fn now_secs(&self) -> u64 {
        self.now / 1000
    }

    // ---- nodes and networks ----

    pub fn add_node(&mut self, name: impl Into<String>) -> NodeId {
        let id = NodeId(self.node_names.len() as u32);
        self.node_names.push(name.into());
        id
    }

    pub fn node_name(&self, node: NodeId) -> &str {
        self.node_names.get(node.0 as usize).map(String::as_str).unwrap_or("?")
    }

    pub fn add_network(
        &mut self,
        name: impl Into<String>,
        ssid: impl Into<String>,
        priority: i32,
        owner: Option<NodeId>,
    ) -> NetworkId {
        let id = NetworkId(self.next_network);
        self.next_network += 1;
        self.networks.insert(
            id,
            Network {
                name: name.into(),
                ssid: ssid.into(),
                priority,
                owner,
                members: Vec::new(),
                index: id.0,
                ip_counter: 0,
            },
        );
        id
    }

    pub fn remove_network(&mut self, network: NetworkId) {
        if let Some(net) = self.networks.remove(&network) {
            for member in net.members {
                if let Some(ips) = self.node_ips.get_mut(&member) {
                    if let Some(ip) = ips.remove(&network) {
                        self.ip_index.remove(&ip);
                    }
                }
            }
        }
    }

    pub fn network(&self, network: NetworkId) -> Result<&Network> {
        self.networks.get(&network).ok_or(FabricError::UnknownNetwork(network))
    }

    pub fn network_by_name(&self, name: &str) -> Option<NetworkId> {
        self.networks.iter().find(|(_, n)| n.name == name).map(|(id, _)| *id)
    }

    pub fn attach(&mut self, node: NodeId, network: NetworkId) -> Result<()> {
        let net = self.networks.get_mut(&network).ok_or(FabricError::UnknownNetwork(network))?;
        if !net.members.contains(&node) {
            net.members.push(node);
            let ip = format!("10.{}.0.{}", net.index, 10 + net.ip_counter);
            net.ip_counter += 1;
            self.ip_index.insert(ip.clone(), node);
            self.node_ips.entry(node).or_default().insert(network, ip);
        }
        let entry = LogEntry {
            at: self.now,
            kind: EventKind::Attach,
            from: self.node_name(node).to_string(),
            to: self.networks[&network].name.clone(),
            channel_class: None,
            payload_digest: None,
        };
        self.log.push(entry);
        Ok(())
    }

    pub fn detach(&mut self, node: NodeId, network: NetworkId) -> Result<()> {
        let net = self.networks.get_mut(&network).ok_or(FabricError::UnknownNetwork(network))?;
        if let Some(pos) = net.members.iter().position(|m| *m == node) {
            net.members.remove(pos);
        } else {
            return Err(FabricError::NoSuchMember(node, network));
        }
        if let Some(ips) = self.node_ips.get_mut(&node) {
            if let Some(ip) = ips.remove(&network) {
                self.ip_index.remove(&ip);
            }
        }
        let entry = LogEntry {
            at: self.now,
            kind: EventKind::Detach,
            from: self.node_name(node).to_string(),
            to: self.networks[&network].name.clone(),
            channel_class: None,
            payload_digest: None,
        };
        self.log.push(entry);
        Ok(())
    }

    pub fn is_attached(&self, node: NodeId, network: NetworkId) -> bool {
        self.networks.get(&network).map(|n| n.members.contains(&node)).unwrap_or(false)
    }

    pub fn networks_of(&self, node: NodeId) -> Vec<NetworkId> {
        self.networks.iter().filter(|(_, n)| n.members.contains(&node)).map(|(id, _)| *id).collect()
    }

    pub fn shared_network(&self, a: NodeId, b: NodeId) -> Option<NetworkId> {
        self.networks
            .iter()
            .find(|(_, n)| n.members.contains(&a) && n.members.contains(&b))
            .map(|(id, _)| *id)
    }

    pub fn ip_of(&self, node: NodeId) -> Option<String> {
        self.node_ips.get(&node).and_then(|ips| ips.values().next().cloned())
    }

    pub fn ip_of_on(&self, node: NodeId, network: NetworkId) -> Option<String> {
        self.node_ips.get(&node).and_then(|ips| ips.get(&network).cloned())
    }

    pub fn resolve_ip(&self, ip: &str) -> Result<NodeId> {
        self.ip_index.get(ip).copied().ok_or_else(|| FabricError::UnknownAddress(ip.to_string()))
    }

    // ---- capabilities and scripted behaviors ----

    pub fn set_promiscuous(&mut self, node: NodeId, enabled: bool) {
        if enabled {
            self.promiscuous.insert(node);
        } else {
            self.promiscuous.remove(&node);
        }
    }

    pub fn install_certificate(&mut self, node: NodeId, subject: impl Into<String>) {
        self.certs.insert(node, subject.into());
    }

    pub fn has_valid_certificate(&self, node: NodeId) -> bool {
        self.certs.contains_key(&node)
    }

    pub fn register_beacon(&mut self, node: NodeId, info: BeaconInfo) {
        self.beacons.insert(node, info);
    }

    pub fn clear_beacon(&mut self, node: NodeId) {
        self.beacons.remove(&node);
    }

    /// Beacons are radio-visible to everyone in the fabric.
    pub fn visible_beacons(&self) -> Vec<(NodeId, BeaconInfo)> {
        self.beacons.iter().map(|(n, b)| (*n, b.clone())).collect()
    }

    pub fn pair_bluetooth(&mut self, a: NodeId, b: NodeId) {
        self.bt_pairs.insert(if a <= b { (a, b) } else { (b, a) });
    }

    fn bluetooth_paired(&self, a: NodeId, b: NodeId) -> bool {
        self.bt_pairs.contains(&if a <= b { (a, b) } else { (b, a) })
    }

    /// Redirects future plaintext channels `victim -> intended` onto
    /// `attacker`. Models layer-2 poisoning on a shared network.
    pub fn poison_path(&mut self, attacker: NodeId, victim: NodeId, intended: NodeId) {
        self.poison.insert((victim, intended), attacker);
    }

    pub fn clear_poison(&mut self, victim: NodeId, intended: NodeId) {
        self.poison.remove(&(victim, intended));
    }

    /// After a deauth, `node` rejoins the highest-priority visible network
    /// whose SSID it knows, `delay_ms` later.
    pub fn set_reattach_script(&mut self, node: NodeId, known_ssids: &[&str], delay_ms: u64) {
        self.reattach.insert(
            node,
            ReattachScript {
                known_ssids: known_ssids.iter().map(|s| s.to_string()).collect(),
                delay_ms,
            },
        );
    }

    /// After a deauth, the scripted victim resets this device `delay_ms`
    /// later; the action is surfaced to the scenario driver.
    pub fn set_reset_script(&mut self, node: NodeId, delay_ms: u64) {
        self.reset_scripts.insert(node, delay_ms);
    }

    pub fn take_pending_actions(&mut self) -> Vec<ScriptedAction> {
        std::mem::take(&mut self.pending_actions)
    }

    // ---- traffic ----

    fn next_key(&mut self, at: u64) -> (u64, u64) {
        let key = (at, self.seq);
        self.seq += 1;
        key
    }

    fn schedule(&mut self, at: u64, item: Queued) {
        let key = self.next_key(at);
        self.queue.insert(key, item);
    }

    fn sealed_blob(&mut self, len: usize, channel: ChannelId) -> Vec<u8> {
        self.seal_counter += 1;
        let mut out = Vec::with_capacity(len);
        let mut block: u64 = 0;
        while out.len() < len {
            let mut hasher = Sha256::new();
            hasher.update(self.seal_seed.to_le_bytes());
            hasher.update(channel.0.to_le_bytes());
            hasher.update(self.seal_counter.to_le_bytes());
            hasher.update(block.to_le_bytes());
            out.extend_from_slice(&hasher.finalize());
            block += 1;
        }
        out.truncate(len);
        out
    }

    /// Queues `bytes` to every member of the network except the sender.
    /// Returns the delivery count.
    pub fn broadcast(&mut self, from: NodeId, network: NetworkId, bytes: &[u8]) -> Result<usize> {
        let members = {
            let net = self.networks.get(&network).ok_or(FabricError::UnknownNetwork(network))?;
            if !net.members.contains(&from) {
                return Err(FabricError::NotAttached(from));
            }
            net.members.clone()
        };
        let at = self.now + HOP_LATENCY_MS;
        let mut count = 0;
        for member in members {
            if member == from {
                continue;
            }
            self.schedule(
                at,
                Queued::Deliver(Delivery {
                    at,
                    from,
                    to: member,
                    kind: DeliveryKind::Broadcast,
                    channel: None,
                    network: Some(network),
                    bytes: bytes.to_vec(),
                    sealed: false,
                }),
            );
            count += 1;
        }
        Ok(count)
    }

    /// Unicast datagram; requires a shared network. Promiscuous members of
    /// that network observe a plaintext copy.
    pub fn send_datagram(&mut self, from: NodeId, to: NodeId, bytes: &[u8]) -> Result<()> {
        let network = self.shared_network(from, to).ok_or(FabricError::NoPath(from, to))?;
        let at = self.now + HOP_LATENCY_MS;
        self.schedule(
            at,
            Queued::Deliver(Delivery {
                at,
                from,
                to,
                kind: DeliveryKind::Datagram,
                channel: None,
                network: Some(network),
                bytes: bytes.to_vec(),
                sealed: false,
            }),
        );
        let watchers: Vec<NodeId> = self.networks[&network]
            .members
            .iter()
            .copied()
            .filter(|m| *m != from && *m != to && self.promiscuous.contains(m))
            .collect();
        for watcher in watchers {
            self.schedule(
                at,
                Queued::Deliver(Delivery {
                    at,
                    from,
                    to: watcher,
                    kind: DeliveryKind::Eavesdrop,
                    channel: None,
                    network: Some(network),
                    bytes: bytes.to_vec(),
                    sealed: false,
                }),
            );
        }
        Ok(())
    }

    fn notify(&mut self, from: NodeId, to: NodeId, kind: DeliveryKind, channel: Option<ChannelId>) {
        let at = self.now + HOP_LATENCY_MS;
        let bytes = match &kind {
            DeliveryKind::InterceptedOpen { .. } => b"intercepted-channel-open".to_vec(),
            DeliveryKind::TlsHandshakeRejected => b"tls-handshake-rejected".to_vec(),
            _ => Vec::new(),
        };
        self.schedule(
            at,
            Queued::Deliver(Delivery { at, from, to, kind, channel, network: None, bytes, sealed: false }),
        );
    }

    /// Opens an ordered channel. Plaintext channels on a poisoned path land
    /// on the poisoner instead of the intended peer; TLS requires the
    /// responder to present a valid certificate, which also defeats
    /// interception attempts by uncertified nodes. Bluetooth requires the
    /// two nodes to be paired and admits no eavesdroppers.
    pub fn open_channel(&mut self, a: NodeId, b: NodeId, class: SecurityClass) -> Result<ChannelId> {
        if class == SecurityClass::Bluetooth {
            if !self.bluetooth_paired(a, b) {
                return Err(FabricError::NoPath(a, b));
            }
            return Ok(self.create_channel(a, b, class, BTreeSet::new()));
        }

        let mut target = b;
        let mut intercepted = false;
        if let Some(&attacker) = self.poison.get(&(a, b)) {
            if attacker != b && self.shared_network(a, attacker).is_some() {
                match class {
                    SecurityClass::PlaintextWifi => {
                        target = attacker;
                        intercepted = true;
                    }
                    SecurityClass::Tls => {
                        if self.has_valid_certificate(attacker) {
                            target = attacker;
                            intercepted = true;
                        } else {
                            self.notify(a, attacker, DeliveryKind::TlsHandshakeRejected, None);
                        }
                    }
                    SecurityClass::Bluetooth => unreachable!(),
                }
            }
        }

        let network = self.shared_network(a, target).ok_or(FabricError::NoPath(a, target))?;
        if class == SecurityClass::Tls && !self.has_valid_certificate(target) {
            self.notify(a, target, DeliveryKind::TlsHandshakeRejected, None);
            return Err(FabricError::TlsRejected(target));
        }

        let eavesdroppers: BTreeSet<NodeId> = self.networks[&network]
            .members
            .iter()
            .copied()
            .filter(|m| *m != a && *m != target && self.promiscuous.contains(m))
            .collect();
        let id = self.create_channel(a, target, class, eavesdroppers);
        if intercepted {
            self.notify(a, target, DeliveryKind::InterceptedOpen { intended: b }, Some(id));
        }
        Ok(id)
    }

    fn create_channel(
        &mut self,
        a: NodeId,
        b: NodeId,
        class: SecurityClass,
        eavesdroppers: BTreeSet<NodeId>,
    ) -> ChannelId {
        let id = ChannelId(self.next_channel);
        self.next_channel += 1;
        self.channels.insert(id, Channel { id, endpoints: (a, b), security_class: class, eavesdroppers });
        id
    }

    pub fn channel(&self, id: ChannelId) -> Result<&Channel> {
        self.channels.get(&id).ok_or(FabricError::UnknownChannel(id))
    }

    /// Sends on a channel. The peer receives the payload verbatim;
    /// eavesdroppers receive it verbatim on plaintext channels and as an
    /// opaque equal-length blob on TLS channels.
    pub fn send_on_channel(&mut self, from: NodeId, id: ChannelId, bytes: &[u8]) -> Result<()> {
        let (peer, class, eavesdroppers) = {
            let ch = self.channels.get(&id).ok_or(FabricError::UnknownChannel(id))?;
            let peer = if ch.endpoints.0 == from {
                ch.endpoints.1
            } else if ch.endpoints.1 == from {
                ch.endpoints.0
            } else {
                return Err(FabricError::NotChannelEndpoint(from, id));
            };
            (peer, ch.security_class, ch.eavesdroppers.clone())
        };
        let at = self.now + HOP_LATENCY_MS;
        self.schedule(
            at,
            Queued::Deliver(Delivery {
                at,
                from,
                to: peer,
                kind: DeliveryKind::Channel,
                channel: Some(id),
                network: None,
                bytes: bytes.to_vec(),
                sealed: false,
            }),
        );
        for watcher in eavesdroppers {
            let (observed, sealed) = match class {
                SecurityClass::Tls => (self.sealed_blob(bytes.len(), id), true),
                _ => (bytes.to_vec(), false),
            };
            self.schedule(
                at,
                Queued::Deliver(Delivery {
                    at,
                    from,
                    to: watcher,
                    kind: DeliveryKind::Eavesdrop,
                    channel: Some(id),
                    network: None,
                    bytes: observed,
                    sealed,
                }),
            );
        }
        Ok(())
    }

    /// Forcibly detaches `target` from `network`, then runs whatever
    /// scripted behavior is registered: a reattach by SSID preference, or a
    /// victim reset surfaced to the driver. The attacker only needs to share
    /// the fabric (radio scope), not the network.
    pub fn deauth(&mut self, attacker: NodeId, target: NodeId, network: NetworkId) -> Result<()> {
        if !self.is_attached(target, network) {
            return Err(FabricError::NoSuchMember(target, network));
        }
        let entry = LogEntry {
            at: self.now,
            kind: EventKind::Deauth,
            from: self.node_name(attacker).to_string(),
            to: self.node_name(target).to_string(),
            channel_class: None,
            payload_digest: None,
        };
        self.log.push(entry);
        self.detach(target, network)?;
        if let Some(script) = self.reattach.get(&target).cloned() {
            let at = self.now + script.delay_ms;
            self.schedule(at, Queued::Reattach(target));
        }
        if let Some(delay) = self.reset_scripts.get(&target).copied() {
            let at = self.now + delay;
            self.schedule(at, Queued::Scripted(ScriptedAction::ResetDevice(target)));
        }
        Ok(())
    }

    pub fn emit_effect(&mut self, node: NodeId, label: impl Into<String>) {
        let label = label.into();
        let entry = LogEntry {
            at: self.now,
            kind: EventKind::Effect,
            from: self.node_name(node).to_string(),
            to: String::new(),
            channel_class: None,
            payload_digest: Some(payload_digest(label.as_bytes())),
        };
        self.log.push(entry);
        self.effects.push(Effect { at: self.now, node, label });
    }

    pub fn effects(&self) -> &[Effect] {
        &self.effects
    }

    // ---- event pump ----

    /// Pops and processes queued events up to `until`, returning the next
    /// delivery for dispatch. Reattach and scripted events are handled
    /// internally. Returns `None` when nothing is due.
    pub(crate) fn advance(&mut self, until: u64) -> Option<Delivery> {
        loop {
            let key = match self.queue.keys().next().copied() {
                Some(k) if k.0 <= until => k,
                _ => return None,
            };
            let item = self.queue.remove(&key).expect("key just observed");
            self.now = self.now.max(key.0);
            match item {
                Queued::Deliver(d) => {
                    let class = d.channel.and_then(|id| self.channels.get(&id)).map(|c| c.security_class);
                    let entry = LogEntry {
                        at: d.at,
                        kind: EventKind::Deliver,
                        from: self.node_name(d.from).to_string(),
                        to: self.node_name(d.to).to_string(),
                        channel_class: class.map(|c| c.as_str().to_string()),
                        payload_digest: Some(payload_digest(&d.bytes)),
                    };
                    self.log.push(entry);
                    return Some(d);
                }
                Queued::Reattach(node) => {
                    let best = self
                        .reattach
                        .get(&node)
                        .map(|script| {
                            let mut candidates: Vec<(i32, NetworkId)> = self
                                .networks
                                .iter()
                                .filter(|(_, n)| script.known_ssids.contains(&n.ssid))
                                .map(|(id, n)| (n.priority, *id))
                                .collect();
                            candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                            candidates.first().map(|(_, id)| *id)
                        })
                        .unwrap_or(None);
                    if let Some(network) = best {
                        let _ = self.attach(node, network);
                    }
                }
                Queued::Scripted(action) => self.pending_actions.push(action),
            }
        }
    }

    pub(crate) fn finish_until(&mut self, t: u64) {
        self.now = self.now.max(t);
    }

    pub fn push_inbox(&mut self, delivery: Delivery) {
        self.inboxes.entry(delivery.to).or_default().push(delivery);
    }

    pub fn take_inbox(&mut self, node: NodeId) -> Vec<Delivery> {
        self.inboxes.remove(&node).unwrap_or_default()
    }

    pub fn inbox_len(&self, node: NodeId) -> usize {
        self.inboxes.get(&node).map(Vec::len).unwrap_or(0)
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }
}
