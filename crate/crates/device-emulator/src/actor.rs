//! Fabric endpoint wrapping a [`DeviceState`]: wire dispatch, the setup AP
//! or Bluetooth beacon, TLS provisioning, and observable effects.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use netsim_fabric::{
    BeaconInfo, Delivery, DeliveryKind, Endpoint, Net, NetworkId, NodeId, SecurityClass,
    DEVICE_AP_SSID,
};
use proto_core::{
    encode_discovery_response, encode_key_response, encode_proven_key_response,
    encode_session_envelope, frame, parse_discovery_request, parse_key_request,
    parse_session_envelope, DiscoverySecret, IdentityKeyPair, IdentityPublicKey,
    tskep_respond, tskep_respond_proven,
};

use crate::error::DeviceError;
use crate::profile::ConfigChannel;
use crate::state::{reply_code, DeviceAddress, DeviceState, Lifecycle};

pub struct DeviceActor {
    pub state: DeviceState,
    pub node: NodeId,
    rng: ChaCha20Rng,
    identity: IdentityKeyPair,
    secret: DiscoverySecret,
    pub ap_network: Option<NetworkId>,
}

impl DeviceActor {
    pub fn new(state: DeviceState, node: NodeId, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xDE71CE);
        let identity = IdentityKeyPair::generate(&mut rng);
        DeviceActor {
            state,
            node,
            rng,
            identity,
            secret: DiscoverySecret::hardcoded(),
            ap_network: None,
        }
    }

    pub fn identity_public(&self) -> IdentityPublicKey {
        self.identity.public.clone()
    }

    /// Adopts a pre-built setup AP network (topology presets create one).
    pub fn adopt_ap(&mut self, network: NetworkId) {
        self.ap_network = Some(network);
    }

    /// Vendor-side provisioning: the camera gets a valid TLS certificate.
    pub fn provision(&self, net: &mut Net) {
        if self.state.profile.supports_https {
            net.install_certificate(self.node, self.state.device_id.clone());
        }
    }

    /// Brings up whatever an unconfigured device exposes for setup: its own
    /// open AP, or a Bluetooth pairing beacon.
    pub fn expose_setup_interface(&mut self, net: &mut Net) {
        match self.state.profile.config_channel {
            ConfigChannel::WifiAp => {
                let ap = match self.ap_network {
                    Some(id) if net.network(id).is_ok() => id,
                    _ => {
                        let id = net.add_network("ap_x", DEVICE_AP_SSID, 10, Some(self.node));
                        self.ap_network = Some(id);
                        id
                    }
                };
                if !net.is_attached(self.node, ap) {
                    let _ = net.attach(self.node, ap);
                }
            }
            ConfigChannel::Bluetooth => {
                net.register_beacon(
                    self.node,
                    BeaconInfo {
                        device_id: self.state.device_id.clone(),
                        device_model: self.state.profile.model.as_str().to_string(),
                    },
                );
            }
        }
    }

    /// Factory reset plus re-exposing the setup interface.
    pub fn reset(&mut self, net: &mut Net) {
        self.state.reset_device();
        self.expose_setup_interface(net);
    }

    fn address_on(&self, net: &Net, network: Option<NetworkId>) -> DeviceAddress {
        let ip = network
            .and_then(|n| net.ip_of_on(self.node, n))
            .or_else(|| net.ip_of(self.node))
            .unwrap_or_else(|| "0.0.0.0".into());
        DeviceAddress { ip, mac: self.state.mac.clone(), port: self.state.profile.http_port() }
    }

    fn answer_discovery(&mut self, net: &mut Net, delivery: &Delivery) {
        let req = match parse_discovery_request(&delivery.bytes) {
            Ok(req) => req,
            Err(_) => return,
        };
        let mut resp = self.state.handle_discovery(&req, &self.address_on(net, delivery.network));
        resp.sign(&self.secret);
        let _ = net.send_datagram(self.node, delivery.from, &encode_discovery_response(&resp));
    }

    fn answer_channel(&mut self, net: &mut Net, delivery: &Delivery) {
        let channel = match delivery.channel {
            Some(id) => id,
            None => return,
        };
        // The camera serves its management protocol only over TLS.
        if self.state.profile.supports_https {
            let class = net.channel(channel).map(|c| c.security_class);
            if class != Ok(SecurityClass::Tls) {
                return;
            }
        }
        let now = net.now_secs();

        if let Ok(req) = parse_key_request(&delivery.bytes) {
            let policies = self.state.effective_policies();
            let encoded = if self.state.provides_identity_proof() {
                match tskep_respond_proven(
                    &req,
                    &mut self.rng,
                    policies,
                    now,
                    &self.identity,
                    &self.state.device_id,
                ) {
                    Ok((proven, ctx)) => {
                        self.state.session = Some(ctx);
                        encode_proven_key_response(&proven)
                    }
                    Err(_) => return,
                }
            } else {
                match tskep_respond(&req, &mut self.rng, policies, now) {
                    Ok((resp, ctx)) => {
                        self.state.session = Some(ctx);
                        encode_key_response(&resp)
                    }
                    Err(_) => return,
                }
            };
            let _ = net.send_on_channel(self.node, channel, &encoded);
            return;
        }

        if let Ok(ciphertext) = parse_session_envelope(&delivery.bytes) {
            match self.state.handle_session_message(&ciphertext, now, &mut self.rng) {
                Ok(reply) => {
                    let _ = net.send_on_channel(self.node, channel, &encode_session_envelope(&reply));
                    for effect in self.state.drain_effects() {
                        if effect == "configured"
                            && self.state.profile.config_channel == ConfigChannel::Bluetooth
                        {
                            net.clear_beacon(self.node);
                        }
                        net.emit_effect(self.node, effect);
                    }
                }
                Err(err) => {
                    let code = match err {
                        DeviceError::StaleTimestamp => reply_code::STALE_TIMESTAMP,
                        DeviceError::ReplayDetected => reply_code::REPLAY_DETECTED,
                        DeviceError::AlreadyConfigured => reply_code::ALREADY_CONFIGURED,
                        _ => reply_code::DECRYPT_FAILED,
                    };
                    let sealed = self.state.session.clone().and_then(|ctx| {
                        if code == reply_code::DECRYPT_FAILED {
                            None
                        } else {
                            let mut reply =
                                proto_core::SessionMessage::response(code, json!({}), now);
                            proto_core::seal_session_message(&ctx, &mut reply, &mut self.rng);
                            Some(encode_session_envelope(&reply))
                        }
                    });
                    let bytes = sealed.unwrap_or_else(|| {
                        frame::frame(
                            &serde_json::to_vec(&json!({ "error_code": code })).expect("JSON"),
                            &[],
                        )
                    });
                    let _ = net.send_on_channel(self.node, channel, &bytes);
                }
            }
        }
    }
}

impl Endpoint for DeviceActor {
    fn on_delivery(&mut self, net: &mut Net, delivery: &Delivery) {
        match &delivery.kind {
            DeliveryKind::Broadcast | DeliveryKind::Datagram => self.answer_discovery(net, delivery),
            DeliveryKind::Channel => self.answer_channel(net, delivery),
            _ => {}
        }
    }
}

impl DeviceActor {
    /// True while the device is in setup mode.
    pub fn unconfigured(&self) -> bool {
        self.state.lifecycle == Lifecycle::Unconfigured
    }
}
