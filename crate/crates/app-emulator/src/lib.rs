//! Victim-side app emulator.
//!
//! The app is the initiating actor: it drives the fabric's event loop while
//! reactive endpoints (devices, rogue responders) answer. It screens
//! discovery responses with the shared MAC, picks an association target,
//! runs the key exchange, and ships its credentials in `set_qs_info` — to
//! whoever completed the exchange. Whether it demands an identity proof
//! from the responder depends on the app generation.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};
use thiserror::Error;

use netsim_fabric::{
    ChannelId, DeliveryKind, Fabric, FabricError, NodeId, SecurityClass,
};
use proto_core::{
    build_login_device, build_set_qs_info, encode_discovery_request, encode_key_request,
    encode_session_envelope, frame, open_session_message, parse_discovery_response,
    parse_key_response, parse_proven_key_response, parse_session_envelope, seal_session_message,
    tskep_finalize, tskep_initiate, Credentials, DiscoveryRequest, DiscoveryResponse,
    DiscoverySecret, IdentityRegistry, InitiatorState, SessionContext, SessionMessage,
    SessionPolicies,
};

pub const VULNERABLE_APP_VERSION: &str = "2.8.14";
pub const VULNERABLE_APP_VERSION_ALT: &str = "2.16.112";
pub const FIXED_APP_VERSION: &str = "2.17.206";

/// Broadcast cadence: one request per simulated second.
pub const DISCOVERY_INTERVAL_MS: u64 = 1000;
pub const DEFAULT_DISCOVERY_TIMEOUT_SECS: u64 = 5;
const REPLY_TIMEOUT_MS: u64 = 3000;
const TIMESTAMP_WINDOW_SECS: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppMode {
    Vulnerable,
    Fixed,
}

impl AppMode {
    pub fn version(&self) -> &'static str {
        match self {
            AppMode::Vulnerable => VULNERABLE_APP_VERSION,
            AppMode::Fixed => FIXED_APP_VERSION,
        }
    }

    pub fn session_policies(&self) -> SessionPolicies {
        match self {
            AppMode::Vulnerable => SessionPolicies::vulnerable(),
            AppMode::Fixed => SessionPolicies::fixed(TIMESTAMP_WINDOW_SECS),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AppError {
    #[error("no session established")]
    NoSession,

    #[error("key exchange timed out or peer unreachable")]
    TskepTimeout,

    #[error("association rejected with code {0}")]
    AssociationRejected(i64),

    #[error("responder presented no acceptable identity proof")]
    IdentityProofRejected,

    #[error("reply failed to decrypt or parse")]
    DecryptFailure,

    #[error("no unconfigured device discovered")]
    NoUnconfiguredDevice,

    #[error("app is not attached to any network")]
    NotAttached,

    #[error("login rejected with code {0}")]
    LoginRejected(i64),

    #[error("device returned error code {0}")]
    DeviceError(i64),

    #[error("reply timestamp outside the acceptance window")]
    StaleReply,
}

pub type Result<T> = std::result::Result<T, AppError>;

/// Why a discovery response was dropped during screening.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    Malformed,
    BadMac,
    /// A camera-model response claiming no HTTPS support is never trusted.
    HttpsDowngrade,
}

#[derive(Debug, Clone)]
pub enum Screened {
    Accepted(DiscoveryResponse),
    Rejected(RejectReason),
}

#[derive(Debug, Clone)]
pub struct DiscoveredEntry {
    pub response: DiscoveryResponse,
    pub arrived_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationResult {
    pub device_id: String,
    pub ip: String,
}

pub struct AppState {
    pub account: Credentials,
    pub app_version: String,
    pub mode: AppMode,
    pub node: NodeId,
    pub discovered: Vec<DiscoveredEntry>,
    /// Device model the victim is working with; filters target selection
    /// when set ("the victim knows what they bought").
    pub intent: Option<String>,
    pending_requests: BTreeMap<u64, InitiatorState>,
    next_request_id: u64,
    pub session: Option<SessionContext>,
    session_channel: Option<ChannelId>,
    registry: IdentityRegistry,
    require_proof_override: Option<bool>,
    secret: DiscoverySecret,
    rng: ChaCha20Rng,
    rejected: u64,
}

impl AppState {
    pub fn new(account: Credentials, mode: AppMode, node: NodeId, seed: u64) -> Self {
        AppState {
            account,
            app_version: mode.version().to_string(),
            mode,
            node,
            discovered: Vec::new(),
            intent: None,
            pending_requests: BTreeMap::new(),
            next_request_id: 1,
            session: None,
            session_channel: None,
            registry: IdentityRegistry::default(),
            require_proof_override: None,
            secret: DiscoverySecret::hardcoded(),
            rng: ChaCha20Rng::seed_from_u64(seed ^ 0xA99),
            rejected: 0,
        }
    }

    pub fn set_intent(&mut self, model: impl Into<String>) {
        self.intent = Some(model.into());
    }

    /// Provisioned device identity keys (fixed-generation apps).
    pub fn set_identity_registry(&mut self, registry: IdentityRegistry) {
        self.registry = registry;
    }

    /// Forces identity-proof verification on or off regardless of app
    /// generation; mutation experiments use this.
    pub fn override_identity_proof(&mut self, enabled: bool) {
        self.require_proof_override = Some(enabled);
    }

    pub fn requires_identity_proof(&self) -> bool {
        self.require_proof_override.unwrap_or(self.mode == AppMode::Fixed)
    }

    pub fn rejected_count(&self) -> u64 {
        self.rejected
    }

    /// Validates one raw discovery reply: MAC first, then the camera
    /// downgrade gate.
    pub fn screen_response(&self, raw: &[u8]) -> Screened {
        let resp = match parse_discovery_response(raw) {
            Ok(r) => r,
            Err(_) => return Screened::Rejected(RejectReason::Malformed),
        };
        if !resp.verify(&self.secret) {
            return Screened::Rejected(RejectReason::BadMac);
        }
        if resp.device_model == "C200" && !resp.mgt_encrypt_schm.is_support_https {
            return Screened::Rejected(RejectReason::HttpsDowngrade);
        }
        Screened::Accepted(resp)
    }

    /// Broadcasts discovery once per simulated second until the timeout,
    /// screening and deduplicating replies.
    pub fn run_discovery(&mut self, fabric: &mut Fabric, timeout_secs: u64) -> Vec<DiscoveryResponse> {
        let network = match fabric.net.networks_of(self.node).first().copied() {
            Some(n) => n,
            None => return Vec::new(),
        };
        for _ in 0..timeout_secs {
            let mut nonce = vec![0u8; 8];
            self.rng.fill_bytes(&mut nonce);
            let request = DiscoveryRequest::new(nonce, self.app_version.clone());
            let _ = fabric.net.broadcast(self.node, network, &encode_discovery_request(&request));
            fabric.run_for(DISCOVERY_INTERVAL_MS);
            for delivery in fabric.net.take_inbox(self.node) {
                if delivery.kind != DeliveryKind::Datagram {
                    continue;
                }
                match self.screen_response(&delivery.bytes) {
                    Screened::Accepted(resp) => {
                        let duplicate = self
                            .discovered
                            .iter()
                            .any(|e| e.response.device_id == resp.device_id && e.response.ip == resp.ip);
                        if !duplicate {
                            self.discovered
                                .push(DiscoveredEntry { response: resp, arrived_at_ms: delivery.at });
                        }
                    }
                    Screened::Rejected(_) => self.rejected += 1,
                }
            }
        }
        self.discovered.iter().map(|e| e.response.clone()).collect()
    }

    /// First unconfigured response, tie-broken by (arrival, device id).
    /// Respects the victim's model intent when one is set.
    pub fn select_association_target(&self) -> Result<DiscoveryResponse> {
        let mut candidates: Vec<&DiscoveredEntry> = self
            .discovered
            .iter()
            .filter(|e| e.response.factory_default)
            .filter(|e| self.intent.as_deref().map_or(true, |m| e.response.device_model == m))
            .collect();
        candidates.sort_by(|a, b| {
            a.arrived_at_ms
                .cmp(&b.arrived_at_ms)
                .then_with(|| a.response.device_id.cmp(&b.response.device_id))
        });
        candidates.first().map(|e| e.response.clone()).ok_or(AppError::NoUnconfiguredDevice)
    }

    /// The response advertising this account's own configured device.
    pub fn select_usage_target(&self) -> Result<DiscoveryResponse> {
        let owner = self.account.owner_id();
        let mut candidates: Vec<&DiscoveredEntry> = self
            .discovered
            .iter()
            .filter(|e| e.response.owner.as_deref() == Some(owner.as_str()))
            .collect();
        candidates.sort_by(|a, b| {
            a.arrived_at_ms
                .cmp(&b.arrived_at_ms)
                .then_with(|| a.response.device_id.cmp(&b.response.device_id))
        });
        candidates.first().map(|e| e.response.clone()).ok_or(AppError::NoUnconfiguredDevice)
    }

    fn open_channel_to(&mut self, fabric: &mut Fabric, target: &DiscoveryResponse) -> Result<ChannelId> {
        let peer = fabric.net.resolve_ip(&target.ip).map_err(|_| AppError::TskepTimeout)?;
        let class = if target.mgt_encrypt_schm.is_support_https {
            SecurityClass::Tls
        } else {
            SecurityClass::PlaintextWifi
        };
        fabric.net.open_channel(self.node, peer, class).map_err(|e| match e {
            FabricError::TlsRejected(_) => AppError::TskepTimeout,
            _ => AppError::TskepTimeout,
        })
    }

    fn await_channel_reply(
        &mut self,
        fabric: &mut Fabric,
        channel: ChannelId,
        timeout_ms: u64,
    ) -> Result<Vec<u8>> {
        let deadline = fabric.net.now_ms() + timeout_ms;
        loop {
            if !fabric.run_until_delivery(self.node, deadline) {
                return Err(AppError::TskepTimeout);
            }
            let deliveries = fabric.net.take_inbox(self.node);
            for d in deliveries {
                if d.kind == DeliveryKind::Channel && d.channel == Some(channel) {
                    return Ok(d.bytes);
                }
            }
            if fabric.net.now_ms() >= deadline {
                return Err(AppError::TskepTimeout);
            }
        }
    }

    /// Runs the key exchange over an open channel.
    ///
    /// In proof-requiring mode the responder must sign the exchange
    /// transcript with a key provisioned for the identity claimed at
    /// discovery — except on TLS channels, where the certificate already
    /// authenticated the responder. A plain (unproven) response on a TLS
    /// channel marks a legacy-generation peer, so the session adopts the
    /// legacy cipher policies for interoperability.
    pub fn exchange_keys(
        &mut self,
        fabric: &mut Fabric,
        channel: ChannelId,
        claimed_device_id: &str,
    ) -> Result<()> {
        let over_tls = fabric
            .net
            .channel(channel)
            .map(|c| c.security_class == SecurityClass::Tls)
            .unwrap_or(false);
        let request_id = self.next_request_id;
        self.next_request_id += 1;
        let (request, state) = tskep_initiate(&mut self.rng, request_id);
        self.pending_requests.insert(request_id, state);
        fabric
            .net
            .send_on_channel(self.node, channel, &encode_key_request(&request))
            .map_err(|_| AppError::TskepTimeout)?;
        let raw = self.await_channel_reply(fabric, channel, REPLY_TIMEOUT_MS)?;

        let mut policies = self.mode.session_policies();
        let response = if self.requires_identity_proof() && !over_tls {
            let proven = parse_proven_key_response(&raw).map_err(|_| AppError::IdentityProofRejected)?;
            let pinned = self
                .registry
                .lookup(claimed_device_id)
                .ok_or(AppError::IdentityProofRejected)?;
            if !proto_core::verify_proven_response(&proven, &request.initiator_public_key, pinned) {
                return Err(AppError::IdentityProofRejected);
            }
            proven.response
        } else {
            if over_tls && parse_proven_key_response(&raw).is_err() {
                policies = SessionPolicies::vulnerable();
            }
            parse_key_response(&raw).map_err(|_| AppError::TskepTimeout)?
        };

        let state = self
            .pending_requests
            .remove(&response.request_id)
            .ok_or(AppError::TskepTimeout)?;
        let ctx = tskep_finalize(
            &response,
            &state,
            policies,
            claimed_device_id,
            fabric.net.now_secs(),
        )
        .map_err(|_| AppError::TskepTimeout)?;
        self.session = Some(ctx);
        self.session_channel = Some(channel);
        Ok(())
    }

    fn roundtrip_sealed(
        &mut self,
        fabric: &mut Fabric,
        mut msg: SessionMessage,
    ) -> Result<SessionMessage> {
        let ctx = self.session.clone().ok_or(AppError::NoSession)?;
        let channel = self.session_channel.ok_or(AppError::NoSession)?;
        seal_session_message(&ctx, &mut msg, &mut self.rng);
        fabric
            .net
            .send_on_channel(self.node, channel, &encode_session_envelope(&msg))
            .map_err(|_| AppError::TskepTimeout)?;
        let raw = self.await_channel_reply(fabric, channel, REPLY_TIMEOUT_MS)?;
        match parse_session_envelope(&raw) {
            Ok(ciphertext) => {
                let reply =
                    open_session_message(&ctx, &ciphertext).map_err(|_| AppError::DecryptFailure)?;
                if self.mode == AppMode::Fixed
                    && reply.timestamp.abs_diff(fabric.net.now_secs()) > TIMESTAMP_WINDOW_SECS
                {
                    return Err(AppError::StaleReply);
                }
                Ok(reply)
            }
            Err(_) => {
                // Unsealed error frames carry a bare error code.
                let (body, _) = frame::unframe(&raw).map_err(|_| AppError::DecryptFailure)?;
                let doc: Value =
                    serde_json::from_slice(body).map_err(|_| AppError::DecryptFailure)?;
                let code = doc.get("error_code").and_then(Value::as_i64).unwrap_or(-1);
                Err(AppError::DeviceError(code))
            }
        }
    }

    /// Full association flow against a selected target: key exchange, then
    /// `set_qs_info` carrying the account and network credentials. Succeeds
    /// against anything that completes both steps.
    pub fn associate(
        &mut self,
        fabric: &mut Fabric,
        target: &DiscoveryResponse,
    ) -> Result<AssociationResult> {
        let channel = self.open_channel_to(fabric, target)?;
        self.exchange_keys(fabric, channel, &target.device_id)?;
        let qs = build_set_qs_info(&self.account, fabric.net.now_secs());
        let reply = self.roundtrip_sealed(fabric, qs).map_err(|e| match e {
            AppError::DeviceError(code) => AppError::AssociationRejected(code),
            other => other,
        })?;
        match reply.error_code() {
            Some(0) => Ok(AssociationResult { device_id: target.device_id.clone(), ip: target.ip.clone() }),
            Some(code) => Err(AppError::AssociationRejected(code)),
            None => Err(AppError::DecryptFailure),
        }
    }

    /// Association over Bluetooth for models that pair that way: scan for a
    /// beacon matching the intent, pair, and run the same two steps.
    pub fn associate_bluetooth(&mut self, fabric: &mut Fabric) -> Result<AssociationResult> {
        let beacons = fabric.net.visible_beacons();
        let beacon = beacons
            .iter()
            .find(|(_, b)| self.intent.as_deref().map_or(true, |m| b.device_model == m))
            .cloned()
            .ok_or(AppError::NoUnconfiguredDevice)?;
        let (peer, info) = beacon;
        fabric.net.pair_bluetooth(self.node, peer);
        let channel = fabric
            .net
            .open_channel(self.node, peer, SecurityClass::Bluetooth)
            .map_err(|_| AppError::TskepTimeout)?;
        self.exchange_keys(fabric, channel, &info.device_id)?;
        let qs = build_set_qs_info(&self.account, fabric.net.now_secs());
        let reply = self.roundtrip_sealed(fabric, qs)?;
        match reply.error_code() {
            Some(0) => Ok(AssociationResult { device_id: info.device_id, ip: String::new() }),
            Some(code) => Err(AppError::AssociationRejected(code)),
            None => Err(AppError::DecryptFailure),
        }
    }

    /// Authenticates this session against an already-configured device.
    pub fn login(&mut self, fabric: &mut Fabric) -> Result<()> {
        let msg = build_login_device(&self.account, fabric.net.now_secs());
        let reply = self.roundtrip_sealed(fabric, msg)?;
        match reply.error_code() {
            Some(0) => Ok(()),
            Some(code) => Err(AppError::LoginRejected(code)),
            None => Err(AppError::DecryptFailure),
        }
    }

    /// One encrypted request/reply on the established session.
    pub fn send_command(
        &mut self,
        fabric: &mut Fabric,
        method: &str,
        params: Value,
    ) -> Result<SessionMessage> {
        if self.session.is_none() {
            return Err(AppError::NoSession);
        }
        let msg = SessionMessage::new(method, params, fabric.net.now_secs());
        let reply = self.roundtrip_sealed(fabric, msg)?;
        match reply.error_code() {
            Some(0) | None => Ok(reply),
            Some(code) => Err(AppError::DeviceError(code)),
        }
    }

    /// Probe flow the app runs on newly seen unconfigured devices: key
    /// exchange plus a `get_device_info`, to render the device tile.
    pub fn probe_target(
        &mut self,
        fabric: &mut Fabric,
        target: &DiscoveryResponse,
    ) -> Result<SessionMessage> {
        let channel = self.open_channel_to(fabric, target)?;
        self.exchange_keys(fabric, channel, &target.device_id)?;
        self.send_command(fabric, "get_device_info", json!({}))
    }

    /// Opens a channel to an already-discovered device, establishes keys,
    /// and logs in.
    pub fn connect_and_login(
        &mut self,
        fabric: &mut Fabric,
        target: &DiscoveryResponse,
    ) -> Result<()> {
        let channel = self.open_channel_to(fabric, target)?;
        self.exchange_keys(fabric, channel, &target.device_id)?;
        self.login(fabric)
    }

    /// Discover, pick this account's device, establish keys, and log in.
    pub fn start_usage_session(&mut self, fabric: &mut Fabric, timeout_secs: u64) -> Result<()> {
        self.run_discovery(fabric, timeout_secs);
        let target = self.select_usage_target()?;
        self.connect_and_login(fabric, &target)
    }
}
