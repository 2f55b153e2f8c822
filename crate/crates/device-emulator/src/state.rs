//! Per-device protocol state machine: discovery replies, the key-exchange
//! responder's session, association, command handling, and reset.

use std::collections::{BTreeSet, VecDeque};

use rand::RngCore;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use proto_core::{
    open_session_message, parse_set_qs_info, seal_session_message, Credentials, DiscoveryRequest,
    DiscoveryResponse, EncryptScheme, FreshnessPolicy, ProtoError, SessionContext, SessionMessage,
    SessionPolicies,
};

use crate::error::{DeviceError, Result};
use crate::firmware::FirmwareMode;
use crate::profile::DeviceProfile;

/// Replay memory bound; oldest entries are evicted first. The timestamp
/// window check still applies after eviction.
pub const SEEN_TIMESTAMPS_CAP: usize = 1024;

pub mod reply_code {
    pub const OK: i64 = 0;
    pub const LOGIN_FAILED: i64 = -1501;
    pub const UNKNOWN_METHOD: i64 = -2000;
    pub const ALREADY_CONFIGURED: i64 = -2002;
    pub const STALE_TIMESTAMP: i64 = -2003;
    pub const REPLAY_DETECTED: i64 = -2004;
    pub const DECRYPT_FAILED: i64 = -1001;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lifecycle {
    Unconfigured,
    Configured,
}

/// Decouples observable behavior from the exposure flags, for mutation
/// experiments that check the matrices are evidence-based.
#[derive(Debug, Clone, Default)]
pub struct BehaviorOverrides {
    pub session_policies: Option<SessionPolicies>,
    pub identity_proof: Option<bool>,
}

#[derive(Debug, Clone)]
struct SeenTimestamps {
    set: BTreeSet<u64>,
    order: VecDeque<u64>,
}

impl SeenTimestamps {
    fn new() -> Self {
        SeenTimestamps { set: BTreeSet::new(), order: VecDeque::new() }
    }

    fn contains(&self, ts: u64) -> bool {
        self.set.contains(&ts)
    }

    fn insert(&mut self, ts: u64) {
        if self.set.insert(ts) {
            self.order.push_back(ts);
            if self.order.len() > SEEN_TIMESTAMPS_CAP {
                if let Some(evicted) = self.order.pop_front() {
                    self.set.remove(&evicted);
                }
            }
        }
    }

    fn clear(&mut self) {
        self.set.clear();
        self.order.clear();
    }

    fn len(&self) -> usize {
        self.order.len()
    }
}

#[derive(Debug, Clone)]
pub struct DeviceAddress {
    pub ip: String,
    pub mac: String,
    pub port: u16,
}

#[derive(Debug, Clone)]
pub struct DeviceState {
    pub profile: DeviceProfile,
    pub firmware: FirmwareMode,
    pub lifecycle: Lifecycle,
    pub owner: Option<String>,
    owner_email_digest: Option<String>,
    pub session: Option<SessionContext>,
    seen_timestamps: SeenTimestamps,
    overrides: BehaviorOverrides,
    pub device_id: String,
    pub mac: String,
    /// The single piece of protocol-relevant device state a command flips.
    pub relay_on: bool,
    pending_effects: Vec<String>,
}

/// Creates an unconfigured device, validating the flag/profile pairing.
pub fn spawn_device(profile: DeviceProfile, firmware: FirmwareMode) -> Result<DeviceState> {
    FirmwareMode::checked(profile.model, firmware.mode, firmware.vuln_flags.clone())?;
    if profile.version_for(firmware.mode).is_none() {
        return Err(DeviceError::NoSuchFirmware);
    }
    let digest = Sha256::digest(format!("emulated-device:{}", profile.model.as_str()).as_bytes());
    let device_id: String = digest.iter().take(10).map(|b| format!("{b:02x}")).collect();
    let mac = format!("1C-61-B4-{:02X}-{:02X}-{:02X}", digest[10], digest[11], digest[12]);
    Ok(DeviceState {
        profile,
        firmware,
        lifecycle: Lifecycle::Unconfigured,
        owner: None,
        owner_email_digest: None,
        session: None,
        seen_timestamps: SeenTimestamps::new(),
        overrides: BehaviorOverrides::default(),
        device_id,
        mac,
        relay_on: false,
        pending_effects: Vec::new(),
    })
}

impl DeviceState {
    pub fn override_session_policies(&mut self, policies: SessionPolicies) {
        self.overrides.session_policies = Some(policies);
    }

    pub fn override_identity_proof(&mut self, enabled: bool) {
        self.overrides.identity_proof = Some(enabled);
    }

    pub fn effective_policies(&self) -> SessionPolicies {
        self.overrides.session_policies.unwrap_or_else(|| self.firmware.session_policies())
    }

    pub fn provides_identity_proof(&self) -> bool {
        self.overrides.identity_proof.unwrap_or_else(|| self.firmware.provides_identity_proof())
    }

    pub fn firmware_version(&self) -> &str {
        self.profile.version_for(self.firmware.mode).unwrap_or("unknown")
    }

    /// Marks the device as already associated, as Setup B requires.
    pub fn preconfigure(&mut self, creds: &Credentials) {
        self.lifecycle = Lifecycle::Configured;
        self.owner = Some(creds.owner_id());
        self.owner_email_digest = Some(creds.email_digest.clone());
    }

    pub fn drain_effects(&mut self) -> Vec<String> {
        std::mem::take(&mut self.pending_effects)
    }

    pub fn seen_timestamp_count(&self) -> usize {
        self.seen_timestamps.len()
    }

    /// Truthful discovery reply for this device at the given address.
    pub fn handle_discovery(&self, _req: &DiscoveryRequest, addr: &DeviceAddress) -> DiscoveryResponse {
        let scheme = if self.profile.supports_https {
            EncryptScheme::aes_https(self.profile.http_port())
        } else {
            EncryptScheme::aes_http(self.profile.http_port())
        };
        DiscoveryResponse {
            device_id: self.device_id.clone(),
            owner: self.owner.clone(),
            device_name: None,
            device_type: self.profile.device_type.clone(),
            device_model: self.profile.model.as_str().to_string(),
            ip: addr.ip.clone(),
            mac: addr.mac.clone(),
            port: Some(addr.port),
            hardware_version: Some(self.profile.hardware_version.clone()),
            firmware_version: Some(self.firmware_version().to_string()),
            factory_default: self.lifecycle == Lifecycle::Unconfigured,
            is_support_iot_cloud: false,
            mgt_encrypt_schm: scheme,
            error_code: 0,
            auth_tag: Vec::new(),
            extras: Default::default(),
        }
    }

    fn check_freshness(&mut self, timestamp: u64, now_secs: u64) -> Result<()> {
        match self.effective_policies().freshness_policy {
            FreshnessPolicy::NoTimestampCheck => Ok(()),
            FreshnessPolicy::TimestampWindow(window) => {
                if timestamp.abs_diff(now_secs) > window {
                    return Err(DeviceError::StaleTimestamp);
                }
                if self.seen_timestamps.contains(timestamp) {
                    return Err(DeviceError::ReplayDetected);
                }
                self.seen_timestamps.insert(timestamp);
                Ok(())
            }
        }
    }

    /// Decrypts, freshness-checks, executes, and returns the sealed reply.
    /// Observable side effects of execution accumulate in `drain_effects`.
    pub fn handle_session_message(
        &mut self,
        ciphertext: &[u8],
        now_secs: u64,
        rng: &mut impl RngCore,
    ) -> Result<SessionMessage> {
        let ctx = self.session.clone().ok_or(DeviceError::NoSession)?;
        let msg = open_session_message(&ctx, ciphertext).map_err(|_| DeviceError::DecryptFailure)?;
        self.check_freshness(msg.timestamp, now_secs)?;
        let mut reply = self.execute(&msg, now_secs)?;
        seal_session_message(&ctx, &mut reply, rng);
        Ok(reply)
    }

    fn execute(&mut self, msg: &SessionMessage, now_secs: u64) -> Result<SessionMessage> {
        match msg.method.as_str() {
            "set_device_info" => {
                if let Some(on) = msg.params.get("device_on").and_then(Value::as_bool) {
                    if self.relay_on != on {
                        self.relay_on = on;
                        self.pending_effects.push(format!("device_on={on}"));
                    } else {
                        // Executed, even when the value does not change.
                        self.pending_effects.push(format!("device_on={on} (reasserted)"));
                    }
                }
                Ok(SessionMessage::response(reply_code::OK, json!({}), now_secs))
            }
            "get_device_info" => Ok(SessionMessage::response(
                reply_code::OK,
                json!({
                    "device_id": self.device_id,
                    "device_model": self.profile.model.as_str(),
                    "device_on": self.relay_on,
                    "factory_default": self.lifecycle == Lifecycle::Unconfigured,
                }),
                now_secs,
            )),
            "login_device" => {
                let supplied = msg.params.get("username").and_then(Value::as_str);
                let ok = self.lifecycle == Lifecycle::Configured
                    && supplied.is_some()
                    && supplied.map(str::to_string) == self.owner_email_digest;
                let code = if ok { reply_code::OK } else { reply_code::LOGIN_FAILED };
                Ok(SessionMessage::response(code, json!({}), now_secs))
            }
            "set_qs_info" => self.handle_set_qs_info(msg),
            _ => Ok(SessionMessage::response(reply_code::UNKNOWN_METHOD, json!({}), now_secs)),
        }
    }

    /// Association: records the account binding and leaves setup mode.
    pub fn handle_set_qs_info(&mut self, msg: &SessionMessage) -> Result<SessionMessage> {
        if self.session.is_none() {
            return Err(DeviceError::NoSession);
        }
        if self.lifecycle == Lifecycle::Configured {
            return Err(DeviceError::AlreadyConfigured);
        }
        let creds = parse_set_qs_info(msg).map_err(|e: ProtoError| DeviceError::BadRequest(e.to_string()))?;
        let owner = msg
            .params
            .pointer("/account/owner_id")
            .and_then(Value::as_str)
            .ok_or_else(|| DeviceError::BadRequest("missing account.owner_id".into()))?;
        self.owner = Some(owner.to_string());
        self.owner_email_digest = Some(creds.email_digest);
        self.lifecycle = Lifecycle::Configured;
        self.pending_effects.push("configured".into());
        Ok(SessionMessage::response(reply_code::OK, json!({}), msg.timestamp))
    }

    /// Factory reset: unconfigured, owner cleared, session dropped. The
    /// actor layer re-exposes the setup AP or Bluetooth beacon.
    pub fn reset_device(&mut self) {
        self.lifecycle = Lifecycle::Unconfigured;
        self.owner = None;
        self.owner_email_digest = None;
        self.session = None;
        self.seen_timestamps.clear();
        self.relay_on = false;
    }
}
