//! Discovery request/response wire format.
//!
//! Responses are UTF-8 JSON with a stable key order so that golden files are
//! byte-stable, framed with the 16-byte authentication tag as the trailer.
//! The tag is keyed by the shared hardcoded secret, so possession of any
//! firmware image is enough to mint valid responses.

use std::collections::BTreeMap;

use base64::Engine as _;
use serde_json::{json, Map, Value};

use crate::error::{ProtoError, Result};
use crate::frame;
use crate::mac::{mac_sign, mac_verify, DiscoverySecret};

const B64: base64::engine::GeneralPurpose = base64::engine::general_purpose::STANDARD;

/// Broadcast probe sent by the app.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscoveryRequest {
    pub nonce: Vec<u8>,
    pub app_version: String,
}

impl DiscoveryRequest {
    pub fn new(nonce: Vec<u8>, app_version: impl Into<String>) -> Self {
        assert!(!nonce.is_empty(), "discovery nonce must be non-empty");
        DiscoveryRequest { nonce, app_version: app_version.into() }
    }
}

/// Transport security advertised for the management channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptScheme {
    pub is_support_https: bool,
    pub encrypt_type: String,
    pub http_port: u16,
}

impl EncryptScheme {
    pub fn aes_http(http_port: u16) -> Self {
        EncryptScheme { is_support_https: false, encrypt_type: "AES".into(), http_port }
    }

    pub fn aes_https(http_port: u16) -> Self {
        EncryptScheme { is_support_https: true, encrypt_type: "AES".into(), http_port }
    }
}

/// One discovery reply. `owner` is absent on responses from devices that do
/// not report one; `auth_tag` lives in the framing envelope, not the JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryResponse {
    pub device_id: String,
    pub owner: Option<String>,
    pub device_name: Option<String>,
    pub device_type: String,
    pub device_model: String,
    pub ip: String,
    pub mac: String,
    pub port: Option<u16>,
    pub hardware_version: Option<String>,
    pub firmware_version: Option<String>,
    pub factory_default: bool,
    pub is_support_iot_cloud: bool,
    pub mgt_encrypt_schm: EncryptScheme,
    pub error_code: i64,
    pub auth_tag: Vec<u8>,
    /// Unknown `result` fields, preserved across a parse/encode round trip.
    pub extras: BTreeMap<String, Value>,
}

fn is_hex(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_hexdigit())
}

impl DiscoveryResponse {
    /// Checks the type-level invariants for responses this testbed emits.
    pub fn validate(&self) -> Result<()> {
        if !is_hex(&self.device_id) {
            return Err(ProtoError::MissingRequiredField("device_id (hex)".into()));
        }
        if let Some(owner) = &self.owner {
            if !is_hex(owner) {
                return Err(ProtoError::MissingRequiredField("owner (hex)".into()));
            }
        }
        Ok(())
    }

    /// JSON body in the canonical key order, without envelope or tag.
    pub fn body_json(&self) -> Vec<u8> {
        let mut result = Map::new();
        result.insert("device_id".into(), json!(self.device_id));
        if let Some(owner) = &self.owner {
            result.insert("owner".into(), json!(owner));
        }
        if let Some(name) = &self.device_name {
            result.insert("device_name".into(), json!(name));
        }
        result.insert("device_type".into(), json!(self.device_type));
        result.insert("device_model".into(), json!(self.device_model));
        result.insert("ip".into(), json!(self.ip));
        result.insert("mac".into(), json!(self.mac));
        if let Some(port) = self.port {
            result.insert("port".into(), json!(port));
        }
        if let Some(hw) = &self.hardware_version {
            result.insert("hardware_version".into(), json!(hw));
        }
        if let Some(fw) = &self.firmware_version {
            result.insert("firmware_version".into(), json!(fw));
        }
        result.insert("factory_default".into(), json!(self.factory_default));
        result.insert("is_support_iot_cloud".into(), json!(self.is_support_iot_cloud));
        result.insert(
            "mgt_encrypt_schm".into(),
            json!({
                "is_support_https": self.mgt_encrypt_schm.is_support_https,
                "encrypt_type": self.mgt_encrypt_schm.encrypt_type,
                "http_port": self.mgt_encrypt_schm.http_port,
            }),
        );
        for (k, v) in &self.extras {
            result.insert(k.clone(), v.clone());
        }
        let mut doc = Map::new();
        doc.insert("result".into(), Value::Object(result));
        doc.insert("error_code".into(), json!(self.error_code));
        serde_json::to_vec(&Value::Object(doc)).expect("JSON object")
    }

    /// Computes and stores the tag over the current body.
    pub fn sign(&mut self, secret: &DiscoverySecret) {
        self.auth_tag = mac_sign(&self.body_json(), secret);
    }

    /// True iff the stored tag matches the current body under `secret`.
    pub fn verify(&self, secret: &DiscoverySecret) -> bool {
        mac_verify(&self.body_json(), &self.auth_tag, secret)
    }
}

pub fn encode_discovery_request(req: &DiscoveryRequest) -> Vec<u8> {
    let body = serde_json::to_vec(&json!({
        "method": "discovery_request",
        "params": {
            "nonce": B64.encode(&req.nonce),
            "app_version": req.app_version,
        },
    }))
    .expect("JSON object");
    frame::frame(&body, &[])
}

pub fn parse_discovery_request(raw: &[u8]) -> Result<DiscoveryRequest> {
    let (body, _) = frame::unframe(raw)?;
    let doc: Value = serde_json::from_slice(body).map_err(|_| ProtoError::MalformedJson)?;
    if doc.get("method").and_then(Value::as_str) != Some("discovery_request") {
        return Err(ProtoError::MissingRequiredField("method".into()));
    }
    let nonce_b64 = doc
        .pointer("/params/nonce")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtoError::MissingRequiredField("params.nonce".into()))?;
    let nonce = B64.decode(nonce_b64).map_err(|_| ProtoError::BadBase64("params.nonce".into()))?;
    if nonce.is_empty() {
        return Err(ProtoError::MissingRequiredField("params.nonce".into()));
    }
    let app_version = doc
        .pointer("/params/app_version")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtoError::MissingRequiredField("params.app_version".into()))?
        .to_string();
    Ok(DiscoveryRequest { nonce, app_version })
}

/// Produces the framed response: length prefix, JSON body, tag trailer.
pub fn encode_discovery_response(resp: &DiscoveryResponse) -> Vec<u8> {
    frame::frame(&resp.body_json(), &resp.auth_tag)
}

fn required<'v>(obj: &'v Map<String, Value>, key: &str) -> Result<&'v Value> {
    obj.get(key).ok_or_else(|| ProtoError::MissingRequiredField(key.into()))
}

fn required_str(obj: &Map<String, Value>, key: &str) -> Result<String> {
    required(obj, key)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| ProtoError::MissingRequiredField(key.into()))
}

fn required_bool(obj: &Map<String, Value>, key: &str) -> Result<bool> {
    required(obj, key)?.as_bool().ok_or_else(|| ProtoError::MissingRequiredField(key.into()))
}

const KNOWN_RESULT_KEYS: &[&str] = &[
    "device_id",
    "owner",
    "device_name",
    "device_type",
    "device_model",
    "ip",
    "mac",
    "port",
    "hardware_version",
    "firmware_version",
    "factory_default",
    "is_support_iot_cloud",
    "mgt_encrypt_schm",
];

/// Parses a framed discovery response. Unknown `result` fields land in
/// `extras`; the frame trailer becomes `auth_tag`. The tag is not verified
/// here — screening against the shared secret is the receiver's decision.
pub fn parse_discovery_response(raw: &[u8]) -> Result<DiscoveryResponse> {
    let (body, trailer) = frame::unframe(raw)?;
    let text = std::str::from_utf8(body).map_err(|_| ProtoError::MalformedJson)?;
    let doc: Value = serde_json::from_str(text).map_err(|_| ProtoError::MalformedJson)?;
    let top = doc.as_object().ok_or(ProtoError::MalformedJson)?;
    let error_code = required(top, "error_code")?
        .as_i64()
        .ok_or_else(|| ProtoError::MissingRequiredField("error_code".into()))?;
    let result = required(top, "result")?
        .as_object()
        .ok_or_else(|| ProtoError::MissingRequiredField("result".into()))?;

    let scheme_value = required(result, "mgt_encrypt_schm")?
        .as_object()
        .ok_or_else(|| ProtoError::MissingRequiredField("mgt_encrypt_schm".into()))?;
    let mgt_encrypt_schm = EncryptScheme {
        is_support_https: required_bool(scheme_value, "is_support_https")?,
        encrypt_type: required_str(scheme_value, "encrypt_type")?,
        http_port: required(scheme_value, "http_port")?
            .as_u64()
            .ok_or_else(|| ProtoError::MissingRequiredField("http_port".into()))?
            as u16,
    };

    let mut extras = BTreeMap::new();
    for (k, v) in result {
        if !KNOWN_RESULT_KEYS.contains(&k.as_str()) {
            extras.insert(k.clone(), v.clone());
        }
    }

    Ok(DiscoveryResponse {
        device_id: required_str(result, "device_id")?,
        owner: result.get("owner").and_then(Value::as_str).map(str::to_string),
        device_name: result.get("device_name").and_then(Value::as_str).map(str::to_string),
        device_type: required_str(result, "device_type")?,
        device_model: required_str(result, "device_model")?,
        ip: required_str(result, "ip")?,
        mac: required_str(result, "mac")?,
        port: result.get("port").and_then(Value::as_u64).map(|p| p as u16),
        hardware_version: result.get("hardware_version").and_then(Value::as_str).map(str::to_string),
        firmware_version: result.get("firmware_version").and_then(Value::as_str).map(str::to_string),
        factory_default: required_bool(result, "factory_default")?,
        is_support_iot_cloud: required_bool(result, "is_support_iot_cloud")?,
        mgt_encrypt_schm,
        error_code,
        auth_tag: trailer.to_vec(),
        extras,
    })
}
