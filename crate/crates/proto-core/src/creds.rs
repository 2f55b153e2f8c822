//! Account and network credentials, and the two messages that carry them.
//!
//! During association the app ships the full credential set to the device in
//! a `set_qs_info` request, everything base64 except the email, which only
//! ever appears as a digest. On an already-configured device the app
//! authenticates each session with a `login_device` request carrying the
//! digest and the base64 password.

use base64::Engine as _;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{ProtoError, Result};
use crate::session::SessionMessage;

const B64: base64::engine::GeneralPurpose = base64::engine::general_purpose::STANDARD;

/// Digest algorithm applied to the account email. The real protocol's choice
/// is not modeled here; this is a testbed constant, kept configurable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DigestAlgo {
    #[default]
    Sha256Hex,
}

pub fn email_digest_with(algo: DigestAlgo, email: &str) -> String {
    match algo {
        DigestAlgo::Sha256Hex => hex(&Sha256::digest(email.as_bytes())),
    }
}

/// Digest of the account email under the default algorithm.
pub fn email_digest(email: &str) -> String {
    email_digest_with(DigestAlgo::Sha256Hex, email)
}

/// Account owner identifier as it appears in discovery responses. Derived
/// independently of the email digest so knowing one does not reveal the
/// other.
pub fn owner_id(email: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"tapo-owner:");
    hasher.update(email.as_bytes());
    hex(&hasher.finalize())[..40].to_string()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything the victim configures: cloud account plus local network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credentials {
    pub tapo_email: String,
    pub tapo_password: String,
    pub wifi_ssid: String,
    pub wifi_password: String,
    pub email_digest: String,
}

impl Credentials {
    pub fn new(
        tapo_email: impl Into<String>,
        tapo_password: impl Into<String>,
        wifi_ssid: impl Into<String>,
        wifi_password: impl Into<String>,
    ) -> Self {
        let tapo_email = tapo_email.into();
        let email_digest = email_digest(&tapo_email);
        Credentials {
            tapo_email,
            tapo_password: tapo_password.into(),
            wifi_ssid: wifi_ssid.into(),
            wifi_password: wifi_password.into(),
            email_digest,
        }
    }

    pub fn owner_id(&self) -> String {
        owner_id(&self.tapo_email)
    }
}

/// Builds the association request. All credential fields are base64; the
/// email is represented only by its digest. The owner id rides along so the
/// device can record its account binding.
pub fn build_set_qs_info(creds: &Credentials, timestamp: u64) -> SessionMessage {
    SessionMessage::new(
        "set_qs_info",
        json!({
            "account": {
                "owner_id": creds.owner_id(),
                "email_digest": creds.email_digest,
                "password": B64.encode(&creds.tapo_password),
            },
            "wifi": {
                "ssid": B64.encode(&creds.wifi_ssid),
                "password": B64.encode(&creds.wifi_password),
            },
        }),
        timestamp,
    )
}

fn b64_field(params: &Value, pointer: &str) -> Result<String> {
    let raw = params
        .pointer(pointer)
        .and_then(Value::as_str)
        .ok_or_else(|| ProtoError::MissingRequiredField(pointer.trim_start_matches('/').replace('/', ".")))?;
    let bytes = B64
        .decode(raw)
        .map_err(|_| ProtoError::BadBase64(pointer.trim_start_matches('/').replace('/', ".")))?;
    String::from_utf8(bytes).map_err(|_| ProtoError::BadBase64(pointer.trim_start_matches('/').replace('/', ".")))
}

/// Recovers the credentials from a `set_qs_info` request. The email itself
/// is not recoverable; only its digest travels, so `tapo_email` comes back
/// empty.
pub fn parse_set_qs_info(msg: &SessionMessage) -> Result<Credentials> {
    if msg.method != "set_qs_info" {
        return Err(ProtoError::NotQsInfo);
    }
    let email_digest = msg
        .params
        .pointer("/account/email_digest")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtoError::MissingRequiredField("account.email_digest".into()))?
        .to_string();
    Ok(Credentials {
        tapo_email: String::new(),
        tapo_password: b64_field(&msg.params, "/account/password")?,
        wifi_ssid: b64_field(&msg.params, "/wifi/ssid")?,
        wifi_password: b64_field(&msg.params, "/wifi/password")?,
        email_digest,
    })
}

/// Builds the per-session authentication request used against an
/// already-configured device.
pub fn build_login_device(creds: &Credentials, timestamp: u64) -> SessionMessage {
    SessionMessage::new(
        "login_device",
        json!({
            "username": creds.email_digest,
            "password": B64.encode(&creds.tapo_password),
        }),
        timestamp,
    )
}

/// Extracts `(email_digest, password)` from a `login_device` request.
pub fn parse_login_device(msg: &SessionMessage) -> Result<(String, String)> {
    if msg.method != "login_device" {
        return Err(ProtoError::NotLoginDevice);
    }
    let digest = msg
        .params
        .get("username")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtoError::MissingRequiredField("username".into()))?
        .to_string();
    let password_b64 = msg
        .params
        .get("password")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtoError::MissingRequiredField("password".into()))?;
    let password = B64
        .decode(password_b64)
        .ok()
        .and_then(|b| String::from_utf8(b).ok())
        .ok_or_else(|| ProtoError::BadBase64("password".into()))?;
    Ok((digest, password))
}
