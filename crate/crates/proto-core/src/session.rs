//! Encrypted session layer: AES-128-CBC with PKCS#7 padding.
//!
//! The IV policy is the observable difference between firmware generations:
//! `StaticIv` uses the all-zero block for every message, so equal plaintexts
//! produce equal ciphertexts; `RandomIv` draws a fresh IV per message and
//! prepends it to the ciphertext.

use aes::cipher::{block_padding::Pkcs7, BlockDecryptMut, BlockEncryptMut, KeyIvInit};
use rand::RngCore;
use serde_json::{json, Map, Value};

use crate::error::{ProtoError, Result};
use crate::frame;

type Aes128CbcEnc = cbc::Encryptor<aes::Aes128>;
type Aes128CbcDec = cbc::Decryptor<aes::Aes128>;

pub const SESSION_KEY_LEN: usize = 16;
pub const BLOCK_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IvPolicy {
    /// Fixed all-zero IV; encryption is deterministic.
    StaticIv,
    /// Fresh random IV prepended to every ciphertext.
    RandomIv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreshnessPolicy {
    /// Accept any timestamp, including exact replays.
    NoTimestampCheck,
    /// Reject messages outside `±window` seconds or already seen.
    TimestampWindow(u64),
}

/// Negotiated session state held by each side after the key exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionContext {
    pub session_key: [u8; SESSION_KEY_LEN],
    pub iv_policy: IvPolicy,
    pub freshness_policy: FreshnessPolicy,
    /// Identity the peer claimed during discovery. Nothing verifies it.
    pub peer_claimed_identity: String,
    /// Simulated-time seconds at establishment.
    pub established_at: u64,
}

impl SessionContext {
    pub fn new(
        session_key: [u8; SESSION_KEY_LEN],
        iv_policy: IvPolicy,
        freshness_policy: FreshnessPolicy,
        peer_claimed_identity: impl Into<String>,
        established_at: u64,
    ) -> Self {
        SessionContext {
            session_key,
            iv_policy,
            freshness_policy,
            peer_claimed_identity: peer_claimed_identity.into(),
            established_at,
        }
    }
}

/// Encrypts under the context's key and IV policy.
pub fn session_encrypt(ctx: &SessionContext, plaintext: &[u8], rng: &mut impl RngCore) -> Vec<u8> {
    match ctx.iv_policy {
        IvPolicy::StaticIv => {
            let iv = [0u8; BLOCK_LEN];
            Aes128CbcEnc::new(&ctx.session_key.into(), &iv.into())
                .encrypt_padded_vec_mut::<Pkcs7>(plaintext)
        }
        IvPolicy::RandomIv => {
            let mut iv = [0u8; BLOCK_LEN];
            rng.fill_bytes(&mut iv);
            let ct = Aes128CbcEnc::new(&ctx.session_key.into(), &iv.into())
                .encrypt_padded_vec_mut::<Pkcs7>(plaintext);
            let mut out = iv.to_vec();
            out.extend_from_slice(&ct);
            out
        }
    }
}

/// Inverse of [`session_encrypt`]; validates length and padding.
pub fn session_decrypt(ctx: &SessionContext, ciphertext: &[u8]) -> Result<Vec<u8>> {
    let (iv, body) = match ctx.iv_policy {
        IvPolicy::StaticIv => ([0u8; BLOCK_LEN], ciphertext),
        IvPolicy::RandomIv => {
            if ciphertext.len() < BLOCK_LEN {
                return Err(ProtoError::BadLength);
            }
            let mut iv = [0u8; BLOCK_LEN];
            iv.copy_from_slice(&ciphertext[..BLOCK_LEN]);
            (iv, &ciphertext[BLOCK_LEN..])
        }
    };
    if body.is_empty() || body.len() % BLOCK_LEN != 0 {
        return Err(ProtoError::BadLength);
    }
    Aes128CbcDec::new(&ctx.session_key.into(), &iv.into())
        .decrypt_padded_vec_mut::<Pkcs7>(body)
        .map_err(|_| ProtoError::BadPadding)
}

/// One application-layer request or reply. The plaintext fields are what the
/// ciphertext decrypts to; only the ciphertext crosses the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionMessage {
    pub method: String,
    pub params: Value,
    pub timestamp: u64,
    pub ciphertext: Vec<u8>,
}

impl SessionMessage {
    pub fn new(method: impl Into<String>, params: Value, timestamp: u64) -> Self {
        SessionMessage { method: method.into(), params, timestamp, ciphertext: Vec::new() }
    }

    /// A generic reply carrying an error code and optional result fields.
    pub fn response(error_code: i64, result: Value, timestamp: u64) -> Self {
        let mut params = Map::new();
        params.insert("error_code".into(), json!(error_code));
        if let Value::Object(extra) = result {
            for (k, v) in extra {
                params.insert(k, v);
            }
        }
        SessionMessage::new("response", Value::Object(params), timestamp)
    }

    /// Error code carried by a reply, if this is one.
    pub fn error_code(&self) -> Option<i64> {
        self.params.get("error_code").and_then(Value::as_i64)
    }

    fn plaintext_json(&self) -> Vec<u8> {
        let mut doc = Map::new();
        doc.insert("method".into(), json!(self.method));
        doc.insert("params".into(), self.params.clone());
        doc.insert("timestamp".into(), json!(self.timestamp));
        serde_json::to_vec(&Value::Object(doc)).expect("JSON object")
    }
}

/// Fills in `msg.ciphertext` from its plaintext fields.
pub fn seal_session_message(ctx: &SessionContext, msg: &mut SessionMessage, rng: &mut impl RngCore) {
    msg.ciphertext = session_encrypt(ctx, &msg.plaintext_json(), rng);
}

/// Decrypts and parses a sealed message, reconstructing all fields.
pub fn open_session_message(ctx: &SessionContext, ciphertext: &[u8]) -> Result<SessionMessage> {
    let plain = session_decrypt(ctx, ciphertext)?;
    let doc: Value = serde_json::from_slice(&plain).map_err(|_| ProtoError::MalformedJson)?;
    let obj = doc.as_object().ok_or(ProtoError::MalformedJson)?;
    let method = obj
        .get("method")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtoError::MissingRequiredField("method".into()))?
        .to_string();
    let params = obj
        .get("params")
        .cloned()
        .ok_or_else(|| ProtoError::MissingRequiredField("params".into()))?;
    let timestamp = obj
        .get("timestamp")
        .and_then(Value::as_u64)
        .ok_or_else(|| ProtoError::MissingRequiredField("timestamp".into()))?;
    Ok(SessionMessage { method, params, timestamp, ciphertext: ciphertext.to_vec() })
}

/// Frames a sealed message for the wire. Only the ciphertext is carried.
pub fn encode_session_envelope(msg: &SessionMessage) -> Vec<u8> {
    use base64::Engine as _;
    let body = serde_json::to_vec(&json!({
        "method": "securePassthrough",
        "params": { "request": base64::engine::general_purpose::STANDARD.encode(&msg.ciphertext) },
    }))
    .expect("JSON object");
    frame::frame(&body, &[])
}

/// Extracts the ciphertext from a framed passthrough envelope.
pub fn parse_session_envelope(raw: &[u8]) -> Result<Vec<u8>> {
    use base64::Engine as _;
    let (body, _) = frame::unframe(raw)?;
    let doc: Value = serde_json::from_slice(body).map_err(|_| ProtoError::MalformedJson)?;
    if doc.get("method").and_then(Value::as_str) != Some("securePassthrough") {
        return Err(ProtoError::MissingRequiredField("method".into()));
    }
    let request = doc
        .pointer("/params/request")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtoError::MissingRequiredField("params.request".into()))?;
    base64::engine::general_purpose::STANDARD
        .decode(request)
        .map_err(|_| ProtoError::BadBase64("params.request".into()))
}
