//! Symmetric key exchange between app and responder.
//!
//! The initiator sends an ephemeral public key; the responder generates a
//! 16-byte session key and returns it wrapped under that key. In the
//! vulnerable protocol the response carries nothing that binds the responder
//! to an identity — `KeyResponse` has no such field by construction, and any
//! party holding the request can answer it. Fixed firmware answers with a
//! [`ProvenKeyResponse`] that signs the exchange transcript.

use base64::Engine as _;
use rand::RngCore;
use serde_json::{json, Value};

use crate::error::{ProtoError, Result};
use crate::frame;
use crate::identity::{identity_sign, identity_verify, IdentityKeyPair, IdentityPublicKey};
use crate::kem::{self, KeyPair, PublicKey};
use crate::session::{FreshnessPolicy, IvPolicy, SessionContext, SESSION_KEY_LEN};

const B64: base64::engine::GeneralPurpose = base64::engine::general_purpose::STANDARD;

/// First message of the exchange: the initiator's ephemeral public key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRequest {
    pub initiator_public_key: Vec<u8>,
    pub request_id: u64,
}

/// Responder's answer. There is deliberately no identity or signature field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyResponse {
    pub wrapped_session_key: Vec<u8>,
    pub request_id: u64,
}

/// Fixed-firmware answer: the plain response plus a transcript signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvenKeyResponse {
    pub response: KeyResponse,
    pub device_id: String,
    pub proof: Vec<u8>,
}

/// Initiator-side private state kept until the response arrives.
#[derive(Debug, Clone)]
pub struct InitiatorState {
    pub request_id: u64,
    keypair: KeyPair,
}

/// IV and freshness policies a session should be created with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionPolicies {
    pub iv_policy: IvPolicy,
    pub freshness_policy: FreshnessPolicy,
}

impl SessionPolicies {
    pub fn vulnerable() -> Self {
        SessionPolicies {
            iv_policy: IvPolicy::StaticIv,
            freshness_policy: FreshnessPolicy::NoTimestampCheck,
        }
    }

    pub fn fixed(window_secs: u64) -> Self {
        SessionPolicies {
            iv_policy: IvPolicy::RandomIv,
            freshness_policy: FreshnessPolicy::TimestampWindow(window_secs),
        }
    }
}

/// Starts an exchange: fresh keypair, request carrying its public half.
pub fn tskep_initiate(rng: &mut impl RngCore, request_id: u64) -> (KeyRequest, InitiatorState) {
    let keypair = KeyPair::generate(rng);
    let request = KeyRequest {
        initiator_public_key: keypair.public.to_bytes(),
        request_id,
    };
    (request, InitiatorState { request_id, keypair })
}

/// Answers a request. No credential of any kind is needed to execute this.
pub fn tskep_respond(
    req: &KeyRequest,
    rng: &mut impl RngCore,
    policies: SessionPolicies,
    now_secs: u64,
) -> Result<(KeyResponse, SessionContext)> {
    let initiator_key = PublicKey::from_bytes(&req.initiator_public_key)?;
    let mut session_key = [0u8; SESSION_KEY_LEN];
    rng.fill_bytes(&mut session_key);
    let wrapped = kem::wrap(&initiator_key, &session_key, rng);
    let response = KeyResponse { wrapped_session_key: wrapped, request_id: req.request_id };
    let ctx = SessionContext::new(
        session_key,
        policies.iv_policy,
        policies.freshness_policy,
        String::new(),
        now_secs,
    );
    Ok((response, ctx))
}

/// Transcript covered by the fixed-firmware identity proof. Binding the
/// initiator key prevents a relay from substituting its own.
pub fn proof_transcript(resp: &KeyResponse, initiator_public_key: &[u8]) -> Vec<u8> {
    let mut out = resp.request_id.to_be_bytes().to_vec();
    out.extend_from_slice(initiator_public_key);
    out.extend_from_slice(&resp.wrapped_session_key);
    out
}

/// Fixed-firmware responder: wraps the key and signs the transcript.
pub fn tskep_respond_proven(
    req: &KeyRequest,
    rng: &mut impl RngCore,
    policies: SessionPolicies,
    now_secs: u64,
    identity: &IdentityKeyPair,
    device_id: &str,
) -> Result<(ProvenKeyResponse, SessionContext)> {
    let (response, ctx) = tskep_respond(req, rng, policies, now_secs)?;
    let proof = identity_sign(identity, &proof_transcript(&response, &req.initiator_public_key), rng);
    Ok((ProvenKeyResponse { response, device_id: device_id.to_string(), proof }, ctx))
}

/// Checks a proven response against a pinned device key.
pub fn verify_proven_response(
    proven: &ProvenKeyResponse,
    initiator_public_key: &[u8],
    pinned: &IdentityPublicKey,
) -> bool {
    identity_verify(
        pinned,
        &proof_transcript(&proven.response, initiator_public_key),
        &proven.proof,
    )
}

/// Completes the exchange on the initiator side. The peer identity recorded
/// here is whatever discovery claimed; nothing checks it.
pub fn tskep_finalize(
    resp: &KeyResponse,
    state: &InitiatorState,
    policies: SessionPolicies,
    peer_claimed_identity: &str,
    now_secs: u64,
) -> Result<SessionContext> {
    if resp.request_id != state.request_id {
        return Err(ProtoError::UnknownRequestId(resp.request_id));
    }
    let session_key = kem::unwrap(&state.keypair, &resp.wrapped_session_key)?;
    Ok(SessionContext::new(
        session_key,
        policies.iv_policy,
        policies.freshness_policy,
        peer_claimed_identity,
        now_secs,
    ))
}

pub fn encode_key_request(req: &KeyRequest) -> Vec<u8> {
    let body = serde_json::to_vec(&json!({
        "method": "handshake",
        "params": {
            "key": B64.encode(&req.initiator_public_key),
            "request_id": req.request_id,
        },
    }))
    .expect("JSON object");
    frame::frame(&body, &[])
}

pub fn parse_key_request(raw: &[u8]) -> Result<KeyRequest> {
    let (body, _) = frame::unframe(raw)?;
    let doc: Value = serde_json::from_slice(body).map_err(|_| ProtoError::MalformedJson)?;
    if doc.get("method").and_then(Value::as_str) != Some("handshake") {
        return Err(ProtoError::MissingRequiredField("method".into()));
    }
    let key = doc
        .pointer("/params/key")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtoError::MissingRequiredField("params.key".into()))?;
    let request_id = doc
        .pointer("/params/request_id")
        .and_then(Value::as_u64)
        .ok_or_else(|| ProtoError::MissingRequiredField("params.request_id".into()))?;
    let initiator_public_key =
        B64.decode(key).map_err(|_| ProtoError::BadBase64("params.key".into()))?;
    Ok(KeyRequest { initiator_public_key, request_id })
}

pub fn encode_key_response(resp: &KeyResponse) -> Vec<u8> {
    let body = serde_json::to_vec(&json!({
        "error_code": 0,
        "result": {
            "key": B64.encode(&resp.wrapped_session_key),
            "request_id": resp.request_id,
        },
    }))
    .expect("JSON object");
    frame::frame(&body, &[])
}

pub fn parse_key_response(raw: &[u8]) -> Result<KeyResponse> {
    let (body, _) = frame::unframe(raw)?;
    let doc: Value = serde_json::from_slice(body).map_err(|_| ProtoError::MalformedJson)?;
    let key = doc
        .pointer("/result/key")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtoError::MissingRequiredField("result.key".into()))?;
    let request_id = doc
        .pointer("/result/request_id")
        .and_then(Value::as_u64)
        .ok_or_else(|| ProtoError::MissingRequiredField("result.request_id".into()))?;
    let wrapped_session_key =
        B64.decode(key).map_err(|_| ProtoError::BadBase64("result.key".into()))?;
    Ok(KeyResponse { wrapped_session_key, request_id })
}

pub fn encode_proven_key_response(resp: &ProvenKeyResponse) -> Vec<u8> {
    let body = serde_json::to_vec(&json!({
        "error_code": 0,
        "result": {
            "key": B64.encode(&resp.response.wrapped_session_key),
            "request_id": resp.response.request_id,
            "device_id": resp.device_id,
            "identity_proof": B64.encode(&resp.proof),
        },
    }))
    .expect("JSON object");
    frame::frame(&body, &[])
}

pub fn parse_proven_key_response(raw: &[u8]) -> Result<ProvenKeyResponse> {
    let response = parse_key_response(raw)?;
    let (body, _) = frame::unframe(raw)?;
    let doc: Value = serde_json::from_slice(body).map_err(|_| ProtoError::MalformedJson)?;
    let device_id = doc
        .pointer("/result/device_id")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtoError::MissingRequiredField("result.device_id".into()))?
        .to_string();
    let proof_b64 = doc
        .pointer("/result/identity_proof")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtoError::MissingRequiredField("result.identity_proof".into()))?;
    let proof =
        B64.decode(proof_b64).map_err(|_| ProtoError::BadBase64("result.identity_proof".into()))?;
    Ok(ProvenKeyResponse { response, device_id, proof })
}

/// Serialized field set of [`KeyResponse`], for schema-level assertions.
pub fn key_response_schema_fields(resp: &KeyResponse) -> Vec<String> {
    let raw = encode_key_response(resp);
    let (body, _) = frame::unframe(&raw).expect("own encoding");
    let doc: Value = serde_json::from_slice(body).expect("own encoding");
    doc.pointer("/result")
        .and_then(Value::as_object)
        .map(|m| m.keys().cloned().collect())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn agreement_both_sides() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let (req, state) = tskep_initiate(&mut rng, 1);
        let (resp, responder_ctx) =
            tskep_respond(&req, &mut rng, SessionPolicies::vulnerable(), 10).unwrap();
        let initiator_ctx =
            tskep_finalize(&resp, &state, SessionPolicies::vulnerable(), "dev-1", 10).unwrap();
        assert_eq!(initiator_ctx.session_key, responder_ctx.session_key);
        assert_eq!(initiator_ctx.session_key.len(), SESSION_KEY_LEN);
        assert_eq!(initiator_ctx.peer_claimed_identity, "dev-1");
    }

    #[test]
    fn different_seeds_different_public_keys() {
        let (a, _) = tskep_initiate(&mut ChaCha20Rng::seed_from_u64(1), 1);
        let (b, _) = tskep_initiate(&mut ChaCha20Rng::seed_from_u64(2), 1);
        assert_ne!(a.initiator_public_key, b.initiator_public_key);
    }

    #[test]
    fn request_codec_roundtrip() {
        let (req, _) = tskep_initiate(&mut ChaCha20Rng::seed_from_u64(3), 7);
        assert_eq!(parse_key_request(&encode_key_request(&req)).unwrap(), req);
    }

    #[test]
    fn response_codec_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (req, _) = tskep_initiate(&mut rng, 9);
        let (resp, _) = tskep_respond(&req, &mut rng, SessionPolicies::vulnerable(), 0).unwrap();
        assert_eq!(parse_key_response(&encode_key_response(&resp)).unwrap(), resp);
    }

    #[test]
    fn garbage_public_key_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let req = KeyRequest { initiator_public_key: b"not a key".to_vec(), request_id: 1 };
        let err = tskep_respond(&req, &mut rng, SessionPolicies::vulnerable(), 0).unwrap_err();
        assert_eq!(err, ProtoError::MalformedPublicKey);
    }

    #[test]
    fn stale_request_id_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let (req, state) = tskep_initiate(&mut rng, 2);
        let (mut resp, _) = tskep_respond(&req, &mut rng, SessionPolicies::vulnerable(), 0).unwrap();
        resp.request_id = 99;
        let err = tskep_finalize(&resp, &state, SessionPolicies::vulnerable(), "", 0).unwrap_err();
        assert_eq!(err, ProtoError::UnknownRequestId(99));
    }

    #[test]
    fn wrong_recipient_wrap_fails_finalize() {
        // Oracle: wrap under an independently generated keypair and try to
        // finalize with the original initiator state.
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let (_, state) = tskep_initiate(&mut rng, 3);
        let (other_req, _) = tskep_initiate(&mut rng, 3);
        let (resp, _) =
            tskep_respond(&other_req, &mut rng, SessionPolicies::vulnerable(), 0).unwrap();
        let err = tskep_finalize(&resp, &state, SessionPolicies::vulnerable(), "", 0).unwrap_err();
        assert_eq!(err, ProtoError::UnwrapFailure);
    }

    #[test]
    fn anyone_can_respond() {
        // A party with no device credential completes the exchange and the
        // initiator accepts the key.
        let mut app_rng = ChaCha20Rng::seed_from_u64(8);
        let mut attacker_rng = ChaCha20Rng::seed_from_u64(1008);
        let (req, state) = tskep_initiate(&mut app_rng, 4);
        let (resp, attacker_ctx) =
            tskep_respond(&req, &mut attacker_rng, SessionPolicies::vulnerable(), 0).unwrap();
        let app_ctx =
            tskep_finalize(&resp, &state, SessionPolicies::vulnerable(), "forged-dev", 0).unwrap();
        assert_eq!(app_ctx.session_key, attacker_ctx.session_key);
    }

    #[test]
    fn key_response_carries_no_identity_field() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (req, _) = tskep_initiate(&mut rng, 5);
        let (resp, _) = tskep_respond(&req, &mut rng, SessionPolicies::vulnerable(), 0).unwrap();
        let fields = key_response_schema_fields(&resp);
        assert_eq!(fields, vec!["key".to_string(), "request_id".to_string()]);
        for forbidden in ["identity", "identity_proof", "signature", "certificate", "device_id"] {
            assert!(!fields.iter().any(|f| f == forbidden));
        }
    }

    #[test]
    fn proven_response_verifies_and_binds_initiator() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let identity = IdentityKeyPair::generate(&mut rng);
        let (req, state) = tskep_initiate(&mut rng, 6);
        let (proven, _) = tskep_respond_proven(
            &req,
            &mut rng,
            SessionPolicies::fixed(30),
            0,
            &identity,
            "dev-6",
        )
        .unwrap();
        assert!(verify_proven_response(&proven, &req.initiator_public_key, &identity.public));
        // A different initiator key must not validate (anti-relay binding).
        let (other_req, _) = tskep_initiate(&mut rng, 6);
        assert!(!verify_proven_response(&proven, &other_req.initiator_public_key, &identity.public));
        // And the session still finalizes for the honest initiator.
        let ctx =
            tskep_finalize(&proven.response, &state, SessionPolicies::fixed(30), "dev-6", 0).unwrap();
        assert_eq!(ctx.iv_policy, IvPolicy::RandomIv);
    }

    #[test]
    fn proven_codec_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let identity = IdentityKeyPair::generate(&mut rng);
        let (req, _) = tskep_initiate(&mut rng, 12);
        let (proven, _) = tskep_respond_proven(
            &req,
            &mut rng,
            SessionPolicies::fixed(30),
            0,
            &identity,
            "dev-12",
        )
        .unwrap();
        let parsed = parse_proven_key_response(&encode_proven_key_response(&proven)).unwrap();
        assert_eq!(parsed, proven);
    }
}
