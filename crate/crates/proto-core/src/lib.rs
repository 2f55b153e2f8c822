//! Shared protocol layer for the smart-device security testbed: message
//! formats and codecs, the discovery MAC, session cryptography, and the key
//! exchange state machines used by the app, device, and attacker emulators.
//!
//! Everything here is a deterministic pure function or an explicit state
//! value; callers own all randomness through the `RngCore` parameters.

pub mod creds;
pub mod discovery;
pub mod error;
pub mod frame;
pub mod identity;
pub mod kem;
pub mod mac;
pub mod session;
pub mod tskep;

pub use creds::{
    build_login_device, build_set_qs_info, email_digest, owner_id, parse_login_device,
    parse_set_qs_info, Credentials, DigestAlgo,
};
pub use discovery::{
    encode_discovery_request, encode_discovery_response, parse_discovery_request,
    parse_discovery_response, DiscoveryRequest, DiscoveryResponse, EncryptScheme,
};
pub use error::{ProtoError, Result};
pub use identity::{
    identity_sign, identity_verify, IdentityKeyPair, IdentityPublicKey, IdentityRegistry,
};
pub use mac::{mac_sign, mac_verify, DiscoverySecret, TAG_LEN};
pub use session::{
    encode_session_envelope, open_session_message, parse_session_envelope, seal_session_message,
    session_decrypt, session_encrypt, FreshnessPolicy, IvPolicy, SessionContext, SessionMessage,
    SESSION_KEY_LEN,
};
pub use tskep::{
    encode_key_request, encode_key_response, encode_proven_key_response, key_response_schema_fields,
    parse_key_request, parse_key_response, parse_proven_key_response, proof_transcript,
    tskep_finalize, tskep_initiate, tskep_respond, tskep_respond_proven, verify_proven_response,
    InitiatorState, KeyRequest, KeyResponse, ProvenKeyResponse, SessionPolicies,
};

/// Default UDP port the discovery broadcast is addressed to. Pure
/// configuration; nothing in the testbed derives behavior from it.
pub const DEFAULT_DISCOVERY_PORT: u16 = 20002;
