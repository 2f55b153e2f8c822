//! Protocol-level error type shared by all codecs and crypto helpers.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtoError {
    /// Input is not a well-formed frame or JSON document.
    #[error("malformed JSON payload")]
    MalformedJson,

    /// A field the wire contract requires is absent.
    #[error("missing required field: {0}")]
    MissingRequiredField(String),

    /// A base64-encoded field failed to decode.
    #[error("invalid base64 in field: {0}")]
    BadBase64(String),

    /// Message is not a `set_qs_info` request.
    #[error("not a set_qs_info message")]
    NotQsInfo,

    /// Message is not a `login_device` request.
    #[error("not a login_device message")]
    NotLoginDevice,

    /// PKCS#7 padding check failed after block decryption.
    #[error("bad padding")]
    BadPadding,

    /// Ciphertext length is not a positive multiple of the block size.
    #[error("bad ciphertext length")]
    BadLength,

    /// Public key bytes do not decode to a valid group element.
    #[error("malformed public key")]
    MalformedPublicKey,

    /// Wrapped session key failed its confirmation check.
    #[error("session key unwrap failure")]
    UnwrapFailure,

    /// Key response references a request id with no pending state.
    #[error("unknown request id: {0}")]
    UnknownRequestId(u64),
}

pub type Result<T> = std::result::Result<T, ProtoError>;
