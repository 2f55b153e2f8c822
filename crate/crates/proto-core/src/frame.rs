//! Length-prefixed framing envelope.
//!
//! Every wire message is `u32 big-endian body length || body || trailer`.
//! The trailer is empty for most messages; discovery responses carry their
//! 16-byte authentication tag there.

use crate::error::{ProtoError, Result};

pub const LEN_PREFIX: usize = 4;

/// Wraps a body (and optional trailer) in the framing envelope.
pub fn frame(body: &[u8], trailer: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(LEN_PREFIX + body.len() + trailer.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out.extend_from_slice(trailer);
    out
}

/// Splits a frame into `(body, trailer)`. The trailer is whatever follows
/// the declared body length; it may be empty.
pub fn unframe(raw: &[u8]) -> Result<(&[u8], &[u8])> {
    if raw.len() < LEN_PREFIX {
        return Err(ProtoError::MalformedJson);
    }
    let len = u32::from_be_bytes([raw[0], raw[1], raw[2], raw[3]]) as usize;
    let rest = &raw[LEN_PREFIX..];
    if rest.len() < len {
        return Err(ProtoError::MalformedJson);
    }
    Ok((&rest[..len], &rest[len..]))
}
