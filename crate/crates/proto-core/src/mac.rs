//! Discovery-response authentication.
//!
//! Every emulator instance — app, device, or attacker — holds the same
//! hardcoded short secret, so any party can mint tags that verify anywhere.
//! Tags are HMAC-SHA256 truncated to 16 bytes.

use hmac::{Hmac, Mac};
use sha2::Sha256;

pub const TAG_LEN: usize = 16;

/// The shared constant baked into every emulated firmware and app build.
const HARDCODED_KEY: [u8; 8] = [0x54, 0x61, 0x70, 0x6F, 0x31, 0x32, 0x33, 0x34];

/// Short shared secret keying the discovery MAC.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscoverySecret {
    key_bytes: Vec<u8>,
}

impl DiscoverySecret {
    /// The global constant every instance ships with.
    pub fn hardcoded() -> Self {
        DiscoverySecret { key_bytes: HARDCODED_KEY.to_vec() }
    }

    /// A secret with different bytes, for modeling an attacker who does not
    /// know the constant. Still capped at 8 bytes to keep the type honest.
    pub fn custom(key: &[u8]) -> Self {
        assert!(key.len() <= 8, "discovery secret is short by construction");
        DiscoverySecret { key_bytes: key.to_vec() }
    }

    pub fn key_len(&self) -> usize {
        self.key_bytes.len()
    }

    pub fn key_bytes(&self) -> &[u8] {
        &self.key_bytes
    }
}

/// Computes the 16-byte tag over a discovery body.
pub fn mac_sign(body: &[u8], secret: &DiscoverySecret) -> Vec<u8> {
    let mut mac = Hmac::<Sha256>::new_from_slice(&secret.key_bytes).expect("any key length");
    mac.update(body);
    mac.finalize().into_bytes()[..TAG_LEN].to_vec()
}

/// True iff `tag` equals the tag freshly computed over `body`.
pub fn mac_verify(body: &[u8], tag: &[u8], secret: &DiscoverySecret) -> bool {
    tag == mac_sign(body, secret).as_slice()
}
