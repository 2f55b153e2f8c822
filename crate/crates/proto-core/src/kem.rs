//! Key encapsulation for the session-key exchange.
//!
//! The responder wraps a fresh 16-byte session key so that only the holder of
//! the initiator's private key can recover it. The construction is a hashed
//! ephemeral Diffie-Hellman over the 2048-bit MODP group from RFC 3526
//! (group 14) with a short confirmation tag, treated abstractly as
//! wrap/unwrap by everything above this module. The wrap proves nothing
//! about who performed it; that absence is deliberate.

use num_bigint::BigUint;
use num_traits::One;
use once_cell::sync::Lazy;
use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::error::{ProtoError, Result};
use crate::session::SESSION_KEY_LEN;

/// Group element width in bytes (2048 bits).
pub const ELEM_LEN: usize = 256;
const CONFIRM_LEN: usize = 8;
/// Wire size of a wrapped session key: ephemeral key, masked key, confirm tag.
pub const WRAPPED_LEN: usize = ELEM_LEN + SESSION_KEY_LEN + CONFIRM_LEN;

const MODP_2048_HEX: &str = "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E08\
8A67CC74020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245\
E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7EDEE386BFB5A899FA5AE9F24117C4B1FE649286651\
ECE45B3DC2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB\
9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3BE39E772C180E86039B2783A2\
EC07A28FB5C55DF06F4C52C9DE2BCBF6955817183995497CEA956AE515D2261898FA051015728E5A8AACAA68\
FFFFFFFFFFFFFFFF";

pub(crate) static MODULUS: Lazy<BigUint> =
    Lazy::new(|| BigUint::parse_bytes(MODP_2048_HEX.as_bytes(), 16).expect("valid hex"));
pub(crate) static GENERATOR: Lazy<BigUint> = Lazy::new(|| BigUint::from(2u32));
/// Prime order of the subgroup generated by 2 (the modulus is a safe prime).
pub(crate) static SUBGROUP_ORDER: Lazy<BigUint> =
    Lazy::new(|| (&*MODULUS - BigUint::one()) >> 1);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey(BigUint);

impl PublicKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        to_fixed_be(&self.0)
    }

    /// Decodes and range-checks a wire-format public key.
    pub fn from_bytes(raw: &[u8]) -> Result<Self> {
        if raw.len() != ELEM_LEN {
            return Err(ProtoError::MalformedPublicKey);
        }
        let value = BigUint::from_bytes_be(raw);
        let two = BigUint::from(2u32);
        if value < two || value > &*MODULUS - &two {
            return Err(ProtoError::MalformedPublicKey);
        }
        Ok(PublicKey(value))
    }
}

#[derive(Debug, Clone)]
pub struct KeyPair {
    secret: BigUint,
    pub public: PublicKey,
}

impl KeyPair {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        let secret = random_exponent(rng);
        let public = PublicKey(GENERATOR.modpow(&secret, &MODULUS));
        KeyPair { secret, public }
    }
}

pub(crate) fn random_exponent(rng: &mut impl RngCore) -> BigUint {
    loop {
        let mut buf = [0u8; 32];
        rng.fill_bytes(&mut buf);
        let candidate = BigUint::from_bytes_be(&buf);
        if candidate >= BigUint::from(2u32) {
            return candidate;
        }
    }
}

pub(crate) fn to_fixed_be(value: &BigUint) -> Vec<u8> {
    let raw = value.to_bytes_be();
    let mut out = vec![0u8; ELEM_LEN - raw.len()];
    out.extend_from_slice(&raw);
    out
}

fn mask_for(shared: &BigUint) -> [u8; SESSION_KEY_LEN] {
    let mut hasher = Sha256::new();
    hasher.update(b"session-key-wrap");
    hasher.update(to_fixed_be(shared));
    let digest = hasher.finalize();
    let mut mask = [0u8; SESSION_KEY_LEN];
    mask.copy_from_slice(&digest[..SESSION_KEY_LEN]);
    mask
}

fn confirm_for(shared: &BigUint, key: &[u8; SESSION_KEY_LEN]) -> [u8; CONFIRM_LEN] {
    let mut hasher = Sha256::new();
    hasher.update(b"session-key-confirm");
    hasher.update(to_fixed_be(shared));
    hasher.update(key);
    let digest = hasher.finalize();
    let mut tag = [0u8; CONFIRM_LEN];
    tag.copy_from_slice(&digest[..CONFIRM_LEN]);
    tag
}

/// Wraps `key` to the holder of `recipient`'s private key.
pub fn wrap(recipient: &PublicKey, key: &[u8; SESSION_KEY_LEN], rng: &mut impl RngCore) -> Vec<u8> {
    let eph_secret = random_exponent(rng);
    let eph_public = GENERATOR.modpow(&eph_secret, &MODULUS);
    let shared = recipient.0.modpow(&eph_secret, &MODULUS);
    let mask = mask_for(&shared);
    let mut out = to_fixed_be(&eph_public);
    for (i, b) in key.iter().enumerate() {
        out.push(b ^ mask[i]);
    }
    out.extend_from_slice(&confirm_for(&shared, key));
    out
}

/// Recovers the wrapped key, or fails if it was wrapped to a different key.
pub fn unwrap(keypair: &KeyPair, wrapped: &[u8]) -> Result<[u8; SESSION_KEY_LEN]> {
    if wrapped.len() != WRAPPED_LEN {
        return Err(ProtoError::UnwrapFailure);
    }
    let eph_public = PublicKey::from_bytes(&wrapped[..ELEM_LEN]).map_err(|_| ProtoError::UnwrapFailure)?;
    let shared = eph_public.0.modpow(&keypair.secret, &MODULUS);
    let mask = mask_for(&shared);
    let mut key = [0u8; SESSION_KEY_LEN];
    for i in 0..SESSION_KEY_LEN {
        key[i] = wrapped[ELEM_LEN + i] ^ mask[i];
    }
    if confirm_for(&shared, &key)[..] != wrapped[ELEM_LEN + SESSION_KEY_LEN..] {
        return Err(ProtoError::UnwrapFailure);
    }
    Ok(key)
}
