//! Responder identity proof used by fixed firmware.
//!
//! Vulnerable firmware proves nothing about the key-exchange responder.
//! Fixed firmware signs the exchange transcript with a device-held keypair
//! whose public half the app knows through a provisioning registry. The
//! scheme is a Schnorr-style discrete-log signature over the same group as
//! the key wrap.

use num_bigint::BigUint;
use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::error::{ProtoError, Result};
use crate::kem::{random_exponent, to_fixed_be, ELEM_LEN, GENERATOR, MODULUS, SUBGROUP_ORDER};

/// Wire size of a proof: commitment plus response, both fixed width.
pub const PROOF_LEN: usize = 2 * ELEM_LEN;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityPublicKey(BigUint);

impl IdentityPublicKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        to_fixed_be(&self.0)
    }

    pub fn from_bytes(raw: &[u8]) -> Result<Self> {
        if raw.len() != ELEM_LEN {
            return Err(ProtoError::MalformedPublicKey);
        }
        let value = BigUint::from_bytes_be(raw);
        let two = BigUint::from(2u32);
        if value < two || value > &*MODULUS - &two {
            return Err(ProtoError::MalformedPublicKey);
        }
        Ok(IdentityPublicKey(value))
    }
}

#[derive(Debug, Clone)]
pub struct IdentityKeyPair {
    secret: BigUint,
    pub public: IdentityPublicKey,
}

impl IdentityKeyPair {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        let secret = random_exponent(rng);
        let public = IdentityPublicKey(GENERATOR.modpow(&secret, &MODULUS));
        IdentityKeyPair { secret, public }
    }
}

fn challenge(commitment: &BigUint, public: &BigUint, message: &[u8]) -> BigUint {
    let mut hasher = Sha256::new();
    hasher.update(b"responder-identity-proof");
    hasher.update(to_fixed_be(commitment));
    hasher.update(to_fixed_be(public));
    hasher.update(message);
    BigUint::from_bytes_be(&hasher.finalize()) % &*SUBGROUP_ORDER
}

/// Signs `message` with the device identity key.
pub fn identity_sign(keypair: &IdentityKeyPair, message: &[u8], rng: &mut impl RngCore) -> Vec<u8> {
    let nonce = random_exponent(rng);
    let commitment = GENERATOR.modpow(&nonce, &MODULUS);
    let c = challenge(&commitment, &keypair.public.0, message);
    let s = (nonce + c * &keypair.secret) % &*SUBGROUP_ORDER;
    let mut out = to_fixed_be(&commitment);
    out.extend_from_slice(&to_fixed_be(&s));
    out
}

/// Verifies a proof against a known device public key.
pub fn identity_verify(public: &IdentityPublicKey, message: &[u8], proof: &[u8]) -> bool {
    if proof.len() != PROOF_LEN {
        return false;
    }
    let commitment = BigUint::from_bytes_be(&proof[..ELEM_LEN]);
    let s = BigUint::from_bytes_be(&proof[ELEM_LEN..]);
    if commitment < BigUint::from(2u32) || commitment >= *MODULUS {
        return false;
    }
    let c = challenge(&commitment, &public.0, message);
    let lhs = GENERATOR.modpow(&s, &MODULUS);
    let rhs = (commitment * public.0.modpow(&c, &MODULUS)) % &*MODULUS;
    lhs == rhs
}

/// Provisioning registry mapping device ids to their identity keys. Models
/// the vendor's signing infrastructure: genuine devices are registered at
/// manufacture; nothing an adjacent attacker does can add an entry.
#[derive(Debug, Clone, Default)]
pub struct IdentityRegistry {
    entries: std::collections::BTreeMap<String, IdentityPublicKey>,
}

impl IdentityRegistry {
    pub fn register(&mut self, device_id: impl Into<String>, key: IdentityPublicKey) {
        self.entries.insert(device_id.into(), key);
    }

    pub fn lookup(&self, device_id: &str) -> Option<&IdentityPublicKey> {
        self.entries.get(device_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sign_verify_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let kp = IdentityKeyPair::generate(&mut rng);
        let proof = identity_sign(&kp, b"transcript bytes", &mut rng);
        assert!(identity_verify(&kp.public, b"transcript bytes", &proof));
    }

    #[test]
    fn wrong_message_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let kp = IdentityKeyPair::generate(&mut rng);
        let proof = identity_sign(&kp, b"transcript bytes", &mut rng);
        assert!(!identity_verify(&kp.public, b"other bytes", &proof));
    }

    #[test]
    fn wrong_key_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let kp = IdentityKeyPair::generate(&mut rng);
        let other = IdentityKeyPair::generate(&mut rng);
        let proof = identity_sign(&kp, b"transcript bytes", &mut rng);
        assert!(!identity_verify(&other.public, b"transcript bytes", &proof));
    }

    #[test]
    fn garbage_proof_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let kp = IdentityKeyPair::generate(&mut rng);
        assert!(!identity_verify(&kp.public, b"m", b"junk"));
        assert!(!identity_verify(&kp.public, b"m", &vec![0u8; PROOF_LEN]));
    }
}
