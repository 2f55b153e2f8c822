//! Quantified protocol invariants: codec round trips, MAC forgeability,
//! deterministic encryption under the static IV, and key agreement.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use proto_core::discovery::{encode_discovery_response, parse_discovery_response};
use proto_core::*;

fn hex_string() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[0-9a-f]{8,32}").unwrap()
}

fn arb_response() -> impl Strategy<Value = DiscoveryResponse> {
    (
        hex_string(),
        proptest::option::of(hex_string()),
        proptest::option::of("[A-Za-z_]{1,12}"),
        any::<bool>(),
        any::<bool>(),
        any::<bool>(),
        proptest::option::of(any::<u16>()),
        0u16..9999,
    )
        .prop_map(
            |(device_id, owner, device_name, factory_default, iot_cloud, https, port, http_port)| {
                DiscoveryResponse {
                    device_id,
                    owner,
                    device_name,
                    device_type: "SMART.TAPOBULB".into(),
                    device_model: "L530E".into(),
                    ip: "192.168.0.5".into(),
                    mac: "00-11-22-33-44-55".into(),
                    port,
                    hardware_version: None,
                    firmware_version: Some("1.1.9".into()),
                    factory_default,
                    is_support_iot_cloud: iot_cloud,
                    mgt_encrypt_schm: EncryptScheme {
                        is_support_https: https,
                        encrypt_type: "AES".into(),
                        http_port,
                    },
                    error_code: 0,
                    auth_tag: Vec::new(),
                    extras: BTreeMap::new(),
                }
            },
        )
}

proptest! {
    #[test]
    fn discovery_response_roundtrip(mut resp in arb_response()) {
        resp.sign(&DiscoverySecret::hardcoded());
        let parsed = parse_discovery_response(&encode_discovery_response(&resp)).unwrap();
        prop_assert_eq!(parsed, resp);
    }

    #[test]
    fn key_request_roundtrip(seed in any::<u64>(), request_id in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (req, _) = tskep_initiate(&mut rng, request_id);
        prop_assert_eq!(parse_key_request(&encode_key_request(&req)).unwrap(), req);
    }

    #[test]
    fn key_response_roundtrip(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (req, _) = tskep_initiate(&mut rng, 1);
        let (resp, _) = tskep_respond(&req, &mut rng, SessionPolicies::vulnerable(), 0).unwrap();
        prop_assert_eq!(parse_key_response(&encode_key_response(&resp)).unwrap(), resp);
    }

    #[test]
    fn session_message_roundtrip(seed in any::<u64>(), ts in any::<u32>(), on in any::<bool>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut key = [0u8; SESSION_KEY_LEN];
        rng.fill_bytes(&mut key);
        let ctx = SessionContext::new(
            key,
            IvPolicy::RandomIv,
            FreshnessPolicy::NoTimestampCheck,
            "dev",
            0,
        );
        let mut msg = SessionMessage::new(
            "set_device_info",
            serde_json::json!({"device_on": on}),
            u64::from(ts),
        );
        seal_session_message(&ctx, &mut msg, &mut rng);
        prop_assert_eq!(open_session_message(&ctx, &msg.ciphertext).unwrap(), msg);
    }
}

#[test]
fn mac_forgeability_100_random_bodies() {
    // A tag minted by the "attacker" instance of the constant verifies under
    // the "app" instance, for 100 random bodies.
    let attacker = DiscoverySecret::hardcoded();
    let app = DiscoverySecret::hardcoded();
    let mut rng = ChaCha20Rng::seed_from_u64(0xF06E);
    for _ in 0..100 {
        let mut body = vec![0u8; 64];
        rng.fill_bytes(&mut body);
        let tag = mac_sign(&body, &attacker);
        assert!(mac_verify(&body, &tag, &app));
    }
}

#[test]
fn static_iv_encryption_is_pure_over_100_trials() {
    let mut rng = ChaCha20Rng::seed_from_u64(0x51A7);
    for _ in 0..100 {
        let mut key = [0u8; SESSION_KEY_LEN];
        rng.fill_bytes(&mut key);
        let ctx = SessionContext::new(
            key,
            IvPolicy::StaticIv,
            FreshnessPolicy::NoTimestampCheck,
            "dev",
            0,
        );
        let mut plaintext = vec![0u8; 48];
        rng.fill_bytes(&mut plaintext);
        let a = session_encrypt(&ctx, &plaintext, &mut rng);
        let b = session_encrypt(&ctx, &plaintext, &mut rng);
        assert_eq!(a, b);
    }
}

#[test]
fn key_agreement_over_100_seeded_runs() {
    for seed in 0..100u64 {
        let mut initiator_rng = ChaCha20Rng::seed_from_u64(seed);
        let mut responder_rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(0x1000));
        let (req, state) = tskep_initiate(&mut initiator_rng, seed);
        let (resp, responder_ctx) =
            tskep_respond(&req, &mut responder_rng, SessionPolicies::vulnerable(), 0).unwrap();
        let initiator_ctx =
            tskep_finalize(&resp, &state, SessionPolicies::vulnerable(), "dev", 0).unwrap();
        assert_eq!(initiator_ctx.session_key, responder_ctx.session_key);
    }
}
