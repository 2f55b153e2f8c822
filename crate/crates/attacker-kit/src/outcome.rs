//! Structured results of an attack run.

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Scenario {
    #[serde(rename = "AS1")]
    As1FakeDiscovery,
    #[serde(rename = "AS2")]
    As2AccountExfiltration,
    #[serde(rename = "AS3")]
    As3MitmConfigured,
    #[serde(rename = "AS4")]
    As4Replay,
    #[serde(rename = "AS5")]
    As5MitmUnconfigured,
    #[serde(rename = "AS6")]
    As6UnconfiguredExfiltration,
    #[serde(rename = "DOWNGRADE_PROBE")]
    DowngradeProbe,
}

impl Scenario {
    pub const ATTACKS: [Scenario; 6] = [
        Scenario::As1FakeDiscovery,
        Scenario::As2AccountExfiltration,
        Scenario::As3MitmConfigured,
        Scenario::As4Replay,
        Scenario::As5MitmUnconfigured,
        Scenario::As6UnconfiguredExfiltration,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::As1FakeDiscovery => "AS1",
            Scenario::As2AccountExfiltration => "AS2",
            Scenario::As3MitmConfigured => "AS3",
            Scenario::As4Replay => "AS4",
            Scenario::As5MitmUnconfigured => "AS5",
            Scenario::As6UnconfiguredExfiltration => "AS6",
            Scenario::DowngradeProbe => "DOWNGRADE_PROBE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AS1" => Some(Scenario::As1FakeDiscovery),
            "AS2" => Some(Scenario::As2AccountExfiltration),
            "AS3" => Some(Scenario::As3MitmConfigured),
            "AS4" => Some(Scenario::As4Replay),
            "AS5" => Some(Scenario::As5MitmUnconfigured),
            "AS6" => Some(Scenario::As6UnconfiguredExfiltration),
            "DOWNGRADE_PROBE" | "PROBE" => Some(Scenario::DowngradeProbe),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AttackResult {
    #[serde(rename = "FEASIBLE")]
    Feasible,
    /// The attack executes but yields nothing exploitable.
    #[serde(rename = "FEASIBLE_NO_BENEFIT")]
    FeasibleNoBenefit,
    #[serde(rename = "INFEASIBLE")]
    Infeasible,
}

/// Why an attack failed, when it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Reason {
    #[serde(rename = "OK")]
    Ok,
    /// Traffic rides a TLS channel the attacker cannot join or read.
    #[serde(rename = "TLS_CHANNEL")]
    TlsChannel,
    /// Configuration happens over Bluetooth, out of the attacker's reach.
    #[serde(rename = "BLUETOOTH_CONFIG")]
    BluetoothConfig,
    /// The responder identity proof could not be forged.
    #[serde(rename = "IDENTITY_PROOF")]
    IdentityProof,
    /// Freshness checks rejected the replayed message.
    #[serde(rename = "TIMESTAMP_CHECK")]
    TimestampCheck,
    /// The app never acted on the forged response.
    #[serde(rename = "APP_REJECTED_RESPONSE")]
    AppRejectedResponse,
}

/// Credential material actually recovered from observed traffic, plus the
/// digests of the fabric deliveries it was decoded from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Loot {
    pub tapo_password: Option<String>,
    pub email_digest: Option<String>,
    pub wifi_ssid: Option<String>,
    pub wifi_password: Option<String>,
    pub replayed_effects: u32,
    pub forged_accepted: u32,
    /// SHA-256 digests of the deliveries the credential fields came from;
    /// each must appear in the fabric event log.
    pub provenance: Vec<String>,
}

fn digest_of(value: &str) -> String {
    let d = Sha256::digest(value.as_bytes());
    let hex: String = d.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

impl Loot {
    pub fn has_full_credentials(&self) -> bool {
        self.tapo_password.is_some()
            && self.email_digest.is_some()
            && self.wifi_ssid.is_some()
            && self.wifi_password.is_some()
    }

    /// Replaces recovered passwords by their digests for reports.
    pub fn redacted(&self) -> Loot {
        Loot {
            tapo_password: self.tapo_password.as_deref().map(digest_of),
            wifi_password: self.wifi_password.as_deref().map(digest_of),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttackOutcome {
    pub scenario: Scenario,
    pub result: AttackResult,
    pub reason: Reason,
    pub loot: Loot,
}

impl AttackOutcome {
    pub fn redacted(&self) -> AttackOutcome {
        AttackOutcome { loot: self.loot.redacted(), ..self.clone() }
    }
}
