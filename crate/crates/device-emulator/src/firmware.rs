//! Firmware modes and the vulnerability-exposure truth table.
//!
//! Exposure flags describe what an adjacent attacker can exploit on a given
//! (profile, mode) pair. The camera's TLS transport masks everything but the
//! shared discovery secret even on vulnerable firmware; fixed firmware closes
//! everything but that same secret, which was never patched.

use std::collections::BTreeSet;

use proto_core::{FreshnessPolicy, IvPolicy, SessionPolicies};

use crate::error::{DeviceError, Result};
use crate::profile::{DeviceModel, Mode};

/// Timestamp acceptance window for firmware that checks freshness.
pub const FIXED_TIMESTAMP_WINDOW_SECS: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Vuln {
    /// No authentication of the device toward the app during key exchange.
    V1,
    /// Hardcoded short shared secret authenticating discovery.
    V2,
    /// Deterministic symmetric encryption (static IV).
    V3,
    /// No message freshness checks.
    V4,
}

impl Vuln {
    pub const ALL: [Vuln; 4] = [Vuln::V1, Vuln::V2, Vuln::V3, Vuln::V4];

    pub fn as_str(&self) -> &'static str {
        match self {
            Vuln::V1 => "V1",
            Vuln::V2 => "V2",
            Vuln::V3 => "V3",
            Vuln::V4 => "V4",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmwareMode {
    pub mode: Mode,
    pub vuln_flags: BTreeSet<Vuln>,
}

impl FirmwareMode {
    /// The canonical exposure row for a (model, mode) pair.
    pub fn canonical(model: DeviceModel, mode: Mode) -> Self {
        FirmwareMode { mode, vuln_flags: canonical_flags(model, mode) }
    }

    /// Validates supplied flags against the canonical row.
    pub fn checked(model: DeviceModel, mode: Mode, vuln_flags: BTreeSet<Vuln>) -> Result<Self> {
        if vuln_flags != canonical_flags(model, mode) {
            return Err(DeviceError::InconsistentFlags);
        }
        Ok(FirmwareMode { mode, vuln_flags })
    }

    pub fn exposes(&self, vuln: Vuln) -> bool {
        self.vuln_flags.contains(&vuln)
    }

    /// Session policies of this firmware generation. The camera only ever
    /// shipped the legacy generation; its TLS transport is what masks the
    /// legacy behaviors from an adjacent attacker (hence its exposure row
    /// lists V2 only).
    pub fn session_policies(&self) -> SessionPolicies {
        match self.mode {
            Mode::Vulnerable => SessionPolicies {
                iv_policy: IvPolicy::StaticIv,
                freshness_policy: FreshnessPolicy::NoTimestampCheck,
            },
            Mode::Fixed => SessionPolicies {
                iv_policy: IvPolicy::RandomIv,
                freshness_policy: FreshnessPolicy::TimestampWindow(FIXED_TIMESTAMP_WINDOW_SECS),
            },
        }
    }

    /// Whether the key-exchange responder signs the exchange transcript.
    pub fn provides_identity_proof(&self) -> bool {
        self.mode == Mode::Fixed
    }
}

pub fn canonical_flags(model: DeviceModel, mode: Mode) -> BTreeSet<Vuln> {
    match (model, mode) {
        (DeviceModel::C200, _) | (_, Mode::Fixed) => [Vuln::V2].into_iter().collect(),
        (_, Mode::Vulnerable) => Vuln::ALL.into_iter().collect(),
    }
}
