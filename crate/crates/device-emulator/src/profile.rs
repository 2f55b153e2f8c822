//! Device profiles: the static description of each emulated model, loadable
//! from a declarative JSON catalog.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{DeviceError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
pub enum DeviceModel {
    L530E,
    L510E,
    L630,
    P100,
    C200,
}

impl DeviceModel {
    pub const ALL: [DeviceModel; 5] =
        [DeviceModel::L530E, DeviceModel::L510E, DeviceModel::L630, DeviceModel::P100, DeviceModel::C200];

    pub fn as_str(&self) -> &'static str {
        match self {
            DeviceModel::L530E => "L530E",
            DeviceModel::L510E => "L510E",
            DeviceModel::L630 => "L630",
            DeviceModel::P100 => "P100",
            DeviceModel::C200 => "C200",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "L530E" | "L530" => Some(DeviceModel::L530E),
            "L510E" | "L510" => Some(DeviceModel::L510E),
            "L630" => Some(DeviceModel::L630),
            "P100" => Some(DeviceModel::P100),
            "C200" => Some(DeviceModel::C200),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum ConfigChannel {
    #[serde(rename = "WIFI_AP")]
    WifiAp,
    #[serde(rename = "BLUETOOTH")]
    Bluetooth,
}

#[derive(Debug, Clone, Deserialize)]
struct RawFirmware {
    vulnerable: String,
    #[serde(default)]
    fixed: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct RawProfile {
    model: DeviceModel,
    device_type: String,
    config_channel: ConfigChannel,
    supports_https: bool,
    hardware_version: String,
    firmware: RawFirmware,
    #[serde(default)]
    vulnerable_aliases: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct RawCatalog {
    profiles: Vec<RawProfile>,
}

/// Static description of one device model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceProfile {
    pub model: DeviceModel,
    pub device_type: String,
    pub config_channel: ConfigChannel,
    pub supports_https: bool,
    pub hardware_version: String,
    /// Firmware version per mode; no entry means that mode does not exist
    /// for this model.
    pub firmware_versions: BTreeMap<Mode, String>,
    /// Additional version strings that behave identically to `vulnerable`.
    pub vulnerable_aliases: Vec<String>,
}

impl DeviceProfile {
    pub fn version_for(&self, mode: Mode) -> Option<&str> {
        self.firmware_versions.get(&mode).map(String::as_str)
    }

    pub fn http_port(&self) -> u16 {
        if self.supports_https {
            443
        } else {
            80
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    Vulnerable,
    Fixed,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Vulnerable => "vulnerable",
            Mode::Fixed => "fixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vulnerable" => Some(Mode::Vulnerable),
            "fixed" => Some(Mode::Fixed),
            _ => None,
        }
    }
}

/// All known profiles, keyed by model.
#[derive(Debug, Clone)]
pub struct DeviceCatalog {
    profiles: BTreeMap<DeviceModel, DeviceProfile>,
}

const BUILTIN_CATALOG: &str = include_str!("../profiles/default.json");

impl DeviceCatalog {
    /// The catalog shipped with the emulator.
    pub fn builtin() -> Self {
        Self::from_json_str(BUILTIN_CATALOG).expect("builtin catalog is valid")
    }

    pub fn from_json_str(raw: &str) -> Result<Self> {
        let raw: RawCatalog =
            serde_json::from_str(raw).map_err(|e| DeviceError::BadCatalog(e.to_string()))?;
        let mut profiles = BTreeMap::new();
        for p in raw.profiles {
            let mut firmware_versions = BTreeMap::new();
            firmware_versions.insert(Mode::Vulnerable, p.firmware.vulnerable);
            if let Some(fixed) = p.firmware.fixed {
                firmware_versions.insert(Mode::Fixed, fixed);
            }
            profiles.insert(
                p.model,
                DeviceProfile {
                    model: p.model,
                    device_type: p.device_type,
                    config_channel: p.config_channel,
                    supports_https: p.supports_https,
                    hardware_version: p.hardware_version,
                    firmware_versions,
                    vulnerable_aliases: p.vulnerable_aliases,
                },
            );
        }
        Ok(DeviceCatalog { profiles })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| DeviceError::BadCatalog(e.to_string()))?;
        Self::from_json_str(&raw)
    }

    pub fn get(&self, model: DeviceModel) -> &DeviceProfile {
        &self.profiles[&model]
    }

    pub fn profiles(&self) -> impl Iterator<Item = &DeviceProfile> {
        self.profiles.values()
    }
}
