//! Emulated device family: five profiles (three bulbs, a plug, a camera),
//! each runnable in vulnerable or fixed firmware mode, speaking discovery,
//! the key exchange protocol, association, and command handling over the
//! simulated fabric.

pub mod actor;
pub mod error;
pub mod firmware;
pub mod profile;
pub mod state;

pub use actor::DeviceActor;
pub use error::{DeviceError, Result};
pub use firmware::{canonical_flags, FirmwareMode, Vuln, FIXED_TIMESTAMP_WINDOW_SECS};
pub use profile::{ConfigChannel, DeviceCatalog, DeviceModel, DeviceProfile, Mode};
pub use state::{
    reply_code, spawn_device, BehaviorOverrides, DeviceAddress, DeviceState, Lifecycle,
    SEEN_TIMESTAMPS_CAP,
};
