use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DeviceError {
    #[error("vulnerability flags are inconsistent with the profile and mode")]
    InconsistentFlags,

    #[error("device is already configured")]
    AlreadyConfigured,

    #[error("message timestamp outside the acceptance window")]
    StaleTimestamp,

    #[error("message timestamp already seen; replay rejected")]
    ReplayDetected,

    #[error("ciphertext did not decrypt to a valid message")]
    DecryptFailure,

    #[error("no session established")]
    NoSession,

    #[error("login credentials do not match the configured account")]
    LoginRejected,

    #[error("malformed request: {0}")]
    BadRequest(String),

    #[error("invalid device catalog: {0}")]
    BadCatalog(String),

    #[error("profile has no firmware for the requested mode")]
    NoSuchFirmware,
}

pub type Result<T> = std::result::Result<T, DeviceError>;
