use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario {scenario} requires setup {required}, got {got}")]
    IncompatibleSetup { scenario: String, required: String, got: String },

    #[error("invalid scenario spec: {0}")]
    SpecValidation(String),

    #[error("grid is missing cell ({row}, {col})")]
    IncompleteGrid { row: String, col: String },

    #[error("matrix axes differ: {0}")]
    AxisMismatch(String),

    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),

    #[error("bad matrix or report JSON: {0}")]
    BadJson(String),

    #[error("device error: {0}")]
    Device(#[from] device_emulator::DeviceError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
