use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid format `{0}`")]
    InvalidFormat(String),

    #[error("value {value} does not fit {format}")]
    IntOutOfRange { value: i64, format: String },

    #[error("bit pattern {bits:#x} does not fit a {width}-bit word")]
    BitsOutOfRange { bits: u64, width: u32 },

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("illegal fusion pattern `{0}`")]
    IllegalPattern(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{tenants} tenants do not fit {partitions} partitions")]
    TooManyTenants { tenants: usize, partitions: usize },

    #[error("energy table has no entry for `{0}`")]
    MissingEnergyEntry(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("decode error in field `{field}`: {detail}")]
    Decode { field: &'static str, detail: String },

    #[error("encode error in field `{field}`: value {value} out of range")]
    Encode { field: &'static str, value: u64 },

    #[error("line {line}: {detail}")]
    Asm { line: usize, detail: String },

    #[error("ordering violation on block {block}: `{instr}` not allowed in state {state}")]
    Ordering {
        block: usize,
        instr: &'static str,
        state: &'static str,
    },

    #[error("SPM access out of bounds: {len} bytes at {addr:#x} (SPM is {size} bytes)")]
    SpmOutOfBounds { addr: u64, len: u64, size: u64 },

    #[error("execution error: {0}")]
    Execution(String),

    #[error("schema error at `{field}`: {detail}")]
    Schema { field: String, detail: String },

    #[error("report mismatch: {0}")]
    ReportMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidFormat(_) => "invalid-format",
            Error::IntOutOfRange { .. } | Error::BitsOutOfRange { .. } => "out-of-range",
            Error::ModeMismatch(_) => "mode-mismatch",
            Error::IllegalPattern(_) => "illegal-pattern",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::TooManyTenants { .. } => "too-many-tenants",
            Error::MissingEnergyEntry(_) => "missing-energy-entry",
            Error::Unsupported(_) => "unsupported",
            Error::Decode { .. } => "decode",
            Error::Encode { .. } => "encode",
            Error::Asm { .. } => "asm",
            Error::Ordering { .. } => "ordering",
            Error::SpmOutOfBounds { .. } => "spm-out-of-bounds",
            Error::Execution(_) => "execution",
            Error::Schema { .. } => "schema",
            Error::ReportMismatch(_) => "report-mismatch",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}
