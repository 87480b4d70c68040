use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("softmax over a row with every entry masked")]
    DegenerateDistribution,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("label id {id} out of range for vocabulary of size {size}")]
    LabelOutOfRange { id: usize, size: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("alignment constraint admits no path")]
    InfeasibleConstraint,
    #[error("context config parse error at byte {pos}: {msg}")]
    ConfigParse { pos: usize, msg: String },
    #[error("config depth {got} does not match encoder depth {expected}")]
    DepthMismatch { expected: usize, got: usize },
    #[error("unsupported config: {0}")]
    Unsupported(String),
    #[error("shared layer {layer} has right context {right} (must be 0)")]
    SharedPrefix { layer: usize, right: usize },
    #[error("invalid state: {0}")]
    State(&'static str),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl core::fmt::Display, got: impl core::fmt::Display) -> Self {
        use alloc::string::ToString;
        Error::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
