use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("loss node must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("loss mask has no observed entries")]
    EmptyMask,
    #[error("step count must be non-negative, got {0}")]
    NegativeSteps(i64),
    #[error("need at least {needed} observations, got {got}")]
    InsufficientObservations { needed: usize, got: usize },
    #[error("observed values have zero variance")]
    ZeroVariance,
    #[error("need at least {needed} observed asleep heart-rate minutes, got {got}")]
    InsufficientSleep { needed: usize, got: usize },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("signature length {got} does not match model signature size {expected}")]
    SignatureLength { expected: usize, got: usize },
    #[error("series of length {len} is shorter than the requested window {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("feature width {got} does not match trained width {expected}")]
    FeatureWidth { expected: usize, got: usize },
    #[error("no samples to fit")]
    NoSamples,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("class starvation: need {needed} persons per class, smallest class has {got}")]
    ClassStarvation { needed: usize, got: usize },
    #[error("all differences are zero")]
    AllZeroDifferences,
    #[error("need at least {needed} persons, got {got}")]
    TooFewPersons { needed: usize, got: usize },
    #[error("person {0} is missing its second collection window")]
    MissingWindow(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
