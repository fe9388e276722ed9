use thiserror::Error;

/// Errors raised by the construction, search and verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("level {level} is outside the supported range 0..={max}")]
    LevelTooLarge { level: i64, max: u32 },

    #[error("level must be non-negative, got {0}")]
    NegativeLevel(i64),

    #[error("index {index} out of range for {what} of size {size}")]
    IndexOutOfRange {
        what: &'static str,
        index: u64,
        size: u64,
    },

    #[error("invalid partition of the characters of level {level}: {reason}")]
    PartitionInvalid { level: u32, reason: String },

    #[error("strategy {strategy} is not available at level {level}")]
    StrategyUnavailable { strategy: String, level: u32 },

    #[error("missing data for level {0}")]
    MissingLevelData(u32),

    #[error("bad parameter: {0}")]
    BadParameter(String),

    #[error("the level-{level} functional has no form through level {level} - 1")]
    FormUnavailable { level: u32 },

    #[error("operator truncated at level {truncation} cannot evaluate level {level}")]
    TruncationTooSmall { level: u32, truncation: u32 },

    #[error("block at level {level} has {got} coordinates, expected {expected}")]
    BlockLength {
        level: u32,
        got: usize,
        expected: usize,
    },

    #[error("no witness level exists for m = {0}")]
    NoWitness(String),

    #[error("split depth {depth} unreachable: {reason}")]
    DepthUnreachable { depth: usize, reason: String },

    #[error("dimension {0} exceeds the supported maximum of 4")]
    DimensionTooLarge(usize),

    #[error("basis vectors are linearly dependent or zero")]
    DegenerateBasis,

    #[error("empty level set")]
    EmptyLevels,
}

pub type Result<T> = std::result::Result<T, Error>;
