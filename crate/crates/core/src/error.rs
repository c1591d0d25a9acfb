use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("truncated record: {len} bytes is not a multiple of {record}")]
    Truncated { len: usize, record: usize },
    #[error("non-finite value in record {index}")]
    NonFinite { index: usize },
    #[error("count mismatch: expected {expected}, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("unmapped raw class id {0}")]
    UnmappedClass(u32),
    #[error("row {row}: row sum {sum} outside tolerance")]
    RowSum { row: usize, sum: f64 },
    #[error("row {row}: entry {value} outside [0, 1]")]
    ProbRange { row: usize, value: f64 },
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("class {class} outside 1..={n}")]
    ClassOutOfRange { class: u16, n: usize },
    #[error("zero-range point")]
    ZeroRange,
    #[error("grid has no projected pixel")]
    EmptyGrid,
    #[error("invalid sensor spec: {0}")]
    InvalidSensor(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dispersion needs n >= 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("empty result set")]
    EmptyDataset,
    #[error("duplicate frame id {0}")]
    DuplicateFrame(u32),
    #[error("degenerate dataset: {0}")]
    Degenerate(String),
    #[error("schema mismatch: model {model:016x}, data {data:016x}")]
    SchemaMismatch { model: u64, data: u64 },
    #[error("fewer groups ({groups}) than folds ({folds})")]
    TooFewGroups { groups: usize, folds: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("both classes must be present")]
    SingleClass,
    #[error("no positive samples")]
    NoPositives,
    #[error("bad format: {0}")]
    Format(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
