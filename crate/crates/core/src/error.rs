use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("zero valid rows")]
    NoValidRows,

    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("need at least {required} points, got {got}")]
    TooFewPoints { required: usize, got: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("bootstrap aborted: only {ok} of {total} replicates succeeded (need {required})")]
    BootstrapFailed {
        ok: usize,
        total: usize,
        required: usize,
    },

    #[error("inning exceeded {0} plate appearances")]
    PlateAppearanceCap(usize),

    #[error("zone model: {0}")]
    ZoneModel(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
