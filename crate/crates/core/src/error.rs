use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("dataset is empty after preprocessing")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("structural error: {0}")]
    Structure(String),

    #[error("optimization diverged at iteration {iteration}: {message}")]
    Divergence { iteration: usize, message: String },

    #[error("training diverged at epoch {epoch}, minibatch {minibatch}: non-finite loss")]
    TrainingDivergence { epoch: usize, minibatch: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parameter file: {0}")]
    ParamFile(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input data rather than bad arguments or numerics.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::MissingColumn(_)
            | Error::Row { .. }
            | Error::EmptyDataset
            | Error::Structure(_)
            | Error::ParamFile(_)
            | Error::Csv(_)
            | Error::Io(_) => true,
            Error::Fold { source, .. } => source.is_data_error(),
            _ => false,
        }
    }

    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Divergence { .. } | Error::TrainingDivergence { .. } => true,
            Error::Fold { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
