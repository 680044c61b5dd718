use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("empty grid: study area too small to contain one site")]
    EmptyGrid,

    #[error("empty network: no UEs")]
    EmptyNetwork,

    #[error("unloaded BS rate undefined")]
    UnloadedBs,

    #[error("zero-rate served link (ue {ue}, bs {bs})")]
    ZeroRateLink { ue: usize, bs: usize },

    #[error("UE {ue} infeasible at current duals")]
    InfeasibleUe { ue: usize },

    #[error("reports come from different topology/channel snapshots")]
    SnapshotMismatch,

    #[error("no reports found in {0}")]
    NoReports(PathBuf),

    #[error("missing files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFiles(Vec<PathBuf>),

    #[error("malformed {what}: {reason}")]
    Malformed { what: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
