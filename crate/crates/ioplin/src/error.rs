use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("training failed: {0}")]
    Training(#[source] ioplin_core::Error),

    #[error(transparent)]
    Core(#[from] ioplin_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status: 2 configuration, 3 data, 4 training.
    pub fn exit_code(&self) -> i32 {
        use ioplin_core::Error as C;
        match self {
            Error::Config(_) => 2,
            Error::Core(C::Config(_) | C::InvalidArgument(_)) => 2,
            Error::Training(_) => 4,
            Error::Core(C::NonFiniteLoss { .. }) => 4,
            _ => 3,
        }
    }
}
