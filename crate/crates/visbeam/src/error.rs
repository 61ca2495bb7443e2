use std::path::Path;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    MissingInput(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    BadMagic(String),
    #[error("{0}")]
    Truncated(String),
    #[error("{0}")]
    Version(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] visbeam_core::Error),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            return Error::MissingInput(format!("{}: not found", path.display()));
        }
        Error::Io { path: path.display().to_string(), source }
    }

    /// Process exit status; distinct per failure class. 2 is left to
    /// argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 3,
            Error::MissingInput(_) => 4,
            Error::Parse(_) => 5,
            Error::BadMagic(_) => 6,
            Error::Truncated(_) => 7,
            Error::Version(_) => 8,
            Error::Io { .. } => 9,
            Error::Core(_) => 10,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::MissingInput(_) => "missing-input",
            Error::Parse(_) => "parse",
            Error::BadMagic(_) => "bad-magic",
            Error::Truncated(_) => "truncated",
            Error::Version(_) => "version",
            Error::Io { .. } => "io",
            Error::Core(_) => "compute",
        }
    }

    /// `error=<kind> code=<n> message=<text>` on one line.
    pub fn one_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error={} code={} message={}", self.kind(), self.exit_code(), msg)
    }
}
