use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("incomplete table: {0}")]
    IncompleteTable(String),
    #[error("cannot balance dataset: {0}")]
    Balance(String),
    #[error("cannot convert network: {0}")]
    Conversion(String),
    #[error("detection failed: {0}")]
    Detection(String),
    #[error("label encoding: {0}")]
    Encoding(String),
}

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
