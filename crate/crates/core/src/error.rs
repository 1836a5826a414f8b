use thiserror::Error;

/// Errors raised by the library.
///
/// Messages are prefixed by the module that raised them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Mesh(String),
    #[error("{0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the input description rather than the numerics.
    pub fn is_input(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Mesh(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
