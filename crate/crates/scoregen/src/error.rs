use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Every problem found in a configuration, reported together.
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error(transparent)]
    Core(#[from] scoregen_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// An input file that does not parse or has the wrong shape.
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
}

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(vec![msg.into()])
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    pub fn input(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        HarnessError::Input { path: path.into(), message: message.into() }
    }

    /// 2 for bad configuration or inputs, 3 for numeric failure, 4 for a
    /// violated certificate, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        use scoregen_core::Error as E;
        match self {
            HarnessError::Config(_) | HarnessError::Input { .. } => 2,
            HarnessError::Io { .. } => 1,
            HarnessError::Core(e) => match e {
                E::Numeric(_) => 3,
                E::Certificate(_) | E::Construction(_) => 4,
                E::Domain(_) | E::Empty(_) | E::Dimension { .. } | E::ParamCap { .. } => 2,
            },
        }
    }
}
