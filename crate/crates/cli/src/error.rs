use std::fmt;

/// Process exit codes.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CAPABILITY: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const RES_HINT: &str = "res requires batched data; provide M2 ≥ 2 or use --bin";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    /// Manifest verification found mismatching hashes.
    Tampered(Vec<String>),
    Core { err: koopvar::Error, hint: Option<&'static str> },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        use koopvar::Error as E;
        match self {
            CliError::Config(_) | CliError::Tampered(_) => EXIT_CONFIG,
            CliError::Core { err, .. } => match err {
                E::Parse { .. } | E::Schema(_) | E::Domain(_) | E::Io(_) | E::Json(_) => EXIT_CONFIG,
                E::Capability(_) => EXIT_CAPABILITY,
                E::Rank(_) | E::EmptyResult(_) | E::Instability(_) | E::Numerical(_) => EXIT_NUMERICAL,
            },
        }
    }

    /// Attach a remediation hint to capability errors.
    pub fn with_res_hint(self) -> Self {
        match self {
            CliError::Core { err: err @ koopvar::Error::Capability(_), .. } => {
                CliError::Core { err, hint: Some(RES_HINT) }
            }
            other => other,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Tampered(items) => write!(f, "manifest mismatch: {}", items.join("; ")),
            CliError::Core { err, hint: None } => write!(f, "{err}"),
            CliError::Core { err, hint: Some(h) } => write!(f, "{err}\nhint: {h}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<koopvar::Error> for CliError {
    fn from(err: koopvar::Error) -> Self {
        CliError::Core { err, hint: None }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        koopvar::Error::Io(err).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        koopvar::Error::Json(err).into()
    }
}

pub type CliResult<T> = Result<T, CliError>;
