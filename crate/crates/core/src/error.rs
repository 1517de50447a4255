use std::fmt;
use std::path::PathBuf;

/// One problem found while validating a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Every diagnostic from one validation pass, so the user sees all of them at once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigReport {
    pub items: Vec<Diagnostic>,
}

impl ConfigReport {
    pub fn push(&mut self, field: &str, message: impl Into<String>) {
        self.items.push(Diagnostic { field: field.to_string(), message: message.into() });
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn has_field(&self, field: &str) -> bool {
        self.items.iter().any(|d| d.field == field)
    }

    pub fn into_result(self) -> Result<()> {
        if self.items.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(self))
        }
    }
}

impl fmt::Display for ConfigReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.items.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration:\n{0}")]
    Config(ConfigReport),
    #[error("invalid argument: {0}")]
    Domain(String),
    #[error("integration failed at t = {t} fs: {reason}")]
    Integration { t: f64, reason: String },
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("malformed grid file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Analysis(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
