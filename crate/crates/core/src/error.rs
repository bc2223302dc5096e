use thiserror::Error;

/// Problems found while reading or validating a scenario.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required field `{0}`")]
    Missing(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("unknown reference `{name}` in `{key}`")]
    DanglingReference { key: String, name: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            message: message.into(),
        }
    }
}

/// Faults raised while integrating.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("non-finite derivative at state index {index} ({name}) at t = {t} s")]
    NonFinite { index: usize, name: String, t: f64 },
    #[error("dVOC voltage magnitude state collapsed to {0}")]
    DegenerateMagnitude(f64),
}
