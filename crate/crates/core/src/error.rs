use std::fmt;

/// Errors produced by the toolkit.
///
/// Numeric operations report which operand failed validation, so a bad wiring
/// of layer shapes surfaces at the call site instead of as a silent index
/// panic deep inside a kernel.
#[derive(Debug)]
pub enum Error {
    /// Operand shapes or sizes do not line up.
    Dimension { op: &'static str, detail: String },
    /// A parameter value is outside its documented range.
    Parameter {
        op: &'static str,
        name: &'static str,
        detail: String,
    },
    /// An input left the mathematical domain of the operation
    /// (e.g. a zero-length limb fed to a log-ratio).
    Domain { op: &'static str, detail: String },
    /// A computation produced NaN or infinite values.
    NonFinite { op: &'static str },
    /// Configuration text could not be parsed or validated.
    Config(String),
    /// A pipeline stage was invoked before the stage it depends on.
    MissingStage {
        stage: String,
        requires: String,
        artifact: String,
    },
    /// Reading or writing an artifact failed at the I/O level.
    Io {
        context: String,
        source: std::io::Error,
    },
    /// An artifact file exists but its contents are not in the expected format.
    Format { path: String, detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, detail } => write!(f, "{op}: dimension mismatch: {detail}"),
            Error::Parameter { op, name, detail } => {
                write!(f, "{op}: invalid parameter `{name}`: {detail}")
            }
            Error::Domain { op, detail } => write!(f, "{op}: {detail}"),
            Error::NonFinite { op } => write!(f, "{op}: produced non-finite values"),
            Error::Config(detail) => write!(f, "config error: {detail}"),
            Error::MissingStage {
                stage,
                requires,
                artifact,
            } => write!(
                f,
                "stage `{stage}` requires `{artifact}` which is missing; run stage `{requires}` first"
            ),
            Error::Io { context, source } => write!(f, "{context}: {source}"),
            Error::Format { path, detail } => write!(f, "{path}: {detail}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    /// Wrap an I/O error with the path or action that triggered it.
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Error {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn messages_name_the_operation() {
        let e = Error::Dimension {
            op: "dense_forward",
            detail: "weight columns 3 != input length 4".into(),
        };
        let msg = e.to_string();
        assert!(msg.contains("dense_forward"));
        assert!(msg.contains("3"));
        assert!(msg.contains("4"));
    }

    #[test]
    fn missing_stage_names_the_prerequisite() {
        let e = Error::MissingStage {
            stage: "finetune".into(),
            requires: "ae".into(),
            artifact: "ae.plm".into(),
        };
        let msg = e.to_string();
        assert!(msg.contains("finetune"));
        assert!(msg.contains("ae.plm"));
        assert!(msg.contains("run stage `ae` first"));
    }
}
