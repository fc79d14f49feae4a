use std::path::PathBuf;

use satl_core::ErrorKind;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },

    #[error(transparent)]
    Core(satl_core::Error),
}

impl From<satl_core::Error> for CliError {
    fn from(e: satl_core::Error) -> Self {
        match e {
            satl_core::Error::Config(message) => CliError::Config { line: None, message },
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.into(),
            message: e.to_string(),
        }
    }

    /// 1 configuration or I/O, 2 numerical, 3 truncation, 4 fit or doublet.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Io { .. } => 1,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Numerical => 2,
                ErrorKind::Truncation => 3,
                ErrorKind::Fit => 4,
            },
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Core(e) => e.code(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "error": self.code(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Config { line: Some(l), .. } = self {
            v["line"] = json!(l);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(satl_core::Error::ZeroSignal).exit_code(), 2);
        assert_eq!(CliError::from(satl_core::Error::Config("x".into())).exit_code(), 1);
        let t = satl_core::Error::TruncationFailure { ceiling: 60, top_population: 0.1 };
        assert_eq!(CliError::from(t).exit_code(), 3);
        assert_eq!(CliError::from(satl_core::Error::Doublet { n_peaks: 2 }).exit_code(), 4);
        assert_eq!(CliError::from(satl_core::Error::Fit("x".into())).exit_code(), 4);
    }

    #[test]
    fn error_json_shape() {
        let e = CliError::Config { line: Some(3), message: "bad".into() };
        let v = e.to_json();
        assert_eq!(v["error"], "config");
        assert_eq!(v["line"], 3);
        assert_eq!(v["message"], "line 3: bad");
        let z = CliError::from(satl_core::Error::ZeroSignal).to_json();
        assert_eq!(z["error"], "zero-signal");
        assert_eq!(z["exit_code"], 2);
        assert!(z.get("line").is_none());
    }
}
