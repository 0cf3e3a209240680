use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Advisory,
    Blocking,
}

/// A report-only diagnostic produced by validation or by a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: String,
    pub message: String,
}

impl Finding {
    pub fn new(severity: Severity, code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn info(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(Severity::Info, code, message)
    }

    pub fn advisory(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(Severity::Advisory, code, message)
    }

    pub fn blocking(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(Severity::Blocking, code, message)
    }

    pub fn is_blocking(&self) -> bool {
        self.severity == Severity::Blocking
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Info => "info",
            Severity::Advisory => "advisory",
            Severity::Blocking => "BLOCKING",
        };
        write!(f, "[{tag}] {}: {}", self.code, self.message)
    }
}
