use serde::Serialize;

/// Failure of a service operation, shared by the HTTP and CLI front ends.
#[derive(Debug, thiserror::Error)]
pub enum OpError {
    /// Malformed or out-of-range input. `path` names the offending field.
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    /// A box with zero or negative extent.
    #[error("{path}: {message}")]
    Degenerate { path: String, message: String },
    #[error("{0} not found")]
    NotFound(String),
    #[error("revision conflict: expected {expected}, current is {current}")]
    Conflict { expected: u64, current: u64 },
    /// The resource exists but is not in a state that allows the request.
    #[error("{0}")]
    NotReady(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl OpError {
    pub fn invalid(path: impl Into<String>, message: impl ToString) -> Self {
        OpError::Invalid {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn internal(e: impl ToString) -> Self {
        OpError::Internal(e.to_string())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            OpError::Invalid { .. } => "invalid",
            OpError::Degenerate { .. } => "degenerate",
            OpError::NotFound(_) => "not_found",
            OpError::Conflict { .. } => "conflict",
            OpError::NotReady(_) => "not_ready",
            OpError::Internal(_) => "internal",
        }
    }

    pub fn path(&self) -> Option<&str> {
        match self {
            OpError::Invalid { path, .. } | OpError::Degenerate { path, .. } => Some(path),
            _ => None,
        }
    }

    /// CLI exit status: 1 for internal failures, 2 for anything the caller can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            OpError::Internal(_) => 1,
            _ => 2,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            error: ErrorDetail {
                kind: self.kind(),
                message: self.to_string(),
                path: self.path().map(str::to_string),
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Serialize)]
pub struct ErrorDetail {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl From<cnocs_core::SceneError> for OpError {
    fn from(e: cnocs_core::SceneError) -> Self {
        let path = e.path().to_string();
        match e {
            cnocs_core::SceneError::DegenerateBox { .. } => OpError::Degenerate {
                path,
                message: e.to_string(),
            },
            _ => OpError::Invalid {
                path,
                message: e.to_string(),
            },
        }
    }
}

/// Deserializes `value`, reporting the failing field path under `prefix`.
pub fn from_value<T: serde::de::DeserializeOwned>(value: serde_json::Value, prefix: &str) -> Result<T, OpError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner.as_str()) {
            (true, _) => inner.clone(),
            (false, ".") => prefix.to_string(),
            (false, _) => format!("{prefix}.{inner}"),
        };
        OpError::invalid(path, e.into_inner())
    })
}

/// Parses JSON text, reporting syntax errors at the document root.
pub fn parse_json(text: &[u8]) -> Result<serde_json::Value, OpError> {
    serde_json::from_slice(text).map_err(|e| OpError::invalid(".", format!("malformed JSON: {e}")))
}
