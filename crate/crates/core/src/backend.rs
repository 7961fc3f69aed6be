use alloc::string::String;

/// Failure reported by a generator or fact-checking backend.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum BackendError {
    /// Transport-level failure (timeout, refused connection, 5xx).
    #[error("backend transport error: {message}")]
    Transport { message: String, retryable: bool },
    /// The backend answered, but the reply violates the wire contract.
    #[error("backend protocol error: {0}")]
    Protocol(String),
    /// The caller passed inputs the backend refuses.
    #[error("invalid backend input: {0}")]
    InvalidInput(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport { retryable: true, .. })
    }
}
