use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: symrm_core::Error,
    },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit code: 2 config, 3 resource cap, 4 numerical failure,
    /// 1 for anything else (file system).
    pub fn exit_code(&self) -> i32 {
        use symrm_core::Error as E;
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::ResourceCap(_) => 3,
            HarnessError::Stage { source, .. } => match source {
                E::InvalidParameter(_) | E::DimensionMismatch(_) | E::TargetOutOfRange { .. } | E::DuplicateTarget(_) => 2,
                _ => 4,
            },
            HarnessError::Io { .. } => 1,
        }
    }
}

/// Attach a stage name to a core error.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, HarnessError>;
}

impl<T> StageExt<T> for symrm_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, HarnessError> {
        self.map_err(|source| HarnessError::Stage { stage, source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let stage = |e| HarnessError::Stage { stage: "x", source: e };
        assert_eq!(HarnessError::Config("x".into()).exit_code(), 2);
        assert_eq!(HarnessError::ResourceCap("x".into()).exit_code(), 3);
        assert_eq!(stage(symrm_core::Error::Numerical("x".into())).exit_code(), 4);
        assert_eq!(stage(symrm_core::Error::InsufficientData("x".into())).exit_code(), 4);
        assert_eq!(stage(symrm_core::Error::InvalidParameter("x".into())).exit_code(), 2);
    }
}
