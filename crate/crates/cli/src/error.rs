use serde::Serialize;

pub type PipelineResult<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    /// Every problem found in the inputs, reported together.
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Component(#[from] crowdsplat_core::Error),
}

impl PipelineError {
    pub fn invalid(message: impl Into<String>) -> Self {
        PipelineError::Validation(vec![message.into()])
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 2,
            PipelineError::Component(_) => 3,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let (kind, messages) = match self {
            PipelineError::Validation(problems) => ("validation", problems.clone()),
            PipelineError::Component(e) => ("runtime", vec![e.to_string()]),
        };
        ErrorRecord {
            kind: kind.into(),
            exit_code: self.exit_code(),
            messages,
        }
    }
}

/// Machine-readable form of a failed run, written as `error.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub exit_code: i32,
    pub messages: Vec<String>,
}

/// Collects validation problems and turns them into one error.
#[derive(Debug, Default)]
pub struct Problems(Vec<String>);

impl Problems {
    pub fn push(&mut self, message: impl Into<String>) {
        self.0.push(message.into());
    }

    pub fn check(&mut self, ok: bool, message: impl FnOnce() -> String) {
        if !ok {
            self.0.push(message());
        }
    }

    /// Folds a component validation result into the list.
    pub fn absorb(&mut self, context: &str, result: crowdsplat_core::Result<()>) {
        if let Err(e) = result {
            self.0.push(format!("{context}: {e}"));
        }
    }

    pub fn finish(self) -> PipelineResult<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Validation(self.0))
        }
    }
}
