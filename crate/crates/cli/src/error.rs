use std::path::Path;

use learnsat::pipeline::PipelineError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing {artifact}; run `{producer}` first")]
    Missing { artifact: String, producer: &'static str },
    #[error("{0}")]
    Runtime(String),
    #[error("acceptance assertions failed: {0}")]
    Assertion(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) | CliError::Missing { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Assertion(_) => 3,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::from(PipelineError::from(e))
            }
        })*
    };
}

runtime_from!(
    learnsat::corpus::CorpusError,
    learnsat::topics::TopicError,
    learnsat::embed::EmbedError,
    learnsat::behavior::BehaviorError,
    learnsat::fusion::FusionError,
    learnsat::regress::RegressError,
    learnsat::eval::EvalError
);
