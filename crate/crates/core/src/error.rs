use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("weight error: {0}")]
    Weights(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("node '{node}': {source}")]
    AtNode {
        node: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn graph(msg: impl Into<String>) -> Self {
        Error::Graph(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format { offset, msg: msg.into() }
    }

    /// Wraps the error with the name of the build stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    pub fn at_node(self, node: &str) -> Self {
        Error::AtNode { node: node.to_string(), source: Box::new(self) }
    }

    /// Innermost error, with stage and node context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::AtNode { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for errors caused by user-supplied configuration or arguments
    /// rather than by execution.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Format { .. } => true,
            Error::Stage { source, .. } | Error::AtNode { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
