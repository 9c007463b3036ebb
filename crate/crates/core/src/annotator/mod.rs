//! LLM annotation: versioned prompt assembly, an OpenAI-compatible
//! chat-completions client with structured output, and defensive parsing of
//! the returned JSON into annotation sets.

mod annotate;
mod client;
mod parse;
mod prompt;

use thiserror::Error;

pub use annotate::{annotate_assessment, AnnotationRun};
pub use client::{request_annotation, request_body, ChatClient, EndpointConfig};
pub use parse::{parse_annotation, ParseWarning};
pub use prompt::{
    build_prompt, output_schema, AssessmentItem, ExemplarLabel, ExpertExemplar, ItemOption, PromptBundle,
    PromptFeatures, PromptVersion, CONFIDENCE_HEADING, FEWSHOT_HEADING, LIBRARY_HEADING, PRINCIPLES_HEADING,
    PRINCIPLE_NAMES,
};

#[derive(Debug, Error)]
pub enum AnnotatorError {
    #[error("prompt: {0}")]
    Prompt(String),
    #[error("item {item_id}: {message}")]
    InvalidItem { item_id: String, message: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("server error {status}: {body}")]
    Server { status: u16, body: String },
    #[error("request rejected with {status}: {body}")]
    Client { status: u16, body: String },
    #[error("unparseable response: {0}")]
    Parse(String),
    #[error("all {count} items failed; first error: {first}")]
    AllFailed { count: usize, first: String },
}

impl AnnotatorError {
    /// Transport failures, timeouts, 5xx responses and malformed payloads are
    /// worth another attempt; 4xx responses and local errors are not.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            AnnotatorError::Transport(_)
                | AnnotatorError::Timeout(_)
                | AnnotatorError::Server { .. }
                | AnnotatorError::Parse(_)
        )
    }
}
