//! Prompt assembly, completion backends, and candidate extraction.

pub mod backend;
pub mod generate;
pub mod prompt;

pub use backend::{
    find_best_program, Backend, BackendError, CompletionRequest, HttpBackend, HttpConfig, MockBackend,
    BEST_PROGRAM_HEADER,
};
pub use generate::{
    extract_program, generate_candidates, last_fenced_block, AttemptRecord, CandidateSource, ExtractError,
    GenerationConfig, GenerationError, GenerationStats,
};
pub use prompt::{assemble_prompt, observation_table, PromptBundle, PromptError, PromptInputs, PromptSection};
