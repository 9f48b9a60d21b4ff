//! Orchestration of multi-file code generation through layered
//! chain-of-thought decomposition, gated self-rectification and
//! backtracking integration, plus the evaluation harness.

pub mod assemble;
pub mod backtrack;
pub mod error;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod prompt;
pub mod provider;
pub mod rectify;
pub mod session;
pub mod trace;

pub use error::{Error, Result};
