//! Semantic-encryption privacy gateway and offline toolchain.
//!
//! User text is rewritten by a local encoder into a different semantic
//! context (numbers kept verbatim) before it reaches a cloud model, and the
//! cloud model's answer is mapped back by a local decoder. This crate holds
//! the runtime gateway, the dataset pipeline that trains the local models,
//! the evaluation metrics, and a finite-space secrecy calculator.

pub mod backends;
pub mod compose;
pub mod config;
pub mod corpus;
pub mod distill;
pub mod eval;
pub mod gateway;
pub mod guard;
pub mod listgen;
pub mod metrics;
pub mod numerals;
pub mod prompts;
pub mod secrecy;
pub mod session;
pub mod store;
