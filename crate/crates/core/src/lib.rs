//! Span-based semantic parsing.
//!
//! Every span of an utterance gets a category: a domain constant, `Join`
//! (compose the children) or `NoSem`. CKY finds the best span trees, and the
//! domain type system composes the first valid one into a program. Training
//! needs only utterance/program pairs: a constrained parse under the current
//! model supplies the tree labels (hard EM).

pub mod cky;
pub mod cli;
pub mod data;
pub mod error;
pub mod scorer;
pub mod trainer;
pub mod tree;
pub mod types;
