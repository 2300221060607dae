//! Memory-augmented repository-level vulnerability repair.
//!
//! A repair session localizes the fault from a crash report, asks a model
//! to patch it with help from retrieved past fixes, verifies the candidate
//! against a PoC and a regression suite, and loops on failure. Successful
//! sessions feed new entries back into the memory store.
//!
//! The model sits behind [`gateway::Gateway`]; the scripted backend replays
//! recorded transcripts, so every session can run offline and
//! deterministically.

pub mod agent;
pub mod config;
pub mod diff;
pub mod gateway;
pub mod localizer;
pub mod memory;
pub mod ops;
pub mod oracle;
pub mod retrieval;
pub mod workspace;
