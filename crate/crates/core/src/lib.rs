//! Inference-time search for multi-turn code correction.
//!
//! Five strategies (best-of-N, linear self-refinement, MCTS tree search,
//! scattered forest search, and iterative refinement of textual directions)
//! run over a pluggable [`gateway::Backend`] and [`sandbox::Executor`] and
//! record a [`SearchTrace`]. The [`vspace`] module is a finite-model
//! laboratory that checks the version-space safety results by exhaustion.

pub mod analysis;
pub mod cli;
pub mod dataset;
pub mod gateway;
pub mod harness;
pub mod sandbox;
pub mod strategies;
pub mod types;
pub mod vspace;

pub use types::{
    first_correct_depth, max_depth, CandidateNode, SearchTrace, SharedEntry, SharedInformation, StrategyKind, Task,
    TestCase, TestKind, TextualDirection, TraceError,
};
