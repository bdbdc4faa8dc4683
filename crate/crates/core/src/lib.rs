//! Engine for synthesizing open-ended logic puzzles from source corpora.
//!
//! The pipeline runs in stages: corpus items are reformulated into puzzle
//! drafts via templated LLM prompts ([`synthesis`]), each draft is compiled
//! into a [`domain::PuzzleSpec`] whose constraints are expressions in a closed
//! DSL ([`dsl`]) rather than generated code, and exhaustive traversal
//! ([`solver`]) certifies that every emitted puzzle has at least one valid
//! solution. Validated puzzles are difficulty-augmented by constraint
//! reduction and expansion ([`augment`]), rendered and graded against model
//! responses ([`harness`]), and fed through verifier-gated rejection sampling
//! to build SFT/DPO datasets ([`training`]).
//!
//! The only nondeterministic boundary is the chat-completion client in
//! [`llm`]; with the mock or replay backend every run is bit-reproducible.

pub mod augment;
pub mod domain;
pub mod dsl;
pub mod harness;
pub mod jsonx;
pub mod llm;
pub mod solver;
pub mod store;
pub mod synthesis;
pub mod testkit;
pub mod training;
