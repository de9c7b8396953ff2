//! Personality profiling of chat-completion models on the sixteen-factor
//! taxonomy, with binary and graded trait induction.
//!
//! The pipeline is: load an [`bank::ItemBank`], enumerate a plan of
//! [`prompt::PromptJob`]s, execute it through a [`gateway::Gateway`] into an
//! append-only JSONL log, score the log into [`scoring::TraitProfile`]s and
//! compare profiles with [`analysis`].

pub mod analysis;
pub mod bank;
pub mod gateway;
pub mod parse;
pub mod prompt;
pub mod record;
pub mod report;
pub mod run;
pub mod respondent;
pub mod scoring;
pub mod traits;

pub use bank::{load_bank, ItemBank};
pub use traits::TraitId;
