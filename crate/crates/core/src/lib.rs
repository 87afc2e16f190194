//! Desk-scale language-model laboratory: corpus preparation, LSTM and
//! decoder-only transformer training with tied embeddings, targeted
//! minimal-pair gender-agreement evaluation, few-shot novel-noun learning
//! restricted to the embedding table, and post-hoc analysis of the
//! resulting weight changes.

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod grammar;
pub mod linalg;
pub mod model;
pub mod schedule;
pub mod stimuli;
pub mod train;
pub mod report;
pub mod util;
pub mod wordlab;

pub use error::{Error, Result};
pub use grammar::Gender;
