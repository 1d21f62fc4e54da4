//! Learner-satisfaction prediction from fused review topics, sentiment
//! embeddings and behavioral signals.

pub mod behavior;
pub mod corpus;
pub mod embed;
pub mod eval;
pub mod fusion;
pub mod pipeline;
pub mod regress;
pub mod seed;
pub mod topics;
