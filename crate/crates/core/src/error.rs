use thiserror::Error;

use crate::graph::{ItemId, VertexId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("ordinary edges may not be loops (at vertex {0})")]
    OrdinaryLoop(VertexId),
    #[error("parallel ordinary edge between {0} and {1}")]
    ParallelOrdinary(VertexId, VertexId),
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("item {0} has the wrong kind for this operation")]
    WrongKind(ItemId),
}

/// Failure of a randomized or search-based stage. Carries enough context to
/// say which stage refused and why; callers surface it verbatim.
#[derive(Debug, Error)]
pub enum StageError {
    #[error("precondition violated in {stage}: {detail}")]
    Precondition { stage: &'static str, detail: String },
    #[error("search budget exhausted in {stage}: {detail}")]
    BudgetExhausted { stage: &'static str, detail: String },
    #[error("verification failed in {stage}: {detail}")]
    Verification { stage: &'static str, detail: String },
    #[error("infeasible instance in {stage}: {detail}")]
    Infeasible { stage: &'static str, detail: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl StageError {
    pub fn precondition(stage: &'static str, detail: impl Into<String>) -> Self {
        StageError::Precondition { stage, detail: detail.into() }
    }
    pub fn budget(stage: &'static str, detail: impl Into<String>) -> Self {
        StageError::BudgetExhausted { stage, detail: detail.into() }
    }
    pub fn verification(stage: &'static str, detail: impl Into<String>) -> Self {
        StageError::Verification { stage, detail: detail.into() }
    }
    pub fn infeasible(stage: &'static str, detail: impl Into<String>) -> Self {
        StageError::Infeasible { stage, detail: detail.into() }
    }
}
