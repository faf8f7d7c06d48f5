use thiserror::Error;

use crate::model::FeasibilityViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("value {value} is outside the support [{lo}, {hi}]")]
    OutsideSupport { value: f64, lo: f64, hi: f64 },

    #[error("probability {0} is outside [0, 1]")]
    ProbabilityDomain(f64),

    #[error("item {index} violates `{constraint}`")]
    InvalidItem { index: usize, constraint: &'static str },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("infeasible allocation: {0}")]
    Infeasible(#[from] FeasibilityViolation),

    #[error("invalid mechanism configuration: {0}")]
    InvalidConfig(String),

    #[error("enumeration guard exceeded: {candidates} candidates, limit {limit}")]
    EnumerationGuard { candidates: u128, limit: u128 },

    #[error("quadrature recursion budget exceeded: {nodes}^{depth} node evaluations, budget {budget}")]
    RecursionBudget { nodes: usize, depth: usize, budget: u64 },

    #[error("display indicator of item {item} is not monotone: shown at bid {shown}, hidden at higher bid {hidden}")]
    NonMonotone { item: usize, shown: f64, hidden: f64 },

    #[error("item {item} is not displayed as an ad at bid {bid}")]
    NotDisplayed { item: usize, bid: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),
}
