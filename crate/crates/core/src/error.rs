use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("not a bijection: {0}")]
    NotABijection(String),
    #[error("field is not normalized: {0}")]
    NotNormalized(String),
    #[error("orbit too long: requested {requested}, cap {cap}")]
    OrbitTooLong { requested: usize, cap: usize },
    #[error("invalid Hamiltonian: {0}")]
    InvalidHamiltonian(String),
    #[error("underdetermined sequence: {0}")]
    UnderdeterminedSequence(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no shortening found within budget {budget}")]
    NoShorteningFound { budget: usize },
    #[error("iteration budget {max_iter} exhausted at max {last_max}")]
    BudgetExhausted {
        max_iter: usize,
        last_max: f64,
        trace: Vec<f64>,
    },
    #[error("bound violated ({source_tag}): {detail}")]
    BoundViolated {
        source_tag: &'static str,
        detail: String,
    },
    #[error("k below threshold: {0}")]
    KBelowThreshold(String),
    #[error("hypothesis μ(A) > 2Cμ(B) fails: μ(A) = {mu_a}, μ(B) = {mu_b}, C = {c}")]
    TransportHypothesis { mu_a: f64, mu_b: f64, c: usize },
    #[error("transport blocked: {0}")]
    TransportBlocked(String),
    #[error("spreading infeasible: {0}")]
    SpreadingInfeasible(String),
    #[error("family too large to enumerate: {0}")]
    TooLarge(String),
    #[error("grid too coarse for ε: {0}")]
    GridTooCoarse(String),
    #[error("sweep failed: {0}")]
    SweepFailed(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
