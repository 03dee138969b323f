use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quantile inversion did not converge for p = {p}")]
    QuantileNotConverged { p: f64 },

    #[error("policy evaluation system is singular; the closed-loop chain is reducible")]
    ReducibleChain,

    #[error("infeasible feedback budget: {0}")]
    InfeasibleBudget(String),

    #[error("interference curve for link {link} is not convex and nonincreasing (violates the convexity required of the per-link minimum interference): {detail}")]
    NonConvexCurve { link: usize, detail: String },

    #[error("codebook with 2^{bits} entries is too large (limit 2^{limit})")]
    CodebookTooLarge { bits: u32, limit: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
