use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("pole proximity: |1 - p^{mu} q^{nu} u| = {residual:.3e} for u = {u}")]
    PoleProximity {
        u: Complex64,
        mu: u32,
        nu: u32,
        residual: f64,
    },

    #[error("product did not converge within {max_terms} terms (base too close to 1?)")]
    NonConvergence { max_terms: usize },

    #[error("degenerate parameters: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
