use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("precision insufficient: {what} (needs about {required_bits} bits)")]
    Precision { what: String, required_bits: u64 },
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("resonance detected: {0}")]
    Resonance(String),
    #[error("resonant denominator at coupling j={j}: |<w(s),k_j>| = exp({log_b})")]
    ResonantDenominator { j: usize, log_b: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("divergent bound: {0}")]
    DivergentBound(String),
    #[error("no candidate suffices: {0}")]
    NoCandidate(String),
    #[error("variant mismatch: {0}")]
    VariantMismatch(String),
    #[error("index out of range: {0}")]
    Index(String),
}

impl Error {
    pub fn precision(what: impl Into<String>, required_bits: u64) -> Self {
        Error::Precision { what: what.into(), required_bits }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
