use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("pmf not normalized: weights sum to {sum}")]
    PmfNotNormalized { sum: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("unsupported service family `{0}`")]
    UnsupportedFamily(String),
    #[error("age beyond support: F({age}) = 1, residual law undefined")]
    AgeBeyondSupport { age: f64 },
    #[error("argument outside the closed unit disk: |theta| = {modulus}")]
    OutsideUnitDisk { modulus: f64 },
    #[error("root stagnation at s = {s}: {iterations} iterations, last theta = {theta}, residual = {residual}")]
    RootStagnation {
        s: f64,
        iterations: usize,
        theta: f64,
        residual: f64,
    },
    #[error("radius too large: alpha = {alpha} must lie in (0, c(s) = {c})")]
    RadiusTooLarge { alpha: f64, c: f64 },
    #[error("no ergodic reflected law: rho = {rho} <= 1 gives c = 1")]
    NoErgodicLaw { rho: f64 },
    #[error("condition (A) not met: rho = {rho}")]
    CriticalLoadNotMet { rho: f64 },
    #[error("joint loss law implemented only for unit departures (lambda = 0), got lambda = {lambda}")]
    LossLawNeedsUnitDepartures { lambda: f64 },
    #[error("quadrature did not converge: achieved {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },
    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("transform evaluation failed at s = {s}: {reason}")]
    Transform { s: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
