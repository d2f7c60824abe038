use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("|lambda_ppll| = {value:e} is below the admissibility bound {eps:e}")]
    SingularX1 { value: f64, eps: f64 },
    #[error("closure form {form} expects {expected}, got {got}")]
    FormMismatch { form: &'static str, expected: String, got: String },
    #[error("arity mismatch for {what}: expected variables {expected}, got {got}")]
    ArityMismatch { what: &'static str, expected: String, got: String },
    #[error("function is not polynomial-backed; {0} requires exact composition")]
    NotPolynomial(&'static str),
    #[error("random state sampler exhausted {0} retries")]
    RetriesExhausted(usize),
    #[error("denominator {name} = {value:e} is too close to zero")]
    SingularDenominator { name: &'static str, value: f64 },
    #[error("state is not of the C pattern (deviation {0:e})")]
    NotStateC(f64),
    #[error("extrapolated limit did not converge: {0}")]
    LimitNotConverged(String),
    #[error("Hessian is not indefinite (smallest eigenvalue {0:e})")]
    NotIndefinite(f64),
    #[error("inconsistent S1 scalars: {0}")]
    InconsistentScalars(String),
    #[error("singular Jacobian (|det| = {0:e})")]
    SingularJacobian(f64),
    #[error("Newton did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("lambda_ij is not symmetric")]
    NonSymmetric,
    #[error("empty sample set")]
    EmptySampleSet,
    #[error("schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
