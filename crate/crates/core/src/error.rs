use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("generators {first} and {second} have the same canonical form")]
    DuplicateGenerator { first: usize, second: usize },

    #[error("fully symmetric sets of generators {first} and {second} overlap")]
    OverlappingSets { first: usize, second: usize },

    #[error("no closed form for kernel `{kernel}` against measure `{measure}`")]
    NotImplemented { kernel: String, measure: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("point lies outside the domain of measure `{0}`")]
    OutsideDomain(String),

    #[error("absolute continuity violated: reference density vanishes where target density is {target_density:e}")]
    AbsoluteContinuity { target_density: f64 },

    #[error("polynomial space with {q} basis functions is infeasible for {n} points")]
    InfeasibleSpace { q: usize, n: usize },

    #[error("point set is not unisolvent (singular value ratio {ratio:e} <= 1e-10)")]
    NotUnisolvent { ratio: f64 },

    #[error("factorization of {what} failed (condition estimate {condition_estimate:e}); {hint}")]
    Factorization {
        what: String,
        condition_estimate: f64,
        hint: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
}

impl Error {
    /// Process exit code: 3 for numerical failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Factorization { .. } | Error::NotUnisolvent { .. } => 3,
            _ => 2,
        }
    }
}
