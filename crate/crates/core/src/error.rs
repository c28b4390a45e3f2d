use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("design matrix is rank deficient (rank {rank} of {columns})")]
    RankDeficient { rank: usize, columns: usize },
    #[error("complete or quasi-complete separation detected after {iterations} iterations")]
    Separation { iterations: usize },
    #[error("treatment indicator has no variation")]
    NoVariation,
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("need at least {needed} units, got {got}")]
    TooFewUnits { needed: usize, got: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("sine-distance coverage unsatisfiable: accepted {accepted} of {requested} pairs in {draws} draws")]
    Unsatisfiable {
        accepted: usize,
        requested: usize,
        draws: usize,
    },
    #[error("treatment is constant in the generated sample after {attempts} attempts")]
    DegenerateSample { attempts: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no stratum or pair contains both treated and control units")]
    EmptyMatch,
    #[error("both groups have zero variance but different means")]
    ZeroVariance,
    #[error("covariance matrix is singular")]
    SingularCovariance,
    #[error("no treated units available")]
    NoTreatedUnits,
    #[error("need at least {needed} model estimates, got {got}")]
    TooFewModels { needed: usize, got: usize },
    #[error("need at least {needed} successful records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}
