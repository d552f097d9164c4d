use thiserror::Error;

/// Everything that can go wrong across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("generic stabilizer is positive dimensional (rank deficit {rank_deficit})")]
    InfiniteStabilizer { rank_deficit: usize },

    #[error("enumeration budget exceeded: a-priori bound {bound} > cap {cap}")]
    BudgetExceeded { bound: f64, cap: u64 },

    #[error("unresolved fixed component on support {support:?}: normal direction {direction} is fixed")]
    UnresolvedComponent { support: Vec<usize>, direction: usize },

    #[error("fixed component on support {support:?} is not transverse: locus dimension {found}, expected {expected}")]
    NonTransverseComponent {
        support: Vec<usize>,
        found: usize,
        expected: usize,
    },

    #[error("singular Gram matrix (determinant {0})")]
    SingularGram(f64),

    #[error("eigenphase equal to one in Gaussian normal integral")]
    DegeneratePhase,

    #[error("quadrature failed: estimated error {error:e} above target after {evaluations} evaluations")]
    QuadratureFailure { error: f64, evaluations: usize },

    #[error("displacement leaves the chart: |v|/sqrt(k) = {0}")]
    ChartOverflow(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
