use thiserror::Error;

/// Everything that can go wrong while building, validating or comparing devices.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix has {expected} entries for its shape but {found} were given")]
    BadShape { expected: usize, found: usize },

    #[error("matrix contains a non-finite entry")]
    NonFinite,

    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("effect eigenvalues outside [0, 1]: min {min:.3e}, max {max:.3e}")]
    EffectOutOfRange { min: f64, max: f64 },

    #[error("observable effects do not sum to the identity (deviation {deviation:.3e})")]
    ObservableNotNormalized { deviation: f64 },

    #[error("Choi matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotCompletelyPositive { min_eigenvalue: f64 },

    #[error("map increases trace (largest eigenvalue of the unit image {max_eigenvalue:.3e})")]
    TraceIncreasing { max_eigenvalue: f64 },

    #[error("map is not trace preserving (deviation {deviation:.3e})")]
    NotTracePreserving { deviation: f64 },

    #[error("instrument branches do not sum to a channel (deviation {deviation:.3e})")]
    InstrumentNotChannel { deviation: f64 },

    #[error("Kraus operators violate normalization (largest eigenvalue {max_eigenvalue:.3e})")]
    KrausNormalization { max_eigenvalue: f64 },

    #[error("empty outcome set")]
    EmptyOutcomes,

    #[error("unknown outcome label `{0}`")]
    UnknownLabel(String),

    #[error("duplicate outcome label `{0}`")]
    DuplicateLabel(String),

    #[error("exhaustive search over {outcomes} outcomes exceeds the bound of {bound}")]
    OutcomeBoundExceeded { outcomes: usize, bound: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("deficiency I - Φᴴ(I) has rank {rank}, expected at most 1")]
    RankCondition { rank: usize },

    #[error("operation is not pure (Choi rank {rank})")]
    NotPure { rank: usize },

    #[error("affine constraints are inconsistent (residual {residual:.3e})")]
    InconsistentAffine { residual: f64 },

    #[error("malformed feasibility problem: {0}")]
    MalformedProblem(String),

    #[error("operation is not dominated by the dilated map (residual {residual:.3e})")]
    NotDominated { residual: f64 },

    #[error("dilation is not minimal (system rank {rank}, need {needed})")]
    DilationNotMinimal { rank: usize, needed: usize },

    #[error("total channels differ (deviation {deviation:.3e})")]
    TotalsDiffer { deviation: f64 },

    #[error("unsupported device pair: {0} / {1}")]
    UnsupportedPair(&'static str, &'static str),

    #[error("verdict carries no witness")]
    MissingWitness,

    #[error("witness failed independent re-validation: {0}")]
    WitnessRejected(String),
}

pub type Result<T> = std::result::Result<T, Error>;
