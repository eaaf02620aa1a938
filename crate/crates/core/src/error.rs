use thiserror::Error;

/// Pipeline stage in which a discrete factorization failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Preconditions,
    ToContinuous,
    Factorization,
    ToDiscrete,
    Verification,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Preconditions => "preconditions",
            Stage::ToContinuous => "tustin-to-continuous",
            Stage::Factorization => "factorization",
            Stage::ToDiscrete => "tustin-to-discrete",
            Stage::Verification => "verification",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("wrong domain: expected {expected}")]
    WrongDomain { expected: &'static str },
    #[error("evaluation point is within tolerance of a pole")]
    NearPole,
    #[error("state matrix has an eigenvalue at z = -1")]
    PoleAtMinusOne,
    #[error("state matrix has an eigenvalue at s = omega0")]
    PoleAtOmega0,
    #[error("observability gramian is singular (rank {rank} < {n})")]
    SingularGramian { rank: usize, n: usize },
    #[error("ambiguous rank decision: singular value gap ratio {gap:.3e} below guard")]
    RankAmbiguous { gap: f64 },
    #[error("system is not square with invertible feedthrough or first Markov parameter")]
    NotSquareInvertible,
    #[error("state matrix is not stable")]
    UnstableA,
    #[error("realization is not minimal (reachability rank {reach}, observability rank {obs}, n = {n})")]
    NotMinimal { reach: usize, obs: usize, n: usize },
    #[error("pair (A, C) is not detectable")]
    NotDetectable,
    #[error("pair (A, Q) is not stabilizable")]
    NotStabilizable,
    #[error("iteration diverged: {0}")]
    IterationDiverged(String),
    #[error("feedthrough is rank deficient; add a regularizing direct term eps*I (eps = 1e-6) explicitly")]
    SingularFeedthrough,
    #[error("riccati solver failed: {0}")]
    RiccatiFailure(String),
    #[error("not regular: delta(PPsim)={delta_ppsim} < {}", 2 * .delta_p)]
    NotRegular { delta_p: usize, delta_ppsim: usize },
    #[error("ambiguous rank decision for Q - X: eigenvalue gap ratio {gap:.3e} below guard")]
    RankDecisionAmbiguous { gap: f64 },
    #[error("identity violated: {name} (residual {residual:.3e})")]
    IdentityViolation { name: &'static str, residual: f64 },
    #[error("rank(CG) = {rank} < m = {m}")]
    RankCGDeficient { rank: usize, m: usize },
    #[error("feedthrough H is not zero")]
    AssumptionHNotZero,
    #[error("innovation covariance is singular")]
    InnovationGramSingular,
    #[error("too few samples: {got} < {needed}")]
    TooFewSamples { got: usize, needed: usize },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("error curve is already at the noise floor")]
    CurveTooFlat,
    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps the error with the pipeline stage it came from.
    pub fn at(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, with any stage tags removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
