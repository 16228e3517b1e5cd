use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state `{0}` has no outgoing rate")]
    ZeroHoldingRate(String),
    #[error("chain is not irreducible; communicating classes: {0:?}")]
    NotIrreducible(Vec<Vec<String>>),
    #[error("self-loop rate on state `{0}` is not allowed")]
    SelfLoop(String),
    #[error("rate {rate} on edge {from} -> {to} is negative or not finite")]
    InvalidRate { from: String, to: String, rate: f64 },
    #[error("negative rate at N={n} on edge {edge}")]
    NegativeRate { n: f64, edge: String },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("support is empty")]
    EmptySupport,
    #[error("state sets overlap")]
    OverlappingSets,
    #[error("measure is not reversible (max relative detailed-balance residual {0:e})")]
    NotReversible(f64),
    #[error("linear solver failure: {0}")]
    SolverFailure(String),
    #[error("well has a single state; point capacity is undefined")]
    SingletonWell,
    #[error("non-positive value {value} at grid point {index}")]
    NonPositiveValue { index: usize, value: f64 },
    #[error("at least {needed} samples are required, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("path absorbed at `{0}` before reaching the target")]
    AbsorbedBeforeTarget(String),
    #[error("path starts in the annulus at `{0}`")]
    StartsInAnnulus(String),
    #[error("path never visits the set")]
    NeverVisitsSet,
    #[error("reversible mode requested on a non-reversible chain (residual {0:e})")]
    ModeMismatch(f64),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("uniformization depth {0} exceeds the configured limit")]
    UniformizationDepth(usize),
    #[error("`{0}` is simulation-only; analysis requires an irreducible chain with positive holding rates")]
    SimulationOnly(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Input errors map to CLI exit code 2, numeric failures to 3.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::SolverFailure(_)
                | Error::NotReversible(_)
                | Error::ModeMismatch(_)
                | Error::UniformizationDepth(_)
                | Error::NonPositiveValue { .. }
                | Error::AbsorbedBeforeTarget(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::ZeroHoldingRate(_) => "ZeroHoldingRate",
            Error::NotIrreducible(_) => "NotIrreducible",
            Error::SelfLoop(_) => "SelfLoop",
            Error::InvalidRate { .. } => "InvalidRate",
            Error::NegativeRate { .. } => "NegativeRate",
            Error::UnknownState(_) => "UnknownState",
            Error::DuplicateState(_) => "DuplicateState",
            Error::EmptySupport => "EmptySupport",
            Error::OverlappingSets => "OverlappingSets",
            Error::NotReversible(_) => "NotReversible",
            Error::SolverFailure(_) => "SolverFailure",
            Error::SingletonWell => "SingletonWell",
            Error::NonPositiveValue { .. } => "NonPositiveValue",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::AbsorbedBeforeTarget(_) => "AbsorbedBeforeTarget",
            Error::StartsInAnnulus(_) => "StartsInAnnulus",
            Error::NeverVisitsSet => "NeverVisitsSet",
            Error::ModeMismatch(_) => "ModeMismatch",
            Error::Parse { .. } => "ParseError",
            Error::UniformizationDepth(_) => "UniformizationDepth",
            Error::SimulationOnly(_) => "SimulationOnly",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Io(_) => "Io",
        }
    }
}
