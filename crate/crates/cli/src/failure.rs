use outerfactor::error::Stage;
use outerfactor::Error;

/// A failed command: process exit code plus the one-line reason printed
/// first on stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub reason: String,
    pub context: Option<String>,
}

pub const IO: u8 = 1;
pub const PARSE: u8 = 2;
pub const PRECONDITION: u8 = 3;
pub const VERIFICATION: u8 = 4;
pub const RANK_CG: u8 = 5;

impl Failure {
    pub fn new(code: u8, reason: impl Into<String>) -> Self {
        Self { code, reason: reason.into(), context: None }
    }

    pub fn parse(reason: impl Into<String>) -> Self {
        Self::new(PARSE, reason)
    }

    pub fn io(reason: impl Into<String>) -> Self {
        Self::new(IO, reason)
    }

    pub fn verification(reason: impl Into<String>) -> Self {
        Self::new(VERIFICATION, reason)
    }
}

fn outer_stage(e: &Error) -> Option<Stage> {
    match e {
        Error::Stage { stage, .. } => Some(*stage),
        _ => None,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let root = e.root();
        let code = match root {
            Error::RankCGDeficient { .. } => RANK_CG,
            Error::GridMismatch(_) => PARSE,
            Error::NotRegular { .. }
            | Error::UnstableA
            | Error::NotMinimal { .. }
            | Error::SingularFeedthrough
            | Error::AssumptionHNotZero
            | Error::WrongDomain { .. }
            | Error::NotSquareInvertible
            | Error::PoleAtMinusOne
            | Error::PoleAtOmega0
            | Error::NotDetectable
            | Error::NotStabilizable
            | Error::TooFewSamples { .. }
            | Error::DimensionMismatch(_)
            | Error::InvalidInput(_) => PRECONDITION,
            _ if outer_stage(&e) == Some(Stage::Preconditions) => PRECONDITION,
            _ => VERIFICATION,
        };
        let context = outer_stage(&e).map(|s| format!("stage: {s}"));
        Self { code, reason: root.to_string(), context }
    }
}
