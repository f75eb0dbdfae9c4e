use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BuildingError {
    #[error(transparent)]
    Coxeter(#[from] coxeter::CoxeterError),

    #[error("building requires a right-angled Coxeter system")]
    NotRightAngled,

    #[error("thickness must be at least 2 for every generator")]
    BadThickness,

    #[error("bad syllable: {0}")]
    BadSyllable(String),

    #[error("chamber {0} is outside the chart")]
    OutsideChart(String),

    #[error("chart validation failed: {0}")]
    ChartInvalid(String),

    #[error("apartment construction exhausted its alternatives")]
    ChartExhausted,

    #[error("{what} exceeded cap of {cap}")]
    CapExceeded { what: &'static str, cap: usize },

    #[error("building axiom violated: {0}")]
    AxiomViolated(String),

    #[error("group element stabilizer not covered by the sample: {0}")]
    StabilizerNotCovered(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, BuildingError>;
