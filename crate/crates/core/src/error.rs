use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("population size overflows: {0}")]
    Size(String),

    #[error("invalid cluster geometry: {0}")]
    Geometry(String),

    #[error("degenerate population: {0}")]
    DegeneratePopulation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate draw: {treated} treated and {control} control units observed")]
    DegenerateDraw { treated: usize, control: usize },

    #[error("invalid mechanism: {0}")]
    InvalidMechanism(String),

    #[error("oracle size guard exceeded: n = {n} > {limit}")]
    SizeGuard { n: usize, limit: usize },

    #[error("unknown design: {0}")]
    UnknownDesign(String),

    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        message: String,
    },

    #[error("design {design} failed: {degenerate} of {nsim} draws were degenerate")]
    DesignFailure {
        design: String,
        degenerate: usize,
        nsim: usize,
    },

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
