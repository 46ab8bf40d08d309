use thiserror::Error;

use crate::model::LayoutViolation;

pub type Result<T, E = PassError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PassError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("layout violates placement constraints: {}", format_violations(.0))]
    LayoutViolation(Vec<LayoutViolation>),

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("beamforming subproblem infeasible: {0}")]
    InfeasibleSubproblem(String),

    #[error("beamforming subproblem hit {iterations} iterations (kkt residual {kkt_residual:.3e})")]
    QpMaxIterations {
        iterations: usize,
        kkt_residual: f64,
        best: Box<crate::inner::QpSolution>,
    },

    #[error("outer loop hit its cap of {0} iterations before meeting tolerance")]
    NotConverged(usize, Box<crate::harness::P1Solution>),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl PassError {
    /// Short stable identifier used in CSV error columns and FFI status mapping.
    pub fn code(&self) -> &'static str {
        match self {
            PassError::InvalidConfig(_) => "invalid_config",
            PassError::IndexOutOfRange(_) => "index_out_of_range",
            PassError::LayoutViolation(_) => "layout_violation",
            PassError::DegenerateChannel(_) => "degenerate_channel",
            PassError::InfeasibleScenario(_) => "infeasible_scenario",
            PassError::InfeasibleSubproblem(_) => "infeasible_subproblem",
            PassError::QpMaxIterations { .. } => "qp_max_iterations",
            PassError::NotConverged(..) => "not_converged",
            PassError::Internal(_) => "internal",
            PassError::Parse(_) => "parse",
            PassError::Io(_) => "io",
            PassError::Csv(_) => "csv",
        }
    }
}

fn format_violations(v: &[LayoutViolation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
