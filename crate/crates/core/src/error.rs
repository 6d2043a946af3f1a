use thiserror::Error;

/// Errors surfaced by the scheduling pipeline.
///
/// Infeasibility is a first-class outcome, not a panic: callers such as the
/// CLI map `Infeasible` to a dedicated exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("linear program is infeasible")]
    LpInfeasible,

    #[error("linear program is unbounded")]
    LpUnbounded,

    #[error("class-K function is not invertible on the requested range: {0}")]
    NotInvertible(String),

    #[error("certificate verification failed: {0}")]
    Certificate(String),

    #[error("planner failed: {0}")]
    Planning(String),

    #[error("{0}")]
    Infeasible(InfeasibleReason),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Structured diagnosis for an infeasible scheduling instance.
#[derive(Debug, Clone, PartialEq)]
pub enum InfeasibleReason {
    /// The initial error bound exceeds the largest finite quantization level,
    /// so no finite symbol covers the initial state.
    InitialLevelOverflow { v_init: f64, nu_bar: f64 },
    /// The initial symbol already violates the stage-0 envelope.
    InitialEnvelope { level: f64, v_max0: f64 },
    /// Forward search died at this stage: no run of any communication
    /// pattern keeps the error bound inside the envelope beyond it.
    EmptyLayer { stage: usize },
    /// No accepting run exists from the given symbol level at this stage.
    /// During a feasibly started run this indicates a violated assumption
    /// upstream, not a property of the instance.
    NoRunFromState { level: f64, stage: usize },
    /// The terminal constraint cannot be met by any accepted run.
    Terminal { v_final: f64 },
}

impl std::fmt::Display for InfeasibleReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InfeasibleReason::InitialLevelOverflow { v_init, nu_bar } => write!(
                f,
                "infeasible: initial error bound {v_init:.6e} exceeds the \
                 largest finite level {nu_bar:.6e}; refine the partition or \
                 shrink the initial set"
            ),
            InfeasibleReason::InitialEnvelope { level, v_max0 } => write!(
                f,
                "infeasible: initial symbol level {level:.6e} exceeds the \
                 stage-0 safety envelope {v_max0:.6e}"
            ),
            InfeasibleReason::EmptyLayer { stage } => write!(
                f,
                "infeasible: no schedule survives past stage {stage}; the \
                 safety envelope prunes every branch there"
            ),
            InfeasibleReason::NoRunFromState { level, stage } => write!(
                f,
                "infeasible: no accepting run from error level {level:.6e} \
                 at stage {stage}"
            ),
            InfeasibleReason::Terminal { v_final } => write!(
                f,
                "infeasible: no accepted run ends within the terminal bound \
                 {v_final:.6e}"
            ),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
