use thiserror::Error;

use crate::flow::Side;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report. Variants carry enough context to
/// attribute the failure to a stage and a location on the section.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid masses: {0}")]
    InvalidMasses(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("state outside the regularized chart: {0}")]
    Domain(String),

    #[error("equilibrium search did not converge (last residual {residual:.3e})")]
    RootFinder { residual: f64 },

    #[error("step size underflow at t = {t:.6e} (state {state:?})")]
    StepUnderflow { t: f64, state: [f64; 4] },

    #[error("step budget of {steps} exhausted at t = {t:.6e}")]
    StepBudget { steps: usize, t: f64 },

    #[error("orbit escaped (r = {r:.3e} at t = {t:.6e})")]
    Escape { r: f64, t: f64 },

    #[error("orbit absorbed by triple collision at t = {t:.6e}")]
    Absorbed { t: f64 },

    #[error("backward orbit limits to ejection at t = {t:.6e}")]
    Ejection { t: f64 },

    #[error("no return to the section within time {t:.6e}")]
    NoReturn { t: f64 },

    #[error("tangential crossing: section derivative {derivative:.3e} below floor")]
    Tangency { derivative: f64 },

    #[error("manifold branch did not terminate within {crossings} crossings")]
    NonTermination { crossings: usize },

    #[error("heteroclinic connection on the collision manifold (separation {separation:.3e})")]
    Heteroclinic { separation: f64 },

    #[error("numerically inconsistent result: {0}")]
    Inconsistent(String),

    #[error("arc refinement failed near index {index} on {side:?} (gap {gap:.3e})")]
    Refinement { side: Side, index: usize, gap: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("pullback obstruction at arc parameter {param:.6e}")]
    Obstruction { param: f64 },

    #[error("ambiguous first crossing: EL* and ER* met within tolerance")]
    AmbiguousCrossing,

    #[error("non-manifold subdivision: arcs {first} and {second} overlap")]
    NonManifold { first: String, second: String },

    #[error("undetermined transition from region {0}")]
    UndeterminedTransition(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Io(err.to_string())
    }
}
