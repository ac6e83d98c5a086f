use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("singular point: H = {h:e} <= tol_H = {tol:e}")]
    SingularPoint { h: f64, tol: f64 },

    #[error("evaluation outside the C1 domain of the candidate at {x:?}")]
    EvalOutsideDomain { x: Vec<f64> },

    #[error("hessian unavailable at {x:?}")]
    HessianUnavailable { x: Vec<f64> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{direction} trajectory did not leave the box within the horizon")]
    NoExit { direction: &'static str },

    #[error("CFL guard violated: dt = {dt} exceeds min spacing / max |f| = {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("value iteration hit the cap of {iterations} sweeps with sup change {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("no sample point satisfies H >= eps and |x| < delta")]
    EmptyRegion,

    #[error("insufficient points for the fit: {got} usable, {need} needed")]
    InsufficientPoints { got: usize, need: usize },
}

impl Error {
    pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { what, expected, got })
        }
    }
}
