use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("gain is undefined at {v_apd} V (breakdown at {v_br} V); branch on the operating mode first")]
    GainDomain { v_apd: f64, v_br: f64 },

    #[error("operating point did not converge after {iterations} iterations (residual {residual:e} V)")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("effective bias {0} V is negative; quench voltage exceeds the supply")]
    NegativeBias(f64),

    #[error("time {t} s outside scenario range [0, {duration}] s")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("click probability requested in Geiger mode; the single-photon path handles that mode")]
    GeigerMode,

    #[error("detector not blinded at {p_blinding:e} W (minimum blinding power {p_min:e} W)")]
    NotBlinded { p_blinding: f64, p_min: f64 },

    #[error("only {found} clicks collected, at least {required} needed for a fit")]
    TooFewClicks { found: usize, required: usize },

    #[error("invalid plan timing: {0}")]
    InvalidPlan(String),

    #[error("run of {duration} s is shorter than one {window} s monitor window")]
    RunTooShort { duration: f64, window: f64 },

    #[error("expected a {expected} trace")]
    TraceKind { expected: &'static str },

    #[error("empty threshold map")]
    EmptyMap,

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
