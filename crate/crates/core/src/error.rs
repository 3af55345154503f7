use thiserror::Error;

/// Errors produced by the solver and the statistics toolkit.
#[derive(Error, Debug)]
pub enum Error {
    #[error("lattice mismatch: fields live on different lattices")]
    LatticeMismatch,

    #[error("Hermitian symmetry violated: max |c(k) - conj(c(-k))| = {max_asymmetry:.3e}")]
    NonHermitian { max_asymmetry: f64 },

    #[error("numerical blow-up at step {step} (t = {time}): non-finite coefficients")]
    BlowUp { step: usize, time: f64 },

    #[error("pasting mismatch at the seam: L2 gap {gap:.3e} exceeds tolerance {tol:.3e}")]
    PastingMismatch { gap: f64, tol: f64 },

    #[error("time {t} outside the trajectory interval [{t0}, {t1}]")]
    OutOfInterval { t: f64, t0: f64, t1: f64 },

    #[error("translation shift {shift} exceeds the available span {span}")]
    ShiftTooLarge { shift: f64, span: f64 },

    #[error("trajectory does not cover the requested window [{t0}, {t1}]")]
    InsufficientCoverage { t0: f64, t1: f64 },

    #[error("all samples degenerate: cannot estimate constants")]
    DegenerateSamples,

    #[error("observable returned a non-finite value on a support state")]
    NonFiniteObservable,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
