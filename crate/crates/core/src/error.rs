//! Error type shared by every module in the crate.

use std::fmt;

/// Everything that can go wrong while building grids, validating problems,
/// integrating, or post-processing. Variants carry enough context to print a
/// one-line diagnostic; the CLI maps them onto exit codes.
#[derive(Debug)]
pub enum Error {
    /// A constructor or operation was handed a value outside its contract.
    InvalidArgument(String),
    /// Moment order outside the supported range.
    UnsupportedMoment { k: u32, max: u32 },
    /// Interpolation query outside the grid extent.
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    /// Problem data violates a structural hypothesis (positivity, floor, ...).
    InvalidProblem(String),
    /// A field stopped being finite mid-computation.
    NanState { step: u64, time: f64 },
    /// The step budget ran out while the solution stayed near its initial
    /// size: amplitude below the blow-up threshold.
    LikelyGlobalSolution { amplitude: f64, u_max: f64 },
    /// A blow-up time was requested for a trajectory whose tail is not
    /// growing (fitted slope has the wrong sign).
    NotBlowingUp { slope: f64 },
    /// Too few samples in the window a fit needs.
    InsufficientData(String),
    /// The running argmax never settled near the final one.
    AmbiguousLocation { drift: f64, spacing: f64 },
    /// A time outside the trajectory's span, or an inconsistent time grid.
    InvalidTime(String),
    /// Sweep invoked with no amplitudes, or all runs failed to blow up.
    EmptySweep(String),
    /// Supercritical exponent: the concentration asymptotics do not apply.
    SupercriticalExponent { p: f64, critical: f64 },
    /// Config file problem, with 1-based line number where known.
    Config { line: usize, message: String },
    /// Filesystem trouble while reading or writing artifacts.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {}", msg),
            Error::UnsupportedMoment { k, max } => {
                write!(f, "unsupported moment order k={} (supported: k <= {})", k, max)
            }
            Error::OutOfDomain { x, lo, hi } => {
                write!(f, "point {} outside the grid extent [{}, {}]", x, lo, hi)
            }
            Error::InvalidProblem(msg) => write!(f, "invalid problem: {}", msg),
            Error::NanState { step, time } => {
                write!(f, "non-finite state at step {} (t = {})", step, time)
            }
            Error::LikelyGlobalSolution { amplitude, u_max } => write!(
                f,
                "step budget exhausted with sup|u| = {:.3e} (amplitude {:.3e}): \
                 likely a global solution, amplitude below the blow-up threshold",
                u_max, amplitude
            ),
            Error::NotBlowingUp { slope } => write!(
                f,
                "trajectory tail is not blowing up (fitted slope {:.3e} is not negative)",
                slope
            ),
            Error::InsufficientData(msg) => write!(f, "insufficient data: {}", msg),
            Error::AmbiguousLocation { drift, spacing } => write!(
                f,
                "blow-up location ambiguous: argmax drifted {:.3e} over the final decade \
                 (> 10 grid spacings, h = {:.3e})",
                drift, spacing
            ),
            Error::InvalidTime(msg) => write!(f, "invalid time: {}", msg),
            Error::EmptySweep(msg) => write!(f, "empty sweep: {}", msg),
            Error::SupercriticalExponent { p, critical } => write!(
                f,
                "p = {} is supercritical (critical exponent {:.6}): \
                 concentration checks are not applicable",
                p, critical
            ),
            Error::Config { line, message } => {
                if *line > 0 {
                    write!(f, "config error at line {}: {}", line, message)
                } else {
                    write!(f, "config error: {}", message)
                }
            }
            Error::Io(msg) => write!(f, "io error: {}", msg),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
