use core::fmt;

use alloc::boxed::Box;

use crate::solver::SolitonResult;

#[derive(Debug, Clone)]
pub enum Error {
    /// Two grid functions live on different boxes.
    ShapeMismatch,
    InvalidShape {
        dim: usize,
        radius: usize,
    },
    /// A site lies outside the box.
    SiteOutOfBox,
    NonFinite,
    InvalidNormOrder(f64),
    /// Translation would push nonzero mass out of the box.
    SupportOverflow,
    EmptySupport,
    InvalidProfile(&'static str),
    TimeOutOfRange(f64),
    /// Requested evolution time exceeds what the engine was sized for.
    Accuracy {
        theta: f64,
        max_theta: f64,
    },
    /// The method is not available in this build (spectral needs `std`).
    Unsupported(&'static str),
    InvalidConfig(&'static str),
    /// Internal consistency check failed: φ(f) picked up an imaginary part.
    Consistency {
        imag: f64,
    },
    ZeroField,
    NotConverged(Box<SolitonResult>),
    StepMisaligned {
        h: f64,
    },
    InsufficientRange {
        available: usize,
        required: usize,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch => f.write_str("grid functions live on different boxes"),
            Error::InvalidShape { dim, radius } => {
                write!(
                    f,
                    "invalid box: dim {dim}, radius {radius} (need 1 <= dim <= 3, radius >= 1)"
                )
            }
            Error::SiteOutOfBox => f.write_str("lattice site outside the box"),
            Error::NonFinite => f.write_str("non-finite value in grid function"),
            Error::InvalidNormOrder(p) => write!(f, "norm order {p} is not in [1, inf]"),
            Error::SupportOverflow => f.write_str("shift would move mass out of the box"),
            Error::EmptySupport => f.write_str("support is empty"),
            Error::InvalidProfile(why) => write!(f, "invalid diffraction profile: {why}"),
            Error::TimeOutOfRange(t) => write!(f, "time {t} outside [0, 1]"),
            Error::Accuracy { theta, max_theta } => write!(
                f,
                "evolution time {theta} exceeds the engine's validated range {max_theta}"
            ),
            Error::Unsupported(what) => write!(f, "unsupported in this build: {what}"),
            Error::InvalidConfig(why) => write!(f, "invalid configuration: {why}"),
            Error::Consistency { imag } => {
                write!(f, "phi has a spurious imaginary part {imag:e}")
            }
            Error::ZeroField => f.write_str("field is identically zero"),
            Error::NotConverged(res) => write!(
                f,
                "solver did not converge after {} iterations (residual {:e})",
                res.iterations, res.residual
            ),
            Error::StepMisaligned { h } => {
                write!(f, "step {h} does not divide every profile segment")
            }
            Error::InsufficientRange {
                available,
                required,
            } => write!(
                f,
                "only {available} usable entries, need at least {required}"
            ),
        }
    }
}

impl core::error::Error for Error {}
