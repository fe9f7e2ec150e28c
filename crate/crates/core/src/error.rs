//! Crate-wide error type.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A dispersion model was queried outside its stated validity range.
    #[error("wavelength {wavelength_um} um outside validity range [{min_um}, {max_um}] um of glass '{glass}'")]
    WavelengthOutOfRange {
        glass: String,
        wavelength_um: f64,
        min_um: f64,
        max_um: f64,
    },

    /// Paraxial solve failed because the system leaves a parallel ray parallel.
    #[error("system has no optical power at {wavelength_um} um")]
    NoPower { wavelength_um: f64 },

    /// A trace or merit evaluation produced a non-finite intermediate.
    #[error("non-finite value encountered at surface {surface}")]
    NonFinite { surface: usize },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An archive insert carried a descriptor other than the archive's own.
    #[error("descriptor mismatch: archive holds '{expected}', candidate has '{actual}'")]
    DescriptorMismatch { expected: String, actual: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in {source_name} line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    /// A front-end cut the run short (wall-clock limit, shutdown request);
    /// partial results up to the cut are valid.
    #[error("interrupted: {0}")]
    Interrupted(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input (config, file formats,
    /// arguments) as opposed to runtime evaluation failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::InvalidArgument(_)
        )
    }
}
