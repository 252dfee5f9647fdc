use thiserror::Error;

/// Errors raised by the physics, fitting and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing field `{0}`")]
    MissingField(String),

    #[error("`{name}` must be positive, got {value}")]
    NonPositive { name: String, value: f64 },

    #[error("duplicate transition line {0}")]
    DuplicateLine(String),

    #[error("laser is resonant with the {line} line from state {state}")]
    Resonant { line: String, state: String },

    #[error("compensation frequency {omega_c:.6e} rad/s is not between the ground-state transitions of any line")]
    CompensationWindow { omega_c: f64 },

    #[error("trap light is blue detuned; no trapping potential")]
    BlueDetuned,

    #[error("trap and compensation shifts have the same sign; no cancelling ratio exists")]
    NoCancellation,

    #[error("site {0} is outside the lens grid")]
    SiteOutOfGrid(String),

    #[error("unknown site label `{0}`")]
    UnknownSite(String),

    #[error("energy {energy:.3e} J outside [0, {depth:.3e}] J")]
    EnergyOutOfRange { energy: f64, depth: f64 },

    #[error("ensemble belongs to site `{ensemble}` but sequence targets `{sequence}`")]
    SiteMismatch { ensemble: String, sequence: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("fit did not converge after {iterations} iterations (rms {rms:.3e}, last step {step:.3e})")]
    FitDiverged {
        iterations: usize,
        rms: f64,
        step: f64,
    },

    #[error("objective is not unimodal on the search bracket")]
    BracketFailure { samples: Vec<(f64, f64)> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::MissingField(_)
                | Error::NonPositive { .. }
                | Error::DuplicateLine(_)
                | Error::SiteOutOfGrid(_)
                | Error::UnknownSite(_)
                | Error::Empty(_)
                | Error::Io(_)
                | Error::Toml(_)
                | Error::Json(_)
                | Error::Csv(_)
                | Error::CompensationWindow { .. }
                | Error::BlueDetuned
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive {
            name: name.to_string(),
            value,
        })
    }
}
