use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = RiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RiceError {
    /// An argument fell outside the domain of a model formula.
    #[error("domain error in {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    /// Abatement or damage fraction reached zero or below.
    #[error("model breakdown: {what} = {value} for region {region} at step {step}")]
    Breakdown {
        what: &'static str,
        region: usize,
        step: usize,
        value: f64,
    },

    /// A simulation step failed; carries the absolute step index.
    #[error("simulation failed at step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<RiceError>,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid weights: {0}")]
    Weights(String),

    #[error("scenario failed validation: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("best response failed in episode {episode} for region {region}: {source}")]
    Episode {
        episode: usize,
        region: usize,
        #[source]
        source: Box<RiceError>,
    },

    #[error("receding-horizon window failed at step {step}{}: {source}", region.map(|r| format!(" for region {r}")).unwrap_or_default())]
    Window {
        step: usize,
        region: Option<usize>,
        #[source]
        source: Box<RiceError>,
    },

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RiceError {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        RiceError::Domain {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ RiceError::Step { .. } => e,
            e => RiceError::Step {
                step,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RiceError::Io {
            path: path.into(),
            source,
        }
    }
}
