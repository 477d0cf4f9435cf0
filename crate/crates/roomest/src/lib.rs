//! File formats, dataset synthesis and the `roomest` command line on top of
//! `roomest-core`.

pub mod cli;
pub mod corpus;
pub mod formats;
pub mod labels;
pub mod pipeline;
pub mod wav;

use std::path::Path;

use roomest_core::dataset::DatasetError;
use roomest_core::eval::EvalError;
use roomest_core::features::FeatureError;
use roomest_core::nn::NnError;
use roomest_core::noise::NoiseError;
use roomest_core::rir::RirError;
use roomest_core::signal::SignalError;
use roomest_core::wada::WadaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}: {1}")]
    Wav(String, hound::Error),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Rir(#[from] RirError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Wada(#[from] WadaError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
