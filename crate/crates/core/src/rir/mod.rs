//! Room impulse responses and the reverberation metrics computed on them.
//!
//! Everything here is a pure function of its inputs. The band filterbank,
//! Schroeder integration and RT60 fit are shared by the retrieval
//! fingerprints, the simulator's frequency-dependent absorption and the
//! evaluation metrics, so all three see exactly the same definitions.

mod decay;
mod filter;
mod metrics;
mod wav;

pub use decay::{
    multiband_rt60, rt60_single, schroeder_edc, EnergyDecayCurve, Rt60Fingerprint, EDC_FLOOR_DB,
};
pub use filter::{band_filter, BandSpec, OctaveBandpass};
pub use metrics::{drr, metric_errors, write_metric_csv, MetricErrors, MetricRow, DRR_CLAMP_DB};
pub use wav::{read_wav, write_wav};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RirError {
    #[error("impulse response has zero energy")]
    ZeroEnergy,
    #[error("octave band at {center_hz} Hz exceeds Nyquist for sample rate {sample_rate} Hz")]
    BandOutOfRange { center_hz: f64, sample_rate: u32 },
    #[error("energy decay never reaches {needed_db} dB")]
    InsufficientDecay { needed_db: f64 },
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("invalid impulse response: {0}")]
    Invalid(String),
    #[error("wav i/o on {path}: {source}")]
    Wav {
        path: String,
        #[source]
        source: hound::Error,
    },
}

/// A mono impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl ImpulseResponse {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, RirError> {
        if samples.is_empty() {
            return Err(RirError::Invalid("no samples".into()));
        }
        if sample_rate == 0 {
            return Err(RirError::Invalid("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(RirError::Invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|x| x * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}
