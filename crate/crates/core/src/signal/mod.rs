//! Mono audio buffers and the sample-level operations shared by every stage.

mod resample;

use alloc::vec::Vec;

use thiserror::Error;

use crate::fft::fft_convolve;

pub use resample::resample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("signal is empty")]
    EmptySignal,
}

/// Mono audio: 32-bit samples plus the rate they were taken at.
///
/// Every sample is finite and the rate is positive; both are checked on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    samples: Vec<f32>,
    sample_rate: u32,
}

/// Output of [`Signal::normalize_peak`].
#[derive(Clone, Debug, PartialEq)]
pub struct Normalized {
    pub signal: Signal,
    /// Input was all zeros and was returned unchanged.
    pub silent: bool,
    /// Factor the input was multiplied by (1 when silent).
    pub gain: f64,
}

/// Above this many multiply-adds convolution goes through the FFT.
const DIRECT_CONVOLUTION_LIMIT: usize = 1 << 16;

impl Signal {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, SignalError> {
        if sample_rate == 0 {
            return Err(SignalError::InvalidSampleRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(SignalError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Builds from 64-bit values, rounding each to 32 bits.
    pub fn from_f64(samples: &[f64], sample_rate: u32) -> Result<Self, SignalError> {
        Self::new(samples.iter().map(|&s| s as f32).collect(), sample_rate)
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self, SignalError> {
        Self::new(alloc::vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
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

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64).collect()
    }

    /// Largest absolute sample, 0 for an empty signal.
    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    /// Samples `start..end`, clamped to the signal.
    pub fn slice(&self, start: usize, end: usize) -> Signal {
        let end = end.min(self.len());
        let start = start.min(end);
        Signal {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Multiplies every sample by `gain` (computed in 64-bit, stored in 32-bit).
    pub fn scaled(&self, gain: f64) -> Signal {
        Signal {
            samples: self
                .samples
                .iter()
                .map(|&s| (s as f64 * gain) as f32)
                .collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Sample-wise sum; the shorter operand is treated as zero-extended.
    pub fn mix(&self, other: &Signal) -> Result<Signal, SignalError> {
        self.check_rate(other)?;
        let n = self.len().max(other.len());
        let get = |s: &[f32], i: usize| s.get(i).copied().unwrap_or(0.0) as f64;
        let samples = (0..n)
            .map(|i| (get(&self.samples, i) + get(&other.samples, i)) as f32)
            .collect();
        Ok(Signal {
            samples,
            sample_rate: self.sample_rate,
        })
    }

    /// `S / max|S|`. An all-zero input comes back unchanged with `silent` set.
    pub fn normalize_peak(&self) -> Normalized {
        let peak = self.peak();
        if peak == 0.0 {
            return Normalized {
                signal: self.clone(),
                silent: true,
                gain: 1.0,
            };
        }
        // Divide rather than multiply by 1/peak so the peak sample lands on exactly ±1.
        let samples = self.samples.iter().map(|&s| s / peak).collect();
        Normalized {
            signal: Signal {
                samples,
                sample_rate: self.sample_rate,
            },
            silent: false,
            gain: 1.0 / peak as f64,
        }
    }

    /// Full linear convolution, length `len(x) + len(h) - 1`.
    pub fn convolve(&self, h: &Signal) -> Result<Signal, SignalError> {
        self.check_rate(h)?;
        if self.is_empty() || h.is_empty() {
            return Ok(Signal {
                samples: Vec::new(),
                sample_rate: self.sample_rate,
            });
        }
        let x = self.to_f64();
        let k = h.to_f64();
        let y = if x.len().saturating_mul(k.len()) <= DIRECT_CONVOLUTION_LIMIT {
            direct_convolve(&x, &k)
        } else {
            fft_convolve(&x, &k)
        };
        Signal::from_f64(&y, self.sample_rate)
    }

    /// `(1/N) Σ s[i]²`, accumulated in 64-bit.
    pub fn mean_power(&self) -> Result<f64, SignalError> {
        if self.is_empty() {
            return Err(SignalError::EmptySignal);
        }
        Ok(energy(&self.samples) / self.len() as f64)
    }

    pub fn resample(&self, target_rate: u32) -> Result<Signal, SignalError> {
        resample(self, target_rate)
    }

    fn check_rate(&self, other: &Signal) -> Result<(), SignalError> {
        if self.sample_rate != other.sample_rate {
            return Err(SignalError::SampleRateMismatch(
                self.sample_rate,
                other.sample_rate,
            ));
        }
        Ok(())
    }
}

/// `Σ s[i]²` in 64-bit.
pub fn energy(samples: &[f32]) -> f64 {
    samples.iter().map(|&s| (s as f64) * (s as f64)).sum()
}

/// Textbook O(N·M) convolution.
pub fn direct_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut y = alloc::vec![0.0; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (yj, &hj) in y[i..].iter_mut().zip(h) {
            *yj += xi * hj;
        }
    }
    y
}
