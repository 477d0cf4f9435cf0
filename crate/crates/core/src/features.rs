//! MFCC front end and per-coefficient standardization.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fft::Fft;
use crate::fingerprint::Fingerprint;
use crate::signal::Signal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("signal is at {got} Hz, config expects {expected} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },
    #[error("signal has {len} samples, one frame needs {frame}")]
    SignalTooShort { len: usize, frame: usize },
    #[error("invalid MFCC config: {0}")]
    InvalidConfig(&'static str),
    #[error("feature matrix has {got} columns, statistics have {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_length: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub mel_bands: usize,
    pub num_coeffs: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_length: 400,
            hop: 160,
            fft_size: 512,
            mel_bands: 40,
            num_coeffs: 32,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = FeatureError::InvalidConfig;
        if self.sample_rate == 0 || self.frame_length == 0 || self.hop == 0 {
            return Err(bad("rate, frame length and hop must be positive"));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(bad("fft_size must be a power of two"));
        }
        if self.frame_length > self.fft_size {
            return Err(bad("frame_length exceeds fft_size"));
        }
        if self.num_coeffs == 0 || self.num_coeffs > self.mel_bands {
            return Err(bad("num_coeffs must be in 1..=mel_bands"));
        }
        if !(self.fmin >= 0.0
            && self.fmin < self.fmax
            && self.fmax <= self.sample_rate as f64 / 2.0)
        {
            return Err(bad("need 0 <= fmin < fmax <= sample_rate/2"));
        }
        if !(self.log_floor > 0.0) {
            return Err(bad("log_floor must be positive"));
        }
        Ok(())
    }

    /// Identity of every field that changes the output.
    pub fn fingerprint(&self) -> Fingerprint {
        let text = format!(
            "mfcc/1;rate={};frame={};hop={};fft={};mels={};coeffs={};fmin={:e};fmax={:e};floor={:e};window=hann-periodic;mel=slaney-area;dct=ortho-ii;center=false",
            self.sample_rate,
            self.frame_length,
            self.hop,
            self.fft_size,
            self.mel_bands,
            self.num_coeffs,
            self.fmin,
            self.fmax,
            self.log_floor
        );
        Fingerprint::of(text.as_bytes())
    }

    /// `1 + floor((len − frame_length)/hop)`, or 0 when the signal is shorter than a frame.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_length {
            0
        } else {
            1 + (len - self.frame_length) / self.hop
        }
    }
}

/// Row-major `(frames, coeffs)` matrix of 32-bit features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
    fingerprint: Fingerprint,
}

impl FeatureMatrix {
    /// Panics if `values.len() != rows * cols`.
    pub fn new(rows: usize, cols: usize, values: Vec<f32>, fingerprint: Fingerprint) -> Self {
        assert_eq!(values.len(), rows * cols, "feature matrix shape");
        Self {
            rows,
            cols,
            values,
            fingerprint,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.values[r * self.cols + c]
    }
}

/// Precomputed window, filterbank and DCT for one config.
#[derive(Clone, Debug)]
pub struct Mfcc {
    cfg: MfccConfig,
    fft: Fft,
    window: Vec<f64>,
    /// `(first bin, weights)` per mel band.
    filters: Vec<(usize, Vec<f64>)>,
    /// `num_coeffs × mel_bands`, row-major.
    dct: Vec<f64>,
    fingerprint: Fingerprint,
}

impl Mfcc {
    pub fn new(cfg: MfccConfig) -> Result<Self, FeatureError> {
        cfg.validate()?;
        let window = periodic_hann(cfg.frame_length);
        let filters = mel_filterbank(&cfg);
        let dct = dct_matrix(cfg.num_coeffs, cfg.mel_bands);
        Ok(Self {
            fft: Fft::new(cfg.fft_size),
            fingerprint: cfg.fingerprint(),
            cfg,
            window,
            filters,
            dct,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    /// One-sided power spectrum `|X_k|²`, `k = 0..=fft_size/2`, of a Hann-windowed frame.
    pub fn power_spectrum(&self, frame: &[f32]) -> Vec<f64> {
        let windowed: Vec<f64> = frame
            .iter()
            .zip(&self.window)
            .map(|(&x, w)| x as f64 * w)
            .collect();
        self.fft
            .real_spectrum(&windowed)
            .into_iter()
            .map(|c| c.norm_sqr())
            .collect()
    }

    /// `log10(max(mel energy, floor))` per band.
    pub fn log_mel(&self, frame: &[f32]) -> Vec<f64> {
        let power = self.power_spectrum(frame);
        self.filters
            .iter()
            .map(|(start, w)| {
                let e: f64 = w.iter().zip(&power[*start..]).map(|(a, b)| a * b).sum();
                e.max(self.cfg.log_floor).log10()
            })
            .collect()
    }

    /// Orthonormal DCT-II of `log_mel`, truncated to `num_coeffs`.
    pub fn cepstrum(&self, log_mel: &[f64]) -> Vec<f64> {
        self.dct
            .chunks_exact(self.cfg.mel_bands)
            .map(|row| row.iter().zip(log_mel).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn compute(&self, s: &Signal) -> Result<FeatureMatrix, FeatureError> {
        let cfg = &self.cfg;
        if s.sample_rate() != cfg.sample_rate {
            return Err(FeatureError::SampleRateMismatch {
                expected: cfg.sample_rate,
                got: s.sample_rate(),
            });
        }
        if s.len() < cfg.frame_length {
            return Err(FeatureError::SignalTooShort {
                len: s.len(),
                frame: cfg.frame_length,
            });
        }
        let rows = cfg.frame_count(s.len());
        let x = s.samples();
        let mut values = Vec::with_capacity(rows * cfg.num_coeffs);
        for r in 0..rows {
            let start = r * cfg.hop;
            let frame = &x[start..start + cfg.frame_length];
            values.extend(
                self.cepstrum(&self.log_mel(frame))
                    .iter()
                    .map(|&v| v as f32),
            );
        }
        Ok(FeatureMatrix::new(
            rows,
            cfg.num_coeffs,
            values,
            self.fingerprint,
        ))
    }
}

pub fn compute_mfcc(s: &Signal, cfg: &MfccConfig) -> Result<FeatureMatrix, FeatureError> {
    Mfcc::new(cfg.clone())?.compute(s)
}

fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const BREAK_HZ: f64 = 1000.0;
    let log_step = 6.4f64.ln() / 27.0;
    if hz < BREAK_HZ {
        hz / F_SP
    } else {
        BREAK_HZ / F_SP + (hz / BREAK_HZ).ln() / log_step
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const BREAK_HZ: f64 = 1000.0;
    let log_step = 6.4f64.ln() / 27.0;
    let break_mel = BREAK_HZ / F_SP;
    if mel < break_mel {
        mel * F_SP
    } else {
        BREAK_HZ * (log_step * (mel - break_mel)).exp()
    }
}

/// Triangular filters on mel-spaced edges, each scaled by `2/(f_hi − f_lo)` so
/// that every filter has the same area.
fn mel_filterbank(cfg: &MfccConfig) -> Vec<(usize, Vec<f64>)> {
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let edges: Vec<f64> = (0..cfg.mel_bands + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.mel_bands + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
    let bins = cfg.fft_size / 2 + 1;
    (0..cfg.mel_bands)
        .map(|m| {
            let (f0, f1, f2) = (edges[m], edges[m + 1], edges[m + 2]);
            let norm = 2.0 / (f2 - f0);
            let weights: Vec<f64> = (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let up = (f - f0) / (f1 - f0);
                    let down = (f2 - f) / (f2 - f1);
                    up.min(down).max(0.0) * norm
                })
                .collect();
            let first = weights.iter().position(|&w| w > 0.0).unwrap_or(0);
            let last = weights
                .iter()
                .rposition(|&w| w > 0.0)
                .map_or(first, |l| l + 1);
            (first, weights[first..last].to_vec())
        })
        .collect()
}

/// Rows `k = 0..coeffs` of the orthonormal DCT-II of length `n`.
pub fn dct_matrix(coeffs: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; coeffs * n];
    for k in 0..coeffs {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            out[k * n + i] = scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos();
        }
    }
    out
}

pub const STD_FLOOR: f64 = 1e-6;

/// Per-coefficient mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn identity(cols: usize) -> Self {
        Self {
            mean: vec![0.0; cols],
            std: vec![1.0; cols],
        }
    }

    /// Pooled over every row of every matrix. Returns `ShapeMismatch` when column
    /// counts differ and `InvalidConfig` when there are no rows at all.
    pub fn from_matrices<'a>(
        matrices: impl IntoIterator<Item = &'a FeatureMatrix>,
    ) -> Result<Self, FeatureError> {
        let mut acc = StatsAccumulator::default();
        for m in matrices {
            acc.push(m)?;
        }
        acc.finish()
    }
}

/// Running per-column sums, mergeable across matrices.
#[derive(Clone, Debug, Default)]
pub struct StatsAccumulator {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl StatsAccumulator {
    pub fn push(&mut self, m: &FeatureMatrix) -> Result<(), FeatureError> {
        if self.count == 0 && self.mean.is_empty() {
            self.mean = vec![0.0; m.cols()];
            self.m2 = vec![0.0; m.cols()];
        } else if m.cols() != self.mean.len() {
            return Err(FeatureError::ShapeMismatch {
                expected: self.mean.len(),
                got: m.cols(),
            });
        }
        for r in 0..m.rows() {
            self.count += 1;
            let n = self.count as f64;
            for (c, &v) in m.row(r).iter().enumerate() {
                let v = v as f64;
                let delta = v - self.mean[c];
                self.mean[c] += delta / n;
                self.m2[c] += delta * (v - self.mean[c]);
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<FeatureStats, FeatureError> {
        if self.count == 0 {
            return Err(FeatureError::InvalidConfig("no feature rows to pool"));
        }
        let n = self.count as f64;
        Ok(FeatureStats {
            std: self.m2.iter().map(|m| (m / n).sqrt()).collect(),
            mean: self.mean,
        })
    }
}

/// `(x − mean) / max(std, 1e-6)` per column.
pub fn standardize(f: &FeatureMatrix, stats: &FeatureStats) -> Result<FeatureMatrix, FeatureError> {
    if stats.mean.len() != f.cols() || stats.std.len() != f.cols() {
        return Err(FeatureError::ShapeMismatch {
            expected: stats.mean.len(),
            got: f.cols(),
        });
    }
    let values = f
        .values()
        .chunks_exact(f.cols())
        .flat_map(|row| {
            row.iter()
                .zip(stats.mean.iter().zip(&stats.std))
                .map(|(&v, (m, s))| ((v as f64 - m) / s.max(STD_FLOOR)) as f32)
        })
        .collect();
    Ok(FeatureMatrix::new(
        f.rows(),
        f.cols(),
        values,
        f.fingerprint(),
    ))
}
