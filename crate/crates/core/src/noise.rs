//! Noise generators and exact-SNR scaling.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fft::Fft;
use crate::signal::{Signal, SignalError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("requested zero noise samples")]
    EmptyRequest,
    #[error("speech has zero power")]
    SilentSpeech,
    #[error("noise has zero power")]
    SilentNoise,
    #[error("noise has {noise} samples, speech needs {speech}")]
    NoiseTooShort { noise: usize, speech: usize },
    #[error("invalid noise spec: {0}")]
    InvalidSpec(&'static str),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    White,
    Pink,
    Real,
    None,
}

/// What noise, if any, gets mixed into an example.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Recording path, `real` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Generator seed; for `real` it picks the start offset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            source: None,
            seed: None,
        }
    }

    pub fn generated(kind: NoiseKind, seed: u64) -> Self {
        Self {
            kind,
            source: None,
            seed: Some(seed),
        }
    }

    pub fn real(source: String, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Real,
            source: Some(source),
            seed: Some(seed),
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        match self.kind {
            NoiseKind::Real if self.source.is_none() => {
                Err(NoiseError::InvalidSpec("real noise needs a source path"))
            }
            NoiseKind::White | NoiseKind::Pink if self.seed.is_none() => {
                Err(NoiseError::InvalidSpec("generated noise needs a seed"))
            }
            _ => Ok(()),
        }
    }
}

/// I.i.d. standard Gaussian samples.
pub fn gen_white(n: usize, seed: u64, sample_rate: u32) -> Result<Signal, NoiseError> {
    if n == 0 {
        return Err(NoiseError::EmptyRequest);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
        .collect();
    Ok(Signal::new(samples, sample_rate)?)
}

/// Lowest pole of the pinking cascade.
const PINK_LOWEST_HZ: f64 = 2.0;
/// Pole-to-pole spacing: half a decade, each zero halfway (in log frequency) between poles.
const PINK_STEP: f64 = 3.162_277_660_168_379_5;

/// First-order pole/zero pairs `(1 - z·q⁻¹)/(1 - p·q⁻¹)` whose product approximates
/// a −3 dB/octave slope above [`PINK_LOWEST_HZ`].
fn pink_sections(sample_rate: u32) -> Vec<(f64, f64)> {
    let fs = sample_rate as f64;
    let mut out = Vec::new();
    let mut f = PINK_LOWEST_HZ;
    while f < fs / 2.0 {
        let zero = (f * PINK_STEP.sqrt()).min(0.49 * fs);
        out.push(((-2.0 * PI * f / fs).exp(), (-2.0 * PI * zero / fs).exp()));
        f *= PINK_STEP;
    }
    out
}

/// 1/f noise: white Gaussian noise through a fixed cascade of first-order
/// shelving sections, then scaled to unit mean power.
pub fn gen_pink(n: usize, seed: u64, sample_rate: u32) -> Result<Signal, NoiseError> {
    if n == 0 {
        return Err(NoiseError::EmptyRequest);
    }
    let sections = pink_sections(sample_rate);
    // Ten time constants of the slowest pole.
    let warmup = (10.0 * sample_rate as f64 / (2.0 * PI * PINK_LOWEST_HZ)).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = vec![(0.0f64, 0.0f64); sections.len()];
    let mut out = Vec::with_capacity(n);
    for i in 0..warmup + n {
        let mut v: f64 = rng.sample(StandardNormal);
        for (&(p, z), (x1, y1)) in sections.iter().zip(state.iter_mut()) {
            let y = v - z * *x1 + p * *y1;
            *x1 = v;
            *y1 = y;
            v = y;
        }
        if i >= warmup {
            out.push(v);
        }
    }
    let power = out.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let gain = 1.0 / power.sqrt();
    Ok(Signal::from_f64(
        &out.iter().map(|v| v * gain).collect::<Vec<_>>(),
        sample_rate,
    )?)
}

/// Cuts `len` samples from `noise` starting at a seeded offset, reading
/// cyclically (tiling) when the recording is shorter than `len`.
pub fn fit_noise_length(noise: &Signal, len: usize, seed: u64) -> Result<Signal, NoiseError> {
    let n = noise.len();
    if n == 0 {
        return Err(NoiseError::SilentNoise);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src = noise.samples();
    let samples = if n >= len {
        let offset = rng.random_range(0..=n - len);
        src[offset..offset + len].to_vec()
    } else {
        let offset = rng.random_range(0..n);
        (0..len).map(|i| src[(offset + i) % n]).collect()
    };
    Ok(Signal::new(samples, noise.sample_rate())?)
}

/// Truncates `noise` to the speech length and scales it so that
/// `10·log10(P_speech / P_noise) = target_db`.
pub fn scale_to_snr(speech: &Signal, noise: &Signal, target_db: f64) -> Result<Signal, NoiseError> {
    if speech.sample_rate() != noise.sample_rate() {
        return Err(
            SignalError::SampleRateMismatch(speech.sample_rate(), noise.sample_rate()).into(),
        );
    }
    if noise.len() < speech.len() {
        return Err(NoiseError::NoiseTooShort {
            noise: noise.len(),
            speech: speech.len(),
        });
    }
    if speech.is_empty() {
        return Err(NoiseError::SilentSpeech);
    }
    let p_speech = speech.mean_power()?;
    if p_speech == 0.0 {
        return Err(NoiseError::SilentSpeech);
    }
    let noise = noise.slice(0, speech.len());
    let p_noise = noise.mean_power()?;
    if p_noise == 0.0 {
        return Err(NoiseError::SilentNoise);
    }
    let gain = snr_gain(p_speech, p_noise, target_db);
    Ok(noise.scaled(gain))
}

/// `g = sqrt(P_x / (P_n · 10^(target/10)))`.
pub fn snr_gain(p_speech: f64, p_noise: f64, target_db: f64) -> f64 {
    (p_speech / (p_noise * 10f64.powf(target_db / 10.0))).sqrt()
}

/// `10·log10(P_speech / P_noise)`.
pub fn measured_snr(speech: &Signal, noise: &Signal) -> Result<f64, NoiseError> {
    let ps = speech.mean_power()?;
    let pn = noise.mean_power()?;
    if pn == 0.0 {
        return Err(NoiseError::SilentNoise);
    }
    Ok(10.0 * (ps / pn).log10())
}

/// Welch power spectral density (Hann window, 50% overlap), bins `0..=nfft/2`.
/// Each bin is an average of `|X_k|²`; only relative levels are meaningful.
pub fn welch_psd(s: &Signal, nfft: usize) -> Vec<f64> {
    let fft = Fft::new(nfft);
    let window: Vec<f64> = (0..nfft)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / nfft as f64).cos())
        .collect();
    let x = s.samples();
    let mut psd = vec![0.0; nfft / 2 + 1];
    let mut segments = 0usize;
    let mut start = 0;
    let mut frame = vec![0.0; nfft];
    while start + nfft <= x.len() {
        for (f, (&v, w)) in frame.iter_mut().zip(x[start..].iter().zip(&window)) {
            *f = v as f64 * w;
        }
        for (p, c) in psd.iter_mut().zip(fft.real_spectrum(&frame)) {
            *p += c.norm_sqr();
        }
        segments += 1;
        start += nfft / 2;
    }
    if segments > 0 {
        psd.iter_mut().for_each(|p| *p /= segments as f64);
    }
    psd
}

/// Least-squares slope, in dB per octave, of mean PSD level per band.
/// `edges` are consecutive band boundaries in Hz.
pub fn band_slope_db_per_octave(psd: &[f64], sample_rate: u32, edges: &[f64]) -> f64 {
    let nfft = (psd.len() - 1) * 2;
    let bin_hz = sample_rate as f64 / nfft as f64;
    let points: Vec<(f64, f64)> = edges
        .windows(2)
        .map(|e| {
            let bins: Vec<f64> = psd
                .iter()
                .enumerate()
                .filter(|(k, _)| {
                    let f = *k as f64 * bin_hz;
                    f >= e[0] && f < e[1]
                })
                .map(|(_, &p)| p)
                .collect();
            let mean = bins.iter().sum::<f64>() / bins.len() as f64;
            ((e[0] * e[1]).sqrt().log2(), 10.0 * mean.log10())
        })
        .collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Octave bands spanning 125 Hz – 4 kHz.
pub const SLOPE_BAND_EDGES: [f64; 6] = [125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn white_is_seeded_and_unit_power() {
        let a = gen_white(160_000, 42, 16_000).unwrap();
        assert_eq!(a, gen_white(160_000, 42, 16_000).unwrap());
        assert_ne!(a, gen_white(160_000, 43, 16_000).unwrap());
        let mean = a.samples().iter().map(|&v| v as f64).sum::<f64>() / a.len() as f64;
        let power = a.mean_power().unwrap();
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((0.98..1.02).contains(&power), "{power}");
        assert_eq!(gen_white(0, 1, 16_000), Err(NoiseError::EmptyRequest));
    }

    #[test]
    fn white_spectrum_is_flat() {
        let s = gen_white(160_000, 7, 16_000).unwrap();
        let slope = band_slope_db_per_octave(&welch_psd(&s, 4096), 16_000, &SLOPE_BAND_EDGES);
        assert!(slope.abs() < 0.5, "{slope}");
    }

    #[test]
    fn pink_spectrum_falls_three_db_per_octave() {
        let s = gen_pink(160_000, 7, 16_000).unwrap();
        assert_eq!(s, gen_pink(160_000, 7, 16_000).unwrap());
        let slope = band_slope_db_per_octave(&welch_psd(&s, 4096), 16_000, &SLOPE_BAND_EDGES);
        assert!((slope + 3.0).abs() < 0.5, "{slope}");
        let p = s.mean_power().unwrap();
        assert!((0.95..1.05).contains(&p), "{p}");
    }

    #[test]
    fn pink_works_at_other_rates() {
        let s = gen_pink(44_100 * 4, 3, 44_100).unwrap();
        let slope = band_slope_db_per_octave(&welch_psd(&s, 8192), 44_100, &SLOPE_BAND_EDGES);
        assert!((slope + 3.0).abs() < 0.5, "{slope}");
    }

    fn constant_power(v: f32, n: usize) -> Signal {
        Signal::new(
            (0..n).map(|i| if i % 2 == 0 { v } else { -v }).collect(),
            16_000,
        )
        .unwrap()
    }

    #[test]
    fn gain_examples() {
        let speech = constant_power(0.5, 100);
        let noise = constant_power(0.5, 200);
        let scaled = scale_to_snr(&speech, &noise, 0.0).unwrap();
        assert_eq!(scaled.len(), 100);
        assert_eq!(scaled.samples()[0], 0.5);
        assert!((snr_gain(1.0, 1.0, 10.0) - 0.316_227_766).abs() < 1e-9);
    }

    #[test]
    fn minus_five_db_round_trip() {
        let speech = gen_pink(16_000, 1, 16_000).unwrap().scaled(0.3);
        let noise = gen_white(20_000, 2, 16_000).unwrap();
        let scaled = scale_to_snr(&speech, &noise, -5.0).unwrap();
        let snr = measured_snr(&speech, &scaled).unwrap();
        assert!((snr + 5.0).abs() < 0.01, "{snr}");
    }

    #[test]
    fn scaling_errors() {
        let speech = constant_power(0.5, 100);
        let silent = Signal::zeros(100, 16_000).unwrap();
        assert_eq!(
            scale_to_snr(&silent, &speech, 0.0),
            Err(NoiseError::SilentSpeech)
        );
        assert_eq!(
            scale_to_snr(&speech, &silent, 0.0),
            Err(NoiseError::SilentNoise)
        );
        assert_eq!(
            scale_to_snr(&speech, &constant_power(0.1, 50), 0.0),
            Err(NoiseError::NoiseTooShort {
                noise: 50,
                speech: 100
            })
        );
    }

    #[test]
    fn short_noise_is_tiled() {
        let noise = Signal::new(vec![1.0, 2.0, 3.0], 16_000).unwrap();
        let fitted = fit_noise_length(&noise, 7, 5).unwrap();
        assert_eq!(fitted.len(), 7);
        let s = fitted.samples();
        for w in s.windows(2) {
            let next = if w[0] == 3.0 { 1.0 } else { w[0] + 1.0 };
            assert_eq!(w[1], next);
        }
        let long = gen_white(1000, 1, 16_000).unwrap();
        let cut = fit_noise_length(&long, 100, 9).unwrap();
        let offset = long
            .samples()
            .windows(100)
            .position(|w| w == cut.samples())
            .unwrap();
        assert!(offset <= 900);
    }

    #[test]
    fn spec_validation() {
        assert!(NoiseSpec::none().validate().is_ok());
        assert!(NoiseSpec::generated(NoiseKind::Pink, 1).validate().is_ok());
        let bad = NoiseSpec {
            kind: NoiseKind::White,
            source: None,
            seed: None,
        };
        assert!(bad.validate().is_err());
        let bad = NoiseSpec {
            kind: NoiseKind::Real,
            source: None,
            seed: Some(1),
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(60))]

        #[test]
        fn snr_round_trip(target in -5i32..=24, seed in 0u64..1000) {
            let speech = gen_white(4000, seed, 16_000).unwrap().scaled(0.2);
            let noise = gen_pink(5000, seed + 1, 16_000).unwrap();
            let scaled = scale_to_snr(&speech, &noise, target as f64).unwrap();
            let snr = measured_snr(&speech, &scaled).unwrap();
            prop_assert!((snr - target as f64).abs() < 0.01);
        }
    }
}
