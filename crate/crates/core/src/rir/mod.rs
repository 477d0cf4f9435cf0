//! Ground-truth room-acoustic parameters from a room impulse response.
//!
//! All energy bookkeeping runs in 64-bit on `h²`. Levels use a −120 dB floor
//! in place of `log(0)`, and clarity-type ratios whose late window is empty
//! are capped at +60 dB when a label (rather than an error) is required.

pub mod filter;
mod sti;

use alloc::vec::Vec;

use thiserror::Error;

use crate::label::{AcousticLabel, LabelFlags};
use crate::signal::Signal;

pub use sti::{compute_sti, StiReport, BAND_CENTRES, MALE_WEIGHTS, MODULATION_FREQUENCIES};

/// Onset is the first sample reaching this fraction of the absolute peak.
pub const ONSET_THRESHOLD: f32 = 0.05;
pub const DB_FLOOR: f64 = -120.0;
pub const RATIO_CAP_DB: f64 = 60.0;
pub const FIT_START_DB: f64 = -5.0;
pub const FIT_END_DB: f64 = -35.0;
pub const MIN_FIT_POINTS: usize = 10;

pub const DRR_SPLIT_MS: f64 = 2.5;
pub const C50_SPLIT_MS: f64 = 50.0;
pub const C80_SPLIT_MS: f64 = 80.0;

/// Version stamp written next to every label this module produces.
pub const ANALYZER_VERSION: &str = "rir-analysis/1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RirError {
    #[error("impulse response is empty or all zeros")]
    AllZeroRir,
    #[error("decay curve never reaches {FIT_END_DB} dB (minimum {0:.1} dB)")]
    InsufficientDecayRange(f64),
    #[error("only {0} points in the fit window, need {MIN_FIT_POINTS}")]
    DegenerateFit(usize),
    #[error("late energy after {0} ms is zero")]
    ZeroLateEnergy(f64),
    #[error("sample rate {0} Hz is too low for the 8 kHz octave band")]
    UnsupportedRate(u32),
}

/// Schroeder energy decay, one point per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayCurve {
    times: Vec<f64>,
    levels: Vec<f64>,
}

impl DecayCurve {
    /// Panics if the lengths differ.
    pub fn from_parts(times: Vec<f64>, levels: Vec<f64>) -> Self {
        assert_eq!(times.len(), levels.len());
        Self { times, levels }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Drops everything before the first sample at or above 5% of the peak.
pub fn align_onset(h: &Signal) -> Result<Signal, RirError> {
    let peak = h.peak();
    if peak == 0.0 {
        return Err(RirError::AllZeroRir);
    }
    let threshold = ONSET_THRESHOLD * peak;
    let onset = h
        .samples()
        .iter()
        .position(|s| s.abs() >= threshold)
        .expect("peak sample satisfies the threshold");
    Ok(h.slice(onset, h.len()))
}

/// `s²(t_k) = Σ_{i≥k} h[i]²` in dB relative to `s²(0)`.
pub fn schroeder_decay(h: &Signal) -> Result<DecayCurve, RirError> {
    let n = h.len();
    let mut tail = alloc::vec![0.0f64; n];
    let mut acc = 0.0f64;
    for (i, &s) in h.samples().iter().enumerate().rev() {
        acc += s as f64 * s as f64;
        tail[i] = acc;
    }
    if acc == 0.0 {
        return Err(RirError::AllZeroRir);
    }
    let fs = h.sample_rate() as f64;
    let levels = tail.iter().map(|&e| to_db(e / acc)).collect();
    let times = (0..n).map(|i| i as f64 / fs).collect();
    Ok(DecayCurve { times, levels })
}

/// RT60 as twice the 30 dB decay time of a least-squares line over [−35, −5] dB.
pub fn estimate_rt60(d: &DecayCurve) -> Result<f64, RirError> {
    let lowest = d.levels.iter().copied().fold(f64::INFINITY, f64::min);
    if lowest > FIT_END_DB {
        return Err(RirError::InsufficientDecayRange(lowest));
    }
    let window = || {
        d.times
            .iter()
            .zip(&d.levels)
            .filter(|(_, &l)| (FIT_END_DB..=FIT_START_DB).contains(&l))
    };
    let count = window().count();
    if count < MIN_FIT_POINTS {
        return Err(RirError::DegenerateFit(count));
    }
    let nf = count as f64;
    let (st, sl) = window().fold((0.0, 0.0), |(a, b), (t, l)| (a + t, b + l));
    let (mt, ml) = (st / nf, sl / nf);
    let (cov, var) = window().fold((0.0, 0.0), |(c, v), (t, l)| {
        (c + (t - mt) * (l - ml), v + (t - mt) * (t - mt))
    });
    let slope = cov / var;
    if !(slope < 0.0) {
        return Err(RirError::DegenerateFit(count));
    }
    Ok(2.0 * (-30.0 / slope))
}

/// First sample index at or after `split_ms`; that sample opens the late window.
pub fn split_index(split_ms: f64, sample_rate: u32) -> usize {
    let exact = split_ms * sample_rate as f64 / 1000.0;
    exact.ceil() as usize
}

/// `10·log10(early / late)` around `split_ms`.
pub fn energy_ratio(h: &Signal, split_ms: f64) -> Result<f64, RirError> {
    let split = split_index(split_ms, h.sample_rate()).min(h.len());
    let (early, late) = h.samples().split_at(split);
    let early = crate::signal::energy(early);
    let late = crate::signal::energy(late);
    let total = early + late;
    if total == 0.0 {
        return Err(RirError::AllZeroRir);
    }
    if late < 1e-12 * total {
        return Err(RirError::ZeroLateEnergy(split_ms));
    }
    Ok(10.0 * (early / late).log10())
}

/// Onset-aligns once, then computes every room parameter.
///
/// Per-parameter failures become flags: a decay that cannot be fitted leaves
/// `rt60 = 0` with [`LabelFlags::RT60_INVALID`], and ratios with an empty late
/// window (or above the cap) are set to +60 dB with the matching capped flag.
pub fn analyze_rir(h: &Signal) -> Result<AcousticLabel, RirError> {
    let aligned = align_onset(h)?;
    let mut flags = LabelFlags::NONE;

    let rt60 = match schroeder_decay(&aligned).and_then(|d| estimate_rt60(&d)) {
        Ok(t) => t,
        Err(RirError::InsufficientDecayRange(_)) | Err(RirError::DegenerateFit(_)) => {
            flags.insert(LabelFlags::RT60_INVALID);
            0.0
        }
        Err(e) => return Err(e),
    };

    let mut ratio = |split: f64, flag: LabelFlags| -> Result<f64, RirError> {
        match energy_ratio(&aligned, split) {
            Ok(r) if r <= RATIO_CAP_DB => Ok(r),
            Ok(_) | Err(RirError::ZeroLateEnergy(_)) => {
                flags.insert(flag);
                Ok(RATIO_CAP_DB)
            }
            Err(e) => Err(e),
        }
    };
    let drr = ratio(DRR_SPLIT_MS, LabelFlags::DRR_CAPPED)?;
    let c50 = ratio(C50_SPLIT_MS, LabelFlags::C50_CAPPED)?;
    let c80 = ratio(C80_SPLIT_MS, LabelFlags::C80_CAPPED)?;

    let sti = compute_sti(&aligned)?;
    if sti.silent_bands != 0 {
        flags.insert(LabelFlags::STI_BAND_SILENT);
    }

    Ok(AcousticLabel {
        rt60,
        drr,
        c50,
        c80,
        sti: sti.sti,
        snr: None,
        flags,
    })
}

fn to_db(ratio: f64) -> f64 {
    if ratio > 0.0 {
        (10.0 * ratio.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}
