//! Rational-ratio windowed-sinc resampling.
//!
//! The kernel is a Kaiser-windowed sinc with its cutoff at 0.95 of the lower
//! of the two Nyquist frequencies. For ratios `up/down` with a modest `up`,
//! one tap set per output phase is precomputed (polyphase form).

use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{Signal, SignalError};

const CUTOFF: f64 = 0.95;
/// Kernel half-length, in zero crossings of the sinc.
const ZERO_CROSSINGS: f64 = 64.0;
const KAISER_BETA: f64 = 10.0;
/// Largest phase count for which the polyphase table is built.
const MAX_TABLE_PHASES: u64 = 4096;

pub fn resample(s: &Signal, target_rate: u32) -> Result<Signal, SignalError> {
    if target_rate == 0 {
        return Err(SignalError::InvalidSampleRate);
    }
    let source_rate = s.sample_rate();
    if target_rate == source_rate {
        return Ok(s.clone());
    }
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = source_rate as u64 / g;
    let out_len = ((s.len() as u64 * target_rate as u64 + source_rate as u64 / 2)
        / source_rate as u64) as usize;

    // Cutoff relative to the input Nyquist frequency.
    let fc = CUTOFF * (source_rate.min(target_rate) as f64) / source_rate as f64;
    let half = (ZERO_CROSSINGS / fc).ceil() as i64;
    let taps_per_phase = (2 * half) as usize;
    let x = s.samples();

    let table = (up <= MAX_TABLE_PHASES).then(|| {
        (0..up)
            .map(|r| phase_taps(r as f64 / up as f64, half, fc))
            .collect::<Vec<_>>()
    });

    let mut out = Vec::with_capacity(out_len);
    let mut scratch;
    for n in 0..out_len as u64 {
        let q = (n * down / up) as i64;
        let r = n * down % up;
        let taps: &[f64] = match &table {
            Some(t) => &t[r as usize],
            None => {
                scratch = phase_taps(r as f64 / up as f64, half, fc);
                &scratch
            }
        };
        let first = q - half + 1;
        let mut acc = 0.0f64;
        // Restrict to the in-range part of the window; outside samples are zero.
        let j_lo = (-first).max(0) as usize;
        let j_hi = ((x.len() as i64 - first).max(0) as usize).min(taps_per_phase);
        for j in j_lo..j_hi {
            acc += x[(first + j as i64) as usize] as f64 * taps[j];
        }
        out.push(acc as f32);
    }
    Signal::new(out, target_rate)
}

/// Taps for input offsets `t = (half - 1 - j) + frac`, `j = 0..2·half`.
fn phase_taps(frac: f64, half: i64, fc: f64) -> Vec<f64> {
    (0..2 * half)
        .map(|j| {
            let t = (half - 1 - j) as f64 + frac;
            kernel(t, half as f64, fc)
        })
        .collect()
}

fn kernel(t: f64, half: f64, fc: f64) -> f64 {
    if t.abs() >= half {
        return 0.0;
    }
    let ratio = t / half;
    let window = bessel_i0(KAISER_BETA * (1.0 - ratio * ratio).sqrt()) / bessel_i0(KAISER_BETA);
    fc * sinc(fc * t) * window
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}
