//! Synthetic stand-ins for measured RIRs and recorded speech.
//!
//! These exist so the whole pipeline can run without external corpora: the
//! RIR families have known decay times, and the speech-like generator
//! produces voiced/unvoiced bursts separated by pauses, so reverberant tails
//! and noise floors are visible to the estimator.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{LN_10, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::signal::Signal;

/// Deterministic `h[i] = exp(-3·ln(10)·t_i / T)`; energy falls 60 dB per `t60`.
pub fn exponential_rir(t60: f64, sample_rate: u32, seconds: f64) -> Signal {
    let n = (seconds * sample_rate as f64).round().max(1.0) as usize;
    let k = -3.0 * LN_10 / t60;
    let v: Vec<f64> = (0..n)
        .map(|i| (k * i as f64 / sample_rate as f64).exp())
        .collect();
    Signal::from_f64(&v, sample_rate).expect("finite by construction")
}

/// Gaussian noise under an exponential envelope, plus a direct-path impulse of
/// amplitude `direct` at `t = 0`.
pub fn noise_rir(t60: f64, direct: f64, sample_rate: u32, seconds: f64, seed: u64) -> Signal {
    envelope_rir(sample_rate, seconds, seed, direct, |t| {
        (-3.0 * LN_10 * t / t60).exp()
    })
}

/// Two-slope decay: energy `(1-late_share)·10^(-6t/t_early) + late_share·10^(-6t/t_late)`.
pub fn two_slope_rir(
    t_early: f64,
    t_late: f64,
    late_share: f64,
    direct: f64,
    sample_rate: u32,
    seconds: f64,
    seed: u64,
) -> Signal {
    envelope_rir(sample_rate, seconds, seed, direct, |t| {
        let e = (1.0 - late_share) * (-6.0 * LN_10 * t / t_early).exp()
            + late_share * (-6.0 * LN_10 * t / t_late).exp();
        e.sqrt()
    })
}

fn envelope_rir(
    sample_rate: u32,
    seconds: f64,
    seed: u64,
    direct: f64,
    envelope: impl Fn(f64) -> f64,
) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * sample_rate as f64).round().max(1.0) as usize;
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let g: f64 = rng.sample(StandardNormal);
            g * envelope(i as f64 / sample_rate as f64)
        })
        .collect();
    v[0] += direct;
    Signal::from_f64(&v, sample_rate).expect("finite by construction")
}

/// Parameters drawn for one synthetic room.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoomDraw {
    pub t60: f64,
    pub direct: f64,
    /// `Some((t_late, late_share))` for a two-slope room.
    pub second_slope: Option<(f64, f64)>,
}

/// Draws a room: T60 log-uniform in [0.15, 2.0] s, a direct path between
/// 0.5 and 15 times the first tail sample's RMS, and a 30% chance of a
/// second, slower slope.
pub fn draw_room(rng: &mut impl Rng) -> RoomDraw {
    let t60 = (rng.random_range(0.15f64.ln()..2.0f64.ln())).exp();
    let direct = rng.random_range(0.5..15.0);
    let second_slope = rng.random_bool(0.3).then(|| {
        (
            t60 * rng.random_range(1.5..3.0),
            rng.random_range(0.02..0.2),
        )
    });
    RoomDraw {
        t60,
        direct,
        second_slope,
    }
}

/// Renders a drawn room long enough for its slowest slope to fall 60 dB.
pub fn render_room(room: &RoomDraw, sample_rate: u32, seed: u64) -> Signal {
    let slowest = room.second_slope.map_or(room.t60, |(t, _)| t.max(room.t60));
    let seconds = (1.2 * slowest).max(0.3);
    match room.second_slope {
        Some((t_late, share)) => two_slope_rir(
            room.t60,
            t_late,
            share,
            room.direct,
            sample_rate,
            seconds,
            seed,
        ),
        None => noise_rir(room.t60, room.direct, sample_rate, seconds, seed),
    }
}

/// Speech-like audio: harmonic "syllables" shaped by three formants, noisy
/// fricative bursts, and pauses of 30–800 ms. Peak-normalized to 0.9.
pub fn speech_like(seconds: f64, sample_rate: u32, seed: u64) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = sample_rate as f64;
    let n = (seconds * fs).round() as usize;
    let mut out = vec![0.0f64; n];
    // A speaker keeps a base pitch across the whole file.
    let base_f0 = rng.random_range(90.0..220.0);
    let mut pos = (rng.random_range(0.0..0.2) * fs) as usize;
    while pos < n {
        let dur = (rng.random_range(0.08..0.3) * fs) as usize;
        let end = (pos + dur).min(n);
        let amp = rng.random_range(0.3..1.0);
        if rng.random_bool(0.75) {
            voiced(&mut out[pos..end], fs, base_f0, amp, &mut rng);
        } else {
            fricative(&mut out[pos..end], fs, amp * 0.5, &mut rng);
        }
        let gap = if rng.random_bool(0.15) {
            rng.random_range(0.3..0.8)
        } else {
            rng.random_range(0.03..0.35)
        };
        pos = end + (gap * fs) as usize;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.9 / peak);
    }
    Signal::from_f64(&out, sample_rate).expect("finite by construction")
}

fn envelope_at(i: usize, len: usize, fs: f64) -> f64 {
    let attack = (0.02 * fs).max(1.0);
    let release = (0.03 * fs).max(1.0);
    let a = ((i as f64) / attack).min(1.0);
    let r = (((len - i) as f64) / release).min(1.0);
    let ramp = |x: f64| 0.5 - 0.5 * (PI * x).cos();
    ramp(a) * ramp(r)
}

fn voiced(seg: &mut [f64], fs: f64, base_f0: f64, amp: f64, rng: &mut ChaCha8Rng) {
    let f0_start = base_f0 * rng.random_range(0.85..1.2);
    let f0_end = f0_start * rng.random_range(0.85..1.15);
    let formants = [
        (rng.random_range(300.0..900.0), 80.0),
        (rng.random_range(900.0..2500.0), 120.0),
        (rng.random_range(2200.0..3400.0), 180.0),
    ];
    let max_f = 0.45 * fs;
    let harmonics = (max_f / f0_start.min(f0_end)).floor() as usize;
    let mut phases = vec![0.0f64; harmonics];
    let len = seg.len();
    for (i, s) in seg.iter_mut().enumerate() {
        let f0 = f0_start + (f0_end - f0_start) * i as f64 / len as f64;
        let mut v = 0.0;
        for (h, phase) in phases.iter_mut().enumerate() {
            let f = f0 * (h + 1) as f64;
            if f >= max_f {
                break;
            }
            *phase += 2.0 * PI * f / fs;
            v += formant_gain(f, &formants) * phase.sin();
        }
        *s += amp * envelope_at(i, len, fs) * v;
    }
}

fn formant_gain(f: f64, formants: &[(f64, f64); 3]) -> f64 {
    // Resonances over a -6 dB/octave glottal tilt.
    let tilt = 100.0 / (f + 100.0);
    let res: f64 = formants
        .iter()
        .map(|&(fc, bw)| 1.0 / (1.0 + ((f - fc) / bw).powi(2)))
        .sum();
    tilt * (0.05 + res)
}

fn fricative(seg: &mut [f64], fs: f64, amp: f64, rng: &mut ChaCha8Rng) {
    let len = seg.len();
    let mut prev = 0.0;
    for (i, s) in seg.iter_mut().enumerate() {
        let g: f64 = rng.sample(StandardNormal);
        // First difference tilts the noise towards high frequencies.
        *s += amp * 0.3 * envelope_at(i, len, fs) * (g - prev);
        prev = g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rir::{analyze_rir, estimate_rt60, schroeder_decay};

    #[test]
    fn generators_are_seeded() {
        assert_eq!(
            noise_rir(0.5, 1.0, 16_000, 0.5, 3),
            noise_rir(0.5, 1.0, 16_000, 0.5, 3)
        );
        assert_ne!(
            noise_rir(0.5, 1.0, 16_000, 0.5, 3),
            noise_rir(0.5, 1.0, 16_000, 0.5, 4)
        );
        assert_eq!(speech_like(1.0, 16_000, 1), speech_like(1.0, 16_000, 1));
    }

    #[test]
    fn speech_like_has_pauses_and_peak() {
        let s = speech_like(8.0, 16_000, 5);
        assert_eq!(s.len(), 128_000);
        assert!((s.peak() - 0.9).abs() < 1e-6);
        // Some 10 ms frames are (near) silent.
        let quiet = s
            .samples()
            .chunks(160)
            .filter(|c| c.iter().all(|v| v.abs() < 1e-4))
            .count();
        assert!(quiet > 20, "{quiet}");
    }

    #[test]
    fn rendered_rooms_recover_their_decay() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for seed in 0..5 {
            let mut room = draw_room(&mut rng);
            room.second_slope = None;
            let h = render_room(&room, 16_000, seed);
            let t = estimate_rt60(&schroeder_decay(&h).unwrap()).unwrap();
            assert!((t - room.t60).abs() < 0.1 * room.t60, "{t} vs {}", room.t60);
            let label = analyze_rir(&h).unwrap();
            assert!(label.flags.is_empty(), "{:?}", label.flags);
        }
    }
}
