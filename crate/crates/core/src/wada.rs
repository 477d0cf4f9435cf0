//! WADA-SNR: blind SNR from the shape of the amplitude distribution.
//!
//! Clean speech amplitudes are modelled as Gamma(0.4) and noise as Gaussian.
//! The statistic `G = ln(mean|z|) − mean(ln|z|)` falls monotonically from the
//! Gamma value toward the half-normal value as noise is added, so a table of
//! `G` against SNR inverts to an estimate.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::Signal;

pub const GAMMA_SHAPE: f64 = 0.4;
pub const SNR_MIN_DB: f64 = -20.0;
pub const SNR_MAX_DB: f64 = 100.0;
pub const SNR_STEP_DB: f64 = 0.5;
pub const MIN_SAMPLES_PER_POINT: usize = 1_000_000;
/// Samples at or below this magnitude are left out of `G`.
const AMPLITUDE_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WadaError {
    #[error("table is not strictly monotone near {0} dB; use more samples per point")]
    NonMonotoneTable(f64),
    #[error("need at least {MIN_SAMPLES_PER_POINT} samples per grid point, got {0}")]
    TooFewSamples(usize),
    #[error("signal has no samples above the amplitude floor")]
    SilentSignal,
}

/// `G` sampled on the SNR grid, increasing with SNR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WadaTable {
    pub seed: u64,
    pub samples_per_point: usize,
    pub snr_db: Vec<f64>,
    pub g: Vec<f64>,
}

/// `ln(mean|z|) − mean(ln|z|)` over samples above the floor.
pub fn g_statistic(z: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut sum_ln, mut n) = (0.0, 0.0, 0usize);
    for v in z {
        let a = v.abs();
        if a > AMPLITUDE_FLOOR {
            sum += a;
            sum_ln += a.ln();
            n += 1;
        }
    }
    (n > 0).then(|| (sum / n as f64).ln() - sum_ln / n as f64)
}

/// Monte-Carlo table over `samples_per_point` Gamma-speech draws shared by every
/// grid point. For each draw the expectation over the Gaussian noise is taken
/// exactly (see [`NoiseMoments`]), so `G` is a smooth function of the noise level
/// and its tiny slope at the noisy end is not buried in sampling noise. The curve
/// gets a 3-point moving average and must then be strictly increasing.
pub fn build_wada_table(seed: u64, samples_per_point: usize) -> Result<WadaTable, WadaError> {
    if samples_per_point < MIN_SAMPLES_PER_POINT {
        return Err(WadaError::TooFewSamples(samples_per_point));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(GAMMA_SHAPE, 1.0).expect("valid gamma parameters");
    // Only |s| matters: both moments are even in s.
    let speech: Vec<f64> = (0..samples_per_point)
        .map(|_| gamma.sample(&mut rng))
        .collect();
    let moments = NoiseMoments::new();
    // E[s²] of a Gamma(k, 1) amplitude is k(k + 1).
    let speech_power = GAMMA_SHAPE * (GAMMA_SHAPE + 1.0);
    let points = ((SNR_MAX_DB - SNR_MIN_DB) / SNR_STEP_DB).round() as usize + 1;
    let snr_db: Vec<f64> = (0..points)
        .map(|i| SNR_MIN_DB + i as f64 * SNR_STEP_DB)
        .collect();
    let raw: Vec<f64> = snr_db
        .iter()
        .map(|&d| {
            let sigma = (speech_power / 10f64.powf(d / 10.0)).sqrt();
            let (mut abs, mut log) = (0.0, 0.0);
            for &s in &speech {
                let (m, l) = moments.eval(s / sigma);
                abs += m;
                log += l;
            }
            // σ cancels: ln(σ·mean m) − (ln σ + mean l).
            let n = speech.len() as f64;
            (abs / n).ln() - log / n
        })
        .collect();
    let g = smooth(&raw);
    for (i, w) in g.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(WadaError::NonMonotoneTable(snr_db[i + 1]));
        }
    }
    Ok(WadaTable {
        seed,
        samples_per_point,
        snr_db,
        g,
    })
}

/// `E|μ + n|` and `E ln|μ + n|` for `n ~ N(0, 1)`, tabulated with derivatives on
/// `[0, MU_MAX]` and read back by cubic Hermite interpolation. Beyond the table
/// the first is `μ` and the second its asymptotic series.
pub struct NoiseMoments {
    /// `(m, m', l, l')` per node.
    nodes: Vec<[f64; 4]>,
}

const MU_MAX: f64 = 20.0;
const MU_STEP: f64 = 1.0 / 256.0;

impl NoiseMoments {
    pub fn new() -> Self {
        let count = (MU_MAX / MU_STEP) as usize + 1;
        Self {
            nodes: (0..count)
                .map(|i| Self::quadrature(i as f64 * MU_STEP))
                .collect(),
        }
    }

    /// Trapezoid rule in `u = ln x` over the folded density on `x > 0`; the integrand
    /// is analytic and decays doubly exponentially, so the rule converges geometrically.
    fn quadrature(mu: f64) -> [f64; 4] {
        const DU: f64 = 1.0 / 32.0;
        let norm = 1.0 / (2.0 * core::f64::consts::PI).sqrt();
        let (lo, hi) = (-40.0, (mu + 12.0).ln());
        let steps = ((hi - lo) / DU).ceil() as usize;
        let mut acc = [0.0; 4];
        for k in 0..=steps {
            let u = lo + k as f64 * DU;
            let x = u.exp();
            let (a, b) = (x - mu, x + mu);
            let (pa, pb) = (norm * (-0.5 * a * a).exp(), norm * (-0.5 * b * b).exp());
            let g = pa + pb;
            let dg = a * pa - b * pb;
            let w = if k == 0 || k == steps { 0.5 * DU } else { DU } * x;
            acc[0] += w * x * g;
            acc[1] += w * x * dg;
            acc[2] += w * u * g;
            acc[3] += w * u * dg;
        }
        acc
    }

    /// `(E|μ + n|, E ln|μ + n|)`.
    pub fn eval(&self, mu: f64) -> (f64, f64) {
        let mu = mu.abs();
        if mu >= MU_MAX {
            let r = 1.0 / (mu * mu);
            // −Σ (2k−1)!!/(2k)·μ^(−2k)
            let tail = r * (0.5 + r * (0.75 + r * (2.5 + r * (13.125 + r * (94.5 + r * 866.25)))));
            return (mu, mu.ln() - tail);
        }
        let pos = mu / MU_STEP;
        let i = (pos as usize).min(self.nodes.len() - 2);
        let t = pos - i as f64;
        let (p, q) = (&self.nodes[i], &self.nodes[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let herm = |v0: f64, d0: f64, v1: f64, d1: f64| {
            h00 * v0 + h10 * MU_STEP * d0 + h01 * v1 + h11 * MU_STEP * d1
        };
        (herm(p[0], p[1], q[0], q[1]), herm(p[2], p[3], q[2], q[3]))
    }
}

impl Default for NoiseMoments {
    fn default() -> Self {
        Self::new()
    }
}

fn smooth(v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            if i == 0 || i + 1 == v.len() {
                v[i]
            } else {
                (v[i - 1] + v[i] + v[i + 1]) / 3.0
            }
        })
        .collect()
}

impl WadaTable {
    /// Linear interpolation of SNR at `g`, clamped to the grid.
    pub fn snr_for(&self, g: f64) -> f64 {
        let n = self.g.len();
        if g <= self.g[0] {
            return self.snr_db[0];
        }
        if g >= self.g[n - 1] {
            return self.snr_db[n - 1];
        }
        let hi = self.g.partition_point(|&v| v < g);
        let lo = hi - 1;
        let t = (g - self.g[lo]) / (self.g[hi] - self.g[lo]);
        self.snr_db[lo] + t * (self.snr_db[hi] - self.snr_db[lo])
    }

    pub fn is_strictly_monotone(&self) -> bool {
        self.g.windows(2).all(|w| w[1] > w[0])
    }
}

/// Whole-signal WADA-SNR estimate in dB.
pub fn wada_snr(s: &Signal, table: &WadaTable) -> Result<f64, WadaError> {
    let g = g_statistic(s.samples().iter().map(|&v| v as f64)).ok_or(WadaError::SilentSignal)?;
    Ok(table.snr_for(g))
}

/// Gamma(0.4)-amplitude surrogate speech with random signs.
pub fn gamma_speech(n: usize, seed: u64, sample_rate: u32) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(GAMMA_SHAPE, 1.0).expect("valid gamma parameters");
    let v: Vec<f64> = (0..n)
        .map(|_| {
            let a: f64 = gamma.sample(&mut rng);
            if rng.random::<bool>() {
                a
            } else {
                -a
            }
        })
        .collect();
    Signal::from_f64(&v, sample_rate).expect("finite samples")
}
