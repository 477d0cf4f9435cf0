//! Butterworth octave filters as second-order sections.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::fft::Complex;

/// `b0 + b1 z⁻¹ + b2 z⁻²` over `1 + a1 z⁻¹ + a2 z⁻²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex) -> Complex {
        let z2 = z_inv * z_inv;
        let num = Complex::new(self.b[0], 0.0) + z_inv.scale(self.b[1]) + z2.scale(self.b[2]);
        let den = Complex::new(1.0, 0.0) + z_inv.scale(self.a[0]) + z2.scale(self.a[1]);
        div(num, den)
    }
}

/// Cascade of biquads.
#[derive(Clone, Debug, PartialEq)]
pub struct Sos(pub Vec<Biquad>);

impl Sos {
    /// Complex response at `freq` Hz.
    pub fn response(&self, freq: f64, sample_rate: f64) -> Complex {
        let z_inv = Complex::from_polar(1.0, -2.0 * PI * freq / sample_rate);
        self.0
            .iter()
            .fold(Complex::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    /// Causal filtering, transposed direct form II, zero initial state.
    pub fn filter(&self, x: &mut [f64]) {
        for s in &self.0 {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b[0] * input + z1;
                z1 = s.b[1] * input - s.a[0] * y + z2;
                z2 = s.b[2] * input - s.a[1] * y;
                *v = y;
            }
        }
    }

    /// Zero-phase forward-backward filtering.
    pub fn filtfilt(&self, x: &mut [f64]) {
        self.filter(x);
        x.reverse();
        self.filter(x);
        x.reverse();
    }
}

fn div(a: Complex, b: Complex) -> Complex {
    let d = b.norm_sqr();
    Complex::new(
        (a.re * b.re + a.im * b.im) / d,
        (a.im * b.re - a.re * b.im) / d,
    )
}

fn csqrt(z: Complex) -> Complex {
    let r = z.abs();
    let re = ((r + z.re) / 2.0).max(0.0).sqrt();
    let im = ((r - z.re) / 2.0).max(0.0).sqrt();
    Complex::new(re, if z.im < 0.0 { -im } else { im })
}

/// Left-half-plane poles of the order-`n` analog Butterworth low-pass with unit cutoff.
fn prototype_poles(n: usize) -> Vec<Complex> {
    (0..n)
        .map(|k| Complex::from_polar(1.0, PI * (2 * k + n + 1) as f64 / (2 * n) as f64))
        .collect()
}

fn bilinear(s: Complex, fs2: f64) -> Complex {
    div(
        Complex::new(fs2 + s.re, s.im),
        Complex::new(fs2 - s.re, -s.im),
    )
}

fn prewarp(freq: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * freq / fs).tan()
}

/// Pairs digital poles into denominators. Poles must come in conjugate pairs.
fn pole_pairs(poles: &[Complex]) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    let mut reals = Vec::new();
    for p in poles {
        if p.im > 1e-12 {
            out.push([-2.0 * p.re, p.norm_sqr()]);
        } else if p.im.abs() <= 1e-12 {
            reals.push(p.re);
        }
    }
    for pair in reals.chunks(2) {
        match *pair {
            [a, b] => out.push([-(a + b), a * b]),
            [a] => out.push([-a, 0.0]),
            _ => unreachable!(),
        }
    }
    out
}

fn normalize(mut sos: Sos, freq: f64, fs: f64) -> Sos {
    let g = sos.response(freq, fs).abs();
    for c in sos.0[0].b.iter_mut() {
        *c /= g;
    }
    sos
}

/// Band-pass with `order` prototype poles (transfer order `2·order`), unit gain at the
/// geometric centre and −3 dB at both edges.
pub fn butter_bandpass(order: usize, low: f64, high: f64, fs: f64) -> Sos {
    let wl = prewarp(low, fs);
    let wh = prewarp(high, fs);
    let w0 = (wl * wh).sqrt();
    let bw = wh - wl;
    let mut poles = Vec::with_capacity(2 * order);
    for p in prototype_poles(order) {
        let pb = p.scale(bw);
        let disc = csqrt(pb * pb - Complex::new(4.0 * w0 * w0, 0.0));
        poles.push((pb + disc).scale(0.5));
        poles.push((pb - disc).scale(0.5));
    }
    let digital: Vec<Complex> = poles.iter().map(|&s| bilinear(s, 2.0 * fs)).collect();
    // Each section gets one zero at z = 1 and one at z = -1.
    let sections = pole_pairs(&digital)
        .into_iter()
        .map(|a| Biquad {
            b: [1.0, 0.0, -1.0],
            a,
        })
        .collect();
    let centre = 2.0 * fs * (w0 / (2.0 * fs)).atan() / (2.0 * PI);
    normalize(Sos(sections), centre, fs)
}

/// High-pass of transfer order `order` (even), −3 dB at `cutoff`, unit gain at Nyquist.
pub fn butter_highpass(order: usize, cutoff: f64, fs: f64) -> Sos {
    let wc = prewarp(cutoff, fs);
    let digital: Vec<Complex> = prototype_poles(order)
        .into_iter()
        .map(|p| bilinear(div(Complex::new(wc, 0.0), p), 2.0 * fs))
        .collect();
    let sections = pole_pairs(&digital)
        .into_iter()
        .map(|a| Biquad {
            b: [1.0, -2.0, 1.0],
            a,
        })
        .collect();
    normalize(Sos(sections), fs / 2.0, fs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn bandpass_edges_are_half_power() {
        let fs = 16_000.0;
        for fc in [125.0, 500.0, 2000.0, 4000.0] {
            let (lo, hi) = (fc * FRAC_1_SQRT_2, fc * core::f64::consts::SQRT_2);
            let sos = butter_bandpass(2, lo, hi, fs);
            assert_eq!(sos.0.len(), 2);
            for edge in [lo, hi] {
                let g = sos.response(edge, fs).abs();
                assert!((g - FRAC_1_SQRT_2).abs() < 1e-9, "fc {fc} edge {edge}: {g}");
            }
            // Roll-off: two octaves out the 4th-order band-pass is well below -20 dB.
            assert!(sos.response(fc / 4.0, fs).abs() < 0.1);
        }
    }

    #[test]
    fn highpass_edge_and_passband() {
        let fs = 16_000.0;
        let sos = butter_highpass(4, 5656.854, fs);
        assert!((sos.response(5656.854, fs).abs() - FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((sos.response(8000.0, fs).abs() - 1.0).abs() < 1e-12);
        assert!(sos.response(2000.0, fs).abs() < 0.01);
    }

    #[test]
    fn filtfilt_is_zero_phase() {
        let sos = butter_bandpass(2, 707.0, 1414.0, 16_000.0);
        let mut x = alloc::vec![0.0; 4001];
        x[2000] = 1.0;
        sos.filtfilt(&mut x);
        for k in 1..1500 {
            assert!((x[2000 - k] - x[2000 + k]).abs() < 1e-9);
        }
    }
}
