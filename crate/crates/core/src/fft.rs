//! Iterative radix-2 FFT over `f64`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn from_polar(r: f64, theta: f64) -> Self {
        Self::new(r * theta.cos(), r * theta.sin())
    }

    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.re * k, self.im * k)
    }
}

impl Add for Complex {
    type Output = Complex;
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Complex {
    type Output = Complex;
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    fn mul(self, o: Complex) -> Complex {
        Complex::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

/// Precomputed twiddles and bit-reversal table for one power-of-two size.
#[derive(Clone, Debug)]
pub struct Fft {
    n: usize,
    twiddles: Vec<Complex>,
    bitrev: Vec<u32>,
}

impl Fft {
    /// Panics if `n` is not a power of two.
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "FFT size {n} is not a power of two");
        let twiddles = (0..n / 2)
            .map(|k| Complex::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n as u32)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (32 - bits)
                }
            })
            .collect();
        Self {
            n,
            twiddles,
            bitrev,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, data: &mut [Complex]) {
        self.transform(data, false);
    }

    /// Unnormalized inverse; divide by `len()` to undo [`Fft::forward`].
    pub fn inverse(&self, data: &mut [Complex]) {
        self.transform(data, true);
    }

    fn transform(&self, data: &mut [Complex], inverse: bool) {
        assert_eq!(data.len(), self.n);
        for i in 0..self.n {
            let j = self.bitrev[i] as usize;
            if j > i {
                data.swap(i, j);
            }
        }
        let mut half = 1;
        while half < self.n {
            let step = self.n / (2 * half);
            for start in (0..self.n).step_by(2 * half) {
                for k in 0..half {
                    let mut w = self.twiddles[k * step];
                    if inverse {
                        w = w.conj();
                    }
                    let a = data[start + k];
                    let b = data[start + k + half] * w;
                    data[start + k] = a + b;
                    data[start + k + half] = a - b;
                }
            }
            half *= 2;
        }
    }

    /// Spectrum of a real sequence zero-padded to `len()`, bins `0..=len()/2`.
    pub fn real_spectrum(&self, input: &[f64]) -> Vec<Complex> {
        assert!(input.len() <= self.n);
        let mut buf = vec![Complex::ZERO; self.n];
        for (b, &x) in buf.iter_mut().zip(input) {
            b.re = x;
        }
        self.forward(&mut buf);
        buf.truncate(self.n / 2 + 1);
        buf
    }
}

/// Linear convolution of two real sequences through one zero-padded FFT pair.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let fft = Fft::new(n);
    // Pack both real inputs into one complex buffer: z = x + i h.
    let mut z = vec![Complex::ZERO; n];
    for (zi, &xi) in z.iter_mut().zip(x) {
        zi.re = xi;
    }
    for (zi, &hi) in z.iter_mut().zip(h) {
        zi.im = hi;
    }
    fft.forward(&mut z);
    let mut prod = vec![Complex::ZERO; n];
    for k in 0..n {
        let zk = z[k];
        let zn = z[(n - k) % n].conj();
        let xk = (zk + zn).scale(0.5);
        let hk = (zk - zn) * Complex::new(0.0, -0.5);
        prod[k] = xk * hk;
    }
    fft.inverse(&mut prod);
    let inv_n = 1.0 / n as f64;
    prod.iter().take(out_len).map(|c| c.re * inv_n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[Complex]) -> Vec<Complex> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold(Complex::ZERO, |acc, (t, &v)| {
                    acc + v * Complex::from_polar(1.0, -2.0 * PI * (k * t) as f64 / n as f64)
                })
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let x: Vec<Complex> = (0..64)
            .map(|i| Complex::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let mut y = x.clone();
        Fft::new(64).forward(&mut y);
        for (a, b) in y.iter().zip(naive_dft(&x)) {
            assert!((*a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let x: Vec<Complex> = (0..256)
            .map(|i| Complex::new(i as f64, -(i as f64)))
            .collect();
        let fft = Fft::new(256);
        let mut y = x.clone();
        fft.forward(&mut y);
        fft.inverse(&mut y);
        for (a, b) in y.iter().zip(&x) {
            assert!((a.scale(1.0 / 256.0) - *b).abs() < 1e-9);
        }
    }

    #[test]
    fn size_one_is_identity() {
        let mut x = [Complex::new(3.0, 4.0)];
        Fft::new(1).forward(&mut x);
        assert_eq!(x[0], Complex::new(3.0, 4.0));
    }

    #[test]
    fn packed_convolution() {
        let y = fft_convolve(&[1.0, 1.0], &[1.0, 1.0]);
        assert_eq!(y.len(), 3);
        for (a, b) in y.iter().zip([1.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
