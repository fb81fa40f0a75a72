//! Minimal iterative radix-2 FFT, sized for ramp filtering of detector rows.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    #[inline]
    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    #[inline]
    pub fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }

    #[inline]
    pub fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }

    #[inline]
    pub fn mul(self, o: Complex) -> Complex {
        Complex::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }

    #[inline]
    pub fn conj(self) -> Complex {
        Complex::new(self.re, -self.im)
    }

    #[inline]
    pub fn scale(self, s: f64) -> Complex {
        Complex::new(self.re * s, self.im * s)
    }
}

/// Precomputed twiddle factors for one transform length.
pub struct Fft {
    n: usize,
    /// exp(-2 pi i k / n) for k in 0..n/2.
    twiddles: Vec<Complex>,
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::invalid(format!("fft length {n} must be a power of two")));
        }
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex::new(a.cos(), a.sin())
            })
            .collect();
        Ok(Fft { n, twiddles })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// In-place forward transform.
    pub fn forward(&self, buf: &mut [Complex]) {
        assert_eq!(buf.len(), self.n, "buffer length must match plan");
        self.bit_reverse(buf);
        let mut len = 2;
        while len <= self.n {
            let half = len / 2;
            let step = self.n / len;
            let mut start = 0;
            while start < self.n {
                for j in 0..half {
                    let w = self.twiddles[j * step];
                    let a = buf[start + j];
                    let b = buf[start + j + half].mul(w);
                    buf[start + j] = a.add(b);
                    buf[start + j + half] = a.sub(b);
                }
                start += len;
            }
            len *= 2;
        }
    }

    /// In-place inverse transform, scaled by 1/n.
    pub fn inverse(&self, buf: &mut [Complex]) {
        for v in buf.iter_mut() {
            *v = v.conj();
        }
        self.forward(buf);
        let s = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v = v.conj().scale(s);
        }
    }

    fn bit_reverse(&self, buf: &mut [Complex]) {
        let bits = self.n.trailing_zeros();
        for i in 0..self.n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                buf.swap(i, j);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::Rng;

    fn naive_dft(x: &[Complex]) -> Vec<Complex> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let mut acc = Complex::ZERO;
                for (j, &v) in x.iter().enumerate() {
                    let a = -2.0 * PI * (k * j) as f64 / n as f64;
                    acc = acc.add(v.mul(Complex::new(a.cos(), a.sin())));
                }
                acc
            })
            .collect()
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(Fft::new(0).is_err());
        assert!(Fft::new(12).is_err());
        assert!(Fft::new(16).is_ok());
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = Rng::new(2);
        for n in [2usize, 4, 8, 32] {
            let x: Vec<Complex> = (0..n)
                .map(|_| Complex::new(rng.next_f64() - 0.5, rng.next_f64() - 0.5))
                .collect();
            let mut buf = x.clone();
            Fft::new(n).unwrap().forward(&mut buf);
            let want = naive_dft(&x);
            for (a, b) in buf.iter().zip(&want) {
                assert!((a.re - b.re).abs() < 1e-12);
                assert!((a.im - b.im).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_inverse_is_identity() {
        let mut rng = Rng::new(9);
        let mut n = 2;
        while n <= 4096 {
            let x: Vec<Complex> = (0..n)
                .map(|_| Complex::new(rng.next_f64() * 2.0 - 1.0, rng.next_f64() * 2.0 - 1.0))
                .collect();
            let plan = Fft::new(n).unwrap();
            let mut buf = x.clone();
            plan.forward(&mut buf);
            plan.inverse(&mut buf);
            for (a, b) in buf.iter().zip(&x) {
                assert!((a.re - b.re).abs() < 1e-10);
                assert!((a.im - b.im).abs() < 1e-10);
            }
            n *= 2;
        }
    }
}
