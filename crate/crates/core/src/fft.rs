//! Complex FFT and FFT-based linear convolution.
//!
//! Power-of-two lengths use an iterative radix-2 transform; any other length
//! falls back to a direct O(n²) DFT, which is only hit for unusual STFT sizes.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    if !n.is_power_of_two() {
        let out = dft(buf, inverse);
        buf.copy_from_slice(&out);
        return;
    }

    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let twiddles: Vec<Complex64> = (0..n / 2)
        .map(|k| {
            let a = sign * 2.0 * PI * k as f64 / n as f64;
            Complex64::new(libm::cos(a), libm::sin(a))
        })
        .collect();

    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * step];
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }

    if inverse {
        let scale = 1.0 / n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

/// Direct DFT, any length. The inverse is normalized by `1/n`.
pub fn dft(input: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = input.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (t, x) in input.iter().enumerate() {
            // reduce k*t mod n first to keep the angle small
            let a = sign * 2.0 * PI * ((k * t) % n) as f64 / n as f64;
            acc += x * Complex64::new(libm::cos(a), libm::sin(a));
        }
        *o = if inverse { acc / n as f64 } else { acc };
    }
    out
}

/// Full linear convolution, length `a.len() + b.len() - 1`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let mut fa: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fa.resize(n, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fb.resize(n, Complex64::new(0.0, 0.0));
    fft_in_place(&mut fa, false);
    fft_in_place(&mut fb, false);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    fft_in_place(&mut fa, true);
    fa.truncate(out_len);
    fa.into_iter().map(|c| c.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    }

    #[test]
    fn radix2_matches_direct_dft() {
        let mut s = 3;
        for n in [2usize, 8, 64, 256] {
            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(lcg(&mut s), lcg(&mut s)))
                .collect();
            let want = dft(&x, false);
            let mut got = x.clone();
            fft_in_place(&mut got, false);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).norm() < 1e-9 * n as f64);
            }
            fft_in_place(&mut got, true);
            for (g, w) in got.iter().zip(&x) {
                assert!((g - w).norm() < 1e-12 * n as f64);
            }
        }
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let mut s = 11;
        let a: Vec<f64> = (0..300).map(|_| lcg(&mut s)).collect();
        let b: Vec<f64> = (0..77).map(|_| lcg(&mut s)).collect();
        let got = convolve(&a, &b);
        assert_eq!(got.len(), 376);
        for (k, g) in got.iter().enumerate() {
            let mut want = 0.0;
            for (i, x) in a.iter().enumerate() {
                if k >= i && k - i < b.len() {
                    want += x * b[k - i];
                }
            }
            assert!((g - want).abs() < 1e-10, "k={k}");
        }
    }
}
