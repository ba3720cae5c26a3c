//! Trigonometric interpolation of periodic samples on a uniform phase grid.
//!
//! A real series stores `c_0..c_K` with `f(theta) = Re sum_k c_k e^{ik theta}`; a complex
//! series stores `c_{-K}..c_K` with `f(theta) = sum_k c_k e^{ik theta}`. When `K = n/2` the
//! Nyquist term is a cosine so that the interpolant is real for real data and its
//! derivative vanishes there at the nodes.

use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;

use crate::linalg::cis;
use crate::C64;

/// Grid phases `2 pi k / n`.
pub fn theta_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
}

/// Forward transform `F_k = sum_j x_j e^{-2 pi i jk/n}` (radix-2 when `n` is a power of two).
pub fn dft(x: &[C64]) -> Vec<C64> {
    let n = x.len();
    if n.is_power_of_two() && n > 1 {
        let mut a = x.to_vec();
        fft_in_place(&mut a);
        a
    } else {
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, xj)| xj * cis(-2.0 * PI * ((j * k) % n) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }
}

fn fft_in_place(a: &mut [C64]) {
    let n = a.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            a.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = cis(-2.0 * PI * k as f64 / len as f64);
                let u = a[start + k];
                let v = a[start + k + half] * w;
                a[start + k] = u + v;
                a[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

/// Powers `e^{ik theta}` for `k = 0..=kmax`.
fn powers(theta: f64, kmax: usize, out: &mut Vec<C64>) {
    out.clear();
    let step = cis(theta);
    let mut z = C64::new(1.0, 0.0);
    for k in 0..=kmax {
        // periodic reseeding bounds the recurrence drift
        if k > 0 && k % 16 == 0 {
            z = cis(k as f64 * theta);
        }
        out.push(z);
        z *= step;
    }
}

/// Real vector-valued periodic function.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSeries {
    pub dim: usize,
    pub harmonics: usize,
    /// `dim x (harmonics + 1)` coefficients, component-major.
    pub coeffs: Vec<C64>,
}

impl RealSeries {
    /// Interpolant of `n x dim` row-major samples on `theta_grid(n)`.
    pub fn from_samples(samples: &[f64], n: usize, dim: usize) -> Self {
        let harmonics = n / 2;
        let mut coeffs = vec![C64::new(0.0, 0.0); dim * (harmonics + 1)];
        let mut col = vec![C64::new(0.0, 0.0); n];
        for d in 0..dim {
            for (k, c) in col.iter_mut().enumerate() {
                *c = C64::new(samples[k * dim + d], 0.0);
            }
            let f = dft(&col);
            for k in 0..=harmonics {
                let weight = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
                coeffs[d * (harmonics + 1) + k] = f[k] * (weight / n as f64);
            }
            if n % 2 == 0 && harmonics > 0 {
                let c = &mut coeffs[d * (harmonics + 1) + harmonics];
                c.im = 0.0;
            }
        }
        Self {
            dim,
            harmonics,
            coeffs,
        }
    }

    pub fn eval(&self, theta: f64, out: &mut [f64]) {
        let mut p = Vec::with_capacity(self.harmonics + 1);
        powers(theta, self.harmonics, &mut p);
        eval_real(&self.coeffs, self.dim, self.harmonics, &p, false, out);
    }

    /// Derivative with respect to theta.
    pub fn eval_derivative(&self, theta: f64, out: &mut [f64]) {
        let mut p = Vec::with_capacity(self.harmonics + 1);
        powers(theta, self.harmonics, &mut p);
        eval_real(&self.coeffs, self.dim, self.harmonics, &p, true, out);
    }

    /// Samples on an `n`-point grid.
    pub fn sample(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * self.dim];
        for (k, th) in theta_grid(n).into_iter().enumerate() {
            self.eval(th, &mut out[k * self.dim..(k + 1) * self.dim]);
        }
        out
    }

    pub fn sample_derivative(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * self.dim];
        for (k, th) in theta_grid(n).into_iter().enumerate() {
            self.eval_derivative(th, &mut out[k * self.dim..(k + 1) * self.dim]);
        }
        out
    }
}

pub(crate) fn eval_real(
    coeffs: &[C64],
    dim: usize,
    harmonics: usize,
    p: &[C64],
    derivative: bool,
    out: &mut [f64],
) {
    let stride = harmonics + 1;
    for d in 0..dim {
        let c = &coeffs[d * stride..(d + 1) * stride];
        let mut acc = 0.0;
        if derivative {
            for k in 1..=harmonics {
                // d/dtheta Re(c e^{ik theta}) = Re(ik c e^{ik theta})
                let z = c[k] * p[k];
                acc -= k as f64 * z.im;
            }
        } else {
            for k in 0..=harmonics {
                acc += c[k].re * p[k].re - c[k].im * p[k].im;
            }
        }
        out[d] = acc;
    }
}

/// Complex vector-valued periodic function.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSeries {
    pub dim: usize,
    pub harmonics: usize,
    /// `dim x (2 harmonics + 1)` coefficients for `k = -K..=K`, component-major.
    pub coeffs: Vec<C64>,
}

impl ComplexSeries {
    pub fn from_samples(samples: &[C64], n: usize, dim: usize) -> Self {
        let harmonics = n / 2;
        let width = 2 * harmonics + 1;
        let mut coeffs = vec![C64::new(0.0, 0.0); dim * width];
        let mut col = vec![C64::new(0.0, 0.0); n];
        for d in 0..dim {
            for (k, c) in col.iter_mut().enumerate() {
                *c = samples[k * dim + d];
            }
            let f = dft(&col);
            let scale = 1.0 / n as f64;
            let row = &mut coeffs[d * width..(d + 1) * width];
            for k in 0..n {
                let kk = if k <= n / 2 { k as isize } else { k as isize - n as isize };
                if n % 2 == 0 && k == n / 2 {
                    // split the Nyquist term evenly between +K and -K
                    row[(harmonics as isize + kk) as usize] = f[k] * (0.5 * scale);
                    row[0] = f[k] * (0.5 * scale);
                } else {
                    row[(harmonics as isize + kk) as usize] = f[k] * scale;
                }
            }
        }
        Self {
            dim,
            harmonics,
            coeffs,
        }
    }

    pub fn eval(&self, theta: f64, out: &mut [C64]) {
        let mut p = Vec::with_capacity(self.harmonics + 1);
        powers(theta, self.harmonics, &mut p);
        eval_complex(&self.coeffs, self.dim, self.harmonics, &p, false, out);
    }

    pub fn eval_derivative(&self, theta: f64, out: &mut [C64]) {
        let mut p = Vec::with_capacity(self.harmonics + 1);
        powers(theta, self.harmonics, &mut p);
        eval_complex(&self.coeffs, self.dim, self.harmonics, &p, true, out);
    }

    pub fn sample(&self, n: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); n * self.dim];
        for (k, th) in theta_grid(n).into_iter().enumerate() {
            self.eval(th, &mut out[k * self.dim..(k + 1) * self.dim]);
        }
        out
    }

    pub fn sample_derivative(&self, n: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); n * self.dim];
        for (k, th) in theta_grid(n).into_iter().enumerate() {
            self.eval_derivative(th, &mut out[k * self.dim..(k + 1) * self.dim]);
        }
        out
    }
}

pub(crate) fn eval_complex(
    coeffs: &[C64],
    dim: usize,
    harmonics: usize,
    p: &[C64],
    derivative: bool,
    out: &mut [C64],
) {
    let width = 2 * harmonics + 1;
    for d in 0..dim {
        let c = &coeffs[d * width..(d + 1) * width];
        let mut acc = c[harmonics] * if derivative { 0.0 } else { 1.0 };
        for k in 1..=harmonics {
            let pos = c[harmonics + k] * p[k];
            let neg = c[harmonics - k] * p[k].conj();
            if derivative {
                acc += (pos - neg) * C64::new(0.0, k as f64);
            } else {
                acc += pos + neg;
            }
        }
        out[d] = acc;
    }
}

/// Evaluator reusing a buffer of powers for repeated evaluation at one phase.
#[derive(Debug, Clone, Default)]
pub struct PhaseBasis {
    powers: Vec<C64>,
}

impl PhaseBasis {
    pub fn set(&mut self, theta: f64, harmonics: usize) {
        powers(theta, harmonics, &mut self.powers);
    }

    pub fn real(&self, coeffs: &[C64], dim: usize, harmonics: usize, out: &mut [f64]) {
        eval_real(coeffs, dim, harmonics, &self.powers, false, out);
    }

    pub fn real_derivative(&self, coeffs: &[C64], dim: usize, harmonics: usize, out: &mut [f64]) {
        eval_real(coeffs, dim, harmonics, &self.powers, true, out);
    }

    pub fn complex(&self, coeffs: &[C64], dim: usize, harmonics: usize, out: &mut [C64]) {
        eval_complex(coeffs, dim, harmonics, &self.powers, false, out);
    }
}
