//! Fixed points, ordered spectra with the anchor phase convention, and first-order
//! eigenpair perturbation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dynsys::{eval_jac_state, eval_rhs, norm, DynamicalSystem};
use crate::error::{Error, Result};
use crate::linalg::{self, argmax_abs, to_complex};
use crate::C64;

/// Relative pairwise gap below which eigenvalues count as repeated.
pub const SIMPLICITY_TOL: f64 = 1e-8;

const MAX_NEWTON: usize = 100;

/// Damped Newton iteration for `F(x, 0) = 0`; the root must be linearly stable.
pub fn find_fixed_point(system: &dyn DynamicalSystem, guess: &[f64], tol: f64) -> Result<Vec<f64>> {
    let u0 = vec![0.0; system.dim_input()];
    let mut x = guess.to_vec();
    let mut f = eval_rhs(system, &x, &u0)?;
    let mut res = norm(&f);
    let mut history = vec![res];
    let mut iter = 0;
    while res > tol {
        if iter == MAX_NEWTON || !res.is_finite() {
            return Err(Error::NoConvergence {
                iterations: iter,
                residual: res,
                history,
            });
        }
        let jac = eval_jac_state(system, &x, &u0)?;
        let step = jac
            .lu()
            .solve(&DVector::from_column_slice(&f))
            .ok_or(Error::LinearAlgebra("singular Jacobian in fixed-point Newton"))?;
        let mut damping = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a - damping * d).collect();
            let ft = eval_rhs(system, &trial, &u0)?;
            let rt = norm(&ft);
            if rt < res || damping < 1e-4 {
                x = trial;
                f = ft;
                res = rt;
                break;
            }
            damping *= 0.5;
        }
        history.push(res);
        iter += 1;
    }
    let jac = eval_jac_state(system, &x, &u0)?;
    let max_real = linalg::eigenvalues(&jac)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_real >= 0.0 {
        return Err(Error::Unstable { max_real });
    }
    Ok(x)
}

/// Ordered eigen-decomposition of a real matrix.
///
/// Eigenvalues are sorted by descending real part; equal real parts (within the simplicity
/// tolerance) are ordered by ascending imaginary part. `left[k]` uses the conjugate
/// convention `w^H A = lambda w^H` with `w^H v = 1`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub matrix: DMatrix<f64>,
    pub values: Vec<C64>,
    pub right: Vec<DVector<C64>>,
    pub left: Vec<DVector<C64>>,
}

impl Spectrum {
    pub fn of(matrix: &DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension {
                what: "square matrix",
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let e = linalg::eig(matrix)?;
        let tol = SIMPLICITY_TOL * linalg::scale(matrix);
        let gap = linalg::min_gap(&e.values);
        if gap < tol {
            return Err(Error::RepeatedEigenvalue { gap });
        }
        let order = linalg::spectral_order(&e.values, tol);
        Ok(Self {
            matrix: matrix.clone(),
            values: order.iter().map(|&k| e.values[k]).collect(),
            right: order.iter().map(|&k| e.right[k].clone()).collect(),
            left: order.iter().map(|&k| e.left[k].map(|z| z.conj())).collect(),
        })
    }

    /// Spectrum of the Jacobian of `system` at `x_ss` with zero input.
    pub fn at_fixed_point(system: &dyn DynamicalSystem, x_ss: &[f64]) -> Result<Self> {
        let jac = eval_jac_state(system, x_ss, &vec![0.0; system.dim_input()])?;
        Self::of(&jac)
    }

    /// Spectrum indices of the eigenvalues with positive imaginary part, in spectrum order.
    pub fn oscillatory_indices(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&k| self.values[k].im > 0.0).collect()
    }
}

/// Normalized complex eigenpair: `|v| = 1`, `arg(v[anchor]) = -pi`, `w^H v = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMode {
    pub lambda: C64,
    pub v: DVector<C64>,
    pub w: DVector<C64>,
    pub anchor_index: usize,
}

impl SpectralMode {
    /// Left vector in the bilinear convention (`w_b^T v = 1`).
    pub fn w_bilinear(&self) -> DVector<C64> {
        self.w.map(|z| z.conj())
    }
}

/// Rotates `v` so that `v[anchor]` is real and negative; returns the applied factor.
pub fn anchor_phase(v: &mut DVector<C64>, anchor: usize) -> Result<C64> {
    let a = v[anchor];
    if a.norm() == 0.0 {
        return Err(Error::InvalidMode(format!("anchor component {anchor} vanishes")));
    }
    let factor = -a.conj() / C64::new(a.norm(), 0.0);
    *v *= factor;
    v[anchor] = C64::new(v[anchor].re, -0.0);
    Ok(factor)
}

/// Selects `spectrum.values[mode_index]` and applies the normalization convention.
///
/// `anchor_index` defaults to the component of largest modulus.
pub fn oscillatory_mode(
    spectrum: &Spectrum,
    mode_index: usize,
    anchor_index: Option<usize>,
) -> Result<SpectralMode> {
    let lambda = *spectrum
        .values
        .get(mode_index)
        .ok_or_else(|| Error::InvalidMode(format!("mode index {mode_index} out of range")))?;
    if lambda.im <= 0.0 {
        return Err(Error::InvalidMode(format!(
            "eigenvalue {lambda} does not have a positive imaginary part"
        )));
    }
    let tol = SIMPLICITY_TOL * linalg::scale(&spectrum.matrix);
    for (k, mu) in spectrum.values.iter().enumerate() {
        if k != mode_index && (mu - lambda).norm() < tol {
            return Err(Error::RepeatedEigenvalue {
                gap: (mu - lambda).norm(),
            });
        }
    }
    let mut v = spectrum.right[mode_index].clone();
    let anchor = anchor_index.unwrap_or_else(|| argmax_abs(&v));
    if anchor >= v.len() {
        return Err(Error::InvalidMode(format!("anchor index {anchor} out of range")));
    }
    let nrm = v.norm();
    v /= C64::new(nrm, 0.0);
    let factor = anchor_phase(&mut v, anchor)?;
    // w^H v = 1 is preserved when w is divided by conj(factor)
    let w = &spectrum.left[mode_index] / factor.conj();
    let pairing = w.dotc(&v);
    let w = w / pairing.conj();
    Ok(SpectralMode {
        lambda,
        v,
        w,
        anchor_index: anchor,
    })
}

/// Oscillatory mode number `k` (1-based) counted over eigenvalues with positive imaginary
/// part in spectrum order.
pub fn oscillatory_mode_number(
    spectrum: &Spectrum,
    k: usize,
    anchor_index: Option<usize>,
) -> Result<SpectralMode> {
    let idx = spectrum.oscillatory_indices();
    let index = *k
        .checked_sub(1)
        .and_then(|i| idx.get(i))
        .ok_or_else(|| Error::InvalidMode(format!("no oscillatory mode number {k}")))?;
    oscillatory_mode(spectrum, index, anchor_index)
}

/// A simple eigenpair `(lambda, v, w)` with `w^H v = 1`.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub lambda: C64,
    pub v: DVector<C64>,
    pub w: DVector<C64>,
    pub anchor_index: usize,
}

impl From<&SpectralMode> for Eigenpair {
    fn from(m: &SpectralMode) -> Self {
        Self {
            lambda: m.lambda,
            v: m.v.clone(),
            w: m.w.clone(),
            anchor_index: m.anchor_index,
        }
    }
}

/// First-order change of a simple eigenpair under `A -> A + dA`.
///
/// `dlambda = w^H dA v`. `dv` is the minimum-norm solution of
/// `(A - lambda) dv = (dlambda - dA) v` plus a multiple of `v` that keeps `|v + dv| = 1` and
/// the anchor phase to first order.
pub fn perturb_eigenpair(
    a: &DMatrix<f64>,
    da: &DMatrix<f64>,
    pair: &Eigenpair,
) -> Result<(C64, DVector<C64>)> {
    let n = a.nrows();
    let values = linalg::eigenvalues(a)?;
    let tol = SIMPLICITY_TOL * linalg::scale(a);
    let close = values.iter().filter(|mu| (*mu - pair.lambda).norm() < tol.max(1e-10)).count();
    if close > 1 {
        return Err(Error::RepeatedEigenvalue { gap: 0.0 });
    }
    let dac = to_complex(da);
    let dav = &dac * &pair.v;
    let dlambda = pair.w.dotc(&dav);
    let mut shifted = to_complex(a);
    for i in 0..n {
        shifted[(i, i)] -= pair.lambda;
    }
    let pinv = shifted
        .pseudo_inverse(1e-10 * linalg::scale(a))
        .map_err(|_| Error::LinearAlgebra("pseudo-inverse failed"))?;
    let rhs = &pair.v * dlambda - dav;
    let p = pinv * rhs;
    let j = pair.anchor_index;
    let vj = pair.v[j];
    let c_re = -pair.v.dotc(&p).re;
    // anchor phase: Im((p_j + c v_j) / v_j) = 0
    let c_im = -(p[j] / vj).im;
    let dv = p + &pair.v * C64::new(c_re, c_im);
    Ok((dlambda, dv))
}
