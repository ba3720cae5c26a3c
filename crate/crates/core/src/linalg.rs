//! Dense eigen-decomposition helpers on top of nalgebra.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Schur};
// float methods via libm; redundant when std is linked
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::C64;

/// Right and left eigenvectors of a real square matrix.
///
/// `left[k]` solves `A^T l = lambda_k l` and is scaled so that `left[k]^T right[k] = 1`
/// (bilinear pairing, no conjugation). `right[k]` has unit 2-norm.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<C64>,
    pub right: Vec<DVector<C64>>,
    pub left: Vec<DVector<C64>>,
}

pub fn to_complex(a: &DMatrix<f64>) -> DMatrix<C64> {
    a.map(|v| C64::new(v, 0.0))
}

/// Frobenius-type scale used for relative tolerances.
pub fn scale(a: &DMatrix<f64>) -> f64 {
    a.norm().max(f64::MIN_POSITIVE)
}

/// Sorts indices by descending real part; ties within `tol` are broken by ascending
/// imaginary part.
pub fn spectral_order(values: &[C64], tol: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].re.total_cmp(&values[a].re));
    let mut out = Vec::with_capacity(idx.len());
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && (values[idx[start]].re - values[idx[end]].re).abs() <= tol {
            end += 1;
        }
        let mut group = idx[start..end].to_vec();
        group.sort_by(|&a, &b| values[a].im.total_cmp(&values[b].im));
        out.extend(group);
        start = end;
    }
    out
}

/// Eigenvalues of a real matrix via the real Schur form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<C64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or(Error::LinearAlgebra("Schur iteration did not converge"))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Unit vector spanning the numerical null space of `m` (smallest singular value).
pub fn null_vector(m: DMatrix<C64>) -> Result<DVector<C64>> {
    let n = m.ncols();
    let svd = m.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::LinearAlgebra("SVD without right vectors"))?;
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .ok_or(Error::LinearAlgebra("empty matrix"))?;
    let mut v = DVector::from_iterator(n, v_t.row(k).iter().map(|z| z.conj()));
    let nrm = v.norm();
    v /= C64::new(nrm, 0.0);
    Ok(v)
}

fn shifted(a: &DMatrix<C64>, lambda: C64) -> DMatrix<C64> {
    let mut m = a.clone();
    for i in 0..m.nrows() {
        m[(i, i)] -= lambda;
    }
    m
}

/// Full eigen-decomposition with right/left vectors, in Schur output order.
pub fn eig(a: &DMatrix<f64>) -> Result<Eigen> {
    let values = eigenvalues(a)?;
    let ac = to_complex(a);
    let at = ac.transpose();
    let mut right = Vec::with_capacity(values.len());
    let mut left = Vec::with_capacity(values.len());
    let mut refined = Vec::with_capacity(values.len());
    for &lambda in &values {
        let mut r = null_vector(shifted(&ac, lambda))?;
        let mut l = null_vector(shifted(&at, lambda))?;
        if lambda.im == 0.0 {
            realify(&mut r);
            realify(&mut l);
        }
        let pairing = l.dot(&r);
        if pairing.norm() < 1e-14 {
            return Err(Error::LinearAlgebra("left/right eigenvectors are orthogonal"));
        }
        let mu = l.dot(&(&ac * &r)) / pairing;
        l /= pairing;
        refined.push(if lambda.im == 0.0 { C64::new(mu.re, 0.0) } else { mu });
        right.push(r);
        left.push(l);
    }
    Ok(Eigen {
        values: refined,
        right,
        left,
    })
}

/// Rotates a vector known to be real up to a global phase onto the real axis.
fn realify(v: &mut DVector<C64>) {
    let k = argmax_abs(v);
    let phase = v[k] / C64::new(v[k].norm(), 0.0);
    for z in v.iter_mut() {
        *z /= phase;
        z.im = 0.0;
    }
    let nrm = v.norm();
    *v /= C64::new(nrm, 0.0);
}

pub fn argmax_abs(v: &DVector<C64>) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(k, _)| k)
        .unwrap_or(0)
}

/// Minimum pairwise distance between eigenvalues.
pub fn min_gap(values: &[C64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            gap = gap.min((values[i] - values[j]).norm());
        }
    }
    gap
}

/// Principal complex logarithm.
pub fn ln(z: C64) -> C64 {
    C64::new(z.norm().ln(), z.im.atan2(z.re))
}

pub fn exp(z: C64) -> C64 {
    let m = z.re.exp();
    C64::new(m * z.im.cos(), m * z.im.sin())
}

pub fn cis(theta: f64) -> C64 {
    C64::new(theta.cos(), theta.sin())
}
