//! Forced periodic orbits of the augmented system `x' = F(x, 0) + alpha(s)`, `s' = 1`, their
//! monodromy matrices, Floquet eigenfunctions `g_j`, gradients `I_j` and phase gradient `Z`.
//!
//! Augmented vectors have N + 1 entries; the last entry is the time-like coordinate `s`.
//! Phase is `theta = omega s` and all orbit data live on the uniform grid
//! `theta_k = 2 pi k / n`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;
use nalgebra::{DMatrix, DVector};
// float methods via libm; redundant when std is linked
#[allow(unused_imports)]
use num_traits::Float;

use crate::dynsys::DynamicalSystem;
use crate::error::{check_dim, Error, Result};
use crate::fourier::{theta_grid, PhaseBasis, RealSeries};
use crate::linalg::{self, cis, Eigen};
use crate::ode::{self, Status, Tolerances};
use crate::spectral::{anchor_phase, SpectralMode};
use crate::C64;

/// Numerical settings shared by orbit refinement and Floquet analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitOptions {
    pub n_theta: usize,
    /// Shooting residual tolerance, relative to `1 + |x|_inf`.
    pub shoot_tol: f64,
    pub max_newton: usize,
    pub integrator: Tolerances,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self {
            n_theta: 256,
            shoot_tol: 1e-10,
            max_newton: 25,
            integrator: Tolerances::default(),
        }
    }
}

/// Floquet data of one retained mode on the phase grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FloquetMode {
    /// Spectrum index of the fixed-point eigenvalue this mode continues.
    pub label: usize,
    /// Principal Floquet exponent `ln(mu) / T`.
    pub kappa: C64,
    /// Branch integer `m` with `kappa = (continuous log of mu) / T - 2 pi i m / T`.
    pub branch: i64,
    pub multiplier: C64,
    /// Unwrapped phase of the multiplier, continued along the family.
    pub unwrapped_phase: f64,
    /// True when the mode stands for a complex-conjugate pair (the partner is implied).
    pub paired: bool,
    pub anchor_index: usize,
    /// `n x (N+1)` samples of `g_j`.
    pub g: Vec<C64>,
    /// `n x (N+1)` samples of `I_j`.
    pub i: Vec<C64>,
    /// `n x n_q` samples of `E_j = -I_j^T dy/dq_k`.
    pub e: Vec<C64>,
}

/// One forced periodic orbit with its input and Floquet data.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcedOrbit {
    pub q: Vec<f64>,
    pub omega: f64,
    pub period: f64,
    pub dim: usize,
    pub n_theta: usize,
    /// `n x N` samples of `x^gamma`.
    pub x_gamma: Vec<f64>,
    /// `n x N` samples of `alpha`.
    pub alpha: Vec<f64>,
    pub floquet: Vec<FloquetMode>,
    pub shooting_residual: f64,
}

impl ForcedOrbit {
    pub fn theta_grid(&self) -> Vec<f64> {
        theta_grid(self.n_theta)
    }

    pub fn x_at(&self, k: usize) -> &[f64] {
        &self.x_gamma[k * self.dim..(k + 1) * self.dim]
    }

    pub fn alpha_at(&self, k: usize) -> &[f64] {
        &self.alpha[k * self.dim..(k + 1) * self.dim]
    }

    pub fn x_series(&self) -> RealSeries {
        RealSeries::from_samples(&self.x_gamma, self.n_theta, self.dim)
    }

    pub fn alpha_series(&self) -> RealSeries {
        RealSeries::from_samples(&self.alpha, self.n_theta, self.dim)
    }

    /// `n x (N+1)` samples of `dy/dtheta = (dx/dtheta, 1/omega)`.
    pub fn dy_dtheta(&self) -> Vec<f64> {
        let dx = self.x_series().sample_derivative(self.n_theta);
        let n1 = self.dim + 1;
        let mut out = vec![0.0; self.n_theta * n1];
        for k in 0..self.n_theta {
            out[k * n1..k * n1 + self.dim].copy_from_slice(&dx[k * self.dim..(k + 1) * self.dim]);
            out[k * n1 + self.dim] = 1.0 / self.omega;
        }
        out
    }

    pub fn mode(&self, label: usize) -> Option<&FloquetMode> {
        self.floquet.iter().find(|m| m.label == label)
    }
}

/// Periodic additive forcing `alpha(theta)` evaluated in time `s` with `theta = omega s`.
pub(crate) struct PeriodicForcing {
    series: RealSeries,
    omega: f64,
    basis: PhaseBasis,
}

impl PeriodicForcing {
    pub(crate) fn new(samples: &[f64], n: usize, dim: usize, omega: f64) -> Self {
        let mut series = RealSeries::from_samples(samples, n, dim);
        truncate_real(&mut series, 1e-16);
        Self {
            series,
            omega,
            basis: PhaseBasis::default(),
        }
    }

    fn eval(&mut self, s: f64, alpha: &mut [f64], dalpha: Option<&mut [f64]>) {
        let h = self.series.harmonics;
        self.basis.set(self.omega * s, h);
        self.basis.real(&self.series.coeffs, self.series.dim, h, alpha);
        if let Some(d) = dalpha {
            self.basis.real_derivative(&self.series.coeffs, self.series.dim, h, d);
            for v in d.iter_mut() {
                *v *= self.omega;
            }
        }
    }
}

/// Drops trailing harmonics whose coefficients are all below `rel` times the largest one.
pub(crate) fn truncate_real(series: &mut RealSeries, rel: f64) {
    let stride = series.harmonics + 1;
    let peak = series.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut keep = 0;
    for k in 0..stride {
        if (0..series.dim).any(|d| series.coeffs[d * stride + k].norm() > rel * peak) {
            keep = k;
        }
    }
    if keep + 1 < stride {
        let mut coeffs = Vec::with_capacity(series.dim * (keep + 1));
        for d in 0..series.dim {
            coeffs.extend_from_slice(&series.coeffs[d * stride..d * stride + keep + 1]);
        }
        series.coeffs = coeffs;
        series.harmonics = keep;
    }
}

/// Time-dependent input and additive forcing applied to a system.
pub(crate) struct Drive<'a> {
    pub system: &'a dyn DynamicalSystem,
    pub input: Option<&'a dyn Fn(f64, &mut [f64])>,
    pub forcing: Option<PeriodicForcing>,
}

struct Work {
    u: Vec<f64>,
    alpha: Vec<f64>,
    dalpha: Vec<f64>,
    jac: DMatrix<f64>,
}

impl Drive<'_> {
    fn work(&self) -> Work {
        let n = self.system.dim_state();
        Work {
            u: vec![0.0; self.system.dim_input()],
            alpha: vec![0.0; n],
            dalpha: vec![0.0; n],
            jac: DMatrix::zeros(n, n),
        }
    }

    /// Right-hand side of `x' = F(x, u(s)) + alpha(s)` with optional variational blocks
    /// `M' = J M` (N x N) and, when `augmented`, `X' = J X + alpha'(s)`.
    fn rhs(&mut self, w: &mut Work, s: f64, y: &[f64], dy: &mut [f64], variational: bool, augmented: bool) {
        let n = self.system.dim_state();
        if let Some(input) = self.input {
            input(s, &mut w.u);
        }
        let x = &y[..n];
        self.system.rhs(x, &w.u, &mut dy[..n]);
        if let Some(f) = self.forcing.as_mut() {
            f.eval(s, &mut w.alpha, if augmented { Some(&mut w.dalpha) } else { None });
            for i in 0..n {
                dy[i] += w.alpha[i];
            }
        } else if augmented {
            w.dalpha.fill(0.0);
        }
        if !variational {
            return;
        }
        self.system.jac_state(x, &w.u, &mut w.jac);
        let cols = if augmented { n + 1 } else { n };
        for c in 0..cols {
            let col = &y[n + c * n..n + (c + 1) * n];
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += w.jac[(i, j)] * col[j];
                }
                dy[n + c * n + i] = acc;
            }
        }
        if augmented {
            for i in 0..n {
                dy[n + n * n + i] += w.dalpha[i];
            }
        }
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|a| a.is_finite())
}

/// Integrates state (and optionally the N x N variational matrix) over `[t0, t1]`, recording
/// states at `stops`.
pub(crate) fn propagate(
    drive: &mut Drive<'_>,
    tol: &Tolerances,
    x0: &[f64],
    t0: f64,
    t1: f64,
    stops: &[f64],
    variational: bool,
) -> Result<(Vec<f64>, Option<DMatrix<f64>>, Vec<f64>)> {
    let n = drive.system.dim_state();
    let mut y0 = x0.to_vec();
    if variational {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        y0.extend_from_slice(&m);
    }
    let mut work = drive.work();
    let mut recorded = Vec::with_capacity(stops.len() * n);
    let out = ode::integrate(
        tol,
        |s, y, dy| {
            drive.rhs(&mut work, s, y, dy, variational, false);
            all_finite(dy)
        },
        t0,
        &y0,
        t1,
        stops,
        |s, y| {
            if stops.iter().any(|&t| t == s) {
                recorded.extend_from_slice(&y[..n]);
            }
            true
        },
    )?;
    if out.status != Status::Completed {
        return Err(Error::Integration {
            t: out.t,
            reason: "trajectory left the domain of the vector field",
        });
    }
    let m = variational.then(|| DMatrix::from_column_slice(n, n, &out.y[n..n + n * n]));
    Ok((out.y[..n].to_vec(), m, recorded))
}

/// Result of a periodic shooting solve.
#[derive(Debug, Clone)]
pub struct Refined {
    /// `n x N` samples on the phase grid.
    pub samples: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Newton shooting on `x(0)` for a `period`-periodic solution of the driven system.
pub(crate) fn shoot(
    drive: &mut Drive<'_>,
    x0: &[f64],
    period: f64,
    opts: &OrbitOptions,
) -> Result<Refined> {
    let n = drive.system.dim_state();
    let grid: Vec<f64> = (0..opts.n_theta)
        .map(|k| period * k as f64 / opts.n_theta as f64)
        .collect();
    let mut x = x0.to_vec();
    let mut history = Vec::new();
    for iter in 0..=opts.max_newton {
        let (xt, m, samples) = propagate(drive, &opts.integrator, &x, 0.0, period, &grid, true)?;
        let r: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let scale = 1.0 + x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let res = r.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        history.push(res);
        if !res.is_finite() {
            break;
        }
        if res <= opts.shoot_tol * scale {
            return Ok(Refined {
                samples,
                residual: res,
                iterations: iter,
                history,
            });
        }
        if iter == opts.max_newton {
            break;
        }
        let mut a = m.expect("variational block requested");
        for i in 0..n {
            a[(i, i)] -= 1.0;
        }
        let step = a
            .lu()
            .solve(&DVector::from_column_slice(&r))
            .ok_or(Error::LinearAlgebra("singular shooting matrix"))?;
        for i in 0..n {
            x[i] -= step[i];
        }
    }
    Err(Error::NoConvergence {
        iterations: history.len().saturating_sub(1),
        residual: *history.last().unwrap_or(&f64::NAN),
        history,
    })
}

/// Newton shooting for the `period`-periodic response to the additive input samples
/// `alpha` (`n x N`), starting from `guess` (`n x N`; only the first row is used).
pub fn refine_orbit(
    system: &dyn DynamicalSystem,
    alpha: &[f64],
    guess: &[f64],
    period: f64,
    opts: &OrbitOptions,
) -> Result<Refined> {
    let dim = system.dim_state();
    check_dim("alpha samples", opts.n_theta * dim, alpha.len())?;
    check_dim("guess samples", opts.n_theta * dim, guess.len())?;
    if !(period > 0.0) {
        return Err(Error::Parameter(format!("period must be positive, got {period}")));
    }
    let omega = 2.0 * PI / period;
    let mut drive = Drive {
        system,
        input: None,
        forcing: Some(PeriodicForcing::new(alpha, opts.n_theta, dim, omega)),
    };
    shoot(&mut drive, &guess[..dim], period, opts)
}

/// Analytic small-amplitude orbit `x = x_ss + 2q Re(v e^{i theta})` and the input that
/// makes it exactly periodic for the linearized dynamics, with `omega = Im(lambda) + dw`.
pub fn seed_orbit(
    mode: &SpectralMode,
    x_ss: &[f64],
    q0: f64,
    delta_omega: f64,
    n_theta: usize,
) -> Result<ForcedOrbit> {
    let dim = x_ss.len();
    check_dim("mode vector", dim, mode.v.len())?;
    let wi = mode.lambda.im;
    if delta_omega == 0.0 || !(delta_omega > -wi / 3.0 && delta_omega < wi) {
        return Err(Error::Parameter(format!(
            "frequency offset {delta_omega} outside (-{:.6}, {:.6}) or zero",
            wi / 3.0,
            wi
        )));
    }
    if n_theta < 4 {
        return Err(Error::Parameter(format!("phase grid needs at least 4 points, got {n_theta}")));
    }
    let omega = wi + delta_omega;
    let coef = C64::new(-mode.lambda.re, delta_omega);
    let mut x_gamma = vec![0.0; n_theta * dim];
    let mut alpha = vec![0.0; n_theta * dim];
    for (k, th) in theta_grid(n_theta).into_iter().enumerate() {
        let e = cis(th);
        for d in 0..dim {
            let ve = mode.v[d] * e;
            x_gamma[k * dim + d] = x_ss[d] + 2.0 * q0 * ve.re;
            alpha[k * dim + d] = 2.0 * q0 * (coef * ve).re;
        }
    }
    Ok(ForcedOrbit {
        q: vec![q0],
        omega,
        period: 2.0 * PI / omega,
        dim,
        n_theta,
        x_gamma,
        alpha,
        floquet: Vec::new(),
        shooting_residual: f64::NAN,
    })
}

/// Monodromy matrix of the augmented system and its spectrum.
#[derive(Debug, Clone)]
pub struct MonodromyResult {
    pub phi: DMatrix<f64>,
    pub multipliers: Vec<C64>,
    /// Principal exponents `ln(mu) / T`.
    pub exponents: Vec<C64>,
    /// Branch integers relative to the continuous logarithm `Im(lambda) T` of the
    /// small-amplitude limit, when a fixed-point spectrum is supplied.
    pub branches: Vec<i64>,
}

/// Segment propagators `P_k` of the augmented variational equation over each grid interval,
/// their product `Phi`, and the eigen-decomposition of `Phi`.
#[derive(Debug, Clone)]
pub struct FloquetAnalysis {
    pub segments: Vec<DMatrix<f64>>,
    pub phi: DMatrix<f64>,
    pub eigen: Eigen,
    pub period: f64,
    pub omega: f64,
}

impl FloquetAnalysis {
    pub fn new(system: &dyn DynamicalSystem, orbit: &ForcedOrbit, opts: &OrbitOptions) -> Result<Self> {
        let n = orbit.dim;
        check_dim("orbit state", system.dim_state(), n)?;
        let steps = orbit.n_theta;
        let dt = orbit.period / steps as f64;
        let mut drive = Drive {
            system,
            input: None,
            forcing: Some(PeriodicForcing::new(&orbit.alpha, steps, n, orbit.omega)),
        };
        let mut work = drive.work();
        let mut segments = Vec::with_capacity(steps);
        let mut phi = DMatrix::<f64>::identity(n + 1, n + 1);
        for k in 0..steps {
            let mut y0 = orbit.x_at(k).to_vec();
            y0.resize(n + n * n + n, 0.0);
            for i in 0..n {
                y0[n + i * n + i] = 1.0;
            }
            let t0 = k as f64 * dt;
            let t1 = if k + 1 == steps { orbit.period } else { (k + 1) as f64 * dt };
            let out = ode::integrate(
                &opts.integrator,
                |s, y, dy| {
                    drive.rhs(&mut work, s, y, dy, true, true);
                    all_finite(dy)
                },
                t0,
                &y0,
                t1,
                &[],
                |_, _| true,
            )?;
            if out.status != Status::Completed {
                return Err(Error::Integration { t: out.t, reason: "variational solve failed" });
            }
            let mut p = DMatrix::<f64>::identity(n + 1, n + 1);
            for c in 0..=n {
                for i in 0..n {
                    p[(i, c)] = out.y[n + c * n + i];
                }
            }
            phi = &p * phi;
            segments.push(p);
        }
        let eigen = linalg::eig(&phi)?;
        Ok(Self {
            segments,
            phi,
            eigen,
            period: orbit.period,
            omega: orbit.omega,
        })
    }

    pub fn multipliers(&self) -> &[C64] {
        &self.eigen.values
    }

    /// Index of the multiplier closest to 1 (the phase direction).
    pub fn trivial_index(&self) -> usize {
        nearest(&self.eigen.values, C64::new(1.0, 0.0), &[])
    }

    pub fn exponent(&self, idx: usize) -> C64 {
        linalg::ln(self.eigen.values[idx]) / self.period
    }

    /// `g(t_k) = Y(t_k) r e^{-kappa t_k}` propagated segment by segment, and the
    /// periodicity defect `|g(T) - g(0)|`.
    fn propagate_g(&self, r: &DVector<C64>, kappa: C64) -> (Vec<C64>, f64) {
        let n1 = r.len();
        let steps = self.segments.len();
        let decay = linalg::exp(-kappa * (self.period / steps as f64));
        let mut out = Vec::with_capacity(steps * n1);
        let mut g = r.clone();
        for p in &self.segments {
            out.extend(g.iter().copied());
            g = real_times(p, &g) * decay;
        }
        let defect = (&g - r).norm();
        (out, defect)
    }

    /// `I(t_k) = Y(t_k)^{-T} l e^{kappa t_k}` by the backward recursion
    /// `I(t_k) = P_k^T I(t_{k+1}) e^{-kappa dt}`.
    fn propagate_i(&self, l: &DVector<C64>, kappa: C64) -> (Vec<C64>, f64) {
        let n1 = l.len();
        let steps = self.segments.len();
        let decay = linalg::exp(-kappa * (self.period / steps as f64));
        let mut rows = vec![C64::new(0.0, 0.0); steps * n1];
        let mut cur = l.clone();
        for k in (0..steps).rev() {
            cur = real_transpose_times(&self.segments[k], &cur) * decay;
            rows[k * n1..(k + 1) * n1].copy_from_slice(cur.as_slice());
        }
        let defect = (&cur - l).norm();
        (rows, defect)
    }

    /// Floquet eigenfunction and gradient for eigen-index `idx` with the anchor scaling
    /// `|g(0)| = 1`, `arg g(0)[anchor] = -pi`, and `g^T I = 1`.
    pub fn mode_functions(&self, idx: usize, anchor: usize) -> Result<ModeFunctions> {
        let kappa = self.exponent(idx);
        let mut r = self.eigen.right[idx].clone();
        let l0 = self.eigen.left[idx].clone();
        let nrm = r.norm();
        r /= C64::new(nrm, 0.0);
        let factor = anchor_phase(&mut r, anchor)?;
        let l = l0 * (C64::new(nrm, 0.0) / factor);
        let (g, g_defect) = self.propagate_g(&r, kappa);
        let (i, i_defect) = self.propagate_i(&l, kappa);
        Ok(ModeFunctions {
            kappa,
            multiplier: self.eigen.values[idx],
            g,
            i,
            g_defect,
            i_defect,
        })
    }

    /// Phase gradient samples `Z(theta_k)`, `n x (N+1)`, normalized so that
    /// `F_aug^T Z = omega`.
    pub fn phase_gradient(&self, orbit: &ForcedOrbit, system: &dyn DynamicalSystem) -> Result<Vec<f64>> {
        let idx = self.trivial_index();
        let l = self.eigen.left[idx].clone();
        let (z, _) = self.propagate_i(&l, C64::new(0.0, 0.0));
        let n = orbit.dim;
        let n1 = n + 1;
        let mut f = vec![0.0; n];
        system.rhs(orbit.x_at(0), &vec![0.0; system.dim_input()], &mut f);
        let mut pairing = C64::new(0.0, 0.0);
        for i in 0..n {
            pairing += z[i] * (f[i] + orbit.alpha_at(0)[i]);
        }
        pairing += z[n];
        if pairing.norm() == 0.0 {
            return Err(Error::Degenerate {
                q: orbit.q.clone(),
                reason: "phase direction orthogonal to the vector field".into(),
            });
        }
        let scale = C64::new(orbit.omega, 0.0) / pairing;
        Ok((0..orbit.n_theta * n1).map(|k| (z[k] * scale).re).collect())
    }
}

/// `g`, `I` samples and diagnostics for one Floquet mode.
#[derive(Debug, Clone)]
pub struct ModeFunctions {
    pub kappa: C64,
    pub multiplier: C64,
    pub g: Vec<C64>,
    pub i: Vec<C64>,
    pub g_defect: f64,
    pub i_defect: f64,
}

fn real_times(p: &DMatrix<f64>, v: &DVector<C64>) -> DVector<C64> {
    let n = v.len();
    DVector::from_fn(n, |i, _| {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            acc += v[j] * p[(i, j)];
        }
        acc
    })
}

fn real_transpose_times(p: &DMatrix<f64>, v: &DVector<C64>) -> DVector<C64> {
    let n = v.len();
    DVector::from_fn(n, |i, _| {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            acc += v[j] * p[(j, i)];
        }
        acc
    })
}

/// Index of the value closest to `target`, skipping `exclude`.
pub(crate) fn nearest(values: &[C64], target: C64, exclude: &[usize]) -> usize {
    let mut best = usize::MAX;
    let mut dist = f64::INFINITY;
    for (k, v) in values.iter().enumerate() {
        if exclude.contains(&k) {
            continue;
        }
        let d = (v - target).norm();
        if d < dist {
            dist = d;
            best = k;
        }
    }
    best
}

/// Monodromy of the augmented variational equation around `orbit`.
///
/// When `spectrum_values` (fixed-point eigenvalues) are given, each multiplier is matched to
/// the closest `exp(lambda_j T)` and assigned the branch `m` separating the principal
/// exponent from `lambda_j`.
pub fn monodromy(
    system: &dyn DynamicalSystem,
    orbit: &ForcedOrbit,
    spectrum_values: Option<&[C64]>,
    opts: &OrbitOptions,
) -> Result<MonodromyResult> {
    let fa = FloquetAnalysis::new(system, orbit, opts)?;
    let multipliers = fa.eigen.values.clone();
    let gap = linalg::min_gap(&multipliers);
    if gap < 1e-10 {
        return Err(Error::Degenerate {
            q: orbit.q.clone(),
            reason: format!("repeated Floquet multiplier (gap {gap:e})"),
        });
    }
    let exponents: Vec<C64> = (0..multipliers.len()).map(|k| fa.exponent(k)).collect();
    let trivial = fa.trivial_index();
    let branches = match spectrum_values {
        Some(values) => exponents
            .iter()
            .enumerate()
            .map(|(k, kappa)| {
                if k == trivial {
                    return 0;
                }
                let target = values
                    .iter()
                    .min_by(|a, b| {
                        let da = (linalg::exp(**a * orbit.period) - multipliers[k]).norm();
                        let db = (linalg::exp(**b * orbit.period) - multipliers[k]).norm();
                        da.total_cmp(&db)
                    })
                    .copied()
                    .unwrap_or(*kappa);
                ((target.im - kappa.im) * orbit.period / (2.0 * PI)).round() as i64
            })
            .collect(),
        None => vec![0; multipliers.len()],
    };
    Ok(MonodromyResult {
        phi: fa.phi,
        multipliers,
        exponents,
        branches,
    })
}

fn index_for_kappa(fa: &FloquetAnalysis, kappa: C64) -> usize {
    nearest(&fa.eigen.values, linalg::exp(kappa * fa.period), &[])
}

/// Periodic Floquet eigenfunction `g_j` (`n x (N+1)`) for the exponent closest to `kappa`.
pub fn floquet_eigenfunction(
    system: &dyn DynamicalSystem,
    orbit: &ForcedOrbit,
    kappa: C64,
    anchor: usize,
    opts: &OrbitOptions,
) -> Result<Vec<C64>> {
    let fa = FloquetAnalysis::new(system, orbit, opts)?;
    let idx = index_for_kappa(&fa, kappa);
    check_simple(&fa, idx, orbit)?;
    Ok(fa.mode_functions(idx, anchor)?.g)
}

/// Periodic gradient `I_j` (`n x (N+1)`) for the exponent closest to `kappa`, scaled so that
/// `g^T I = 1` against the supplied eigenfunction samples `g`.
pub fn floquet_gradient(
    system: &dyn DynamicalSystem,
    orbit: &ForcedOrbit,
    kappa: C64,
    g: &[C64],
    opts: &OrbitOptions,
) -> Result<Vec<C64>> {
    let fa = FloquetAnalysis::new(system, orbit, opts)?;
    let idx = index_for_kappa(&fa, kappa);
    check_simple(&fa, idx, orbit)?;
    let n1 = orbit.dim + 1;
    check_dim("eigenfunction samples", orbit.n_theta * n1, g.len())?;
    let anchor = linalg::argmax_abs(&DVector::from_column_slice(&g[..n1]));
    let mf = fa.mode_functions(idx, anchor)?;
    let pairing: C64 = (0..n1).map(|c| g[c] * mf.i[c]).sum();
    if pairing.norm() < 1e-12 {
        return Err(Error::Degenerate {
            q: orbit.q.clone(),
            reason: "eigenfunction and gradient are orthogonal".into(),
        });
    }
    Ok(mf.i.iter().map(|z| z / pairing).collect())
}

/// Phase gradient `Z` (`n x (N+1)`) normalized so that `F_aug^T Z = omega`.
pub fn phase_gradient(
    system: &dyn DynamicalSystem,
    orbit: &ForcedOrbit,
    opts: &OrbitOptions,
) -> Result<Vec<f64>> {
    let fa = FloquetAnalysis::new(system, orbit, opts)?;
    fa.phase_gradient(orbit, system)
}

fn check_simple(fa: &FloquetAnalysis, idx: usize, orbit: &ForcedOrbit) -> Result<()> {
    let mu = fa.eigen.values[idx];
    for (k, v) in fa.eigen.values.iter().enumerate() {
        if k != idx && (v - mu).norm() < 1e-8 * mu.norm().max(1e-300) {
            return Err(Error::Degenerate {
                q: orbit.q.clone(),
                reason: format!("Floquet multiplier {mu} is not simple"),
            });
        }
    }
    Ok(())
}

/// `E_j(theta_k) = -I_j^T dy/dq_k` for each direction; `dx_dq[k]` holds `n x N` samples.
/// Returns `n x n_q` samples.
pub fn sensitivity_e(i_samples: &[C64], dx_dq: &[&[f64]], n_theta: usize, dim: usize) -> Result<Vec<C64>> {
    let n1 = dim + 1;
    check_dim("gradient samples", n_theta * n1, i_samples.len())?;
    let nq = dx_dq.len();
    let mut out = vec![C64::new(0.0, 0.0); n_theta * nq];
    for (k, d) in dx_dq.iter().enumerate() {
        check_dim("orbit derivative samples", n_theta * dim, d.len())?;
        for t in 0..n_theta {
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..dim {
                acc += i_samples[t * n1 + c] * d[t * dim + c];
            }
            out[t * nq + k] = -acc;
        }
    }
    Ok(out)
}

/// Periodic response of `x' = F(x, u(t))` to a `period`-periodic input by Newton shooting
/// from `x0`. Returns `opts.n_theta` samples over one period.
pub fn periodic_response(
    system: &dyn DynamicalSystem,
    input: &dyn Fn(f64, &mut [f64]),
    x0: &[f64],
    period: f64,
    opts: &OrbitOptions,
) -> Result<Refined> {
    check_dim("initial state", system.dim_state(), x0.len())?;
    if !(period > 0.0) {
        return Err(Error::Parameter(format!("period must be positive, got {period}")));
    }
    let mut drive = Drive {
        system,
        input: Some(input),
        forcing: None,
    };
    shoot(&mut drive, x0, period, opts)
}
