//! Dormand-Prince 5(4) with exact landing on requested stop times, plus a fixed-step RK4
//! used for dense export.

use alloc::vec;
use alloc::vec::Vec;

// float methods via libm; redundant when std is linked
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Error tolerances and step limits for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Completed,
    /// The right-hand side refused every step size near the final time (domain edge).
    DomainExit,
    /// The observer asked to stop.
    Stopped,
    /// Error control drove the step below the minimum (stiffness or a singular field).
    StepUnderflow,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub status: Status,
    pub steps: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = f(t, y)` from `t0` to `t_end`.
///
/// `rhs` returns `false` when the state lies outside its domain; the step is then shrunk,
/// and if no admissible step remains the run ends with [`Status::DomainExit`] at the last
/// accepted state. `stops` (ascending, within the span) are hit exactly and reported to
/// `observer`, together with `t0`; returning `false` from the observer ends the run.
pub fn integrate<F, O>(
    tol: &Tolerances,
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    stops: &[f64],
    mut observer: O,
) -> Result<Outcome>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> bool,
    O: FnMut(f64, &[f64]) -> bool,
{
    let n = y0.len();
    let span = t_end - t0;
    let mut y = y0.to_vec();
    let mut t = t0;
    if !observer(t, &y) {
        return Ok(Outcome { t, y, status: Status::Stopped, steps: 0 });
    }
    if span == 0.0 {
        return Ok(Outcome { t, y, status: Status::Completed, steps: 0 });
    }
    if span < 0.0 {
        return Err(Error::Parameter(alloc::format!("backward integration span {span}")));
    }
    let mut k = vec![vec![0.0; n]; 7];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    if !rhs(t, &y, &mut k[0]) {
        return Ok(Outcome { t, y, status: Status::DomainExit, steps: 0 });
    }
    let mut h = initial_step(tol, &y, &k[0], span);
    let h_min = 1e-14 * span.max(t0.abs());
    let mut next_stop = stops.iter().position(|&s| s > t0).unwrap_or(stops.len());
    let mut steps = 0;
    let mut fac_prev = 1.0_f64;
    while t < t_end {
        if steps >= tol.max_steps {
            return Err(Error::Integration { t, reason: "step budget exhausted" });
        }
        let target = if next_stop < stops.len() { stops[next_stop].min(t_end) } else { t_end };
        let mut landing = false;
        let mut hh = h;
        if t + hh >= target || (target - t - hh) < 1e-12 * hh {
            hh = target - t;
            landing = true;
        }
        // stages
        let ok = {
            let mut stage = |c: f64, coeffs: &[(usize, f64)], out: usize, k: &mut Vec<Vec<f64>>| -> bool {
                for i in 0..n {
                    let mut acc = y[i];
                    for &(j, a) in coeffs {
                        acc += hh * a * k[j][i];
                    }
                    ytmp[i] = acc;
                }
                let (head, tail) = k.split_at_mut(out);
                let _ = head;
                rhs(t + c * hh, &ytmp, &mut tail[0])
            };
            stage(C2, &[(0, A21)], 1, &mut k)
                && stage(C3, &[(0, A31), (1, A32)], 2, &mut k)
                && stage(C4, &[(0, A41), (1, A42), (2, A43)], 3, &mut k)
                && stage(C5, &[(0, A51), (1, A52), (2, A53), (3, A54)], 4, &mut k)
                && stage(1.0, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], 5, &mut k)
        };
        let mut err = f64::INFINITY;
        let mut ok7 = false;
        if ok {
            for i in 0..n {
                ynew[i] = y[i]
                    + hh * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
            }
            let t_new = if landing { target } else { t + hh };
            ok7 = rhs(t_new, &ynew, &mut k[6]);
            if ok7 {
                let mut acc = 0.0;
                for i in 0..n {
                    let e = hh
                        * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                            + E7 * k[6][i]);
                    let sc = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
                    acc += (e / sc) * (e / sc);
                }
                err = (acc / n.max(1) as f64).sqrt();
            }
        }
        if !(ok && ok7) {
            h = hh * 0.25;
            if h < h_min {
                return Ok(Outcome { t, y, status: Status::DomainExit, steps });
            }
            continue;
        }
        if !err.is_finite() {
            h = hh * 0.1;
            if h < h_min {
                return Err(Error::Integration { t, reason: "non-finite error estimate" });
            }
            continue;
        }
        steps += 1;
        if err <= 1.0 {
            t = if landing { target } else { t + hh };
            core::mem::swap(&mut y, &mut ynew);
            k.swap(0, 6);
            // PI step-size control
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * fac_prev.powf(0.4 / 5.0);
            fac_prev = err.max(1e-4);
            let grow = fac.clamp(0.2, 5.0);
            // keep the unclamped step after a forced landing
            h = if landing { h.max(hh * grow) } else { hh * grow };
            if landing && next_stop < stops.len() && stops[next_stop] <= t {
                while next_stop < stops.len() && stops[next_stop] <= t {
                    next_stop += 1;
                }
                if !observer(t, &y) {
                    return Ok(Outcome { t, y, status: Status::Stopped, steps });
                }
            }
        } else {
            let fac = 0.9 * err.powf(-0.2);
            h = hh * fac.clamp(0.1, 0.9);
            if h < h_min {
                return Ok(Outcome { t, y, status: Status::StepUnderflow, steps });
            }
        }
    }
    Ok(Outcome { t, y, status: Status::Completed, steps })
}

fn initial_step(tol: &Tolerances, y: &[f64], f: &[f64], span: f64) -> f64 {
    let n = y.len().max(1) as f64;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (yi, fi) in y.iter().zip(f) {
        let sc = tol.atol + tol.rtol * yi.abs();
        d0 += (yi / sc) * (yi / sc);
        d1 += (fi / sc) * (fi / sc);
    }
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span * 0.01).max(1e-12 * span)
}

/// Convenience wrapper: integrate over `[t0, t1]` and return the final state.
pub fn flow<F>(tol: &Tolerances, mut rhs: F, t0: f64, y0: &[f64], t1: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let out = integrate(
        tol,
        |t, y, dy| {
            rhs(t, y, dy);
            dy.iter().all(|v| v.is_finite())
        },
        t0,
        y0,
        t1,
        &[],
        |_, _| true,
    )?;
    match out.status {
        Status::Completed => Ok(out.y),
        Status::StepUnderflow => Err(Error::Integration { t: out.t, reason: "step size underflow" }),
        _ => Err(Error::Integration { t: out.t, reason: "non-finite derivative" }),
    }
}

/// Classical fixed-step RK4 returning the state at every step (used for dense export).
pub fn rk4_fixed<F>(mut rhs: F, t0: f64, y0: &[f64], dt: f64, steps: usize) -> Vec<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    out.push(y.clone());
    for s in 0..steps {
        let t = t0 + s as f64 * dt;
        rhs(t, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        rhs(t + 0.5 * dt, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        rhs(t + 0.5 * dt, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + dt * k3[i];
        }
        rhs(t + dt, &tmp, &mut k4);
        for i in 0..n {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(y.clone());
    }
    out
}
