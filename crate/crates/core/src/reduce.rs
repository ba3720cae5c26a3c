//! Adaptive phase-amplitude reduced models: node tables, the reduced vector field, state
//! reconstruction and lifting, simulation and steady-state response amplitudes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use core::cell::Cell;
use core::f64::consts::PI;
use nalgebra::{DMatrix, DVector};
// float methods via libm; redundant when std is linked
#[allow(unused_imports)]
use num_traits::Float;

use crate::dynsys::DynamicalSystem;
use crate::error::{check_dim, Error, Result};
use crate::family::OrbitFamily;
use crate::fourier::{ComplexSeries, PhaseBasis, RealSeries};
use crate::interp::{LatticeInterpolant, Spline};
use crate::ode::{self, Status, Tolerances};
use crate::periodic::{periodic_response, ForcedOrbit, OrbitOptions};
use crate::signal::InputSignal;
use crate::C64;

/// Relative size below which Fourier harmonics are dropped from the node tables.
pub const HARMONIC_TOL: f64 = 1e-12;

/// Fraction of the amplitude range treated as the family edge when classifying a stalled run.
pub const EDGE_FRACTION: f64 = 0.02;

/// Decay over one characteristic period, `Re(lambda_j) 2 pi / Im(lambda_1)`, above which an
/// oscillatory pair is slow enough to keep as a Floquet coordinate by default.
pub const RETAIN_DECAY_LIMIT: f64 = -0.5;

/// Spectrum indices of the oscillatory pairs (positive imaginary part, other than `primary`)
/// retained by default. Real eigenvalues are never retained.
pub fn default_retained(eigenvalues: &[C64], primary: usize) -> Vec<usize> {
    let Some(lead) = eigenvalues.get(primary) else {
        return Vec::new();
    };
    let period = 2.0 * PI / lead.im;
    (0..eigenvalues.len())
        .filter(|&j| j != primary && eigenvalues[j].im > 0.0 && eigenvalues[j].re * period > RETAIN_DECAY_LIMIT)
        .collect()
}

/// Reduced coordinates: phase, amplitude parameter(s) and retained Floquet coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub theta: f64,
    pub q: Vec<f64>,
    pub psi: Vec<C64>,
}

/// Time derivative of a [`ReducedState`] and the solved phase correction `f_theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDerivative {
    pub theta: f64,
    pub q: Vec<f64>,
    pub psi: Vec<C64>,
    pub f_theta: f64,
}

/// Node quantities evaluated at one `(theta, q)`.
#[derive(Debug, Clone)]
pub struct Frame {
    pub x: Vec<f64>,
    pub alpha: Vec<f64>,
    pub omega: f64,
    /// Per mode slot: exponent, `I` (N+1 components), `E` (one per amplitude), and the state
    /// part of `g` (empty for modes without a Floquet coordinate).
    pub kappa: Vec<C64>,
    pub i: Vec<Vec<C64>>,
    pub e: Vec<Vec<C64>>,
    pub g: Vec<Vec<C64>>,
}

#[derive(Debug, Clone)]
struct ModeSlot {
    label: usize,
    paired: bool,
    /// Offset of `I` coefficients.
    off_i: usize,
    off_e: usize,
    /// Offset of the `g` coefficients when the mode carries a Floquet coordinate.
    off_g: Option<usize>,
}

#[derive(Debug, Clone)]
struct Layout {
    dim: usize,
    nq: usize,
    kx: usize,
    ki: usize,
    ke: usize,
    kg: usize,
    off_x: usize,
    off_alpha: usize,
    off_scalars: usize,
    width: usize,
}

#[derive(Debug, Clone)]
enum Table {
    /// One spline per segment of constant forcing frequency.
    Line(Vec<Spline>),
    Lattice(LatticeInterpolant),
}

/// Reduced model built from an orbit family.
#[derive(Clone)]
pub struct ReducedModel<'s> {
    system: &'s dyn DynamicalSystem,
    layout: Layout,
    slots: Vec<ModeSlot>,
    /// Number of leading slots whose coupling equations determine `q'` and `f_theta`.
    solved: usize,
    /// Slots carrying a Floquet coordinate, in state order.
    retained: Vec<usize>,
    table: Table,
    range: Vec<(f64, f64)>,
    fixed_point: Vec<f64>,
    lambda1: C64,
}

impl core::fmt::Debug for ReducedModel<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ReducedModel")
            .field("system", &self.system.name())
            .field("amplitudes", &self.layout.nq)
            .field("retained", &self.retained_labels())
            .field("range", &self.range)
            .finish()
    }
}

fn needed_real(series: &RealSeries, tol: f64) -> (usize, f64) {
    let stride = series.harmonics + 1;
    let max = series.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut k_need = 0;
    for d in 0..series.dim {
        for k in 0..stride {
            if series.coeffs[d * stride + k].norm() > tol {
                k_need = k_need.max(k);
            }
        }
    }
    (k_need, max)
}

fn needed_complex(series: &ComplexSeries, tol: f64) -> (usize, f64) {
    let k = series.harmonics;
    let width = 2 * k + 1;
    let max = series.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut k_need = 0;
    for d in 0..series.dim {
        for j in 0..width {
            if series.coeffs[d * width + j].norm() > tol {
                k_need = k_need.max((j as isize - k as isize).unsigned_abs());
            }
        }
    }
    (k_need, max)
}

fn push_real(out: &mut Vec<C64>, series: &RealSeries, k: usize) {
    let stride = series.harmonics + 1;
    for d in 0..series.dim {
        for j in 0..=k {
            out.push(if j < stride { series.coeffs[d * stride + j] } else { C64::new(0.0, 0.0) });
        }
    }
}

fn push_complex(out: &mut Vec<C64>, series: &ComplexSeries, k: usize) {
    let h = series.harmonics as isize;
    let width = 2 * series.harmonics + 1;
    for d in 0..series.dim {
        for j in -(k as isize)..=(k as isize) {
            let idx = h + j;
            out.push(if idx >= 0 && (idx as usize) < width {
                series.coeffs[d * width + idx as usize]
            } else {
                C64::new(0.0, 0.0)
            });
        }
    }
}

struct NodeSeries {
    x: RealSeries,
    alpha: RealSeries,
    i: Vec<ComplexSeries>,
    e: Vec<ComplexSeries>,
    g: Vec<Option<ComplexSeries>>,
}

fn node_series(orbit: &ForcedOrbit, slots: &[(usize, usize, bool)], nq: usize) -> Result<NodeSeries> {
    let n = orbit.dim;
    let nt = orbit.n_theta;
    let mut i = Vec::new();
    let mut e = Vec::new();
    let mut g = Vec::new();
    for &(label, _, with_g) in slots {
        let m = orbit
            .mode(label)
            .ok_or_else(|| Error::InvalidMode(format!("orbit at q = {:?} lacks mode {label}", orbit.q)))?;
        check_dim("sensitivity samples", nt * nq, m.e.len())?;
        i.push(ComplexSeries::from_samples(&m.i, nt, n + 1));
        e.push(ComplexSeries::from_samples(&m.e, nt, nq));
        g.push(if with_g {
            let gx: Vec<C64> = (0..nt).flat_map(|k| m.g[k * (n + 1)..k * (n + 1) + n].iter().copied()).collect();
            Some(ComplexSeries::from_samples(&gx, nt, n))
        } else {
            None
        });
    }
    Ok(NodeSeries {
        x: orbit.x_series(),
        alpha: orbit.alpha_series(),
        i,
        e,
        g,
    })
}

/// Common harmonic truncation for every node.
fn harmonic_budget(orbits: &[&ForcedOrbit], slots: &[(usize, usize, bool)], nq: usize) -> Result<[usize; 4]> {
    let mut maxes = [0.0f64; 4];
    for o in orbits {
        let s = node_series(o, slots, nq)?;
        maxes[0] = maxes[0].max(needed_real(&s.x, f64::INFINITY).1).max(needed_real(&s.alpha, f64::INFINITY).1);
        for c in &s.i {
            maxes[1] = maxes[1].max(needed_complex(c, f64::INFINITY).1);
        }
        for c in &s.e {
            maxes[2] = maxes[2].max(needed_complex(c, f64::INFINITY).1);
        }
        for c in s.g.iter().flatten() {
            maxes[3] = maxes[3].max(needed_complex(c, f64::INFINITY).1);
        }
    }
    let mut k = [0usize; 4];
    for o in orbits {
        let s = node_series(o, slots, nq)?;
        let tol = |m: f64| HARMONIC_TOL * m.max(f64::MIN_POSITIVE);
        k[0] = k[0].max(needed_real(&s.x, tol(maxes[0])).0).max(needed_real(&s.alpha, tol(maxes[0])).0);
        for c in &s.i {
            k[1] = k[1].max(needed_complex(c, tol(maxes[1])).0);
        }
        for c in &s.e {
            k[2] = k[2].max(needed_complex(c, tol(maxes[2])).0);
        }
        for c in s.g.iter().flatten() {
            k[3] = k[3].max(needed_complex(c, tol(maxes[3])).0);
        }
    }
    Ok(k)
}

impl<'s> ReducedModel<'s> {
    /// Single-mode model on the one-parameter family; `retained` lists the spectrum labels
    /// of tracked modes that keep a Floquet coordinate.
    pub fn new(system: &'s dyn DynamicalSystem, family: &OrbitFamily, retained: &[usize]) -> Result<Self> {
        let orbits: Vec<&ForcedOrbit> = family.line.iter().collect();
        if orbits.len() < 2 {
            return Err(Error::Parameter("reduced model needs at least two family orbits".into()));
        }
        let mut labels = vec![(family.primary_label, 0, false)];
        for &l in retained {
            if l == family.primary_label || labels.iter().any(|s| s.0 == l) {
                return Err(Error::InvalidMode(format!("mode {l} cannot be retained twice")));
            }
            labels.push((l, 0, true));
        }
        Self::assemble(system, family, &orbits, &labels, 1, |nodes, width| {
            // split where a retune duplicated a q value
            let mut segments = Vec::new();
            let mut start = 0;
            for k in 1..=orbits.len() {
                if k == orbits.len() || orbits[k].q[0] <= orbits[k - 1].q[0] {
                    if k - start >= 2 {
                        let xs: Vec<f64> = orbits[start..k].iter().map(|o| o.q[0]).collect();
                        let ys = nodes[start * width..k * width].to_vec();
                        segments.push(Spline::new(&xs, ys, width)?);
                    }
                    start = k;
                }
            }
            if segments.is_empty() {
                return Err(Error::Parameter("family has no segment with two orbits".into()));
            }
            Ok(Table::Line(segments))
        })
    }

    /// Two-mode model on the lattice of `family`.
    pub fn two_mode(system: &'s dyn DynamicalSystem, family: &OrbitFamily) -> Result<Self> {
        let lattice = family
            .lattice
            .as_ref()
            .ok_or_else(|| Error::Parameter("family has no two-mode lattice".into()))?;
        let orbits: Vec<&ForcedOrbit> = lattice.orbits.iter().collect();
        let labels = vec![(family.primary_label, 0, false), (lattice.second_label, 0, false)];
        let axes = [lattice.q1.clone(), lattice.q2.clone(), lattice.q3.clone()];
        Self::assemble(system, family, &orbits, &labels, 2, |nodes, width| {
            Ok(Table::Lattice(LatticeInterpolant::new(axes.clone(), nodes, width)?))
        })
    }

    fn assemble(
        system: &'s dyn DynamicalSystem,
        family: &OrbitFamily,
        orbits: &[&ForcedOrbit],
        labels: &[(usize, usize, bool)],
        solved: usize,
        table: impl FnOnce(Vec<C64>, usize) -> Result<Table>,
    ) -> Result<Self> {
        let dim = family.dim();
        check_dim("model state", system.dim_state(), dim)?;
        let nq = orbits[0].q.len();
        let [kx, ki, ke, kg] = harmonic_budget(orbits, labels, nq)?;
        let mut slots = Vec::new();
        let mut off = 0;
        let off_x = off;
        off += dim * (kx + 1);
        let off_alpha = off;
        off += dim * (kx + 1);
        for &(label, _, with_g) in labels {
            let off_i = off;
            off += (dim + 1) * (2 * ki + 1);
            let off_e = off;
            off += nq * (2 * ke + 1);
            let off_g = with_g.then(|| {
                let o = off;
                off += dim * (2 * kg + 1);
                o
            });
            let paired = orbits[0].mode(label).map(|m| m.paired).unwrap_or(true);
            slots.push(ModeSlot {
                label,
                paired,
                off_i,
                off_e,
                off_g,
            });
        }
        let off_scalars = off;
        off += 1 + labels.len();
        let width = off;
        let mut nodes = Vec::with_capacity(orbits.len() * width);
        for o in orbits {
            let s = node_series(o, labels, nq)?;
            let before = nodes.len();
            push_real(&mut nodes, &s.x, kx);
            push_real(&mut nodes, &s.alpha, kx);
            for k in 0..labels.len() {
                push_complex(&mut nodes, &s.i[k], ki);
                push_complex(&mut nodes, &s.e[k], ke);
                if let Some(g) = &s.g[k] {
                    push_complex(&mut nodes, g, kg);
                }
            }
            nodes.push(C64::new(o.omega, 0.0));
            for &(label, _, _) in labels {
                nodes.push(o.mode(label).expect("checked in node_series").kappa);
            }
            debug_assert_eq!(nodes.len() - before, width);
        }
        let table = table(nodes, width)?;
        let range = match &table {
            Table::Line(segs) => vec![(segs[0].nodes()[0], *segs.last().unwrap().nodes().last().unwrap())],
            Table::Lattice(l) => l.axes().iter().map(|a| (a[0], a[a.len() - 1])).collect(),
        };
        let retained = (0..slots.len()).filter(|&k| slots[k].off_g.is_some()).collect();
        Ok(Self {
            system,
            layout: Layout {
                dim,
                nq,
                kx,
                ki,
                ke,
                kg,
                off_x,
                off_alpha,
                off_scalars,
                width,
            },
            slots,
            solved,
            retained,
            table,
            range,
            fixed_point: family.fixed_point.clone(),
            lambda1: family.mode.lambda,
        })
    }

    pub fn system(&self) -> &'s dyn DynamicalSystem {
        self.system
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    /// Number of amplitude coordinates (1 or 3).
    pub fn amplitude_count(&self) -> usize {
        self.layout.nq
    }

    /// `(min, max)` of each amplitude coordinate.
    pub fn q_range(&self) -> &[(f64, f64)] {
        &self.range
    }

    pub fn retained_labels(&self) -> Vec<usize> {
        self.retained.iter().map(|&k| self.slots[k].label).collect()
    }

    pub fn fixed_point(&self) -> &[f64] {
        &self.fixed_point
    }

    /// Fixed-point eigenvalue of the primary mode.
    pub fn lambda1(&self) -> C64 {
        self.lambda1
    }

    /// Harmonics kept for orbit, gradient, sensitivity and eigenfunction tables.
    pub fn harmonics(&self) -> [usize; 4] {
        [self.layout.kx, self.layout.ki, self.layout.ke, self.layout.kg]
    }

    /// Whether `q` lies within `EDGE_FRACTION` of the range width from a range end.
    pub fn near_edge(&self, q: &[f64]) -> bool {
        q.iter()
            .zip(&self.range)
            .any(|(v, (lo, hi))| (hi - v).min(v - lo) <= EDGE_FRACTION * (hi - lo))
    }

    pub fn in_range(&self, q: &[f64]) -> bool {
        q.len() == self.range.len() && q.iter().zip(&self.range).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    fn interpolate(&self, q: &[f64], out: &mut [C64]) -> Result<()> {
        check_dim("amplitude coordinates", self.layout.nq, q.len())?;
        if !self.in_range(q) {
            return Err(Error::OutOfRange { q: q.to_vec() });
        }
        match &self.table {
            Table::Line(segs) => {
                let t = q[0];
                let seg = segs
                    .iter()
                    .rev()
                    .find(|s| t >= s.nodes()[0])
                    .unwrap_or(&segs[0]);
                seg.eval(t, out);
            }
            Table::Lattice(l) => l.eval([q[0], q[1], q[2]], out),
        }
        Ok(())
    }

    /// Evaluates every node quantity at `(theta, q)`.
    pub fn frame(&self, theta: f64, q: &[f64]) -> Result<Frame> {
        let l = &self.layout;
        let mut buf = vec![C64::new(0.0, 0.0); l.width];
        self.interpolate(q, &mut buf)?;
        let mut basis = PhaseBasis::default();
        basis.set(theta, l.kx.max(l.ki).max(l.ke).max(l.kg));
        let mut x = vec![0.0; l.dim];
        let mut alpha = vec![0.0; l.dim];
        basis.real(&buf[l.off_x..], l.dim, l.kx, &mut x);
        basis.real(&buf[l.off_alpha..], l.dim, l.kx, &mut alpha);
        let mut kappa = Vec::with_capacity(self.slots.len());
        let mut i = Vec::with_capacity(self.slots.len());
        let mut e = Vec::with_capacity(self.slots.len());
        let mut g = Vec::with_capacity(self.slots.len());
        for (k, s) in self.slots.iter().enumerate() {
            let mut iv = vec![C64::new(0.0, 0.0); l.dim + 1];
            basis.complex(&buf[s.off_i..], l.dim + 1, l.ki, &mut iv);
            let mut ev = vec![C64::new(0.0, 0.0); l.nq];
            basis.complex(&buf[s.off_e..], l.nq, l.ke, &mut ev);
            let gv = match s.off_g {
                Some(o) => {
                    let mut gv = vec![C64::new(0.0, 0.0); l.dim];
                    basis.complex(&buf[o..], l.dim, l.kg, &mut gv);
                    gv
                }
                None => Vec::new(),
            };
            i.push(iv);
            e.push(ev);
            g.push(gv);
            kappa.push(buf[l.off_scalars + 1 + k]);
        }
        Ok(Frame {
            x,
            alpha,
            omega: buf[l.off_scalars].re,
            kappa,
            i,
            e,
            g,
        })
    }

    /// Orbit point and its phase derivative (used by lifting).
    fn orbit_point(&self, theta: f64, q: &[f64]) -> Result<Vec<f64>> {
        let l = &self.layout;
        let mut buf = vec![C64::new(0.0, 0.0); l.width];
        self.interpolate(q, &mut buf)?;
        let mut basis = PhaseBasis::default();
        basis.set(theta, l.kx);
        let mut x = vec![0.0; l.dim];
        basis.real(&buf[l.off_x..], l.dim, l.kx, &mut x);
        Ok(x)
    }

    fn reconstruct_from(&self, frame: &Frame, psi: &[C64]) -> Vec<f64> {
        let mut x = frame.x.clone();
        for (r, &slot) in self.retained.iter().enumerate() {
            let s = &self.slots[slot];
            for (xd, gd) in x.iter_mut().zip(&frame.g[slot]) {
                *xd += if s.paired { 2.0 * (psi[r] * gd).re } else { psi[r].re * gd.re };
            }
        }
        x
    }

    fn check_state(&self, state: &ReducedState) -> Result<()> {
        check_dim("amplitude coordinates", self.layout.nq, state.q.len())?;
        check_dim("Floquet coordinates", self.retained.len(), state.psi.len())
    }
}

/// `U_e = F(x, u) - F(x, 0) - alpha`.
pub fn effective_input(system: &dyn DynamicalSystem, x: &[f64], u: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
    let n = system.dim_state();
    check_dim("state", n, x.len())?;
    check_dim("input", system.dim_input(), u.len())?;
    check_dim("alpha", n, alpha.len())?;
    let mut f_u = vec![0.0; n];
    let mut f_0 = vec![0.0; n];
    system.rhs(x, u, &mut f_u);
    system.rhs(x, &vec![0.0; u.len()], &mut f_0);
    Ok((0..n).map(|i| f_u[i] - f_0[i] - alpha[i]).collect())
}

/// `U_e` at a reduced state, with the closure `x = reconstruct_state(state)`.
pub fn effective_input_at(model: &ReducedModel<'_>, state: &ReducedState, u: &[f64]) -> Result<Vec<f64>> {
    model.check_state(state)?;
    let frame = model.frame(state.theta, &state.q)?;
    let x = model.reconstruct_from(&frame, &state.psi);
    effective_input(model.system, &x, u, &frame.alpha)
}

/// `I_{j,1}^T U_e` for one mode slot.
fn project(i: &[C64], ue: &[f64]) -> C64 {
    i.iter().zip(ue).map(|(a, b)| a * b).sum()
}

/// Solves the coupling equations `I_{j,1}^T U_e + I_{j,2} f_theta + E_j q' = 0` of the
/// leading `solved` mode slots for `(q', f_theta)`.
pub fn solve_coupling(frame: &Frame, solved: usize, ue: &[f64], q: &[f64], theta: f64) -> Result<(Vec<f64>, f64)> {
    let nq = frame.e[0].len();
    let n = ue.len();
    let rows = 2 * solved;
    let cols = nq + 1;
    if rows != cols {
        return Err(Error::Dimension {
            what: "coupling system",
            expected: rows,
            got: cols,
        });
    }
    // column order: q'_1, f_theta, q'_2, ..., q'_nq
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let mut b = DVector::<f64>::zeros(rows);
    for j in 0..solved {
        let proj = project(&frame.i[j][..n], ue);
        let i2 = frame.i[j][n];
        let e = &frame.e[j];
        for (r, part) in [(2 * j, 0), (2 * j + 1, 1)] {
            let pick = |z: C64| if part == 0 { z.re } else { z.im };
            a[(r, 0)] = pick(e[0]);
            a[(r, 1)] = pick(i2);
            for k in 1..nq {
                a[(r, k + 1)] = pick(e[k]);
            }
            b[r] = -pick(proj);
        }
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lu = a.clone().lu();
    let det = lu.determinant();
    if !(det.abs() > 1e-13 * scale.powi(rows as i32)) {
        return Err(Error::Singular { theta, q: q.to_vec() });
    }
    let sol = lu.solve(&b).ok_or(Error::Singular { theta, q: q.to_vec() })?;
    let mut qdot = vec![sol[0]];
    qdot.extend((2..cols).map(|k| sol[k]));
    Ok((qdot, sol[1]))
}

/// Reduced vector field: `theta' = omega (1 + f_theta)`, `q'` from the coupling solve, and
/// `psi_j' = kappa_j psi_j + I_{j,1}^T U_e + I_{j,2} f_theta + E_j q'` for retained modes.
pub fn reduced_rhs(model: &ReducedModel<'_>, state: &ReducedState, u: &[f64]) -> Result<ReducedDerivative> {
    model.check_state(state)?;
    let frame = model.frame(state.theta, &state.q)?;
    let x = model.reconstruct_from(&frame, &state.psi);
    let ue = effective_input(model.system, &x, u, &frame.alpha)?;
    let (qdot, f) = solve_coupling(&frame, model.solved, &ue, &state.q, state.theta)?;
    let n = model.layout.dim;
    let psi = model
        .retained
        .iter()
        .enumerate()
        .map(|(r, &slot)| {
            let i = &frame.i[slot];
            let coupling: C64 = frame.e[slot].iter().zip(&qdot).map(|(e, v)| e * v).sum();
            frame.kappa[slot] * state.psi[r] + project(&i[..n], &ue) + i[n] * f + coupling
        })
        .collect();
    Ok(ReducedDerivative {
        theta: frame.omega * (1.0 + f),
        q: qdot,
        psi,
        f_theta: f,
    })
}

/// Two-mode vector field (four real unknowns solved from the primary and second modes).
pub fn reduced_rhs_two_mode(model: &ReducedModel<'_>, state: &ReducedState, u: &[f64]) -> Result<ReducedDerivative> {
    if model.layout.nq != 3 {
        return Err(Error::Parameter("model is not a two-mode model".into()));
    }
    reduced_rhs(model, state, u)
}

/// `x = x^gamma_q(theta) + sum_j psi_j g_j` (conjugate partners included for paired modes).
pub fn reconstruct_state(model: &ReducedModel<'_>, state: &ReducedState) -> Result<Vec<f64>> {
    model.check_state(state)?;
    let frame = model.frame(state.theta, &state.q)?;
    Ok(model.reconstruct_from(&frame, &state.psi))
}

fn wrap_phase(theta: f64) -> f64 {
    let t = theta % (2.0 * PI);
    if t < 0.0 {
        t + 2.0 * PI
    } else {
        t
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest point `(theta, q)` on the family (coarse node scan, then damped Gauss-Newton),
/// with the retained coordinates projected as `psi_j = I_{j,1}^T (x - x^gamma)`. When Floquet
/// coordinates are retained, a joint Gauss-Newton pass over `(theta, q, psi)` follows.
///
/// Errors with [`Error::OutOfNeighborhood`] when `|x - reconstruct(lifted)|` exceeds
/// `max_distance`.
pub fn lift_state(
    model: &ReducedModel<'_>,
    family: &OrbitFamily,
    x: &[f64],
    max_distance: f64,
) -> Result<ReducedState> {
    check_dim("state", model.layout.dim, x.len())?;
    let nq = model.layout.nq;
    let orbits: Vec<&ForcedOrbit> = match (&family.lattice, nq) {
        (Some(l), 3) => l.orbits.iter().collect(),
        (_, 1) => family.line.iter().collect(),
        _ => return Err(Error::Parameter("family does not match the reduced model".into())),
    };
    let mut best = (f64::INFINITY, 0.0, vec![0.0; nq]);
    for o in orbits.iter().filter(|o| model.in_range(&o.q)) {
        for k in 0..o.n_theta {
            let d = dist2(o.x_at(k), x);
            if d < best.0 {
                best = (d, 2.0 * PI * k as f64 / o.n_theta as f64, o.q.clone());
            }
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Parameter("no family orbit within the model range".into()));
    }
    let (mut cost, mut theta, mut q) = best;
    let np = nq + 1;
    let clamp = |q: &mut Vec<f64>| {
        for (v, (lo, hi)) in q.iter_mut().zip(model.q_range()) {
            *v = v.clamp(*lo, *hi);
        }
    };
    for _ in 0..50 {
        let base = model.orbit_point(theta, &q)?;
        let r: Vec<f64> = x.iter().zip(&base).map(|(a, b)| a - b).collect();
        // forward differences of x^gamma in (theta, q), stepped inward at range edges
        let mut jac = DMatrix::<f64>::zeros(x.len(), np);
        for p in 0..np {
            let (mut th, mut qq) = (theta, q.clone());
            let mut h = if p == 0 { 1e-6 } else { 1e-6 * (1.0 + q[p - 1].abs()) };
            if p == 0 {
                th += h;
            } else {
                let (lo, hi) = model.q_range()[p - 1];
                if qq[p - 1] + h > hi {
                    h = -h;
                }
                qq[p - 1] = (qq[p - 1] + h).max(lo);
            }
            let pt = model.orbit_point(th, &qq)?;
            for i in 0..x.len() {
                jac[(i, p)] = (pt[i] - base[i]) / h;
            }
        }
        let jt = jac.transpose();
        let mut normal = &jt * &jac;
        let grad = &jt * DVector::from_column_slice(&r);
        for p in 0..np {
            normal[(p, p)] *= 1.0 + 1e-9;
            normal[(p, p)] += 1e-14;
        }
        let Some(step) = normal.lu().solve(&grad) else { break };
        let mut damping = 1.0;
        let mut improved = false;
        while damping > 1e-4 {
            let th = theta + damping * step[0];
            let mut qq: Vec<f64> = (0..nq).map(|k| q[k] + damping * step[k + 1]).collect();
            clamp(&mut qq);
            let c = dist2(&model.orbit_point(th, &qq)?, x);
            if c < cost {
                theta = th;
                q = qq;
                cost = c;
                improved = true;
                break;
            }
            damping *= 0.5;
        }
        if !improved || step.norm() * damping < 1e-13 {
            break;
        }
    }
    let theta = wrap_phase(theta);
    let frame = model.frame(theta, &q)?;
    let n = model.layout.dim;
    let dx: Vec<f64> = x.iter().zip(&frame.x).map(|(a, b)| a - b).collect();
    let mut psi: Vec<C64> = model
        .retained
        .iter()
        .map(|&slot| {
            let p = project(&frame.i[slot][..n], &dx);
            if model.slots[slot].paired {
                p
            } else {
                C64::new(p.re, 0.0)
            }
        })
        .collect();
    let mut state = ReducedState { theta, q, psi: psi.clone() };
    let mut rec = model.reconstruct_from(&frame, &psi);
    if !psi.is_empty() {
        // joint refinement so that states on the reduced manifold are recovered exactly
        if let Some(better) = refine_lift(model, x, &state, dist2(&rec, x))? {
            state = better;
            psi = state.psi.clone();
            rec = reconstruct_state(model, &state)?;
        }
    }
    let distance = dist2(&rec, x).sqrt();
    if distance > max_distance {
        return Err(Error::OutOfNeighborhood {
            distance,
            threshold: max_distance,
        });
    }
    state.theta = wrap_phase(state.theta);
    state.psi = psi;
    Ok(state)
}

/// Damped Gauss-Newton on `|x - reconstruct(theta, q, psi)|` over all reduced coordinates.
fn refine_lift(model: &ReducedModel<'_>, x: &[f64], start: &ReducedState, cost0: f64) -> Result<Option<ReducedState>> {
    let nq = model.layout.nq;
    let paired: Vec<bool> = model.retained.iter().map(|&s| model.slots[s].paired).collect();
    let pack = |s: &ReducedState| {
        let mut p = vec![s.theta];
        p.extend_from_slice(&s.q);
        for (z, &two) in s.psi.iter().zip(&paired) {
            p.push(z.re);
            if two {
                p.push(z.im);
            }
        }
        p
    };
    let unpack = |p: &[f64]| {
        let mut q: Vec<f64> = p[1..1 + nq].to_vec();
        for (v, (lo, hi)) in q.iter_mut().zip(model.q_range()) {
            *v = v.clamp(*lo, *hi);
        }
        let mut k = 1 + nq;
        let mut psi = Vec::with_capacity(paired.len());
        for &two in &paired {
            let re = p[k];
            let im = if two { p[k + 1] } else { 0.0 };
            k += if two { 2 } else { 1 };
            psi.push(C64::new(re, im));
        }
        ReducedState { theta: p[0], q, psi }
    };
    let eval = |p: &[f64]| reconstruct_state(model, &unpack(p));
    let mut p = pack(start);
    let mut cost = cost0;
    let mut improved_any = false;
    for _ in 0..30 {
        let base = eval(&p)?;
        let r: Vec<f64> = x.iter().zip(&base).map(|(a, b)| a - b).collect();
        let mut jac = DMatrix::<f64>::zeros(x.len(), p.len());
        for c in 0..p.len() {
            let mut h = 1e-6 * (1.0 + p[c].abs());
            if (1..=nq).contains(&c) {
                let (lo, hi) = model.q_range()[c - 1];
                if p[c] + h > hi {
                    h = -h;
                }
                h = h.max(lo - p[c]);
            }
            let mut pp = p.clone();
            pp[c] += h;
            let pt = eval(&pp)?;
            for i in 0..x.len() {
                jac[(i, c)] = (pt[i] - base[i]) / h;
            }
        }
        let jt = jac.transpose();
        let mut normal = &jt * &jac;
        let grad = &jt * DVector::from_column_slice(&r);
        for c in 0..p.len() {
            normal[(c, c)] *= 1.0 + 1e-9;
            normal[(c, c)] += 1e-14;
        }
        let Some(step) = normal.lu().solve(&grad) else { break };
        let mut damping = 1.0;
        let mut improved = false;
        while damping > 1e-4 {
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + damping * b).collect();
            let c = dist2(&eval(&trial)?, x);
            if c < cost {
                p = pack(&unpack(&trial));
                cost = c;
                improved = true;
                break;
            }
            damping *= 0.5;
        }
        improved_any |= improved;
        if !improved || step.norm() * damping < 1e-13 {
            break;
        }
    }
    Ok(improved_any.then(|| unpack(&p)))
}

/// Why a simulation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEnd {
    Completed,
    FamilyBoundary,
    Singularity,
}

impl TraceEnd {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Completed => "completed",
            Self::FamilyBoundary => "family-boundary",
            Self::Singularity => "singularity",
        }
    }
}

/// Sampled simulation output. `reduced` is empty for full-order runs; the last sample is
/// the termination point when the run ends early.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub t: Vec<f64>,
    pub reduced: Vec<ReducedState>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub termination: TraceEnd,
}

fn output_times(t0: f64, t1: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t1 > t0) || !(dt > 0.0) {
        return Err(Error::Parameter(format!("need t_end > t_start and dt_out > 0, got [{t0}, {t1}] / {dt}")));
    }
    let count = ((t1 - t0) / dt + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=count).map(|k| t0 + k as f64 * dt).collect();
    if t1 - v[v.len() - 1] > 1e-9 * dt {
        v.push(t1);
    }
    Ok(v)
}

fn pack(state: &ReducedState) -> Vec<f64> {
    let mut y = vec![state.theta];
    y.extend_from_slice(&state.q);
    for p in &state.psi {
        y.push(p.re);
        y.push(p.im);
    }
    y
}

fn unpack(y: &[f64], nq: usize) -> ReducedState {
    ReducedState {
        theta: y[0],
        q: y[1..1 + nq].to_vec(),
        psi: y[1 + nq..].chunks(2).map(|c| C64::new(c[0], c[1])).collect(),
    }
}

/// Integrates the reduced model, sampling every `dt_out`. Leaving the family range ends the
/// run with [`TraceEnd::FamilyBoundary`], a singular coupling solve with
/// [`TraceEnd::Singularity`].
pub fn simulate_reduced(
    model: &ReducedModel<'_>,
    input: &InputSignal,
    init: &ReducedState,
    t_span: (f64, f64),
    dt_out: f64,
    tol: &Tolerances,
) -> Result<SimulationTrace> {
    model.check_state(init)?;
    check_dim("input direction", model.system.dim_input(), input.dim())?;
    if !model.in_range(&init.q) {
        return Err(Error::OutOfRange { q: init.q.clone() });
    }
    let stops = output_times(t_span.0, t_span.1, dt_out)?;
    let nq = model.layout.nq;
    let singular = Cell::new(false);
    let mut u = vec![0.0; input.dim()];
    let mut trace = SimulationTrace {
        t: Vec::new(),
        reduced: Vec::new(),
        states: Vec::new(),
        inputs: Vec::new(),
        termination: TraceEnd::Completed,
    };
    let record = |t: f64, y: &[f64], trace: &mut SimulationTrace| -> bool {
        let mut s = unpack(y, nq);
        s.theta = wrap_phase(s.theta);
        let mut uu = vec![0.0; input.dim()];
        input.eval(t, &mut uu);
        match reconstruct_state(model, &s) {
            Ok(x) => {
                trace.t.push(t);
                trace.reduced.push(s);
                trace.states.push(x);
                trace.inputs.push(uu);
                true
            }
            Err(_) => false,
        }
    };
    let mut pending = Vec::new();
    let out = ode::integrate(
        tol,
        |t, y, dy| {
            input.eval(t, &mut u);
            match reduced_rhs(model, &unpack(y, nq), &u) {
                Ok(d) => {
                    dy[0] = d.theta;
                    dy[1..1 + nq].copy_from_slice(&d.q);
                    for (k, p) in d.psi.iter().enumerate() {
                        dy[1 + nq + 2 * k] = p.re;
                        dy[2 + nq + 2 * k] = p.im;
                    }
                    dy.iter().all(|v| v.is_finite())
                }
                Err(Error::Singular { .. }) => {
                    singular.set(true);
                    false
                }
                Err(_) => {
                    singular.set(false);
                    false
                }
            }
        },
        t_span.0,
        &pack(init),
        t_span.1,
        &stops[1..],
        |t, y| {
            pending.push((t, y.to_vec()));
            true
        },
    )?;
    for (t, y) in &pending {
        if !record(*t, y, &mut trace) {
            break;
        }
    }
    if matches!(out.status, Status::DomainExit | Status::StepUnderflow) {
        if trace.t.last().map_or(true, |&t| t < out.t) {
            record(out.t, &out.y, &mut trace);
        }
        let q = &out.y[1..1 + nq];
        trace.termination = match out.status {
            Status::DomainExit if !singular.get() => TraceEnd::FamilyBoundary,
            // the family data degenerate near its end, which stiffens the reduced field
            Status::StepUnderflow if model.near_edge(q) => TraceEnd::FamilyBoundary,
            _ => TraceEnd::Singularity,
        };
    }
    Ok(trace)
}

/// Integrates `x' = F(x, u(t))` (full or linearized system), sampling every `dt_out`.
pub fn simulate_full(
    system: &dyn DynamicalSystem,
    input: &InputSignal,
    x0: &[f64],
    t_span: (f64, f64),
    dt_out: f64,
    tol: &Tolerances,
) -> Result<SimulationTrace> {
    check_dim("initial state", system.dim_state(), x0.len())?;
    check_dim("input direction", system.dim_input(), input.dim())?;
    let stops = output_times(t_span.0, t_span.1, dt_out)?;
    let mut u = vec![0.0; input.dim()];
    let mut trace = SimulationTrace {
        t: Vec::new(),
        reduced: Vec::new(),
        states: Vec::new(),
        inputs: Vec::new(),
        termination: TraceEnd::Completed,
    };
    let out = ode::integrate(
        tol,
        |t, y, dy| {
            input.eval(t, &mut u);
            system.rhs(y, &u, dy);
            dy.iter().all(|v| v.is_finite())
        },
        t_span.0,
        x0,
        t_span.1,
        &stops[1..],
        |t, y| {
            let mut uu = vec![0.0; input.dim()];
            input.eval(t, &mut uu);
            trace.t.push(t);
            trace.states.push(y.to_vec());
            trace.inputs.push(uu);
            true
        },
    )?;
    if out.status != Status::Completed {
        return Err(Error::Integration {
            t: out.t,
            reason: "full-order trajectory left the domain of the vector field",
        });
    }
    Ok(trace)
}

/// Model whose periodic response is measured.
#[derive(Clone, Copy)]
pub enum ResponseModel<'a> {
    /// Full or linearized system started from the given state.
    Full(&'a dyn DynamicalSystem),
    Reduced(&'a ReducedModel<'a>),
}

/// Starting point of a steady-state search; reused to continue along a frequency sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum ResponseStart {
    Full(Vec<f64>),
    Reduced(ReducedState),
}

/// Settings of the steady-state search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateOptions {
    /// Forcing periods integrated before Newton shooting.
    pub transient_periods: usize,
    pub orbit: OrbitOptions,
    /// Samples per period used to measure the amplitude.
    pub samples: usize,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            transient_periods: 20,
            orbit: OrbitOptions {
                n_theta: 64,
                shoot_tol: 1e-8,
                max_newton: 30,
                integrator: Tolerances {
                    rtol: 1e-10,
                    atol: 1e-12,
                    max_steps: 200_000,
                },
            },
            samples: 512,
        }
    }
}

/// Steady periodic response to `u = a sin(omega_f t) direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyResponse {
    /// `max - min` of the observable over one period.
    pub amplitude: f64,
    /// State at a period boundary on the periodic response.
    pub start: ResponseStart,
}

fn observe(observable: &[f64], x: &[f64]) -> f64 {
    observable.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Amplitude of the observable `c^T x` on the steady periodic response to sinusoidal forcing.
///
/// A transient of `transient_periods` forcing periods is integrated from `start`, followed by
/// Newton shooting for the periodic response (phase-locked 1:1 for reduced models).
pub fn steady_state_amplitude(
    model: ResponseModel<'_>,
    a: f64,
    omega_f: f64,
    direction: &[f64],
    observable: &[f64],
    start: &ResponseStart,
    opts: &SteadyStateOptions,
) -> Result<SteadyResponse> {
    if !(omega_f > 0.0) {
        return Err(Error::Parameter(format!("forcing frequency must be positive, got {omega_f}")));
    }
    let period = 2.0 * PI / omega_f;
    let signal = InputSignal::new(
        crate::signal::Profile::Sine {
            amplitude: a,
            omega: omega_f,
            phase: 0.0,
        },
        direction.to_vec(),
    )?;
    let tol = &opts.orbit.integrator;
    match (model, start) {
        (ResponseModel::Full(system), ResponseStart::Full(x0)) => {
            check_dim("observable", system.dim_state(), observable.len())?;
            check_dim("input direction", system.dim_input(), direction.len())?;
            let mut u = vec![0.0; direction.len()];
            let x = ode::flow(
                tol,
                |t, y, dy| {
                    signal.eval(t, &mut u);
                    system.rhs(y, &u, dy);
                },
                0.0,
                x0,
                period * opts.transient_periods as f64,
            )?;
            let input = |t: f64, out: &mut [f64]| signal.eval(t, out);
            let refined = periodic_response(system, &input, &x, period, &opts.orbit)?;
            let n = system.dim_state();
            let x_start = refined.samples[..n].to_vec();
            let sampled = SimulationTrace::dense_full(system, &signal, &x_start, period, opts.samples, tol)?;
            let values: Vec<f64> = sampled.iter().map(|x| observe(observable, x)).collect();
            Ok(SteadyResponse {
                amplitude: spread(&values),
                start: ResponseStart::Full(x_start),
            })
        }
        (ResponseModel::Reduced(model), ResponseStart::Reduced(s0)) => {
            check_dim("observable", model.dim(), observable.len())?;
            model.check_state(s0)?;
            let nq = model.layout.nq;
            let run = |y0: &[f64], t_end: f64, samples: usize| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
                let stops: Vec<f64> = if samples > 0 {
                    (0..samples).map(|k| t_end * k as f64 / samples as f64).collect()
                } else {
                    Vec::new()
                };
                let mut u = vec![0.0; direction.len()];
                let mut seen = Vec::new();
                let out = ode::integrate(
                    tol,
                    |t, y, dy| {
                        signal.eval(t, &mut u);
                        match reduced_rhs(model, &unpack(y, nq), &u) {
                            Ok(d) => {
                                dy[0] = d.theta;
                                dy[1..1 + nq].copy_from_slice(&d.q);
                                for (k, p) in d.psi.iter().enumerate() {
                                    dy[1 + nq + 2 * k] = p.re;
                                    dy[2 + nq + 2 * k] = p.im;
                                }
                                true
                            }
                            Err(_) => false,
                        }
                    },
                    0.0,
                    y0,
                    t_end,
                    &stops,
                    |t, y| {
                        if samples > 0 && stops.contains(&t) {
                            seen.push(y.to_vec());
                        }
                        true
                    },
                )?;
                if out.status != Status::Completed {
                    return Err(Error::Integration {
                        t: out.t,
                        reason: "reduced trajectory left the family during the steady-state search",
                    });
                }
                Ok((out.y, seen))
            };
            let mut y = pack(s0);
            if opts.transient_periods > 0 {
                y = run(&y, period * opts.transient_periods as f64, 0)?.0;
            }
            y[0] = wrap_phase(y[0]);
            // Newton on the period map, with the phase advanced by one cycle
            let m = y.len();
            let residual = |y: &[f64]| -> Result<Vec<f64>> {
                let (end, _) = run(y, period, 0)?;
                Ok((0..m).map(|k| end[k] - y[k] - if k == 0 { 2.0 * PI } else { 0.0 }).collect())
            };
            let mut r = residual(&y)?;
            let mut history = vec![r.iter().fold(0.0f64, |a, v| a.max(v.abs()))];
            let mut iterations = 0;
            while history[history.len() - 1] > opts.orbit.shoot_tol * (1.0 + y[1..].iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
                if iterations == opts.orbit.max_newton {
                    return Err(Error::NoConvergence {
                        iterations,
                        residual: history[history.len() - 1],
                        history,
                    });
                }
                let mut jac = DMatrix::<f64>::zeros(m, m);
                for p in 0..m {
                    let h = 1e-6 * (1.0 + y[p].abs());
                    let mut yp = y.clone();
                    yp[p] += h;
                    let rp = residual(&yp)?;
                    for i in 0..m {
                        jac[(i, p)] = (rp[i] - r[i]) / h;
                    }
                }
                let step = jac
                    .lu()
                    .solve(&DVector::from_column_slice(&r))
                    .ok_or(Error::LinearAlgebra("singular reduced shooting matrix"))?;
                let mut damping = 1.0;
                loop {
                    let trial: Vec<f64> = (0..m).map(|k| y[k] - damping * step[k]).collect();
                    let accepted = match residual(&trial) {
                        Ok(rt) => {
                            let nt = rt.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                            if nt < history[history.len() - 1] || damping < 1e-3 {
                                y = trial;
                                r = rt;
                                history.push(nt);
                                true
                            } else {
                                false
                            }
                        }
                        Err(e) if damping < 1e-3 => return Err(e),
                        Err(_) => false,
                    };
                    if accepted {
                        break;
                    }
                    damping *= 0.5;
                }
                iterations += 1;
            }
            y[0] = wrap_phase(y[0]);
            let (_, seen) = run(&y, period, opts.samples)?;
            let values = seen
                .iter()
                .map(|s| reconstruct_state(model, &unpack(s, nq)).map(|x| observe(observable, &x)))
                .collect::<Result<Vec<f64>>>()?;
            Ok(SteadyResponse {
                amplitude: spread(&values),
                start: ResponseStart::Reduced(unpack(&y, nq)),
            })
        }
        _ => Err(Error::Parameter("start state does not match the response model".into())),
    }
}

fn spread(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    hi - lo
}

impl SimulationTrace {
    /// States at `samples` equally spaced times over `[0, span)`.
    fn dense_full(
        system: &dyn DynamicalSystem,
        signal: &InputSignal,
        x0: &[f64],
        span: f64,
        samples: usize,
        tol: &Tolerances,
    ) -> Result<Vec<Vec<f64>>> {
        let stops: Vec<f64> = (0..samples).map(|k| span * k as f64 / samples as f64).collect();
        let mut u = vec![0.0; signal.dim()];
        let mut seen = Vec::with_capacity(samples);
        ode::integrate(
            tol,
            |t, y, dy| {
                signal.eval(t, &mut u);
                system.rhs(y, &u, dy);
                dy.iter().all(|v| v.is_finite())
            },
            0.0,
            x0,
            span,
            &stops,
            |t, y| {
                if stops.contains(&t) {
                    seen.push(y.to_vec());
                }
                true
            },
        )?;
        Ok(seen)
    }
}

/// Effective frequency at amplitude `q` of a single-mode model: the grid mean of
/// `omega (1 + f_theta)` with zero input on the orbit.
pub fn effective_frequency(model: &ReducedModel<'_>, q: f64, n_theta: usize) -> Result<f64> {
    if model.layout.nq != 1 {
        return Err(Error::Parameter("effective frequency needs a single-mode model".into()));
    }
    let mut acc = 0.0;
    for k in 0..n_theta {
        let theta = 2.0 * PI * k as f64 / n_theta as f64;
        let frame = model.frame(theta, &[q])?;
        let ue: Vec<f64> = frame.alpha.iter().map(|a| -a).collect();
        let (_, f) = solve_coupling(&frame, 1, &ue, &[q], theta)?;
        acc += frame.omega * (1.0 + f);
    }
    Ok(acc / n_theta as f64)
}
