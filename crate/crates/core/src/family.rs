//! Continuation of forced periodic orbits in the amplitude parameter(s), period retuning and
//! backbone data.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;
// float methods via libm; redundant when std is linked
#[allow(unused_imports)]
use num_traits::Float;

use crate::dynsys::DynamicalSystem;
use crate::error::{check_dim, Error, Result};
use crate::fourier::RealSeries;
use crate::linalg::{self, argmax_abs};
use crate::periodic::{
    nearest, refine_orbit, seed_orbit, sensitivity_e, FloquetAnalysis, FloquetMode, ForcedOrbit,
    OrbitOptions,
};
use crate::spectral::{oscillatory_mode, SpectralMode, Spectrum};
use crate::C64;

/// Relative imaginary part below which a tracked multiplier pair counts as real.
const COLLISION_TOL: f64 = 1e-7;

/// Relative distance below which multipliers of two different tracked modes (or one and the
/// conjugate of the other) count as nearly repeated.
const MODE_GAP_TOL: f64 = 0.05;

/// Phase distance (rad) from the negative real axis at which a multiplier pair is treated as
/// colliding; closer pairs make the adjoint functions ill-conditioned.
const BOUNDARY_MARGIN: f64 = 0.05;

/// Settings for one-parameter continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyOptions {
    pub q0: f64,
    pub delta_q: f64,
    pub q_max: f64,
    /// Frequency offset of the forced orbits; `None` means `0.1 Im(lambda_1)`.
    pub delta_omega: Option<f64>,
    pub orbit: OrbitOptions,
    /// Spectrum indices of additional modes whose Floquet data are tracked and stored.
    pub tracked: Vec<usize>,
    /// Smallest step before continuation gives up at a boundary.
    pub min_delta_q: f64,
    /// Largest step reached by step doubling.
    pub max_delta_q: f64,
    /// Prepend the `q = 0` node (the fixed point itself).
    pub include_origin: bool,
    /// Retune when the primary multiplier phase falls within this many radians of 0.
    pub retune_threshold: f64,
    pub max_retunes: usize,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        Self {
            q0: 1e-3,
            delta_q: 0.02,
            q_max: 1.0,
            delta_omega: None,
            orbit: OrbitOptions::default(),
            tracked: Vec::new(),
            min_delta_q: 1e-3,
            max_delta_q: 0.02,
            include_origin: true,
            retune_threshold: 0.1 * PI,
            max_retunes: 20,
        }
    }
}

/// How a continuation run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    Boundary { q: f64, reason: String },
}

/// A period retune applied during continuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retune {
    pub q: f64,
    pub delta_omega: f64,
}

/// Seed parameters and outcome of a family build.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub q0: f64,
    pub delta_q: f64,
    pub delta_omega: f64,
    pub anchor_index: usize,
    pub n_theta: usize,
    pub shoot_tol: f64,
    pub rtol: f64,
    pub atol: f64,
    pub retunes: Vec<Retune>,
    pub termination: Termination,
}

/// Regular `(q1, q2, q3)` lattice; orbit `(i1, i2, i3)` is stored at
/// `i1 * n2 * n3 + i2 * n3 + i3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub q3: Vec<f64>,
    pub orbits: Vec<ForcedOrbit>,
    /// Spectrum label of the second nonlinear mode.
    pub second_label: usize,
}

impl Lattice {
    pub fn index(&self, i1: usize, i2: usize, i3: usize) -> usize {
        (i1 * self.q2.len() + i2) * self.q3.len() + i3
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.q1.len(), self.q2.len(), self.q3.len()]
    }
}

/// Family of forced periodic orbits.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitFamily {
    pub fixed_point: Vec<f64>,
    /// Fixed-point eigenvalues in spectrum order.
    pub eigenvalues: Vec<C64>,
    pub mode: SpectralMode,
    /// Spectrum label of the primary mode.
    pub primary_label: usize,
    /// One-parameter family ordered by increasing `q`.
    pub line: Vec<ForcedOrbit>,
    pub lattice: Option<Lattice>,
    pub provenance: Provenance,
}

impl OrbitFamily {
    pub fn mode_count(&self) -> usize {
        if self.lattice.is_some() {
            2
        } else {
            1
        }
    }

    pub fn q_values(&self) -> Vec<f64> {
        self.line.iter().map(|o| o.q[0]).collect()
    }

    pub fn q_terminal(&self) -> f64 {
        self.line.last().map(|o| o.q[0]).unwrap_or(0.0)
    }

    pub fn dim(&self) -> usize {
        self.fixed_point.len()
    }

    /// Largest `|g_k^T I_j - delta_kj|` over all stored orbits, phase samples and mode pairs.
    pub fn normalization_defect(&self) -> f64 {
        let lattice = self.lattice.iter().flat_map(|l| l.orbits.iter());
        self.line.iter().chain(lattice).map(orbit_normalization_defect).fold(0.0, f64::max)
    }
}

/// Largest `|g_k^T I_j - delta_kj|` over the phase samples of one orbit.
pub fn orbit_normalization_defect(orbit: &ForcedOrbit) -> f64 {
    let n1 = orbit.dim + 1;
    let mut worst = 0.0f64;
    for (a, gk) in orbit.floquet.iter().enumerate() {
        for (b, ij) in orbit.floquet.iter().enumerate() {
            let target = if a == b { 1.0 } else { 0.0 };
            for s in 0..orbit.n_theta {
                let row = s * n1..(s + 1) * n1;
                let dot: C64 = gk.g[row.clone()].iter().zip(&ij.i[row]).map(|(g, i)| g * i).sum();
                worst = worst.max((dot - target).norm());
            }
        }
    }
    worst
}

/// What a tracked mode must continue from.
#[derive(Debug, Clone)]
struct Target {
    label: usize,
    multiplier: C64,
    phase: f64,
    anchor: usize,
    paired: bool,
    /// Branch at the previous node; a change means the phase crossed +/- pi.
    branch0: Option<i64>,
}

fn targets_from_linear(eigenvalues: &[C64], labels: &[usize], period: f64, anchors: &[usize]) -> Vec<Target> {
    labels
        .iter()
        .zip(anchors)
        .map(|(&label, &anchor)| {
            let lambda = eigenvalues[label];
            Target {
                label,
                multiplier: linalg::exp(lambda * period),
                phase: lambda.im * period,
                anchor,
                paired: lambda.im != 0.0,
                branch0: None,
            }
        })
        .collect()
}

fn targets_from_orbit(orbit: &ForcedOrbit) -> Vec<Target> {
    orbit
        .floquet
        .iter()
        .map(|m| Target {
            label: m.label,
            multiplier: m.multiplier,
            phase: m.unwrapped_phase,
            anchor: m.anchor_index,
            paired: m.paired,
            branch0: Some(m.branch),
        })
        .collect()
}

/// Failure classes of a continuation step.
#[derive(Debug)]
enum StepIssue {
    Boundary(String),
    Retune,
    Failed(Error),
}

impl From<Error> for StepIssue {
    fn from(e: Error) -> Self {
        StepIssue::Failed(e)
    }
}

fn wrap_pi(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    } else if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Computes Floquet data for every target on a refined orbit. The first target is the
/// primary mode.
fn analyze(
    system: &dyn DynamicalSystem,
    orbit: &mut ForcedOrbit,
    targets: &[Target],
    opts: &OrbitOptions,
    retune_threshold: f64,
) -> core::result::Result<(), StepIssue> {
    let fa = FloquetAnalysis::new(system, orbit, opts)?;
    let mut used = vec![fa.trivial_index()];
    let mut modes = Vec::with_capacity(targets.len());
    for (slot, t) in targets.iter().enumerate() {
        let idx = nearest(fa.multipliers(), t.multiplier, &used);
        if idx == usize::MAX {
            return Err(StepIssue::Failed(Error::Degenerate {
                q: orbit.q.clone(),
                reason: "not enough Floquet multipliers for the tracked modes".into(),
            }));
        }
        used.push(idx);
        let mu = fa.multipliers()[idx];
        if t.paired && mu.im.abs() <= COLLISION_TOL * mu.norm() {
            return Err(if mu.re > 0.0 {
                StepIssue::Retune
            } else {
                StepIssue::Boundary(format!("multipliers of mode {} became real", t.label))
            });
        }
        if t.paired && PI - mu.arg().abs() < BOUNDARY_MARGIN {
            return Err(StepIssue::Boundary(format!(
                "multipliers of mode {} approach the negative real axis",
                t.label
            )));
        }
        let phase = t.phase + wrap_pi(mu.arg() - t.multiplier.arg());
        let branch = ((phase - mu.arg()) / (2.0 * PI)).round() as i64;
        if let Some(b0) = t.branch0 {
            if branch != b0 {
                return Err(StepIssue::Boundary(format!(
                    "multiplier phase of mode {} crossed the negative real axis",
                    t.label
                )));
            }
        }
        if slot == 0 && t.paired && mu.arg().abs() < retune_threshold {
            return Err(StepIssue::Retune);
        }
        let mf = fa.mode_functions(idx, t.anchor)?;
        if slot == 0 && mf.kappa.re >= 0.0 {
            return Err(StepIssue::Boundary(format!("unstable forced orbit, Re(kappa) = {}", mf.kappa.re)));
        }
        modes.push(FloquetMode {
            label: t.label,
            kappa: mf.kappa,
            branch,
            multiplier: mu,
            unwrapped_phase: phase,
            paired: t.paired,
            anchor_index: t.anchor,
            g: mf.g,
            i: mf.i,
            e: Vec::new(),
        });
    }
    if retune_threshold > 0.0 {
        for a in 0..modes.len() {
            for b in a + 1..modes.len() {
                let (ma, mb) = (modes[a].multiplier, modes[b].multiplier);
                let gap = (ma - mb).norm().min((ma - mb.conj()).norm());
                if gap < MODE_GAP_TOL * ma.norm().max(mb.norm()) {
                    return Err(StepIssue::Retune);
                }
            }
        }
    }
    orbit.floquet = modes;
    Ok(())
}

/// `2 Re(c g_x)` samples (`n x N`) of one mode.
pub fn construction_derivative(orbit: &ForcedOrbit, mode: &FloquetMode, c: C64) -> Vec<f64> {
    let n = orbit.dim;
    let n1 = n + 1;
    let mut out = vec![0.0; orbit.n_theta * n];
    for k in 0..orbit.n_theta {
        for d in 0..n {
            out[k * n + d] = 2.0 * (c * mode.g[k * n1 + d]).re;
        }
    }
    out
}

/// Guess for the orbit one step of size `dq` along `2 Re(c g)`:
/// `x + 2 dq Re(c g)` and `alpha - 2 dq Re(c kappa g)` (using `g' - J g = -kappa g`).
pub fn continuation_guess(orbit: &ForcedOrbit, mode: &FloquetMode, dq: f64, c: C64) -> (Vec<f64>, Vec<f64>) {
    let n = orbit.dim;
    let n1 = n + 1;
    let mut x = orbit.x_gamma.clone();
    let mut alpha = orbit.alpha.clone();
    for k in 0..orbit.n_theta {
        for d in 0..n {
            let cg = c * mode.g[k * n1 + d];
            x[k * n + d] += 2.0 * dq * cg.re;
            alpha[k * n + d] -= 2.0 * dq * (cg * mode.kappa).re;
        }
    }
    (x, alpha)
}

/// One refined continuation step from `orbit` along `mode` with step `dq` and direction
/// `c`; `q_new` labels the new node.
fn step(
    system: &dyn DynamicalSystem,
    orbit: &ForcedOrbit,
    mode_slot: usize,
    dq: f64,
    c: C64,
    q_new: Vec<f64>,
    opts: &OrbitOptions,
    retune_threshold: f64,
) -> core::result::Result<(ForcedOrbit, usize), StepIssue> {
    let mode = &orbit.floquet[mode_slot];
    let (guess, alpha) = continuation_guess(orbit, mode, dq, c);
    let refined = refine_orbit(system, &alpha, &guess, orbit.period, opts)?;
    let mut next = ForcedOrbit {
        q: q_new,
        omega: orbit.omega,
        period: orbit.period,
        dim: orbit.dim,
        n_theta: orbit.n_theta,
        x_gamma: refined.samples,
        alpha,
        floquet: Vec::new(),
        shooting_residual: refined.residual,
    };
    analyze(system, &mut next, &targets_from_orbit(orbit), opts, retune_threshold)?;
    Ok((next, refined.iterations))
}

fn fill_line_sensitivities(orbit: &mut ForcedOrbit) -> Result<()> {
    let primary = orbit.floquet[0].clone();
    let dx = construction_derivative(orbit, &primary, C64::new(1.0, 0.0));
    for m in orbit.floquet.iter_mut() {
        m.e = sensitivity_e(&m.i, &[&dx], orbit.n_theta, orbit.dim)?;
    }
    Ok(())
}

/// Appends one orbit at `q_last + delta_q` to a one-parameter family.
///
/// Errors with [`Error::FamilyBoundary`] when the primary multipliers become real on the
/// negative axis (or the continuation fails) and [`Error::RetuneNeeded`] when they approach
/// the positive real axis.
pub fn extend_family(family: &OrbitFamily, system: &dyn DynamicalSystem, delta_q: f64) -> Result<OrbitFamily> {
    if !(delta_q > 0.0) {
        return Err(Error::Parameter(format!("continuation step must be positive, got {delta_q}")));
    }
    let last = family
        .line
        .last()
        .ok_or_else(|| Error::Parameter("family has no orbits".into()))?;
    let q_new = last.q[0] + delta_q;
    let opts = orbit_options(&family.provenance, &last.floquet, family);
    match step(system, last, 0, delta_q, C64::new(1.0, 0.0), vec![q_new], &opts, 0.0) {
        Ok((mut orbit, _)) => {
            fill_line_sensitivities(&mut orbit)?;
            let mut out = family.clone();
            out.line.push(orbit);
            Ok(out)
        }
        Err(StepIssue::Boundary(reason)) => Err(Error::FamilyBoundary { q: vec![last.q[0]], reason }),
        Err(StepIssue::Retune) => Err(Error::RetuneNeeded { q: vec![last.q[0]] }),
        Err(StepIssue::Failed(e)) => Err(e),
    }
}

fn orbit_options(p: &Provenance, _modes: &[FloquetMode], family: &OrbitFamily) -> OrbitOptions {
    OrbitOptions {
        n_theta: family.line.last().map(|o| o.n_theta).unwrap_or(p.n_theta),
        shoot_tol: p.shoot_tol,
        max_newton: OrbitOptions::default().max_newton,
        integrator: crate::ode::Tolerances {
            rtol: p.rtol,
            atol: p.atol,
            ..Default::default()
        },
    }
}

/// Anchor index for a tracked mode: largest component of its fixed-point eigenvector.
fn anchors_for(spectrum: &Spectrum, labels: &[usize], primary: &SpectralMode) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .map(|(slot, &l)| if slot == 0 { primary.anchor_index } else { argmax_abs(&spectrum.right[l]) })
        .collect()
}

/// Builds the one-parameter family for `mode` (which must be `spectrum.values[label]`).
///
/// Boundaries end the run early with [`Termination::Boundary`] recorded in provenance; the
/// orbits found so far are kept.
pub fn build_family(
    system: &dyn DynamicalSystem,
    x_ss: &[f64],
    spectrum: &Spectrum,
    label: usize,
    options: &FamilyOptions,
) -> Result<OrbitFamily> {
    let mode = oscillatory_mode(spectrum, label, None)?;
    build_family_with_mode(system, x_ss, spectrum, label, mode, options)
}

pub fn build_family_with_mode(
    system: &dyn DynamicalSystem,
    x_ss: &[f64],
    spectrum: &Spectrum,
    label: usize,
    mode: SpectralMode,
    options: &FamilyOptions,
) -> Result<OrbitFamily> {
    check_dim("fixed point", system.dim_state(), x_ss.len())?;
    if !(options.q0 > 0.0 && options.delta_q > 0.0 && options.q_max >= options.q0) {
        return Err(Error::Parameter("need 0 < q0 <= q_max and delta_q > 0".into()));
    }
    let dw = options.delta_omega.unwrap_or(0.1 * mode.lambda.im);
    let opts = options.orbit;
    let mut labels = vec![label];
    for &t in &options.tracked {
        if t >= spectrum.values.len() {
            return Err(Error::InvalidMode(format!("tracked mode index {t} out of range")));
        }
        if t != label && !labels.contains(&t) {
            labels.push(t);
        }
    }
    let anchors = anchors_for(spectrum, &labels, &mode);
    let mut provenance = Provenance {
        q0: options.q0,
        delta_q: options.delta_q,
        delta_omega: dw,
        anchor_index: mode.anchor_index,
        n_theta: opts.n_theta,
        shoot_tol: opts.shoot_tol,
        rtol: opts.integrator.rtol,
        atol: opts.integrator.atol,
        retunes: Vec::new(),
        termination: Termination::Completed,
    };
    let mut line = Vec::new();
    let seeds: Vec<f64> = if options.include_origin { vec![0.0, options.q0] } else { vec![options.q0] };
    for q in seeds {
        let seed = seed_orbit(&mode, x_ss, q, dw, opts.n_theta)?;
        let refined = refine_orbit(system, &seed.alpha, &seed.x_gamma, seed.period, &opts)?;
        let mut orbit = ForcedOrbit {
            x_gamma: refined.samples,
            shooting_residual: refined.residual,
            ..seed
        };
        let targets = targets_from_linear(&spectrum.values, &labels, orbit.period, &anchors);
        analyze(system, &mut orbit, &targets, &opts, 0.0).map_err(|issue| match issue {
            StepIssue::Failed(e) => e,
            _ => Error::Degenerate {
                q: vec![q],
                reason: "seed orbit multipliers are not simple".into(),
            },
        })?;
        fill_line_sensitivities(&mut orbit)?;
        line.push(orbit);
    }
    let mut dq = options.delta_q;
    let max_dq = options.max_delta_q.max(options.delta_q);
    let mut easy = 0;
    let mut retunes = 0;
    loop {
        let last = line.last().expect("family has seed orbits");
        let q = last.q[0];
        if q >= options.q_max * (1.0 - 1e-12) {
            break;
        }
        let h = dq.min(options.q_max - q);
        match step(system, last, 0, h, C64::new(1.0, 0.0), vec![q + h], &opts, options.retune_threshold) {
            Ok((mut orbit, iterations)) => {
                fill_line_sensitivities(&mut orbit)?;
                line.push(orbit);
                if iterations > 10 {
                    dq = (dq * 0.5).max(options.min_delta_q);
                    easy = 0;
                } else if iterations <= 3 {
                    easy += 1;
                    if easy >= 3 {
                        dq = (dq * 2.0).min(max_dq);
                        easy = 0;
                    }
                } else {
                    easy = 0;
                }
            }
            Err(StepIssue::Retune) => {
                if retunes >= options.max_retunes {
                    provenance.termination = Termination::Boundary {
                        q,
                        reason: "retune budget exhausted".into(),
                    };
                    break;
                }
                retunes += 1;
                // the pre-retune orbit stays as the end of its constant-frequency segment
                let last = line.last().expect("family has seed orbits");
                let outcome = best_retune(system, last, dw, &opts, options.retune_threshold);
                match outcome {
                    Some((tuned, shift)) => {
                        provenance.retunes.push(Retune { q, delta_omega: shift });
                        line.push(tuned);
                    }
                    None => {
                        provenance.termination = Termination::Boundary {
                            q,
                            reason: "no admissible period retune".into(),
                        };
                        break;
                    }
                }
            }
            Err(issue) => {
                easy = 0;
                if dq > options.min_delta_q * (1.0 + 1e-12) {
                    dq = (dq * 0.5).max(options.min_delta_q);
                    continue;
                }
                let reason = match issue {
                    StepIssue::Boundary(r) => r,
                    StepIssue::Failed(e) => format!("continuation failed: {e}"),
                    StepIssue::Retune => unreachable!(),
                };
                provenance.termination = Termination::Boundary { q, reason };
                break;
            }
        }
    }
    Ok(OrbitFamily {
        fixed_point: x_ss.to_vec(),
        eigenvalues: spectrum.values.clone(),
        mode,
        primary_label: label,
        line,
        lattice: None,
        provenance,
    })
}

/// Targets for an orbit whose period changed: the continuous exponent
/// `kappa + 2 pi i m / T` is kept and re-expressed at the new period.
fn retarget(reference: &ForcedOrbit, period: f64) -> Vec<Target> {
    reference
        .floquet
        .iter()
        .map(|m| {
            let lambda = C64::new(m.kappa.re, m.unwrapped_phase / reference.period);
            Target {
                label: m.label,
                multiplier: linalg::exp(lambda * period),
                phase: lambda.im * period,
                anchor: m.anchor_index,
                paired: m.paired,
                branch0: None,
            }
        })
        .collect()
}

fn phase_margin(phase: f64) -> f64 {
    let w = wrap_pi(phase).abs();
    w.min(PI - w)
}

/// Distance of the tracked multipliers from the real axis and from each other (and from
/// each other's conjugates), measured in phase.
fn degeneracy_margin(modes: &[FloquetMode]) -> f64 {
    let phases: Vec<f64> = modes.iter().map(|m| m.multiplier.arg()).collect();
    let mut score = f64::INFINITY;
    for (a, m) in modes.iter().enumerate() {
        if m.paired {
            score = score.min(phase_margin(phases[a]));
        }
        for b in a + 1..phases.len() {
            score = score
                .min(phase_margin(phases[a] - phases[b]))
                .min(phase_margin(phases[a] + phases[b]));
        }
    }
    score
}

/// Tries frequency shifts that are multiples of `dw / 2`, smallest first.
///
/// The first shift that keeps the primary multiplier on its side of +1 with a full margin is
/// taken; carrying it across +1 makes the mode nearly real on the way and breaks the phase
/// reduction there. Otherwise the orbit with the widest margin is kept.
fn best_retune(
    system: &dyn DynamicalSystem,
    orbit: &ForcedOrbit,
    dw: f64,
    opts: &OrbitOptions,
    retune_threshold: f64,
) -> Option<(ForcedOrbit, f64)> {
    let side = orbit.floquet.first().filter(|m| m.paired).map(|m| m.multiplier.arg().signum());
    let mut widest: Option<(ForcedOrbit, f64, f64)> = None;
    for k in 1..=6 {
        for sign in [-1.0, 1.0] {
            let shift = sign * 0.5 * k as f64 * dw.abs();
            if orbit.omega + shift <= 0.0 {
                continue;
            }
            if let Ok(tuned) = try_retune(system, orbit, shift, opts, retune_threshold) {
                let score = degeneracy_margin(&tuned.floquet);
                let kept = side.map_or(true, |s| tuned.floquet[0].multiplier.arg().signum() == s);
                if kept && score >= retune_threshold {
                    return Some((tuned, shift));
                }
                if widest.as_ref().map_or(true, |b| score > b.2) {
                    widest = Some((tuned, shift, score));
                }
            }
        }
    }
    widest.map(|(o, s, _)| (o, s))
}

fn try_retune(
    system: &dyn DynamicalSystem,
    orbit: &ForcedOrbit,
    shift: f64,
    opts: &OrbitOptions,
    retune_threshold: f64,
) -> core::result::Result<ForcedOrbit, StepIssue> {
    let mut tuned = retune_period(orbit, shift)?;
    let refined = refine_orbit(system, &tuned.alpha, &tuned.x_gamma, tuned.period, opts)?;
    tuned.x_gamma = refined.samples;
    tuned.shooting_residual = refined.residual;
    let targets = retarget(orbit, tuned.period);
    analyze(system, &mut tuned, &targets, opts, retune_threshold)?;
    fill_line_sensitivities(&mut tuned)?;
    Ok(tuned)
}

/// Same spatial curve traversed at frequency `omega + delta_omega`:
/// `alpha_hat(theta) = alpha(theta) + delta_omega dx/dtheta`. Floquet data are dropped.
pub fn retune_period(orbit: &ForcedOrbit, delta_omega: f64) -> Result<ForcedOrbit> {
    let omega = orbit.omega + delta_omega;
    if !(omega > 0.0) {
        return Err(Error::Parameter(format!("retuned frequency {omega} must be positive")));
    }
    if delta_omega == 0.0 {
        return Ok(orbit.clone());
    }
    let dx = RealSeries::from_samples(&orbit.x_gamma, orbit.n_theta, orbit.dim).sample_derivative(orbit.n_theta);
    let alpha = orbit
        .alpha
        .iter()
        .zip(&dx)
        .map(|(a, d)| a + delta_omega * d)
        .collect();
    Ok(ForcedOrbit {
        omega,
        period: 2.0 * PI / omega,
        alpha,
        floquet: Vec::new(),
        ..orbit.clone()
    })
}

/// Recomputes Floquet data of a retuned orbit, continuing the modes of `reference`.
pub fn reanalyze(
    system: &dyn DynamicalSystem,
    orbit: &mut ForcedOrbit,
    reference: &ForcedOrbit,
    opts: &OrbitOptions,
) -> Result<()> {
    let targets = retarget(reference, orbit.period);
    analyze(system, orbit, &targets, opts, 0.0).map_err(|issue| match issue {
        StepIssue::Failed(e) => e,
        StepIssue::Boundary(reason) => Error::Degenerate { q: orbit.q.clone(), reason },
        StepIssue::Retune => Error::RetuneNeeded { q: orbit.q.clone() },
    })?;
    fill_line_sensitivities(orbit)
}

/// Uniform axis `step * (-neg..=pos)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    pub step: f64,
    pub neg: usize,
    pub pos: usize,
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        (0..self.neg + self.pos + 1)
            .map(|k| self.step * (k as f64 - self.neg as f64))
            .collect()
    }
}

/// Settings for the two-mode lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeOptions {
    /// Spectrum label of the second oscillatory mode (must be tracked in the line family).
    pub second_label: usize,
    /// Indices into the line family used as q1 nodes.
    pub q1_nodes: Vec<usize>,
    pub q2: AxisSpec,
    pub q3: AxisSpec,
    /// Maximum number of step halvings between adjacent lattice nodes.
    pub max_substeps: usize,
}

fn slot_of(orbit: &ForcedOrbit, label: usize) -> Result<usize> {
    orbit
        .floquet
        .iter()
        .position(|m| m.label == label)
        .ok_or_else(|| Error::InvalidMode(format!("mode {label} is not tracked by the family")))
}

/// Moves from `orbit` by `dq` along mode `label` in direction `c`, halving the step up to
/// `max_substeps` times when refinement fails. Intermediate orbits are discarded.
fn lattice_move(
    system: &dyn DynamicalSystem,
    orbit: &ForcedOrbit,
    label: usize,
    dq: f64,
    c: C64,
    q_new: Vec<f64>,
    opts: &OrbitOptions,
    max_substeps: usize,
) -> Result<ForcedOrbit> {
    let mut pieces = 1usize;
    loop {
        let h = dq / pieces as f64;
        let mut cur = orbit.clone();
        let mut failure = None;
        for p in 0..pieces {
            let slot = slot_of(&cur, label)?;
            let mut q = cur.q.clone();
            let axis = if c.re != 0.0 { 1 } else { 2 };
            q[axis] = if p + 1 == pieces { q_new[axis] } else { q[axis] + h };
            match step(system, &cur, slot, h, c, q, opts, 0.0) {
                Ok((next, _)) => cur = next,
                Err(issue) => {
                    failure = Some(issue);
                    break;
                }
            }
        }
        match failure {
            None => return Ok(cur),
            Some(issue) => {
                if pieces >= 1 << max_substeps {
                    return Err(match issue {
                        StepIssue::Failed(e) => e,
                        StepIssue::Boundary(reason) => Error::FamilyBoundary { q: q_new, reason },
                        StepIssue::Retune => Error::RetuneNeeded { q: q_new },
                    });
                }
                pieces *= 2;
            }
        }
    }
}

/// Builds the `(q2, q3)` sheet of lattice orbits over one q1 node of the line family.
/// Sweeps q2 from 0 in both directions, then q3 from each q2 node.
pub fn build_lattice_slice(
    system: &dyn DynamicalSystem,
    family: &OrbitFamily,
    line_index: usize,
    options: &LatticeOptions,
) -> Result<Vec<ForcedOrbit>> {
    let base = family
        .line
        .get(line_index)
        .ok_or_else(|| Error::Parameter(format!("line node {line_index} does not exist")))?;
    let opts = orbit_options(&family.provenance, &base.floquet, family);
    let label = options.second_label;
    slot_of(base, label)?;
    let q2v = options.q2.values();
    let q3v = options.q3.values();
    let (n2, n3) = (q2v.len(), q3v.len());
    let mut origin = base.clone();
    origin.q = vec![base.q[0], 0.0, 0.0];
    let mut column: Vec<Option<ForcedOrbit>> = vec![None; n2];
    column[options.q2.neg] = Some(origin);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    for (range, sign) in [((options.q2.neg + 1)..n2).collect::<Vec<_>>(), (0..options.q2.neg).rev().collect()]
        .into_iter()
        .zip([1.0, -1.0])
    {
        for i2 in range {
            let prev_idx = (i2 as isize - sign as isize) as usize;
            let prev = column[prev_idx].as_ref().expect("previous q2 node built");
            let q_new = vec![base.q[0], q2v[i2], 0.0];
            let next = lattice_move(
                system,
                prev,
                label,
                sign * options.q2.step,
                one,
                q_new,
                &opts,
                options.max_substeps,
            )?;
            column[i2] = Some(next);
        }
    }
    let mut sheet: Vec<Option<ForcedOrbit>> = vec![None; n2 * n3];
    for i2 in 0..n2 {
        let start = column[i2].take().expect("q2 column complete");
        sheet[i2 * n3 + options.q3.neg] = Some(start);
        for (range, sign) in [((options.q3.neg + 1)..n3).collect::<Vec<_>>(), (0..options.q3.neg).rev().collect()]
            .into_iter()
            .zip([1.0, -1.0])
        {
            for i3 in range {
                let prev_idx = (i3 as isize - sign as isize) as usize;
                let prev = sheet[i2 * n3 + prev_idx].as_ref().expect("previous q3 node built");
                let q_new = vec![base.q[0], q2v[i2], q3v[i3]];
                let next = lattice_move(
                    system,
                    prev,
                    label,
                    sign * options.q3.step,
                    i,
                    q_new,
                    &opts,
                    options.max_substeps,
                )?;
                sheet[i2 * n3 + i3] = Some(next);
            }
        }
    }
    Ok(sheet.into_iter().map(|o| o.expect("sheet complete")).collect())
}

/// Three-point derivative weights at `x[k]` for samples at `x[a], x[b], x[c]`.
fn fd_weights(xa: f64, xb: f64, xc: f64, x0: f64) -> [f64; 3] {
    let wa = ((x0 - xb) + (x0 - xc)) / ((xa - xb) * (xa - xc));
    let wb = ((x0 - xa) + (x0 - xc)) / ((xb - xa) * (xb - xc));
    let wc = ((x0 - xa) + (x0 - xb)) / ((xc - xa) * (xc - xb));
    [wa, wb, wc]
}

fn fd_along(values: &[f64], k: usize) -> ([usize; 3], [f64; 3]) {
    let n = values.len();
    let (a, b, c) = if k == 0 {
        (0, 1, 2)
    } else if k + 1 == n {
        (n - 3, n - 2, n - 1)
    } else {
        (k - 1, k, k + 1)
    };
    ([a, b, c], fd_weights(values[a], values[b], values[c], values[k]))
}

/// Assembles lattice sheets (one per q1 node) and fills the three-component `E_j` of every
/// retained mode: construction derivatives where the node lies on a construction axis, and
/// three-point finite differences across neighbouring nodes otherwise.
pub fn assemble_lattice(
    family: &OrbitFamily,
    sheets: Vec<Vec<ForcedOrbit>>,
    options: &LatticeOptions,
) -> Result<OrbitFamily> {
    let q1: Vec<f64> = options.q1_nodes.iter().map(|&k| family.line[k].q[0]).collect();
    let q2 = options.q2.values();
    let q3 = options.q3.values();
    let (n1, n2, n3) = (q1.len(), q2.len(), q3.len());
    if n1 < 3 || n2 < 3 || n3 < 3 {
        return Err(Error::Parameter("lattice needs at least 3 nodes per axis".into()));
    }
    check_dim("lattice sheets", n1, sheets.len())?;
    let mut orbits: Vec<ForcedOrbit> = sheets.into_iter().flatten().collect();
    check_dim("lattice orbits", n1 * n2 * n3, orbits.len())?;
    let idx = |a: usize, b: usize, c: usize| (a * n2 + b) * n3 + c;
    let dim = family.dim();
    let nt = orbits[0].n_theta;
    let label = options.second_label;
    let mut derivs: Vec<[Vec<f64>; 3]> = Vec::with_capacity(orbits.len());
    for a in 0..n1 {
        for b in 0..n2 {
            for c in 0..n3 {
                let o = &orbits[idx(a, b, c)];
                let primary = &o.floquet[0];
                let second = &o.floquet[slot_of(o, label)?];
                let fd = |axis: usize| -> Vec<f64> {
                    let (nodes, w) = match axis {
                        0 => fd_along(&q1, a),
                        1 => fd_along(&q2, b),
                        _ => fd_along(&q3, c),
                    };
                    let mut out = vec![0.0; nt * dim];
                    for (node, wk) in nodes.iter().zip(w) {
                        let other = match axis {
                            0 => &orbits[idx(*node, b, c)],
                            1 => &orbits[idx(a, *node, c)],
                            _ => &orbits[idx(a, b, *node)],
                        };
                        for (o, v) in out.iter_mut().zip(&other.x_gamma) {
                            *o += wk * v;
                        }
                    }
                    out
                };
                let d1 = if q2[b] == 0.0 && q3[c] == 0.0 {
                    construction_derivative(o, primary, C64::new(1.0, 0.0))
                } else {
                    fd(0)
                };
                let d2 = if q3[c] == 0.0 {
                    construction_derivative(o, second, C64::new(1.0, 0.0))
                } else {
                    fd(1)
                };
                let d3 = construction_derivative(o, second, C64::new(0.0, 1.0));
                derivs.push([d1, d2, d3]);
            }
        }
    }
    for (o, d) in orbits.iter_mut().zip(&derivs) {
        for m in o.floquet.iter_mut() {
            m.e = sensitivity_e(&m.i, &[&d[0], &d[1], &d[2]], nt, dim)?;
        }
    }
    let mut out = family.clone();
    out.lattice = Some(Lattice {
        q1,
        q2,
        q3,
        orbits,
        second_label: label,
    });
    Ok(out)
}

/// Sequential two-mode extension: every q1 sheet, then the sensitivity assembly.
pub fn extend_family_two_mode(
    family: &OrbitFamily,
    system: &dyn DynamicalSystem,
    options: &LatticeOptions,
) -> Result<OrbitFamily> {
    let sheets = options
        .q1_nodes
        .iter()
        .map(|&k| build_lattice_slice(system, family, k, options))
        .collect::<Result<Vec<_>>>()?;
    assemble_lattice(family, sheets, options)
}

/// Amplitude-frequency data of a one-parameter family.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneCurve {
    pub q: Vec<f64>,
    pub omega_bar: Vec<f64>,
    pub amplitude: Vec<f64>,
    /// `re_kappa[node][mode]` for every stored mode.
    pub re_kappa: Vec<Vec<f64>>,
}

/// Phase-averaged frequency `omega (1 + mean f_theta)` with `U_e = -alpha` on the orbit.
///
/// Uses the general solve `[Re E1, Re I12; Im E1, Im I12] [q', f_theta] = -I11^T U_e`.
pub fn effective_frequency_node(orbit: &ForcedOrbit) -> Result<f64> {
    let n = orbit.dim;
    let n1 = n + 1;
    let mode = orbit
        .floquet
        .first()
        .ok_or_else(|| Error::InvalidMode("orbit carries no Floquet data".into()))?;
    let mut acc = 0.0;
    for k in 0..orbit.n_theta {
        let mut b = C64::new(0.0, 0.0);
        for d in 0..n {
            b -= mode.i[k * n1 + d] * orbit.alpha_at(k)[d];
        }
        let i2 = mode.i[k * n1 + n];
        let e1 = if mode.e.is_empty() { C64::new(-1.0, 0.0) } else { mode.e[k * (mode.e.len() / orbit.n_theta)] };
        let det = e1.re * i2.im - i2.re * e1.im;
        if det.abs() <= 1e-14 * (e1.norm() * i2.norm()).max(1e-300) || i2.im == 0.0 {
            return Err(Error::Singular {
                theta: 2.0 * PI * k as f64 / orbit.n_theta as f64,
                q: orbit.q.clone(),
            });
        }
        // solve [e1.re i2.re; e1.im i2.im] [qd; f] = -[b.re; b.im]
        let f = -(e1.re * b.im - e1.im * b.re) / det;
        acc += f;
    }
    Ok(orbit.omega * (1.0 + acc / orbit.n_theta as f64))
}

/// Backbone over the positive-q nodes; `observable` weights the state for the amplitude.
pub fn backbone(family: &OrbitFamily, observable: &[f64]) -> Result<BackboneCurve> {
    check_dim("observable weights", family.dim(), observable.len())?;
    let mut curve = BackboneCurve {
        q: Vec::new(),
        omega_bar: Vec::new(),
        amplitude: Vec::new(),
        re_kappa: Vec::new(),
    };
    // a retune leaves two orbits at one q; the retuned one is reported
    let line = &family.line;
    for (k, o) in line.iter().enumerate().filter(|(_, o)| o.q[0] > 0.0) {
        if line.get(k + 1).is_some_and(|n| n.q[0] == o.q[0]) {
            continue;
        }
        curve.q.push(o.q[0]);
        curve.omega_bar.push(effective_frequency_node(o)?);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..o.n_theta {
            let v: f64 = o.x_at(k).iter().zip(observable).map(|(a, b)| a * b).sum();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        curve.amplitude.push(hi - lo);
        curve.re_kappa.push(o.floquet.iter().map(|m| m.kappa.re).collect());
    }
    Ok(curve)
}
