//! Dynamical-system interface, the shipped example models and the linearized baseline.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
// float methods via libm; redundant when std is linked
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_dim, Error, Result};

/// Vector field `dx/dt = F(x, u)` with state dimension N and input dimension M.
///
/// Implementations must be deterministic and free of side effects. Jacobians default to
/// central finite differences with step `1e-6 * (1 + |x_i|)`.
pub trait DynamicalSystem: Send + Sync {
    fn dim_state(&self) -> usize;
    fn dim_input(&self) -> usize;
    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]);

    /// Writes the N x N matrix dF/dx into `jac`.
    fn jac_state(&self, x: &[f64], u: &[f64], jac: &mut DMatrix<f64>) {
        fd_jacobian(self.dim_state(), x, jac, |xp, out| self.rhs(xp, u, out));
    }

    /// Writes the N x M matrix dF/du into `jac`.
    fn jac_input(&self, x: &[f64], u: &[f64], jac: &mut DMatrix<f64>) {
        let n = self.dim_state();
        let m = self.dim_input();
        let mut up = u.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for k in 0..m {
            let h = 1e-6 * (1.0 + u[k].abs());
            up[k] = u[k] + h;
            self.rhs(x, &up, &mut fp);
            up[k] = u[k] - h;
            self.rhs(x, &up, &mut fm);
            up[k] = u[k];
            for i in 0..n {
                jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
    }

    fn name(&self) -> &str {
        "custom"
    }
}

fn fd_jacobian<F: Fn(&[f64], &mut [f64])>(n: usize, x: &[f64], jac: &mut DMatrix<f64>, f: F) {
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for k in 0..n {
        let h = 1e-6 * (1.0 + x[k].abs());
        xp[k] = x[k] + h;
        f(&xp, &mut fp);
        xp[k] = x[k] - h;
        f(&xp, &mut fm);
        xp[k] = x[k];
        for i in 0..n {
            jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
}

/// Central finite-difference Jacobian dF/dx, used as the reference for analytic Jacobians.
pub fn finite_difference_jacobian(
    system: &dyn DynamicalSystem,
    x: &[f64],
    u: &[f64],
) -> DMatrix<f64> {
    let n = system.dim_state();
    let mut jac = DMatrix::zeros(n, n);
    fd_jacobian(n, x, &mut jac, |xp, out| system.rhs(xp, u, out));
    jac
}

/// Dimension-checked evaluation of F(x, u).
pub fn eval_rhs(system: &dyn DynamicalSystem, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_dim("state", system.dim_state(), x.len())?;
    check_dim("input", system.dim_input(), u.len())?;
    let mut dx = vec![0.0; x.len()];
    system.rhs(x, u, &mut dx);
    Ok(dx)
}

/// Dimension-checked dF/dx.
pub fn eval_jac_state(system: &dyn DynamicalSystem, x: &[f64], u: &[f64]) -> Result<DMatrix<f64>> {
    check_dim("state", system.dim_state(), x.len())?;
    check_dim("input", system.dim_input(), u.len())?;
    let n = system.dim_state();
    let mut jac = DMatrix::zeros(n, n);
    system.jac_state(x, u, &mut jac);
    Ok(jac)
}

/// Dimension-checked dF/du.
pub fn eval_jac_input(system: &dyn DynamicalSystem, x: &[f64], u: &[f64]) -> Result<DMatrix<f64>> {
    check_dim("state", system.dim_state(), x.len())?;
    check_dim("input", system.dim_input(), u.len())?;
    let mut jac = DMatrix::zeros(system.dim_state(), system.dim_input());
    system.jac_input(x, u, &mut jac);
    Ok(jac)
}

fn require_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be positive and finite, got {value}")))
    }
}

/// Damped pendulum parameters (SI units).
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub damping: f64,
    pub gravity: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 0.104,
            length: 9.8,
            damping: 1.0,
            gravity: 9.8,
        }
    }
}

/// Damped pendulum with an applied torque.
///
/// State `(phi, dphi/dt)` in rad and rad/s; the single input is a torque in N m that
/// enters the acceleration equation scaled by `1/(m L^2)`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    params: PendulumParams,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Result<Self> {
        require_positive("mass", params.mass)?;
        require_positive("length", params.length)?;
        require_positive("damping", params.damping)?;
        require_positive("gravity", params.gravity)?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &PendulumParams {
        &self.params
    }

    fn inertia(&self) -> f64 {
        self.params.mass * self.params.length * self.params.length
    }
}

impl DynamicalSystem for Pendulum {
    fn dim_state(&self) -> usize {
        2
    }

    fn dim_input(&self) -> usize {
        1
    }

    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let p = &self.params;
        let inertia = self.inertia();
        dx[0] = x[1];
        dx[1] = -(p.gravity / p.length) * x[0].sin() - p.damping / inertia * x[1] + u[0] / inertia;
    }

    fn jac_state(&self, x: &[f64], _u: &[f64], jac: &mut DMatrix<f64>) {
        let p = &self.params;
        jac[(0, 0)] = 0.0;
        jac[(0, 1)] = 1.0;
        jac[(1, 0)] = -(p.gravity / p.length) * x[0].cos();
        jac[(1, 1)] = -p.damping / self.inertia();
    }

    fn jac_input(&self, _x: &[f64], _u: &[f64], jac: &mut DMatrix<f64>) {
        jac[(0, 0)] = 0.0;
        jac[(1, 0)] = 1.0 / self.inertia();
    }

    fn name(&self) -> &str {
        "pendulum"
    }
}

/// Heterogeneous population of diffusively coupled planar oscillators.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarPopulationParams {
    pub coupling: f64,
    pub sigma: f64,
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
}

impl PlanarPopulationParams {
    /// Ten oscillators with `mu_j = -4 + 2j/9`, `rho_j = 0.4 - j/30` for `j = 0..9`.
    pub fn ten() -> Self {
        let count = 10;
        Self {
            coupling: 1.2,
            sigma: 0.1,
            mu: (0..count).map(|j| -4.0 + 2.0 * j as f64 / 9.0).collect(),
            rho: (0..count).map(|j| 0.4 - j as f64 / 30.0).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.mu.len()
    }
}

impl Default for PlanarPopulationParams {
    fn default() -> Self {
        Self::ten()
    }
}

/// Coupled planar oscillators; state is interleaved `(x_0, y_0, x_1, y_1, ...)`.
///
/// The scalar input is added to every `x_j` equation. Coupling is all-to-all through the
/// `x` coordinates with strength `K/N` and excludes self-coupling.
#[derive(Debug, Clone)]
pub struct PlanarPopulation {
    params: PlanarPopulationParams,
}

impl PlanarPopulation {
    pub fn new(params: PlanarPopulationParams) -> Result<Self> {
        if params.mu.is_empty() {
            return Err(Error::Parameter("population needs at least one oscillator".into()));
        }
        check_dim("rho", params.mu.len(), params.rho.len())?;
        if let Some(mu) = params.mu.iter().find(|m| !(**m < 0.0)) {
            return Err(Error::Parameter(format!("every mu_j must be negative, got {mu}")));
        }
        require_positive("sigma", params.sigma)?;
        if !params.coupling.is_finite() {
            return Err(Error::Parameter("coupling must be finite".into()));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &PlanarPopulationParams {
        &self.params
    }
}

impl DynamicalSystem for PlanarPopulation {
    fn dim_state(&self) -> usize {
        2 * self.params.count()
    }

    fn dim_input(&self) -> usize {
        1
    }

    fn rhs(&self, s: &[f64], u: &[f64], ds: &mut [f64]) {
        let p = &self.params;
        let n = p.count();
        let kn = p.coupling / n as f64;
        let xsum: f64 = (0..n).map(|j| s[2 * j]).sum();
        for j in 0..n {
            let (x, y) = (s[2 * j], s[2 * j + 1]);
            let r2 = x * x + y * y;
            let radial = p.sigma * (p.mu[j] - r2);
            let spin = 1.0 + p.rho[j] * (r2 - p.mu[j]);
            ds[2 * j] = radial * x - spin * y + kn * (xsum - x) + u[0];
            ds[2 * j + 1] = radial * y + spin * x;
        }
    }

    fn jac_state(&self, s: &[f64], _u: &[f64], jac: &mut DMatrix<f64>) {
        let p = &self.params;
        let n = p.count();
        let kn = p.coupling / n as f64;
        jac.fill(0.0);
        for j in 0..n {
            let (x, y) = (s[2 * j], s[2 * j + 1]);
            let r2 = x * x + y * y;
            let radial = p.sigma * (p.mu[j] - r2);
            let spin = 1.0 + p.rho[j] * (r2 - p.mu[j]);
            let (ix, iy) = (2 * j, 2 * j + 1);
            for k in 0..n {
                if k != j {
                    jac[(ix, 2 * k)] = kn;
                }
            }
            jac[(ix, ix)] = radial - 2.0 * p.sigma * x * x - 2.0 * p.rho[j] * x * y;
            jac[(ix, iy)] = -2.0 * p.sigma * x * y - spin - 2.0 * p.rho[j] * y * y;
            jac[(iy, ix)] = -2.0 * p.sigma * x * y + spin + 2.0 * p.rho[j] * x * x;
            jac[(iy, iy)] = radial - 2.0 * p.sigma * y * y + 2.0 * p.rho[j] * x * y;
        }
    }

    fn jac_input(&self, _x: &[f64], _u: &[f64], jac: &mut DMatrix<f64>) {
        for j in 0..self.params.count() {
            jac[(2 * j, 0)] = 1.0;
            jac[(2 * j + 1, 0)] = 0.0;
        }
    }

    fn name(&self) -> &str {
        "planar"
    }
}

/// Classical multi-machine model with constant internal voltages behind a reduced network.
///
/// Admittances are in per unit, inertia constants `H_i` in seconds, `omega0` in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSystemParams {
    pub inertia: Vec<f64>,
    pub damping: Vec<f64>,
    pub mechanical_power: Vec<f64>,
    pub voltage: Vec<f64>,
    /// Row-major m x m conductance matrix.
    pub conductance: Vec<f64>,
    /// Row-major m x m susceptance matrix.
    pub susceptance: Vec<f64>,
    pub omega0: f64,
}

impl PowerSystemParams {
    pub fn generator_count(&self) -> usize {
        self.inertia.len()
    }

    /// Three-machine nine-bus system reduced to the internal generator buses.
    ///
    /// Damping is `D_i = H_i`, which places every mechanical mode at real part -0.25 and the
    /// aperiodic speed mode at -0.5. Mechanical powers balance the electrical powers exactly
    /// at the rotor angles `delta = (0, 0.30, 0.19)` rad so that the rounded operating point
    /// `(phi12, phi13) = (-0.30, -0.19)` is an equilibrium.
    pub fn ieee9bus() -> Self {
        let inertia = vec![23.64, 6.4, 3.01];
        let mut params = Self {
            damping: inertia.clone(),
            inertia,
            mechanical_power: vec![0.0; 3],
            voltage: vec![1.054, 1.050, 1.017],
            conductance: vec![0.846, 0.287, 0.210, 0.287, 0.420, 0.213, 0.210, 0.213, 0.277],
            susceptance: vec![-2.988, 1.513, 1.226, 1.513, -2.724, 1.088, 1.226, 1.088, -2.368],
            omega0: 2.0 * core::f64::consts::PI * 60.0,
        };
        params.mechanical_power = params.electrical_power(&[0.0, 0.30, 0.19]);
        params
    }

    /// Electrical power injected at each internal bus for rotor angles `delta`.
    pub fn electrical_power(&self, delta: &[f64]) -> Vec<f64> {
        let m = self.generator_count();
        (0..m)
            .map(|i| {
                let ei = self.voltage[i];
                let mut p = ei * ei * self.conductance[i * m + i];
                for j in (0..m).filter(|&j| j != i) {
                    let d = delta[i] - delta[j];
                    p += ei
                        * self.voltage[j]
                        * (self.conductance[i * m + j] * d.cos() + self.susceptance[i * m + j] * d.sin());
                }
                p
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let m = self.generator_count();
        check_dim("damping", m, self.damping.len())?;
        check_dim("mechanical_power", m, self.mechanical_power.len())?;
        check_dim("voltage", m, self.voltage.len())?;
        check_dim("conductance", m * m, self.conductance.len())?;
        check_dim("susceptance", m * m, self.susceptance.len())?;
        for &h in &self.inertia {
            require_positive("inertia", h)?;
        }
        require_positive("omega0", self.omega0)?;
        let all = self
            .damping
            .iter()
            .chain(&self.mechanical_power)
            .chain(&self.voltage)
            .chain(&self.conductance)
            .chain(&self.susceptance);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("power-system parameters must be finite".into()));
        }
        Ok(())
    }
}

impl Default for PowerSystemParams {
    fn default() -> Self {
        Self::ieee9bus()
    }
}

/// Phase-difference form of the three-machine model.
///
/// State `(phi12, phi13, w1, w2, w3)` with `phi1k = delta_1 - delta_k` in rad and `w_i` the
/// rotor speed deviation from `omega0` in rad/s. Input `u_i` is a mechanical torque
/// perturbation in per unit added to `P_m,i`.
#[derive(Debug, Clone)]
pub struct PowerSystem {
    params: PowerSystemParams,
}

/// Builds the reduced phase-difference model; only three machines are supported.
pub fn build_phase_difference_model(params: PowerSystemParams) -> Result<PowerSystem> {
    params.validate()?;
    if params.generator_count() != 3 {
        return Err(Error::Unsupported(format!(
            "phase-difference model needs 3 generators, got {}",
            params.generator_count()
        )));
    }
    Ok(PowerSystem { params })
}

impl PowerSystem {
    pub fn params(&self) -> &PowerSystemParams {
        &self.params
    }

    fn angles(x: &[f64]) -> [f64; 3] {
        [0.0, -x[0], -x[1]]
    }

    fn gain(&self, i: usize) -> f64 {
        self.params.omega0 / (2.0 * self.params.inertia[i])
    }
}

impl DynamicalSystem for PowerSystem {
    fn dim_state(&self) -> usize {
        5
    }

    fn dim_input(&self) -> usize {
        3
    }

    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let p = &self.params;
        let pe = p.electrical_power(&Self::angles(x));
        dx[0] = x[2] - x[3];
        dx[1] = x[2] - x[4];
        for i in 0..3 {
            let w = x[2 + i];
            dx[2 + i] =
                self.gain(i) * (p.mechanical_power[i] + u[i] - p.damping[i] * w / p.omega0 - pe[i]);
        }
    }

    fn jac_state(&self, x: &[f64], _u: &[f64], jac: &mut DMatrix<f64>) {
        let p = &self.params;
        let delta = Self::angles(x);
        jac.fill(0.0);
        jac[(0, 2)] = 1.0;
        jac[(0, 3)] = -1.0;
        jac[(1, 2)] = 1.0;
        jac[(1, 4)] = -1.0;
        for i in 0..3 {
            // dPe_i/d delta_k; phi_1k = -delta_k for k = 1, 2
            let mut dpe = [0.0; 3];
            for k in (0..3).filter(|&k| k != i) {
                let d = delta[i] - delta[k];
                let c = p.voltage[i] * p.voltage[k];
                let (g, b) = (p.conductance[i * 3 + k], p.susceptance[i * 3 + k]);
                dpe[k] = c * (g * d.sin() - b * d.cos());
                dpe[i] += c * (-g * d.sin() + b * d.cos());
            }
            let row = 2 + i;
            jac[(row, 0)] = self.gain(i) * dpe[1];
            jac[(row, 1)] = self.gain(i) * dpe[2];
            jac[(row, row)] = -self.gain(i) * p.damping[i] / p.omega0;
        }
    }

    fn jac_input(&self, _x: &[f64], _u: &[f64], jac: &mut DMatrix<f64>) {
        jac.fill(0.0);
        for i in 0..3 {
            jac[(2 + i, i)] = self.gain(i);
        }
    }

    fn name(&self) -> &str {
        "ieee9bus"
    }
}

/// Affine model `dx/dt = A (x - x_ss) + B u` around a fixed point.
#[derive(Debug, Clone)]
pub struct LinearizedModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub x_ss: Vec<f64>,
}

impl DynamicalSystem for LinearizedModel {
    fn dim_state(&self) -> usize {
        self.a.nrows()
    }

    fn dim_input(&self) -> usize {
        self.b.ncols()
    }

    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let n = self.a.nrows();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.a[(i, j)] * (x[j] - self.x_ss[j]);
            }
            for (k, uk) in u.iter().enumerate() {
                acc += self.b[(i, k)] * uk;
            }
            dx[i] = acc;
        }
    }

    fn jac_state(&self, _x: &[f64], _u: &[f64], jac: &mut DMatrix<f64>) {
        jac.copy_from(&self.a);
    }

    fn jac_input(&self, _x: &[f64], _u: &[f64], jac: &mut DMatrix<f64>) {
        jac.copy_from(&self.b);
    }

    fn name(&self) -> &str {
        "linearized"
    }
}

/// Residual tolerance used to admit a linearization point.
pub const FIXED_POINT_TOL: f64 = 1e-8;

/// Linearizes `system` at `x_ss`, which must satisfy `|F(x_ss, 0)| <= 1e-8 (1 + |x_ss|)`.
pub fn linearized_model(system: &dyn DynamicalSystem, x_ss: &[f64]) -> Result<LinearizedModel> {
    let u0 = vec![0.0; system.dim_input()];
    let f = eval_rhs(system, x_ss, &u0)?;
    let residual = norm(&f);
    if residual > FIXED_POINT_TOL * (1.0 + norm(x_ss)) {
        return Err(Error::NotFixedPoint { residual });
    }
    Ok(LinearizedModel {
        a: eval_jac_state(system, x_ss, &u0)?,
        b: eval_jac_input(system, x_ss, &u0)?,
        x_ss: x_ss.to_vec(),
    })
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// A shipped model selected by name together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Pendulum(PendulumParams),
    Planar(PlanarPopulationParams),
    PowerSystem(PowerSystemParams),
}

impl ModelSpec {
    /// Default parameters for `"pendulum"`, `"planar10"` or `"ieee9bus"`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "pendulum" => Ok(Self::Pendulum(PendulumParams::default())),
            "planar10" => Ok(Self::Planar(PlanarPopulationParams::ten())),
            "ieee9bus" => Ok(Self::PowerSystem(PowerSystemParams::ieee9bus())),
            other => Err(Error::Unsupported(format!("unknown model {other:?}"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Pendulum(_) => "pendulum".into(),
            Self::Planar(p) => format!("planar{}", p.count()),
            Self::PowerSystem(_) => "ieee9bus".into(),
        }
    }

    pub fn build(&self) -> Result<Box<dyn DynamicalSystem>> {
        Ok(match self {
            Self::Pendulum(p) => Box::new(Pendulum::new(p.clone())?),
            Self::Planar(p) => Box::new(PlanarPopulation::new(p.clone())?),
            Self::PowerSystem(p) => Box::new(build_phase_difference_model(p.clone())?),
        })
    }
}
