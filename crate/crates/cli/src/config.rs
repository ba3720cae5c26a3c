//! Run configuration: TOML schema, flag overrides, validation and conversion into core types.

use std::path::{Path, PathBuf};

use phamp_core::dynsys::{ModelSpec, PendulumParams, PlanarPopulationParams, PowerSystemParams};
use phamp_core::family::{AxisSpec, FamilyOptions};
use phamp_core::ode::Tolerances;
use phamp_core::periodic::OrbitOptions;
use phamp_core::signal::{InputSignal, Profile};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `pendulum`, `planar10` or `ieee9bus`.
    pub name: String,
    /// Starting point of the fixed-point Newton solve.
    pub guess: Option<Vec<f64>>,
    /// Eigenvector component whose phase is pinned; defaults to the largest.
    pub anchor_index: Option<usize>,
    pub pendulum: Option<PendulumConfig>,
    pub planar: Option<PlanarConfig>,
    pub power: Option<PowerConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumConfig {
    pub mass: Option<f64>,
    pub length: Option<f64>,
    pub damping: Option<f64>,
    pub gravity: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarConfig {
    pub coupling: Option<f64>,
    pub sigma: Option<f64>,
    pub mu: Option<Vec<f64>>,
    pub rho: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    pub inertia: Option<Vec<f64>>,
    pub damping: Option<Vec<f64>>,
    pub mechanical_power: Option<Vec<f64>>,
    pub voltage: Option<Vec<f64>>,
    pub conductance: Option<Vec<f64>>,
    pub susceptance: Option<Vec<f64>>,
    pub omega0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyConfig {
    /// Oscillatory mode number (1 = slowest-decaying pair).
    pub mode: usize,
    pub q0: f64,
    pub delta_q: f64,
    pub q_max: f64,
    /// Forcing frequency offset from `Im(lambda_1)`; defaults to `0.1 Im(lambda_1)`.
    pub delta_omega: Option<f64>,
    pub n_theta: usize,
    pub min_delta_q: Option<f64>,
    pub max_delta_q: Option<f64>,
    /// Oscillatory mode numbers whose Floquet data are stored; defaults to the retention rule.
    pub tracked_modes: Option<Vec<usize>>,
    pub include_origin: bool,
    pub retune_threshold: Option<f64>,
    pub max_retunes: usize,
    /// Backbone amplitude weights over the state; defaults to the first component.
    pub observable: Option<Vec<f64>>,
    pub lattice: Option<LatticeConfig>,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            mode: 1,
            q0: 1e-3,
            delta_q: 0.02,
            q_max: 1.0,
            delta_omega: None,
            n_theta: 256,
            min_delta_q: None,
            max_delta_q: None,
            tracked_modes: None,
            include_origin: true,
            retune_threshold: None,
            max_retunes: 20,
            observable: None,
            lattice: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    /// Oscillatory mode number of the second nonlinear mode.
    #[serde(default = "second_mode_default")]
    pub second_mode: usize,
    pub q1_min: f64,
    pub q1_max: f64,
    /// Every `q1_stride`-th line node in `[q1_min, q1_max]` becomes a sheet; the last node in
    /// range is always included.
    #[serde(default = "stride_default")]
    pub q1_stride: usize,
    pub q2: AxisConfig,
    pub q3: AxisConfig,
    #[serde(default = "substeps_default")]
    pub max_substeps: usize,
}

fn second_mode_default() -> usize {
    2
}

fn stride_default() -> usize {
    1
}

fn substeps_default() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub step: f64,
    pub min: f64,
    pub max: f64,
}

impl AxisConfig {
    pub fn to_axis(&self, name: &str) -> Result<AxisSpec, CliError> {
        if !(self.step > 0.0) || !(self.min <= 0.0) || !(self.max >= 0.0) {
            return Err(CliError::Config(format!(
                "family.lattice.{name}: need step > 0 and min <= 0 <= max"
            )));
        }
        let count = |v: f64, key: &str| -> Result<usize, CliError> {
            let k = (v.abs() / self.step).round();
            if (k * self.step - v.abs()).abs() > 1e-9 * (1.0 + v.abs()) {
                return Err(CliError::Config(format!(
                    "family.lattice.{name}.{key} must be a multiple of the step"
                )));
            }
            Ok(k as usize)
        };
        Ok(AxisSpec {
            step: self.step,
            neg: count(self.min, "min")?,
            pos: count(self.max, "max")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub fixed_point: f64,
    pub shoot_tol: f64,
    pub max_newton: usize,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Largest accepted `|g_k^T I_j - delta_kj|` over the stored family.
    pub normalization: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            fixed_point: 1e-12,
            shoot_tol: 1e-10,
            max_newton: 25,
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 2_000_000,
            normalization: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimKind {
    Reduced,
    Full,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub kind: SimKind,
    pub t_span: [f64; 2],
    pub dt_out: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Oscillatory mode numbers kept as Floquet coordinates; defaults to the retention rule.
    pub retained_modes: Option<Vec<usize>>,
    /// Use the two-mode lattice model.
    pub two_mode: bool,
    /// Largest accepted distance when lifting a full state into reduced coordinates.
    pub lift_threshold: f64,
    /// Input direction `d` in `u(t) = s(t) d`; defaults to the first input channel.
    pub input_direction: Option<Vec<f64>>,
    pub input: InputConfig,
    pub init: InitConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            kind: SimKind::Reduced,
            t_span: [0.0, 10.0],
            dt_out: 0.05,
            rtol: 1e-9,
            atol: 1e-11,
            retained_modes: None,
            two_mode: false,
            lift_threshold: 0.5,
            input_direction: None,
            input: InputConfig::Zero,
            init: InitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputConfig {
    Zero,
    Sine {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    RampSine {
        rate: f64,
        period: f64,
    },
    Tabulated {
        time: Vec<f64>,
        value: Vec<f64>,
    },
}

impl InputConfig {
    pub fn profile(&self) -> Profile {
        match self.clone() {
            Self::Zero => Profile::Zero,
            Self::Sine { amplitude, omega, phase } => Profile::Sine { amplitude, omega, phase },
            Self::RampSine { rate, period } => Profile::RampSine { rate, period },
            Self::Tabulated { time, value } => Profile::Tabulated { time, value },
        }
    }
}

/// Initial condition: reduced coordinates (`theta`, `q`, `psi_re`, `psi_im`) or a full `state`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub label: Option<String>,
    pub theta: Option<f64>,
    pub q: Option<Vec<f64>>,
    pub psi_re: Option<Vec<f64>>,
    pub psi_im: Option<Vec<f64>>,
    pub state: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    /// State indices entering the error norm.
    pub observables: Vec<usize>,
    /// Cases to run; empty means the simulation initial condition.
    pub case: Vec<InitConfig>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            observables: vec![0],
            case: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub amplitudes: Vec<f64>,
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_step: f64,
    /// Weights of the observable whose peak-to-peak amplitude is reported.
    pub observable: Option<Vec<f64>>,
    pub transient_periods: usize,
    pub samples: usize,
    /// Amplitude parameter of the reduced model's starting point in every cell.
    pub reduced_start_q: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            amplitudes: vec![0.1],
            omega_min: 1.0,
            omega_max: 2.0,
            omega_step: 0.1,
            observable: None,
            transient_periods: 20,
            samples: 512,
            reduced_start_q: 0.01,
        }
    }
}

impl SweepConfig {
    pub fn omegas(&self) -> Result<Vec<f64>, CliError> {
        if !(self.omega_step > 0.0) || !(self.omega_max >= self.omega_min) || !(self.omega_min > 0.0) {
            return Err(CliError::Config(
                "sweep: need 0 < omega_min <= omega_max and omega_step > 0".into(),
            ));
        }
        let n = ((self.omega_max - self.omega_min) / self.omega_step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.omega_min + k as f64 * self.omega_step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Family artifact file name inside `dir`.
    pub family: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            family: "family.json".into(),
        }
    }
}

impl OutputConfig {
    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }
}

/// Loads `path` (if any), applies `key=value` overrides (TOML literals; bare words are taken
/// as strings) and validates the result.
pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
    let mut root = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for (key, value) in overrides {
        set_path(&mut root, key, parse_value(value))?;
    }
    let config: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(root)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::Config(inner.message().to_string())
        } else {
            CliError::Config(format!("{path}: {}", inner.message()))
        }
    })?;
    config.validate()?;
    Ok(config)
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed override key {key:?}")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(CliError::Config(format!("override {key:?}: {part} is not a table"))),
        };
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        let f = &self.family;
        if f.mode == 0 {
            return bad("family.mode counts from 1");
        }
        if !(f.q0 > 0.0 && f.delta_q > 0.0 && f.q_max >= f.q0) {
            return bad("family: need q0 > 0, delta_q > 0 and q_max >= q0");
        }
        if f.n_theta < 8 {
            return bad("family.n_theta must be at least 8");
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.fixed_point", t.fixed_point),
            ("tolerances.shoot_tol", t.shoot_tol),
            ("tolerances.rtol", t.rtol),
            ("tolerances.atol", t.atol),
            ("tolerances.normalization", t.normalization),
            ("simulation.rtol", self.simulation.rtol),
            ("simulation.atol", self.simulation.atol),
            ("simulation.dt_out", self.simulation.dt_out),
            ("simulation.lift_threshold", self.simulation.lift_threshold),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("{name} must be positive")));
            }
        }
        let [t0, t1] = self.simulation.t_span;
        if !(t1 > t0) {
            return bad("simulation.t_span must be increasing");
        }
        if let Some(l) = &f.lattice {
            if !(l.q1_max > l.q1_min) || l.q1_stride == 0 {
                return bad("family.lattice: need q1_max > q1_min and q1_stride >= 1");
            }
            l.q2.to_axis("q2")?;
            l.q3.to_axis("q3")?;
        }
        if self.sweep.samples < 16 {
            return bad("sweep.samples must be at least 16");
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let m = &self.model;
        let mut spec = ModelSpec::by_name(&m.name).map_err(|e| CliError::Config(format!("model.name: {e}")))?;
        let mismatch = |section: &str| {
            Err(CliError::Config(format!(
                "model.{section} does not apply to model {:?}",
                m.name
            )))
        };
        match &mut spec {
            ModelSpec::Pendulum(p) => {
                if m.planar.is_some() {
                    return mismatch("planar");
                }
                if m.power.is_some() {
                    return mismatch("power");
                }
                if let Some(o) = &m.pendulum {
                    apply_pendulum(p, o);
                }
            }
            ModelSpec::Planar(p) => {
                if m.pendulum.is_some() {
                    return mismatch("pendulum");
                }
                if m.power.is_some() {
                    return mismatch("power");
                }
                if let Some(o) = &m.planar {
                    apply_planar(p, o);
                }
            }
            ModelSpec::PowerSystem(p) => {
                if m.pendulum.is_some() {
                    return mismatch("pendulum");
                }
                if m.planar.is_some() {
                    return mismatch("planar");
                }
                if let Some(o) = &m.power {
                    apply_power(p, o);
                }
            }
        }
        Ok(spec)
    }

    /// Newton starting point for the fixed point.
    pub fn guess(&self, spec: &ModelSpec, dim: usize) -> Vec<f64> {
        if let Some(g) = &self.model.guess {
            return g.clone();
        }
        match spec {
            ModelSpec::PowerSystem(_) => vec![-0.3, -0.19, 0.0, 0.0, 0.0],
            _ => vec![0.0; dim],
        }
    }

    pub fn orbit_options(&self) -> OrbitOptions {
        OrbitOptions {
            n_theta: self.family.n_theta,
            shoot_tol: self.tolerances.shoot_tol,
            max_newton: self.tolerances.max_newton,
            integrator: Tolerances {
                rtol: self.tolerances.rtol,
                atol: self.tolerances.atol,
                max_steps: self.tolerances.max_steps,
            },
        }
    }

    /// Family options with `tracked` given as spectrum indices.
    pub fn family_options(&self, tracked: Vec<usize>) -> FamilyOptions {
        let f = &self.family;
        let mut opts = FamilyOptions {
            q0: f.q0,
            delta_q: f.delta_q,
            q_max: f.q_max,
            delta_omega: f.delta_omega,
            orbit: self.orbit_options(),
            tracked,
            min_delta_q: f.min_delta_q.unwrap_or(f.delta_q / 32.0),
            max_delta_q: f.max_delta_q.unwrap_or(f.delta_q),
            include_origin: f.include_origin,
            max_retunes: f.max_retunes,
            ..FamilyOptions::default()
        };
        if let Some(r) = f.retune_threshold {
            opts.retune_threshold = r;
        }
        opts
    }

    pub fn sim_tolerances(&self) -> Tolerances {
        Tolerances {
            rtol: self.simulation.rtol,
            atol: self.simulation.atol,
            max_steps: self.tolerances.max_steps,
        }
    }

    pub fn input_direction(&self, dim_input: usize) -> Result<Vec<f64>, CliError> {
        let d = match &self.simulation.input_direction {
            Some(d) => d.clone(),
            None => {
                let mut d = vec![0.0; dim_input];
                d[0] = 1.0;
                d
            }
        };
        if d.len() != dim_input {
            return Err(CliError::Config(format!(
                "simulation.input_direction has {} entries, the model has {dim_input} inputs",
                d.len()
            )));
        }
        Ok(d)
    }

    pub fn input_signal(&self, dim_input: usize) -> Result<InputSignal, CliError> {
        let direction = self.input_direction(dim_input)?;
        InputSignal::new(self.simulation.input.profile(), direction)
            .map_err(|e| CliError::Config(format!("simulation.input: {e}")))
    }

    /// Hex SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("configuration serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn apply_pendulum(p: &mut PendulumParams, o: &PendulumConfig) {
    if let Some(v) = o.mass {
        p.mass = v;
    }
    if let Some(v) = o.length {
        p.length = v;
    }
    if let Some(v) = o.damping {
        p.damping = v;
    }
    if let Some(v) = o.gravity {
        p.gravity = v;
    }
}

fn apply_planar(p: &mut PlanarPopulationParams, o: &PlanarConfig) {
    if let Some(v) = o.coupling {
        p.coupling = v;
    }
    if let Some(v) = o.sigma {
        p.sigma = v;
    }
    if let Some(v) = &o.mu {
        p.mu = v.clone();
    }
    if let Some(v) = &o.rho {
        p.rho = v.clone();
    }
}

fn apply_power(p: &mut PowerSystemParams, o: &PowerConfig) {
    if let Some(v) = &o.inertia {
        p.inertia = v.clone();
    }
    if let Some(v) = &o.damping {
        p.damping = v.clone();
    }
    if let Some(v) = &o.mechanical_power {
        p.mechanical_power = v.clone();
    }
    if let Some(v) = &o.voltage {
        p.voltage = v.clone();
    }
    if let Some(v) = &o.conductance {
        p.conductance = v.clone();
    }
    if let Some(v) = &o.susceptance {
        p.susceptance = v.clone();
    }
    if let Some(v) = o.omega0 {
        p.omega0 = v;
    }
}
