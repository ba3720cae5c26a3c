//! Versioned JSON family artifact.
//!
//! Scalars are JSON numbers (shortest round-trip form). Every array of floats is stored as
//! base64 of its little-endian IEEE-754 bytes, with complex arrays split into `_re` and `_im`
//! parts, so a load of a saved family reproduces every bit.

use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use nalgebra::DVector;
use phamp_core::dynsys::{ModelSpec, PendulumParams, PlanarPopulationParams, PowerSystemParams};
use phamp_core::family::{Lattice, OrbitFamily, Provenance, Retune, Termination};
use phamp_core::periodic::{FloquetMode, ForcedOrbit};
use phamp_core::spectral::SpectralMode;
use phamp_core::C64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

pub const FORMAT: &str = "phamp-family";
pub const VERSION: u32 = 1;

/// A float array packed as base64 little-endian bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct Packed(pub Vec<f64>);

impl Serialize for Packed {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut bytes = Vec::with_capacity(self.0.len() * 8);
        for v in &self.0 {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        s.serialize_str(&STANDARD.encode(bytes))
    }
}

impl<'de> Deserialize<'de> for Packed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = STANDARD.decode(text).map_err(serde::de::Error::custom)?;
        if bytes.len() % 8 != 0 {
            return Err(serde::de::Error::custom("packed array length is not a multiple of 8"));
        }
        Ok(Packed(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        ))
    }
}

fn split(z: &[C64]) -> (Packed, Packed) {
    (Packed(z.iter().map(|c| c.re).collect()), Packed(z.iter().map(|c| c.im).collect()))
}

fn join(re: Packed, im: Packed, what: &str) -> Result<Vec<C64>, CliError> {
    if re.0.len() != im.0.len() {
        return Err(CliError::Config(format!("artifact: {what} real and imaginary parts differ in length")));
    }
    Ok(re.0.into_iter().zip(im.0).map(|(a, b)| C64::new(a, b)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyArtifact {
    pub format: String,
    pub version: u32,
    pub provenance: ArtifactProvenance,
    pub model: ModelRecord,
    pub family: FamilyRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactProvenance {
    pub tool_version: String,
    pub config_sha256: String,
    /// Seconds since the Unix epoch, taken from `SOURCE_DATE_EPOCH` when set so that
    /// rebuilds stay byte-identical.
    pub created_unix: Option<u64>,
    /// True when continuation stopped before `q_max` or the lattice was not completed.
    pub partial: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelRecord {
    Pendulum {
        mass: f64,
        length: f64,
        damping: f64,
        gravity: f64,
    },
    Planar {
        coupling: f64,
        sigma: f64,
        mu: Vec<f64>,
        rho: Vec<f64>,
    },
    PowerSystem {
        inertia: Vec<f64>,
        damping: Vec<f64>,
        mechanical_power: Vec<f64>,
        voltage: Vec<f64>,
        conductance: Vec<f64>,
        susceptance: Vec<f64>,
        omega0: f64,
    },
}

impl From<&ModelSpec> for ModelRecord {
    fn from(spec: &ModelSpec) -> Self {
        match spec.clone() {
            ModelSpec::Pendulum(p) => Self::Pendulum {
                mass: p.mass,
                length: p.length,
                damping: p.damping,
                gravity: p.gravity,
            },
            ModelSpec::Planar(p) => Self::Planar {
                coupling: p.coupling,
                sigma: p.sigma,
                mu: p.mu,
                rho: p.rho,
            },
            ModelSpec::PowerSystem(p) => Self::PowerSystem {
                inertia: p.inertia,
                damping: p.damping,
                mechanical_power: p.mechanical_power,
                voltage: p.voltage,
                conductance: p.conductance,
                susceptance: p.susceptance,
                omega0: p.omega0,
            },
        }
    }
}

impl From<ModelRecord> for ModelSpec {
    fn from(r: ModelRecord) -> Self {
        match r {
            ModelRecord::Pendulum { mass, length, damping, gravity } => Self::Pendulum(PendulumParams {
                mass,
                length,
                damping,
                gravity,
            }),
            ModelRecord::Planar { coupling, sigma, mu, rho } => Self::Planar(PlanarPopulationParams {
                coupling,
                sigma,
                mu,
                rho,
            }),
            ModelRecord::PowerSystem {
                inertia,
                damping,
                mechanical_power,
                voltage,
                conductance,
                susceptance,
                omega0,
            } => Self::PowerSystem(PowerSystemParams {
                inertia,
                damping,
                mechanical_power,
                voltage,
                conductance,
                susceptance,
                omega0,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyRecord {
    pub fixed_point: Packed,
    pub eigenvalues_re: Packed,
    pub eigenvalues_im: Packed,
    pub mode: ModeRecord,
    pub primary_label: usize,
    pub line: Vec<OrbitRecord>,
    pub lattice: Option<LatticeRecord>,
    pub build: BuildRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeRecord {
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub v_re: Packed,
    pub v_im: Packed,
    pub w_re: Packed,
    pub w_im: Packed,
    pub anchor_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitRecord {
    pub q: Packed,
    pub omega: f64,
    pub period: f64,
    pub dim: usize,
    pub n_theta: usize,
    pub x_gamma: Packed,
    pub alpha: Packed,
    pub shooting_residual: f64,
    pub floquet: Vec<FloquetRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloquetRecord {
    pub label: usize,
    pub kappa_re: f64,
    pub kappa_im: f64,
    pub branch: i64,
    pub multiplier_re: f64,
    pub multiplier_im: f64,
    pub unwrapped_phase: f64,
    pub paired: bool,
    pub anchor_index: usize,
    pub g_re: Packed,
    pub g_im: Packed,
    pub i_re: Packed,
    pub i_im: Packed,
    pub e_re: Packed,
    pub e_im: Packed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeRecord {
    pub q1: Packed,
    pub q2: Packed,
    pub q3: Packed,
    pub second_label: usize,
    pub orbits: Vec<OrbitRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildRecord {
    pub q0: f64,
    pub delta_q: f64,
    pub delta_omega: f64,
    pub anchor_index: usize,
    pub n_theta: usize,
    pub shoot_tol: f64,
    pub rtol: f64,
    pub atol: f64,
    pub retunes: Vec<RetuneRecord>,
    pub termination: TerminationRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetuneRecord {
    pub q: f64,
    pub delta_omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TerminationRecord {
    Completed,
    Boundary { q: f64, reason: String },
}

fn orbit_record(o: &ForcedOrbit) -> OrbitRecord {
    OrbitRecord {
        q: Packed(o.q.clone()),
        omega: o.omega,
        period: o.period,
        dim: o.dim,
        n_theta: o.n_theta,
        x_gamma: Packed(o.x_gamma.clone()),
        alpha: Packed(o.alpha.clone()),
        shooting_residual: o.shooting_residual,
        floquet: o
            .floquet
            .iter()
            .map(|m| {
                let (g_re, g_im) = split(&m.g);
                let (i_re, i_im) = split(&m.i);
                let (e_re, e_im) = split(&m.e);
                FloquetRecord {
                    label: m.label,
                    kappa_re: m.kappa.re,
                    kappa_im: m.kappa.im,
                    branch: m.branch,
                    multiplier_re: m.multiplier.re,
                    multiplier_im: m.multiplier.im,
                    unwrapped_phase: m.unwrapped_phase,
                    paired: m.paired,
                    anchor_index: m.anchor_index,
                    g_re,
                    g_im,
                    i_re,
                    i_im,
                    e_re,
                    e_im,
                }
            })
            .collect(),
    }
}

fn orbit_from(r: OrbitRecord) -> Result<ForcedOrbit, CliError> {
    let expect = r.dim * r.n_theta;
    if r.x_gamma.0.len() != expect || r.alpha.0.len() != expect {
        return Err(CliError::Config("artifact: orbit sample arrays do not match dim x n_theta".into()));
    }
    let floquet = r
        .floquet
        .into_iter()
        .map(|m| {
            Ok(FloquetMode {
                label: m.label,
                kappa: C64::new(m.kappa_re, m.kappa_im),
                branch: m.branch,
                multiplier: C64::new(m.multiplier_re, m.multiplier_im),
                unwrapped_phase: m.unwrapped_phase,
                paired: m.paired,
                anchor_index: m.anchor_index,
                g: join(m.g_re, m.g_im, "g")?,
                i: join(m.i_re, m.i_im, "I")?,
                e: join(m.e_re, m.e_im, "E")?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(ForcedOrbit {
        q: r.q.0,
        omega: r.omega,
        period: r.period,
        dim: r.dim,
        n_theta: r.n_theta,
        x_gamma: r.x_gamma.0,
        alpha: r.alpha.0,
        floquet,
        shooting_residual: r.shooting_residual,
    })
}

impl FamilyRecord {
    pub fn from_family(f: &OrbitFamily) -> Self {
        let (eigenvalues_re, eigenvalues_im) = split(&f.eigenvalues);
        let (v_re, v_im) = split(f.mode.v.as_slice());
        let (w_re, w_im) = split(f.mode.w.as_slice());
        let p = &f.provenance;
        Self {
            fixed_point: Packed(f.fixed_point.clone()),
            eigenvalues_re,
            eigenvalues_im,
            mode: ModeRecord {
                lambda_re: f.mode.lambda.re,
                lambda_im: f.mode.lambda.im,
                v_re,
                v_im,
                w_re,
                w_im,
                anchor_index: f.mode.anchor_index,
            },
            primary_label: f.primary_label,
            line: f.line.iter().map(orbit_record).collect(),
            lattice: f.lattice.as_ref().map(|l| LatticeRecord {
                q1: Packed(l.q1.clone()),
                q2: Packed(l.q2.clone()),
                q3: Packed(l.q3.clone()),
                second_label: l.second_label,
                orbits: l.orbits.iter().map(orbit_record).collect(),
            }),
            build: BuildRecord {
                q0: p.q0,
                delta_q: p.delta_q,
                delta_omega: p.delta_omega,
                anchor_index: p.anchor_index,
                n_theta: p.n_theta,
                shoot_tol: p.shoot_tol,
                rtol: p.rtol,
                atol: p.atol,
                retunes: p
                    .retunes
                    .iter()
                    .map(|r| RetuneRecord {
                        q: r.q,
                        delta_omega: r.delta_omega,
                    })
                    .collect(),
                termination: match &p.termination {
                    Termination::Completed => TerminationRecord::Completed,
                    Termination::Boundary { q, reason } => TerminationRecord::Boundary {
                        q: *q,
                        reason: reason.clone(),
                    },
                },
            },
        }
    }

    pub fn into_family(self) -> Result<OrbitFamily, CliError> {
        let b = self.build;
        let lattice = match self.lattice {
            Some(l) => {
                let orbits = l.orbits.into_iter().map(orbit_from).collect::<Result<Vec<_>, _>>()?;
                if orbits.len() != l.q1.0.len() * l.q2.0.len() * l.q3.0.len() {
                    return Err(CliError::Config("artifact: lattice orbit count does not match its axes".into()));
                }
                Some(Lattice {
                    q1: l.q1.0,
                    q2: l.q2.0,
                    q3: l.q3.0,
                    orbits,
                    second_label: l.second_label,
                })
            }
            None => None,
        };
        Ok(OrbitFamily {
            fixed_point: self.fixed_point.0,
            eigenvalues: join(self.eigenvalues_re, self.eigenvalues_im, "eigenvalues")?,
            mode: SpectralMode {
                lambda: C64::new(self.mode.lambda_re, self.mode.lambda_im),
                v: DVector::from_vec(join(self.mode.v_re, self.mode.v_im, "v")?),
                w: DVector::from_vec(join(self.mode.w_re, self.mode.w_im, "w")?),
                anchor_index: self.mode.anchor_index,
            },
            primary_label: self.primary_label,
            line: self.line.into_iter().map(orbit_from).collect::<Result<Vec<_>, _>>()?,
            lattice,
            provenance: Provenance {
                q0: b.q0,
                delta_q: b.delta_q,
                delta_omega: b.delta_omega,
                anchor_index: b.anchor_index,
                n_theta: b.n_theta,
                shoot_tol: b.shoot_tol,
                rtol: b.rtol,
                atol: b.atol,
                retunes: b
                    .retunes
                    .into_iter()
                    .map(|r| Retune {
                        q: r.q,
                        delta_omega: r.delta_omega,
                    })
                    .collect(),
                termination: match b.termination {
                    TerminationRecord::Completed => Termination::Completed,
                    TerminationRecord::Boundary { q, reason } => Termination::Boundary { q, reason },
                },
            },
        })
    }
}

impl FamilyArtifact {
    pub fn new(spec: &ModelSpec, family: &OrbitFamily, config_sha256: &str, partial: bool, note: Option<String>) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            provenance: ArtifactProvenance {
                tool_version: env!("CARGO_PKG_VERSION").into(),
                config_sha256: config_sha256.into(),
                created_unix: std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()),
                partial,
                note,
            },
            model: ModelRecord::from(spec),
            family: FamilyRecord::from_family(family),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut out = serde_json::to_vec_pretty(self)
            .map_err(|e| CliError::Numerical(format!("artifact serialization: {e}")))?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header = serde_json::from_slice(bytes)
            .map_err(|e| CliError::Config(format!("family artifact is not readable: {e}")))?;
        if header.format != FORMAT {
            return Err(CliError::Config(format!(
                "file format {:?} is not a family artifact ({FORMAT:?})",
                header.format
            )));
        }
        if header.version != VERSION {
            return Err(CliError::Config(format!(
                "family artifact version {} is not supported (this build reads version {VERSION})",
                header.version
            )));
        }
        serde_json::from_slice(bytes).map_err(|e| CliError::Config(format!("family artifact: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io("creating output directory", e))?;
        }
        let bytes = self.to_bytes()?;
        let mut file = std::fs::File::create(path).map_err(|e| CliError::io("creating artifact", e))?;
        file.write_all(&bytes).map_err(|e| CliError::io("writing artifact", e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Config(format!("cannot read family artifact {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn family(&self) -> Result<OrbitFamily, CliError> {
        self.family.clone().into_family()
    }

    pub fn model_spec(&self) -> ModelSpec {
        self.model.clone().into()
    }
}
