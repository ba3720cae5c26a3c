//! `phamp` command-line front end: run configuration, family artifacts, CSV output and the
//! subcommands that drive the core library.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod csvout;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "phamp", version, about = "Adaptive phase-amplitude reduced models of forced oscillatory systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fixed point and ordered eigenvalues of the linearization.
    Spectrum(CommonArgs),
    /// Continue the family of forced periodic orbits (and the two-mode lattice when
    /// configured) and write the family artifact.
    BuildFamily {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        family: FamilyArgs,
    },
    /// Integrate one model from the configured initial condition.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        family: FamilyArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        kind: KindArgs,
    },
    /// Run the full, reduced and linearized models on every configured case and report the
    /// error of each against the full model.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        family: FamilyArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Steady-state response amplitude over a grid of forcing frequencies and amplitudes.
    AmplitudeSweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        family: FamilyArgs,
    },
    /// Write tables from a saved family artifact.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set family.q_max=2.5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Model name (`pendulum`, `planar10`, `ieee9bus`).
    #[arg(long)]
    pub model: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use this family artifact instead of building the family.
    #[arg(long)]
    pub family: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FamilyArgs {
    /// Oscillatory mode number of the primary mode.
    #[arg(long)]
    pub mode: Option<usize>,
    #[arg(long)]
    pub q0: Option<f64>,
    #[arg(long)]
    pub delta_q: Option<f64>,
    #[arg(long)]
    pub q_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta_omega: Option<f64>,
    #[arg(long)]
    pub n_theta: Option<usize>,
    #[arg(long)]
    pub shoot_tol: Option<f64>,
    /// Integrator relative tolerance used for orbits and Floquet data.
    #[arg(long)]
    pub rtol: Option<f64>,
    /// Integrator absolute tolerance used for orbits and Floquet data.
    #[arg(long)]
    pub atol: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub t_start: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt_out: Option<f64>,
    /// Use the two-mode lattice model.
    #[arg(long)]
    pub two_mode: bool,
}

#[derive(Debug, Clone, Default, Args)]
#[group(multiple = false)]
pub struct KindArgs {
    #[arg(long)]
    pub reduced: bool,
    #[arg(long)]
    pub full: bool,
    #[arg(long)]
    pub linear: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportWhat {
    Orbits,
    Floquet,
    Backbone,
    Samples,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    /// Family artifact to read.
    #[arg(long)]
    pub family: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ExportWhat::All)]
    pub what: ExportWhat,
    /// Backbone observable weights (comma separated); defaults to the first state component.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub observable: Option<Vec<f64>>,
}

fn float(v: f64) -> String {
    // Debug keeps a decimal point or exponent, so TOML reads the value as a float
    format!("{v:?}")
}

impl CommonArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        if let Some(m) = &self.model {
            out.push(("model.name".into(), format!("{m:?}")));
        }
        if let Some(d) = &self.out {
            out.push(("output.dir".into(), format!("{:?}", d.display().to_string())));
        }
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }
}

impl FamilyArgs {
    fn overrides(&self, out: &mut Vec<(String, String)>) {
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        put("family.mode", self.mode.map(|v| v.to_string()));
        put("family.q0", self.q0.map(float));
        put("family.delta_q", self.delta_q.map(float));
        put("family.q_max", self.q_max.map(float));
        put("family.delta_omega", self.delta_omega.map(float));
        put("family.n_theta", self.n_theta.map(|v| v.to_string()));
        put("tolerances.shoot_tol", self.shoot_tol.map(float));
        put("tolerances.rtol", self.rtol.map(float));
        put("tolerances.atol", self.atol.map(float));
    }
}

impl SimArgs {
    fn overrides(&self, out: &mut Vec<(String, String)>, base: Option<[f64; 2]>) {
        if self.t_start.is_some() || self.t_end.is_some() {
            let [t0, t1] = base.unwrap_or([0.0, 10.0]);
            let t0 = self.t_start.unwrap_or(t0);
            let t1 = self.t_end.unwrap_or(t1);
            out.push(("simulation.t_span".into(), format!("[{}, {}]", float(t0), float(t1))));
        }
        if let Some(dt) = self.dt_out {
            out.push(("simulation.dt_out".into(), float(dt)));
        }
        if self.two_mode {
            out.push(("simulation.two_mode".into(), "true".into()));
        }
    }
}

impl KindArgs {
    fn overrides(&self, out: &mut Vec<(String, String)>) {
        let kind = if self.reduced {
            Some("reduced")
        } else if self.full {
            Some("full")
        } else if self.linear {
            Some("linear")
        } else {
            None
        };
        if let Some(k) = kind {
            out.push(("simulation.kind".into(), format!("{k:?}")));
        }
    }
}

/// Loads the configuration with flag overrides applied after `--set` ones.
fn load(
    common: &CommonArgs,
    family: Option<&FamilyArgs>,
    sim: Option<&SimArgs>,
    kind: Option<&KindArgs>,
) -> Result<config::RunConfig, CliError> {
    let mut overrides = common.overrides()?;
    if let Some(f) = family {
        f.overrides(&mut overrides);
    }
    if let Some(k) = kind {
        k.overrides(&mut overrides);
    }
    if let Some(s) = sim {
        if s.t_start.is_some() || s.t_end.is_some() {
            // the unchanged end of the span comes from the configuration as written
            let base = config::load(common.config.as_deref(), &overrides)?.simulation.t_span;
            s.overrides(&mut overrides, Some(base));
        } else {
            s.overrides(&mut overrides, None);
        }
    }
    config::load(common.config.as_deref(), &overrides)
}

/// Runs one parsed invocation.
pub fn run(cli: Cli) -> Result<(), CliError> {
    use commands::Context;
    match cli.command {
        Command::Spectrum(common) => {
            let cfg = load(&common, None, None, None)?;
            commands::spectrum(&Context::new(cfg, "spectrum", common.family))
        }
        Command::BuildFamily { common, family } => {
            let cfg = load(&common, Some(&family), None, None)?;
            commands::build_family(&Context::new(cfg, "build-family", common.family))
        }
        Command::Simulate { common, family, sim, kind } => {
            let cfg = load(&common, Some(&family), Some(&sim), Some(&kind))?;
            commands::simulate(&Context::new(cfg, "simulate", common.family))
        }
        Command::Compare { common, family, sim } => {
            let cfg = load(&common, Some(&family), Some(&sim), None)?;
            commands::compare(&Context::new(cfg, "compare", common.family))
        }
        Command::AmplitudeSweep { common, family } => {
            let cfg = load(&common, Some(&family), None, None)?;
            commands::amplitude_sweep(&Context::new(cfg, "amplitude-sweep", common.family))
        }
        Command::Export(args) => commands::export(&args),
    }
}

/// Configures the global thread pool from `PHAMP_THREADS` (unset or empty means one thread
/// per core).
pub fn init_threads() -> Result<(), CliError> {
    let threads = match std::env::var("PHAMP_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("PHAMP_THREADS must be a positive integer, got {v:?}")))?,
        _ => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Numerical(format!("thread pool: {e}")))
}
