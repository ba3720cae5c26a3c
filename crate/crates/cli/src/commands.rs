//! Subcommand implementations.

use std::path::PathBuf;

use phamp_core::dynsys::{linearized_model, DynamicalSystem, ModelSpec};
use phamp_core::family::{
    assemble_lattice, backbone, build_family_with_mode, build_lattice_slice, LatticeOptions, OrbitFamily,
    Termination,
};
use phamp_core::reduce::{
    default_retained, lift_state, reconstruct_state, simulate_full, simulate_reduced, steady_state_amplitude,
    ReducedModel, ReducedState, ResponseModel, ResponseStart, SimulationTrace, SteadyStateOptions, TraceEnd,
};
use phamp_core::spectral::{find_fixed_point, oscillatory_mode, Spectrum};
use phamp_core::{Error, C64};
use rayon::prelude::*;

use crate::artifact::FamilyArtifact;
use crate::config::{InitConfig, RunConfig, SimKind};
use crate::csvout::{fmt_f64, Table};
use crate::error::CliError;
use crate::{ExportArgs, ExportWhat};

/// Effective configuration of one invocation.
pub struct Context {
    pub config: RunConfig,
    pub hash: String,
    pub command: &'static str,
    /// Family artifact to load instead of building.
    pub family_path: Option<PathBuf>,
}

impl Context {
    pub fn new(config: RunConfig, command: &'static str, family_path: Option<PathBuf>) -> Self {
        let hash = config.hash();
        Self {
            config,
            hash,
            command,
            family_path,
        }
    }

    fn write(&self, table: &Table, file: &str) -> Result<PathBuf, CliError> {
        let path = self.config.output.path(file);
        table.write(&path, &self.hash, self.command)?;
        Ok(path)
    }
}

/// Model, fixed point and spectrum shared by every command.
struct Setup {
    spec: ModelSpec,
    system: Box<dyn DynamicalSystem>,
    x_ss: Vec<f64>,
    spectrum: Spectrum,
}

fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let spec = cfg.model_spec()?;
    let system = spec.build()?;
    let guess = cfg.guess(&spec, system.dim_state());
    if guess.len() != system.dim_state() {
        return Err(CliError::Config(format!(
            "model.guess has {} entries, the model has {} states",
            guess.len(),
            system.dim_state()
        )));
    }
    let x_ss = find_fixed_point(system.as_ref(), &guess, cfg.tolerances.fixed_point)?;
    let spectrum = Spectrum::at_fixed_point(system.as_ref(), &x_ss)?;
    Ok(Setup {
        spec,
        system,
        x_ss,
        spectrum,
    })
}

/// Spectrum label of oscillatory mode number `k` (1-based).
fn mode_label(spectrum: &Spectrum, k: usize, key: &str) -> Result<usize, CliError> {
    let osc = spectrum.oscillatory_indices();
    k.checked_sub(1)
        .and_then(|i| osc.get(i).copied())
        .ok_or_else(|| CliError::Config(format!("{key}: no oscillatory mode number {k} ({} available)", osc.len())))
}

fn unit(dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    c[0] = 1.0;
    c
}

fn observable(weights: &Option<Vec<f64>>, dim: usize, key: &str) -> Result<Vec<f64>, CliError> {
    match weights {
        Some(w) if w.len() != dim => Err(CliError::Config(format!(
            "{key} has {} weights, the model has {dim} states",
            w.len()
        ))),
        Some(w) => Ok(w.clone()),
        None => Ok(unit(dim)),
    }
}

pub fn spectrum(ctx: &Context) -> Result<(), CliError> {
    let s = setup(&ctx.config)?;
    let osc = s.spectrum.oscillatory_indices();
    let mut table = Table::new(&["index", "re", "im", "mode"]);
    println!("{} fixed point {:?}", s.spec.name(), s.x_ss);
    for (k, l) in s.spectrum.values.iter().enumerate() {
        let mode = osc.iter().position(|&i| i == k).map(|m| (m + 1).to_string()).unwrap_or_default();
        println!("  {k}: {:+.6} {:+.6}i {}", l.re, l.im, if mode.is_empty() { String::new() } else { format!("(mode {mode})") });
        table.push(vec![k.to_string(), fmt_f64(l.re), fmt_f64(l.im), mode]);
    }
    let path = ctx.write(&table, "spectrum.csv")?;
    let mut fp = Table::new(&["index", "value"]);
    for (k, v) in s.x_ss.iter().enumerate() {
        fp.push(vec![k.to_string(), fmt_f64(*v)]);
    }
    ctx.write(&fp, "fixed_point.csv")?;
    println!("wrote {}", path.display());
    Ok(())
}

/// A family build and, when it stopped early, the reason.
struct Built {
    family: OrbitFamily,
    stop: Option<String>,
}

fn is_boundary(e: &Error) -> bool {
    matches!(e, Error::FamilyBoundary { .. } | Error::RetuneNeeded { .. } | Error::Degenerate { .. })
}

fn build(ctx: &Context, s: &Setup) -> Result<Built, CliError> {
    let cfg = &ctx.config;
    let f = &cfg.family;
    let primary = mode_label(&s.spectrum, f.mode, "family.mode")?;
    let mut tracked = match &f.tracked_modes {
        Some(ms) => ms
            .iter()
            .map(|&m| mode_label(&s.spectrum, m, "family.tracked_modes"))
            .collect::<Result<Vec<_>, _>>()?,
        None => default_retained(&s.spectrum.values, primary),
    };
    let second = match &f.lattice {
        Some(l) => {
            let label = mode_label(&s.spectrum, l.second_mode, "family.lattice.second_mode")?;
            if label == primary {
                return Err(CliError::Config("family.lattice.second_mode equals family.mode".into()));
            }
            if !tracked.contains(&label) {
                tracked.push(label);
            }
            Some(label)
        }
        None => None,
    };
    tracked.retain(|&l| l != primary);
    let mode = oscillatory_mode(&s.spectrum, primary, cfg.model.anchor_index)?;
    let opts = cfg.family_options(tracked);
    let sys = s.system.as_ref();
    let mut family = build_family_with_mode(sys, &s.x_ss, &s.spectrum, primary, mode, &opts)?;
    let mut stop = match &family.provenance.termination {
        Termination::Completed => None,
        Termination::Boundary { q, reason } => Some(format!("continuation stopped at q = {q}: {reason}")),
    };
    if let (Some(l), Some(second_label), None) = (&f.lattice, second, &stop) {
        let nodes: Vec<usize> = (0..family.line.len())
            .filter(|&k| {
                let q = family.line[k].q[0];
                q >= l.q1_min && q <= l.q1_max
            })
            .collect();
        let mut q1_nodes: Vec<usize> = nodes.iter().copied().filter(|k| k % l.q1_stride == 0).collect();
        if let Some(&last) = nodes.last() {
            if q1_nodes.last() != Some(&last) {
                q1_nodes.push(last);
            }
        }
        if q1_nodes.len() < 3 {
            return Err(CliError::Config(format!(
                "family.lattice selects {} q1 nodes, at least 3 are needed",
                q1_nodes.len()
            )));
        }
        let lopts = LatticeOptions {
            second_label,
            q1_nodes: q1_nodes.clone(),
            q2: l.q2.to_axis("q2")?,
            q3: l.q3.to_axis("q3")?,
            max_substeps: l.max_substeps,
        };
        let fam = &family;
        let sheets: Vec<_> = q1_nodes
            .par_iter()
            .map(|&k| build_lattice_slice(sys, fam, k, &lopts))
            .collect();
        let mut ok = Vec::with_capacity(sheets.len());
        for (k, sheet) in q1_nodes.iter().zip(sheets) {
            match sheet {
                Ok(sh) => ok.push(sh),
                Err(e) if is_boundary(&e) => {
                    stop = Some(format!("lattice sheet at q1 = {} left the family: {e}", family.line[*k].q[0]));
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        // sheets below the first failure still form a lattice over a shorter q1 range
        if ok.len() >= 3 {
            let lopts = LatticeOptions {
                q1_nodes: q1_nodes[..ok.len()].to_vec(),
                ..lopts
            };
            family = assemble_lattice(&family, ok, &lopts)?;
        }
    }
    let defect = family.normalization_defect();
    if !(defect <= cfg.tolerances.normalization) {
        return Err(CliError::Numerical(format!(
            "Floquet normalization defect {defect:e} exceeds tolerances.normalization = {:e}",
            cfg.tolerances.normalization
        )));
    }
    Ok(Built { family, stop })
}

/// Loads the artifact named on the command line or builds the family in memory.
fn obtain_family(ctx: &Context, s: &Setup) -> Result<OrbitFamily, CliError> {
    match &ctx.family_path {
        Some(path) => {
            let art = FamilyArtifact::load(path)?;
            if art.model_spec() != s.spec {
                return Err(CliError::Config(format!(
                    "{} was built for a different model than the configuration describes",
                    path.display()
                )));
            }
            art.family()
        }
        None => {
            let built = build(ctx, s)?;
            if let Some(reason) = &built.stop {
                let lattice = match &built.family.lattice {
                    Some(l) => format!(" and the lattice up to q1 = {}", l.q1[l.q1.len() - 1]),
                    None => String::new(),
                };
                eprintln!(
                    "warning: {reason}; using the family up to q = {}{lattice}",
                    built.family.q_terminal()
                );
            }
            Ok(built.family)
        }
    }
}

fn backbone_table(family: &OrbitFamily, obs: &[f64]) -> Result<Table, CliError> {
    let curve = backbone(family, obs)?;
    let labels: Vec<usize> = family
        .line
        .last()
        .map(|o| o.floquet.iter().map(|m| m.label).collect())
        .unwrap_or_default();
    let mut header: Vec<String> = vec!["q".into(), "omega_bar".into(), "amplitude".into()];
    header.extend(labels.iter().map(|l| format!("re_kappa_{l}")));
    let mut table = Table::new(&header);
    for k in 0..curve.q.len() {
        let mut row = vec![curve.q[k], curve.omega_bar[k], curve.amplitude[k]];
        row.extend(&curve.re_kappa[k]);
        table.push_numbers(&row);
    }
    Ok(table)
}

pub fn build_family(ctx: &Context) -> Result<(), CliError> {
    let s = setup(&ctx.config)?;
    let built = build(ctx, &s)?;
    let fam = &built.family;
    let partial = built.stop.is_some();
    let art = FamilyArtifact::new(&s.spec, fam, &ctx.hash, partial, built.stop.clone());
    let path = ctx.config.output.path(&ctx.config.output.family);
    art.save(&path)?;
    let obs = observable(&ctx.config.family.observable, fam.dim(), "family.observable")?;
    ctx.write(&backbone_table(fam, &obs)?, "backbone.csv")?;
    println!(
        "{}: {} line orbits, q in [0, {}], {} retunes, delta_omega {}",
        s.spec.name(),
        fam.line.len(),
        fam.q_terminal(),
        fam.provenance.retunes.len(),
        fam.provenance.delta_omega
    );
    if let Some(l) = &fam.lattice {
        println!("lattice {:?} ({} orbits)", l.shape(), l.orbits.len());
    }
    println!("wrote {}", path.display());
    match built.stop {
        Some(reason) => Err(CliError::Boundary(format!("{reason} (partial artifact written)"))),
        None => Ok(()),
    }
}

/// Retained spectrum labels for a one-mode model on `family`.
fn retained_labels(cfg: &RunConfig, s: &Setup, family: &OrbitFamily) -> Result<Vec<usize>, CliError> {
    match &cfg.simulation.retained_modes {
        Some(ms) => ms
            .iter()
            .map(|&m| mode_label(&s.spectrum, m, "simulation.retained_modes"))
            .collect(),
        None => {
            let tracked: Vec<usize> = family
                .line
                .last()
                .map(|o| o.floquet.iter().map(|m| m.label).collect())
                .unwrap_or_default();
            Ok(default_retained(&family.eigenvalues, family.primary_label)
                .into_iter()
                .filter(|l| tracked.contains(l))
                .collect())
        }
    }
}

fn reduced_state(init: &InitConfig, nq: usize, npsi: usize) -> Result<ReducedState, CliError> {
    let q = init.q.clone().unwrap_or_else(|| vec![0.0; nq]);
    if q.len() != nq {
        return Err(CliError::Config(format!("init.q has {} entries, the model has {nq}", q.len())));
    }
    let re = init.psi_re.clone().unwrap_or_else(|| vec![0.0; npsi]);
    let im = init.psi_im.clone().unwrap_or_else(|| vec![0.0; npsi]);
    if re.len() != npsi || im.len() != npsi {
        return Err(CliError::Config(format!("init.psi_re and init.psi_im need {npsi} entries")));
    }
    Ok(ReducedState {
        theta: init.theta.unwrap_or(0.0),
        q,
        psi: re.into_iter().zip(im).map(|(a, b)| C64::new(a, b)).collect(),
    })
}

fn check_state(x: &[f64], dim: usize) -> Result<(), CliError> {
    if x.len() != dim {
        return Err(CliError::Config(format!("init.state has {} entries, the model has {dim}", x.len())));
    }
    Ok(())
}

fn trace_table(trace: &SimulationTrace, nq: usize, npsi: usize, dim: usize, dim_input: usize) -> Table {
    let mut header: Vec<String> = vec!["t".into()];
    if !trace.reduced.is_empty() {
        header.push("theta".into());
        header.extend((1..=nq).map(|k| format!("q{k}")));
        for k in 0..npsi {
            header.push(format!("psi{k}_re"));
            header.push(format!("psi{k}_im"));
        }
    }
    header.extend((0..dim).map(|k| format!("x{k}")));
    header.extend((0..dim_input).map(|k| format!("u{k}")));
    let mut table = Table::new(&header);
    for k in 0..trace.t.len() {
        let mut row = vec![trace.t[k]];
        if let Some(r) = trace.reduced.get(k) {
            row.push(r.theta);
            row.extend(&r.q);
            for p in &r.psi {
                row.push(p.re);
                row.push(p.im);
            }
        }
        row.extend(&trace.states[k]);
        row.extend(&trace.inputs[k]);
        table.push_numbers(&row);
    }
    table.footer("termination", trace.termination.as_str());
    if let Some(t) = trace.t.last() {
        table.footer("t_final", &fmt_f64(*t));
    }
    table
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let s = setup(cfg)?;
    let sys = s.system.as_ref();
    let sim = &cfg.simulation;
    let input = cfg.input_signal(sys.dim_input())?;
    let tol = cfg.sim_tolerances();
    let span = (sim.t_span[0], sim.t_span[1]);
    let init = &sim.init;
    let needs_family = sim.kind == SimKind::Reduced || (init.state.is_none() && init.q.is_some());
    let family = if needs_family { Some(obtain_family(ctx, &s)?) } else { None };
    let model = match &family {
        Some(f) if sim.two_mode => Some(ReducedModel::two_mode(sys, f)?),
        Some(f) => Some(ReducedModel::new(sys, f, &retained_labels(cfg, &s, f)?)?),
        None => None,
    };
    let (trace, nq, npsi) = match sim.kind {
        SimKind::Reduced => {
            let (m, f) = (model.as_ref().expect("family built"), family.as_ref().expect("family built"));
            let npsi = m.retained_labels().len();
            let start = match &init.state {
                Some(x) => {
                    check_state(x, sys.dim_state())?;
                    lift_state(m, f, x, sim.lift_threshold)?
                }
                None => reduced_state(init, m.amplitude_count(), npsi)?,
            };
            (simulate_reduced(m, &input, &start, span, sim.dt_out, &tol)?, m.amplitude_count(), npsi)
        }
        SimKind::Full | SimKind::Linear => {
            let x0 = match (&init.state, &model) {
                (Some(x), _) => {
                    check_state(x, sys.dim_state())?;
                    x.clone()
                }
                (None, Some(m)) => {
                    let st = reduced_state(init, m.amplitude_count(), m.retained_labels().len())?;
                    reconstruct_state(m, &st)?
                }
                (None, None) => s.x_ss.clone(),
            };
            let trace = if sim.kind == SimKind::Full {
                simulate_full(sys, &input, &x0, span, sim.dt_out, &tol)?
            } else {
                let lin = linearized_model(sys, &s.x_ss)?;
                simulate_full(&lin, &input, &x0, span, sim.dt_out, &tol)?
            };
            (trace, 0, 0)
        }
    };
    let path = ctx.write(&trace_table(&trace, nq, npsi, sys.dim_state(), sys.dim_input()), "trace.csv")?;
    println!(
        "{} samples to t = {}, {}; wrote {}",
        trace.t.len(),
        trace.t.last().copied().unwrap_or(span.0),
        trace.termination.as_str(),
        path.display()
    );
    if trace.termination == TraceEnd::Singularity {
        return Err(CliError::Numerical(format!(
            "reduced coupling became singular at t = {}",
            trace.t.last().copied().unwrap_or(span.0)
        )));
    }
    Ok(())
}

/// Observable error `|x_model - x_full|` over the compared state indices at each common sample.
fn error_series(model: &SimulationTrace, full: &SimulationTrace, obs: &[usize]) -> Vec<f64> {
    let n = model.t.len().min(full.t.len());
    (0..n)
        .map(|k| {
            obs.iter()
                .map(|&i| (model.states[k][i] - full.states[k][i]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

struct ModelRun {
    name: &'static str,
    result: Result<SimulationTrace, String>,
}

struct CaseRun {
    label: String,
    full: SimulationTrace,
    models: Vec<ModelRun>,
}

pub fn compare(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let s = setup(cfg)?;
    let sys = s.system.as_ref();
    let sim = &cfg.simulation;
    let obs = &cfg.compare.observables;
    if obs.is_empty() || obs.iter().any(|&i| i >= sys.dim_state()) {
        return Err(CliError::Config(format!(
            "compare.observables must name state indices below {}",
            sys.dim_state()
        )));
    }
    let input = cfg.input_signal(sys.dim_input())?;
    let tol = cfg.sim_tolerances();
    let span = (sim.t_span[0], sim.t_span[1]);
    let family = obtain_family(ctx, &s)?;
    let one = ReducedModel::new(sys, &family, &retained_labels(cfg, &s, &family)?)?;
    let two = match &family.lattice {
        Some(_) => Some(ReducedModel::two_mode(sys, &family)?),
        None => None,
    };
    let lin = linearized_model(sys, &s.x_ss)?;
    let cases: Vec<InitConfig> = if cfg.compare.case.is_empty() {
        vec![sim.init.clone()]
    } else {
        cfg.compare.case.clone()
    };
    let thr = sim.lift_threshold;
    let runs: Vec<Result<CaseRun, CliError>> = cases
        .par_iter()
        .enumerate()
        .map(|(k, case)| {
            let label = case.label.clone().unwrap_or_else(|| format!("case{k}"));
            let nq = case.q.as_ref().map(|q| q.len()).unwrap_or(1);
            // starting states: full x0 plus the reduced state of each reduced model
            let (x0, one_start, two_start) = match (&case.state, nq, &two) {
                (Some(x), _, _) => {
                    check_state(x, sys.dim_state())?;
                    (x.clone(), None, None)
                }
                (None, 3, Some(t)) => {
                    let st = reduced_state(case, 3, t.retained_labels().len())?;
                    (reconstruct_state(t, &st)?, None, Some(st))
                }
                (None, 3, None) => {
                    return Err(CliError::Config(format!(
                        "case {label:?} gives three amplitudes but the family has no lattice"
                    )))
                }
                (None, _, _) => {
                    let st = reduced_state(case, 1, one.retained_labels().len())?;
                    (reconstruct_state(&one, &st)?, Some(st), None)
                }
            };
            let full = simulate_full(sys, &input, &x0, span, sim.dt_out, &tol)?;
            let reduced = |m: &ReducedModel<'_>, start: Option<ReducedState>| -> Result<SimulationTrace, String> {
                let st = match start {
                    Some(st) => st,
                    None => lift_state(m, &family, &x0, thr).map_err(|e| e.to_string())?,
                };
                simulate_reduced(m, &input, &st, span, sim.dt_out, &tol).map_err(|e| e.to_string())
            };
            let mut models = Vec::new();
            if let Some(t) = &two {
                models.push(ModelRun {
                    name: "two-mode",
                    result: reduced(t, two_start),
                });
            }
            models.push(ModelRun {
                name: "one-mode",
                result: reduced(&one, one_start),
            });
            models.push(ModelRun {
                name: "linear",
                result: simulate_full(&lin, &input, &x0, span, sim.dt_out, &tol).map_err(|e| e.to_string()),
            });
            Ok(CaseRun { label, full, models })
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;

    let names: Vec<&str> = runs[0].models.iter().map(|m| m.name).collect();
    let mut header: Vec<String> = vec!["case".into(), "t".into()];
    header.extend(names.iter().map(|n| format!("error_{n}")));
    let mut series = Table::new(&header);
    let mut summary = Table::new(&["case", "model", "rms_error", "max_error", "termination", "t_final"]);
    for run in &runs {
        let errs: Vec<Option<Vec<f64>>> = run
            .models
            .iter()
            .map(|m| m.result.as_ref().ok().map(|tr| error_series(tr, &run.full, obs)))
            .collect();
        for (k, t) in run.full.t.iter().enumerate() {
            let mut row = vec![run.label.clone(), fmt_f64(*t)];
            row.extend(errs.iter().map(|e| {
                e.as_ref()
                    .and_then(|e| e.get(k))
                    .map(|v| fmt_f64(*v))
                    .unwrap_or_default()
            }));
            series.push(row);
        }
        for (m, e) in run.models.iter().zip(&errs) {
            let (rms, max, term, tf) = match (&m.result, e) {
                (Ok(tr), Some(e)) => {
                    let rms = (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt();
                    let max = e.iter().copied().fold(0.0, f64::max);
                    let tf = tr.t.last().copied().unwrap_or(span.0);
                    (fmt_f64(rms), fmt_f64(max), tr.termination.as_str().to_string(), fmt_f64(tf))
                }
                (Err(msg), _) => (String::new(), String::new(), format!("failed: {msg}"), String::new()),
                _ => unreachable!("error series exists for every successful run"),
            };
            println!("{:>12} {:>9}: rms {:>12} max {:>12} {}", run.label, m.name, rms, max, term);
            summary.push(vec![run.label.clone(), m.name.to_string(), rms, max, term, tf]);
        }
    }
    ctx.write(&series, "compare.csv")?;
    let path = ctx.write(&summary, "compare_summary.csv")?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn amplitude_sweep(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let sw = &cfg.sweep;
    let s = setup(cfg)?;
    let sys = s.system.as_ref();
    let omegas = sw.omegas()?;
    if sw.amplitudes.is_empty() || sw.amplitudes.iter().any(|a| !(a.is_finite())) {
        return Err(CliError::Config("sweep.amplitudes must be a non-empty list of numbers".into()));
    }
    let obs = observable(&sw.observable, sys.dim_state(), "sweep.observable")?;
    let direction = cfg.input_direction(sys.dim_input())?;
    let family = obtain_family(ctx, &s)?;
    let model = ReducedModel::new(sys, &family, &retained_labels(cfg, &s, &family)?)?;
    let lin = linearized_model(sys, &s.x_ss)?;
    let opts = SteadyStateOptions {
        transient_periods: sw.transient_periods,
        samples: sw.samples,
        ..SteadyStateOptions::default()
    };
    let reduced_start = ResponseStart::Reduced(ReducedState {
        theta: 0.0,
        q: vec![sw.reduced_start_q],
        psi: vec![C64::new(0.0, 0.0); model.retained_labels().len()],
    });
    let full_start = ResponseStart::Full(s.x_ss.clone());
    let cells: Vec<(f64, f64)> = sw
        .amplitudes
        .iter()
        .flat_map(|&a| omegas.iter().map(move |&w| (a, w)))
        .collect();
    // every cell starts from rest, so cells are independent
    let results: Vec<[Result<f64, String>; 3]> = cells
        .par_iter()
        .map(|&(a, w)| {
            let amp = |m: ResponseModel<'_>, start: &ResponseStart| {
                steady_state_amplitude(m, a, w, &direction, &obs, start, &opts)
                    .map(|r| r.amplitude)
                    .map_err(|e| e.to_string())
            };
            [
                amp(ResponseModel::Full(sys), &full_start),
                amp(ResponseModel::Reduced(&model), &reduced_start),
                amp(ResponseModel::Full(&lin), &full_start),
            ]
        })
        .collect();
    let mut table = Table::new(&["omega_f", "a", "amplitude_full", "amplitude_reduced", "amplitude_linear"]);
    let mut full_failures = 0;
    for (&(a, w), r) in cells.iter().zip(&results) {
        for (name, v) in ["full", "reduced", "linear"].iter().zip(r) {
            if let Err(e) = v {
                eprintln!("warning: {name} response at a = {a}, omega_f = {w}: {e}");
            }
        }
        if r[0].is_err() {
            full_failures += 1;
        }
        let cell = |v: &Result<f64, String>| v.as_ref().map(|x| fmt_f64(*x)).unwrap_or_else(|_| "NaN".into());
        table.push(vec![fmt_f64(w), fmt_f64(a), cell(&r[0]), cell(&r[1]), cell(&r[2])]);
    }
    for &a in &sw.amplitudes {
        let peak = |j: usize| {
            cells
                .iter()
                .zip(&results)
                .filter(|((ca, _), _)| *ca == a)
                .filter_map(|((_, w), r)| r[j].as_ref().ok().map(|v| (*w, *v)))
                .fold((f64::NAN, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
        };
        let (pf, pr) = (peak(0), peak(1));
        println!("a = {a}: full peak {:.4} at {:.3}, reduced peak {:.4} at {:.3}", pf.1, pf.0, pr.1, pr.0);
    }
    let path = ctx.write(&table, "sweep.csv")?;
    println!("wrote {}", path.display());
    if full_failures > 0 {
        return Err(CliError::Numerical(format!("{full_failures} full-model sweep cells failed")));
    }
    Ok(())
}

fn orbit_rows(family: &OrbitFamily) -> Vec<(&'static str, usize, &phamp_core::periodic::ForcedOrbit)> {
    let mut rows: Vec<_> = family.line.iter().enumerate().map(|(k, o)| ("line", k, o)).collect();
    if let Some(l) = &family.lattice {
        rows.extend(l.orbits.iter().enumerate().map(|(k, o)| ("lattice", k, o)));
    }
    rows
}

pub fn export(args: &ExportArgs) -> Result<(), CliError> {
    let art = FamilyArtifact::load(&args.family)?;
    let family = art.family()?;
    let hash = art.provenance.config_sha256.clone();
    let write = |table: &Table, file: &str| -> Result<(), CliError> {
        let path = args.out.join(file);
        table.write(&path, &hash, "export")?;
        println!("wrote {}", path.display());
        Ok(())
    };
    let want = |w: ExportWhat| args.what == w || args.what == ExportWhat::All;
    let nq = family.line.first().map(|o| o.q.len()).unwrap_or(1);
    let q_cols = if family.lattice.is_some() { 3 } else { nq };
    let q_header = |h: &mut Vec<String>| h.extend((1..=q_cols).map(|k| format!("q{k}")));
    let q_values = |o: &phamp_core::periodic::ForcedOrbit| -> Vec<String> {
        (0..q_cols).map(|k| fmt_f64(o.q.get(k).copied().unwrap_or(0.0))).collect()
    };
    if want(ExportWhat::Orbits) {
        let mut h: Vec<String> = vec!["set".into(), "node".into()];
        q_header(&mut h);
        h.extend(["omega", "period", "shooting_residual", "normalization_defect"].map(String::from));
        let mut t = Table::new(&h);
        for (set, k, o) in orbit_rows(&family) {
            let mut row = vec![set.to_string(), k.to_string()];
            row.extend(q_values(o));
            row.extend(
                [o.omega, o.period, o.shooting_residual, phamp_core::family::orbit_normalization_defect(o)]
                    .map(fmt_f64),
            );
            t.push(row);
        }
        write(&t, "orbits.csv")?;
    }
    if want(ExportWhat::Floquet) {
        let mut h: Vec<String> = vec!["set".into(), "node".into()];
        q_header(&mut h);
        h.extend(
            ["label", "kappa_re", "kappa_im", "multiplier_re", "multiplier_im", "branch", "unwrapped_phase"]
                .map(String::from),
        );
        let mut t = Table::new(&h);
        for (set, k, o) in orbit_rows(&family) {
            for m in &o.floquet {
                let mut row = vec![set.to_string(), k.to_string()];
                row.extend(q_values(o));
                row.push(m.label.to_string());
                row.extend([m.kappa.re, m.kappa.im, m.multiplier.re, m.multiplier.im].map(fmt_f64));
                row.push(m.branch.to_string());
                row.push(fmt_f64(m.unwrapped_phase));
                t.push(row);
            }
        }
        write(&t, "floquet.csv")?;
    }
    if want(ExportWhat::Backbone) {
        let obs = observable(&args.observable, family.dim(), "--observable")?;
        write(&backbone_table(&family, &obs)?, "backbone.csv")?;
    }
    if want(ExportWhat::Samples) {
        let dim = family.dim();
        let mut h: Vec<String> = vec!["node".into(), "q".into(), "theta".into()];
        h.extend((0..dim).map(|k| format!("x{k}")));
        h.extend((0..dim).map(|k| format!("alpha{k}")));
        let mut t = Table::new(&h);
        for (k, o) in family.line.iter().enumerate() {
            for (j, th) in o.theta_grid().iter().enumerate() {
                let mut row = vec![k.to_string(), fmt_f64(o.q[0]), fmt_f64(*th)];
                row.extend(o.x_at(j).iter().chain(o.alpha_at(j)).map(|v| fmt_f64(*v)));
                t.push(row);
            }
        }
        write(&t, "samples.csv")?;
    }
    Ok(())
}
