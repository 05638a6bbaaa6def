//! Command implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use oscillant::analysis::Analysis;
use oscillant::catalog::{self, BrillouinScaling};
use oscillant::flow::{self, InteractionMatrix};
use oscillant::fourier::PeriodicGrid;
use oscillant::interaction::{polarization_vectors, stability_report, Coupling, PolarizationVectors, StabilityInputs, StabilityReport, Verdict};
use oscillant::io::{self, num, Snapshot};
use oscillant::linalg::c;
use oscillant::resonance::{analyze_resonances, Boundedness, Window};
use oscillant::simulator::{self, Perturbation, SimConfig, SimulationRun};
use oscillant::wkb::{self, Amplitude, WkbSolution};
use oscillant::{Error, NumericPolicy, Result};

use crate::system::{Loaded, SystemArgs};

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// The verdict is undetermined or degenerate (exit code 4 under `--strict`).
    Undetermined,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
    Csv,
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| Error::Io(e.to_string()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    io::write_atomic(path, text.as_bytes())
}

/// Amplitude and exponent data shared by the analysis commands.
#[derive(Args, Debug, Clone)]
pub struct IndexArgs {
    /// Perturbation exponent
    #[arg(long = "K", default_value_t = 3.0)]
    pub k_exp: f64,
    /// Order of the WKB reference
    #[arg(long = "Ka", default_value_t = 3.0)]
    pub k_a: f64,
    /// Sup norm of the leading amplitude
    #[arg(long, default_value_t = 1.0)]
    pub a_sup: f64,
    /// L1 norm of the amplitude's Fourier transform (defaults to --a-sup)
    #[arg(long)]
    pub a_hat_l1: Option<f64>,
    /// Resonance search window, same on every axis
    #[arg(long, value_name = "LO,HI", value_delimiter = ',', allow_hyphen_values = true)]
    pub window: Option<Vec<f64>>,
    /// Scan points per axis of the window
    #[arg(long)]
    pub points: Option<usize>,
}

impl IndexArgs {
    fn inputs(&self, d: usize) -> StabilityInputs {
        StabilityInputs::new(self.k_exp, self.k_a, self.a_sup, self.a_hat_l1.unwrap_or(self.a_sup), d)
    }

    fn window(&self, sys: &Loaded) -> Result<Window> {
        let mut w = Window::around(&sys.phase);
        if let Some(v) = &self.window {
            if v.len() != 2 || !(v[0] < v[1]) {
                return Err(Error::Input("--window takes lo,hi with lo < hi".into()));
            }
            w = if sys.spec.d == 1 { Window::interval(v[0], v[1], w.points) } else { Window::square(v[0], v[1], w.points) };
        }
        if let Some(p) = self.points {
            if p < 3 {
                return Err(Error::Input("--points must be at least 3".into()));
            }
            w.points = p;
        }
        Ok(w)
    }

    fn analysis(&self, sys: &Loaded) -> Result<Analysis> {
        Analysis::run(sys.spec.clone(), sys.phase.clone(), sys.polarization.as_ref(), Some(self.window(sys)?), NumericPolicy::default())
    }
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub index: IndexArgs,
    /// Resonance neighborhood size for the growth rate gamma+
    #[arg(long, default_value_t = 0.1)]
    pub h: f64,
    /// Output directory for the report files
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

pub fn analyze(a: &AnalyzeArgs) -> Result<Outcome> {
    let sys = a.system.load()?;
    let window = a.index.window(&sys)?;
    let (field, resonance) = analyze_resonances(&sys.spec, &sys.phase, &window, NumericPolicy::default())?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io(format!("{}: {e}", a.out.display())))?;
    let (ext, res_text) = match a.format {
        Format::Json => ("json", to_json(&resonance)?),
        _ => ("txt", io::resonance_text(&resonance)),
    };
    write(&a.out.join(format!("resonance.{ext}")), &res_text)?;
    println!("system = {}", sys.label);
    println!("boundedness = {}", resonance.verdict.as_str());
    let mut outcome = if resonance.verdict == Boundedness::Undetermined { Outcome::Undetermined } else { Outcome::Done };
    let pol = match &sys.polarization {
        Some(e) => PolarizationVectors::supplied(&sys.spec, &sys.phase, e),
        None => polarization_vectors(&sys.spec, &sys.phase),
    };
    let pol = match pol {
        Ok(p) => p,
        Err(Error::Multiplicity { dim: 0 }) => {
            return Err(Error::Input(format!("(omega, k) = ({}, {:?}) is not characteristic for this system", sys.phase.omega, sys.phase.k)));
        }
        Err(Error::Multiplicity { dim }) => {
            println!("verdict = undetermined");
            eprintln!("note: the polarization kernel has dimension {dim}; the stability index needs a simple one");
            return Ok(Outcome::Undetermined);
        }
        Err(e) => return Err(e),
    };
    let coupling = Coupling::new(&field, &sys.phase, &pol);
    let report = stability_report(&coupling, &resonance, a.index.inputs(sys.spec.d))?;
    let gamma_plus = match report.main_pair {
        Some(pair) => Some(flow::gamma_plus(&coupling, pair, &resonance.roots(pair.0, pair.1), a.h, a.index.a_sup)?),
        None => None,
    };
    let text = match a.format {
        Format::Json => to_json(&serde_json::json!({ "report": &report, "gamma_plus": gamma_plus, "h": a.h }))?,
        _ => {
            let mut t = io::stability_text(&report);
            let _ = writeln!(t, "gamma_plus = {}", gamma_plus.map(num).unwrap_or_else(|| "none".into()));
            let _ = writeln!(t, "h = {}", num(a.h));
            t
        }
    };
    write(&a.out.join(format!("stability.{ext}")), &text)?;
    println!("verdict = {}", report.verdict.as_str());
    println!("Gamma_index = {}", num(report.gamma_index));
    println!("gamma = {}", num(report.gamma));
    if let Some((i, j)) = report.main_pair {
        println!("main_pair = ({i}, {j})");
    }
    if report.verdict == Verdict::Degenerate {
        outcome = Outcome::Undetermined;
    }
    Ok(outcome)
}

#[derive(Args, Debug)]
pub struct FlowArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub index: IndexArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4])]
    pub epsilons: Vec<f64>,
    /// Horizon factor: trajectories run for t <= T |ln eps|
    #[arg(long = "T", default_value_t = 2.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub h: f64,
    /// Amplitude values |g| at which the coefficients are frozen
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 1.0])]
    pub amplitudes: Vec<f64>,
    /// Bound report path
    #[arg(long, default_value = "flow_bound.txt")]
    pub out: PathBuf,
    /// Optional CSV of the trajectory at the main root, first epsilon, largest amplitude
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

fn main_pair(report: &StabilityReport) -> Result<(usize, usize)> {
    report.main_pair.ok_or_else(|| Error::Precondition("no resonant pair with nonzero interaction coefficients".into()))
}

fn check_epsilons(eps: &[f64]) -> Result<()> {
    if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::Input("epsilons must lie in (0, 1)".into()));
    }
    Ok(())
}

pub fn flow(a: &FlowArgs) -> Result<Outcome> {
    check_epsilons(&a.epsilons)?;
    let sys = a.system.load()?;
    let analysis = a.index.analysis(&sys)?;
    let report = analysis.stability(a.index.inputs(sys.spec.d))?;
    let pair = main_pair(&report)?;
    let cp = analysis.coupling();
    let roots = analysis.resonance.roots(pair.0, pair.1);
    let gp = flow::gamma_plus(&cp, pair, &roots, a.h, a.index.a_sup)?;
    let samples = flow::resonance_samples(&cp, pair, &roots, a.h, &a.amplitudes, 9)?;
    let bound = flow::verify_growth_bound(&samples, gp, a.horizon, &a.epsilons)?;
    let mut away = Vec::new();
    for &eps in &a.epsilons {
        let s = flow::away_samples(&cp, pair, &roots, eps, &a.amplitudes)?;
        away.push(if s.is_empty() { None } else { Some(flow::sup_propagator_norm(&s, eps, a.horizon)?) });
    }
    let text = match a.format {
        Format::Json => to_json(&serde_json::json!({ "bound": &bound, "away_sup": &away, "pair": pair }))?,
        _ => {
            let mut t = io::growth_bound_text(&bound);
            let _ = writeln!(t, "pair = ({}, {})", pair.0, pair.1);
            let _ = writeln!(t, "away_sup = [{}]", away.iter().map(|v| v.map(num).unwrap_or_else(|| "none".into())).collect::<Vec<_>>().join(", "));
            t
        }
    };
    write(&a.out, &text)?;
    if let Some(path) = &a.trajectory {
        let xi0 = report.xi0.clone().ok_or_else(|| Error::Precondition("no maximizing root".into()))?;
        let amp = a.amplitudes.iter().copied().fold(0.0, f64::max);
        let m = InteractionMatrix::from_coupling(&cp, pair, &xi0, a.epsilons[0], c(amp), 1.0)?;
        let t_end = a.horizon * a.epsilons[0].ln().abs();
        let traj = flow::integrate_flow(&m, 0.0, t_end, flow::suggested_step(&m).min(t_end / 200.0))?;
        write(path, &traj.to_csv())?;
    }
    println!("pass = {}", bound.pass);
    println!("N_star = {}", num(bound.n_star));
    println!("gamma_plus = {}", num(gp));
    Ok(Outcome::Done)
}

#[derive(Args, Debug, Clone)]
pub struct SimArgs {
    #[arg(long = "Kprime", default_value_t = 0.5)]
    pub k_prime: f64,
    /// Final time; defaults to min(T0, T) sqrt(eps) |ln eps|
    #[arg(long)]
    pub tend: Option<f64>,
    /// User time bound entering the default final time
    #[arg(long = "T")]
    pub t_user: Option<f64>,
    /// Grid points (power of two)
    #[arg(long = "grid-points", default_value_t = 4096)]
    pub grid_points: usize,
    /// Gaussian amplitude width; the domain is 40 widths long
    #[arg(long, default_value_t = 4.0)]
    pub width: f64,
    /// Resonant frequency offset of the perturbation (defaults to the maximizing root)
    #[arg(long, allow_hyphen_values = true)]
    pub xi0: Option<f64>,
    /// Stop once the deviation on the observation ball reaches eps^Kprime
    #[arg(long)]
    pub stop_at_star: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Everything needed to build a simulation at any `eps`.
struct Experiment {
    sys: Loaded,
    pol: PolarizationVectors,
    xi0: f64,
    direction: oscillant::linalg::CVec,
    t0: f64,
}

impl Experiment {
    fn prepare(sys: Loaded, index: &IndexArgs, sim: &SimArgs) -> Result<Self> {
        if sys.spec.d != 1 {
            return Err(Error::NotApplicable("simulation is one-dimensional".into()));
        }
        let analysis = index.analysis(&sys)?;
        let report = analysis.stability(index.inputs(1))?;
        let pair = main_pair(&report)?;
        let xi0 = match sim.xi0 {
            Some(x) => x,
            None => report.xi0.as_ref().map(|x| x[0]).ok_or_else(|| Error::Precondition("no maximizing root".into()))?,
        };
        let direction = flow::unstable_datum_direction(&analysis.coupling().sample(pair.0, pair.1, &[xi0])?)?;
        Ok(Experiment { pol: analysis.polarization.clone(), sys, xi0, direction, t0: report.t0 })
    }

    fn build(&self, eps: f64, index: &IndexArgs, sim: &SimArgs) -> Result<(WkbSolution, SimConfig)> {
        let t_end = match sim.tend {
            Some(t) => t,
            None => {
                let horizon = simulator::instability_horizon(self.t0, sim.t_user.unwrap_or(f64::INFINITY), eps);
                if !horizon.is_finite() {
                    return Err(Error::Input("T0 is infinite for this system; pass --tend or --T".into()));
                }
                horizon
            }
        };
        let mut cfg = SimConfig::new(eps, sim.grid_points, sim.width, t_end);
        cfg.k_exp = index.k_exp;
        cfg.k_prime = sim.k_prime;
        cfg.seed = sim.seed;
        cfg.stop_at_star = sim.stop_at_star;
        let center = 0.5 * cfg.domain_length;
        cfg.amplitude = Amplitude::Gaussian { center, width: sim.width, height: index.a_sup };
        cfg.perturbation = Perturbation::Resonant { xi0: self.xi0, direction: self.direction.clone(), center, radius: 2.0 * sim.width };
        if !cfg.grid_points.is_power_of_two() {
            return Err(Error::Input(format!("--grid-points {} is not a power of two", cfg.grid_points)));
        }
        let grid = PeriodicGrid::new(cfg.domain_length, cfg.grid_points)?;
        let g0 = cfg.amplitude.sample(&grid)?;
        let sol = wkb::solve_transport(&self.sys.spec, &self.sys.phase, &self.pol, &g0, grid, 0.0, 2)?;
        Ok((sol, cfg))
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub index: IndexArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long)]
    pub epsilon: f64,
    /// Time-series output path
    #[arg(long, default_value = "run.csv")]
    pub out: PathBuf,
    /// Optional binary dump of the final perturbed state
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

fn print_run(run: &SimulationRun) {
    println!("verdict = {}", run.verdict.as_str());
    println!("fitted_rate = {}", run.fitted_rate.map(num).unwrap_or_else(|| "none".into()));
    println!("t_star = {}", run.t_star.map(num).unwrap_or_else(|| "none".into()));
    println!("amplification = {}", num(run.amplification()));
    println!("steps = {}", run.steps);
}

pub fn simulate(a: &SimulateArgs) -> Result<Outcome> {
    check_epsilons(&[a.epsilon])?;
    let exp = Experiment::prepare(a.system.load()?, &a.index, &a.sim)?;
    let (sol, cfg) = exp.build(a.epsilon, &a.index, &a.sim)?;
    let run = simulator::run_instability_experiment(&exp.sys.spec, &sol, &cfg)?;
    let body = match a.format {
        Format::Json => to_json(&run)?,
        _ => run.to_csv(),
    };
    write(&a.out, &body)?;
    if let Some(path) = &a.snapshot {
        let snap = Snapshot {
            n: exp.sys.spec.n,
            grid_points: cfg.grid_points,
            epsilon: a.epsilon,
            t: *run.times.last().expect("recorded"),
            state: run.final_state.clone(),
        };
        io::write_atomic(path, &snap.to_bytes())?;
    }
    print_run(&run);
    Ok(Outcome::Done)
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub index: IndexArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4])]
    pub epsilons: Vec<f64>,
    /// Scaling report path
    #[arg(long, default_value = "scaling.txt")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

pub fn sweep(a: &SweepArgs) -> Result<Outcome> {
    check_epsilons(&a.epsilons)?;
    let exp = Experiment::prepare(a.system.load()?, &a.index, &a.sim)?;
    let build = |eps: f64| exp.build(eps, &a.index, &a.sim);
    let (report, runs) = simulator::epsilon_sweep(&exp.sys.spec, &a.epsilons, &build)?;
    let brillouin = match exp.sys.catalog_id.as_deref() {
        Some("brillouin") => {
            let p = |k: &str| exp.sys.spec.param(k).unwrap_or(0.0);
            let bs = BrillouinScaling::new([p("c1"), p("c2"), p("c3")], [p("b1"), p("b2"), p("b3")])?;
            Some(runs.iter().map(|r| r.t_star.map(|t| bs.time(r.epsilon, t))).collect::<Vec<_>>())
        }
        _ => None,
    };
    let body = match a.format {
        Format::Json => to_json(&serde_json::json!({ "report": &report, "t_star_brillouin": &brillouin }))?,
        _ => {
            let mut t = io::scaling_text(&report);
            if let Some(b) = &brillouin {
                let _ = writeln!(t, "t_star_brillouin = [{}]", b.iter().map(|v| v.map(num).unwrap_or_else(|| "none".into())).collect::<Vec<_>>().join(", "));
            }
            t
        }
    };
    write(&a.out, &body)?;
    println!("time_spread = {}", report.time_spread.map(num).unwrap_or_else(|| "none".into()));
    println!("rate_spread = {}", report.rate_spread.map(num).unwrap_or_else(|| "none".into()));
    Ok(if report.unbounded.iter().any(|&u| u) { Outcome::Undetermined } else { Outcome::Done })
}

#[derive(Args, Debug)]
pub struct WkbArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Check weak transparency of the bilinear form on the harmonics of the phase
    #[arg(long, conflicts_with = "residual")]
    pub check_transparency: bool,
    /// Measure the consistency residual order with and without the first corrector
    #[arg(long)]
    pub residual: bool,
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4])]
    pub epsilons: Vec<f64>,
    #[arg(long, default_value_t = 40.0)]
    pub length: f64,
    #[arg(long, default_value_t = 2.0)]
    pub width: f64,
    /// Slow grid points
    #[arg(long = "grid-points", default_value_t = 256)]
    pub grid_points: usize,
    /// Transport time at which the residual is measured
    #[arg(long, default_value_t = 0.5)]
    pub tend: f64,
    /// Optional CSV of the transported amplitude
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn wkb_command(a: &WkbArgs) -> Result<Outcome> {
    let sys = a.system.load()?;
    if !a.check_transparency && !a.residual {
        return Err(Error::Input("choose --check-transparency or --residual".into()));
    }
    if a.check_transparency {
        let r = wkb::weak_transparency_check(&sys.spec, &sys.phase, a.samples, a.seed)?;
        println!("weak_transparency = {}", if r.pass { "pass" } else { "fail" });
        println!("max_norm = {}", num(r.max_norm));
        if let Some(w) = &r.witness {
            println!("witness_harmonic = {}", w.harmonic);
            println!("witness_norm = {}", num(w.norm));
        }
        return Ok(Outcome::Done);
    }
    check_epsilons(&a.epsilons)?;
    let pol = match &sys.polarization {
        Some(e) => PolarizationVectors::supplied(&sys.spec, &sys.phase, e)?,
        None => polarization_vectors(&sys.spec, &sys.phase)?,
    };
    let grid = PeriodicGrid::new(a.length, a.grid_points)?;
    let g0 = Amplitude::Gaussian { center: 0.5 * a.length, width: a.width, height: 1.0 }.sample(&grid)?;
    let sol = wkb::solve_transport(&sys.spec, &sys.phase, &pol, &g0, grid, a.tend, 2)?;
    let lead = wkb::consistency_residual(&sol, &sys.spec, &a.epsilons, 1, false)?;
    let corr = wkb::consistency_residual(&sol, &sys.spec, &a.epsilons, 1, true)?;
    if let Some(path) = &a.csv {
        write(path, &io::wkb_csv(&sol))?;
    }
    println!("cubic = {} {}", num(sol.cascade.cubic.re), num(sol.cascade.cubic.im));
    println!("group_velocity = {}", num(sol.cascade.group_velocity));
    println!("order_leading = {}", num(lead.order));
    println!("order_corrected = {}", num(corr.order));
    println!("order_difference = {}", num(corr.order - lead.order));
    Ok(Outcome::Done)
}

pub fn catalog_list() -> Result<Outcome> {
    for id in catalog::IDS {
        let defs = catalog::defaults(id)?;
        let params: Vec<String> = defs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{id}\t{}", params.join(" "));
    }
    Ok(Outcome::Done)
}

pub fn catalog_emit(id: &str, params: &SystemArgs, out: Option<&Path>) -> Result<Outcome> {
    let entry = catalog::build(id, &params.catalog_params()?)?;
    let json = entry.spec.to_json();
    match out {
        Some(p) => write(p, &json)?,
        None => print!("{json}"),
    }
    Ok(Outcome::Done)
}
