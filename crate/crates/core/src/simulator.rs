//! Pseudospectral Strang-split solver for the full system in one space
//! dimension, with a perturbed and an unperturbed run advanced in lockstep.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::{self, FftPair, PeriodicGrid};
use crate::linalg::{self, c, CMat, CVec, C64};
use crate::system::{Phase, SystemSpec};
use crate::wkb::{Amplitude, WkbSolution};

/// Largest number of step halvings before a run is declared unbounded.
pub const MAX_HALVINGS: u32 = 20;

#[derive(Debug, Clone, Serialize)]
pub struct AmplitudeNorms {
    pub a_sup: f64,
    pub a_hat_l1: f64,
    pub x0: f64,
    /// Edge values are not negligible, so periodization biases the norms.
    pub edge_warning: bool,
}

/// `sup |a|`, the discrete L1 norm of its Fourier coefficients, and the first maximizer.
pub fn amplitude_norms(a: &[C64], grid: &PeriodicGrid) -> Result<AmplitudeNorms> {
    if a.len() != grid.points {
        return Err(Error::Dimension { expected: grid.points, got: a.len() });
    }
    let (mut best, mut at) = (0.0, 0);
    for (i, z) in a.iter().enumerate() {
        if z.norm() > best {
            best = z.norm();
            at = i;
        }
    }
    if best == 0.0 {
        return Err(Error::Input("amplitude vanishes identically".into()));
    }
    let edge = a[0].norm().max(a[a.len() - 1].norm());
    Ok(AmplitudeNorms { a_sup: best, a_hat_l1: fourier::fourier_l1(a), x0: grid.x(at), edge_warning: edge > 1e-12 * best })
}

/// Smooth bump equal to 1 for `|x - center| <= radius / 2` and 0 beyond `radius`.
pub fn bump(x: f64, center: f64, radius: f64) -> f64 {
    let r = (x - center).abs();
    let s = ((radius - r) / (0.5 * radius)).clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Perturbation added to the reference datum.
#[derive(Debug, Clone, Serialize)]
pub enum Perturbation {
    /// `eps^K e^{i x (xi0 + k) / eps} phi0(x) e0` with `phi0` a bump of the given radius.
    Resonant {
        xi0: f64,
        #[serde(skip)]
        direction: CVec,
        center: f64,
        radius: f64,
    },
    /// Explicit samples, point-major, scaled by `eps^K`.
    #[serde(skip)]
    Custom(Vec<CVec>),
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub epsilon: f64,
    pub grid_points: usize,
    pub domain_length: f64,
    /// Requested step; shrunk to satisfy the nonlinear bound.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub k_exp: f64,
    pub k_prime: f64,
    pub amplitude: Amplitude,
    pub perturbation: Perturbation,
    /// Radius of the observation ball around the amplitude maximum.
    pub rho: f64,
    pub seed: u64,
    /// Stop once the deviation in the ball reaches `eps^K'`.
    pub stop_at_star: bool,
    /// Record every this many steps.
    pub record_every: usize,
}

impl SimConfig {
    /// Defaults tied to a Gaussian amplitude of the given width: domain `40 w`, ball radius `w / 2`.
    pub fn new(epsilon: f64, grid_points: usize, width: f64, t_end: f64) -> Self {
        let length = 40.0 * width;
        SimConfig {
            epsilon,
            grid_points,
            domain_length: length,
            dt: None,
            t_end,
            k_exp: 3.0,
            k_prime: 0.5,
            amplitude: Amplitude::Gaussian { center: 0.5 * length, width, height: 1.0 },
            perturbation: Perturbation::None,
            rho: 0.5 * width,
            seed: 0,
            stop_at_star: false,
            record_every: 1,
        }
    }

    fn grid(&self) -> Result<PeriodicGrid> {
        if !self.grid_points.is_power_of_two() {
            return Err(Error::Input(format!("grid_points {} is not a power of two", self.grid_points)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Input("epsilon must be positive".into()));
        }
        PeriodicGrid::new(self.domain_length, self.grid_points)
    }
}

/// `min(T0, T) sqrt(eps) |ln eps|`, the observation horizon of an instability run.
pub fn instability_horizon(t0: f64, t_user: f64, epsilon: f64) -> f64 {
    t0.min(t_user) * epsilon.sqrt() * epsilon.ln().abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RunVerdict {
    Completed,
    ReachedTarget,
    Unbounded,
}

impl RunVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            RunVerdict::Completed => "completed",
            RunVerdict::ReachedTarget => "reached-target",
            RunVerdict::Unbounded => "unbounded",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationRun {
    pub epsilon: f64,
    pub times: Vec<f64>,
    pub norm_total: Vec<f64>,
    pub norm_dev: Vec<f64>,
    pub norm_dev_ball: Vec<f64>,
    pub sup_dev: Vec<f64>,
    pub fitted_rate: Option<f64>,
    pub t_star: Option<f64>,
    pub verdict: RunVerdict,
    pub dt: f64,
    pub halvings: u32,
    pub steps: usize,
    /// Perturbed state at the last recorded time, point-major.
    #[serde(skip)]
    pub final_state: Vec<C64>,
}

impl SimulationRun {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,norm_total,norm_dev,norm_dev_ball,sup_dev\n");
        for i in 0..self.times.len() {
            s.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                self.times[i], self.norm_total[i], self.norm_dev[i], self.norm_dev_ball[i], self.sup_dev[i]
            ));
        }
        s
    }

    /// `sup_t norm_dev(t) / norm_dev(0)`.
    pub fn amplification(&self) -> f64 {
        let n0 = self.norm_dev[0];
        self.norm_dev.iter().fold(0.0f64, |m, &v| m.max(v)) / n0
    }
}

/// Fourier-space propagators and buffers for one grid and step.
struct LinearStep {
    props: Vec<CMat>,
    fft: FftPair,
}

impl LinearStep {
    fn new(spec: &SystemSpec, grid: &PeriodicGrid, epsilon: f64, tau: f64) -> Result<Self> {
        let ks = grid.wavenumbers();
        let props = ks
            .par_iter()
            .map(|&kappa| {
                let h = spec.assemble_symbol(&[epsilon * kappa])?;
                let (vals, vecs) = linalg::hermitian_eig(&h);
                let d = CMat::from_diagonal(&CVec::from_iterator(vals.len(), vals.iter().map(|l| C64::from_polar(1.0, -tau * l / epsilon))));
                Ok(&vecs * d * vecs.adjoint())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LinearStep { props, fft: FftPair::new(grid.points) })
    }

    fn apply(&self, u: &mut [C64], n: usize) {
        let pts = self.fft.n;
        let mut comps: Vec<Vec<C64>> = (0..n).map(|c| (0..pts).map(|i| u[i * n + c]).collect()).collect();
        comps.par_iter_mut().for_each(|b| self.fft.forward(b));
        let mut v = CVec::zeros(n);
        for m in 0..pts {
            for c in 0..n {
                v[c] = comps[c][m];
            }
            let w = &self.props[m] * &v;
            for c in 0..n {
                comps[c][m] = w[c];
            }
        }
        comps.par_iter_mut().for_each(|b| self.fft.inverse(b));
        for c in 0..n {
            for i in 0..pts {
                u[i * n + c] = comps[c][i];
            }
        }
    }
}

/// Pointwise RK4 for `u' = B(u, u) / sqrt(eps)` over one step.
fn nonlinear_step(spec: &SystemSpec, u: &mut [C64], dt: f64, epsilon: f64, real: bool) {
    let n = spec.n;
    let s = 1.0 / epsilon.sqrt();
    u.par_chunks_mut(n).for_each(|p| {
        let mut k = [vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n]];
        let mut tmp = vec![C64::new(0.0, 0.0); n];
        spec.quadratic_into(p, &mut k[0]);
        for (stage, frac) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
            let (done, rest) = k.split_at_mut(stage);
            for i in 0..n {
                tmp[i] = p[i] + done[stage - 1][i] * (frac * dt * s);
            }
            spec.quadratic_into(&tmp, &mut rest[0]);
        }
        for i in 0..n {
            p[i] += (k[0][i] + k[1][i] * 2.0 + k[2][i] * 2.0 + k[3][i]) * (dt * s / 6.0);
            if real {
                p[i] = c(p[i].re);
            }
        }
    });
}

fn sup_abs(u: &[C64]) -> f64 {
    u.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest step allowed by the nonlinear bound `dt <= 0.1 sqrt(eps) / (|B| sup |u|)`.
pub fn nonlinear_step_bound(spec: &SystemSpec, epsilon: f64, sup_u: f64) -> f64 {
    let b = spec.bilinear_bound();
    if b == 0.0 || sup_u == 0.0 {
        f64::INFINITY
    } else {
        0.1 * epsilon.sqrt() / (b * sup_u)
    }
}

/// Pseudospectral solver holding the perturbed and unperturbed states.
pub struct Simulator<'a> {
    spec: &'a SystemSpec,
    grid: PeriodicGrid,
    epsilon: f64,
    real: bool,
    dt: f64,
    half: LinearStep,
    pub state: Vec<C64>,
    pub reference: Vec<C64>,
    pub t: f64,
    halvings: u32,
}

impl<'a> Simulator<'a> {
    /// `state` and `reference` are point-major (`u[i * N + component]`).
    pub fn new(spec: &'a SystemSpec, grid: PeriodicGrid, epsilon: f64, dt: f64, state: Vec<C64>, reference: Vec<C64>) -> Result<Self> {
        let len = grid.points * spec.n;
        if state.len() != len || reference.len() != len {
            return Err(Error::Dimension { expected: len, got: state.len() });
        }
        if spec.d != 1 {
            return Err(Error::NotApplicable("simulation is one-dimensional".into()));
        }
        let half = LinearStep::new(spec, &grid, epsilon, 0.5 * dt)?;
        Ok(Simulator { spec, grid, epsilon, real: spec.is_real(), dt, half, state, reference, t: 0.0, halvings: 0 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances both states by one Strang step, halving `dt` while the nonlinear bound fails.
    pub fn step(&mut self) -> Result<()> {
        let sup = sup_abs(&self.state).max(sup_abs(&self.reference));
        if !sup.is_finite() {
            return Err(Error::Numerical { xi: vec![self.t], msg: "state is not finite".into() });
        }
        while self.dt > nonlinear_step_bound(self.spec, self.epsilon, sup) {
            if self.halvings >= MAX_HALVINGS {
                let suggested = nonlinear_step_bound(self.spec, self.epsilon, sup);
                return Err(Error::StepSize { dt: self.dt, suggested });
            }
            self.dt *= 0.5;
            self.halvings += 1;
            self.half = LinearStep::new(self.spec, &self.grid, self.epsilon, 0.5 * self.dt)?;
        }
        let n = self.spec.n;
        for u in [&mut self.state, &mut self.reference] {
            self.half.apply(u, n);
            nonlinear_step(self.spec, u, self.dt, self.epsilon, self.real);
            self.half.apply(u, n);
            if self.real {
                u.iter_mut().for_each(|z| *z = c(z.re));
            }
        }
        self.t += self.dt;
        Ok(())
    }

    pub fn l2(&self, u: &[C64]) -> f64 {
        (u.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()).sqrt()
    }

    /// Deviation norms: total L2, L2 on the ball, sup.
    pub fn deviation(&self, center: f64, rho: f64) -> (f64, f64, f64) {
        let n = self.spec.n;
        let dx = self.grid.dx();
        let (mut tot, mut ball, mut sup) = (0.0, 0.0, 0.0f64);
        for i in 0..self.grid.points {
            let x = self.grid.x(i);
            let dist = periodic_distance(x, center, self.grid.length);
            for c in 0..n {
                let d = (self.state[i * n + c] - self.reference[i * n + c]).norm();
                tot += d * d;
                sup = sup.max(d);
                if dist <= rho {
                    ball += d * d;
                }
            }
        }
        ((tot * dx).sqrt(), (ball * dx).sqrt(), sup)
    }
}

fn periodic_distance(x: f64, y: f64, length: f64) -> f64 {
    let d = (x - y).rem_euclid(length);
    d.min(length - d)
}

/// Reference datum `u_a(0)` on the simulation grid from a WKB solution.
pub fn reference_datum(wkb: &WkbSolution, epsilon: f64, points: usize) -> Vec<C64> {
    wkb.reconstruct(0, epsilon, points, false).into_iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>()).collect()
}

/// Checks that the grid carries at least 8 points per wavelength of every oscillation in the datum.
pub fn check_resolution(config: &SimConfig, phase: &Phase) -> Result<()> {
    let k = phase.k.first().copied().unwrap_or(0.0).abs();
    let mut fastest = k;
    if let Perturbation::Resonant { xi0, .. } = &config.perturbation {
        fastest = fastest.max((xi0 + phase.k.first().copied().unwrap_or(0.0)).abs());
    }
    if fastest == 0.0 {
        return Ok(());
    }
    let wavelength = 2.0 * std::f64::consts::PI * config.epsilon / fastest;
    let ppw = wavelength / (config.domain_length / config.grid_points as f64);
    if ppw < crate::wkb::MIN_POINTS_PER_WAVELENGTH {
        return Err(Error::Resolution { points_per_wavelength: ppw });
    }
    Ok(())
}

/// Runs the perturbed and unperturbed evolutions of the WKB datum and records deviation norms.
pub fn run_instability_experiment(spec: &SystemSpec, wkb: &WkbSolution, config: &SimConfig) -> Result<SimulationRun> {
    let grid = config.grid()?;
    check_resolution(config, &wkb.phase)?;
    if wkb.grid.length != config.domain_length {
        return Err(Error::Input("WKB grid and simulation domain differ in length".into()));
    }
    if wkb.grid.points > grid.points {
        return Err(Error::Input("simulation grid is coarser than the WKB grid".into()));
    }
    let eps = config.epsilon;
    let n = spec.n;
    let reference = reference_datum(wkb, eps, grid.points);
    let scale = eps.powf(config.k_exp);
    let k = wkb.phase.k.first().copied().unwrap_or(0.0);
    let mut state = reference.clone();
    match &config.perturbation {
        Perturbation::Resonant { xi0, direction, center, radius } => {
            if direction.len() != n {
                return Err(Error::Dimension { expected: n, got: direction.len() });
            }
            for i in 0..grid.points {
                let x = grid.x(i);
                let w = bump(x, *center, *radius) * scale;
                if w == 0.0 {
                    continue;
                }
                let e = C64::from_polar(w, x * (xi0 + k) / eps);
                for c in 0..n {
                    let z = direction[c] * e;
                    state[i * n + c] += if spec.is_real() { C64::new(z.re, 0.0) } else { z };
                }
            }
        }
        Perturbation::Custom(samples) => {
            if samples.len() != grid.points {
                return Err(Error::Dimension { expected: grid.points, got: samples.len() });
            }
            for (i, v) in samples.iter().enumerate() {
                for c in 0..n {
                    state[i * n + c] += v[c] * scale;
                }
            }
        }
        Perturbation::None => {}
    }
    let sup = sup_abs(&state).max(sup_abs(&reference));
    let bound = nonlinear_step_bound(spec, eps, sup);
    let dt = match config.dt {
        Some(d) => d.min(bound),
        None => bound.min(config.t_end / 16.0).min(1.0),
    };
    let dt = if dt.is_finite() && dt > 0.0 { dt } else { (config.t_end / 16.0).max(f64::MIN_POSITIVE) };
    let mut sim = Simulator::new(spec, grid, eps, dt, state, reference)?;
    let center = match &config.amplitude {
        Amplitude::Gaussian { center, .. } => *center,
        Amplitude::Samples(_) => {
            let a = config.amplitude.sample(&wkb.grid)?;
            amplitude_norms(&a, &wkb.grid)?.x0
        }
    };
    let target = eps.powf(config.k_prime);
    let mut run = SimulationRun {
        epsilon: eps,
        times: Vec::new(),
        norm_total: Vec::new(),
        norm_dev: Vec::new(),
        norm_dev_ball: Vec::new(),
        sup_dev: Vec::new(),
        fitted_rate: None,
        t_star: None,
        verdict: RunVerdict::Completed,
        dt,
        halvings: 0,
        steps: 0,
        final_state: Vec::new(),
    };
    let record = |sim: &Simulator, run: &mut SimulationRun| {
        let (d, b, s) = sim.deviation(center, config.rho);
        run.times.push(sim.t);
        run.norm_total.push(sim.l2(&sim.state));
        run.norm_dev.push(d);
        run.norm_dev_ball.push(b);
        run.sup_dev.push(s);
    };
    record(&sim, &mut run);
    let every = config.record_every.max(1);
    while sim.t < config.t_end * (1.0 - 1e-12) {
        let remaining = config.t_end - sim.t;
        if sim.dt > remaining {
            // land on t_end with a shortened step
            sim.dt = remaining;
            sim.half = LinearStep::new(spec, &sim.grid, eps, 0.5 * remaining)?;
        }
        match sim.step() {
            Ok(()) => {}
            Err(Error::StepSize { .. }) | Err(Error::Numerical { .. }) => {
                run.verdict = RunVerdict::Unbounded;
                break;
            }
            Err(e) => return Err(e),
        }
        run.steps += 1;
        if run.steps % every == 0 || sim.t >= config.t_end * (1.0 - 1e-12) {
            record(&sim, &mut run);
            if config.stop_at_star && run.norm_dev_ball.last().is_some_and(|&b| b >= target) {
                run.verdict = RunVerdict::ReachedTarget;
                break;
            }
        }
    }
    if run.times.last() != Some(&sim.t) {
        record(&sim, &mut run);
    }
    run.dt = sim.dt;
    run.halvings = sim.halvings;
    run.final_state = std::mem::take(&mut sim.state);
    run.t_star = first_crossing(&run.times, &run.norm_dev_ball, target);
    run.fitted_rate = fitted_rate(&run.times, &run.norm_dev, 10.0 * run.norm_dev[0], 0.1 * target);
    Ok(run)
}

/// First time the series reaches `level`, linearly interpolated.
pub fn first_crossing(times: &[f64], values: &[f64], level: f64) -> Option<f64> {
    if values.first().is_some_and(|&v| v >= level) {
        return times.first().copied();
    }
    for i in 1..values.len() {
        if values[i] >= level {
            let (t0, t1, v0, v1) = (times[i - 1], times[i], values[i - 1], values[i]);
            return Some(t0 + (level - v0) / (v1 - v0) * (t1 - t0));
        }
    }
    None
}

/// Least-squares slope of `ln value` over the samples lying in `[lo, hi]`.
pub fn fitted_rate(times: &[f64], values: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times.iter().zip(values).filter(|(_, &v)| v >= lo && v <= hi).map(|(&t, &v)| (t, v.ln())).collect();
    (pts.len() >= 3).then(|| crate::spectral::ls_slope(&pts))
}

/// Scaling of the amplification time and rate across a sweep in `eps`.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub epsilons: Vec<f64>,
    pub t_star: Vec<Option<f64>>,
    /// `t_star / (sqrt(eps) |ln eps|)`.
    pub time_ratio: Vec<Option<f64>>,
    /// `fitted_rate * sqrt(eps)`.
    pub scaled_rate: Vec<Option<f64>>,
    /// `max / min - 1` of the time ratios.
    pub time_spread: Option<f64>,
    pub rate_spread: Option<f64>,
    pub unbounded: Vec<bool>,
}

impl ScalingReport {
    pub fn from_runs(runs: &[SimulationRun]) -> Self {
        let epsilons: Vec<f64> = runs.iter().map(|r| r.epsilon).collect();
        let t_star: Vec<Option<f64>> = runs.iter().map(|r| r.t_star).collect();
        let time_ratio: Vec<Option<f64>> = runs.iter().map(|r| r.t_star.map(|t| t / (r.epsilon.sqrt() * r.epsilon.ln().abs()))).collect();
        let scaled_rate: Vec<Option<f64>> = runs.iter().map(|r| r.fitted_rate.map(|g| g * r.epsilon.sqrt())).collect();
        ScalingReport {
            time_spread: spread(&time_ratio),
            rate_spread: spread(&scaled_rate),
            unbounded: runs.iter().map(|r| r.verdict == RunVerdict::Unbounded).collect(),
            epsilons,
            t_star,
            time_ratio,
            scaled_rate,
        }
    }
}

/// `max / min - 1` when every entry is present and positive.
pub fn spread(values: &[Option<f64>]) -> Option<f64> {
    let v: Option<Vec<f64>> = values.iter().copied().collect();
    let v = v?;
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo > 0.0).then(|| hi / lo - 1.0)
}

/// Runs one experiment per `eps`; `build` supplies the WKB reference and configuration.
pub fn epsilon_sweep(
    spec: &SystemSpec,
    epsilons: &[f64],
    build: &(dyn Fn(f64) -> Result<(WkbSolution, SimConfig)> + Sync),
) -> Result<(ScalingReport, Vec<SimulationRun>)> {
    if epsilons.len() < 3 {
        return Err(Error::Input("a sweep needs at least three epsilons".into()));
    }
    let runs = epsilons
        .par_iter()
        .map(|&e| {
            let (wkb, cfg) = build(e)?;
            run_instability_experiment(spec, &wkb, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ScalingReport::from_runs(&runs), runs))
}
