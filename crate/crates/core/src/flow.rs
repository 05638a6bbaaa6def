//! Frozen-coefficient symbolic flow `dS/dt + M S / sqrt(eps) = 0` near a resonance.

use rayon::prelude::*;
use serde::Serialize;

use crate::dispersion::bisect;
use crate::error::{Error, Result};
use crate::interaction::{CoefficientSample, Coupling};
use crate::linalg::{self, c, CMat, CVec, C64, I};
use crate::spectral::ls_slope;

/// Two resonating blocks coupled through rank-one interaction coefficients.
#[derive(Debug, Clone)]
pub struct InteractionMatrix {
    /// Shifted eigenvalue of the upper block, `lambda_i(xi + k) - omega`.
    pub mu1: f64,
    /// Eigenvalue of the lower block, `lambda_j(xi)`.
    pub mu2: f64,
    pub b12: CMat,
    pub b21: CMat,
    /// Decoupled eigenvalues appended on the diagonal.
    pub extra_diag: Vec<f64>,
    pub epsilon: f64,
    /// Leading amplitude at the frozen point.
    pub amplitude: C64,
}

impl InteractionMatrix {
    pub fn new(mu1: f64, mu2: f64, b12: CMat, b21: CMat, epsilon: f64, amplitude: C64) -> Result<Self> {
        let n = b12.nrows();
        if b12.shape() != (n, n) || b21.shape() != (n, n) {
            return Err(Error::Dimension { expected: n, got: b21.nrows() });
        }
        if !(epsilon > 0.0) {
            return Err(Error::Input("epsilon must be positive".into()));
        }
        Ok(InteractionMatrix { mu1, mu2, b12, b21, extra_diag: Vec::new(), epsilon, amplitude })
    }

    /// Interaction matrix of the pair `(i, j)` at `xi`, with coefficients damped by `weight`.
    pub fn from_coupling(coupling: &Coupling, pair: (usize, usize), xi: &[f64], epsilon: f64, amplitude: C64, weight: f64) -> Result<Self> {
        let (i, j) = pair;
        let s = coupling.sample(i, j, xi)?;
        let shifted: Vec<f64> = xi.iter().zip(&coupling.phase.k).map(|(a, b)| a + b).collect();
        let mu1 = coupling.field.lambda(&shifted, i)? - coupling.phase.omega;
        let mu2 = coupling.field.lambda(xi, j)?;
        Self::new(mu1, mu2, s.b_plus * c(weight), s.b_minus * c(weight), epsilon, amplitude)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        InteractionMatrix { epsilon, ..self.clone() }
    }

    pub fn block_size(&self) -> usize {
        self.b12.nrows()
    }

    pub fn dim(&self) -> usize {
        2 * self.block_size() + self.extra_diag.len()
    }

    /// Coupling blocks with the amplitude folded in.
    fn scaled_blocks(&self) -> (CMat, CMat) {
        (&self.b12 * self.amplitude, &self.b21 * self.amplitude.conj())
    }

    /// `tr(b12 b21)` including the amplitude.
    pub fn coupling_trace(&self) -> C64 {
        let (p, m) = self.scaled_blocks();
        linalg::trace(&(p * m))
    }

    pub fn matrix(&self) -> CMat {
        let n = self.block_size();
        let mut m = CMat::zeros(self.dim(), self.dim());
        let se = c(self.epsilon.sqrt());
        let (p, q) = self.scaled_blocks();
        for a in 0..n {
            m[(a, a)] = I * self.mu1;
            m[(n + a, n + a)] = I * self.mu2;
        }
        m.view_mut((0, n), (n, n)).copy_from(&(p * (-se)));
        m.view_mut((n, 0), (n, n)).copy_from(&(q * (-se)));
        for (a, &l) in self.extra_diag.iter().enumerate() {
            m[(2 * n + a, 2 * n + a)] = I * l;
        }
        m
    }

    /// The pair `mu+, mu-` of eigenvalues carrying the coupling.
    pub fn coupled_eigenvalues(&self) -> (C64, C64) {
        let center = I * (0.5 * (self.mu1 + self.mu2));
        let d = self.mu1 - self.mu2;
        let root = (c(4.0 * self.epsilon) * self.coupling_trace() - c(d * d)).sqrt() * 0.5;
        (center + root, center - root)
    }

    /// Exponential growth rate of `exp(-t M / sqrt(eps))` from the closed-form spectrum.
    pub fn growth_rate(&self) -> f64 {
        let (p, m) = self.coupled_eigenvalues();
        (-p.re).max(-m.re).max(0.0) / self.epsilon.sqrt()
    }
}

/// Closed-form spectrum of `M`: `i mu1` and `i mu2` with multiplicity `N - 1` each, then `mu+`, `mu-`.
pub fn flow_spectrum(m: &InteractionMatrix) -> Result<Vec<C64>> {
    let (p, q) = m.scaled_blocks();
    let prod = p * q;
    let scale = linalg::max_abs(&m.b12) * linalg::max_abs(&m.b21) * m.amplitude.norm_sqr();
    let rank = linalg::numerical_rank(&prod, 1e6, 1e-12 * scale.max(f64::MIN_POSITIVE));
    if rank > 1 {
        return Err(Error::UnsupportedRank { rank });
    }
    let n = m.block_size();
    let mut out = Vec::with_capacity(m.dim());
    out.extend(std::iter::repeat(I * m.mu1).take(n - 1));
    out.extend(std::iter::repeat(I * m.mu2).take(n - 1));
    let (a, b) = m.coupled_eigenvalues();
    out.push(a);
    out.push(b);
    out.extend(m.extra_diag.iter().map(|&l| I * l));
    Ok(out)
}

/// Recorded solution of the flow from `tau`.
#[derive(Debug, Clone, Serialize)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    #[serde(skip)]
    pub propagators: Vec<CMat>,
    pub sup_norm_series: Vec<f64>,
    pub fitted_rate: f64,
    pub gamma_plus_ref: Option<f64>,
    /// `|det S / exp(-int tr M / sqrt(eps)) - 1|` at the final time.
    pub liouville_error: f64,
}

impl FlowTrajectory {
    pub fn final_propagator(&self) -> &CMat {
        self.propagators.last().expect("trajectory has a start point")
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm_series.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,sup_norm,log_sup_norm\n");
        for (t, n) in self.times.iter().zip(&self.sup_norm_series) {
            s.push_str(&format!("{t:.12e},{n:.12e},{:.12e}\n", n.ln()));
        }
        s
    }
}

/// Largest stable step: the per-step exponent `dt |M| / sqrt(eps)` stays at 0.1.
pub fn suggested_step(m: &InteractionMatrix) -> f64 {
    let norm = linalg::sup_norm(&m.matrix()).max(f64::MIN_POSITIVE);
    0.1 * m.epsilon.sqrt() / norm
}

/// Integrates an autonomous flow by repeated application of the exact one-step propagator.
pub fn integrate_flow(m: &InteractionMatrix, tau: f64, t_end: f64, dt: f64) -> Result<FlowTrajectory> {
    integrate_flow_with(&|_| m.clone(), tau, t_end, dt, true)
}

/// Integrates `dS/dt = -M(t) S / sqrt(eps)` with the exponential midpoint rule.
///
/// `autonomous` lets the one-step propagator be computed once.
pub fn integrate_flow_with(m_of_t: &(dyn Fn(f64) -> InteractionMatrix + Sync), tau: f64, t_end: f64, dt: f64, autonomous: bool) -> Result<FlowTrajectory> {
    if !(t_end >= tau) || !(dt > 0.0) {
        return Err(Error::Input("need t_end >= tau and dt > 0".into()));
    }
    let m0 = m_of_t(tau);
    let limit = suggested_step(&m0);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepSize { dt, suggested: limit });
    }
    let steps = ((t_end - tau) / dt).ceil().max(0.0) as usize;
    let h = if steps > 0 { (t_end - tau) / steps as f64 } else { 0.0 };
    let dim = m0.dim();
    let record_every = (steps / 2000).max(1);
    let mut s = CMat::identity(dim, dim);
    let mut times = vec![tau];
    let mut props = vec![s.clone()];
    let mut sups = vec![linalg::sup_norm(&s)];
    let mut trace_integral = C64::new(0.0, 0.0);
    let step_of = |m: &InteractionMatrix| (m.matrix() * c(-h / m.epsilon.sqrt())).exp();
    let fixed = autonomous.then(|| (step_of(&m0), linalg::trace(&m0.matrix()) / m0.epsilon.sqrt()));
    for n in 0..steps {
        let t_mid = tau + (n as f64 + 0.5) * h;
        let (u, tr) = match &fixed {
            Some((u, tr)) => (u.clone(), *tr),
            None => {
                let m = m_of_t(t_mid);
                (step_of(&m), linalg::trace(&m.matrix()) / m.epsilon.sqrt())
            }
        };
        s = u * s;
        trace_integral += tr * h;
        if (n + 1) % record_every == 0 || n + 1 == steps {
            times.push(tau + (n + 1) as f64 * h);
            sups.push(linalg::sup_norm(&s));
            props.push(s.clone());
        }
    }
    let det = s.determinant();
    let expected = (-trace_integral).exp();
    let liouville_error = (det / expected - c(1.0)).norm();
    let half = times.len() / 2;
    let pts: Vec<(f64, f64)> = times[half..].iter().zip(&sups[half..]).map(|(&t, &n)| (t, n.ln())).collect();
    let fitted_rate = if pts.len() >= 2 { ls_slope(&pts) } else { 0.0 };
    Ok(FlowTrajectory { times, propagators: props, sup_norm_series: sups, fitted_rate, gamma_plus_ref: None, liouville_error })
}

/// Outcome of the polylogarithmic growth-bound check across a sequence of `eps`.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthBoundReport {
    pub epsilons: Vec<f64>,
    /// `max over samples and t <= T |ln eps|` of `|S| exp(-t gamma_plus)`.
    pub q: Vec<f64>,
    pub gamma_plus: f64,
    pub n_star: f64,
    pub max_liouville_error: f64,
    pub pass: bool,
}

/// Largest admissible polylogarithmic exponent.
pub const N_STAR_CAP: f64 = 8.0;

/// Checks that `|S(0;t)|` exceeds `exp(t gamma_plus)` by at most a power of `|ln eps|`.
pub fn verify_growth_bound(samples: &[InteractionMatrix], gamma_plus: f64, horizon: f64, epsilons: &[f64]) -> Result<GrowthBoundReport> {
    if samples.is_empty() || epsilons.is_empty() {
        return Err(Error::Input("need at least one sample and one epsilon".into()));
    }
    let mut q = Vec::with_capacity(epsilons.len());
    let mut liouville: f64 = 0.0;
    for &eps in epsilons {
        let t_end = horizon * eps.ln().abs();
        let per: Vec<(f64, f64)> = samples
            .par_iter()
            .map(|m| {
                let m = m.with_epsilon(eps);
                let dt = suggested_step(&m).min(t_end / 200.0).max(f64::MIN_POSITIVE);
                let traj = integrate_flow(&m, 0.0, t_end, dt)?;
                let worst = traj.times.iter().zip(&traj.sup_norm_series).map(|(t, n)| n * (-t * gamma_plus).exp()).fold(0.0, f64::max);
                Ok((worst, traj.liouville_error))
            })
            .collect::<Result<_>>()?;
        q.push(per.iter().map(|p| p.0).fold(0.0, f64::max));
        liouville = liouville.max(per.iter().map(|p| p.1).fold(0.0, f64::max));
    }
    let mut n_star: f64 = 0.0;
    for w in 0..epsilons.len().saturating_sub(1) {
        let log_ratio = (epsilons[w + 1].ln().abs() / epsilons[w].ln().abs()).ln();
        if log_ratio.abs() > 1e-12 {
            n_star = n_star.max((q[w + 1] / q[w]).ln() / log_ratio);
        }
    }
    Ok(GrowthBoundReport { epsilons: epsilons.to_vec(), q, gamma_plus, n_star, max_liouville_error: liouville, pass: n_star <= N_STAR_CAP })
}

/// Smooth cutoff equal to 1 for `|phase| <= h` and 0 for `|phase| >= 2h`.
pub fn resonance_cutoff(phase: f64, h: f64) -> f64 {
    let s = ((2.0 * h - phase.abs()) / h).clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Points within `|phase| <= h` of the pair's roots, sampled along the phase gradient.
pub fn near_resonance_points(coupling: &Coupling, pair: (usize, usize), roots: &[Vec<f64>], h: f64, per_root: usize) -> Result<Vec<Vec<f64>>> {
    let (i, j) = pair;
    let mut out = Vec::new();
    for r in roots {
        let d = r.len();
        let dx = 1e-6;
        let mut grad = vec![0.0; d];
        for a in 0..d {
            let mut p = r.clone();
            let mut m = r.clone();
            p[a] += dx;
            m[a] -= dx;
            grad[a] = (coupling.phase_value(i, j, &p)? - coupling.phase_value(i, j, &m)?) / (2.0 * dx);
        }
        let g = grad.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
        let reach = h / g;
        for s in 0..per_root {
            let t = if per_root > 1 { -reach + 2.0 * reach * s as f64 / (per_root - 1) as f64 } else { 0.0 };
            let y: Vec<f64> = r.iter().zip(&grad).map(|(x, gr)| x + t * gr / g).collect();
            if coupling.phase_value(i, j, &y).is_ok_and(|f| f.abs() <= h) {
                out.push(y);
            }
        }
        out.push(r.clone());
    }
    Ok(out)
}

/// `a_sup` times the largest `Re sqrt(Gamma)` over the points of the `h`-neighborhood of the resonance.
pub fn gamma_plus(coupling: &Coupling, pair: (usize, usize), roots: &[Vec<f64>], h: f64, a_sup: f64) -> Result<f64> {
    let pts = near_resonance_points(coupling, pair, roots, h, 41)?;
    let mut best: f64 = 0.0;
    for x in &pts {
        best = best.max(coupling.sample(pair.0, pair.1, x)?.gamma.sqrt().re);
    }
    Ok(a_sup * best)
}

/// Frozen matrices at the near-resonance points of `pair` for each amplitude value, cut off at `|phase| <= h`.
pub fn resonance_samples(
    coupling: &Coupling,
    pair: (usize, usize),
    roots: &[Vec<f64>],
    h: f64,
    amplitudes: &[f64],
    per_root: usize,
) -> Result<Vec<InteractionMatrix>> {
    let mut out = Vec::new();
    for x in near_resonance_points(coupling, pair, roots, h, per_root)? {
        let w = resonance_cutoff(coupling.phase_value(pair.0, pair.1, &x)?, h);
        for &a in amplitudes {
            out.push(InteractionMatrix::from_coupling(coupling, pair, &x, 1.0, c(a), w)?);
        }
    }
    Ok(out)
}

/// Uncut frozen matrices whose detuning exceeds `sqrt(eps) |ln eps|^2`, placed along the phase
/// gradient at a few multiples of that threshold on both sides of every root. Points leaving
/// the analysis window are skipped.
pub fn away_samples(coupling: &Coupling, pair: (usize, usize), roots: &[Vec<f64>], epsilon: f64, amplitudes: &[f64]) -> Result<Vec<InteractionMatrix>> {
    let (i, j) = pair;
    let threshold = epsilon.sqrt() * epsilon.ln().powi(2);
    let mut out = Vec::new();
    for r in roots {
        let dx = 1e-6;
        let grad: Vec<f64> = (0..r.len())
            .map(|a| {
                let mut p = r.clone();
                let mut m = r.clone();
                p[a] += dx;
                m[a] -= dx;
                Ok((coupling.phase_value(i, j, &p)? - coupling.phase_value(i, j, &m)?) / (2.0 * dx))
            })
            .collect::<Result<_>>()?;
        let g = grad.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
        for mult in [2.0, 4.0, 8.0] {
            for side in [-1.0, 1.0] {
                let mut reach = mult * threshold / g;
                for _ in 0..20 {
                    let y: Vec<f64> = r.iter().zip(&grad).map(|(x, gr)| x + side * reach * gr / g).collect();
                    let detune = match coupling.phase_value(i, j, &y) {
                        Err(Error::Range { .. }) => break,
                        other => other?,
                    };
                    if detune.abs() > threshold {
                        for &a in amplitudes {
                            out.push(InteractionMatrix::from_coupling(coupling, pair, &y, epsilon, c(a), 1.0)?);
                        }
                        break;
                    }
                    reach *= 1.5;
                }
            }
        }
    }
    Ok(out)
}

/// Largest `|S(0;t)|` over the samples and `t <= horizon |ln eps|`.
pub fn sup_propagator_norm(samples: &[InteractionMatrix], epsilon: f64, horizon: f64) -> Result<f64> {
    let t_end = horizon * epsilon.ln().abs();
    let sups = samples
        .par_iter()
        .map(|m| {
            let m = m.with_epsilon(epsilon);
            let dt = suggested_step(&m).min(t_end / 200.0);
            Ok(integrate_flow(&m, 0.0, t_end, dt)?.sup_norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sups.into_iter().fold(0.0, f64::max))
}

/// Unit generator of the range of `b+ b-`.
pub fn unstable_datum_direction(sample: &CoefficientSample) -> Result<CVec> {
    let prod = &sample.b_plus * &sample.b_minus;
    if linalg::max_abs(&prod) == 0.0 {
        return Err(Error::Precondition("interaction product vanishes; no unstable direction".into()));
    }
    let svd = prod.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let k = (0..svd.singular_values.len()).max_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b])).expect("non-empty");
    let mut v: CVec = u.column(k).into_owned();
    linalg::fix_phase(&mut v);
    Ok(&v / c(v.norm()))
}

/// Detuning `|mu1 - mu2|` at which the coupled pair stops growing, located by bisection.
pub fn regime_boundary(m: &InteractionMatrix) -> Result<f64> {
    let tr = m.coupling_trace();
    if !(tr.re > 0.0) {
        return Err(Error::Precondition("boundary defined for positive coupling trace".into()));
    }
    // rounding leaves a tiny imaginary part on the trace, which keeps Re mu+ off zero
    let floor = 1e-9 * (m.epsilon * tr.norm()).sqrt();
    let rate = |d: f64| {
        let probe = InteractionMatrix { mu1: m.mu2 + d, ..m.clone() };
        let (p, _) = probe.coupled_eigenvalues();
        // positive inside the growth regime, negative outside
        p.re.abs() - floor
    };
    let hi = 4.0 * (m.epsilon * tr.norm()).sqrt() + 1.0;
    Ok(bisect(&rate, 0.0, hi, 1e-15))
}
