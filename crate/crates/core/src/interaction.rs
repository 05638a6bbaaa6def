//! Interaction coefficients, transparency, the stability index and the
//! observation-time constants derived from it.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, C64};
use crate::policy::NumericPolicy;
use crate::resonance::{intersect_roots, resonance_phase, ResonanceReport};
use crate::spectral::SpectralField;
use crate::system::{Phase, SystemSpec};

/// Unit generators of the kernels of the characteristic matrices at `beta` and `-beta`.
#[derive(Debug, Clone, Serialize)]
pub struct PolarizationVectors {
    #[serde(skip)]
    pub e1: CVec,
    #[serde(skip)]
    pub em1: CVec,
    pub residuals: [f64; 2],
}

impl PolarizationVectors {
    /// Uses a caller-supplied polarization (for non-oscillating reference solutions).
    pub fn supplied(spec: &SystemSpec, phase: &Phase, e: &CVec) -> Result<Self> {
        if e.len() != spec.n {
            return Err(Error::Dimension { expected: spec.n, got: e.len() });
        }
        let norm = e.norm();
        if norm == 0.0 {
            return Err(Error::Input("polarization must be non-zero".into()));
        }
        let e1 = e / c(norm);
        Ok(Self::from_unit(spec, phase, e1))
    }

    fn from_unit(spec: &SystemSpec, phase: &Phase, e1: CVec) -> Self {
        let em1 = e1.map(|z| z.conj());
        let l = spec.characteristic_matrix(1.0, phase.omega, &phase.k);
        let lm = spec.characteristic_matrix(-1.0, phase.omega, &phase.k);
        let residuals = [(&l * &e1).norm(), (&lm * &em1).norm()];
        PolarizationVectors { e1, em1, residuals }
    }
}

/// Computes `e1` spanning `ker(-i omega + A0 + i A(k))` and `e_{-1} = conj(e1)`.
pub fn polarization_vectors(spec: &SystemSpec, phase: &Phase) -> Result<PolarizationVectors> {
    if phase.k.len() != spec.d {
        return Err(Error::Dimension { expected: spec.d, got: phase.k.len() });
    }
    let l = spec.characteristic_matrix(1.0, phase.omega, &phase.k);
    let ker = linalg::kernel(&l, NumericPolicy::default().characteristic);
    if ker.ncols() != 1 {
        return Err(Error::Multiplicity { dim: ker.ncols() });
    }
    let mut e1: CVec = ker.column(0).into_owned();
    linalg::fix_phase(&mut e1);
    let e1 = &e1 / c(e1.norm());
    Ok(PolarizationVectors::from_unit(spec, phase, e1))
}

/// The complex-linear part of `w -> B(e, w) + B(w, e)`.
pub fn linear_source(spec: &SystemSpec, e: &CVec) -> CMat {
    spec.linearize(e).linear
}

/// Interaction coefficients `b+ = P_i(xi+k) B(e1) P_j(xi)` and `b- = P_j(xi) B(e-1) P_i(xi+k)` at one frequency.
#[derive(Debug, Clone)]
pub struct CoefficientSample {
    pub xi: Vec<f64>,
    pub b_plus: CMat,
    pub b_minus: CMat,
    pub gamma: C64,
}

impl CoefficientSample {
    pub fn plus_norm(&self) -> f64 {
        linalg::sup_norm(&self.b_plus)
    }
    pub fn minus_norm(&self) -> f64 {
        linalg::sup_norm(&self.b_minus)
    }
}

/// Interaction coefficients of one branch pair on a list of frequencies.
#[derive(Debug, Clone)]
pub struct InteractionCoefficients {
    pub pair: (usize, usize),
    pub samples: Vec<CoefficientSample>,
    /// Numerical ranks of `(b+, b-)` per sample.
    pub ranks: Vec<(usize, usize)>,
}

impl InteractionCoefficients {
    pub fn gamma_trace(&self) -> Vec<C64> {
        self.samples.iter().map(|s| s.gamma).collect()
    }

    /// True when both coefficients have rank at most one at every sample.
    pub fn rank_one(&self) -> bool {
        self.ranks.iter().all(|&(a, b)| a <= 1 && b <= 1)
    }
}

/// Evaluator for interaction coefficients of a fixed system and phase.
#[derive(Debug, Clone)]
pub struct Coupling<'a> {
    pub field: &'a SpectralField,
    pub phase: Phase,
    pub pol: PolarizationVectors,
    b_e1: CMat,
    b_em1: CMat,
}

impl<'a> Coupling<'a> {
    pub fn new(field: &'a SpectralField, phase: &Phase, pol: &PolarizationVectors) -> Self {
        let b_e1 = linear_source(&field.spec, &pol.e1);
        let b_em1 = linear_source(&field.spec, &pol.em1);
        Coupling { field, phase: phase.clone(), pol: pol.clone(), b_e1, b_em1 }
    }

    /// `B(e1)` as a matrix.
    pub fn source_plus(&self) -> &CMat {
        &self.b_e1
    }

    /// `B(e-1)` as a matrix.
    pub fn source_minus(&self) -> &CMat {
        &self.b_em1
    }

    pub fn sample(&self, i: usize, j: usize, xi: &[f64]) -> Result<CoefficientSample> {
        let shifted: Vec<f64> = xi.iter().zip(&self.phase.k).map(|(a, b)| a + b).collect();
        let at = self.field.eval(xi)?;
        let up = self.field.eval(&shifted)?;
        let pi = &up.projectors[i];
        let pj = &at.projectors[j];
        let b_plus = pi * &self.b_e1 * pj;
        let b_minus = pj * &self.b_em1 * pi;
        let gamma = linalg::trace(&(&b_plus * &b_minus));
        Ok(CoefficientSample { xi: xi.to_vec(), b_plus, b_minus, gamma })
    }

    pub fn phase_value(&self, i: usize, j: usize, xi: &[f64]) -> Result<f64> {
        resonance_phase(self.field, &self.phase, i, j, xi)
    }

    pub fn coefficients(&self, i: usize, j: usize, points: &[Vec<f64>]) -> Result<InteractionCoefficients> {
        let policy = self.field.policy;
        let samples: Vec<CoefficientSample> = points.par_iter().map(|x| self.sample(i, j, x)).collect::<Result<_>>()?;
        let floor = policy.transparent * self.scale();
        let ranks = samples
            .iter()
            .map(|s| (linalg::numerical_rank(&s.b_plus, policy.rank_gap, floor), linalg::numerical_rank(&s.b_minus, policy.rank_gap, floor)))
            .collect();
        Ok(InteractionCoefficients { pair: (i, j), samples, ranks })
    }

    /// Natural size of the coefficients: `max(|B(e1)|, |B(e-1)|)`.
    pub fn scale(&self) -> f64 {
        linalg::sup_norm(&self.b_e1).max(linalg::sup_norm(&self.b_em1)).max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Transparency {
    Transparent,
    NonTransparent,
    Borderline,
}

impl Transparency {
    pub fn as_str(self) -> &'static str {
        match self {
            Transparency::Transparent => "transparent",
            Transparency::NonTransparent => "non-transparent",
            Transparency::Borderline => "borderline",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransparencyDiagnostic {
    pub pair: (usize, usize),
    /// Per shell radius `h`: sup of `|coefficient| / |phase|` over `h/2 <= |phase| <= h`.
    pub ratio_sup: Vec<(f64, f64)>,
    pub at_resonance_norm: f64,
    pub verdict: Transparency,
    pub note: Option<String>,
}

/// Default shell radii for the ratio test.
pub fn default_shells() -> Vec<f64> {
    vec![1e-1, 5e-2, 2.5e-2, 1.25e-2, 6.25e-3]
}

/// Transparency verdict of the pair `(i, j)` on its resonant set.
pub fn transparency_check(coupling: &Coupling, report: &ResonanceReport, i: usize, j: usize, h_values: &[f64]) -> Result<TransparencyDiagnostic> {
    let pair = report.pair(i, j);
    let roots: Vec<Vec<f64>> = match pair {
        Some(p) if p.identically_resonant => sample_window(report),
        Some(p) => p.roots.iter().map(|r| r.xi.clone()).collect(),
        None => Vec::new(),
    };
    if roots.is_empty() {
        return Ok(TransparencyDiagnostic {
            pair: (i, j),
            ratio_sup: Vec::new(),
            at_resonance_norm: 0.0,
            verdict: Transparency::Transparent,
            note: Some("no resonance in window".into()),
        });
    }
    let identically = pair.is_some_and(|p| p.identically_resonant);
    transparency_near(coupling, i, j, &roots, if identically { &[] } else { h_values })
}

fn sample_window(report: &ResonanceReport) -> Vec<Vec<f64>> {
    let w = &report.window;
    let n = 33;
    match w.dim() {
        1 => crate::spectral::linspace(w.lo[0], w.hi[0], n).into_iter().map(|x| vec![x]).collect(),
        _ => {
            let xs = crate::spectral::linspace(w.lo[0], w.hi[0], 9);
            let ys = crate::spectral::linspace(w.lo[1], w.hi[1], 9);
            xs.iter().flat_map(|&x| ys.iter().map(move |&y| vec![x, y])).collect()
        }
    }
}

/// Transparency test of the `(i, j)` coefficients restricted to neighborhoods of `points`.
pub fn transparency_near(coupling: &Coupling, i: usize, j: usize, points: &[Vec<f64>], h_values: &[f64]) -> Result<TransparencyDiagnostic> {
    let policy = coupling.field.policy;
    let scale = coupling.scale();
    let mut at_norm: f64 = 0.0;
    for x in points {
        let s = coupling.sample(i, j, x)?;
        at_norm = at_norm.max(s.plus_norm().max(s.minus_norm()));
    }
    // sup of |coefficient| / |phase| on shells around each point
    let mut ratio_sup = Vec::new();
    for &h in h_values {
        let mut sup: f64 = 0.0;
        for x in points {
            for y in shell_points(coupling, i, j, x, h)? {
                let f = coupling.phase_value(i, j, &y)?;
                if f.abs() >= 0.5 * h && f.abs() <= h {
                    let s = coupling.sample(i, j, &y)?;
                    sup = sup.max(s.plus_norm().max(s.minus_norm()) / f.abs());
                }
            }
        }
        ratio_sup.push((h, sup));
    }
    let bounded_ratio = ratio_sup.windows(2).all(|w| w[1].1 <= 2.0 * w[0].1 + 1e-300 || w[1].1 <= policy.transparent * scale);
    let verdict = if at_norm >= policy.nontransparent * scale {
        Transparency::NonTransparent
    } else if at_norm <= policy.transparent * scale && bounded_ratio {
        Transparency::Transparent
    } else {
        Transparency::Borderline
    };
    let note = (!bounded_ratio).then(|| "coefficient/phase ratio grows faster than 2x per halving".to_string());
    Ok(TransparencyDiagnostic { pair: (i, j), ratio_sup, at_resonance_norm: at_norm, verdict, note })
}

/// Points along the phase gradient through `x` where `|phase|` sweeps `[h/4, 2h]`.
fn shell_points(coupling: &Coupling, i: usize, j: usize, x: &[f64], h: f64) -> Result<Vec<Vec<f64>>> {
    let d = x.len();
    let dx = 1e-6;
    let mut grad = vec![0.0; d];
    for a in 0..d {
        let mut p = x.to_vec();
        let mut m = x.to_vec();
        p[a] += dx;
        m[a] -= dx;
        grad[a] = (coupling.phase_value(i, j, &p).unwrap_or(0.0) - coupling.phase_value(i, j, &m).unwrap_or(0.0)) / (2.0 * dx);
    }
    let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let dir: Vec<f64> = if gnorm > 1e-8 {
        grad.iter().map(|g| g / gnorm).collect()
    } else {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    };
    // reach |phase| ~ 2h linearly, or quadratically at tangential zeros
    let reach = if gnorm > 1e-3 { 2.0 * h / gnorm } else { (2.0 * h).sqrt() };
    let n = 64;
    let mut out = Vec::with_capacity(2 * n);
    for s in 1..=n {
        for sign in [-1.0, 1.0] {
            let t = sign * reach * s as f64 / n as f64;
            let y: Vec<f64> = x.iter().zip(&dir).map(|(u, v)| u + t * v).collect();
            if coupling.field.grid.contains(&y) && coupling.field.grid.contains(&y.iter().zip(&coupling.phase.k).map(|(a, b)| a + b).collect::<Vec<_>>()) {
                out.push(y);
            }
        }
    }
    Ok(out)
}

/// Pass/fail of the two partial-transparency conditions for one pair of `R0`.
#[derive(Debug, Clone, Serialize)]
pub struct PartialTransparency {
    pub pair: (usize, usize),
    /// Intersections with translates of resonant sets sharing an index.
    pub translate_points: Vec<Vec<f64>>,
    pub translate_pass: bool,
    /// Intersections with resonant sets of coalescing branches.
    pub coalescence_points: Vec<Vec<f64>>,
    pub coalescence_pass: bool,
}

/// Checks transparency of each `R0` pair near the exceptional intersection sets.
pub fn partial_transparency_conditions(coupling: &Coupling, report: &ResonanceReport, r0: &[(usize, usize)]) -> Result<Vec<PartialTransparency>> {
    let tol = 2.0 * report.cell_size();
    let k = &report.phase.k;
    let minus_k: Vec<f64> = k.iter().map(|x| -x).collect();
    let zero = vec![0.0; k.len()];
    let h_values = default_shells();
    let mut out = Vec::new();
    for &(i, j) in r0 {
        let rij = report.roots(i, j);
        let mut translate = Vec::new();
        let mut coalesce = Vec::new();
        for &(a, b) in r0 {
            // (i', i) in R0: R_ij meets R_{i'i} - k ; (j, j') in R0: R_ij meets R_{jj'} + k
            if b == i {
                translate.extend(intersect_roots(&report.roots(a, b), &minus_k, &rij, tol));
            }
            if a == j {
                translate.extend(intersect_roots(&report.roots(a, b), k, &rij, tol));
            }
            // (i, i') with i' != j, and (j', j) with j' != i
            if (a == i && b != j) || (b == j && a != i) {
                coalesce.extend(intersect_roots(&report.roots(a, b), &zero, &rij, tol));
            }
        }
        let check = |pts: &Vec<Vec<f64>>| -> Result<bool> {
            if pts.is_empty() {
                return Ok(true);
            }
            let snapped: Vec<Vec<f64>> =
                pts.iter().map(|p| rij.iter().min_by(|x, y| dist(x, p).total_cmp(&dist(y, p))).cloned().unwrap_or_else(|| p.clone())).collect();
            Ok(transparency_near(coupling, i, j, &snapped, &h_values)?.verdict == Transparency::Transparent
                || ratio_bounded(coupling, i, j, &snapped, &h_values)?)
        };
        let translate_pass = check(&translate)?;
        let coalescence_pass = check(&coalesce)?;
        out.push(PartialTransparency { pair: (i, j), translate_points: translate, translate_pass, coalescence_points: coalesce, coalescence_pass });
    }
    Ok(out)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Coefficient vanishes at the points and its ratio to the phase stays bounded as shells shrink.
fn ratio_bounded(coupling: &Coupling, i: usize, j: usize, points: &[Vec<f64>], h_values: &[f64]) -> Result<bool> {
    let diag = transparency_near(coupling, i, j, points, h_values)?;
    let scale = coupling.scale();
    Ok(diag.at_resonance_norm <= coupling.field.policy.transparent * scale && diag.ratio_sup.windows(2).all(|w| w[1].1 <= 2.0 * w[0].1 + 1e-300))
}

/// Amplitude data entering the observation times.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StabilityInputs {
    pub k: f64,
    pub k_a: f64,
    pub a_sup: f64,
    pub a_hat_l1: f64,
    pub d: usize,
    /// Ball exponent for the improved localization (`rho = eps^beta`).
    pub beta: f64,
}

impl StabilityInputs {
    pub fn new(k: f64, k_a: f64, a_sup: f64, a_hat_l1: f64, d: usize) -> Self {
        StabilityInputs { k, k_a, a_sup, a_hat_l1, d, beta: 0.4 / d as f64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Unstable,
    Stable,
    Degenerate,
    StableByTransparency,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Unstable => "unstable",
            Verdict::Stable => "stable",
            Verdict::Degenerate => "degenerate",
            Verdict::StableByTransparency => "stable-by-transparency",
        }
    }
}

/// Per-pair summary entering the index.
#[derive(Debug, Clone, Serialize)]
pub struct PairSummary {
    pub pair: (usize, usize),
    pub transparency: Transparency,
    pub max_re_gamma: f64,
    pub max_abs_im_gamma: f64,
    pub gamma_rate: f64,
    pub coefficient_sup: f64,
    pub rank_one: bool,
    /// Root maximizing `Re sqrt(Gamma)`.
    pub argmax: Vec<f64>,
    pub identically_zero: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub r0: Vec<(usize, usize)>,
    pub pairs: Vec<PairSummary>,
    pub transparency: Vec<TransparencyDiagnostic>,
    pub gamma_index: f64,
    pub gamma: f64,
    pub main_pair: Option<(usize, usize)>,
    pub xi0: Option<Vec<f64>>,
    pub b0: f64,
    pub b_full: f64,
    pub t0: f64,
    pub k0: f64,
    pub t0_prime: f64,
    pub k0_prime: f64,
    pub t0_doubleprime: f64,
    pub k0_doubleprime: f64,
    pub t_inf: f64,
    pub inputs: StabilityInputs,
    /// `K <= K_a + 1/2`, the hypothesis under which the unstable verdict applies.
    pub k_gate: bool,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

/// Principal square root (`Re >= 0`).
pub fn principal_sqrt(z: C64) -> C64 {
    z.sqrt()
}

/// Runs transparency on every resonant pair, then assembles the index and derived constants.
pub fn stability_report(coupling: &Coupling, report: &ResonanceReport, inputs: StabilityInputs) -> Result<StabilityReport> {
    if !(inputs.a_sup > 0.0) {
        return Err(Error::Input("a_sup must be positive".into()));
    }
    let policy = coupling.field.policy;
    let h_values = default_shells();
    let mut notes = Vec::new();
    let mut diags = Vec::new();
    for p in &report.pairs {
        diags.push(transparency_check(coupling, report, p.i, p.j, &h_values)?);
    }
    let mut r0: Vec<(usize, usize)> = diags.iter().filter(|t| t.verdict != Transparency::Transparent).map(|t| t.pair).collect();
    for t in &diags {
        if t.verdict == Transparency::Borderline {
            notes.push(format!("pair {:?} is borderline; treated as non-transparent", t.pair));
        }
    }
    if let Some(&(i, _)) = r0.iter().find(|(i, j)| i == j) {
        notes.push(format!("auto-resonance ({i},{i}) is not transparent"));
    }
    r0.sort();

    let mut summaries = Vec::new();
    for &(i, j) in &r0 {
        let roots = report.roots(i, j);
        let roots = if roots.is_empty() { sample_window(report) } else { roots };
        let coeffs = coupling.coefficients(i, j, &roots)?;
        let mut best = (f64::NEG_INFINITY, roots[0].clone());
        let (mut re_max, mut im_max, mut sup) = (f64::NEG_INFINITY, 0.0f64, 0.0f64);
        let mut all_zero = true;
        for s in &coeffs.samples {
            re_max = re_max.max(s.gamma.re);
            im_max = im_max.max(s.gamma.im.abs());
            sup = sup.max(s.plus_norm().max(s.minus_norm()));
            let r = principal_sqrt(s.gamma).re;
            if r > best.0 {
                best = (r, s.xi.clone());
            }
            if s.gamma.norm() > policy.degenerate * coupling.scale().powi(2) {
                all_zero = false;
            }
        }
        if !coeffs.rank_one() {
            notes.push(format!("pair ({i},{j}) has interaction coefficients of rank above one"));
        }
        summaries.push(PairSummary {
            pair: (i, j),
            transparency: diags.iter().find(|t| t.pair == (i, j)).map(|t| t.verdict).unwrap_or(Transparency::NonTransparent),
            max_re_gamma: re_max,
            max_abs_im_gamma: im_max,
            gamma_rate: best.0.abs(),
            coefficient_sup: sup,
            rank_one: coeffs.rank_one(),
            argmax: best.1,
            identically_zero: all_zero,
        });
    }

    let b_full = global_coefficient_sup(coupling, report)?;
    let b0 = summaries.iter().map(|s| s.coefficient_sup).fold(0.0, f64::max);
    let scale = b0.max(coupling.scale()).powi(2);

    // pairs whose trace vanishes identically do not enter the index when others do not
    let active: Vec<&PairSummary> =
        if summaries.iter().any(|s| !s.identically_zero) { summaries.iter().filter(|s| !s.identically_zero).collect() } else { summaries.iter().collect() };
    let im_tol = policy.degenerate * scale;
    let gamma_index = if active.is_empty() {
        0.0
    } else if active.iter().any(|s| s.max_abs_im_gamma > im_tol) {
        active.iter().map(|s| s.max_re_gamma.max(s.max_abs_im_gamma)).fold(f64::NEG_INFINITY, f64::max)
    } else {
        active.iter().map(|s| s.max_re_gamma).fold(f64::NEG_INFINITY, f64::max)
    };
    let gamma = summaries.iter().map(|s| s.gamma_rate).fold(0.0, f64::max);

    // main pair: largest rate; near-ties go to the lexicographically largest pair
    let main = summaries
        .iter()
        .filter(|s| s.gamma_rate >= gamma * (1.0 - 1e-9) && (gamma > 0.0 || s.gamma_rate == gamma))
        .map(|s| (s.pair, s.argmax.clone()))
        .max_by(|a, b| a.0.cmp(&b.0));

    let verdict = if r0.is_empty() {
        Verdict::StableByTransparency
    } else if gamma_index.abs() <= policy.degenerate * scale {
        Verdict::Degenerate
    } else if gamma_index > 0.0 {
        Verdict::Unstable
    } else {
        Verdict::Stable
    };
    if verdict == Verdict::StableByTransparency {
        notes.push("no non-transparent resonance; index set to zero".into());
    }

    let StabilityInputs { k, k_a, a_sup, a_hat_l1, d, beta } = inputs;
    let df = d as f64;
    let t0 = (k / (b0 * a_hat_l1)).max((k - df / 2.0) / (gamma * a_sup));
    let k0 = (k * (1.0 - gamma * a_sup / (b0 * a_hat_l1))).min(df / 2.0);
    let gamma_main = main.as_ref().and_then(|(p, _)| summaries.iter().find(|s| s.pair == *p)).map(|s| s.gamma_rate).unwrap_or(0.0);
    let t0_prime = ((k - 0.5) / (b_full * a_hat_l1)).max((k - (df + 1.0) / 2.0) / (b_full * a_sup)).min(1.0 / (2.0 * (b_full - gamma_main) * a_sup));
    let k0_prime = k - t0_prime * gamma_main * a_sup;
    let t0_doubleprime = ((k - 0.5) / (b0 * a_hat_l1)).max((k - (df + 1.0) / 2.0) / (gamma * a_sup));
    let k0_doubleprime = k + beta * df / 2.0 - t0_doubleprime * gamma * a_sup;
    let t_inf = k / (gamma * a_sup);

    Ok(StabilityReport {
        r0,
        pairs: summaries,
        transparency: diags,
        gamma_index,
        gamma,
        main_pair: main.as_ref().map(|m| m.0),
        xi0: main.map(|m| m.1),
        b0,
        b_full,
        t0,
        k0,
        t0_prime,
        k0_prime,
        t0_doubleprime,
        k0_doubleprime,
        t_inf,
        inputs,
        k_gate: k <= k_a + 0.5,
        verdict,
        notes,
    })
}

/// Supremum of the coefficient norms over all branch pairs on a sample of the window.
fn global_coefficient_sup(coupling: &Coupling, report: &ResonanceReport) -> Result<f64> {
    let pts = sample_window(report);
    let nb = coupling.field.branches;
    let pairs: Vec<(usize, usize)> = (0..nb).flat_map(|i| (0..nb).map(move |j| (i, j))).collect();
    let sups: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut m: f64 = 0.0;
            for x in &pts {
                let s = coupling.sample(i, j, x)?;
                m = m.max(s.plus_norm().max(s.minus_norm()));
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let mut best = sups.into_iter().fold(0.0, f64::max);
    // include the resonant roots themselves, where the maxima over the resonant sets live
    for p in &report.pairs {
        for r in &p.roots {
            let s = coupling.sample(p.i, p.j, &r.xi)?;
            best = best.max(s.plus_norm().max(s.minus_norm()));
        }
    }
    Ok(best)
}

/// Outcome of dividing a homological source by its phase.
#[derive(Debug, Clone, Serialize)]
pub struct HomologicalSolution {
    pub pair: (usize, usize),
    pub harmonic: i32,
    pub solvable: bool,
    /// Sup of `|Q|` over the points where the phase is not small.
    pub sup_norm: f64,
    pub witness: Option<Vec<f64>>,
}

/// Solves `i(-l omega + lambda_i(xi + l k) - lambda_j(xi)) Q = D` pointwise, with
/// source `D = P_i(xi + l k) B(e_l) P_j(xi)` (zero for `l = 0`).
pub fn solve_homological(coupling: &Coupling, i: usize, j: usize, harmonic: i32, points: &[Vec<f64>]) -> Result<HomologicalSolution> {
    if !(-1..=1).contains(&harmonic) {
        return Err(Error::Input("harmonic must be -1, 0 or 1".into()));
    }
    let policy = coupling.field.policy;
    let scale = coupling.scale();
    let field = coupling.field;
    let l = harmonic as f64;
    let src = match harmonic {
        1 => Some(coupling.source_plus()),
        -1 => Some(coupling.source_minus()),
        _ => None,
    };
    let mut sup: f64 = 0.0;
    for x in points {
        let shifted: Vec<f64> = x.iter().zip(&coupling.phase.k).map(|(a, b)| a + l * b).collect();
        let at = field.eval(x)?;
        let up = field.eval(&shifted)?;
        let ph = -l * coupling.phase.omega + up.lambdas[i] - at.lambdas[j];
        let d_norm = match src {
            Some(b) => linalg::sup_norm(&(&up.projectors[i] * b * &at.projectors[j])),
            None => 0.0,
        };
        if ph.abs() > 1e-6 {
            sup = sup.max(d_norm / ph.abs());
        } else if d_norm > policy.transparent * scale {
            return Ok(HomologicalSolution { pair: (i, j), harmonic, solvable: false, sup_norm: f64::INFINITY, witness: Some(x.clone()) });
        }
    }
    Ok(HomologicalSolution { pair: (i, j), harmonic, solvable: true, sup_norm: sup, witness: None })
}

/// Change of basis reducing a rank-one off-diagonal block pair to a scalar 2x2 core.
#[derive(Debug, Clone)]
pub struct Symmetrizer {
    pub p: CMat,
    pub c12: C64,
    pub c21: C64,
}

impl Symmetrizer {
    /// `|nu C P - P nu R| / (1 + |nu C|)` with `C = [[0, nu12 C12], [nu21 C21, 0]]`
    /// and `R` the reduced form holding `nu21 c21` and `nu12 c12`.
    pub fn residual(&self, c12m: &CMat, c21m: &CMat, nu12: C64, nu21: C64) -> f64 {
        let n = c12m.nrows();
        let mut big = CMat::zeros(2 * n, 2 * n);
        big.view_mut((0, n), (n, n)).copy_from(&(c12m * nu12));
        big.view_mut((n, 0), (n, n)).copy_from(&(c21m * nu21));
        let mut r = CMat::zeros(2 * n, 2 * n);
        r[(n, 0)] = nu21 * self.c21;
        r[(0, n)] = nu12 * self.c12;
        let lhs = &big * &self.p;
        let rhs = &self.p * r;
        linalg::max_abs(&(lhs - rhs)) / (1.0 + linalg::max_abs(&big))
    }
}

/// Builds the basis `(e, a_i | f, b_i)` with `e` spanning the range of `C12`,
/// `a_i` the kernel of `C21`, `f` the range of `C21` and `b_i` the kernel of `C12`.
pub fn symmetrizer_basis(c12m: &CMat, c21m: &CMat) -> Result<Symmetrizer> {
    let n = c12m.nrows();
    if c12m.shape() != (n, n) || c21m.shape() != (n, n) {
        return Err(Error::Dimension { expected: n, got: c21m.nrows() });
    }
    let policy = NumericPolicy::default();
    for (name, m) in [("C12", c12m), ("C21", c21m)] {
        let sv = linalg::svd_sorted(m).0;
        if sv[0] == 0.0 || (n > 1 && sv[1] > sv[0] / policy.rank_gap) {
            return Err(Error::Precondition(format!("{name} is not numerically rank one")));
        }
    }
    let tr = linalg::trace(&(c12m * c21m));
    let scale = linalg::max_abs(c12m) * linalg::max_abs(c21m);
    if tr.norm() < policy.degenerate * scale {
        return Err(Error::Precondition("tr C12 C21 vanishes".into()));
    }
    let range = |m: &CMat| -> CVec {
        let svd = m.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let k = (0..svd.singular_values.len()).max_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b])).expect("non-empty");
        let mut v: CVec = u.column(k).into_owned();
        linalg::fix_phase(&mut v);
        v
    };
    let e = range(c12m);
    let f = range(c21m);
    let ker21 = linalg::orthogonal_complement(&range_basis(&c21m.adjoint()), n);
    let ker12 = linalg::orthogonal_complement(&range_basis(&c12m.adjoint()), n);
    let mut p = CMat::zeros(2 * n, 2 * n);
    p.view_mut((0, 0), (n, 1)).copy_from(&e);
    p.view_mut((0, 1), (n, n - 1)).copy_from(&ker21);
    p.view_mut((n, n), (n, 1)).copy_from(&f);
    p.view_mut((n, n + 1), (n, n - 1)).copy_from(&ker12);
    let c21 = (f.adjoint() * c21m * &e)[(0, 0)];
    let c12 = (e.adjoint() * c12m * &f)[(0, 0)];
    Ok(Symmetrizer { p, c12, c21 })
}

/// Unit vector spanning the range of a rank-one matrix, as an `n x 1` matrix.
fn range_basis(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let k = (0..svd.singular_values.len()).max_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b])).expect("non-empty");
    u.columns(k, 1).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{self, KgBranch};
    use crate::resonance::{analyze_resonances, Window};

    fn kg_setup(spec: SystemSpec, phase: Phase) -> (SpectralField, ResonanceReport, PolarizationVectors) {
        let (field, report) = analyze_resonances(&spec, &phase, &Window::around(&phase), NumericPolicy::default()).unwrap();
        let pol = polarization_vectors(&spec, &phase).unwrap();
        (field, report, pol)
    }

    #[test]
    fn kg_polarization_matches_closed_form() {
        let spec = catalog::kg_equal(1.0, 0.5, 1).unwrap();
        let phase = catalog::kg_fast_phase(1.0, &[1.0]);
        let pol = polarization_vectors(&spec, &phase).unwrap();
        let w = phase.omega;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expect = CVec::from_vec(vec![c(-s / w), c(s), C64::new(0.0, s / w), c(0.0), c(0.0), c(0.0)]);
        let overlap = linalg::inner(&pol.e1, &expect).norm();
        assert!((overlap - 1.0).abs() < 1e-12);
        assert!(pol.residuals[0] < 1e-12 && pol.residuals[1] < 1e-12);
    }

    #[test]
    fn zero_phase_three_wave_kernel_is_not_simple() {
        let spec = catalog::three_wave([1.0, 0.5, -0.5], [0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(polarization_vectors(&spec, &Phase::new(0.0, &[0.0])), Err(Error::Multiplicity { dim: 3 })));
    }

    #[test]
    fn trace_orderings_agree_and_null_branch_decouples() {
        let spec = catalog::kg_equal(1.0, 0.5, 1).unwrap();
        let phase = catalog::kg_fast_phase(1.0, &[1.0]);
        let (field, _, pol) = kg_setup(spec, phase.clone());
        let cp = Coupling::new(&field, &phase, &pol);
        let nl = KgBranch::Null.index();
        for &x in &[-3.0, -0.4, 0.7, 2.2] {
            for i in 0..5 {
                for j in 0..5 {
                    let s = cp.sample(i, j, &[x]).unwrap();
                    let other = linalg::trace(&(&s.b_minus * &s.b_plus));
                    assert!((s.gamma - other).norm() < 1e-12);
                }
            }
            let pn = &field.eval(&[x]).unwrap().projectors[nl];
            assert!(linalg::max_abs(&(pn * cp.source_plus())) < 1e-12);
            assert!(linalg::max_abs(&(pn * cp.source_minus())) < 1e-12);
        }
    }

    #[test]
    fn kg_equal_is_unstable() {
        let spec = catalog::kg_equal(1.0, 0.5, 1).unwrap();
        let phase = catalog::kg_fast_phase(1.0, &[1.0]);
        let (field, report, pol) = kg_setup(spec, phase.clone());
        let cp = Coupling::new(&field, &phase, &pol);
        let rep = stability_report(&cp, &report, StabilityInputs::new(3.0, 3.0, 1.0, 1.0, 1)).unwrap();
        assert_eq!(rep.verdict, Verdict::Unstable);
        assert!(rep.gamma <= rep.b0 + 1e-12);
        let fp = KgBranch::FastPlus.index();
        let sp = KgBranch::SlowPlus.index();
        assert_eq!(rep.main_pair, Some((fp, sp)));
    }

    #[test]
    fn kg_diff_sign_follows_iota() {
        for iota in [1.0, -1.0] {
            let spec = catalog::kg_diff(1.0, 0.5, 2.0, iota, 1).unwrap();
            let phase = catalog::kg_slow_phase(1.0, 0.5, 2.0, &[1.0]).unwrap();
            let (field, report, pol) = kg_setup(spec, phase.clone());
            let cp = Coupling::new(&field, &phase, &pol);
            let rep = stability_report(&cp, &report, StabilityInputs::new(3.0, 3.0, 1.0, 1.0, 1)).unwrap();
            let expect = if iota > 0.0 { Verdict::Unstable } else { Verdict::Stable };
            assert_eq!(rep.verdict, expect, "iota={iota} index={}", rep.gamma_index);
        }
    }

    #[test]
    fn transparent_pair_is_homologically_solvable() {
        let spec = catalog::kg_equal(1.0, 0.5, 1).unwrap();
        let phase = catalog::kg_fast_phase(1.0, &[1.0]);
        let (field, report, pol) = kg_setup(spec, phase.clone());
        let cp = Coupling::new(&field, &phase, &pol);
        let sp = KgBranch::SlowPlus.index();
        let nl = KgBranch::Null.index();
        let fp = KgBranch::FastPlus.index();
        let pts: Vec<Vec<f64>> = crate::spectral::linspace(-6.0, 6.0, 241).into_iter().map(|x| vec![x]).collect();
        let ok = solve_homological(&cp, sp, nl, 1, &pts).unwrap();
        assert!(ok.solvable && ok.sup_norm.is_finite());
        let mut pts12 = pts.clone();
        pts12.extend(report.roots(fp, sp));
        let bad = solve_homological(&cp, fp, sp, 1, &pts12).unwrap();
        assert!(!bad.solvable);
        let zero = solve_homological(&cp, fp, sp, 0, &pts).unwrap();
        assert!(zero.solvable && zero.sup_norm == 0.0);
    }

    #[test]
    fn symmetrizer_on_unit_rank_one() {
        let n = 3;
        let mut e = CMat::zeros(n, n);
        e[(0, 0)] = c(1.0);
        let s = symmetrizer_basis(&e, &e).unwrap();
        assert!((s.c12 - c(1.0)).norm() < 1e-14 && (s.c21 - c(1.0)).norm() < 1e-14);
        assert!(s.residual(&e, &e, c(1.0), c(1.0)) < 1e-14);
    }

    #[test]
    fn symmetrizer_rejects_rank_two() {
        let m = CMat::identity(3, 3);
        assert!(matches!(symmetrizer_basis(&m, &m), Err(Error::Precondition(_))));
    }
}
