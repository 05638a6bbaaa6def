//! Resonant frequencies `lambda_i(xi + k) - lambda_j(xi) = omega`, boundedness
//! of the resonant set, and characteristic harmonics of a phase.

use rayon::prelude::*;
use serde::Serialize;

use crate::dispersion::bisect;
use crate::error::{Error, Result};
use crate::linalg;
use crate::policy::NumericPolicy;
use crate::spectral::{asymptotic_slopes, default_radii, FrequencyGrid, SpectralField};
use crate::system::{Phase, SystemSpec};

pub use crate::dispersion::{Branch, PhaseMatch, PlasmaDispersion};

/// Axis-aligned search box with scan resolution per axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: usize,
}

impl Window {
    pub fn interval(lo: f64, hi: f64, points: usize) -> Self {
        Window { lo: vec![lo], hi: vec![hi], points }
    }

    pub fn square(lo: f64, hi: f64, points: usize) -> Self {
        Window { lo: vec![lo, lo], hi: vec![hi, hi], points }
    }

    /// Default box `[-8 kappa, 8 kappa]^d` with `kappa = max(|k|, 1)`.
    pub fn around(phase: &Phase) -> Self {
        let kappa = phase.k_norm().max(1.0);
        let d = phase.k.len();
        Window { lo: vec![-8.0 * kappa; d], hi: vec![8.0 * kappa; d], points: if d == 1 { 4001 } else { 161 } }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn axis(&self, a: usize) -> Vec<f64> {
        crate::spectral::linspace(self.lo[a], self.hi[a], self.points)
    }

    /// Spacing of the scan grid along the first axis.
    pub fn step(&self) -> f64 {
        (self.hi[0] - self.lo[0]) / (self.points - 1) as f64
    }

    /// Frequency grid covering the window and its translate by `k`.
    pub fn covering_grid(&self, k: &[f64], points: usize) -> FrequencyGrid {
        let axes = (0..self.dim())
            .map(|a| {
                let pad = 1e-9 * (self.hi[a] - self.lo[a]).abs().max(1.0);
                let lo = self.lo[a].min(self.lo[a] + k[a]) - pad;
                let hi = self.hi[a].max(self.hi[a] + k[a]) + pad;
                crate::spectral::linspace(lo, hi, points)
            })
            .collect();
        FrequencyGrid { axes }
    }
}

/// One located resonant frequency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Root {
    pub xi: Vec<f64>,
    pub residual: f64,
}

/// Resonances of one ordered branch pair.
#[derive(Debug, Clone, Serialize)]
pub struct PairResonance {
    pub i: usize,
    pub j: usize,
    /// Sorted ascending in 1D; edge crossings of the zero level set in 2D.
    pub roots: Vec<Root>,
    /// Centroids of marching-squares cells crossed by the zero level (2D only).
    pub cells: Vec<Vec<f64>>,
    /// The phase vanishes on the whole window (not a discrete set).
    pub identically_resonant: bool,
}

impl PairResonance {
    pub fn is_auto(&self) -> bool {
        self.i == self.j
    }

    pub fn is_resonant(&self) -> bool {
        self.identically_resonant || !self.roots.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Boundedness {
    Bounded,
    UnboundedAtInfinity,
    Undetermined,
}

impl Boundedness {
    pub fn as_str(self) -> &'static str {
        match self {
            Boundedness::Bounded => "bounded",
            Boundedness::UnboundedAtInfinity => "unbounded-at-infinity",
            Boundedness::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceReport {
    pub phase: Phase,
    pub window: Window,
    /// Every ordered pair `(i, j)` with at least one root or an identically vanishing phase.
    pub pairs: Vec<PairResonance>,
    pub verdict: Boundedness,
    pub harmonics: Vec<i64>,
    pub notes: Vec<String>,
}

impl ResonanceReport {
    pub fn pair(&self, i: usize, j: usize) -> Option<&PairResonance> {
        self.pairs.iter().find(|p| p.i == i && p.j == j)
    }

    /// Root locations of `(i, j)` (empty if the pair is not resonant).
    pub fn roots(&self, i: usize, j: usize) -> Vec<Vec<f64>> {
        self.pair(i, j).map(|p| p.roots.iter().map(|r| r.xi.clone()).collect()).unwrap_or_default()
    }

    /// Scan cell size, the resolution below which two roots are identified.
    pub fn cell_size(&self) -> f64 {
        let h = self.window.step();
        h * (self.window.dim() as f64).sqrt()
    }
}

/// `lambda_i(xi + k) - lambda_j(xi) - omega`.
pub fn resonance_phase(field: &SpectralField, phase: &Phase, i: usize, j: usize, xi: &[f64]) -> Result<f64> {
    let shifted: Vec<f64> = xi.iter().zip(&phase.k).map(|(a, b)| a + b).collect();
    Ok(field.lambda(&shifted, i)? - field.lambda(xi, j)? - phase.omega)
}

/// Computes a spectral field covering `window` and `window + k`, then locates resonances.
pub fn analyze_resonances(spec: &SystemSpec, phase: &Phase, window: &Window, policy: NumericPolicy) -> Result<(SpectralField, ResonanceReport)> {
    let pts = if window.dim() == 1 { 2049 } else { 129 };
    let field = SpectralField::compute(spec, window.covering_grid(&phase.k, pts), policy)?;
    let report = find_resonances(&field, phase, window)?;
    Ok((field, report))
}

/// Locates the zero sets of all ordered pair phases on `window`.
pub fn find_resonances(field: &SpectralField, phase: &Phase, window: &Window) -> Result<ResonanceReport> {
    let d = field.spec.d;
    if window.dim() != d || phase.k.len() != d {
        return Err(Error::Dimension { expected: d, got: window.dim() });
    }
    if window.points < 3 {
        return Err(Error::Input("window needs at least three scan points per axis".into()));
    }
    for a in 0..d {
        for x in [window.lo[a], window.hi[a], window.lo[a] + phase.k[a], window.hi[a] + phase.k[a]] {
            let (lo, hi) = (field.grid.axes[a][0], *field.grid.axes[a].last().expect("non-empty"));
            if x < lo - 1e-12 || x > hi + 1e-12 {
                return Err(Error::Range { point: vec![x], lo, hi });
            }
        }
    }
    let mut notes = Vec::new();
    let pairs = if d == 1 { scan_1d(field, phase, window)? } else { scan_2d(field, phase, window)? };
    let (verdict, mut vnotes) = boundedness(field, phase, window, &pairs)?;
    notes.append(&mut vnotes);
    if pairs.iter().any(|p| p.is_auto() && p.identically_resonant) {
        notes.push("identically resonant auto pairs present; excluded from the boundedness test".into());
    }
    let harmonics = characteristic_harmonics(&field.spec, phase, 4)?;
    Ok(ResonanceReport { phase: phase.clone(), window: window.clone(), pairs, verdict, harmonics, notes })
}

/// Spectra at the scan points and their translates by `k`.
fn sample(field: &SpectralField, phase: &Phase, pts: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let at: Vec<Vec<f64>> = pts.par_iter().map(|x| field.eval(x).map(|s| s.lambdas)).collect::<Result<_>>()?;
    let shifted: Vec<Vec<f64>> = pts
        .par_iter()
        .map(|x| {
            let y: Vec<f64> = x.iter().zip(&phase.k).map(|(a, b)| a + b).collect();
            field.eval(&y).map(|s| s.lambdas)
        })
        .collect::<Result<_>>()?;
    Ok((at, shifted))
}

fn identically_zero(vals: &[f64], scale: f64) -> bool {
    vals.iter().all(|v| v.abs() <= 1e-12 * scale)
}

fn scan_1d(field: &SpectralField, phase: &Phase, window: &Window) -> Result<Vec<PairResonance>> {
    let xs = window.axis(0);
    let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let (at, shifted) = sample(field, phase, &pts)?;
    let nb = field.branches;
    let scale = at.iter().chain(&shifted).flatten().fold(phase.omega.abs().max(1.0), |m, v| m.max(v.abs()));
    let pairs: Vec<(usize, usize)> = (0..nb).flat_map(|i| (0..nb).map(move |j| (i, j))).collect();
    let results: Vec<Result<Option<PairResonance>>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let f: Vec<f64> = (0..xs.len()).map(|m| shifted[m][i] - at[m][j] - phase.omega).collect();
            if identically_zero(&f, scale) {
                return Ok(Some(PairResonance { i, j, roots: Vec::new(), cells: Vec::new(), identically_resonant: true }));
            }
            let g = |x: f64| resonance_phase(field, phase, i, j, &[x]).unwrap_or(f64::NAN);
            let mut roots = Vec::new();
            for m in 0..xs.len() {
                if f[m] == 0.0 {
                    roots.push(xs[m]);
                    continue;
                }
                if m + 1 < xs.len() && f[m + 1] != 0.0 && f[m] * f[m + 1] < 0.0 {
                    roots.push(bisect(&g, xs[m], xs[m + 1], 1e-15));
                }
                // tangential zeros: local minimum of |f| without a sign change
                if m > 0 && m + 1 < xs.len() && f[m - 1] * f[m] > 0.0 && f[m] * f[m + 1] > 0.0 && f[m].abs() < f[m - 1].abs() && f[m].abs() < f[m + 1].abs() {
                    let x = golden_min(&|x| g(x).abs(), xs[m - 1], xs[m + 1]);
                    if g(x).abs() <= 1e-10 * scale {
                        roots.push(x);
                    }
                }
            }
            roots.sort_by(f64::total_cmp);
            roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
            if roots.is_empty() {
                return Ok(None);
            }
            let roots = roots
                .into_iter()
                .map(|x| resonance_phase(field, phase, i, j, &[x]).map(|r| Root { xi: vec![x], residual: r.abs() }))
                .collect::<Result<Vec<_>>>()?;
            Ok(Some(PairResonance { i, j, roots, cells: Vec::new(), identically_resonant: false }))
        })
        .collect();
    let mut out = Vec::new();
    for r in results {
        if let Some(p) = r? {
            out.push(p);
        }
    }
    Ok(out)
}

fn scan_2d(field: &SpectralField, phase: &Phase, window: &Window) -> Result<Vec<PairResonance>> {
    let (xa, ya) = (window.axis(0), window.axis(1));
    let (nx, ny) = (xa.len(), ya.len());
    let pts: Vec<Vec<f64>> = (0..nx * ny).map(|idx| vec![xa[idx / ny], ya[idx % ny]]).collect();
    let (at, shifted) = sample(field, phase, &pts)?;
    let nb = field.branches;
    let scale = at.iter().chain(&shifted).flatten().fold(phase.omega.abs().max(1.0), |m, v| m.max(v.abs()));
    let pairs: Vec<(usize, usize)> = (0..nb).flat_map(|i| (0..nb).map(move |j| (i, j))).collect();
    let results: Vec<Result<Option<PairResonance>>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let f: Vec<f64> = (0..pts.len()).map(|m| shifted[m][i] - at[m][j] - phase.omega).collect();
            if identically_zero(&f, scale) {
                return Ok(Some(PairResonance { i, j, roots: Vec::new(), cells: Vec::new(), identically_resonant: true }));
            }
            let id = |ix: usize, iy: usize| ix * ny + iy;
            let mut roots = Vec::new();
            // every grid edge with a sign change carries one refined crossing
            let mut edge = |p: usize, q: usize| -> Result<()> {
                let (fp, fq) = (f[p], f[q]);
                if fp == 0.0 {
                    roots.push(pts[p].clone());
                } else if fp * fq < 0.0 {
                    let (a, b) = (&pts[p], &pts[q]);
                    let along = |s: f64| {
                        let x: Vec<f64> = a.iter().zip(b).map(|(u, v)| u + s * (v - u)).collect();
                        resonance_phase(field, phase, i, j, &x).unwrap_or(f64::NAN)
                    };
                    let s = bisect(&along, 0.0, 1.0, 1e-15);
                    roots.push(a.iter().zip(b).map(|(u, v)| u + s * (v - u)).collect());
                }
                Ok(())
            };
            for ix in 0..nx {
                for iy in 0..ny {
                    if iy + 1 < ny {
                        edge(id(ix, iy), id(ix, iy + 1))?;
                    }
                    if ix + 1 < nx {
                        edge(id(ix, iy), id(ix + 1, iy))?;
                    }
                }
            }
            let mut cells = Vec::new();
            for ix in 0..nx - 1 {
                for iy in 0..ny - 1 {
                    let c = [f[id(ix, iy)], f[id(ix + 1, iy)], f[id(ix, iy + 1)], f[id(ix + 1, iy + 1)]];
                    let pos = c.iter().any(|v| *v >= 0.0);
                    let neg = c.iter().any(|v| *v <= 0.0);
                    if pos && neg {
                        cells.push(vec![0.5 * (xa[ix] + xa[ix + 1]), 0.5 * (ya[iy] + ya[iy + 1])]);
                    }
                }
            }
            if roots.is_empty() {
                return Ok(None);
            }
            roots.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
            roots.dedup();
            let roots =
                roots.into_iter().map(|x| resonance_phase(field, phase, i, j, &x).map(|r| Root { xi: x, residual: r.abs() })).collect::<Result<Vec<_>>>()?;
            Ok(Some(PairResonance { i, j, roots, cells, identically_resonant: false }))
        })
        .collect();
    let mut out = Vec::new();
    for r in results {
        if let Some(p) = r? {
            out.push(p);
        }
    }
    Ok(out)
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    0.5 * (a + b)
}

/// Sample directions for the slope test.
fn directions(d: usize) -> Vec<Vec<f64>> {
    if d == 1 {
        vec![vec![1.0], vec![-1.0]]
    } else {
        (0..16)
            .map(|m| {
                let t = std::f64::consts::PI * m as f64 / 8.0;
                vec![t.cos(), t.sin()]
            })
            .collect()
    }
}

fn boundedness(field: &SpectralField, phase: &Phase, window: &Window, pairs: &[PairResonance]) -> Result<(Boundedness, Vec<String>)> {
    let spec = &field.spec;
    let mut notes = Vec::new();
    let mut coinciding = false;
    for dir in directions(spec.d) {
        let s = asymptotic_slopes(spec, &dir, &default_radii(spec))?;
        if !s.coinciding.is_empty() {
            coinciding = true;
            notes.push(format!(
                "coinciding asymptotic slopes in direction {:?}: {:?}",
                dir,
                s.coinciding.iter().map(|&(a, b)| s.slopes[a].max(s.slopes[b])).collect::<Vec<_>>()
            ));
        }
    }
    // roots close to the window boundary suggest the zero set continues outside
    let margin = 2.0 * window.step();
    let edge_roots = pairs
        .iter()
        .filter(|p| !p.identically_resonant)
        .any(|p| p.roots.iter().any(|r| (0..window.dim()).any(|a| r.xi[a] - window.lo[a] <= margin || window.hi[a] - r.xi[a] <= margin)));
    if coinciding {
        let v = if edge_roots { Boundedness::UnboundedAtInfinity } else { Boundedness::Undetermined };
        return Ok((v, notes));
    }
    if spec.d == 1 {
        // a phase still heading toward zero at the boundary may have roots outside
        let h = window.step();
        let nb = field.branches;
        for i in 0..nb {
            for j in 0..nb {
                if pairs.iter().any(|p| p.i == i && p.j == j && p.identically_resonant) {
                    continue;
                }
                for (x, out) in [(window.lo[0], -1.0), (window.hi[0], 1.0)] {
                    let f0 = resonance_phase(field, phase, i, j, &[x])?;
                    let f1 = resonance_phase(field, phase, i, j, &[x - out * h])?;
                    let slope = (f0 - f1) / h;
                    if f0 * slope < 0.0 && slope.abs() > 1e-9 * (1.0 + f0.abs()) && f0.abs() < slope.abs() * (window.hi[0] - window.lo[0]) {
                        notes.push(format!("pair ({i},{j}) phase decreasing toward zero at window edge {x}"));
                        return Ok((Boundedness::Undetermined, notes));
                    }
                }
            }
        }
    }
    Ok((Boundedness::Bounded, notes))
}

/// Harmonics `|p| <= pmax` for which `p omega - (A0/i + A(p k))` is singular.
pub fn characteristic_harmonics(spec: &SystemSpec, phase: &Phase, pmax: i64) -> Result<Vec<i64>> {
    if pmax < 2 {
        return Err(Error::Input(format!("pmax must be at least 2 (got {pmax})")));
    }
    if phase.k.len() != spec.d {
        return Err(Error::Dimension { expected: spec.d, got: phase.k.len() });
    }
    let mut out = Vec::new();
    for p in -pmax..=pmax {
        if is_characteristic(spec, &phase.harmonic(p as f64)) {
            out.push(p);
        }
    }
    Ok(out)
}

/// True if `-i omega + A0 + i A(k)` is singular up to the characteristic tolerance.
pub fn is_characteristic(spec: &SystemSpec, phase: &Phase) -> bool {
    let m = spec.characteristic_matrix(1.0, phase.omega, &phase.k);
    let sv = linalg::svd_sorted(&m).0;
    let top = sv.first().copied().unwrap_or(0.0).max(1.0);
    sv.last().copied().unwrap_or(0.0) <= NumericPolicy::default().characteristic * top
}

/// Points of `a + shift` lying within `tol` of some point of `b`.
pub fn intersect_roots(a: &[Vec<f64>], shift: &[f64], b: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for x in a {
        let y: Vec<f64> = x.iter().zip(shift).map(|(u, s)| u + s).collect();
        if b.iter().any(|z| z.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt() <= tol) {
            out.push(y);
        }
    }
    out
}

/// Minimum distance between `a + shift` and `b` (infinite if either is empty).
pub fn set_distance(a: &[Vec<f64>], shift: &[f64], b: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for x in a {
        for z in b {
            let dist = x.iter().zip(shift).zip(z).map(|((u, s), p)| (u + s - p).powi(2)).sum::<f64>().sqrt();
            best = best.min(dist);
        }
    }
    best
}

/// Solves the three-wave matching problem on the plasma dispersion relation.
pub fn match_phases_on_dispersion(relation: &PlasmaDispersion, target: Branch, k1: f64) -> Result<PhaseMatch> {
    relation.match_phases(target, k1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{self, KgBranch};

    fn kg() -> (SpectralField, ResonanceReport) {
        let spec = catalog::kg_equal(1.0, 0.5, 1).unwrap();
        let phase = catalog::kg_fast_phase(1.0, &[1.0]);
        analyze_resonances(&spec, &phase, &Window::around(&phase), NumericPolicy::default()).unwrap()
    }

    #[test]
    fn kg_resonant_sets() {
        let (_, r) = kg();
        let fp = KgBranch::FastPlus.index();
        let sp = KgBranch::SlowPlus.index();
        let nl = KgBranch::Null.index();
        let fm = KgBranch::FastMinus.index();
        let r15 = r.roots(fp, nl);
        assert_eq!(r15.len(), 2);
        assert!((r15[0][0] + 2.0).abs() < 1e-8 && r15[1][0].abs() < 1e-8);
        let r54 = r.roots(nl, fm);
        assert_eq!(r54.len(), 2);
        assert!((r54[0][0] + 1.0).abs() < 1e-8 && (r54[1][0] - 1.0).abs() < 1e-8);
        let r12 = r.roots(fp, sp);
        assert_eq!(r12.len(), 2);
        for root in &r.pair(fp, sp).unwrap().roots {
            assert!(root.residual <= 1e-10);
        }
        assert_eq!(r.verdict, Boundedness::Bounded);
        assert_eq!(r.harmonics, vec![-1, 0, 1]);
    }

    #[test]
    fn kg_phase_at_reference() {
        let (field, _) = kg();
        let ph = catalog::kg_fast_phase(1.0, &[1.0]);
        let v = resonance_phase(&field, &ph, KgBranch::FastPlus.index(), KgBranch::SlowPlus.index(), &[0.0]).unwrap();
        assert!((v + 1.0).abs() < 1e-12);
        let v = resonance_phase(&field, &ph, KgBranch::FastPlus.index(), KgBranch::Null.index(), &[-2.0]).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn three_wave_pair_and_auto_flags() {
        let spec = catalog::three_wave([1.0, 0.5, -0.5], [0.0, 1.0, 1.0]).unwrap();
        let phase = Phase::new(0.0, &[0.0]);
        let (_, r) = analyze_resonances(&spec, &phase, &Window::interval(-1.0, 1.0, 201), NumericPolicy::default()).unwrap();
        assert!(r.pairs.iter().filter(|p| p.is_auto()).all(|p| p.identically_resonant));
        let cross: Vec<_> = r.pairs.iter().filter(|p| !p.is_auto()).collect();
        assert_eq!(cross.len(), 6);
        for p in cross {
            assert_eq!(p.roots.len(), 1);
            assert!(p.roots[0].xi[0].abs() < 1e-12);
        }
        assert_eq!(r.verdict, Boundedness::Bounded);
        assert_eq!(r.harmonics.len(), 9);
    }

    #[test]
    fn truncated_window_is_undetermined() {
        let spec = catalog::kg_equal(1.0, 0.5, 1).unwrap();
        let phase = catalog::kg_fast_phase(1.0, &[1.0]);
        let (_, r) = analyze_resonances(&spec, &phase, &Window::interval(-3.0, 3.0, 601), NumericPolicy::default()).unwrap();
        assert_eq!(r.verdict, Boundedness::Undetermined);
    }

    #[test]
    fn mll_not_bounded() {
        let spec = catalog::mll(1).unwrap();
        let phase = Phase::new(0.5, &[0.3]);
        let (_, r) = analyze_resonances(&spec, &phase, &Window::interval(-20.0, 20.0, 801), NumericPolicy::default()).unwrap();
        assert_ne!(r.verdict, Boundedness::Bounded);
    }

    #[test]
    fn second_harmonic_detected() {
        let spec = catalog::kg_diff(1.0, 0.5, 1.5, 1.0, 1).unwrap();
        let k = (1.75f64 / 3.0).sqrt();
        let phase = catalog::kg_slow_phase(1.0, 0.5, 1.5, &[k]).unwrap();
        let h = characteristic_harmonics(&spec, &phase, 4).unwrap();
        assert!(h.contains(&2) && h.contains(&-2), "{h:?}");
    }

    #[test]
    fn kg_2d_rings() {
        let spec = catalog::kg_equal(1.0, 0.5, 2).unwrap();
        let phase = catalog::kg_fast_phase(1.0, &[1.0, 0.0]);
        let (_, r) = analyze_resonances(&spec, &phase, &Window::square(-3.0, 3.0, 61), NumericPolicy::default()).unwrap();
        let roots = r.roots(KgBranch::Null.index(), KgBranch::FastMinus.index());
        assert!(roots.len() > 20);
        for x in roots {
            assert!((f64::hypot(x[0], x[1]) - 1.0).abs() < 1e-8);
        }
    }
}
