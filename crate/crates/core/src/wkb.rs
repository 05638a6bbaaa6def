//! Leading-order WKB solutions: weak transparency, the cubic transport
//! equation for the amplitude, first correctors and consistency residuals.

use rand::rngs::ChaCha8Rng;
use rand::{RngExt, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::{self, PeriodicGrid};
use crate::interaction::PolarizationVectors;
use crate::linalg::{self, c, CMat, CVec, C64};
use crate::resonance::characteristic_harmonics;
use crate::system::{Phase, SystemSpec};

/// Orthogonal projector onto `ker L(i p beta)`.
pub fn harmonic_projector(spec: &SystemSpec, phase: &Phase, p: f64) -> CMat {
    let l = spec.characteristic_matrix(p, phase.omega, &phase.k);
    linalg::projector(&linalg::kernel(&l, crate::policy::NumericPolicy::default().characteristic))
}

fn harmonics_gate(spec: &SystemSpec, phase: &Phase) -> Result<()> {
    let h = characteristic_harmonics(spec, phase, 4)?;
    if h.iter().any(|p| p.abs() > 1) {
        return Err(Error::NotApplicable(format!("characteristic harmonics {h:?} exceed {{-1, 0, 1}}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct TransparencyWitness {
    pub harmonic: i32,
    pub u: Vec<(f64, f64)>,
    pub v: Vec<(f64, f64)>,
    pub norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakTransparencyReport {
    pub pass: bool,
    pub max_norm: f64,
    pub scale: f64,
    pub witness: Option<TransparencyWitness>,
}

/// Tests that the projected harmonic sums of `B` vanish for `p` in `{-1, 0, 1}`,
/// on all pairs of basis vectors and `samples` random pairs.
pub fn weak_transparency_check(spec: &SystemSpec, phase: &Phase, samples: usize, seed: u64) -> Result<WeakTransparencyReport> {
    harmonics_gate(spec, phase)?;
    let n = spec.n;
    let proj: Vec<CMat> = (-1..=1).map(|p| harmonic_projector(spec, phase, p as f64)).collect();
    let pi = |p: i32| &proj[(p + 1) as usize];
    let mut pairs: Vec<(CVec, CVec)> = Vec::new();
    for a in 0..n {
        for b in 0..n {
            let mut u = CVec::zeros(n);
            let mut v = CVec::zeros(n);
            u[a] = c(1.0);
            v[b] = c(1.0);
            pairs.push((u, v));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let mut draw = || {
            let v = CVec::from_fn(n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let s = v.norm();
            v / c(s)
        };
        let u = draw();
        let v = draw();
        pairs.push((u, v));
    }
    let scale = spec.bilinear_bound().max(f64::MIN_POSITIVE);
    let mut max_norm: f64 = 0.0;
    let mut witness = None;
    for (u, v) in &pairs {
        for p in -1..=1i32 {
            let mut sum = CVec::zeros(n);
            for p1 in -1..=1i32 {
                let p2 = p - p1;
                if p2.abs() > 1 {
                    continue;
                }
                sum += spec.bilinear(&(pi(p1) * u), &(pi(p2) * v));
            }
            let r = linalg::vec_sup(&(pi(p) * sum));
            if r > max_norm {
                max_norm = r;
                if r > 1e-10 * scale {
                    let pack = |w: &CVec| w.iter().map(|z| (z.re, z.im)).collect();
                    witness = Some(TransparencyWitness { harmonic: p, u: pack(u), v: pack(v), norm: r });
                }
            }
        }
    }
    Ok(WeakTransparencyReport { pass: max_norm <= 1e-10 * scale, max_norm, scale, witness })
}

/// Constant vectors and scalars of the cascade at a fixed phase.
#[derive(Debug, Clone)]
pub struct CascadeData {
    pub e1: CVec,
    pub em1: CVec,
    pub group_velocity: f64,
    /// Coefficient of `|g|^2 g` in the amplitude equation.
    pub cubic: C64,
    /// `L(2 i beta)^{-1} B(e1, e1)`.
    pub second_harmonic: CVec,
    /// `L(-2 i beta)^{-1} B(e-1, e-1)`.
    pub second_harmonic_conj: CVec,
    /// `L(0)^(-1) B(e1) e-1`.
    pub mean_mode: CVec,
    /// The reference solution does not oscillate; `u_a = g e1`.
    pub zero_phase: bool,
}

/// Assembles group velocity, cubic coefficient and corrector profiles.
pub fn cascade_coefficients(spec: &SystemSpec, phase: &Phase, pol: &PolarizationVectors) -> Result<CascadeData> {
    if spec.d != 1 {
        return Err(Error::NotApplicable("amplitude transport is implemented in one space dimension".into()));
    }
    let a = crate::linalg::to_complex(&spec.aj[0]);
    if phase.is_zero() {
        let bee = spec.bilinear(&pol.e1, &pol.e1);
        if linalg::vec_sup(&bee) > 1e-12 * spec.bilinear_bound().max(1.0) {
            return Err(Error::NotApplicable("non-oscillating reference needs B(e, e) = 0".into()));
        }
        let v = linalg::inner(&(&a * &pol.e1), &pol.e1).re;
        let zero = CVec::zeros(spec.n);
        return Ok(CascadeData {
            e1: pol.e1.clone(),
            em1: pol.em1.clone(),
            group_velocity: v,
            cubic: c(0.0),
            second_harmonic: zero.clone(),
            second_harmonic_conj: zero.clone(),
            mean_mode: zero,
            zero_phase: true,
        });
    }
    harmonics_gate(spec, phase)?;
    let tol = 1e-10;
    let l2 = spec.characteristic_matrix(2.0, phase.omega, &phase.k);
    let lm2 = spec.characteristic_matrix(-2.0, phase.omega, &phase.k);
    let l0 = spec.characteristic_matrix(0.0, phase.omega, &phase.k);
    let w2 = linalg::partial_inverse(&l2, tol) * spec.bilinear(&pol.e1, &pol.e1);
    let wm2 = linalg::partial_inverse(&lm2, tol) * spec.bilinear(&pol.em1, &pol.em1);
    let b_e1 = spec.linearize(&pol.e1).linear;
    let b_em1 = spec.linearize(&pol.em1).linear;
    let w0 = linalg::partial_inverse(&l0, tol) * (&b_e1 * &pol.em1);
    let drive = &b_em1 * &w2 + &b_e1 * &w0;
    let cubic = linalg::inner(&drive, &pol.e1);
    Ok(CascadeData {
        e1: pol.e1.clone(),
        em1: pol.em1.clone(),
        group_velocity: group_velocity(spec, phase)?,
        cubic,
        second_harmonic: w2,
        second_harmonic_conj: wm2,
        mean_mode: w0,
        zero_phase: false,
    })
}

/// Centered difference of the branch through `(omega, k)`.
pub fn group_velocity(spec: &SystemSpec, phase: &Phase) -> Result<f64> {
    let k = phase.k[0];
    let h = 1e-5 * k.abs().max(1.0);
    let at = |x: f64| -> Result<f64> {
        let (vals, _) = linalg::hermitian_eig(&spec.assemble_symbol(&[x])?);
        Ok(vals.into_iter().min_by(|a, b| (a - phase.omega).abs().total_cmp(&(b - phase.omega).abs())).expect("non-empty spectrum"))
    };
    Ok((at(k + h)? - at(k - h)?) / (2.0 * h))
}

/// Initial amplitude profiles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Amplitude {
    Gaussian { center: f64, width: f64, height: f64 },
    Samples(Vec<(f64, f64)>),
}

impl Amplitude {
    pub fn sample(&self, grid: &PeriodicGrid) -> Result<Vec<C64>> {
        match self {
            Amplitude::Gaussian { center, width, height } => {
                if !(*width > 0.0) {
                    return Err(Error::Input("amplitude width must be positive".into()));
                }
                Ok(grid.xs().iter().map(|x| c(height * (-((x - center) / width).powi(2)).exp())).collect())
            }
            Amplitude::Samples(s) => {
                if s.len() != grid.points {
                    return Err(Error::Dimension { expected: grid.points, got: s.len() });
                }
                Ok(s.iter().map(|&(re, im)| C64::new(re, im)).collect())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct WkbSolution {
    pub phase: Phase,
    pub cascade: CascadeData,
    pub grid: PeriodicGrid,
    pub times: Vec<f64>,
    /// Amplitude snapshots `g(t, x)` on `grid`, one per entry of `times`.
    pub amplitude: Vec<Vec<C64>>,
    pub ka_measured: Option<f64>,
}

impl WkbSolution {
    /// Leading term `g e^{i theta} e1 + c.c.` (or `g e1` without oscillation) on a grid
    /// of `points` nodes at snapshot `snap`, optionally with the first corrector.
    pub fn reconstruct(&self, snap: usize, epsilon: f64, points: usize, with_corrector: bool) -> Vec<CVec> {
        let fields = SlowFields::new(self, snap, points);
        let dx = self.grid.length / points as f64;
        (0..points).map(|i| self.assemble(&fields, i, i as f64 * dx, epsilon, with_corrector).0).collect()
    }

    /// `u` and `eps d_t u`, `eps d_x u` at one fine-grid node.
    fn assemble(&self, f: &SlowFields, i: usize, x: f64, eps: f64, with_corrector: bool) -> (CVec, CVec, CVec) {
        let cd = &self.cascade;
        let (g, gx, gt) = (f.g[i], f.gx[i], f.gt[i]);
        if cd.zero_phase {
            return (&cd.e1 * g, &cd.e1 * (gt * eps), &cd.e1 * (gx * eps));
        }
        let theta = (self.phase.k[0] * x - self.phase.omega * f.t) / eps;
        let e = C64::from_polar(1.0, theta);
        let (k, w) = (self.phase.k[0], self.phase.omega);
        let i1 = C64::new(0.0, 1.0);
        let ge = g * e;
        let gce = (g * e).conj();
        let mut u = &cd.e1 * ge + &cd.em1 * gce;
        let mut ut = &cd.e1 * (e * (eps * gt - i1 * w * g)) + &cd.em1 * (e * (eps * gt - i1 * w * g)).conj();
        let mut ux = &cd.e1 * (e * (eps * gx + i1 * k * g)) + &cd.em1 * (e * (eps * gx + i1 * k * g)).conj();
        if with_corrector {
            let se = eps.sqrt();
            let e2 = e * e;
            let (g2, g2t, g2x) = (g * g, 2.0 * g * gt, 2.0 * g * gx);
            let (m, mt, mx) = (g.norm_sqr(), 2.0 * (g.conj() * gt).re, 2.0 * (g.conj() * gx).re);
            u += (&cd.second_harmonic * (g2 * e2) + &cd.second_harmonic_conj * (g2 * e2).conj() + &cd.mean_mode * c(m)) * c(se);
            ut += (&cd.second_harmonic * (e2 * (eps * g2t - 2.0 * i1 * w * g2))
                + &cd.second_harmonic_conj * (e2 * (eps * g2t - 2.0 * i1 * w * g2)).conj()
                + &cd.mean_mode * c(eps * mt))
                * c(se);
            ux += (&cd.second_harmonic * (e2 * (eps * g2x + 2.0 * i1 * k * g2))
                + &cd.second_harmonic_conj * (e2 * (eps * g2x + 2.0 * i1 * k * g2)).conj()
                + &cd.mean_mode * c(eps * mx))
                * c(se);
        }
        (u, ut, ux)
    }
}

/// Amplitude, its space and time derivatives, interpolated to a fine grid.
struct SlowFields {
    t: f64,
    g: Vec<C64>,
    gx: Vec<C64>,
    gt: Vec<C64>,
}

impl SlowFields {
    fn new(sol: &WkbSolution, snap: usize, points: usize) -> Self {
        let g = &sol.amplitude[snap];
        let gx = fourier::derivative(g, sol.grid.length);
        let cd = &sol.cascade;
        let gt: Vec<C64> = g.iter().zip(&gx).map(|(&a, &ax)| -cd.group_velocity * ax + cd.cubic * a.norm_sqr() * a).collect();
        SlowFields { t: sol.times[snap], g: fourier::interpolate(g, points), gx: fourier::interpolate(&gx, points), gt: fourier::interpolate(&gt, points) }
    }
}

/// Solves `g_t + v g_x = c3 |g|^2 g` on a periodic grid: spectral in space, RK4 in time.
pub fn solve_transport(
    spec: &SystemSpec,
    phase: &Phase,
    pol: &PolarizationVectors,
    g0: &[C64],
    grid: PeriodicGrid,
    t_end: f64,
    snapshots: usize,
) -> Result<WkbSolution> {
    if g0.len() != grid.points {
        return Err(Error::Dimension { expected: grid.points, got: g0.len() });
    }
    if !(t_end >= 0.0) {
        return Err(Error::Input("t_end must be non-negative".into()));
    }
    let cascade = cascade_coefficients(spec, phase, pol)?;
    let (v, c3) = (cascade.group_velocity, cascade.cubic);
    let kmax = std::f64::consts::PI / grid.dx();
    let amp = g0.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let dt_cfl = 0.2 / (v.abs() * kmax + c3.norm() * amp * amp + 1e-300);
    let snaps = snapshots.max(2);
    let per = t_end / (snaps - 1) as f64;
    let sub = if per > 0.0 { (per / dt_cfl).ceil().max(1.0) as usize } else { 1 };
    let dt = per / sub as f64;
    let ks = grid.wavenumbers();
    let fft = fourier::FftPair::new(grid.points);
    let rhs = |g: &[C64]| -> Vec<C64> {
        let mut h = g.to_vec();
        fft.forward(&mut h);
        for (z, k) in h.iter_mut().zip(&ks) {
            *z *= C64::new(0.0, *k);
        }
        fft.inverse(&mut h);
        g.iter().zip(h).map(|(&a, ax)| -v * ax + c3 * a.norm_sqr() * a).collect()
    };
    let axpy = |a: &[C64], s: f64, b: &[C64]| -> Vec<C64> { a.iter().zip(b).map(|(x, y)| x + y * s).collect() };
    let mut g = g0.to_vec();
    let mut times = vec![0.0];
    let mut out = vec![g.clone()];
    for s in 1..snaps {
        for _ in 0..sub {
            let k1 = rhs(&g);
            let k2 = rhs(&axpy(&g, 0.5 * dt, &k1));
            let k3 = rhs(&axpy(&g, 0.5 * dt, &k2));
            let k4 = rhs(&axpy(&g, dt, &k3));
            for i in 0..g.len() {
                g[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
            }
        }
        times.push(s as f64 * per);
        out.push(g.clone());
    }
    Ok(WkbSolution { phase: phase.clone(), cascade, grid, times, amplitude: out, ka_measured: None })
}

/// Exact solution of the amplitude equation along characteristics.
pub fn exact_transport(cubic: C64, velocity: f64, grid: &PeriodicGrid, g0: &[C64], t: f64) -> Vec<C64> {
    let shifted = fourier::translate(g0, grid.length, velocity * t);
    shifted
        .into_iter()
        .map(|a| {
            let s = a.norm_sqr();
            let (r, im) = (cubic.re, cubic.im);
            let denom = 1.0 - 2.0 * r * s * t;
            let phase = if r.abs() * s * t > 1e-12 { -im / (2.0 * r) * denom.ln() } else { im * s * t };
            a * (1.0 / denom.sqrt()) * C64::from_polar(1.0, phase)
        })
        .collect()
}

/// Residuals of the truncated expansion across `epsilons` and the fitted order.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub epsilons: Vec<f64>,
    pub residuals: Vec<f64>,
    pub grid_points: Vec<usize>,
    pub with_corrector: bool,
    pub order: f64,
}

/// Minimum sampling density of the fundamental oscillation.
pub const MIN_POINTS_PER_WAVELENGTH: f64 = 8.0;

/// Grid size giving at least `ppw` nodes per fundamental wavelength `2 pi eps / |k|`.
pub fn resolving_points(grid: &PeriodicGrid, phase: &Phase, epsilon: f64, ppw: f64) -> usize {
    let k = phase.k_norm();
    if k == 0.0 {
        return grid.points;
    }
    let needed = (ppw * grid.length * k / (2.0 * std::f64::consts::PI * epsilon)).ceil() as usize;
    needed.max(grid.points).next_power_of_two()
}

/// Sup-norm residual of `eps u_t + A0 u + eps A u_x - sqrt(eps) B(u, u)` at snapshot `snap`.
///
/// `points` overrides the fine grid size; it must resolve the oscillation.
pub fn residual_at(sol: &WkbSolution, spec: &SystemSpec, epsilon: f64, snap: usize, with_corrector: bool, points: Option<usize>) -> Result<(f64, usize)> {
    let n_fine = match points {
        Some(p) => {
            let k = sol.phase.k_norm();
            let ppw = 2.0 * std::f64::consts::PI * epsilon * p as f64 / (sol.grid.length * k.max(1e-300));
            if k > 0.0 && ppw < MIN_POINTS_PER_WAVELENGTH {
                return Err(Error::Resolution { points_per_wavelength: ppw });
            }
            p.max(sol.grid.points)
        }
        None => resolving_points(&sol.grid, &sol.phase, epsilon, MIN_POINTS_PER_WAVELENGTH),
    };
    let fields = SlowFields::new(sol, snap, n_fine);
    let a0 = linalg::to_complex(&spec.a0);
    let a = linalg::to_complex(&spec.aj[0]);
    let dx = sol.grid.length / n_fine as f64;
    let se = epsilon.sqrt();
    let worst = (0..n_fine)
        .into_par_iter()
        .map(|i| {
            let (u, ut, ux) = sol.assemble(&fields, i, i as f64 * dx, epsilon, with_corrector);
            let r = ut + &a0 * &u + &a * ux - spec.bilinear(&u, &u) * c(se);
            linalg::vec_sup(&r)
        })
        .reduce(|| 0.0, f64::max);
    Ok((worst, n_fine))
}

/// Evaluates residuals for each `eps` and fits `log residual` against `log eps`.
pub fn consistency_residual(sol: &WkbSolution, spec: &SystemSpec, epsilons: &[f64], snap: usize, with_corrector: bool) -> Result<ResidualReport> {
    if epsilons.len() < 2 {
        return Err(Error::Input("need at least two epsilons".into()));
    }
    if snap >= sol.times.len() {
        return Err(Error::Input("snapshot index out of range".into()));
    }
    let mut res = Vec::new();
    let mut pts = Vec::new();
    for &e in epsilons {
        let (r, n) = residual_at(sol, spec, e, snap, with_corrector, None)?;
        res.push(r);
        pts.push(n);
    }
    let fit: Vec<(f64, f64)> = epsilons.iter().zip(&res).map(|(e, r)| (e.ln(), r.max(1e-300).ln())).collect();
    Ok(ResidualReport { epsilons: epsilons.to_vec(), residuals: res, grid_points: pts, with_corrector, order: crate::spectral::ls_slope(&fit) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::interaction::polarization_vectors;
    use crate::system::Triplet;

    fn kg() -> (SystemSpec, Phase, PolarizationVectors) {
        let spec = catalog::kg_equal(1.0, 0.5, 1).unwrap();
        let phase = catalog::kg_fast_phase(1.0, &[1.0]);
        let pol = polarization_vectors(&spec, &phase).unwrap();
        (spec, phase, pol)
    }

    #[test]
    fn kg_forms_are_weakly_transparent() {
        let (spec, phase, _) = kg();
        assert!(weak_transparency_check(&spec, &phase, 32, 7).unwrap().pass);
        // at k = 1 the fourth harmonic is characteristic for these parameters
        let spec = catalog::kg_diff(1.0, 0.5, 2.0, 1.0, 1).unwrap();
        let phase = catalog::kg_slow_phase(1.0, 0.5, 2.0, &[0.7]).unwrap();
        assert!(weak_transparency_check(&spec, &phase, 32, 7).unwrap().pass);
    }

    #[test]
    fn mean_mode_leak_breaks_weak_transparency() {
        let (mut spec, phase, _) = kg();
        let lay = catalog::KgLayout { d: 1 };
        spec.b.push(Triplet::new(lay.u1(0), lay.u2(), lay.u2(), 1.0));
        let rep = weak_transparency_check(&spec, &phase, 8, 7).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.witness.unwrap().harmonic, 0);
    }

    #[test]
    fn partial_inverse_identity() {
        let (spec, phase, _) = kg();
        for p in [-1.0, 0.0, 1.0] {
            let l = spec.characteristic_matrix(p, phase.omega, &phase.k);
            let lhs = linalg::partial_inverse(&l, 1e-10) * &l;
            let rhs = CMat::identity(spec.n, spec.n) - harmonic_projector(&spec, &phase, p);
            assert!(linalg::max_abs(&(lhs - rhs)) < 1e-10);
        }
    }

    #[test]
    fn group_velocity_matches_closed_form() {
        let (spec, phase, _) = kg();
        let v = group_velocity(&spec, &phase).unwrap();
        assert!((v - 1.0 / 2f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn transport_matches_characteristics() {
        let (spec, phase, pol) = kg();
        let grid = PeriodicGrid::new(40.0, 256).unwrap();
        let g0 = Amplitude::Gaussian { center: 20.0, width: 2.0, height: 1.0 }.sample(&grid).unwrap();
        let sol = solve_transport(&spec, &phase, &pol, &g0, grid, 2.0, 5).unwrap();
        let exact = exact_transport(sol.cascade.cubic, sol.cascade.group_velocity, &grid, &g0, 2.0);
        let err = sol.amplitude[4].iter().zip(&exact).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn zero_datum_stays_zero() {
        let (spec, phase, pol) = kg();
        let grid = PeriodicGrid::new(10.0, 64).unwrap();
        let sol = solve_transport(&spec, &phase, &pol, &vec![c(0.0); 64], grid, 1.0, 3).unwrap();
        assert!(sol.amplitude.iter().flatten().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn three_wave_reference_is_exact() {
        let spec = catalog::three_wave([1.0, 0.5, -0.5], [0.0, 1.0, 1.0]).unwrap();
        let phase = Phase::new(0.0, &[0.0]);
        let pol = PolarizationVectors::supplied(&spec, &phase, &catalog::three_wave_polarization()).unwrap();
        let grid = PeriodicGrid::new(40.0, 256).unwrap();
        let g0 = Amplitude::Gaussian { center: 20.0, width: 2.0, height: 1.0 }.sample(&grid).unwrap();
        let sol = solve_transport(&spec, &phase, &pol, &g0, grid, 1.0, 3).unwrap();
        assert_eq!(sol.cascade.cubic, c(0.0));
        for e in [1e-2, 1e-3] {
            let (r, _) = residual_at(&sol, &spec, e, 2, false, None).unwrap();
            assert!(r < 1e-10, "{r}");
        }
    }

    #[test]
    fn underresolved_grid_is_rejected() {
        let (spec, phase, pol) = kg();
        let grid = PeriodicGrid::new(10.0, 64).unwrap();
        let g0 = Amplitude::Gaussian { center: 5.0, width: 1.0, height: 1.0 }.sample(&grid).unwrap();
        let sol = solve_transport(&spec, &phase, &pol, &g0, grid, 0.0, 2).unwrap();
        assert!(matches!(residual_at(&sol, &spec, 1e-3, 0, false, Some(256)), Err(Error::Resolution { .. })));
    }
}
