//! Stock systems: three-wave interaction, coupled Klein-Gordon systems,
//! linearized Maxwell-Landau-Lifshitz and the plasma dispersion relation.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::dispersion::PlasmaDispersion;
use crate::error::{Error, Result};
use crate::linalg::{c, CVec};
use crate::system::{Phase, SystemSpec, Triplet, CONJ_LEFT};

/// Three-wave interaction `u_t + diag(c) u_x = B(u,u)/sqrt(eps)` with
/// sources `b1 conj(u2) u3`, `b2 conj(u1) u3`, `b3 u1 u2`.
pub fn three_wave(c: [f64; 3], b: [f64; 3]) -> Result<SystemSpec> {
    let a0 = DMatrix::zeros(3, 3);
    let a1 = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&c));
    let mut trip = Vec::new();
    if b[0] != 0.0 {
        trip.push(Triplet::new(0, 1, 2, b[0]).conjugated(CONJ_LEFT));
    }
    if b[1] != 0.0 {
        trip.push(Triplet::new(1, 0, 2, b[1]).conjugated(CONJ_LEFT));
    }
    if b[2] != 0.0 {
        trip.push(Triplet::new(2, 0, 1, b[2]));
    }
    Ok(SystemSpec::new("three-wave", a0, vec![a1], trip)?.with_params(&[("c1", c[0]), ("c2", c[1]), ("c3", c[2]), ("b1", b[0]), ("b2", b[1]), ("b3", b[2])]))
}

/// Reference polarization of the three-wave system: the pump component.
pub fn three_wave_polarization() -> CVec {
    CVec::from_vec(vec![c(1.0), c(0.0), c(0.0)])
}

/// The long-wave Brillouin scaling of the three-wave system.
///
/// The Brillouin system (first two velocities and sources scaled by `1/eps`,
/// third unscaled) maps onto the three-wave system in `v` through
/// `u = (sqrt(eps) v1, sqrt(eps) v2, v3)(t / sqrt(eps), sqrt(eps) x)`.
#[derive(Debug, Clone)]
pub struct BrillouinScaling {
    pub spec: SystemSpec,
}

impl BrillouinScaling {
    pub fn new(c: [f64; 3], b: [f64; 3]) -> Result<Self> {
        let mut spec = three_wave(c, b)?;
        spec.name = "brillouin".into();
        Ok(BrillouinScaling { spec })
    }

    /// Time in the Brillouin scaling corresponding to time `t_v` in the three-wave scaling.
    pub fn time(&self, eps: f64, t_v: f64) -> f64 {
        eps.sqrt() * t_v
    }

    /// Position in the Brillouin scaling corresponding to `x_v`.
    pub fn position(&self, eps: f64, x_v: f64) -> f64 {
        x_v / eps.sqrt()
    }

    /// Converts a three-wave state sample into the Brillouin variables.
    pub fn state(&self, eps: f64, v: [crate::linalg::C64; 3]) -> [crate::linalg::C64; 3] {
        let s = eps.sqrt();
        [v[0] * s, v[1] * s, v[2]]
    }
}

/// Spectral branches of the coupled Klein-Gordon systems, named by role.
///
/// Indices are the branch labels produced by [`crate::spectral::SpectralField`]
/// (ascending eigenvalue at the reference point).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgBranch {
    FastPlus,
    SlowPlus,
    SlowMinus,
    FastMinus,
    Null,
}

impl KgBranch {
    pub fn index(self) -> usize {
        match self {
            KgBranch::FastMinus => 0,
            KgBranch::SlowMinus => 1,
            KgBranch::Null => 2,
            KgBranch::SlowPlus => 3,
            KgBranch::FastPlus => 4,
        }
    }

    pub fn all() -> [KgBranch; 5] {
        [KgBranch::FastPlus, KgBranch::SlowPlus, KgBranch::SlowMinus, KgBranch::FastMinus, KgBranch::Null]
    }

    pub fn name(self) -> &'static str {
        match self {
            KgBranch::FastPlus => "fast+",
            KgBranch::SlowPlus => "slow+",
            KgBranch::SlowMinus => "slow-",
            KgBranch::FastMinus => "fast-",
            KgBranch::Null => "null",
        }
    }
}

/// Component offsets of the state `(u1[d], u2, u3, v1[d], v2, v3)`.
#[derive(Debug, Clone, Copy)]
pub struct KgLayout {
    pub d: usize,
}

impl KgLayout {
    pub fn n(&self) -> usize {
        2 * (self.d + 2)
    }
    pub fn u1(&self, j: usize) -> usize {
        j
    }
    pub fn u2(&self) -> usize {
        self.d
    }
    pub fn u3(&self) -> usize {
        self.d + 1
    }
    pub fn v1(&self, j: usize) -> usize {
        self.d + 2 + j
    }
    pub fn v2(&self) -> usize {
        2 * self.d + 2
    }
    pub fn v3(&self) -> usize {
        2 * self.d + 3
    }
}

fn kg_linear(omega0: f64, theta0: f64, mass_ratio: f64, d: usize) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let l = KgLayout { d };
    let n = l.n();
    let mut a0 = DMatrix::zeros(n, n);
    a0[(l.u2(), l.u3())] = mass_ratio * omega0;
    a0[(l.u3(), l.u2())] = -mass_ratio * omega0;
    a0[(l.v2(), l.v3())] = omega0;
    a0[(l.v3(), l.v2())] = -omega0;
    let aj = (0..d)
        .map(|j| {
            let mut a = DMatrix::zeros(n, n);
            a[(l.u1(j), l.u2())] = -1.0;
            a[(l.u2(), l.u1(j))] = -1.0;
            a[(l.v1(j), l.v2())] = -theta0;
            a[(l.v2(), l.v1(j))] = -theta0;
            a
        })
        .collect();
    (a0, aj)
}

fn check_kg(omega0: f64, theta0: f64, d: usize) -> Result<()> {
    if !(omega0 > 0.0) {
        return Err(Error::Input(format!("omega0 must be positive (got {omega0})")));
    }
    if !(theta0 > 0.0 && theta0 < 1.0) {
        return Err(Error::Input(format!("theta0 must lie in (0, 1) (got {theta0})")));
    }
    if !(1..=2).contains(&d) {
        return Err(Error::Input(format!("d must be 1 or 2 (got {d})")));
    }
    Ok(())
}

/// Coupled Klein-Gordon system with equal masses and velocities `1` and `theta0`.
pub fn kg_equal(omega0: f64, theta0: f64, d: usize) -> Result<SystemSpec> {
    check_kg(omega0, theta0, d)?;
    let l = KgLayout { d };
    let (a0, aj) = kg_linear(omega0, theta0, 1.0, d);
    let b = vec![
        Triplet::new(l.u2(), l.u3(), l.v3(), 0.5),
        Triplet::new(l.u2(), l.v3(), l.u3(), 0.5),
        Triplet::new(l.u2(), l.v3(), l.v3(), 0.5),
        Triplet::new(l.v2(), l.u2(), l.u2(), -0.5),
        Triplet::new(l.v2(), l.v2(), l.v3(), 0.5),
        Triplet::new(l.v2(), l.v3(), l.v2(), 0.5),
    ];
    Ok(SystemSpec::new("kg-equal", a0, aj, b)?.with_params(&[("omega0", omega0), ("theta0", theta0)]))
}

/// Coupled Klein-Gordon system with masses `alpha0 * omega0` and `omega0`; `iota` sets the sign of the slow-wave source.
pub fn kg_diff(omega0: f64, theta0: f64, alpha0: f64, iota: f64, d: usize) -> Result<SystemSpec> {
    check_kg(omega0, theta0, d)?;
    if !(alpha0 > 1.0) {
        return Err(Error::Input(format!("alpha0 must exceed 1 for distinct masses (got {alpha0})")));
    }
    if iota != 1.0 && iota != -1.0 {
        return Err(Error::Input(format!("iota must be +1 or -1 (got {iota})")));
    }
    let l = KgLayout { d };
    let (a0, aj) = kg_linear(omega0, theta0, alpha0, d);
    let s = -0.5 * iota;
    let b = vec![
        Triplet::new(l.u2(), l.u3(), l.v3(), 0.5),
        Triplet::new(l.u2(), l.v3(), l.u3(), 0.5),
        Triplet::new(l.u2(), l.v3(), l.v3(), 0.5),
        Triplet::new(l.v2(), l.u2(), l.u2(), s),
        Triplet::new(l.v2(), l.u2(), l.v2(), s),
        Triplet::new(l.v2(), l.v2(), l.u2(), s),
    ];
    Ok(SystemSpec::new("kg-diff", a0, aj, b)?.with_params(&[("omega0", omega0), ("theta0", theta0), ("alpha0", alpha0), ("iota", iota)]))
}

/// Phase on the fast positive branch: `omega = sqrt(omega0^2 + |k|^2)`.
pub fn kg_fast_phase(omega0: f64, k: &[f64]) -> Phase {
    let k2: f64 = k.iter().map(|x| x * x).sum();
    Phase::new((omega0 * omega0 + k2).sqrt(), k)
}

/// Phase on the slow positive branch: `omega = sqrt(omega0^2 + theta0^2 |k|^2)`.
///
/// For the distinct-mass system the wavenumber must satisfy
/// `|k|^2 < (alpha0^2 - 1) omega0^2 / theta0^2`.
pub fn kg_slow_phase(omega0: f64, theta0: f64, alpha0: f64, k: &[f64]) -> Result<Phase> {
    let k2: f64 = k.iter().map(|x| x * x).sum();
    let bound = (alpha0 * alpha0 - 1.0) * omega0 * omega0 / (theta0 * theta0);
    if k2 >= bound {
        return Err(Error::Input(format!("|k|^2 = {k2} must be below (alpha0^2 - 1) omega0^2 / theta0^2 = {bound}")));
    }
    Ok(Phase::new((omega0 * omega0 + theta0 * theta0 * k2).sqrt(), k))
}

/// Linearized Maxwell-Landau-Lifshitz system around `(E, H, M) = (0, M0, M0)`,
/// `M0 = (1, 0, 0)`, with spatial variables along the first `d` axes.
pub fn mll(d: usize) -> Result<SystemSpec> {
    if !(1..=2).contains(&d) {
        return Err(Error::Input(format!("d must be 1 or 2 (got {d})")));
    }
    let cross = |a: [f64; 3]| DMatrix::from_row_slice(3, 3, &[0.0, -a[2], a[1], a[2], 0.0, -a[0], -a[1], a[0], 0.0]);
    let j = cross([1.0, 0.0, 0.0]);
    let mut a0 = DMatrix::zeros(9, 9);
    a0.view_mut((3, 3), (3, 3)).copy_from(&(-&j));
    a0.view_mut((3, 6), (3, 3)).copy_from(&j);
    a0.view_mut((6, 3), (3, 3)).copy_from(&j);
    a0.view_mut((6, 6), (3, 3)).copy_from(&(-&j));
    let aj = (0..d)
        .map(|axis| {
            let mut e = [0.0; 3];
            e[axis] = 1.0;
            let cj = cross(e);
            let mut a = DMatrix::zeros(9, 9);
            a.view_mut((0, 3), (3, 3)).copy_from(&(-&cj));
            a.view_mut((3, 0), (3, 3)).copy_from(&cj);
            a
        })
        .collect();
    SystemSpec::new("mll-variety", a0, aj, vec![])
}

/// Coefficients (highest degree first) of the degree-9 characteristic
/// polynomial of the linearized Maxwell-Landau-Lifshitz symbol, given the
/// component `xi1` along the magnetization and the norm `r = |xi|`.
pub fn mll_characteristic_polynomial(xi1: f64, r: f64) -> Result<[f64; 10]> {
    if r < xi1.abs() - 1e-14 * r.max(1.0) {
        return Err(Error::Input(format!("|xi| = {r} must be at least |xi1| = {}", xi1.abs())));
    }
    let r2 = r * r;
    let x2 = xi1 * xi1;
    Ok([1.0, 0.0, -2.0 * (2.0 + r2), 0.0, r2 * (6.0 + r2) - 2.0 * x2, 0.0, -r2 * (2.0 * r2 - x2), 0.0, 0.0, 0.0])
}

/// Real roots of a real polynomial (coefficients highest degree first) via the companion matrix.
pub fn polynomial_roots(coeffs: &[f64]) -> Vec<crate::linalg::C64> {
    let lead = coeffs.iter().position(|&x| x != 0.0).unwrap_or(coeffs.len());
    let trail = coeffs.iter().rev().take_while(|&&x| x == 0.0).count().min(coeffs.len() - lead);
    let p = &coeffs[lead..coeffs.len() - trail];
    let zeros = std::iter::repeat(c(0.0)).take(trail);
    let n = p.len().saturating_sub(1);
    if n == 0 {
        return zeros.collect();
    }
    let mut m = crate::linalg::CMat::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = c(-p[j + 1] / p[0]);
    }
    for i in 1..n {
        m[(i, i - 1)] = c(1.0);
    }
    let mut roots = crate::linalg::general_eigenvalues(&m);
    roots.extend(zeros);
    roots
}

/// A stock system with its default fundamental phase and reference polarization.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub id: String,
    pub spec: SystemSpec,
    pub phase: Phase,
    /// Polarization supplied by the catalog when the phase is not simple.
    pub polarization: Option<CVec>,
}

/// Plasma dispersion entry (no full system is provided).
pub fn em_dispersion(theta_e: f64, theta_i: f64, alpha: f64) -> Result<PlasmaDispersion> {
    PlasmaDispersion::new(theta_e, theta_i, alpha)
}

/// Identifiers accepted by [`build`].
pub const IDS: [&str; 6] = ["three-wave", "brillouin", "kg-equal", "kg-diff", "mll-variety", "em-dispersion"];

/// Parameter names and defaults per catalog id.
pub fn defaults(id: &str) -> Result<Vec<(&'static str, f64)>> {
    Ok(match id {
        "three-wave" | "brillouin" => {
            vec![("c1", 1.0), ("c2", 0.5), ("c3", -0.5), ("b1", 0.0), ("b2", 1.0), ("b3", 1.0)]
        }
        "kg-equal" => vec![("omega0", 1.0), ("theta0", 0.5), ("d", 1.0), ("k", 1.0)],
        "kg-diff" => vec![("omega0", 1.0), ("theta0", 0.5), ("alpha0", 2.0), ("iota", 1.0), ("d", 1.0), ("k", 1.0)],
        "mll-variety" => vec![("d", 1.0)],
        "em-dispersion" => vec![("theta_e", 0.1), ("theta_i", 0.01), ("alpha", 0.5)],
        other => return Err(Error::Input(format!("unknown catalog id '{other}' (known: {})", IDS.join(", ")))),
    })
}

/// Builds a catalog system; `params` overrides the defaults of [`defaults`].
pub fn build(id: &str, params: &BTreeMap<String, f64>) -> Result<CatalogEntry> {
    let defs = defaults(id)?;
    for key in params.keys() {
        if !defs.iter().any(|(k, _)| k == key) {
            return Err(Error::Input(format!("catalog '{id}' has no parameter '{key}'")));
        }
    }
    let get = |key: &str| params.get(key).copied().unwrap_or_else(|| defs.iter().find(|(k, _)| *k == key).expect("known key").1);
    let dim = |key: &str| -> Result<usize> {
        let v = get(key);
        if v == 1.0 || v == 2.0 {
            Ok(v as usize)
        } else {
            Err(Error::Input(format!("d must be 1 or 2 (got {v})")))
        }
    };
    match id {
        "three-wave" | "brillouin" => {
            let c3 = [get("c1"), get("c2"), get("c3")];
            let b3 = [get("b1"), get("b2"), get("b3")];
            let spec = if id == "brillouin" { BrillouinScaling::new(c3, b3)?.spec } else { three_wave(c3, b3)? };
            Ok(CatalogEntry { id: id.into(), spec, phase: Phase::new(0.0, &[0.0]), polarization: Some(three_wave_polarization()) })
        }
        "kg-equal" => {
            let d = dim("d")?;
            let spec = kg_equal(get("omega0"), get("theta0"), d)?;
            let mut k = vec![0.0; d];
            k[0] = get("k");
            let phase = kg_fast_phase(get("omega0"), &k);
            Ok(CatalogEntry { id: id.into(), spec, phase, polarization: None })
        }
        "kg-diff" => {
            let d = dim("d")?;
            let spec = kg_diff(get("omega0"), get("theta0"), get("alpha0"), get("iota"), d)?;
            let mut k = vec![0.0; d];
            k[0] = get("k");
            let phase = kg_slow_phase(get("omega0"), get("theta0"), get("alpha0"), &k)?;
            Ok(CatalogEntry { id: id.into(), spec, phase, polarization: None })
        }
        "mll-variety" => {
            let d = dim("d")?;
            Ok(CatalogEntry { id: id.into(), spec: mll(d)?, phase: Phase::new(0.0, &vec![0.0; d]), polarization: None })
        }
        "em-dispersion" => Err(Error::NotApplicable("em-dispersion provides dispersion relations only, not a system".into())),
        _ => unreachable!("checked by defaults"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    #[test]
    fn kg_equal_spectrum() {
        let s = kg_equal(1.0, 0.5, 1).unwrap();
        assert_eq!(s.n, 6);
        let x = 1.7_f64;
        let (vals, _) = linalg::hermitian_eig(&s.assemble_symbol(&[x]).unwrap());
        let f = (1.0 + x * x).sqrt();
        let sl = (1.0 + 0.25 * x * x).sqrt();
        let expect = [-f, -sl, 0.0, 0.0, sl, f];
        for (a, b) in vals.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kg_equal_symbol_at_zero_has_only_mass_entries() {
        let s = kg_equal(1.0, 0.5, 1).unwrap();
        let h = s.assemble_symbol(&[0.0]).unwrap();
        let nz: Vec<_> = h.iter().filter(|z| z.norm() > 0.0).collect();
        assert_eq!(nz.len(), 4);
        assert!(nz.iter().all(|z| z.re == 0.0 && z.im.abs() == 1.0));
    }

    #[test]
    fn kg_diff_range_gates() {
        assert!(kg_diff(1.0, 0.5, 1.0, 1.0, 1).is_err());
        assert!(kg_equal(1.0, 1.5, 1).is_err());
        assert!(kg_slow_phase(1.0, 0.5, 2.0, &[4.0]).is_err());
        assert!(kg_slow_phase(1.0, 0.5, 2.0, &[1.0]).is_ok());
    }

    #[test]
    fn kg_fast_phase_is_characteristic() {
        let s = kg_equal(1.0, 0.5, 1).unwrap();
        let ph = kg_fast_phase(1.0, &[1.0]);
        let m = s.characteristic_matrix(1.0, ph.omega, &ph.k);
        assert!(linalg::min_singular_value(&m) < 1e-12);
    }

    #[test]
    fn mll_symbol_matches_polynomial() {
        let s = mll(2).unwrap();
        for &(x1, x2) in &[(0.0, 0.0), (1.0, 0.0), (0.3, 0.8), (2.0, -1.5)] {
            let (vals, _) = linalg::hermitian_eig(&s.assemble_symbol(&[x1, x2]).unwrap());
            let r = f64::hypot(x1, x2);
            let p = mll_characteristic_polynomial(x1, r).unwrap();
            for v in &vals {
                let scale: f64 = p.iter().enumerate().map(|(i, a)| a.abs() * v.abs().powi(9 - i as i32)).sum::<f64>().max(1.0);
                let val: f64 = p.iter().fold(0.0, |acc, a| acc * v + a);
                assert!(val.abs() < 1e-10 * scale, "xi=({x1},{x2}) root {v} residual {val}");
            }
        }
    }

    #[test]
    fn mll_roots_at_zero_frequency() {
        let roots = polynomial_roots(&mll_characteristic_polynomial(0.0, 0.0).unwrap());
        let mut re: Vec<f64> = roots.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] + 2.0).abs() < 1e-10 && (re[8] - 2.0).abs() < 1e-10);
        assert!(re[1..8].iter().all(|x| x.abs() < 1e-6));
    }

    #[test]
    fn longitudinal_constant_term() {
        let r = 1.3;
        let p = mll_characteristic_polynomial(r, r).unwrap();
        assert!((p[6] + r.powi(4)).abs() < 1e-12);
    }

    #[test]
    fn build_rejects_unknown() {
        assert!(build("nope", &BTreeMap::new()).unwrap_err().is_input());
        let mut p = BTreeMap::new();
        p.insert("zeta".to_string(), 1.0);
        assert!(build("kg-equal", &p).unwrap_err().is_input());
    }

    #[test]
    fn three_wave_source_matches_equations() {
        let s = three_wave([1.0, 0.5, -0.5], [0.3, 0.7, -1.1]).unwrap();
        let u = CVec::from_vec(vec![crate::linalg::C64::new(0.2, 0.1), crate::linalg::C64::new(-0.4, 0.3), crate::linalg::C64::new(0.5, -0.6)]);
        let q = s.bilinear(&u, &u);
        assert!((q[0] - u[1].conj() * u[2] * 0.3).norm() < 1e-15);
        assert!((q[1] - u[0].conj() * u[2] * 0.7).norm() < 1e-15);
        assert!((q[2] - u[0] * u[1] * -1.1).norm() < 1e-15);
    }
}
