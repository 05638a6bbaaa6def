//! Branch-tracked spectral decomposition of the symbol over frequency grids.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::policy::NumericPolicy;
use crate::system::SystemSpec;

/// Tensor-product frequency grid (one axis per spatial dimension).
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub axes: Vec<Vec<f64>>,
}

impl FrequencyGrid {
    pub fn line(lo: f64, hi: f64, n: usize) -> Self {
        FrequencyGrid { axes: vec![linspace(lo, hi, n)] }
    }

    pub fn square(lo: f64, hi: f64, n: usize) -> Self {
        FrequencyGrid { axes: vec![linspace(lo, hi, n), linspace(lo, hi, n)] }
    }

    pub fn from_axes(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 || axes.iter().any(|a| a.is_empty()) {
            return Err(Error::Input("grid needs one or two non-empty axes".into()));
        }
        for a in &axes {
            if a.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Input("grid axes must be strictly increasing".into()));
            }
        }
        Ok(FrequencyGrid { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len()).collect()
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        match self.axes.len() {
            1 => vec![self.axes[0][idx]],
            _ => {
                let ny = self.axes[1].len();
                vec![self.axes[0][idx / ny], self.axes[1][idx % ny]]
            }
        }
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.axes.iter().map(|a| (a[0], a[a.len() - 1])).collect()
    }

    pub fn contains(&self, xi: &[f64]) -> bool {
        xi.len() == self.dim()
            && self.bounds().iter().zip(xi).all(|(&(lo, hi), &x)| {
                let pad = 1e-12 * (hi - lo).abs().max(1.0);
                x >= lo - pad && x <= hi + pad
            })
    }

    /// Index of the grid point nearest to `xi`.
    pub fn nearest(&self, xi: &[f64]) -> usize {
        let idx: Vec<usize> = self.axes.iter().zip(xi).map(|(a, &x)| nearest_on_axis(a, x)).collect();
        match idx.len() {
            1 => idx[0],
            _ => idx[0] * self.axes[1].len() + idx[1],
        }
    }

    fn neighbors(&self, idx: usize) -> Vec<usize> {
        match self.axes.len() {
            1 => {
                let n = self.axes[0].len();
                let mut v = Vec::new();
                if idx + 1 < n {
                    v.push(idx + 1);
                }
                if idx > 0 {
                    v.push(idx - 1);
                }
                v
            }
            _ => {
                let (nx, ny) = (self.axes[0].len(), self.axes[1].len());
                let (ix, iy) = (idx / ny, idx % ny);
                let mut v = Vec::new();
                if iy + 1 < ny {
                    v.push(idx + 1);
                }
                if iy > 0 {
                    v.push(idx - 1);
                }
                if ix + 1 < nx {
                    v.push(idx + ny);
                }
                if ix > 0 {
                    v.push(idx - ny);
                }
                v
            }
        }
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn nearest_on_axis(a: &[f64], x: f64) -> usize {
    match a.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => i,
        Err(0) => 0,
        Err(i) if i >= a.len() => a.len() - 1,
        Err(i) => {
            if (x - a[i - 1]).abs() <= (a[i] - x).abs() {
                i - 1
            } else {
                i
            }
        }
    }
}

/// Eigen-data at one frequency, before branch labels are attached.
#[derive(Debug, Clone)]
struct RawDecomposition {
    vals: Vec<f64>,
    vecs: CMat,
    groups: Vec<std::ops::Range<usize>>,
}

fn decompose(spec: &SystemSpec, xi: &[f64], tol: f64) -> Result<RawDecomposition> {
    let h = spec.assemble_symbol(xi)?;
    let (vals, vecs) = linalg::hermitian_eig(&h);
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(xi, "eigensolver returned non-finite values"));
    }
    let scale = vals.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let groups = linalg::clusters(&vals, tol * scale);
    Ok(RawDecomposition { vals, vecs, groups })
}

/// Per-frequency eigenvalues and eigenprojectors with a globally consistent branch labeling.
#[derive(Debug, Clone)]
pub struct SpectralField {
    pub spec: SystemSpec,
    pub grid: FrequencyGrid,
    pub branches: usize,
    pub multiplicities: Vec<usize>,
    /// `lambdas[point][branch]`
    pub lambdas: Vec<Vec<f64>>,
    /// `projectors[point][branch]`
    pub projectors: Vec<Vec<CMat>>,
    pub policy: NumericPolicy,
    reference: usize,
}

/// Branch values and projectors at one frequency.
#[derive(Debug, Clone)]
pub struct PointSpectrum {
    pub lambdas: Vec<f64>,
    pub projectors: Vec<CMat>,
}

impl SpectralField {
    /// Eigendecomposes the symbol on every grid point (in parallel) and labels
    /// branches by overlap-maximizing continuation from a reference point.
    ///
    /// The reference is the first grid point where the number of distinct
    /// eigenvalue clusters is largest; branches are numbered by ascending
    /// eigenvalue there.
    pub fn compute(spec: &SystemSpec, grid: FrequencyGrid, policy: NumericPolicy) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::Input("empty frequency grid".into()));
        }
        if grid.dim() != spec.d {
            return Err(Error::Dimension { expected: spec.d, got: grid.dim() });
        }
        let raw: Vec<RawDecomposition> =
            (0..grid.len()).into_par_iter().map(|i| decompose(spec, &grid.point(i), policy.cluster)).collect::<Result<Vec<_>>>()?;

        let counts: Vec<usize> = raw.iter().map(|r| r.groups.len()).collect();
        let branches = *counts.iter().max().expect("non-empty grid");
        let reference = counts.iter().position(|&c| c == branches).expect("max exists");
        let multiplicities: Vec<usize> = raw[reference].groups.iter().map(|g| g.len()).collect();

        let npts = grid.len();
        let mut lambdas = vec![Vec::new(); npts];
        let mut projectors = vec![Vec::new(); npts];
        let r = &raw[reference];
        lambdas[reference] = r.groups.iter().map(|g| mean(&r.vals[g.clone()])).collect();
        projectors[reference] = r.groups.iter().map(|g| linalg::projector(&r.vecs.columns(g.start, g.len()).into_owned())).collect();

        // breadth-first continuation; each point is labeled from the neighbor that reached it
        let mut seen = vec![false; npts];
        seen[reference] = true;
        let mut queue = VecDeque::from([reference]);
        while let Some(p) = queue.pop_front() {
            for q in grid.neighbors(p) {
                if seen[q] {
                    continue;
                }
                seen[q] = true;
                let (l, pr) = assign_branches(&raw[q], &projectors[p], &multiplicities).map_err(|msg| Error::numerical(&grid.point(q), msg))?;
                lambdas[q] = l;
                projectors[q] = pr;
                queue.push_back(q);
            }
        }

        Ok(SpectralField { spec: spec.clone(), grid, branches, multiplicities, lambdas, projectors, policy, reference })
    }

    /// Index of the reference grid point where labels were fixed.
    pub fn reference_point(&self) -> usize {
        self.reference
    }

    /// Exact evaluation at an arbitrary frequency inside the grid window: the
    /// symbol is decomposed at `xi` and clusters are matched to branches using
    /// the projectors of the nearest grid point.
    pub fn eval(&self, xi: &[f64]) -> Result<PointSpectrum> {
        if !self.grid.contains(xi) {
            let (lo, hi) = self.grid.bounds()[0];
            return Err(Error::Range { point: xi.to_vec(), lo, hi });
        }
        let raw = decompose(&self.spec, xi, self.policy.cluster)?;
        let near = self.grid.nearest(xi);
        let (lambdas, projectors) = assign_branches(&raw, &self.projectors[near], &self.multiplicities).map_err(|msg| Error::numerical(xi, msg))?;
        Ok(PointSpectrum { lambdas, projectors })
    }

    pub fn lambda(&self, xi: &[f64], branch: usize) -> Result<f64> {
        Ok(self.eval(xi)?.lambdas[branch])
    }

    /// Branch whose projector captures the largest part of `v` at `xi`.
    pub fn branch_containing(&self, xi: &[f64], v: &linalg::CVec) -> Result<usize> {
        let sp = self.eval(xi)?;
        let mut best = (0, -1.0);
        for (b, p) in sp.projectors.iter().enumerate() {
            let w = (p * v).norm();
            if w > best.1 {
                best = (b, w);
            }
        }
        Ok(best.0)
    }

    /// `|sum_j lambda_j P_j - H(xi)|` relative to `1 + |H|` at grid point `idx`.
    pub fn reconstruction_error(&self, idx: usize) -> f64 {
        let h = self.spec.assemble_symbol(&self.grid.point(idx)).expect("grid dimension checked");
        let mut acc = CMat::zeros(self.spec.n, self.spec.n);
        for (l, p) in self.lambdas[idx].iter().zip(&self.projectors[idx]) {
            acc += p * c(*l);
        }
        linalg::max_abs(&(acc - &h)) / (1.0 + linalg::max_abs(&h))
    }

    /// Worst defect of idempotence, hermitian symmetry, mutual orthogonality and completeness.
    pub fn projector_algebra_error(&self, idx: usize) -> f64 {
        let ps = &self.projectors[idx];
        let n = self.spec.n;
        let mut worst: f64 = 0.0;
        let mut sum = CMat::zeros(n, n);
        for (a, pa) in ps.iter().enumerate() {
            worst = worst.max(linalg::max_abs(&(pa * pa - pa)));
            worst = worst.max(linalg::max_abs(&(pa - pa.adjoint())));
            for pb in ps.iter().skip(a + 1) {
                worst = worst.max(linalg::max_abs(&(pa * pb)));
            }
            sum += pa;
        }
        worst.max(linalg::max_abs(&(sum - CMat::identity(n, n))))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Matches eigen-clusters at a new point to branches, given the branch projectors at a nearby point.
fn assign_branches(raw: &RawDecomposition, prev: &[CMat], mults: &[usize]) -> std::result::Result<(Vec<f64>, Vec<CMat>), String> {
    let nb = prev.len();
    let q: Vec<CMat> = raw.groups.iter().map(|g| raw.vecs.columns(g.start, g.len()).into_owned()).collect();
    let centers: Vec<f64> = raw.groups.iter().map(|g| mean(&raw.vals[g.clone()])).collect();

    // normalized overlap of branch b with cluster c
    let mut scored = Vec::with_capacity(nb * q.len());
    for (b, pb) in prev.iter().enumerate() {
        for (ci, qc) in q.iter().enumerate() {
            let o = linalg::trace(&(qc.adjoint() * pb * qc)).re / mults[b] as f64;
            scored.push((o, ci, b));
        }
    }
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(centers[x.1].total_cmp(&centers[y.1])).then(x.2.cmp(&y.2)));
    let mut capacity: Vec<usize> = raw.groups.iter().map(|g| g.len()).collect();
    let mut owner: Vec<Option<usize>> = vec![None; nb];
    for &(_, ci, b) in &scored {
        if owner[b].is_none() && capacity[ci] >= mults[b] {
            owner[b] = Some(ci);
            capacity[ci] -= mults[b];
        }
    }
    if owner.iter().any(|o| o.is_none()) || capacity.iter().any(|&c| c != 0) {
        return Err("eigenvalue multiplicities inconsistent with the reference labeling".into());
    }

    let mut lambdas = vec![0.0; nb];
    let mut projectors = vec![CMat::zeros(0, 0); nb];
    for (ci, qc) in q.iter().enumerate() {
        let members: Vec<usize> = (0..nb).filter(|&b| owner[b] == Some(ci)).collect();
        if members.len() == 1 {
            lambdas[members[0]] = centers[ci];
            projectors[members[0]] = linalg::projector(qc);
            continue;
        }
        // coalesced branches: split the cluster eigenspace along the old projectors
        let m = qc.ncols();
        let mut k = CMat::zeros(m, m);
        for (w, &b) in members.iter().enumerate() {
            k += qc.adjoint() * &prev[b] * qc * c((w + 1) as f64);
        }
        let (_, u) = linalg::hermitian_eig(&k);
        let vals = &raw.vals[raw.groups[ci].clone()];
        let mut col = 0;
        for &b in &members {
            let ub = u.columns(col, mults[b]).into_owned();
            col += mults[b];
            let mut rq = 0.0;
            for j in 0..ub.ncols() {
                for (i, v) in vals.iter().enumerate() {
                    rq += v * ub[(i, j)].norm_sqr();
                }
            }
            lambdas[b] = rq / mults[b] as f64;
            projectors[b] = linalg::projector(&(qc * ub));
        }
    }
    Ok((lambdas, projectors))
}

/// Large-frequency slopes of the eigenvalues along a ray.
#[derive(Debug, Clone)]
pub struct AsymptoticSlopes {
    pub direction: Vec<f64>,
    /// One slope per eigenvalue cluster at the largest radius, ascending.
    pub slopes: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// Fitted exponent of `|lambda_j(r w) - c_j r|` versus `r`; `-inf` when the residual vanishes.
    pub residual_decay: Vec<f64>,
    /// Pairs of distinct clusters sharing the same slope.
    pub coinciding: Vec<(usize, usize)>,
}

/// Default radii for [`asymptotic_slopes`]: three radii ending at `1e3 * max(1, rho(A0))`.
pub fn default_radii(spec: &SystemSpec) -> Vec<f64> {
    let r = 1e3 * spec.a0_radius().max(1.0);
    vec![r / 8.0, r / 4.0, r / 2.0, r]
}

/// Slopes `c_j = lim lambda_j(r w)/r`, extrapolated in `1/r` over the last three radii.
pub fn asymptotic_slopes(spec: &SystemSpec, direction: &[f64], radii: &[f64]) -> Result<AsymptoticSlopes> {
    if direction.len() != spec.d {
        return Err(Error::Dimension { expected: spec.d, got: direction.len() });
    }
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Input(format!("direction must be a unit vector (norm {norm})")));
    }
    if radii.len() < 3 || radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
        return Err(Error::Input("need at least three increasing positive radii".into()));
    }
    let rmax = *radii.last().expect("non-empty");
    let rho = spec.a0_radius();
    if rmax < 100.0 * rho {
        return Err(Error::Precondition(format!("largest radius {rmax} below 100 x spectral radius of A0 ({rho})")));
    }
    let evs: Vec<Vec<f64>> = radii
        .iter()
        .map(|&r| {
            let xi: Vec<f64> = direction.iter().map(|x| x * r).collect();
            spec.assemble_symbol(&xi).map(|h| linalg::hermitian_eig(&h).0)
        })
        .collect::<Result<_>>()?;
    let last = evs.last().expect("non-empty");
    let groups = linalg::clusters(last, 1e-9 * rmax.max(1.0));
    let m = radii.len();
    let (r1, r2, r3) = (radii[m - 3], radii[m - 2], radii[m - 1]);
    let mut slopes = Vec::new();
    let mut decay = Vec::new();
    for g in &groups {
        let f: Vec<f64> = evs.iter().zip(radii).map(|(v, r)| mean(&v[g.clone()]) / r).collect();
        // f(r) = c + a/r + b/r^2 through the last three radii
        let s = [1.0 / r1, 1.0 / r2, 1.0 / r3];
        let (f1, f2, f3) = (f[m - 3], f[m - 2], f[m - 1]);
        let l1 = s[1] * s[2] / ((s[0] - s[1]) * (s[0] - s[2]));
        let l2 = s[0] * s[2] / ((s[1] - s[0]) * (s[1] - s[2]));
        let l3 = s[0] * s[1] / ((s[2] - s[0]) * (s[2] - s[1]));
        let cj = l1 * f1 + l2 * f2 + l3 * f3;
        slopes.push(cj);
        let pts: Vec<(f64, f64)> = evs
            .iter()
            .zip(radii)
            .filter_map(|(v, &r)| {
                let res = (mean(&v[g.clone()]) - cj * r).abs();
                (res > 1e-13 * r.max(1.0)).then(|| (r.ln(), res.ln()))
            })
            .collect();
        decay.push(if pts.len() >= 2 { ls_slope(&pts) } else { f64::NEG_INFINITY });
    }
    let mut coinciding = Vec::new();
    for i in 0..slopes.len() {
        for j in i + 1..slopes.len() {
            if (slopes[i] - slopes[j]).abs() <= 1e-6 * slopes[i].abs().max(slopes[j].abs()).max(1.0) {
                coinciding.push((i, j));
            }
        }
    }
    Ok(AsymptoticSlopes { direction: direction.to_vec(), slopes, multiplicities: groups.iter().map(|g| g.len()).collect(), residual_decay: decay, coinciding })
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn kg_branches_follow_closed_forms_through_touching_point() {
        let spec = catalog::kg_equal(1.0, 0.5, 1).unwrap();
        let field = SpectralField::compute(&spec, FrequencyGrid::line(-3.0, 3.0, 241), NumericPolicy::default()).unwrap();
        assert_eq!(field.branches, 5);
        assert_eq!(field.multiplicities, vec![1, 1, 2, 1, 1]);
        for (i, &x) in field.grid.axes[0].iter().enumerate() {
            let fast = (1.0 + x * x).sqrt();
            let slow = (1.0 + 0.25 * x * x).sqrt();
            let l = &field.lambdas[i];
            let expect = [-fast, -slow, 0.0, slow, fast];
            for b in 0..5 {
                assert!((l[b] - expect[b]).abs() < 1e-8, "x={x} b={b} {} vs {}", l[b], expect[b]);
            }
            assert!(field.reconstruction_error(i) < 1e-10);
            assert!(field.projector_algebra_error(i) < 1e-10);
        }
    }

    #[test]
    fn fast_branch_stays_on_first_block() {
        let spec = catalog::kg_equal(1.0, 0.5, 1).unwrap();
        let field = SpectralField::compute(&spec, FrequencyGrid::line(-2.0, 2.0, 101), NumericPolicy::default()).unwrap();
        for i in 0..field.grid.len() {
            let p = &field.projectors[i][4];
            let upper: f64 = (0..3).map(|k| p[(k, k)].re).sum();
            assert!((upper - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn three_wave_branches_are_linear_through_triple_crossing() {
        let spec = catalog::three_wave([1.0, 0.5, -0.5], [0.0, 1.0, 1.0]).unwrap();
        let field = SpectralField::compute(&spec, FrequencyGrid::line(-1.0, 1.0, 21), NumericPolicy::default()).unwrap();
        for (i, &x) in field.grid.axes[0].iter().enumerate() {
            let mut vals = field.lambdas[i].clone();
            let mut expect: Vec<f64> = [1.0, 0.5, -0.5].iter().map(|c| c * x).collect();
            vals.sort_by(f64::total_cmp);
            expect.sort_by(f64::total_cmp);
            for (a, b) in vals.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        // labels continue straight through zero
        let b = field.branch_containing(&[0.5], &crate::linalg::CVec::from_vec(vec![c(1.0), c(0.0), c(0.0)])).unwrap();
        let b2 = field.branch_containing(&[-0.5], &crate::linalg::CVec::from_vec(vec![c(1.0), c(0.0), c(0.0)])).unwrap();
        assert_eq!(b, b2);
        assert!((field.lambda(&[0.0], b).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn eval_off_grid_matches_closed_form() {
        let spec = catalog::kg_equal(1.0, 0.5, 1).unwrap();
        let field = SpectralField::compute(&spec, FrequencyGrid::line(-3.0, 3.0, 61), NumericPolicy::default()).unwrap();
        for &x in &[-2.71, -1e-7, 0.0, 3e-6, 1.2345] {
            let l = field.eval(&[x]).unwrap().lambdas;
            assert!((l[4] - (1.0 + x * x).sqrt()).abs() < 1e-12);
            assert!((l[3] - (1.0 + 0.25 * x * x).sqrt()).abs() < 1e-9);
        }
        assert!(matches!(field.eval(&[3.5]), Err(Error::Range { .. })));
    }

    #[test]
    fn kg_slopes() {
        let spec = catalog::kg_equal(1.0, 0.5, 1).unwrap();
        let s = asymptotic_slopes(&spec, &[1.0], &default_radii(&spec)).unwrap();
        let expect = [-1.0, -0.5, 0.0, 0.5, 1.0];
        assert_eq!(s.slopes.len(), 5);
        for (a, b) in s.slopes.iter().zip(expect) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(s.coinciding.is_empty());
    }

    #[test]
    fn slopes_reject_non_unit_direction() {
        let spec = catalog::kg_equal(1.0, 0.5, 1).unwrap();
        assert!(matches!(asymptotic_slopes(&spec, &[2.0], &[10.0, 100.0, 1000.0]), Err(Error::Input(_))));
    }

    #[test]
    fn two_dimensional_field_tracks() {
        let spec = catalog::kg_equal(1.0, 0.5, 2).unwrap();
        let field = SpectralField::compute(&spec, FrequencyGrid::square(-1.0, 1.0, 9), NumericPolicy::default()).unwrap();
        assert_eq!(field.multiplicities, vec![1, 1, 4, 1, 1]);
        for i in 0..field.grid.len() {
            let p = field.grid.point(i);
            let r2 = p[0] * p[0] + p[1] * p[1];
            assert!((field.lambdas[i][4] - (1.0 + r2).sqrt()).abs() < 1e-8);
        }
    }
}
