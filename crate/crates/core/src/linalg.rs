//! Small dense linear-algebra helpers over complex matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(c)
}

/// Matrix norm induced by the sup vector norm (largest absolute row sum).
pub fn sup_norm(m: &CMat) -> f64 {
    (0..m.nrows()).map(|i| m.row(i).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn vec_sup(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest absolute entry.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn trace(m: &CMat) -> C64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// Eigen-decomposition of a hermitian matrix, eigenvalues ascending.
pub fn hermitian_eig(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.nrows();
    // symmetrize against rounding noise before handing to the solver
    let hs = (h + h.adjoint()) * c(0.5);
    let eig = SymmetricEigen::new(hs);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Groups consecutive sorted eigenvalues that lie within `tol` of their neighbor.
pub fn clusters(sorted: &[f64], tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=sorted.len() {
        if k == sorted.len() || sorted[k] - sorted[k - 1] > tol {
            out.push(start..k);
            start = k;
        }
    }
    out
}

/// Orthogonal projector onto the span of orthonormal columns.
pub fn projector(cols: &CMat) -> CMat {
    cols * cols.adjoint()
}

/// Singular values sorted descending, with right singular vectors as columns.
pub fn svd_sorted(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        v.set_column(dst, &v_t.row(src).adjoint());
    }
    if k < n {
        // thin SVD of a wide matrix: complete the basis with the orthogonal complement
        let basis = v.columns(0, k).into_owned();
        let comp = orthogonal_complement(&basis, n);
        for j in 0..comp.ncols() {
            v.set_column(k + j, &comp.column(j));
        }
        sv.resize(n, 0.0);
    }
    (sv, v)
}

/// Orthonormal basis of the orthogonal complement of the span of orthonormal `basis` columns.
pub fn orthogonal_complement(basis: &CMat, n: usize) -> CMat {
    let p = CMat::identity(n, n) - projector(basis);
    let (vals, vecs) = hermitian_eig(&p);
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > 0.5).collect();
    let mut out = CMat::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &vecs.column(i));
    }
    out
}

/// Orthonormal basis of the numerical kernel: right singular vectors whose
/// singular value is at most `rel_tol` times max(1, largest singular value).
pub fn kernel(m: &CMat, rel_tol: f64) -> CMat {
    let (sv, v) = svd_sorted(m);
    let scale = sv.first().copied().unwrap_or(0.0).max(1.0);
    let idx: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= rel_tol * scale).collect();
    let mut out = CMat::zeros(m.ncols(), idx.len());
    for (j, &i) in idx.iter().enumerate() {
        out.set_column(j, &v.column(i));
    }
    out
}

pub fn min_singular_value(m: &CMat) -> f64 {
    svd_sorted(m).0.last().copied().unwrap_or(0.0)
}

/// Numerical rank: number of singular values above `largest / gap`.
pub fn numerical_rank(m: &CMat, gap: f64, abs_floor: f64) -> usize {
    let sv = svd_sorted(m).0;
    let top = sv.first().copied().unwrap_or(0.0);
    if top <= abs_floor {
        return 0;
    }
    sv.iter().filter(|&&s| s > top / gap).count()
}

/// Rotates a vector so that its first non-negligible component is real positive.
pub fn fix_phase(v: &mut CVec) {
    let scale = vec_sup(v);
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-8 * scale).copied() {
        let rot = z.conj() / z.norm();
        for x in v.iter_mut() {
            *x *= rot;
        }
    }
}

pub fn inner(a: &CVec, b: &CVec) -> C64 {
    // (a, b) = sum a_i conj(b_i)
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// Moore-Penrose style partial inverse of a normal matrix: inverts on the
/// orthogonal complement of the kernel and vanishes on the kernel.
pub fn partial_inverse(m: &CMat, rel_tol: f64) -> CMat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max).max(1.0);
    let k = svd.singular_values.len();
    let mut out = CMat::zeros(m.ncols(), m.nrows());
    for i in 0..k {
        let s = svd.singular_values[i];
        if s > rel_tol * top {
            out += v_t.row(i).adjoint() * u.column(i).adjoint() * c(1.0 / s);
        }
    }
    out
}

/// Dense eigenvalues of a general complex matrix through the complex Schur form.
///
/// The QR iteration has no exceptional shifts, so it can stall on exactly
/// defective input; that case is retried on a roundoff-sized deterministic
/// perturbation.
pub fn general_eigenvalues(m: &CMat) -> Vec<C64> {
    let n = m.nrows();
    let iters = 200 * n.max(1);
    if let Some(s) = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, iters) {
        let (_, t) = s.unpack();
        return (0..n).map(|i| t[(i, i)]).collect();
    }
    let scale = max_abs(m).max(1.0) * 1e-14;
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut noise = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut p = m.clone();
    for z in p.iter_mut() {
        *z += C64::new(noise(), noise()) * scale;
    }
    let s = nalgebra::Schur::try_new(p, f64::EPSILON, 20 * iters).expect("perturbed Schur iteration converges");
    let (_, t) = s.unpack();
    (0..n).map(|i| t[(i, i)]).collect()
}

/// Greedy nearest matching between two equally sized multisets; returns the
/// largest distance between matched elements.
pub fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut done = vec![false; a.len()];
    let mut worst: f64 = 0.0;
    for (d, i, j) in pairs {
        if !done[i] && !used[j] {
            done[i] = true;
            used[j] = true;
            worst = worst.max(d);
        }
    }
    worst
}
