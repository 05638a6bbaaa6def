//! System description and the hermitian symbol `A0/i + sum_j xi_j A_j`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, CVec, C64, I};

/// Conjugate the left argument of a bilinear term.
pub const CONJ_LEFT: u8 = 1;
/// Conjugate the right argument of a bilinear term.
pub const CONJ_RIGHT: u8 = 2;

/// One sparse entry of the quadratic source: `B(u,v)[out] += value * u[left] * v[right]`,
/// with optional conjugation of either argument (complex envelope systems).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub out: usize,
    pub left: usize,
    pub right: usize,
    pub value: f64,
    pub conj: u8,
}

impl Triplet {
    pub fn new(out: usize, left: usize, right: usize, value: f64) -> Self {
        Triplet { out, left, right, value, conj: 0 }
    }

    pub fn conjugated(mut self, mask: u8) -> Self {
        self.conj = mask;
        self
    }
}

/// A semilinear hyperbolic system `u_t + A0 u / eps + sum_j A_j u_{x_j} = B(u,u) / sqrt(eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub a0: DMatrix<f64>,
    pub aj: Vec<DMatrix<f64>>,
    pub b: Vec<Triplet>,
    pub params: BTreeMap<String, f64>,
}

/// Linear and antilinear parts of `w -> B(e)w := B(e,w) + B(w,e)`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub linear: CMat,
    pub antilinear: CMat,
}

impl SystemSpec {
    pub fn new(name: &str, a0: DMatrix<f64>, aj: Vec<DMatrix<f64>>, b: Vec<Triplet>) -> Result<Self> {
        let spec = SystemSpec { name: name.to_string(), n: a0.nrows(), d: aj.len(), a0, aj, b, params: BTreeMap::new() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_params(mut self, params: &[(&str, f64)]) -> Self {
        for (k, v) in params {
            self.params.insert((*k).to_string(), *v);
        }
        self
    }

    /// Checks shapes, skew-symmetry of `A0`, symmetry of every `A_j` and triplet bounds.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Input("state dimension must be positive".into()));
        }
        if !(1..=2).contains(&self.d) {
            return Err(Error::Input(format!("spatial dimension {} not supported (1 or 2)", self.d)));
        }
        if self.a0.shape() != (n, n) {
            return Err(Error::Input(format!("A0 has shape {:?}, expected ({n}, {n})", self.a0.shape())));
        }
        if self.aj.len() != self.d {
            return Err(Error::Dimension { expected: self.d, got: self.aj.len() });
        }
        let skew = (&self.a0 + self.a0.transpose()).abs().max();
        if skew > 1e-12 * self.a0.abs().max().max(1.0) {
            return Err(Error::Input(format!("A0 is not skew-symmetric (defect {skew:e})")));
        }
        for (j, a) in self.aj.iter().enumerate() {
            if a.shape() != (n, n) {
                return Err(Error::Input(format!("A{} has shape {:?}", j + 1, a.shape())));
            }
            let sym = (a - a.transpose()).abs().max();
            if sym > 1e-12 * a.abs().max().max(1.0) {
                return Err(Error::Input(format!("A{} is not symmetric (defect {sym:e})", j + 1)));
            }
        }
        for t in &self.b {
            if t.out >= n || t.left >= n || t.right >= n {
                return Err(Error::Input(format!("B triplet {:?} has index out of [0,{n})", t)));
            }
            if t.conj > 3 {
                return Err(Error::Input(format!("B triplet {:?} has invalid conjugation mask", t)));
            }
            if !t.value.is_finite() {
                return Err(Error::Input("B triplet value is not finite".into()));
            }
        }
        Ok(())
    }

    /// True when the source has no conjugated arguments, so real data stay real.
    pub fn is_real(&self) -> bool {
        self.b.iter().all(|t| t.conj == 0)
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    /// `H(xi) = A0/i + sum_j xi_j A_j`.
    pub fn assemble_symbol(&self, xi: &[f64]) -> Result<CMat> {
        if xi.len() != self.d {
            return Err(Error::Dimension { expected: self.d, got: xi.len() });
        }
        let mut h = self.a0.map(|x| C64::new(0.0, -x));
        for (a, &x) in self.aj.iter().zip(xi) {
            if x != 0.0 {
                h += a.map(|v| c(v * x));
            }
        }
        Ok(h)
    }

    /// `A(xi) = sum_j xi_j A_j` (real).
    pub fn spatial_symbol(&self, xi: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (a, &x) in self.aj.iter().zip(xi) {
            m += a * x;
        }
        m
    }

    /// `L(i p beta) = -i p omega + A0 + i p A(k)`, the characteristic matrix of harmonic `p`.
    pub fn characteristic_matrix(&self, p: f64, omega: f64, k: &[f64]) -> CMat {
        let ak = self.spatial_symbol(k);
        let mut m = crate::linalg::to_complex(&self.a0);
        m += ak.map(|v| C64::new(0.0, p * v));
        for i in 0..self.n {
            m[(i, i)] -= I * (p * omega);
        }
        m
    }

    /// Evaluates `B(u, v)`.
    pub fn bilinear(&self, u: &CVec, v: &CVec) -> CVec {
        let mut out = CVec::zeros(self.n);
        for t in &self.b {
            let l = if t.conj & CONJ_LEFT != 0 { u[t.left].conj() } else { u[t.left] };
            let r = if t.conj & CONJ_RIGHT != 0 { v[t.right].conj() } else { v[t.right] };
            out[t.out] += l * r * t.value;
        }
        out
    }

    /// Pointwise `B(u,u)` on raw slices, used by the simulator's inner loop.
    pub fn quadratic_into(&self, u: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for t in &self.b {
            let l = if t.conj & CONJ_LEFT != 0 { u[t.left].conj() } else { u[t.left] };
            let r = if t.conj & CONJ_RIGHT != 0 { u[t.right].conj() } else { u[t.right] };
            out[t.out] += l * r * t.value;
        }
    }

    /// The symmetrized linearization `w -> B(e,w) + B(w,e)` split into its
    /// complex-linear and antilinear parts.
    pub fn linearize(&self, e: &CVec) -> Linearization {
        let n = self.n;
        let mut linear = CMat::zeros(n, n);
        let mut antilinear = CMat::zeros(n, n);
        for t in &self.b {
            // B(e, w): coefficient of w[right]
            let el = if t.conj & CONJ_LEFT != 0 { e[t.left].conj() } else { e[t.left] };
            let target = if t.conj & CONJ_RIGHT != 0 { &mut antilinear } else { &mut linear };
            target[(t.out, t.right)] += el * t.value;
            // B(w, e): coefficient of w[left]
            let er = if t.conj & CONJ_RIGHT != 0 { e[t.right].conj() } else { e[t.right] };
            let target = if t.conj & CONJ_LEFT != 0 { &mut antilinear } else { &mut linear };
            target[(t.out, t.left)] += er * t.value;
        }
        Linearization { linear, antilinear }
    }

    /// Sup-norm bound `|B(u,v)|_inf <= |B| |u|_inf |v|_inf`.
    pub fn bilinear_bound(&self) -> f64 {
        let mut rows = vec![0.0; self.n];
        for t in &self.b {
            rows[t.out] += t.value.abs();
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// Largest absolute triplet value, the natural scale of the source.
    pub fn bilinear_scale(&self) -> f64 {
        self.b.iter().map(|t| t.value.abs()).fold(0.0, f64::max)
    }

    /// Spectral radius of `A0` (its eigenvalues are imaginary).
    pub fn a0_radius(&self) -> f64 {
        let h = self.a0.map(|x| C64::new(0.0, -x));
        let (vals, _) = crate::linalg::hermitian_eig(&h);
        vals.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Serializes to the JSON interchange format with 17 significant digits per number.
    pub fn to_json(&self) -> String {
        fn num(x: f64) -> String {
            if x == 0.0 {
                "0.0".to_string()
            } else {
                format!("{x:.16e}")
            }
        }
        fn mat(m: &DMatrix<f64>) -> String {
            let rows: Vec<String> = (0..m.nrows())
                .map(|i| {
                    let r: Vec<String> = (0..m.ncols()).map(|j| num(m[(i, j)])).collect();
                    format!("[{}]", r.join(", "))
                })
                .collect();
            format!("[\n    {}\n  ]", rows.join(",\n    "))
        }
        let mut s = String::new();
        s.push_str("{\n");
        let _ = writeln!(s, "  \"name\": {},", serde_json::Value::String(self.name.clone()));
        let _ = writeln!(s, "  \"N\": {},", self.n);
        let _ = writeln!(s, "  \"d\": {},", self.d);
        let _ = writeln!(s, "  \"A0\": {},", mat(&self.a0));
        let aj: Vec<String> = self.aj.iter().map(mat).collect();
        let _ = writeln!(s, "  \"Aj\": [\n  {}\n  ],", aj.join(",\n  "));
        let b: Vec<String> = self
            .b
            .iter()
            .map(|t| {
                if t.conj == 0 {
                    format!("[{}, {}, {}, {}]", t.out, t.left, t.right, num(t.value))
                } else {
                    format!("[{}, {}, {}, {}, {}]", t.out, t.left, t.right, num(t.value), t.conj)
                }
            })
            .collect();
        let _ = writeln!(s, "  \"B\": [\n    {}\n  ],", b.join(",\n    "));
        let params: Vec<String> = self.params.iter().map(|(k, v)| format!("{}: {}", serde_json::Value::String(k.clone()), num(*v))).collect();
        let _ = writeln!(s, "  \"params\": {{{}}}", params.join(", "));
        s.push_str("}\n");
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            name: String,
            #[serde(rename = "N")]
            n: usize,
            d: usize,
            #[serde(rename = "A0")]
            a0: Vec<Vec<f64>>,
            #[serde(rename = "Aj")]
            aj: Vec<Vec<Vec<f64>>>,
            #[serde(rename = "B", default)]
            b: Vec<Vec<f64>>,
            #[serde(default)]
            params: BTreeMap<String, f64>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::Input(format!("malformed system spec: {e}")))?;
        let to_mat = |rows: &Vec<Vec<f64>>, what: &str| -> Result<DMatrix<f64>> {
            if rows.len() != raw.n || rows.iter().any(|r| r.len() != raw.n) {
                return Err(Error::Input(format!("{what} must be {0}x{0}", raw.n)));
            }
            Ok(DMatrix::from_fn(raw.n, raw.n, |i, j| rows[i][j]))
        };
        let a0 = to_mat(&raw.a0, "A0")?;
        let aj = raw.aj.iter().enumerate().map(|(j, m)| to_mat(m, &format!("A{}", j + 1))).collect::<Result<Vec<_>>>()?;
        let mut b = Vec::with_capacity(raw.b.len());
        for entry in &raw.b {
            if entry.len() != 4 && entry.len() != 5 {
                return Err(Error::Input("B entries must be [out, left, right, value] or [out, left, right, value, mask]".into()));
            }
            let idx = |x: f64| -> Result<usize> {
                if x >= 0.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(Error::Input(format!("B index {x} is not a non-negative integer")))
                }
            };
            let mut t = Triplet::new(idx(entry[0])?, idx(entry[1])?, idx(entry[2])?, entry[3]);
            if entry.len() == 5 {
                t.conj = idx(entry[4])? as u8;
            }
            b.push(t);
        }
        let spec = SystemSpec { name: raw.name, n: raw.n, d: raw.d, a0, aj, b, params: raw.params };
        spec.validate()?;
        Ok(spec)
    }
}

/// A fundamental phase `beta = (omega, k)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
pub struct Phase {
    pub omega: f64,
    pub k: Vec<f64>,
}

impl Phase {
    pub fn new(omega: f64, k: &[f64]) -> Self {
        Phase { omega, k: k.to_vec() }
    }

    /// The phase `p * beta`.
    pub fn harmonic(&self, p: f64) -> Phase {
        Phase { omega: p * self.omega, k: self.k.iter().map(|x| p * x).collect() }
    }

    pub fn k_norm(&self) -> f64 {
        self.k.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.omega == 0.0 && self.k.iter().all(|&x| x == 0.0)
    }
}
