//! Text reports, binary snapshots and atomic file output.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::GrowthBoundReport;
use crate::interaction::StabilityReport;
use crate::linalg::C64;
use crate::resonance::ResonanceReport;
use crate::simulator::ScalingReport;
use crate::wkb::WkbSolution;

/// Magic bytes opening a state snapshot.
pub const SNAPSHOT_MAGIC: &[u8; 8] = b"OSCSNAP1";

/// Environment variable capping the worker pool size.
pub const THREADS_VAR: &str = "OSCILLANT_THREADS";

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Io(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

/// Caps the global rayon pool at `OSCILLANT_THREADS` when set. Returns the cap applied.
pub fn init_thread_pool() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(None);
    };
    let n: usize = raw.trim().parse().map_err(|_| Error::Input(format!("{THREADS_VAR}='{raw}' is not a positive integer")))?;
    if n == 0 {
        return Err(Error::Input(format!("{THREADS_VAR} must be positive")));
    }
    // a pool already built by an earlier call keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

/// Round-trip exact decimal form (17 significant digits).
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn list(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(", "))
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "none".into())
}

pub fn resonance_text(r: &ResonanceReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "omega = {}", num(r.phase.omega));
    let _ = writeln!(s, "k = {}", list(&r.phase.k));
    let _ = writeln!(s, "verdict = {}", r.verdict.as_str());
    let _ = writeln!(s, "harmonics = [{}]", r.harmonics.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", "));
    for p in &r.pairs {
        let _ = writeln!(s, "\n[pair {} {}]", p.i, p.j);
        let _ = writeln!(s, "identically_resonant = {}", p.identically_resonant);
        for root in &p.roots {
            let _ = writeln!(s, "root = {} residual = {}", list(&root.xi), num(root.residual));
        }
    }
    for n in &r.notes {
        let _ = writeln!(s, "note = {n}");
    }
    s
}

pub fn stability_text(r: &StabilityReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "verdict = {}", r.verdict.as_str());
    for (key, v) in [
        ("Gamma_index", r.gamma_index),
        ("gamma", r.gamma),
        ("B0", r.b0),
        ("B_full", r.b_full),
        ("T0", r.t0),
        ("K0", r.k0),
        ("T0_prime", r.t0_prime),
        ("K0_prime", r.k0_prime),
        ("T0_doubleprime", r.t0_doubleprime),
        ("K0_doubleprime", r.k0_doubleprime),
        ("T_inf", r.t_inf),
    ] {
        let _ = writeln!(s, "{key} = {}", num(v));
    }
    let _ = writeln!(s, "K_gate = {}", r.k_gate);
    let _ = writeln!(s, "R0 = [{}]", r.r0.iter().map(|(i, j)| format!("({i}, {j})")).collect::<Vec<_>>().join(", "));
    let _ = writeln!(s, "main_pair = {}", r.main_pair.map(|(i, j)| format!("({i}, {j})")).unwrap_or_else(|| "none".into()));
    let _ = writeln!(s, "xi0 = {}", r.xi0.as_deref().map(list).unwrap_or_else(|| "none".into()));
    for p in &r.pairs {
        let _ = writeln!(s, "\n[pair {} {}]", p.pair.0, p.pair.1);
        let _ = writeln!(s, "transparency = {}", p.transparency.as_str());
        let _ = writeln!(s, "max_re_Gamma = {}", num(p.max_re_gamma));
        let _ = writeln!(s, "max_abs_im_Gamma = {}", num(p.max_abs_im_gamma));
        let _ = writeln!(s, "gamma = {}", num(p.gamma_rate));
        let _ = writeln!(s, "coefficient_sup = {}", num(p.coefficient_sup));
        let _ = writeln!(s, "identically_zero = {}", p.identically_zero);
    }
    for n in &r.notes {
        let _ = writeln!(s, "note = {n}");
    }
    s
}

pub fn growth_bound_text(r: &GrowthBoundReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "pass = {}", r.pass);
    let _ = writeln!(s, "epsilons = {}", list(&r.epsilons));
    let _ = writeln!(s, "Q = {}", list(&r.q));
    let _ = writeln!(s, "gamma_plus = {}", num(r.gamma_plus));
    let _ = writeln!(s, "N_star = {}", num(r.n_star));
    let _ = writeln!(s, "max_liouville_error = {}", num(r.max_liouville_error));
    s
}

pub fn scaling_text(r: &ScalingReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "epsilons = {}", list(&r.epsilons));
    let opts = |v: &[Option<f64>]| format!("[{}]", v.iter().map(|&x| opt(x)).collect::<Vec<_>>().join(", "));
    let _ = writeln!(s, "t_star = {}", opts(&r.t_star));
    let _ = writeln!(s, "time_ratio = {}", opts(&r.time_ratio));
    let _ = writeln!(s, "scaled_rate = {}", opts(&r.scaled_rate));
    let _ = writeln!(s, "time_spread = {}", opt(r.time_spread));
    let _ = writeln!(s, "rate_spread = {}", opt(r.rate_spread));
    let _ = writeln!(s, "unbounded = [{}]", r.unbounded.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(", "));
    let _ = writeln!(s, "note = t_star reaching eps^K' before the horizon at each eps stands in for divergence as eps -> 0");
    s
}

/// Amplitude snapshots as `t,x,re,im` rows.
pub fn wkb_csv(sol: &WkbSolution) -> String {
    let mut s = String::from("t,x,re_g,im_g\n");
    for (t, g) in sol.times.iter().zip(&sol.amplitude) {
        for (i, z) in g.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{}", num(*t), num(sol.grid.x(i)), num(z.re), num(z.im));
        }
    }
    s
}

/// Decoded snapshot: state dimension, grid size, `eps`, time and point-major samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub n: usize,
    pub grid_points: usize,
    pub epsilon: f64,
    pub t: f64,
    pub state: Vec<C64>,
}

impl Snapshot {
    /// Little-endian: magic, `n` and `grid_points` as u64, `eps` and `t` as f64, then (re, im) pairs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(40 + 16 * self.state.len());
        b.extend_from_slice(SNAPSHOT_MAGIC);
        b.extend_from_slice(&(self.n as u64).to_le_bytes());
        b.extend_from_slice(&(self.grid_points as u64).to_le_bytes());
        b.extend_from_slice(&self.epsilon.to_le_bytes());
        b.extend_from_slice(&self.t.to_le_bytes());
        for z in &self.state {
            b.extend_from_slice(&z.re.to_le_bytes());
            b.extend_from_slice(&z.im.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < 40 || &b[..8] != SNAPSHOT_MAGIC {
            return Err(Error::Input("not a state snapshot".into()));
        }
        let word = |i: usize| <[u8; 8]>::try_from(&b[i..i + 8]).expect("8-byte slice");
        let n = u64::from_le_bytes(word(8)) as usize;
        let grid_points = u64::from_le_bytes(word(16)) as usize;
        let epsilon = f64::from_le_bytes(word(24));
        let t = f64::from_le_bytes(word(32));
        let count = n.checked_mul(grid_points).ok_or_else(|| Error::Input("snapshot header overflows".into()))?;
        if b.len() != 40 + 16 * count {
            return Err(Error::Input(format!("snapshot body has {} bytes, header implies {}", b.len() - 40, 16 * count)));
        }
        let state = (0..count).map(|m| C64::new(f64::from_le_bytes(word(40 + 16 * m)), f64::from_le_bytes(word(48 + 16 * m)))).collect();
        Ok(Snapshot { n, grid_points, epsilon, t, state })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip() {
        let s = Snapshot { n: 2, grid_points: 3, epsilon: 1e-3, t: 0.25, state: (0..6).map(|i| C64::new(i as f64 / 3.0, -(i as f64))).collect() };
        assert_eq!(Snapshot::from_bytes(&s.to_bytes()).unwrap(), s);
        let mut bad = s.to_bytes();
        bad.pop();
        assert!(Snapshot::from_bytes(&bad).is_err());
        assert!(Snapshot::from_bytes(b"nonsense").is_err());
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(f64::INFINITY), "inf");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = std::env::temp_dir().join(format!("oscillant-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }
}
