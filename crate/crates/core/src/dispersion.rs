//! Euler-Maxwell dispersion branches and three-wave phase matching on them.

use serde::Serialize;

use crate::error::{Error, Result};

/// Which branch of the plasma dispersion relation a phase lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// Transverse electromagnetic waves.
    Transverse,
    /// Electron plasma (Langmuir) waves.
    Langmuir,
    /// Ion acoustic waves.
    Acoustic,
}

impl Branch {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "t" | "transverse" | "euler-maxwell-transverse" => Ok(Branch::Transverse),
            "l" | "langmuir" | "euler-maxwell-longitudinal-l" => Ok(Branch::Langmuir),
            "s" | "acoustic" | "euler-maxwell-longitudinal-s" => Ok(Branch::Acoustic),
            other => Err(Error::Input(format!("unknown dispersion branch '{other}'"))),
        }
    }
}

/// Two-fluid plasma dispersion relation in dimensionless units.
///
/// `theta_e`, `theta_i` are the electron and ion thermal ratios and `alpha`
/// the ion sound-speed factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlasmaDispersion {
    pub theta_e: f64,
    pub theta_i: f64,
    pub alpha: f64,
}

/// Result of a phase-matching solve.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseMatch {
    pub k1: f64,
    pub k2: f64,
    pub k: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub omega: f64,
    /// Dispersion residuals of the pump, the scattered wave and the target wave.
    pub residuals: [f64; 3],
}

impl PlasmaDispersion {
    pub fn new(theta_e: f64, theta_i: f64, alpha: f64) -> Result<Self> {
        if !(theta_e > 0.0 && theta_i >= 0.0 && alpha > 0.0) {
            return Err(Error::Input("need theta_e > 0, theta_i >= 0, alpha > 0".into()));
        }
        Ok(PlasmaDispersion { theta_e, theta_i, alpha })
    }

    fn longitudinal_coeffs(&self, k: f64) -> (f64, f64) {
        let (te, ti, a) = (self.theta_e, self.theta_i, self.alpha);
        let k2 = k * k;
        let b = 1.0 + k2 * te * te + a * a * k2 * ti * ti + ti * ti / (te * te);
        let c = a * a * k2 * ti * ti * (1.0 + k2 * te * te) + k2 * ti * ti;
        (b, c)
    }

    /// Squared frequency on a branch.
    pub fn omega_sq(&self, branch: Branch, k: f64) -> f64 {
        match branch {
            Branch::Transverse => 1.0 + k * k + (self.theta_i / self.theta_e).powi(2),
            Branch::Langmuir | Branch::Acoustic => {
                let (b, c) = self.longitudinal_coeffs(k);
                let disc = (b * b - 4.0 * c).max(0.0).sqrt();
                if branch == Branch::Langmuir {
                    0.5 * (b + disc)
                } else {
                    // the small root, written to avoid cancellation
                    2.0 * c / (b + disc)
                }
            }
        }
    }

    /// Non-negative frequency on a branch.
    pub fn omega(&self, branch: Branch, k: f64) -> f64 {
        self.omega_sq(branch, k).sqrt()
    }

    /// Residual of the polynomial dispersion relation of `branch` at `(omega, k)`,
    /// scaled by the size of its terms.
    pub fn residual(&self, branch: Branch, omega: f64, k: f64) -> f64 {
        let w = omega * omega;
        let (te, ti, a) = (self.theta_e, self.theta_i, self.alpha);
        match branch {
            Branch::Transverse => {
                let t = 1.0 + k * k + (ti / te).powi(2);
                (w - t).abs() / t
            }
            Branch::Langmuir | Branch::Acoustic => {
                let p = (w - a * a * k * k * ti * ti) * (w - 1.0 - k * k * te * te) - (w - k * k * te * te) * ti * ti / (te * te);
                let scale = w.abs().max(1.0) * (w.abs() + a * a * k * k * ti * ti + 1.0 + k * k * te * te);
                p.abs() / scale
            }
        }
    }

    /// Finds `k2` such that a pump `(omega_t(k1), k1)`, a scattered transverse wave
    /// `(-omega_t(k2), k2)` and their sum lie on `target`:
    /// `omega_t(k1) - omega_t(k2) = omega_target(k1 + k2)`.
    ///
    /// Returns the backscatter root (largest `k2`).
    pub fn match_phases(&self, target: Branch, k1: f64) -> Result<PhaseMatch> {
        let roots = self.matching_roots(target, k1)?;
        let k2 = *roots.last().expect("non-empty");
        Ok(self.assemble(target, k1, k2))
    }

    /// All matching roots `k2` in ascending order.
    pub fn matching_roots(&self, target: Branch, k1: f64) -> Result<Vec<f64>> {
        if target == Branch::Transverse {
            return Err(Error::Input("target branch must be longitudinal".into()));
        }
        let f = |k2: f64| self.omega(Branch::Transverse, k1) - self.omega(Branch::Transverse, k2) - self.omega(target, k1 + k2);
        let span = 4.0 * (k1.abs() + 1.0);
        let n = 4000;
        let xs: Vec<f64> = (0..=n).map(|i| -span + 2.0 * span * i as f64 / n as f64).collect();
        let mut roots = Vec::new();
        for w in xs.windows(2) {
            let (fa, fb) = (f(w[0]), f(w[1]));
            if fa == 0.0 {
                roots.push(w[0]);
            } else if fa * fb < 0.0 {
                roots.push(bisect(&f, w[0], w[1], 1e-15));
            }
        }
        if roots.is_empty() {
            return Err(Error::NotMatchable(format!("no {target:?} matching for k1 = {k1}")));
        }
        Ok(roots)
    }

    fn assemble(&self, target: Branch, k1: f64, k2: f64) -> PhaseMatch {
        let omega1 = self.omega(Branch::Transverse, k1);
        let omega2 = -self.omega(Branch::Transverse, k2);
        let k = k1 + k2;
        let omega = omega1 + omega2;
        PhaseMatch {
            k1,
            k2,
            k,
            omega1,
            omega2,
            omega,
            residuals: [self.residual(Branch::Transverse, omega1, k1), self.residual(Branch::Transverse, omega2, k2), self.residual(target, omega, k)],
        }
    }
}

/// Bisection on a bracketing interval down to `tol` in the argument.
pub fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a).abs() <= tol * (1.0 + m.abs()) {
            return m;
        }
        if (fa < 0.0) == (fm < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
