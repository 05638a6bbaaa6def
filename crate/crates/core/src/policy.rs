//! Numeric tolerances shared by every analysis.

use serde::{Deserialize, Serialize};

/// One record holding every tolerance used by the algorithms.
///
/// Identity checks (reconstruction, projector algebra, conjugation residuals)
/// use `identity`; eigenvalues closer than `cluster` are merged into one
/// spectral projector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericPolicy {
    pub identity: f64,
    pub cluster: f64,
    pub root: f64,
    pub root_report: f64,
    pub characteristic: f64,
    pub transparent: f64,
    pub nontransparent: f64,
    pub rank_gap: f64,
    pub degenerate: f64,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        NumericPolicy {
            identity: 1e-10,
            cluster: 1e-9,
            root: 1e-10,
            root_report: 1e-8,
            characteristic: 1e-8,
            transparent: 1e-8,
            nontransparent: 1e-6,
            rank_gap: 1e6,
            degenerate: 1e-10,
        }
    }
}
