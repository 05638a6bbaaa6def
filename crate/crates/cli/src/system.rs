//! Resolution of `catalog:<id>` references and system files.

use std::collections::BTreeMap;

use clap::Args;
use oscillant::catalog;
use oscillant::linalg::CVec;
use oscillant::{Error, Phase, Result, SystemSpec};

#[derive(Args, Debug, Clone, Default)]
pub struct SystemArgs {
    /// `catalog:<id>` or a path to a system file
    #[arg(value_name = "SYSTEM")]
    pub positional: Option<String>,
    /// Same as the positional SYSTEM argument
    #[arg(long = "system", value_name = "SYSTEM", conflicts_with = "positional")]
    pub system: Option<String>,
    /// Three-wave velocities c1,c2,c3
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub c: Option<Vec<f64>>,
    /// Three-wave coupling coefficients b1,b2,b3
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub b: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub omega0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha0: Option<f64>,
    /// Sign of the second bilinear form in kg-diff (+1 or -1)
    #[arg(long, allow_hyphen_values = true)]
    pub iota: Option<f64>,
    /// Spatial dimension of a catalog system
    #[arg(long)]
    pub d: Option<usize>,
    /// Wavenumber of the fundamental phase (comma-separated in 2D)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub k: Option<Vec<f64>>,
    /// Frequency of the fundamental phase (system files only)
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<f64>,
}

/// A system with the phase and optional polarization it is analyzed around.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub label: String,
    pub catalog_id: Option<String>,
    pub spec: SystemSpec,
    pub phase: Phase,
    pub polarization: Option<CVec>,
}

impl SystemArgs {
    fn reference(&self) -> Result<&str> {
        self.system.as_deref().or(self.positional.as_deref()).ok_or_else(|| Error::Input("no system given (use catalog:<id> or a file path)".into()))
    }

    /// Catalog parameters set on the command line.
    pub fn catalog_params(&self) -> Result<BTreeMap<String, f64>> {
        let mut p = BTreeMap::new();
        let triple = |name: &str, v: &[f64], p: &mut BTreeMap<String, f64>| -> Result<()> {
            if v.len() != 3 {
                return Err(Error::Input(format!("--{name} takes three comma-separated values")));
            }
            for (i, x) in v.iter().enumerate() {
                p.insert(format!("{name}{}", i + 1), *x);
            }
            Ok(())
        };
        if let Some(c) = &self.c {
            triple("c", c, &mut p)?;
        }
        if let Some(b) = &self.b {
            triple("b", b, &mut p)?;
        }
        for (key, v) in [("omega0", self.omega0), ("theta0", self.theta0), ("alpha0", self.alpha0), ("iota", self.iota), ("d", self.d.map(|d| d as f64))] {
            if let Some(v) = v {
                p.insert(key.into(), v);
            }
        }
        if let Some(k) = &self.k {
            if k.len() != 1 {
                return Err(Error::Input("catalog systems take a single wavenumber --k along the first axis".into()));
            }
            p.insert("k".into(), k[0]);
        }
        Ok(p)
    }

    pub fn load(&self) -> Result<Loaded> {
        let reference = self.reference()?;
        if let Some(id) = reference.strip_prefix("catalog:") {
            if self.omega.is_some() {
                return Err(Error::Input("the phase of a catalog system follows from its parameters; --omega applies to system files".into()));
            }
            let entry = catalog::build(id, &self.catalog_params()?)?;
            return Ok(Loaded { label: reference.into(), catalog_id: Some(id.into()), spec: entry.spec, phase: entry.phase, polarization: entry.polarization });
        }
        if self.c.is_some()
            || self.b.is_some()
            || self.omega0.is_some()
            || self.theta0.is_some()
            || self.alpha0.is_some()
            || self.iota.is_some()
            || self.d.is_some()
        {
            return Err(Error::Input("catalog parameters apply only to catalog:<id> systems".into()));
        }
        let text = std::fs::read_to_string(reference).map_err(|e| Error::Io(format!("{reference}: {e}")))?;
        let spec = SystemSpec::from_json(&text)?;
        let omega = self.omega.ok_or_else(|| Error::Input("system files need --omega and --k for the fundamental phase".into()))?;
        let k = self.k.clone().ok_or_else(|| Error::Input("system files need --omega and --k for the fundamental phase".into()))?;
        if k.len() != spec.d {
            return Err(Error::Dimension { expected: spec.d, got: k.len() });
        }
        Ok(Loaded { label: reference.into(), catalog_id: None, spec, phase: Phase::new(omega, &k), polarization: None })
    }
}
