//! Run manifests.
//!
//! A manifest is a TOML document with flat sections:
//!
//! ```toml
//! [potential]
//! family = "log_cone"        # or: expr = "x1^2 + x2^2"
//! dim = 2
//!
//! [samples]
//! points = [[0.0, 1.0]]
//! random = 100
//! seed = 7
//! box = [[-0.5, 0.5], [0.8, 2.0]]
//! ```
//!
//! See the README for every section and key.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{FieldError, PotentialField};
use crate::flow::Scheme;
use crate::infogeo::Coordinates;
use crate::soliton::{SolitonError, SolitonSpec};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("manifest syntax: {0}")]
    Syntax(String),
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub potential: Option<PotentialSection>,
    #[serde(default)]
    pub samples: SampleSection,
    pub soliton: Option<SolitonSection>,
    pub flow: Option<FlowSection>,
    pub family: Option<FamilySection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub expr: Option<String>,
    pub family: Option<String>,
    pub dim: usize,
    pub epsilon: Option<f64>,
    pub frequencies: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub random: usize,
    #[serde(default)]
    pub seed: u64,
    /// Per-axis `[lo, hi]` for random samples.
    #[serde(rename = "box")]
    pub bounds: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonSection {
    pub kind: String,
    pub lambda: f64,
    #[serde(rename = "X")]
    pub x: Option<Vec<String>>,
    pub f: Option<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    /// `torus` (potential mode, periodic) or `patch` (metric mode, boxed).
    pub mode: String,
    pub nodes: usize,
    pub h: Option<f64>,
    pub origin: Option<Vec<f64>>,
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    pub t_end: f64,
    /// Patch boundary: `einstein` (needs `lambda`) or `frozen`.
    pub boundary: Option<String>,
    pub lambda: Option<f64>,
}

fn default_scheme() -> String {
    "rk4".into()
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    pub outcomes: usize,
    #[serde(default = "default_coords")]
    pub coords: String,
}

fn default_coords() -> String {
    "natural".into()
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub json: Option<String>,
    pub csv: Option<String>,
    #[serde(default)]
    pub dump_tensors: bool,
}

impl Manifest {
    pub fn parse(source: &str) -> Result<Self, ManifestError> {
        let m: Manifest = toml::from_str(source).map_err(|e| ManifestError::Syntax(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let source = std::fs::read_to_string(path).map_err(|e| ManifestError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&source)
    }

    fn validate(&self) -> Result<(), ManifestError> {
        if let Some(p) = &self.potential {
            if p.expr.is_some() == p.family.is_some() {
                return Err(ManifestError::Invalid(
                    "[potential] needs exactly one of `expr` or `family`".into(),
                ));
            }
        }
        if let Some(b) = &self.samples.bounds {
            if b.iter().any(|[lo, hi]| !(lo < hi)) {
                return Err(ManifestError::Invalid("[samples] box needs lo < hi on every axis".into()));
            }
        }
        if let Some(s) = &self.soliton {
            match (s.kind.as_str(), &s.x, &s.f) {
                ("vector", Some(_), None) | ("gradient", None, Some(_)) => {}
                ("vector", ..) => return Err(ManifestError::Invalid("vector soliton needs `X` and no `f`".into())),
                ("gradient", ..) => return Err(ManifestError::Invalid("gradient soliton needs `f` and no `X`".into())),
                (k, ..) => return Err(ManifestError::Invalid(format!("unknown soliton kind '{k}'"))),
            }
        }
        if let Some(f) = &self.flow {
            self.flow_scheme()?;
            if !matches!(f.mode.as_str(), "torus" | "patch") {
                return Err(ManifestError::Invalid(format!("unknown flow mode '{}'", f.mode)));
            }
            if !(f.dt > 0.0) || !(f.t_end >= 0.0) {
                return Err(ManifestError::Invalid("[flow] needs dt > 0 and t_end ≥ 0".into()));
            }
        }
        if self.family.is_some() {
            self.family_coords()?;
        }
        Ok(())
    }

    /// Field described by `[potential]`.
    pub fn field(&self) -> Result<PotentialField, ManifestError> {
        let p = self
            .potential
            .as_ref()
            .ok_or_else(|| ManifestError::Invalid("missing [potential] section".into()))?;
        let invalid = |e: String| ManifestError::Invalid(format!("[potential]: {e}"));
        match (&p.expr, &p.family) {
            (Some(src), None) => PotentialField::parse(src, p.dim).map_err(|e| invalid(e.to_string())),
            (None, Some(name)) => {
                let field = PotentialField::builtin_family(name, p.dim, p.epsilon, p.frequencies.clone())
                    .map_err(|e: FieldError| invalid(e.to_string()))?;
                Ok(field)
            }
            _ => unreachable!("validated"),
        }
    }

    pub fn soliton_spec(&self, dim: usize) -> Result<Option<SolitonSpec>, ManifestError> {
        let Some(s) = &self.soliton else { return Ok(None) };
        let invalid = |e: SolitonError| ManifestError::Invalid(format!("[soliton]: {e}"));
        let spec = match (&s.x, &s.f) {
            (Some(xs), None) => {
                let refs: Vec<&str> = xs.iter().map(String::as_str).collect();
                SolitonSpec::parse_vector(&refs, dim, s.lambda).map_err(invalid)?
            }
            (None, Some(f)) => SolitonSpec::parse_gradient(f, dim, s.lambda).map_err(invalid)?,
            _ => unreachable!("validated"),
        };
        Ok(Some(spec))
    }

    pub fn flow_scheme(&self) -> Result<Scheme, ManifestError> {
        match self.flow.as_ref().map(|f| f.scheme.as_str()) {
            Some("rk4") | None => Ok(Scheme::Rk4),
            Some("euler") => Ok(Scheme::Euler),
            Some(other) => Err(ManifestError::Invalid(format!("unknown flow scheme '{other}'"))),
        }
    }

    pub fn family_coords(&self) -> Result<Coordinates, ManifestError> {
        match self.family.as_ref().map(|f| f.coords.as_str()) {
            Some("natural") | None => Ok(Coordinates::Natural),
            Some("mean") => Ok(Coordinates::Mean),
            Some(other) => Err(ManifestError::Invalid(format!("unknown coordinates '{other}'"))),
        }
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("manifest serializes")
    }
}
