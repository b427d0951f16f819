//! Run configuration, read from TOML.
//!
//! ```toml
//! [model]
//! dimension = 3
//! extents = [8, 8, 8]
//! boundary = "periodic"
//! beta = 1.0
//! omega = 2.0
//! beta_spatial = 1.0        # or "inf" (two-wall runs only)
//! measure = "hard_interval" # or { smooth_p = 8 }
//!
//! [sampler]
//! scheme = "heatbath"       # or "metropolis" with `width`
//! n_therm = 1000            # optional; omitted means measured from a pilot run
//! n_measure = 10000
//! stride = 1
//!
//! [observables]
//! max_r = 3
//! max_t = 3
//! correlator_axes = [0, 1]
//! bin_size = "auto"         # or { fixed = 16 }
//!
//! [run]
//! seed = 42
//! chains = 2
//! output_dir = "out"
//! checkpoint_every = 1000
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeGeometry};
use crate::model::{Measure, ModelParams, SpatialCoupling, UpdateScheme};
use crate::stats::BinSize;
use crate::twowall::WallParams;

/// Which model a run samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Gauge,
    TwoWall,
}

impl fmt::Display for RunKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunKind::Gauge => "gauge",
            RunKind::TwoWall => "two_wall",
        })
    }
}

/// A number, or the text `"inf"` for the frozen limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouplingValue {
    Number(f64),
    Text(String),
}

impl CouplingValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            CouplingValue::Number(x) => Some(*x),
            CouplingValue::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "+inf" => Some(f64::INFINITY),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub dimension: usize,
    pub extents: Vec<usize>,
    #[serde(default)]
    pub boundary: Boundary,
    pub beta: f64,
    pub omega: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_spatial: Option<CouplingValue>,
    #[serde(default)]
    pub measure: Measure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    #[default]
    Heatbath,
    Metropolis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(default)]
    pub scheme: SchemeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_therm: Option<u64>,
    pub n_measure: u64,
    #[serde(default = "one")]
    pub stride: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesSection {
    #[serde(default = "three")]
    pub max_r: usize,
    #[serde(default = "three")]
    pub max_t: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlator_axes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_separation: Option<usize>,
    #[serde(default = "auto")]
    pub bin_size: BinSize,
}

fn three() -> usize {
    3
}

fn auto() -> BinSize {
    BinSize::Auto
}

impl Default for ObservablesSection {
    fn default() -> Self {
        ObservablesSection {
            max_r: 3,
            max_t: 3,
            correlator_axes: None,
            max_separation: None,
            bin_size: BinSize::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_usize")]
    pub chains: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
}

fn one_usize() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("z2lab-out")
}

fn default_checkpoint_every() -> u64 {
    1000
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            chains: 1,
            output_dir: default_output(),
            checkpoint_every: default_checkpoint_every(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub sampler: SamplerSection,
    #[serde(default)]
    pub observables: ObservablesSection,
    #[serde(default)]
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field for the given run kind; the error names the field.
    pub fn validate(&self, kind: RunKind) -> Result<()> {
        let m = &self.model;
        let min_dim = if kind == RunKind::Gauge { 2 } else { 1 };
        if m.dimension < min_dim {
            return Err(Error::config("model.dimension", format!("must be >= {min_dim} for a {kind} run")));
        }
        if m.extents.len() != m.dimension {
            return Err(Error::config(
                "model.extents",
                format!("has {} entries for dimension {}", m.extents.len(), m.dimension),
            ));
        }
        if let Some(i) = m.extents.iter().position(|&l| l < 2) {
            return Err(Error::config(&format!("model.extents[{i}]"), "must be >= 2"));
        }
        if !(m.beta >= 0.0 && m.beta.is_finite()) {
            return Err(Error::config("model.beta", format!("{} must be finite and >= 0", m.beta)));
        }
        if !(m.omega >= 0.0 && m.omega.is_finite()) {
            return Err(Error::config("model.omega", format!("{} must be finite and >= 0", m.omega)));
        }
        if let Some(bs) = &m.beta_spatial {
            match bs.value() {
                None => return Err(Error::config("model.beta_spatial", format!("{bs:?} is neither a number nor \"inf\""))),
                Some(v) if !(v >= 0.0) => return Err(Error::config("model.beta_spatial", format!("{v} must be >= 0"))),
                Some(v) if v.is_infinite() && kind == RunKind::Gauge => {
                    return Err(Error::config(
                        "model.beta_spatial",
                        "infinite spatial coupling is sampled with run-twowall on the k = d - 1 lattice",
                    ))
                }
                _ => {}
            }
        }
        if let Measure::SmoothP(0) = m.measure {
            return Err(Error::config("model.measure", "smooth_p needs p >= 1"));
        }
        if kind == RunKind::Gauge && m.measure != Measure::HardInterval {
            return Err(Error::config("model.measure", "gauge runs support only hard_interval"));
        }
        let s = &self.sampler;
        match s.scheme {
            SchemeName::Metropolis => match s.width {
                None => return Err(Error::config("sampler.width", "required for the metropolis scheme")),
                Some(w) if !(w > 0.0 && w <= 2.0) => {
                    return Err(Error::config("sampler.width", format!("{w} outside (0, 2]")))
                }
                _ => {
                    if m.measure != Measure::HardInterval {
                        return Err(Error::config("sampler.scheme", "metropolis needs the hard_interval measure"));
                    }
                }
            },
            SchemeName::Heatbath => {}
        }
        if s.stride < 1 {
            return Err(Error::config("sampler.stride", "must be >= 1"));
        }
        if s.n_measure < 2 {
            return Err(Error::config("sampler.n_measure", "must be >= 2"));
        }
        let o = &self.observables;
        if kind == RunKind::Gauge && (o.max_r < 1 || o.max_t < 1) {
            return Err(Error::config("observables.max_r", "loop maxima must be >= 1"));
        }
        if let Some(axes) = &o.correlator_axes {
            if axes.is_empty() {
                return Err(Error::config("observables.correlator_axes", "must not be empty"));
            }
            if let Some(a) = axes.iter().find(|&&a| a >= m.dimension) {
                return Err(Error::config("observables.correlator_axes", format!("axis {a} >= dimension")));
            }
        }
        if let BinSize::Fixed(0) = o.bin_size {
            return Err(Error::config("observables.bin_size", "fixed bin size must be >= 1"));
        }
        if self.run.chains < 1 {
            return Err(Error::config("run.chains", "must be >= 1"));
        }
        if self.run.checkpoint_every < 1 {
            return Err(Error::config("run.checkpoint_every", "must be >= 1"));
        }
        Ok(())
    }

    pub fn geometry(&self, kind: RunKind) -> Result<LatticeGeometry> {
        match kind {
            RunKind::Gauge => LatticeGeometry::gauge(self.model.dimension, &self.model.extents, self.model.boundary),
            RunKind::TwoWall => LatticeGeometry::new(&self.model.extents, self.model.boundary),
        }
    }

    pub fn beta_spatial(&self) -> f64 {
        self.model
            .beta_spatial
            .as_ref()
            .and_then(CouplingValue::value)
            .unwrap_or(self.model.beta)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let mut p = ModelParams::anisotropic(self.model.beta, self.model.omega, self.beta_spatial())?;
        p.measure = self.model.measure;
        Ok(p)
    }

    pub fn wall_params(&self) -> Result<WallParams> {
        let p = WallParams { beta: self.model.beta, omega: self.model.omega, measure: self.model.measure };
        p.validate()?;
        Ok(p)
    }

    pub fn scheme(&self) -> UpdateScheme {
        match self.sampler.scheme {
            SchemeName::Heatbath => UpdateScheme::Heatbath,
            SchemeName::Metropolis => UpdateScheme::Metropolis { width: self.sampler.width.unwrap_or(1.0) },
        }
    }

    pub fn beta_spatial_label(&self) -> String {
        match self.model_params().map(|p| p.beta_spatial) {
            Ok(SpatialCoupling::Infinite) => "inf".into(),
            _ => format!("{}", self.beta_spatial()),
        }
    }

    /// The config with fields that do not influence any emitted number
    /// cleared, used to decide whether a checkpoint may be resumed.
    pub fn trajectory_key(&self) -> RunConfig {
        let mut c = self.clone();
        c.run.output_dir = PathBuf::new();
        c.run.checkpoint_every = 1;
        c
    }
}
