//! TOML run configuration. Every table rejects unknown keys.

use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    pub engine: EngineSection,
    pub signal: Option<SignalSection>,
    pub admissible: Option<AdmissibleSection>,
    pub weights: Option<WeightsSection>,
    /// Constant minimal sensitivity. Without it the threshold comes from the
    /// model's noise description at the prior means.
    pub s_min: Option<f64>,
    #[serde(default)]
    pub chance: Vec<ChanceSection>,
    pub optimize: Option<OptimizeSection>,
    pub identify: Option<IdentifySection>,
    pub rank: Option<RankSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    /// Measurement noise standard deviation (spring-damper only).
    pub meas_std: Option<f64>,
    pub horizon: f64,
    /// Integration step; defaults to the model's own.
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EngineSection {
    Intrusive {
        #[serde(default = "default_degree")]
        degree: usize,
        /// Gauss points per dimension, default `2 (degree + 1)`.
        quad_order: Option<usize>,
        #[serde(default = "one")]
        stride: usize,
    },
    Transport {
        samples: usize,
        bins: Option<usize>,
        #[serde(default)]
        strategy: Strategy,
        #[serde(default = "one")]
        stride: usize,
    },
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Equiprobable,
    Equiwidth,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Sinusoid,
    Ramps,
    PiecewiseLinear,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSection {
    pub kind: SignalKind,
    /// Number of ramps.
    pub n: Option<usize>,
    /// Knot times of a piecewise-linear signal.
    pub knots: Option<Vec<f64>>,
    /// Fixed signal parameters (sensitivity runs).
    pub params: Option<Vec<f64>>,
    /// Search box per parameter (optimization runs).
    pub bounds: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibleSection {
    pub u_max: Option<f64>,
    pub rate_max: Option<f64>,
    pub u_start: Option<f64>,
    pub u_end: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    /// Diagonal of `Q`, column-major over the `m x q` sensitivity matrix.
    pub q: Vec<f64>,
    #[serde(default = "zero_r")]
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChanceSection {
    #[serde(default)]
    pub output: usize,
    pub y_max: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    #[serde(default = "default_pop")]
    pub pop_per_dim: usize,
    #[serde(default = "default_iter")]
    pub max_iter: usize,
    #[serde(default = "default_f")]
    pub f: f64,
    #[serde(default = "default_cr")]
    pub cr: f64,
    /// Generations without improvement before stopping; 0 disables.
    #[serde(default = "default_stagnation")]
    pub stagnation: usize,
    #[serde(default = "yes")]
    pub refine: bool,
    pub penalty: Option<f64>,
    #[serde(default = "one")]
    pub eval_stride: usize,
    #[serde(default)]
    pub initial: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifySection {
    /// Parameters used to synthesize the data.
    pub truth: Vec<f64>,
    /// Start of the least-squares search; defaults to the prior means.
    pub start: Option<Vec<f64>>,
    pub bounds: Vec<[f64; 2]>,
    pub noise_std: f64,
    /// Also fit all datasets together.
    #[serde(default = "yes")]
    pub combined: bool,
    pub datasets: Vec<DatasetSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub label: String,
    /// Signal parameters for the `[signal]` template.
    pub params: Vec<f64>,
    /// Noise seed; defaults to the master seed plus the dataset position.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankSection {
    /// Parameter whose score orders the rows (descending).
    pub sort_by: String,
    pub signals: Vec<RankSignal>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankSignal {
    pub label: String,
    pub params: Vec<f64>,
}

fn default_degree() -> usize {
    3
}
fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn zero_r() -> Vec<f64> {
    vec![0.0]
}
fn default_pop() -> usize {
    20
}
fn default_iter() -> usize {
    100
}
fn default_f() -> f64 {
    0.8
}
fn default_cr() -> f64 {
    0.9
}
fn default_stagnation() -> usize {
    30
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}
