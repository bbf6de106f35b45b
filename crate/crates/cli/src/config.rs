//! Run configuration, read from a single JSON file.
//!
//! ```json
//! {
//!   "system": { "type": "circle", "c": 0.2, "noise_sigma": 0.5 },
//!   "dictionary": { "type": "fourier", "n": 10 },
//!   "sampling": { "m1": 128, "m2": 5000, "seed": 1 },
//!   "analysis": { "grid": { "type": "rectangle", "re": [-1.2, 1.2], "im": [-1.2, 1.2], "steps": [41, 41] } }
//! }
//! ```
//!
//! Relative paths are resolved against the directory holding the config.

use std::path::{Path, PathBuf};

use koopvar::snapshots::{BinningMode, BinningSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub dictionary: DictionarySpec,
    #[serde(default)]
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub bounds: Option<BoundsSpec>,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Circle {
        c: f64,
        #[serde(default)]
        amp: f64,
        #[serde(default = "one")]
        noise_sigma: f64,
    },
    Vdp {
        mu: f64,
        delta: f64,
        em_step: f64,
        koopman_dt: f64,
        #[serde(default)]
        burn_in: Option<usize>,
    },
    /// A snapshot CSV.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DictionarySpec {
    /// Modes `-n..=n`.
    Fourier {
        n: usize,
        #[serde(default = "one")]
        period: f64,
    },
    /// `centers` centers picked from the sampled states; `scale` defaults to
    /// their median pairwise distance.
    LaplacianRbf {
        centers: usize,
        #[serde(default)]
        scale: Option<f64>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    /// States (circle: trapezoid nodes, vdp: trajectory samples).
    #[serde(default)]
    pub m1: Option<usize>,
    /// Realizations per state. Circle defaults to 1, vdp to 2 (its maximum).
    #[serde(default)]
    pub m2: Option<usize>,
    /// Only for file input; generated systems carry their own weights.
    #[serde(default)]
    pub weights: Option<WeightsScheme>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightsScheme {
    /// Use the weight column of the file (uniform if there is none).
    File,
    Uniform,
    Trapezoid { domain_length: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_cutoff")]
    pub rel_cutoff: f64,
    /// Dictionary label of the forecast observable; defaults to the first.
    #[serde(default)]
    pub observable: Option<String>,
    /// Operator norm used by the forecast bound; estimated when absent.
    #[serde(default)]
    pub norm_k: Option<f64>,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            epsilon: default_epsilon(),
            horizon: default_horizon(),
            rel_cutoff: default_cutoff(),
            observable: None,
            norm_k: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// The dictionary-size dependent default grid.
    #[default]
    Default,
    Rectangle { re: [f64; 2], im: [f64; 2], steps: [usize; 2] },
    Explicit { points: Vec<[f64; 2]> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    /// Sample sizes; defaults to the number of states.
    #[serde(default)]
    pub ms: Option<Vec<usize>>,
    #[serde(default = "default_ts")]
    pub ts: Vec<f64>,
    /// Lipschitz constant of the dynamics. Known for the circle map.
    #[serde(default)]
    pub lipschitz: Option<f64>,
    /// Orlicz norm of the sampling law. Estimated for the circle map.
    #[serde(default)]
    pub upsilon: Option<f64>,
    #[serde(default = "default_upsilon_samples")]
    pub upsilon_samples: usize,
}

impl Default for BoundsSpec {
    fn default() -> Self {
        Self {
            ms: None,
            ts: default_ts(),
            lipschitz: None,
            upsilon: None,
            upsilon_samples: default_upsilon_samples(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_horizon() -> usize {
    10
}
fn default_cutoff() -> f64 {
    1e-12
}
fn default_ts() -> Vec<f64> {
    vec![0.1, 0.5, 1.0]
}
fn default_upsilon_samples() -> usize {
    100_000
}

/// A parsed config together with the bytes it was read from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub raw: Vec<u8>,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let raw = std::fs::read(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_slice(&raw)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Self { config, raw, base_dir };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Root seed, required by every stochastic stage.
    pub fn seed(&self, stage: &str) -> CliResult<u64> {
        self.config
            .sampling
            .seed
            .ok_or_else(|| CliError::config(format!("sampling.seed is required for {stage}")))
    }

    fn validate(&self) -> CliResult<()> {
        let cfg = &self.config;
        match &cfg.system {
            SystemSpec::Circle { .. } | SystemSpec::Vdp { .. } => {
                self.seed("simulation")?;
                if cfg.sampling.m1.is_none() {
                    return Err(CliError::config("sampling.m1 is required for generated systems"));
                }
                if cfg.sampling.weights.is_some() {
                    return Err(CliError::config("sampling.weights only applies to file input"));
                }
            }
            SystemSpec::File { path } => {
                let p = self.resolve(path);
                if !p.is_file() {
                    return Err(CliError::config(format!("snapshot file {} does not exist", p.display())));
                }
                if cfg.sampling.m1.is_some() || cfg.sampling.m2.is_some() {
                    return Err(CliError::config("sampling.m1/m2 do not apply to file input"));
                }
            }
        }
        if let (SystemSpec::Vdp { .. }, Some(m2)) = (&cfg.system, cfg.sampling.m2) {
            if !(1..=2).contains(&m2) {
                return Err(CliError::config("the Van der Pol generator supports m2 = 1 or 2"));
            }
        }
        if let DictionarySpec::LaplacianRbf { .. } = cfg.dictionary {
            self.seed("RBF center selection")?;
        }
        Ok(())
    }
}

/// Parse a `--bin` argument: `exact` or `grid=8x8`, optionally followed by
/// `:min=K` (minimum bin occupancy, default 2).
pub fn parse_bin_spec(text: &str) -> CliResult<BinningSpec> {
    let bad = || CliError::config(format!("invalid --bin spec `{text}`; expected exact or grid=AxB, optionally :min=K"));
    let mut parts = text.split(':');
    let mode = match parts.next().unwrap_or_default() {
        "exact" => BinningMode::Exact,
        m if m.starts_with("grid=") => {
            let bins = m["grid=".len()..]
                .split('x')
                .map(|b| b.parse::<usize>().map_err(|_| bad()))
                .collect::<CliResult<Vec<_>>>()?;
            BinningMode::Grid { bins }
        }
        _ => return Err(bad()),
    };
    let mut min_occupancy = 2;
    for p in parts {
        min_occupancy = p.strip_prefix("min=").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    }
    Ok(BinningSpec { mode, min_occupancy })
}
