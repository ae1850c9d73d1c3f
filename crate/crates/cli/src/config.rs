//! Experiment configuration: one TOML file per run.
//!
//! ```toml
//! [model]
//! kind = "nicholson"        # or "mackey_glass"
//! p = 5.0
//! delta = 1.0
//! a = 1.0
//!
//! [delay]
//! variant = "atoms"         # atoms | kernel | mixture | frozen_schedule
//! atoms = [[1.0, 10.0]]     # [weight, lag]
//!
//! [history]
//! kind = "constant"         # constant | linear_ramp | table | sampled_constant
//! value = 0.3
//!
//! [run]
//! horizon = 400.0           # optional; defaults to max(100 memory, 500)
//! step = 0.01               # optional; defaults to min(0.01, min lag / 8)
//! seed = 7                  # used by sampled_constant histories
//!
//! [output]
//! dir = "out"
//! stride = 10               # write every n-th knot
//! ```
//!
//! The `counterexample` and `sweep` tables are read only by their commands.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use dde_stability::{
    DelayMeasure, DelaySchedule, InitialHistory, KernelShape, ModelInstance, Rate,
    ReproductionFunction,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Nicholson { p: f64, delta: f64, a: f64 },
    MackeyGlass { a: f64, b: f64, gamma: f64 },
}

impl ModelConfig {
    pub fn reproduction(&self) -> anyhow::Result<ReproductionFunction> {
        Ok(match self {
            ModelConfig::Nicholson { p, delta, a } => {
                ReproductionFunction::nicholson(*p, *delta, *a)?
            }
            ModelConfig::MackeyGlass { a, b, gamma } => {
                ReproductionFunction::mackey_glass(*a, *b, *gamma)?
            }
        })
    }

    /// The rate in front of the bracket: δ for Nicholson, b for Mackey-Glass.
    pub fn rate(&self) -> f64 {
        match self {
            ModelConfig::Nicholson { delta, .. } => *delta,
            ModelConfig::MackeyGlass { b, .. } => *b,
        }
    }

    /// Copy of the model with one named parameter replaced (sweeps).
    pub fn with_parameter(&self, name: &str, value: f64) -> anyhow::Result<Self> {
        let mut m = self.clone();
        match (&mut m, name) {
            (ModelConfig::Nicholson { p, .. }, "p") => *p = value,
            (ModelConfig::Nicholson { delta, .. }, "delta") => *delta = value,
            (ModelConfig::Nicholson { a, .. }, "a") => *a = value,
            (ModelConfig::MackeyGlass { a, .. }, "a") => *a = value,
            (ModelConfig::MackeyGlass { b, .. }, "b") => *b = value,
            (ModelConfig::MackeyGlass { gamma, .. }, "gamma") => *gamma = value,
            _ => bail!("model has no sweepable parameter named `{name}`"),
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Uniform {
        lag_lo: f64,
        lag_hi: f64,
    },
    /// Gamma kernel with shape `k` and the given scale.
    TruncatedGamma {
        k: f64,
        scale: f64,
    },
    Table {
        points: Vec<(f64, f64)>,
    },
}

impl KernelConfig {
    fn shape(&self) -> KernelShape {
        match self {
            KernelConfig::Uniform { lag_lo, lag_hi } => KernelShape::Uniform {
                lag_lo: *lag_lo,
                lag_hi: *lag_hi,
            },
            KernelConfig::TruncatedGamma { k, scale } => KernelShape::TruncatedGamma {
                shape: *k,
                scale: *scale,
            },
            KernelConfig::Table { points } => KernelShape::Table {
                points: points.clone(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayConfig {
    Atoms {
        atoms: Vec<(f64, f64)>,
    },
    Kernel {
        kernel: KernelConfig,
        #[serde(skip_serializing_if = "Option::is_none")]
        panels_per_unit: Option<usize>,
    },
    Mixture {
        alpha: f64,
        atoms: Vec<(f64, f64)>,
        kernel: KernelConfig,
        #[serde(skip_serializing_if = "Option::is_none")]
        panels_per_unit: Option<usize>,
    },
    FrozenSchedule {
        switch_times: Vec<f64>,
        samples: Vec<f64>,
    },
}

impl DelayConfig {
    pub fn measure(&self) -> anyhow::Result<DelayMeasure> {
        Ok(match self {
            DelayConfig::Atoms { atoms } => DelayMeasure::atoms(atoms.clone())?,
            DelayConfig::Kernel {
                kernel,
                panels_per_unit,
            } => match panels_per_unit {
                Some(p) => DelayMeasure::kernel_with_panels(kernel.shape(), *p)?,
                None => DelayMeasure::kernel(kernel.shape())?,
            },
            DelayConfig::Mixture {
                alpha,
                atoms,
                kernel,
                panels_per_unit,
            } => match panels_per_unit {
                Some(p) => {
                    DelayMeasure::mixture_with_panels(*alpha, atoms.clone(), kernel.shape(), *p)?
                }
                None => DelayMeasure::mixture(*alpha, atoms.clone(), kernel.shape())?,
            },
            DelayConfig::FrozenSchedule {
                switch_times,
                samples,
            } => DelayMeasure::frozen_schedule(DelaySchedule::new(
                switch_times.clone(),
                samples.clone(),
            )?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HistoryConfig {
    Constant {
        value: f64,
    },
    LinearRamp {
        start_time: f64,
        start_value: f64,
        end_value: f64,
    },
    Table {
        points: Vec<(f64, f64)>,
    },
    /// Constant level drawn uniformly from `[lo, hi]` using `run.seed`.
    SampledConstant {
        lo: f64,
        hi: f64,
    },
}

impl HistoryConfig {
    pub fn history(&self, seed: u64) -> anyhow::Result<InitialHistory> {
        Ok(match self {
            HistoryConfig::Constant { value } => InitialHistory::constant(*value)?,
            HistoryConfig::LinearRamp {
                start_time,
                start_value,
                end_value,
            } => InitialHistory::linear_ramp(*start_time, *start_value, *end_value)?,
            HistoryConfig::Table { points } => InitialHistory::table(points.clone())?,
            HistoryConfig::SampledConstant { lo, hi } => {
                if !(hi > lo && *lo > 0.0) {
                    bail!("sampled_constant needs 0 < lo < hi, got [{lo}, {hi}]");
                }
                let u = splitmix64_unit(seed);
                InitialHistory::constant(lo + (hi - lo) * u)?
            }
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_output_dir")]
    pub dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_output_dir(),
            stride: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleConfig {
    pub r: f64,
    pub target_low: f64,
    pub target_high: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycles: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl SweepConfig {
    pub fn grid(&self) -> anyhow::Result<Vec<f64>> {
        if let Some(values) = &self.values {
            if values.is_empty() {
                bail!("sweep value list is empty");
            }
            return Ok(values.clone());
        }
        match (self.start, self.stop, self.count) {
            (Some(start), Some(stop), Some(count)) => {
                if count < 1 || stop < start {
                    bail!("sweep range needs count >= 1 and stop >= start");
                }
                if count == 1 {
                    return Ok(vec![start]);
                }
                Ok((0..count)
                    .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                    .collect())
            }
            _ => bail!("sweep needs either `values` or all of `start`, `stop`, `count`"),
        }
    }
}

/// One experiment: which blocks are required depends on the command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelayConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<HistoryConfig>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<CounterexampleConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))?;
        Ok(cfg)
    }

    /// Canonical serialized form; hashed into every report.
    pub fn canonical_toml(&self) -> anyhow::Result<String> {
        toml::to_string(self).map_err(|e| anyhow!("cannot serialize config: {e}"))
    }

    pub fn hash(&self) -> anyhow::Result<String> {
        Ok(format!(
            "{:016x}",
            fnv1a64(self.canonical_toml()?.as_bytes())
        ))
    }

    pub fn model_instance(&self) -> anyhow::Result<ModelInstance> {
        let delay = self
            .delay
            .as_ref()
            .ok_or_else(|| anyhow!("config is missing the [delay] block"))?;
        Ok(ModelInstance::new(
            self.model.reproduction()?,
            Rate::constant(self.model.rate())?,
            delay.measure()?,
        ))
    }

    pub fn initial_history(&self) -> anyhow::Result<InitialHistory> {
        let history = self
            .history
            .as_ref()
            .ok_or_else(|| anyhow!("config is missing the [history] block"))?;
        history.history(self.run.seed.unwrap_or(0))
    }
}

/// FNV-1a 64-bit; deterministic across platforms and versions.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// One uniform draw in [0, 1) from a 64-bit seed.
fn splitmix64_unit(seed: u64) -> f64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}
