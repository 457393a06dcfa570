//! Run configuration: a TOML file with one table per section, every key
//! optional. Command-line `--set section.key=value` overrides are applied on
//! top of the file before defaults fill the rest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fbpick_core::{BranchSet, ModelConfig};
use fbpick_seismic::pipeline::{CROP_HEIGHT, PANEL_WIDTH};
use fbpick_seismic::{LmoParams, StaLtaConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub synth: SynthConfig,
    pub training: TrainingConfig,
    pub model: ModelSection,
    /// Reference line per survey id. Surveys missing here fall back to the
    /// corpus manifest.
    pub lmo: BTreeMap<String, LmoParams>,
    pub eval: EvalConfig,
    pub ablation: AblationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data_dir: PathBuf,
    /// Checkpoints and training logs, one `seed-N` directory per seed.
    pub run_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            run_dir: "runs/dsunet".into(),
            output_dir: "reports".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    AdamW,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Bce,
    Dice,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub patience: usize,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub loss: Loss,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub augmentation: bool,
    pub precision: Precision,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            patience: 4,
            optimizer: Optimizer::Adam,
            learning_rate: 0.001,
            weight_decay: 1e-6,
            loss: Loss::Bce,
            batch_size: 8,
            seeds: vec![0],
            augmentation: true,
            precision: Precision::F32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub decoder_blocks: [usize; 4],
    pub kernel_length: usize,
    pub extension_scope: f64,
    /// `+`-joined subset of `x`, `y` and `local`.
    pub branches: String,
    pub local_kernel: usize,
    pub dsconv_stages: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            decoder_blocks: m.decoder_blocks,
            kernel_length: m.snake_kernel_length,
            extension_scope: m.extension_scope,
            branches: m.branches.to_string(),
            local_kernel: m.local_kernel,
            dsconv_stages: m.dsconv_stages,
        }
    }
}

impl ModelSection {
    pub fn to_model_config(&self) -> Result<ModelConfig> {
        let branches: BranchSet = self
            .branches
            .parse()
            .map_err(|e: fbpick_core::Error| CliError::Usage(e.to_string()))?;
        let config = ModelConfig {
            height: CROP_HEIGHT,
            width: PANEL_WIDTH,
            in_channels: 1,
            decoder_blocks: self.decoder_blocks,
            snake_kernel_length: self.kernel_length,
            extension_scope: self.extension_scope,
            branches,
            local_kernel: self.local_kernel,
            dsconv_stages: self.dsconv_stages,
        };
        config.validate().map_err(|e| CliError::Usage(format!("model: {e}")))?;
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub target_apr: f64,
    /// Hit-rate tolerances reported, px; a subset of 1, 3, 5, 7, 9.
    pub hr_deltas: Vec<u32>,
    pub snr_list: Vec<f64>,
    pub sweep_thresholds: Vec<f64>,
    /// Seed of the robustness noise.
    pub noise_seed: u64,
    pub stalta: StaLtaConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            target_apr: 0.8,
            hr_deltas: fbpick_seismic::metrics::HR_DELTAS.to_vec(),
            snr_list: vec![20.0, 10.0, 5.0, 3.0, 1.0, -1.0],
            sweep_thresholds: (0..20).map(|i| f64::from(i) * 0.05).collect(),
            noise_seed: 0,
            stalta: StaLtaConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub extension_scopes: Vec<f64>,
    /// Snake lengths; 9 and 25 cover the same area as 3x3 and 5x5 kernels.
    pub kernel_lengths: Vec<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            extension_scopes: vec![1.0, 2.0, 4.0, 6.0],
            kernel_lengths: vec![9, 25],
        }
    }
}

/// One synthetic survey: base reference line and per-gather spread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveySpec {
    pub name: String,
    pub velocity: f64,
    pub t0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub n_traces: usize,
    pub n_samples: usize,
    pub dt: f64,
    pub first_offset: f64,
    pub offset_spacing: f64,
    pub surveys: Vec<SurveySpec>,
    /// Relative standard deviation of each gather's velocity.
    pub velocity_jitter: f64,
    /// Standard deviation of each gather's intercept, s.
    pub t0_jitter: f64,
    /// Ricker peak frequency range, Hz.
    pub frequency: [f64; 2],
    pub jump_count: usize,
    pub jump_max_samples: i32,
    pub reflections: usize,
    /// Per-gather SNR range, dB.
    pub snr_db: [f64; 2],
    /// Training gathers per survey whose sparse picks fix the LMO line.
    pub lmo_gathers: usize,
    /// Trace step of those sparse picks.
    pub lmo_trace_step: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let surveys = default_lmo()
            .into_iter()
            .map(|(name, l)| SurveySpec {
                name: format!("synth-{name}"),
                velocity: l.v,
                t0: l.t0,
            })
            .collect();
        Self {
            seed: 7,
            train: 200,
            val: 40,
            test: 40,
            n_traces: 256,
            n_samples: 400,
            dt: 0.001,
            first_offset: 20.0,
            offset_spacing: 5.0,
            surveys,
            velocity_jitter: 0.03,
            t0_jitter: 0.003,
            frequency: [25.0, 35.0],
            jump_count: 3,
            jump_max_samples: 8,
            reflections: 3,
            snr_db: [5.0, 20.0],
            lmo_gathers: 3,
            lmo_trace_step: 16,
        }
    }
}

/// Reference lines of the four field surveys.
pub fn default_lmo() -> BTreeMap<String, LmoParams> {
    [
        ("brunswick", 5136.20, 0.0017),
        ("halfmile", 5349.20, 0.0234),
        ("lalor", 6013.97, 0.0130),
        ("sudbury", 5891.69, 0.0367),
    ]
    .into_iter()
    .map(|(n, v, t0)| (n.to_owned(), LmoParams::new(v, t0)))
    .collect()
}

impl RunConfig {
    pub fn defaults() -> Self {
        Self {
            lmo: default_lmo(),
            ..Default::default()
        }
    }

    /// Reads `path` (if any), applies `key=value` overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::data(p.display(), e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let lmo_given = table.contains_key("lmo");
        let mut config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {e}")))?;
        if !lmo_given {
            config.lmo = default_lmo();
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(CliError::Usage(m));
        let t = &self.training;
        if t.optimizer != Optimizer::Adam {
            return usage(format!("optimizer {:?} is not implemented, only adam", t.optimizer));
        }
        if t.loss != Loss::Bce {
            return usage(format!("loss {:?} is not implemented, only bce", t.loss));
        }
        if t.epochs == 0 || t.batch_size == 0 || t.seeds.is_empty() {
            return usage("training needs epochs, batch_size and at least one seed".into());
        }
        if !(t.learning_rate > 0.0) || !(t.weight_decay >= 0.0) {
            return usage("learning_rate must be positive and weight_decay non-negative".into());
        }
        self.model.to_model_config()?;
        let e = &self.eval;
        if !(e.target_apr > 0.0 && e.target_apr <= 1.0) {
            return usage(format!("target_apr {} outside (0, 1]", e.target_apr));
        }
        if let Some(d) = e.hr_deltas.iter().find(|d| !fbpick_seismic::metrics::HR_DELTAS.contains(d)) {
            return usage(format!("hr delta {d} is not one of 1, 3, 5, 7, 9"));
        }
        if e.sweep_thresholds.iter().any(|t| !(0.0..=1.0).contains(t))
            || e.sweep_thresholds.windows(2).any(|w| w[1] < w[0])
        {
            return usage("sweep thresholds must be ascending within [0, 1]".into());
        }
        e.stalta.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        for (name, l) in &self.lmo {
            l.validate().map_err(|e| CliError::Usage(format!("lmo.{name}: {e}")))?;
        }
        let s = &self.synth;
        if s.surveys.is_empty() || s.n_traces == 0 || s.n_samples < CROP_HEIGHT || !(s.dt > 0.0) {
            return usage(format!(
                "synth needs surveys, traces and at least {CROP_HEIGHT} samples per trace"
            ));
        }
        if !(s.snr_db[0] <= s.snr_db[1]) || !(s.frequency[0] > 0.0 && s.frequency[0] <= s.frequency[1]) {
            return usage("synth ranges must be ordered".into());
        }
        Ok(())
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, or as a bare string
/// when it does not parse as one.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {item:?} is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Usage(format!("bad override key {path:?}")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_owned()));
    let (last, parents) = keys.split_last().expect("non-empty");
    let mut node = table;
    for k in parents {
        let entry = node
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("override {path:?}: {k} is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
