//! Layered run configuration: built-in defaults, then a TOML config
//! file with one section per subsystem, then command-line flags.

use serde::{Deserialize, Serialize};
use stgcn_core::data::SynthConfig;
use stgcn_core::model::ModelConfig;
use stgcn_core::training::TrainConfig;

use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::with_feature_dim(16),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// File form: every key optional so the file only has to name what it
/// overrides. Unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<ModelSection>,
    train: Option<TrainSection>,
    synth: Option<SynthSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    f: Option<usize>,
    g: Option<usize>,
    h: Option<usize>,
    d_a: Option<usize>,
    n: Option<usize>,
    t: Option<usize>,
    gc_layers: Option<usize>,
    isolate_padded: Option<bool>,
    attn_tanh: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    adam_beta1: Option<f64>,
    adam_beta2: Option<f64>,
    adam_eps: Option<f64>,
    batch: Option<usize>,
    seed: Option<u64>,
    include_padded_in_loss: Option<bool>,
    death_class_weight: Option<f64>,
    shuffle: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthSection {
    videos: Option<usize>,
    t: Option<usize>,
    max_cells: Option<usize>,
    f: Option<usize>,
    death_onset_prob: Option<f64>,
    marker_base: Option<f64>,
    marker_jump: Option<f64>,
    marker_noise: Option<f64>,
    feature_sep: Option<f64>,
    threshold: Option<f64>,
    k_consecutive: Option<usize>,
    cell_count_weights: Option<Vec<f64>>,
    seed: Option<u64>,
}

macro_rules! apply {
    ($dst:expr, $src:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $src.$field { $dst.$field = v; })+
    };
}

impl RunConfig {
    /// Defaults overlaid with an optional config file. Flags are applied
    /// afterwards by each subcommand.
    pub fn load(path: Option<&std::path::Path>) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        let Some(path) = path else {
            return Ok(cfg);
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let file: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("bad config file: {e}")))?;
        if let Some(m) = file.model {
            apply!(cfg.model, m, f, g, h, d_a, n, t, gc_layers, isolate_padded, attn_tanh);
        }
        if let Some(t) = file.train {
            apply!(
                cfg.train, t, epochs, learning_rate, adam_beta1, adam_beta2, adam_eps, batch,
                seed, include_padded_in_loss, death_class_weight, shuffle,
            );
        }
        if let Some(s) = file.synth {
            apply!(
                cfg.synth, s, videos, t, max_cells, f, death_onset_prob, marker_base,
                marker_jump, marker_noise, feature_sep, threshold, k_consecutive,
                cell_count_weights, seed,
            );
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
