//! Benchmark helpers: fixed configurations shared by the criterion
//! targets.

use stgcn_core::data::{generate_synthetic, SynthConfig};
use stgcn_core::graph::STGraphSequence;
use stgcn_core::model::{init_params, ModelConfig, ModelParams};

/// Desk-scale configuration used by all benches.
pub fn bench_setup() -> (ModelConfig, ModelParams, STGraphSequence) {
    let cfg = ModelConfig::with_feature_dim(16);
    let params = init_params(&cfg, 0).expect("valid config");
    let data = generate_synthetic(&SynthConfig {
        videos: 1,
        ..SynthConfig::default()
    })
    .expect("valid synth config");
    (cfg, params, data.into_iter().next().expect("one video"))
}
