//! Shared fixtures for the benchmark targets.

use pih_core::config::ExperimentConfig;
use pih_core::dmp::{self, DmpParams, Trajectory};
use pih_core::pipeline;

/// Default experiment with the sensor noise disabled, so benches measure
/// arithmetic rather than RNG throughput differences.
pub fn quiet_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.contact.wrench_noise_sigma = [0.0; 6];
    cfg
}

pub fn fitted_primitive(cfg: &ExperimentConfig) -> (Trajectory, DmpParams) {
    let demo = pipeline::synthetic_demo(cfg);
    let params = dmp::fit(&demo, cfg.dmp.n_basis, cfg.dmp.alpha).expect("demo fits");
    (demo, params)
}
