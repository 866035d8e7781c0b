//! Experiment configuration: one flat key-value file with dotted section
//! keys. Defaults reproduce the reference experiment, so a bare invocation
//! needs no file at all.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::ContactConfig;
use crate::gac::GacConfig;
use crate::gp::{FitOptions, KernelParams};
use crate::types::Vec3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {msg}")]
    BadValue { key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Corrective insertion policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Correction step applied per axis per attempt, mm.
    pub step_size: f64,
    pub max_attempts: usize,
    /// Episode fails once the cumulative correction wanders this far from
    /// the initial goal estimate, mm.
    pub divergence_limit: f64,
    /// Duration of each approach trajectory, s.
    pub approach_duration: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            step_size: 2.0,
            max_attempts: 10,
            divergence_limit: 15.0,
            approach_duration: 30.0,
        }
    }
}

/// Geometry of the synthetic demonstration scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Demonstration start pose (peg bottom centre), mm.
    pub start: Vec3,
    /// How deep below the surface the demonstration ends, mm.
    pub insert_depth: f64,
    /// Height above the surface at which the lateral travel is complete
    /// and the final descent becomes vertical, mm.
    pub hover_height: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            start: Vector3::new(-30.0, -30.0, 40.0),
            insert_depth: 5.0,
            hover_height: 10.0,
        }
    }
}

/// Constant-velocity press segment appended after each approach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressConfig {
    /// Reference descent per control step, mm.
    pub velocity_per_step: f64,
    /// Press budget before the trial is declared not converged, s.
    pub max_duration: f64,
}

impl Default for PressConfig {
    fn default() -> Self {
        Self {
            velocity_per_step: 0.01,
            max_duration: 15.0,
        }
    }
}

/// Movement-primitive fitting settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmpSettings {
    pub n_basis: usize,
    pub alpha: f64,
}

impl Default for DmpSettings {
    fn default() -> Self {
        Self {
            n_basis: 50,
            alpha: 25.0,
        }
    }
}

/// Gaussian-process fitting settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSettings {
    pub init: KernelParams,
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Screening iterations per optimizer start (0 = no screening).
    pub screen_iters: usize,
    /// Fraction of converged rows used for training; the rest is held out.
    pub train_fraction: f64,
}

impl Default for GpSettings {
    fn default() -> Self {
        Self {
            init: KernelParams::default(),
            restarts: 4,
            max_iters: 200,
            tol: 1e-6,
            screen_iters: 25,
            train_fraction: 0.8,
        }
    }
}

impl GpSettings {
    pub fn fit_options(&self, seed: u64) -> FitOptions {
        FitOptions {
            restarts: self.restarts,
            max_iters: self.max_iters,
            tol: self.tol,
            screen_iters: self.screen_iters,
            seed,
        }
    }
}

/// Everything one experiment needs; defaults reproduce the reference
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub contact: ContactConfig,
    pub gac: GacConfig,
    pub dmp: DmpSettings,
    pub gp: GpSettings,
    pub policy: PolicyConfig,
    pub scene: SceneConfig,
    pub press: PressConfig,
    /// Master seed; every stream in a run derives from it.
    pub seed: u64,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            contact: ContactConfig::default(),
            gac: GacConfig::default(),
            dmp: DmpSettings::default(),
            gp: GpSettings::default(),
            policy: PolicyConfig::default(),
            scene: SceneConfig::default(),
            press: PressConfig::default(),
            seed: 0,
            output_dir: "out".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.contact
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.gac
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.policy.step_size > 0.0
            && self.policy.max_attempts > 0
            && self.policy.divergence_limit > 0.0
            && self.policy.approach_duration > 0.0)
        {
            return Err(ConfigError::Invalid("policy values must be positive".into()));
        }
        if !(self.press.velocity_per_step > 0.0 && self.press.max_duration > 0.0) {
            return Err(ConfigError::Invalid("press values must be positive".into()));
        }
        if self.scene.insert_depth.is_nan()
            || self.scene.insert_depth <= self.contact.insertion_depth_threshold
        {
            return Err(ConfigError::Invalid(
                "scene.insert_depth must exceed contact.insertion_depth_threshold".into(),
            ));
        }
        if self.dmp.n_basis == 0 || self.dmp.alpha <= 0.0 {
            return Err(ConfigError::Invalid("dmp settings must be positive".into()));
        }
        if !(self.gp.train_fraction > 0.0 && self.gp.train_fraction < 1.0) {
            return Err(ConfigError::Invalid(
                "gp.train_fraction must lie in (0,1)".into(),
            ));
        }
        Ok(())
    }

    /// Parse the flat `key = value` format; keys not set keep defaults,
    /// unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or(ConfigError::Parse {
                line,
                msg: "expected `key = value`".into(),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| match e {
                    ConfigError::UnknownKey(_) | ConfigError::BadValue { .. } => e,
                    other => ConfigError::Parse {
                        line,
                        msg: other.to_string(),
                    },
                })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical dump; `parse(dump(cfg))` reproduces `cfg` exactly.
    pub fn dump(&self) -> String {
        let v3 = |v: &Vec3| format!("{},{},{}", v.x, v.y, v.z);
        let v2 = |v: &Vector2<f64>| format!("{},{}", v.x, v.y);
        let axes = |a: &[bool; 3]| {
            let mut s = String::new();
            for (flag, name) in a.iter().zip(["x", "y", "z"]) {
                if *flag {
                    s.push_str(name);
                }
            }
            s
        };
        let ls = self
            .gp
            .init
            .rbf_lengthscales
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let sigma = self
            .contact
            .wrench_noise_sigma
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "contact.peg_radius = {}\n\
             contact.hole_radius = {}\n\
             contact.hole_center = {}\n\
             contact.surface_height = {}\n\
             contact.friction_coeff = {}\n\
             contact.wrench_noise_sigma = {}\n\
             contact.insertion_depth_threshold = {}\n\
             contact.rng_seed = {}\n\
             gac.stiffness = {}\n\
             gac.accommodation = {}\n\
             gac.gamma = {}\n\
             gac.control_rate = {}\n\
             gac.active_axes = {}\n\
             dmp.n_basis = {}\n\
             dmp.alpha = {}\n\
             gp.lengthscales = {}\n\
             gp.rbf_variance = {}\n\
             gp.white_variance = {}\n\
             gp.restarts = {}\n\
             gp.max_iters = {}\n\
             gp.tol = {}\n\
             gp.screen_iters = {}\n\
             gp.train_fraction = {}\n\
             policy.step_size = {}\n\
             policy.max_attempts = {}\n\
             policy.divergence_limit = {}\n\
             policy.approach_duration = {}\n\
             scene.start = {}\n\
             scene.insert_depth = {}\n\
             scene.hover_height = {}\n\
             press.velocity_per_step = {}\n\
             press.max_duration = {}\n\
             seed = {}\n\
             output_dir = {}\n",
            self.contact.peg_radius,
            self.contact.hole_radius,
            v2(&self.contact.hole_center),
            self.contact.surface_height,
            self.contact.friction_coeff,
            sigma,
            self.contact.insertion_depth_threshold,
            self.contact.rng_seed,
            v3(&self.gac.stiffness),
            v3(&self.gac.accommodation),
            self.gac.gamma,
            self.gac.control_rate,
            axes(&self.gac.active_axes),
            self.dmp.n_basis,
            self.dmp.alpha,
            ls,
            self.gp.init.rbf_variance,
            self.gp.init.white_variance,
            self.gp.restarts,
            self.gp.max_iters,
            self.gp.tol,
            self.gp.screen_iters,
            self.gp.train_fraction,
            self.policy.step_size,
            self.policy.max_attempts,
            self.policy.divergence_limit,
            self.policy.approach_duration,
            v3(&self.scene.start),
            self.scene.insert_depth,
            self.scene.hover_height,
            self.press.velocity_per_step,
            self.press.max_duration,
            self.seed,
            self.output_dir,
        )
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |msg: &str| ConfigError::BadValue {
            key: key.to_string(),
            msg: msg.to_string(),
        };
        let f = |v: &str| -> Result<f64, ConfigError> {
            v.parse::<f64>().map_err(|e| bad(&e.to_string()))
        };
        let u = |v: &str| -> Result<u64, ConfigError> {
            v.parse::<u64>().map_err(|e| bad(&e.to_string()))
        };
        let floats = |v: &str| -> Result<Vec<f64>, ConfigError> {
            v.split(',').map(|p| f(p.trim())).collect()
        };
        let vec3 = |v: &str| -> Result<Vec3, ConfigError> {
            let parts = floats(v)?;
            if parts.len() != 3 {
                return Err(bad("expected 3 comma-separated values"));
            }
            Ok(Vector3::new(parts[0], parts[1], parts[2]))
        };
        let vec2 = |v: &str| -> Result<Vector2<f64>, ConfigError> {
            let parts = floats(v)?;
            if parts.len() != 2 {
                return Err(bad("expected 2 comma-separated values"));
            }
            Ok(Vector2::new(parts[0], parts[1]))
        };

        match key {
            "contact.peg_radius" => self.contact.peg_radius = f(value)?,
            "contact.hole_radius" => self.contact.hole_radius = f(value)?,
            "contact.hole_center" => self.contact.hole_center = vec2(value)?,
            "contact.surface_height" => self.contact.surface_height = f(value)?,
            "contact.friction_coeff" => self.contact.friction_coeff = f(value)?,
            "contact.wrench_noise_sigma" => {
                let parts = floats(value)?;
                match parts.len() {
                    1 => self.contact.wrench_noise_sigma = [parts[0]; 6],
                    6 => self
                        .contact
                        .wrench_noise_sigma
                        .copy_from_slice(&parts),
                    _ => return Err(bad("expected 1 or 6 comma-separated values")),
                }
            }
            "contact.insertion_depth_threshold" => {
                self.contact.insertion_depth_threshold = f(value)?
            }
            "contact.rng_seed" => self.contact.rng_seed = u(value)?,
            "gac.stiffness" => self.gac.stiffness = vec3(value)?,
            "gac.accommodation" => self.gac.accommodation = vec3(value)?,
            "gac.gamma" => self.gac.gamma = f(value)?,
            "gac.control_rate" => self.gac.control_rate = f(value)?,
            "gac.active_axes" => {
                let mut axes = [false; 3];
                for ch in value.chars() {
                    match ch {
                        'x' => axes[0] = true,
                        'y' => axes[1] = true,
                        'z' => axes[2] = true,
                        other => return Err(bad(&format!("unknown axis `{other}`"))),
                    }
                }
                self.gac.active_axes = axes;
            }
            "dmp.n_basis" => self.dmp.n_basis = u(value)? as usize,
            "dmp.alpha" => self.dmp.alpha = f(value)?,
            "gp.lengthscales" => {
                let parts = floats(value)?;
                match parts.len() {
                    1 => self.gp.init.rbf_lengthscales = [parts[0]; 6],
                    6 => self.gp.init.rbf_lengthscales.copy_from_slice(&parts),
                    _ => return Err(bad("expected 1 or 6 comma-separated values")),
                }
            }
            "gp.rbf_variance" => self.gp.init.rbf_variance = f(value)?,
            "gp.white_variance" => self.gp.init.white_variance = f(value)?,
            "gp.restarts" => self.gp.restarts = u(value)? as usize,
            "gp.max_iters" => self.gp.max_iters = u(value)? as usize,
            "gp.tol" => self.gp.tol = f(value)?,
            "gp.screen_iters" => self.gp.screen_iters = u(value)? as usize,
            "gp.train_fraction" => self.gp.train_fraction = f(value)?,
            "policy.step_size" => self.policy.step_size = f(value)?,
            "policy.max_attempts" => self.policy.max_attempts = u(value)? as usize,
            "policy.divergence_limit" => self.policy.divergence_limit = f(value)?,
            "policy.approach_duration" => self.policy.approach_duration = f(value)?,
            "scene.start" => self.scene.start = vec3(value)?,
            "scene.insert_depth" => self.scene.insert_depth = f(value)?,
            "scene.hover_height" => self.scene.hover_height = f(value)?,
            "press.velocity_per_step" => self.press.velocity_per_step = f(value)?,
            "press.max_duration" => self.press.max_duration = f(value)?,
            "seed" => self.seed = u(value)?,
            "output_dir" => self.output_dir = value.to_string(),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn dump_then_parse_roundtrips_exactly() {
        let mut cfg = ExperimentConfig::default();
        cfg.gac.gamma = 0.65;
        cfg.contact.hole_center = Vector2::new(3.25, -1.5);
        cfg.gp.init.rbf_lengthscales = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
        cfg.seed = 12345;
        let parsed = ExperimentConfig::parse(&cfg.dump()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::parse("contact.bogus = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey(k) if k == "contact.bogus"));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = ExperimentConfig::parse(
            "# full comment\n\n  gac.gamma = 0.3  # trailing comment\n",
        )
        .unwrap();
        assert_eq!(cfg.gac.gamma, 0.3);
    }

    #[test]
    fn bad_values_carry_the_key() {
        let err = ExperimentConfig::parse("gac.gamma = fast\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { key, .. } if key == "gac.gamma"));
    }

    #[test]
    fn invalid_combination_rejected() {
        let err = ExperimentConfig::parse("gac.gamma = 1.5\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }

    #[test]
    fn axis_set_parses() {
        let cfg = ExperimentConfig::parse("gac.active_axes = xz\n").unwrap();
        assert_eq!(cfg.gac.active_axes, [true, false, true]);
    }
}
