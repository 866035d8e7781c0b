//! Quasi-static peg-on-surface contact simulator.
//!
//! The plant stands in for the robot plus its environment: a rigid
//! flat-bottomed peg driven by a compliant position controller over a rigid
//! plane with a circular hole. Each control step resolves the static
//! equilibrium for the commanded position `x_c` under the stiffness force
//! law `f = K_s (x - x_c)`:
//!
//! - commanded above the surface, or over the opening: the peg follows the
//!   command exactly (free space / free descent into the hole);
//! - any part of the bottom over the surface while commanded below it: the
//!   peg rests at surface height, the vertical reaction `K_s,z (z0 - x_c,z)`
//!   acts at the centroid of the supported area and tips the wrench with the
//!   corresponding moments;
//! - once the bottom is below surface height, the hole wall keeps the peg
//!   centre within the radial clearance.
//!
//! The peg is a point-position device: no arm kinematics and no tilt, so
//! misalignment is purely planar. Lateral friction forces at rest are zero
//! (the peg is pressed only vertically); the friction coefficient is kept in
//! the configuration for future extension.

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gac::Plant;
use crate::geometry::support_region;
use crate::rng::{rng_from_seed, Rng as SimRng};
use crate::types::{Vec3, Wrench};

#[derive(Debug, Error)]
pub enum ContactError {
    #[error("commanded position is not finite")]
    NonFiniteCommand,
    #[error("invalid contact configuration: {0}")]
    InvalidConfig(String),
}

/// Geometry, noise, and success threshold of the contact scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactConfig {
    /// Peg radius R, mm.
    pub peg_radius: f64,
    /// Hole radius R_h, mm; must exceed the peg radius.
    pub hole_radius: f64,
    /// Hole centre in the world plane, mm.
    pub hole_center: Vector2<f64>,
    /// Surface height z0, mm.
    pub surface_height: f64,
    /// Friction coefficient (unused at rest; retained for extension).
    pub friction_coeff: f64,
    /// Per-channel noise standard deviation `[fx, fy, fz, mx, my, mz]`
    /// in N / N·mm.
    pub wrench_noise_sigma: [f64; 6],
    /// Depth below the surface that counts as a completed insertion, mm.
    pub insertion_depth_threshold: f64,
    /// Seed of the per-instance noise generator.
    pub rng_seed: u64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            peg_radius: 10.0,
            hole_radius: 11.0,
            hole_center: Vector2::zeros(),
            surface_height: 0.0,
            friction_coeff: 0.3,
            wrench_noise_sigma: [0.05, 0.05, 0.05, 0.5, 0.5, 0.5],
            insertion_depth_threshold: 3.0,
            rng_seed: 0,
        }
    }
}

impl ContactConfig {
    /// Radial clearance `R_h - R`; misalignments below it permit open-loop
    /// insertion.
    pub fn clearance(&self) -> f64 {
        self.hole_radius - self.peg_radius
    }

    /// Copy with the wrench noise switched off.
    pub fn noiseless(&self) -> Self {
        Self {
            wrench_noise_sigma: [0.0; 6],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ContactError> {
        if !(self.peg_radius > 0.0 && self.hole_radius > self.peg_radius) {
            return Err(ContactError::InvalidConfig(format!(
                "need hole_radius > peg_radius > 0, got R={} R_h={}",
                self.peg_radius, self.hole_radius
            )));
        }
        if self.friction_coeff < 0.0 {
            return Err(ContactError::InvalidConfig(
                "friction_coeff must be >= 0".into(),
            ));
        }
        if self.wrench_noise_sigma.iter().any(|s| *s < 0.0) {
            return Err(ContactError::InvalidConfig(
                "wrench_noise_sigma entries must be >= 0".into(),
            ));
        }
        if self.insertion_depth_threshold <= 0.0 {
            return Err(ContactError::InvalidConfig(
                "insertion_depth_threshold must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Pose and contact status of the peg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// Peg-axis bottom-centre position, mm.
    pub position: Vec3,
    /// Latched once the peg has settled deep enough inside the hole.
    pub inserted: bool,
    pub last_wrench: Wrench,
}

impl SimState {
    pub fn at(position: Vec3) -> Self {
        Self {
            position,
            inserted: false,
            last_wrench: Wrench::ZERO,
        }
    }
}

/// True iff the planar offset is strictly within the clearance and the
/// depth below the surface strictly exceeds the insertion threshold.
pub fn is_inserted(state: &SimState, cfg: &ContactConfig) -> bool {
    let offset = (Vector2::new(state.position.x, state.position.y) - cfg.hole_center).norm();
    let depth = cfg.surface_height - state.position.z;
    offset < cfg.clearance() && depth > cfg.insertion_depth_threshold
}

/// One peg-plus-hole scene with its own seeded noise stream. Instances are
/// independent; each episode owns exactly one.
#[derive(Debug, Clone)]
pub struct ContactSim {
    cfg: ContactConfig,
    stiffness: Vec3,
    rng: SimRng,
    state: SimState,
}

impl ContactSim {
    /// `stiffness` is the per-axis gain of the low-level compliant position
    /// controller, N/mm.
    pub fn new(cfg: ContactConfig, stiffness: Vec3, start: Vec3) -> Result<Self, ContactError> {
        cfg.validate()?;
        if !(stiffness.x > 0.0 && stiffness.y > 0.0 && stiffness.z > 0.0) {
            return Err(ContactError::InvalidConfig(
                "stiffness must be > 0 per axis".into(),
            ));
        }
        let rng = rng_from_seed(cfg.rng_seed);
        Ok(Self {
            cfg,
            stiffness,
            rng,
            state: SimState::at(start),
        })
    }

    pub fn config(&self) -> &ContactConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    fn sample_noise(&mut self) -> Wrench {
        let sigma = self.cfg.wrench_noise_sigma;
        if sigma.iter().all(|s| *s == 0.0) {
            return Wrench::ZERO;
        }
        let mut c = [0.0; 6];
        for (v, s) in c.iter_mut().zip(sigma) {
            let n: f64 = self.rng.sample(StandardNormal);
            *v = s * n;
        }
        Wrench::from_channels(c)
    }

    /// First point where the continuous slide from the previous resting
    /// position to the commanded one brings the peg centre within the
    /// clearance of the hole. Only applies while the peg slides along the
    /// surface; a purely vertical touchdown never triggers it.
    fn swept_opening_crossing(&self, x_c: &Vec3) -> Option<Vector2<f64>> {
        if self.state.position.z != self.cfg.surface_height {
            return None;
        }
        let p0 = Vector2::new(self.state.position.x, self.state.position.y);
        let v = Vector2::new(x_c.x, x_c.y) - p0;
        let vv = v.dot(&v);
        if vv == 0.0 {
            return None;
        }
        let rel = p0 - self.cfg.hole_center;
        let clearance = self.cfg.clearance();
        let b = 2.0 * rel.dot(&v);
        let c0 = rel.dot(&rel) - clearance * clearance;
        let disc = b * b - 4.0 * vv * c0;
        if disc < 0.0 {
            return None;
        }
        let t = (-b - disc.sqrt()) / (2.0 * vv);
        if !(0.0..=1.0).contains(&t) {
            return None;
        }
        // entry point on the clearance circle, nudged strictly inside
        let entry = p0 + v * t;
        let offset = entry - self.cfg.hole_center;
        let r = offset.norm();
        let max_r = clearance * (1.0 - 1e-12);
        if r <= max_r {
            Some(entry)
        } else {
            Some(self.cfg.hole_center + offset * (max_r / r))
        }
    }

    /// Settle the peg for commanded position `x_c` and return the new state
    /// with the sensed wrench (reaction on the peg, noise included).
    pub fn resolve_equilibrium(&mut self, x_c: &Vec3) -> Result<(SimState, Wrench), ContactError> {
        if !(x_c.x.is_finite() && x_c.y.is_finite() && x_c.z.is_finite()) {
            return Err(ContactError::NonFiniteCommand);
        }
        let z0 = self.cfg.surface_height;
        let was_below_surface = self.state.position.z < z0;

        let (position, clean) = if x_c.z >= z0 {
            // free space above the surface (also covers retraction)
            (*x_c, Wrench::ZERO)
        } else if was_below_surface {
            // inside the hole: the wall keeps the centre within clearance
            let offset = Vector2::new(x_c.x, x_c.y) - self.cfg.hole_center;
            let r = offset.norm();
            let max_r = self.cfg.clearance() * (1.0 - 1e-12);
            if r <= max_r {
                (*x_c, Wrench::ZERO)
            } else {
                let lat = self.cfg.hole_center + offset * (max_r / r);
                let f_lat = Vector2::new(
                    self.stiffness.x * (lat.x - x_c.x),
                    self.stiffness.y * (lat.y - x_c.y),
                );
                (
                    Vec3::new(lat.x, lat.y, x_c.z),
                    Wrench::new(f_lat.x, f_lat.y, 0.0, 0.0, 0.0, 0.0),
                )
            }
        } else {
            let d = self.cfg.hole_center - Vector2::new(x_c.x, x_c.y);
            let support = support_region(self.cfg.peg_radius, self.cfg.hole_radius, d);
            if support.area == 0.0 {
                // fully over the opening: free descent into the hole
                (*x_c, Wrench::ZERO)
            } else if let Some(catch) = self.swept_opening_crossing(x_c) {
                // the slide between the previous tick and this command
                // passed over the opening: a pressed peg drops in there
                (Vec3::new(catch.x, catch.y, x_c.z), Wrench::ZERO)
            } else {
                // resting on the surface, pressed down by the command; the
                // reaction acts at the support centroid
                let fz = self.stiffness.z * (z0 - x_c.z);
                let c = support.centroid;
                (
                    Vec3::new(x_c.x, x_c.y, z0),
                    Wrench::new(0.0, 0.0, fz, c.y * fz, -c.x * fz, 0.0),
                )
            }
        };

        let wrench = clean + self.sample_noise();
        let mut state = SimState {
            position,
            inserted: self.state.inserted,
            last_wrench: wrench,
        };
        if !state.inserted && is_inserted(&state, &self.cfg) {
            state.inserted = true;
        }
        self.state = state;
        Ok((state, wrench))
    }
}

impl Plant for ContactSim {
    fn resolve(&mut self, x_c: &Vec3) -> Result<Wrench, ContactError> {
        self.resolve_equilibrium(x_c).map(|(_, w)| w)
    }

    fn position(&self) -> Vec3 {
        self.state.position
    }

    fn inserted(&self) -> bool {
        self.state.inserted
    }
}

/// A plain elastic wall at `z0` with no hole: the 1-D plant used to verify
/// the accommodation controller's steady-state force law.
#[derive(Debug, Clone)]
pub struct SpringWall {
    pub stiffness_z: f64,
    pub surface_height: f64,
    position: Vec3,
}

impl SpringWall {
    pub fn new(stiffness_z: f64, surface_height: f64) -> Self {
        Self {
            stiffness_z,
            surface_height,
            position: Vec3::new(0.0, 0.0, surface_height),
        }
    }
}

impl Plant for SpringWall {
    fn resolve(&mut self, x_c: &Vec3) -> Result<Wrench, ContactError> {
        if x_c.z < self.surface_height {
            self.position = Vec3::new(x_c.x, x_c.y, self.surface_height);
            let fz = self.stiffness_z * (self.surface_height - x_c.z);
            Ok(Wrench::new(0.0, 0.0, fz, 0.0, 0.0, 0.0))
        } else {
            self.position = *x_c;
            Ok(Wrench::ZERO)
        }
    }

    fn position(&self) -> Vec3 {
        self.position
    }
}
