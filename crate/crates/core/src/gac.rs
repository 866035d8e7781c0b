//! Generalized accommodation controller.
//!
//! The controller feeds a discounted integral of the sensed force back into
//! the commanded position increments:
//!
//! ```text
//! I[k]   = gamma * I[k-1] + K_a * f[k]
//! x_c[k] = x_c[k-1] + dx_r[k] + I[k]
//! ```
//!
//! Against a compliant plant `f = K_s (x - x_c)` this makes the contact
//! force converge to a constant even while the reference keeps advancing:
//! with a constant reference speed `v` per step the commanded position stops
//! changing when the integral cancels the advance, which pins the force at
//! `f = v (1 - gamma) / K_a`. Lower speed, higher discount, or lower
//! accommodation gain all reduce the settled contact force.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

use crate::contact::ContactError;
use crate::dmp::Trajectory;
use crate::types::{Vec3, Wrench};

#[derive(Debug, Error)]
pub enum GacError {
    #[error("accommodation gain must be > 0 (unbounded steady-state force)")]
    ZeroAccommodation,
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
    #[error("wrench did not settle within the reference trajectory")]
    NotConverged { trace: Vec<TraceRow> },
    #[error(transparent)]
    Plant(#[from] ContactError),
}

/// Gains and rate of the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GacConfig {
    /// Stiffness of the low-level compliant position controller, N/mm.
    pub stiffness: Vec3,
    /// Diagonal accommodation matrix, mm/N.
    pub accommodation: Vec3,
    /// Discount of the force integral, in (0, 1).
    pub gamma: f64,
    /// Control rate, Hz.
    pub control_rate: f64,
    /// Axes on which the accommodation term is applied; the remaining axes
    /// track the reference exactly.
    pub active_axes: [bool; 3],
}

impl Default for GacConfig {
    fn default() -> Self {
        Self {
            stiffness: Vec3::new(10.0, 10.0, 2.0),
            accommodation: Vec3::new(0.0, 0.0, 1e-3),
            gamma: 0.5,
            control_rate: 280.0,
            // accommodation only in the axis of approach
            active_axes: [false, false, true],
        }
    }
}

impl GacConfig {
    pub fn validate(&self) -> Result<(), GacError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(GacError::InvalidConfig(format!(
                "gamma must lie in (0,1), got {}",
                self.gamma
            )));
        }
        if !(self.stiffness.iter().all(|k| *k > 0.0)) {
            return Err(GacError::InvalidConfig(
                "stiffness must be > 0 per axis".into(),
            ));
        }
        if self.accommodation.iter().any(|k| *k < 0.0) {
            return Err(GacError::InvalidConfig(
                "accommodation gains must be >= 0".into(),
            ));
        }
        if self.control_rate.is_nan() || self.control_rate <= 0.0 {
            return Err(GacError::InvalidConfig("control_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Controller state carried across steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GacState {
    /// Commanded position sent to the low-level controller, mm.
    pub commanded: Vec3,
    /// Discounted force integral, mm.
    pub integral: Vec3,
    pub step: u64,
}

impl GacState {
    pub fn at(commanded: Vec3) -> Self {
        Self {
            commanded,
            integral: Vec3::zeros(),
            step: 0,
        }
    }
}

/// One update of the accommodation law: active axes accumulate the
/// discounted force integral into the command, inactive axes track the
/// reference increment exactly.
pub fn gac_step(state: &GacState, delta_xr: &Vec3, force: &Vec3, cfg: &GacConfig) -> GacState {
    let mut integral = state.integral;
    let mut commanded = state.commanded + delta_xr;
    for axis in 0..3 {
        if cfg.active_axes[axis] {
            integral[axis] = cfg.gamma * integral[axis] + cfg.accommodation[axis] * force[axis];
            commanded[axis] += integral[axis];
        }
    }
    GacState {
        commanded,
        integral,
        step: state.step + 1,
    }
}

/// Closed-form settled contact force for reference speed `v` (mm per
/// control step), discount `gamma`, and accommodation gain `k_a` (mm/N).
pub fn steady_state_force(v: f64, gamma: f64, k_a: f64) -> Result<f64, GacError> {
    if k_a <= 0.0 {
        return Err(GacError::ZeroAccommodation);
    }
    Ok(v * (1.0 - gamma) / k_a)
}

/// The plant seen by the controller: resolves a commanded position to a
/// sensed wrench.
pub trait Plant {
    fn resolve(&mut self, x_c: &Vec3) -> Result<Wrench, ContactError>;
    /// Actual (measured) position after settling.
    fn position(&self) -> Vec3;
    fn inserted(&self) -> bool {
        false
    }
}

/// One row of the closed-loop trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub time_s: f64,
    pub reference_z: f64,
    pub commanded_z: f64,
    pub actual_z: f64,
    pub wrench: Wrench,
}

/// Settledness test on the wrench stream: two adjacent trailing windows
/// must have channel means within tolerance of each other. Window means
/// stay meaningful under sensor noise, unlike a raw max-minus-min range.
#[derive(Debug, Clone)]
pub struct SteadyStateDetector {
    window: usize,
    force_tol: f64,
    moment_tol: f64,
    history: VecDeque<[f64; 6]>,
    sum_old: [f64; 6],
    sum_new: [f64; 6],
}

impl SteadyStateDetector {
    /// `window` in samples; tolerances in N (forces) and N·mm (moments).
    pub fn new(window: usize, force_tol: f64, moment_tol: f64) -> Self {
        Self {
            window: window.max(1),
            force_tol,
            moment_tol,
            history: VecDeque::new(),
            sum_old: [0.0; 6],
            sum_new: [0.0; 6],
        }
    }

    /// Detector used during data collection: a one-second window at the
    /// given control rate with tolerances wide enough for the default
    /// sensor noise.
    pub fn for_collection(control_rate: f64) -> Self {
        Self::new(control_rate.round() as usize, 0.05, 0.5)
    }

    /// Push one wrench; returns the trailing-window mean once both windows
    /// agree within tolerance on every channel.
    pub fn push(&mut self, w: &Wrench) -> Option<Wrench> {
        let c = w.channels();
        self.history.push_back(c);
        for i in 0..6 {
            self.sum_new[i] += c[i];
        }
        if self.history.len() > self.window {
            let mid = self.history[self.history.len() - 1 - self.window];
            for i in 0..6 {
                self.sum_new[i] -= mid[i];
                self.sum_old[i] += mid[i];
            }
        }
        if self.history.len() > 2 * self.window {
            let gone = self.history.pop_front().expect("non-empty");
            for i in 0..6 {
                self.sum_old[i] -= gone[i];
            }
        }
        if self.history.len() < 2 * self.window {
            return None;
        }
        let n = self.window as f64;
        let settled = (0..6).all(|i| {
            let tol = if i < 3 { self.force_tol } else { self.moment_tol };
            ((self.sum_new[i] - self.sum_old[i]) / n).abs() < tol
        });
        if settled {
            let mut mean = [0.0; 6];
            for i in 0..6 {
                mean[i] = self.sum_new[i] / n;
            }
            Some(Wrench::from_channels(mean))
        } else {
            None
        }
    }

    /// Mean over the trailing window of everything pushed so far.
    pub fn trailing_mean(&self) -> Option<Wrench> {
        if self.history.is_empty() {
            return None;
        }
        let n = self.history.len().min(self.window);
        let mut mean = [0.0; 6];
        for c in self.history.iter().rev().take(n) {
            for i in 0..6 {
                mean[i] += c[i];
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        Some(Wrench::from_channels(mean))
    }
}

/// Result of driving the closed loop along a reference trajectory.
#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    /// Trailing-window mean wrench at the detection point.
    pub steady_wrench: Wrench,
    /// Step index at which the detector fired; `None` when the run ended
    /// early because the plant reported insertion.
    pub converged_at: Option<usize>,
    pub inserted: bool,
    pub final_state: GacState,
    pub trace: Vec<TraceRow>,
}

/// Step the closed loop (controller update, then plant equilibrium) along
/// `reference` until the wrench settles, the plant reports insertion, or
/// the reference is exhausted. The commanded position starts at the first
/// reference sample.
pub fn run_to_steady_state(
    reference: &Trajectory,
    cfg: &GacConfig,
    plant: &mut dyn Plant,
    mut detector: SteadyStateDetector,
) -> Result<ClosedLoopRun, GacError> {
    cfg.validate()?;
    let positions = reference.positions();
    let mut state = GacState::at(positions[0]);
    let mut wrench = plant.resolve(&state.commanded)?;
    let mut trace = Vec::with_capacity(positions.len());
    let dt = 1.0 / reference.sample_rate();

    for k in 1..positions.len() {
        let delta = positions[k] - positions[k - 1];
        state = gac_step(&state, &delta, &wrench.force(), cfg);
        wrench = plant.resolve(&state.commanded)?;
        trace.push(TraceRow {
            step: k,
            time_s: k as f64 * dt,
            reference_z: positions[k].z,
            commanded_z: state.commanded.z,
            actual_z: plant.position().z,
            wrench,
        });
        if plant.inserted() {
            return Ok(ClosedLoopRun {
                steady_wrench: detector.trailing_mean().unwrap_or(wrench),
                converged_at: None,
                inserted: true,
                final_state: state,
                trace,
            });
        }
        if let Some(mean) = detector.push(&wrench) {
            return Ok(ClosedLoopRun {
                steady_wrench: mean,
                converged_at: Some(k),
                inserted: false,
                final_state: state,
                trace,
            });
        }
    }
    Err(GacError::NotConverged { trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::SpringWall;
    use approx::assert_relative_eq;

    fn descent_reference(start_z: f64, v_per_step: f64, steps: usize, rate: f64) -> Trajectory {
        let positions = (0..steps)
            .map(|k| Vec3::new(0.0, 0.0, start_z - v_per_step * k as f64))
            .collect();
        Trajectory::from_rate(rate, positions).unwrap()
    }

    fn z_config(gamma: f64, k_a: f64) -> GacConfig {
        GacConfig {
            accommodation: Vec3::new(0.0, 0.0, k_a),
            gamma,
            ..GacConfig::default()
        }
    }

    #[test]
    fn free_space_step_tracks_reference() {
        let cfg = GacConfig::default();
        let state = GacState::at(Vec3::zeros());
        let next = gac_step(
            &state,
            &Vec3::new(0.0, 0.0, -0.01),
            &Vec3::zeros(),
            &cfg,
        );
        assert_eq!(next.commanded, Vec3::new(0.0, 0.0, -0.01));
        assert_eq!(next.integral, Vec3::zeros());
    }

    // Hand-iterated single step of the update rule.
    #[test]
    fn single_step_frozen_values() {
        let cfg = z_config(0.5, 1e-3);
        let state = GacState::at(Vec3::zeros());
        let next = gac_step(
            &state,
            &Vec3::new(0.0, 0.0, -0.01),
            &Vec3::new(0.0, 0.0, 2.0),
            &cfg,
        );
        assert_relative_eq!(next.integral.z, 0.002, max_relative = 1e-12);
        assert_relative_eq!(next.commanded.z, -0.008, max_relative = 1e-12);
    }

    // Fixed point of the recursion: with the integral converged to the
    // reference speed, the command no longer moves.
    #[test]
    fn converged_integral_halts_command() {
        let (gamma, k_a, v) = (0.5, 1e-3, 0.01);
        let f_tilde = steady_state_force(v, gamma, k_a).unwrap();
        let cfg = z_config(gamma, k_a);
        let state = GacState {
            commanded: Vec3::new(0.0, 0.0, -3.0),
            integral: Vec3::new(0.0, 0.0, v),
            step: 100,
        };
        let next = gac_step(
            &state,
            &Vec3::new(0.0, 0.0, -v),
            &Vec3::new(0.0, 0.0, f_tilde),
            &cfg,
        );
        assert!((next.commanded.z - state.commanded.z).abs() < 1e-9);
    }

    #[test]
    fn steady_state_force_closed_form() {
        assert_relative_eq!(steady_state_force(0.01, 0.5, 1e-3).unwrap(), 5.0);
        assert_relative_eq!(steady_state_force(0.0, 0.5, 1e-3).unwrap(), 0.0);
        assert_relative_eq!(steady_state_force(0.01, 0.9, 1e-3).unwrap(), 1.0);
        assert!(matches!(
            steady_state_force(0.01, 0.5, 0.0),
            Err(GacError::ZeroAccommodation)
        ));
    }

    #[test]
    fn free_space_run_settles_on_zero_wrench() {
        let reference = descent_reference(50.0, 0.01, 2000, 280.0);
        let mut wall = SpringWall::new(2.0, -1000.0);
        let run = run_to_steady_state(
            &reference,
            &GacConfig::default(),
            &mut wall,
            SteadyStateDetector::new(280, 0.05, 0.5),
        )
        .unwrap();
        assert!(run.converged_at.is_some());
        assert!(run.steady_wrench.fz.abs() < 1e-12);
    }

    #[test]
    fn spring_wall_converges_to_predicted_force() {
        let (gamma, k_a, v) = (0.5, 1e-3, 0.01);
        let predicted = steady_state_force(v, gamma, k_a).unwrap();
        let reference = descent_reference(1.0, v, 8400, 280.0);
        let mut wall = SpringWall::new(2.0, 0.0);
        let run = run_to_steady_state(
            &reference,
            &z_config(gamma, k_a),
            &mut wall,
            SteadyStateDetector::new(280, 1e-3, 1e-2),
        )
        .unwrap();
        let measured = run.steady_wrench.fz;
        assert!(
            (measured - predicted).abs() / predicted < 0.02,
            "measured {measured} vs predicted {predicted}"
        );
    }

    #[test]
    fn higher_gamma_converges_faster() {
        let (k_a, v) = (1e-3, 0.01);
        let steps_for = |gamma: f64| {
            let reference = descent_reference(1.0, v, 8400, 280.0);
            let mut wall = SpringWall::new(2.0, 0.0);
            run_to_steady_state(
                &reference,
                &z_config(gamma, k_a),
                &mut wall,
                SteadyStateDetector::new(280, 1e-3, 1e-2),
            )
            .unwrap()
            .converged_at
            .unwrap()
        };
        let (s30, s50, s65) = (steps_for(0.3), steps_for(0.5), steps_for(0.65));
        assert!(s30 > s50 && s50 > s65, "{s30} {s50} {s65}");
    }

    #[test]
    fn settled_force_monotonic_in_parameters() {
        let measure = |gamma: f64, k_a: f64, v: f64| {
            let reference = descent_reference(1.0, v, 8400, 280.0);
            let mut wall = SpringWall::new(2.0, 0.0);
            run_to_steady_state(
                &reference,
                &z_config(gamma, k_a),
                &mut wall,
                SteadyStateDetector::new(280, 1e-3, 1e-2),
            )
            .unwrap()
            .steady_wrench
            .fz
        };
        // increasing in v
        assert!(measure(0.5, 1e-3, 0.01) > measure(0.5, 1e-3, 0.005));
        // decreasing in gamma
        assert!(measure(0.3, 1e-3, 0.01) > measure(0.65, 1e-3, 0.01));
        // decreasing in k_a
        assert!(measure(0.5, 5e-4, 0.01) > measure(0.5, 2e-3, 0.01));
    }

    #[test]
    fn no_overshoot_blowup_below_oscillation_region() {
        for gamma in [0.3, 0.5, 0.65] {
            let (k_a, v) = (2e-3, 0.01);
            let predicted = steady_state_force(v, gamma, k_a).unwrap();
            let reference = descent_reference(1.0, v, 8400, 280.0);
            let mut wall = SpringWall::new(2.0, 0.0);
            let run = run_to_steady_state(
                &reference,
                &z_config(gamma, k_a),
                &mut wall,
                SteadyStateDetector::new(280, 1e-3, 1e-2),
            )
            .unwrap();
            let max_fz = run
                .trace
                .iter()
                .map(|r| r.wrench.fz.abs())
                .fold(0.0, f64::max);
            assert!(max_fz <= 3.0 * predicted, "gamma {gamma}: {max_fz}");
        }
    }

    #[test]
    fn not_converged_carries_trace() {
        // Short reference: detector can never see two full windows.
        let reference = descent_reference(1.0, 0.01, 100, 280.0);
        let mut wall = SpringWall::new(2.0, 0.0);
        let err = run_to_steady_state(
            &reference,
            &GacConfig::default(),
            &mut wall,
            SteadyStateDetector::new(280, 1e-3, 1e-2),
        )
        .unwrap_err();
        match err {
            GacError::NotConverged { trace } => assert_eq!(trace.len(), 99),
            other => panic!("unexpected error {other}"),
        }
    }

    proptest::proptest! {
        // With zero force the commanded trajectory is the reference,
        // bit-for-bit up to floating accumulation.
        #[test]
        fn zero_force_identity(increments in proptest::collection::vec(-0.05f64..0.05, 1..200)) {
            let cfg = GacConfig::default();
            let mut state = GacState::at(Vec3::new(0.0, 0.0, 10.0));
            let mut reference = Vec3::new(0.0, 0.0, 10.0);
            for dz in increments {
                let delta = Vec3::new(dz * 0.3, dz * 0.2, -dz.abs());
                reference += delta;
                state = gac_step(&state, &delta, &Vec3::zeros(), &cfg);
                proptest::prop_assert!((state.commanded - reference).norm() < 1e-9);
            }
        }
    }
}
