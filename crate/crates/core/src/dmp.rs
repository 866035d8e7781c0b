//! Discrete dynamic movement primitives.
//!
//! One primitive per Cartesian axis, in the standard discrete form: an
//! exponential canonical phase `x` drives a forcing term built from
//! Gaussian basis functions, added to a critically damped goal attractor,
//!
//! ```text
//! tau z' = alpha (beta (g - y) - z) + f(x) ,   tau y' = z ,
//! f(x)   = x (g - y0) * sum_i w_i psi_i(x) / sum_i psi_i(x) .
//! ```
//!
//! Fitting inverts the transformation system on one demonstration
//! (derivatives by finite differences) and solves the basis weights by
//! least squares; rollout integrates the system with explicit Euler and
//! generalizes over new start and goal positions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Vec3;

#[derive(Debug, Error)]
pub enum DmpError {
    #[error("trajectory needs at least 2 samples")]
    TooShort,
    #[error("timestamps must be strictly increasing and uniform (step {0} deviates)")]
    NonUniformSampling(usize),
    #[error("trajectory values must be finite")]
    NonFinite,
    #[error("rollout parameters must be finite with dt > 0 and duration > 0")]
    BadRollout,
    #[error("basis count must be >= 1")]
    NoBasis,
}

/// Uniformly sampled Cartesian trajectory, mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    sample_rate: f64,
    positions: Vec<Vec3>,
}

impl Trajectory {
    pub fn from_rate(sample_rate: f64, positions: Vec<Vec3>) -> Result<Self, DmpError> {
        if positions.len() < 2 {
            return Err(DmpError::TooShort);
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(DmpError::BadRollout);
        }
        if positions.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(DmpError::NonFinite);
        }
        Ok(Self {
            sample_rate,
            positions,
        })
    }

    /// Build from explicit timestamps, enforcing uniform sampling within
    /// 1 ns tolerance.
    pub fn from_timestamps(timestamps: &[f64], positions: Vec<Vec3>) -> Result<Self, DmpError> {
        if timestamps.len() != positions.len() || timestamps.len() < 2 {
            return Err(DmpError::TooShort);
        }
        let dt = timestamps[1] - timestamps[0];
        if dt.is_nan() || dt <= 0.0 {
            return Err(DmpError::NonUniformSampling(1));
        }
        for k in 1..timestamps.len() {
            let step = timestamps[k] - timestamps[k - 1];
            if (step - dt).abs() > 1e-9 {
                return Err(DmpError::NonUniformSampling(k));
            }
        }
        Self::from_rate(1.0 / dt, positions)
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        (self.positions.len() - 1) as f64 / self.sample_rate
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn start(&self) -> Vec3 {
        self.positions[0]
    }

    pub fn end(&self) -> Vec3 {
        *self.positions.last().expect("non-empty")
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        let dt = self.dt();
        (0..self.positions.len()).map(move |k| k as f64 * dt)
    }
}

/// Minimum-jerk point-to-point profile with `n_samples` rows; the last row
/// lands exactly on the goal.
pub fn min_jerk(start: Vec3, goal: Vec3, n_samples: usize, sample_rate: f64) -> Trajectory {
    let n = n_samples.max(2);
    let span = (n - 1) as f64;
    let positions = (0..n)
        .map(|k| {
            let tau = k as f64 / span;
            let s = tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
            start + (goal - start) * s
        })
        .collect();
    Trajectory::from_rate(sample_rate, positions).expect("n >= 2")
}

/// Fitted per-axis movement primitive. `beta = alpha / 4` (critical
/// damping) is enforced at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmpParams {
    pub alpha: f64,
    pub beta: f64,
    /// Canonical phase decay, 1/s: `x(t) = exp(-decay * t)`.
    pub canonical_decay: f64,
    pub n_basis: usize,
    /// Basis centres in canonical-phase units.
    pub centers: Vec<f64>,
    /// Basis widths in canonical-phase units.
    pub widths: Vec<f64>,
    /// Per-axis basis weights.
    pub weights: [Vec<f64>; 3],
    /// Demonstration start, mm.
    pub start: Vec3,
    /// Demonstration goal, mm.
    pub goal: Vec3,
    /// Demonstration duration, s; also the time constant of the
    /// transformation system.
    pub duration: f64,
}

// Forcing amplitudes below this are treated as a degenerate (g = y0) axis
// and scaled by 1 instead, avoiding division by zero in fitting.
const DEGENERATE_SPAN: f64 = 1e-9;

fn basis_values(centers: &[f64], widths: &[f64], x: f64) -> (Vec<f64>, f64) {
    let mut psi = Vec::with_capacity(centers.len());
    let mut sum = 0.0;
    for (c, h) in centers.iter().zip(widths) {
        let v = (-h * (x - c) * (x - c)).exp();
        psi.push(v);
        sum += v;
    }
    (psi, sum)
}

impl DmpParams {
    /// Weighted-basis forcing value at phase `x` for one axis, without the
    /// `x * (g - y0)` amplitude.
    fn shape(&self, axis: usize, x: f64) -> f64 {
        let (psi, sum) = basis_values(&self.centers, &self.widths, x);
        if sum <= f64::MIN_POSITIVE {
            return 0.0;
        }
        let w = &self.weights[axis];
        psi.iter().zip(w).map(|(p, w)| p * w).sum::<f64>() / sum
    }
}

/// Learn one primitive per axis from a single demonstration. Start and
/// goal are taken from the demonstration endpoints; weights minimize the
/// squared forcing-term reconstruction error.
pub fn fit(demo: &Trajectory, n_basis: usize, alpha: f64) -> Result<DmpParams, DmpError> {
    if n_basis == 0 {
        return Err(DmpError::NoBasis);
    }
    let n = demo.len();
    let tau = demo.duration();
    let dt = demo.dt();
    let beta = alpha / 4.0;
    // Canonical phase reaches exp(-alpha/3) by the end of the demo.
    let canonical_decay = alpha / 3.0 / tau;

    let y0 = demo.start();
    let goal = demo.end();

    // basis centres equally spaced in time, mapped through the phase
    let centers: Vec<f64> = (0..n_basis)
        .map(|i| {
            let t = if n_basis == 1 {
                tau / 2.0
            } else {
                i as f64 * tau / (n_basis - 1) as f64
            };
            (-canonical_decay * t).exp()
        })
        .collect();
    let mut widths: Vec<f64> = (0..n_basis.saturating_sub(1))
        .map(|i| {
            let gap = centers[i] - centers[i + 1];
            1.0 / (2.0 * gap * gap)
        })
        .collect();
    widths.push(*widths.last().unwrap_or(&1.0));

    // demonstration derivatives by finite differences
    let pos = demo.positions();
    let mut vel = vec![Vec3::zeros(); n];
    let mut acc = vec![Vec3::zeros(); n];
    for k in 0..n {
        vel[k] = if k == 0 {
            (pos[1] - pos[0]) / dt
        } else if k == n - 1 {
            (pos[n - 1] - pos[n - 2]) / dt
        } else {
            (pos[k + 1] - pos[k - 1]) / (2.0 * dt)
        };
    }
    for k in 0..n {
        acc[k] = if k == 0 || k == n - 1 {
            Vec3::zeros()
        } else {
            (pos[k + 1] - 2.0 * pos[k] + pos[k - 1]) / (dt * dt)
        };
    }

    // design matrix shared by all axes (amplitude factored out)
    let mut design = DMatrix::zeros(n, n_basis);
    for (k, t) in demo.timestamps().enumerate() {
        let x = (-canonical_decay * t).exp();
        let (psi, sum) = basis_values(&centers, &widths, x);
        if sum > f64::MIN_POSITIVE {
            for i in 0..n_basis {
                design[(k, i)] = psi[i] / sum * x;
            }
        }
    }

    let mut targets = DMatrix::zeros(n, 3);
    let mut spans = [0.0; 3];
    for axis in 0..3 {
        let span = goal[axis] - y0[axis];
        spans[axis] = if span.abs() < DEGENERATE_SPAN { 1.0 } else { span };
        for k in 0..n {
            // invert the transformation system on the demonstration
            let f = tau * tau * acc[k][axis] + alpha * tau * vel[k][axis]
                - alpha * beta * (goal[axis] - pos[k][axis]);
            targets[(k, axis)] = f / spans[axis];
        }
    }

    let svd = design.svd(true, true);
    let solution = svd
        .solve(&targets, 1e-12)
        .map_err(|_| DmpError::NonFinite)?;
    let weights = [
        solution.column(0).iter().copied().collect(),
        solution.column(1).iter().copied().collect(),
        solution.column(2).iter().copied().collect(),
    ];

    Ok(DmpParams {
        alpha,
        beta,
        canonical_decay,
        n_basis,
        centers,
        widths,
        weights,
        start: y0,
        goal,
        duration: tau,
    })
}

/// Integrate the primitive forward (explicit Euler at `dt`) toward a new
/// start and goal.
pub fn rollout(
    params: &DmpParams,
    new_start: Vec3,
    new_goal: Vec3,
    dt: f64,
    duration: f64,
) -> Result<Trajectory, DmpError> {
    let finite =
        |v: &Vec3| v.iter().all(|c| c.is_finite());
    if !(dt > 0.0 && duration > 0.0 && finite(&new_start) && finite(&new_goal)) {
        return Err(DmpError::BadRollout);
    }
    let n = (duration / dt).round() as usize + 1;
    let tau = params.duration;
    let mut scales = Vec3::zeros();
    for axis in 0..3 {
        let span = new_goal[axis] - new_start[axis];
        scales[axis] = if span.abs() < DEGENERATE_SPAN { 1.0 } else { span };
    }

    // Below half the last basis centre the demonstration no longer
    // constrains the shape; run the bare attractor there so the rollout
    // settles cleanly onto the goal.
    let x_floor = params.centers.last().copied().unwrap_or(0.0) * 0.5;

    let mut positions = Vec::with_capacity(n);
    let mut y = new_start;
    let mut z = Vec3::zeros();
    let mut x = 1.0;
    positions.push(y);
    for _ in 1..n {
        let mut z_next = Vec3::zeros();
        let mut y_next = Vec3::zeros();
        for axis in 0..3 {
            let forcing = if x > x_floor {
                x * scales[axis] * params.shape(axis, x)
            } else {
                0.0
            };
            let dz = params.alpha * (params.beta * (new_goal[axis] - y[axis]) - z[axis]) + forcing;
            z_next[axis] = z[axis] + dt / tau * dz;
            y_next[axis] = y[axis] + dt / tau * z[axis];
        }
        z = z_next;
        y = y_next;
        x += dt * (-params.canonical_decay * x);
        positions.push(y);
    }
    Trajectory::from_rate(1.0 / dt, positions)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RATE: f64 = 280.0;

    fn min_jerk_1d(n: usize) -> Trajectory {
        min_jerk(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), n, RATE)
    }

    #[test]
    fn trajectory_rejects_non_uniform_sampling() {
        let ts = [0.0, 0.1, 0.21];
        let pos = vec![Vec3::zeros(); 3];
        assert!(matches!(
            Trajectory::from_timestamps(&ts, pos),
            Err(DmpError::NonUniformSampling(2))
        ));
    }

    #[test]
    fn trajectory_rejects_single_sample() {
        assert!(matches!(
            Trajectory::from_rate(RATE, vec![Vec3::zeros()]),
            Err(DmpError::TooShort)
        ));
    }

    #[test]
    fn constant_demo_fits_near_zero_weights() {
        let demo = Trajectory::from_rate(
            RATE,
            vec![Vec3::new(2.0, -1.0, 5.0); 300],
        )
        .unwrap();
        let params = fit(&demo, 20, 25.0).unwrap();
        for axis in 0..3 {
            for w in &params.weights[axis] {
                assert!(w.abs() < 1e-6, "axis {axis} weight {w}");
            }
        }
    }

    // The stored analytic minimum-jerk curve is the oracle: the rollout at
    // the training start/goal must reproduce it within 1% of the range.
    #[test]
    fn min_jerk_reproduction_under_one_percent() {
        let demo = min_jerk_1d(281); // 1 s
        let params = fit(&demo, 50, 25.0).unwrap();
        let roll = rollout(&params, demo.start(), demo.end(), demo.dt(), demo.duration()).unwrap();
        let n = roll.len().min(demo.len());
        let mse: f64 = (0..n)
            .map(|k| {
                let tau = k as f64 / (demo.len() - 1) as f64;
                let s = tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
                (roll.positions()[k].x - s).powi(2)
            })
            .sum::<f64>()
            / n as f64;
        assert!(mse.sqrt() < 0.01, "rmse {}", mse.sqrt());
    }

    // Forcing-term reconstruction residual on a constant-velocity ramp.
    #[test]
    fn ramp_forcing_residual_is_small() {
        let n = 561;
        let positions: Vec<Vec3> = (0..n)
            .map(|k| Vec3::new(5.0 * k as f64 / (n - 1) as f64, 0.0, 0.0))
            .collect();
        let demo = Trajectory::from_rate(RATE, positions).unwrap();
        let params = fit(&demo, 50, 25.0).unwrap();

        // recompute the forcing target and its reconstruction on interior
        // samples (endpoint accelerations are not defined by differences)
        let pos = demo.positions();
        let dt = demo.dt();
        let tau = demo.duration();
        let span = demo.end().x - demo.start().x;
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 1..n - 1 {
            let v = (pos[k + 1].x - pos[k - 1].x) / (2.0 * dt);
            let a = (pos[k + 1].x - 2.0 * pos[k].x + pos[k - 1].x) / (dt * dt);
            let f = tau * tau * a + params.alpha * tau * v
                - params.alpha * params.beta * (demo.end().x - pos[k].x);
            let x = (-params.canonical_decay * (k as f64 * dt)).exp();
            let rec = x * span * params.shape(0, x);
            num += (f - rec).powi(2);
            den += f.powi(2);
        }
        assert!((num / den).sqrt() < 1e-3, "relative residual {}", (num / den).sqrt());
    }

    #[test]
    fn shifted_goal_is_reached() {
        let demo = min_jerk(Vec3::zeros(), Vec3::new(10.0, -5.0, -20.0), 561, RATE);
        let params = fit(&demo, 50, 25.0).unwrap();
        let goal = demo.end() + Vec3::new(10.0, 0.0, 0.0);
        let roll = rollout(&params, demo.start(), goal, demo.dt(), 2.0 * demo.duration()).unwrap();
        assert!((roll.end() - goal).norm() < 1e-2, "{:?}", roll.end());
    }

    #[test]
    fn halving_dt_barely_moves_endpoint() {
        let demo = min_jerk_1d(281);
        let params = fit(&demo, 50, 25.0).unwrap();
        let goal = Vec3::new(1.0, 0.0, 0.0);
        let t_end = 2.0 * demo.duration();
        let a = rollout(&params, Vec3::zeros(), goal, demo.dt(), t_end).unwrap();
        let b = rollout(&params, Vec3::zeros(), goal, demo.dt() / 2.0, t_end).unwrap();
        assert!((a.end() - b.end()).norm() < 1e-3);
    }

    // With zero weights the rollout is the critically damped step response,
    // which has the closed form (g + (y0-g)(1 + a t / 2tau) e^(-a t / 2tau)).
    #[test]
    fn zero_weights_match_analytic_step_response() {
        let demo = min_jerk_1d(281);
        let mut params = fit(&demo, 10, 25.0).unwrap();
        params.weights = [vec![0.0; 10], vec![0.0; 10], vec![0.0; 10]];
        let (y0, g) = (2.0, 12.0);
        let dt = 1.0 / (8.0 * RATE);
        let roll = rollout(
            &params,
            Vec3::new(y0, 0.0, 0.0),
            Vec3::new(g, 0.0, 0.0),
            dt,
            2.0,
        )
        .unwrap();
        let half_rate = params.alpha / (2.0 * params.duration);
        let mut max_err = 0.0f64;
        for (k, p) in roll.positions().iter().enumerate() {
            let t = k as f64 * dt;
            let analytic = g + (y0 - g) * (1.0 + half_rate * t) * (-half_rate * t).exp();
            max_err = max_err.max((p.x - analytic).abs());
        }
        assert!(max_err < 1e-3 * (g - y0).abs(), "max err {max_err}");
    }

    #[test]
    fn rollout_rejects_bad_inputs() {
        let demo = min_jerk_1d(281);
        let params = fit(&demo, 10, 25.0).unwrap();
        assert!(rollout(&params, Vec3::zeros(), Vec3::new(f64::NAN, 0.0, 0.0), 0.01, 1.0).is_err());
        assert!(rollout(&params, Vec3::zeros(), Vec3::zeros(), -0.01, 1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn goal_convergence(gx in -50.0f64..50.0, gy in -50.0f64..50.0, gz in -50.0f64..50.0) {
            let demo = min_jerk(Vec3::zeros(), Vec3::new(10.0, 10.0, -10.0), 281, RATE);
            let params = fit(&demo, 30, 25.0).unwrap();
            let goal = Vec3::new(gx, gy, gz);
            let roll = rollout(&params, Vec3::new(1.0, -2.0, 3.0), goal, demo.dt(), 3.0).unwrap();
            proptest::prop_assert!((roll.end() - goal).norm() < 1e-2);
        }

        #[test]
        fn rollout_is_deterministic(gx in -20.0f64..20.0) {
            let demo = min_jerk_1d(281);
            let params = fit(&demo, 25, 25.0).unwrap();
            let goal = Vec3::new(gx, 0.0, 0.0);
            let a = rollout(&params, Vec3::zeros(), goal, demo.dt(), 1.5).unwrap();
            let b = rollout(&params, Vec3::zeros(), goal, demo.dt(), 1.5).unwrap();
            proptest::prop_assert_eq!(a.positions(), b.positions());
        }
    }
}
