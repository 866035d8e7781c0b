//! Shared domain types.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Cartesian position or increment in millimetres.
pub type Vec3 = Vector3<f64>;

/// Contact wrench at the peg-axis sensor frame: forces in newtons, moments
/// in newton-millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
}

impl Wrench {
    pub const ZERO: Wrench = Wrench {
        fx: 0.0,
        fy: 0.0,
        fz: 0.0,
        mx: 0.0,
        my: 0.0,
        mz: 0.0,
    };

    pub fn new(fx: f64, fy: f64, fz: f64, mx: f64, my: f64, mz: f64) -> Self {
        Self {
            fx,
            fy,
            fz,
            mx,
            my,
            mz,
        }
    }

    /// Force part as a vector, the input to the accommodation update.
    pub fn force(&self) -> Vec3 {
        Vector3::new(self.fx, self.fy, self.fz)
    }

    /// All six channels in sensor order `[fx, fy, fz, mx, my, mz]`.
    pub fn channels(&self) -> [f64; 6] {
        [self.fx, self.fy, self.fz, self.mx, self.my, self.mz]
    }

    pub fn from_channels(c: [f64; 6]) -> Self {
        Self::new(c[0], c[1], c[2], c[3], c[4], c[5])
    }

    pub fn is_finite(&self) -> bool {
        self.channels().iter().all(|v| v.is_finite())
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        let a = self.channels();
        let b = rhs.channels();
        Wrench::from_channels([
            a[0] + b[0],
            a[1] + b[1],
            a[2] + b[2],
            a[3] + b[3],
            a[4] + b[4],
            a[5] + b[5],
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_order_is_sensor_order() {
        let w = Wrench::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        assert_eq!(w.channels(), [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(w.force(), Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn non_finite_detected() {
        let mut w = Wrench::ZERO;
        assert!(w.is_finite());
        w.my = f64::NAN;
        assert!(!w.is_finite());
    }
}
