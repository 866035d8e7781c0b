//! Planar circle geometry for the peg-on-surface contact model.
//!
//! The peg bottom is a disk of radius `r_peg` centered at the peg axis; the
//! hole is a disk of radius `r_hole` at planar offset `d` from the axis.
//! The support region is the part of the peg bottom *not* lying over the
//! hole, i.e. the set the surface can push against. Its area and centroid
//! are computed in closed form from circular-segment decomposition of the
//! lens-shaped overlap.

use nalgebra::Vector2;

/// Area and centroid (relative to the peg axis) of the supported part of
/// the peg bottom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportRegion {
    /// Supported area in mm².
    pub area: f64,
    /// Centroid of the supported area, mm from the peg axis. Zero when the
    /// area is zero (peg fully over the hole) and when the disks are
    /// disjoint (full disk supported, centroid at the axis).
    pub centroid: Vector2<f64>,
}

/// First moment of a circular segment `{x >= a}` of a radius-`r` disk about
/// the disk center, together with its area. `theta` is the segment
/// half-angle, `cos(theta) = a / r`; the formulas hold for `a < 0` as well.
fn segment_area_moment(r: f64, cos_theta: f64) -> (f64, f64) {
    let c = cos_theta.clamp(-1.0, 1.0);
    let theta = c.acos();
    let s = theta.sin();
    let area = r * r * (theta - s * c);
    let moment = 2.0 / 3.0 * r.powi(3) * s.powi(3);
    (area, moment)
}

/// Lens overlap of two disks at center distance `dist`: returns the area
/// and the first moment of the lens about the center of disk 1, measured
/// along the axis from disk 1 toward disk 2.
fn lens_area_moment(dist: f64, r1: f64, r2: f64) -> (f64, f64) {
    if dist >= r1 + r2 {
        return (0.0, 0.0);
    }
    if dist <= (r2 - r1).abs() {
        // full containment of the smaller disk
        return if r1 <= r2 {
            (std::f64::consts::PI * r1 * r1, 0.0)
        } else {
            let a = std::f64::consts::PI * r2 * r2;
            (a, a * dist)
        };
    }
    let a1 = (dist * dist + r1 * r1 - r2 * r2) / (2.0 * dist);
    let a2 = dist - a1;
    let (area1, m1) = segment_area_moment(r1, a1 / r1);
    let (area2, m2) = segment_area_moment(r2, a2 / r2);
    // Disk 2's segment faces back toward disk 1; its moment about the
    // disk-1 center is area2 * dist - m2.
    (area1 + area2, m1 + area2 * dist - m2)
}

/// Support area and centroid for peg radius `r_peg`, hole radius `r_hole`,
/// and planar offset `d` (hole center minus peg center). Total over all
/// finite `d`.
pub fn support_region(r_peg: f64, r_hole: f64, d: Vector2<f64>) -> SupportRegion {
    let disk_area = std::f64::consts::PI * r_peg * r_peg;
    let dist = d.norm();
    let (lens_area, lens_moment) = lens_area_moment(dist, r_peg, r_hole);
    let area = disk_area - lens_area;
    // A crescent sliver narrower than ~0.1 µm cannot carry the peg; report
    // it as fully over the hole. This also keeps the containment boundary
    // well-posed against rounding in the segment formulas.
    if area <= 1e-8 * disk_area {
        return SupportRegion {
            area: 0.0,
            centroid: Vector2::zeros(),
        };
    }
    if dist == 0.0 || lens_area == 0.0 {
        return SupportRegion {
            area,
            centroid: Vector2::zeros(),
        };
    }
    // Peg disk has first moment zero about its own center, so the support
    // moment is the negated lens moment: the centroid sits along -d̂.
    let axis = d / dist;
    SupportRegion {
        area,
        centroid: axis * (-lens_moment / area),
    }
}

/// Area of the lens-shaped overlap between the peg bottom and the hole.
pub fn overlap_area(r_peg: f64, r_hole: f64, d: Vector2<f64>) -> f64 {
    lens_area_moment(d.norm(), r_peg, r_hole).0
}
