//! Average certified radius and certified-accuracy curves.
//!
//! Certified accuracy at size `r` is the fraction of all test inputs that are
//! correctly classified, not abstained, not failed, and have an input radius
//! of at least `r`. Its integral over `r ≥ 0` equals the average certified
//! radius with incorrect inputs counted as zero.

use serde::{Deserialize, Serialize};

use crate::certificate::RadiusCertificate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub radius: f64,
    pub certified_accuracy: f64,
}

fn sorted_radii(certs: &[RadiusCertificate]) -> Vec<f64> {
    let mut r: Vec<f64> = certs.iter().filter_map(RadiusCertificate::certified_radius).collect();
    r.sort_by(f64::total_cmp);
    r
}

/// Sum of certified radii of correct inputs over the number of inputs.
pub fn average_certified_radius(certs: &[RadiusCertificate]) -> f64 {
    if certs.is_empty() {
        return 0.0;
    }
    sorted_radii(certs).iter().sum::<f64>() / certs.len() as f64
}

/// Mean radius among the correct inputs only.
pub fn mean_radius_of_correct(certs: &[RadiusCertificate]) -> f64 {
    let r = sorted_radii(certs);
    if r.is_empty() {
        0.0
    } else {
        r.iter().sum::<f64>() / r.len() as f64
    }
}

pub fn certified_accuracy(certs: &[RadiusCertificate], r: f64) -> f64 {
    if certs.is_empty() {
        return 0.0;
    }
    let radii = sorted_radii(certs);
    let below = radii.partition_point(|&x| x < r);
    (radii.len() - below) as f64 / certs.len() as f64
}

/// Curve on `grid_points` evenly spaced sizes from 0 to the largest radius,
/// plus each radius and the next float above it so the steps are exact.
pub fn certified_accuracy_curve(certs: &[RadiusCertificate], grid_points: usize) -> Vec<CurvePoint> {
    let radii = sorted_radii(certs);
    let max = radii.last().copied().unwrap_or(0.0);
    let mut sizes = vec![0.0];
    if max > 0.0 && grid_points >= 2 {
        let step = max / (grid_points - 1) as f64;
        sizes.extend((1..grid_points).map(|i| i as f64 * step));
    }
    for &r in radii.iter().filter(|&&r| r > 0.0) {
        sizes.push(r);
        sizes.push(r.next_up());
    }
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    let n = certs.len().max(1) as f64;
    sizes
        .into_iter()
        .map(|radius| {
            let below = radii.partition_point(|&x| x < radius);
            CurvePoint { radius, certified_accuracy: (radii.len() - below) as f64 / n }
        })
        .collect()
}

/// Trapezoid-rule area under a curve.
pub fn trapezoid_area(curve: &[CurvePoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| 0.5 * (w[0].certified_accuracy + w[1].certified_accuracy) * (w[1].radius - w[0].radius))
        .sum()
}
