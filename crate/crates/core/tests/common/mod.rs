#![allow(dead_code)]

use lumen3d_core::lightcal::angle_deg;
use lumen3d_core::{NormalField, Vector3};

/// Mean and max angle in degrees between matching valid normals.
pub fn angular_error(a: &NormalField, b: &NormalField) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    let mut n = 0;
    for i in 0..a.normals().len() {
        if let (Some(x), Some(y)) = (a.at(i), b.at(i)) {
            let e = angle_deg(&x, &y);
            sum += e;
            max = max.max(e);
            n += 1;
        }
    }
    assert!(n > 0, "no overlapping valid normals");
    (sum / n as f64, max)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn unit(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x, y, z).normalize()
}
