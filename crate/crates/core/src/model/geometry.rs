use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{HarvestError, Result};

/// A point or vector in the plane. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Linear proximity `max(0, 1 - ||w - v|| / r)`.
pub fn proximity(w: Vec2, v: Vec2, range: f64) -> Result<f64> {
    if !(range > 0.0) || !range.is_finite() {
        return Err(HarvestError::param(
            "range",
            format!("must be positive, got {range}"),
        ));
    }
    Ok(proximity_at(w.distance(v), range))
}

#[inline]
pub(crate) fn proximity_at(distance: f64, range: f64) -> f64 {
    (1.0 - distance / range).max(0.0)
}

/// Distance beyond the range boundary, zero when inside.
#[inline]
pub fn excess_distance(distance: f64, range: f64) -> f64 {
    (distance - range).max(0.0)
}

/// Idling metric `ln(1 + d_B * prod_i d_i)` built from excess distances.
pub fn idling_from_excess(base_excess: f64, target_excess: &[f64]) -> f64 {
    let prod: f64 = target_excess.iter().product();
    (base_excess * prod).ln_1p()
}

/// Unit vector from `from` towards `p`, or zero when they coincide.
pub(crate) fn unit_from(p: Vec2, from: Vec2) -> (Vec2, f64) {
    let diff = p - from;
    let d = diff.norm();
    if d > 0.0 {
        (diff * (1.0 / d), d)
    } else {
        (Vec2::ZERO, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proximity_halfway() {
        let p = proximity(Vec2::new(0.5, 0.0), Vec2::ZERO, 1.0).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn proximity_outside_is_zero() {
        let p = proximity(Vec2::new(3.0, 0.0), Vec2::ZERO, 1.0).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn proximity_rejects_nonpositive_range() {
        assert!(proximity(Vec2::ZERO, Vec2::ZERO, 0.0).is_err());
        assert!(proximity(Vec2::ZERO, Vec2::ZERO, -1.0).is_err());
    }

    #[test]
    fn idling_zero_inside_any_range() {
        assert_eq!(idling_from_excess(0.0, &[2.0, 3.0]), 0.0);
        assert_eq!(idling_from_excess(1.0, &[2.0, 0.0]), 0.0);
        let v = idling_from_excess(1.0, &[2.0, 3.0]);
        assert!((v - 7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn vec2_serializes_as_pair() {
        let s = serde_json::to_string(&Vec2::new(1.5, -2.0)).unwrap();
        assert_eq!(s, "[1.5,-2.0]");
        let v: Vec2 = serde_json::from_str("[3,4]").unwrap();
        assert_eq!(v.norm(), 5.0);
    }
}
