//! Planar geometry helpers shared across the crate.
//!
//! Headings are compass-style: radians in `[0, 2π)`, with heading `h`
//! pointing along the unit vector `(sin h, cos h)`. Heading 0 is +y,
//! π/2 is +x. Counter-clockwise rotations therefore *decrease* the
//! heading; signed turn deltas below are reported counter-clockwise
//! positive, which is the convention the turn classifier expects.

use std::f64::consts::{PI, TAU};

/// A 2-D point or displacement.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

/// Normalize a heading into `[0, 2π)`.
pub fn normalize_heading(h: f64) -> f64 {
    let mut r = h % TAU;
    if r < 0.0 {
        r += TAU;
    }
    // `-1e-300 % TAU` rounds to TAU itself; fold it back.
    if r >= TAU {
        r = 0.0;
    }
    r
}

/// Unit direction vector of a heading.
pub fn heading_dir(h: f64) -> Vec2 {
    Vec2::new(h.sin(), h.cos())
}

/// Compass heading of the bearing from `from` to `to`.
///
/// Inverse of [`heading_dir`]: `bearing(a, b)` points along `b - a`.
pub fn bearing(from: Vec2, to: Vec2) -> f64 {
    let d = to - from;
    normalize_heading(d.x.atan2(d.y))
}

/// Signed turn from `arrival` to `departure`, counter-clockwise positive,
/// in `(-π, π]`. An exact reversal maps to +π. Compass headings decrease
/// counter-clockwise, so the delta is the normalized arrival-minus-
/// departure difference.
pub fn turn_delta(arrival: f64, departure: f64) -> f64 {
    let diff = normalize_heading(arrival - departure);
    if diff > PI {
        diff - TAU
    } else {
        diff
    }
}

/// Whether two headings agree within `tol` radians (circularly).
pub fn headings_close(a: f64, b: f64, tol: f64) -> bool {
    let diff = normalize_heading(a - b);
    diff <= tol || diff >= TAU - tol
}
