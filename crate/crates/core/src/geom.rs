//! 2D geometry primitives used by the simulator: vectors, disks, and ray
//! casts against circles and rectangle interiors.
//!
//! Units are millimetres for distances and degrees for angles throughout.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// A 2D vector / point in millimetres.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector along a heading in degrees, counterclockwise from +x.
    pub fn from_heading_deg(deg: f64) -> Self {
        let r = deg.to_radians();
        Self::new(r.cos(), r.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn length(self) -> f64 {
        self.length_squared().sqrt()
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).length()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Normalize an angle to `[0, 360)` degrees.
pub fn normalize_heading_deg(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Map an angle to the signed range `(-180, 180]` degrees.
pub fn normalize_bearing_deg(deg: f64) -> f64 {
    let b = deg.rem_euclid(360.0);
    if b > 180.0 {
        b - 360.0
    } else {
        b
    }
}

/// Smallest absolute separation between two angles, in `[0, 180]`.
pub fn angular_separation_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// A disk body: centre plus radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Vec2,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: Vec2, radius: f64) -> Self {
        Self { center, radius }
    }

    /// Strict overlap test (touching disks do not overlap).
    pub fn overlaps(&self, other: &Disk) -> bool {
        self.center.distance(other.center) < self.radius + other.radius
    }

    /// Strict interior test.
    pub fn contains(&self, p: Vec2) -> bool {
        self.center.distance(p) < self.radius
    }
}

/// Which arena wall a ray strikes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Wall {
    West,
    East,
    South,
    North,
}

/// First intersection distance of the ray `origin + t * dir` (`t >= 0`,
/// `dir` unit length) with the boundary of `disk`.
///
/// Returns 0 when the origin already touches or overlaps the disk while the
/// far intersection still lies ahead, so a sweep starting in contact reports
/// an immediate hit.
pub fn ray_disk_first_hit(origin: Vec2, dir: Vec2, disk: &Disk) -> Option<f64> {
    let oc = disk.center - origin;
    let proj = oc.dot(dir);
    let lat_sq = oc.length_squared() - proj * proj;
    let disc = disk.radius * disk.radius - lat_sq;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t_far = proj + sq;
    if t_far < 0.0 {
        return None;
    }
    Some((proj - sq).max(0.0))
}

/// Distance from an interior point to the boundary of the axis-aligned
/// rectangle `[0, w] x [0, h]` along `dir`, plus the wall that is struck.
pub fn ray_rect_exit(origin: Vec2, dir: Vec2, w: f64, h: f64) -> (f64, Wall) {
    let (tx, wall_x) = if dir.x > 0.0 {
        ((w - origin.x) / dir.x, Wall::East)
    } else if dir.x < 0.0 {
        (-origin.x / dir.x, Wall::West)
    } else {
        (f64::INFINITY, Wall::East)
    };
    let (ty, wall_y) = if dir.y > 0.0 {
        ((h - origin.y) / dir.y, Wall::North)
    } else if dir.y < 0.0 {
        (-origin.y / dir.y, Wall::South)
    } else {
        (f64::INFINITY, Wall::North)
    };
    if tx <= ty {
        (tx.max(0.0), wall_x)
    } else {
        (ty.max(0.0), wall_y)
    }
}

/// Shortest distance from `p` to the segment `a`-`b`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.length_squared();
    if len_sq == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Whether the segment `a`-`b` passes strictly inside the disk.
/// A tangent graze does not count as a hit.
pub fn segment_hits_disk(a: Vec2, b: Vec2, disk: &Disk) -> bool {
    point_segment_distance(disk.center, a, b) < disk.radius
}
