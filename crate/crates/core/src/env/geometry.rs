use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        Self::new(radius * angle.cos(), radius * angle.sin())
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    /// Counter-clockwise perpendicular.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    #[inline]
    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec2 {
        let l = self.length();
        if l > 0.0 {
            self * (1.0 / l)
        } else {
            Vec2::ZERO
        }
    }

    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
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

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
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

/// Signed area (positive for counter-clockwise winding).
pub fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| poly[i].cross(poly[(i + 1) % n]))
        .sum::<f64>()
        * 0.5
}

pub fn centroid(poly: &[Vec2]) -> Vec2 {
    let n = poly.len();
    let mut c = Vec2::ZERO;
    let mut a = 0.0;
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let w = p.cross(q);
        a += w;
        c += (p + q) * w;
    }
    c * (1.0 / (3.0 * a))
}

/// Second moment of area about the local origin, per unit density.
pub fn area_moment_about_origin(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    let mut sum = 0.0;
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let w = p.cross(q);
        sum += w * (p.dot(p) + p.dot(q) + q.dot(q));
    }
    sum / 12.0
}

/// Strictly convex, counter-clockwise, no repeated vertices.
pub fn is_convex_ccw(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    (0..n).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        (b - a).cross(c - b) > 1e-12
    })
}

/// Andrew's monotone chain; returns a counter-clockwise hull without
/// collinear points.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if (b - a).cross(p - b) <= 1e-15 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Closest point on a convex polygon's boundary and the signed distance
/// (negative inside). Also returns the outward normal at the closest
/// feature, pointing from the polygon towards `p`.
pub fn polygon_distance(poly: &[Vec2], p: Vec2) -> (f64, Vec2, Vec2) {
    let n = poly.len();
    // Deepest face for the inside case.
    let mut best_face = f64::NEG_INFINITY;
    let mut best_face_idx = 0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let normal = (b - a).perp().normalized() * -1.0;
        let d = (p - a).dot(normal);
        if d > best_face {
            best_face = d;
            best_face_idx = i;
        }
    }
    if best_face <= 0.0 {
        let a = poly[best_face_idx];
        let b = poly[(best_face_idx + 1) % n];
        let normal = -(b - a).perp().normalized();
        return (best_face, p - normal * best_face, normal);
    }
    let mut best = (f64::INFINITY, Vec2::ZERO);
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let ab = b - a;
        let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
        let q = a + ab * t;
        let d = (p - q).length();
        if d < best.0 {
            best = (d, q);
        }
    }
    let normal = (p - best.1).normalized();
    (best.0, best.1, normal)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(h: f64) -> Vec<Vec2> {
        vec![
            Vec2::new(-h, -h),
            Vec2::new(h, -h),
            Vec2::new(h, h),
            Vec2::new(-h, h),
        ]
    }

    #[test]
    fn square_area_centroid_moment() {
        let s = square(0.5);
        assert!((signed_area(&s) - 1.0).abs() < 1e-15);
        assert!(centroid(&s).length() < 1e-15);
        // Unit square about its centre: (a^2 + b^2) / 12.
        assert!((area_moment_about_origin(&s) - 2.0 / 12.0).abs() < 1e-15);
        assert!(is_convex_ccw(&s));
        let mut cw = s.clone();
        cw.reverse();
        assert!(!is_convex_ccw(&cw));
    }

    #[test]
    fn hull_drops_interior_points() {
        let mut pts = square(1.0);
        pts.push(Vec2::new(0.1, 0.2));
        pts.push(Vec2::new(1.0, 0.0));
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!(is_convex_ccw(&h));
    }

    #[test]
    fn distance_outside_and_inside() {
        let s = square(1.0);
        let (d, q, n) = polygon_distance(&s, Vec2::new(3.0, 0.5));
        assert!((d - 2.0).abs() < 1e-15);
        assert_eq!(q, Vec2::new(1.0, 0.5));
        assert_eq!(n, Vec2::new(1.0, 0.0));
        let (d, q, n) = polygon_distance(&s, Vec2::new(0.0, 0.75));
        assert!((d + 0.25).abs() < 1e-15);
        assert!((q - Vec2::new(0.0, 1.0)).length() < 1e-15);
        assert!((n - Vec2::new(0.0, 1.0)).length() < 1e-15);
    }
}
