//! Planar geometry shared by the simulator, the renderer and the annotators.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

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

    pub fn from_angle(angle: f64) -> Self {
        Self::new(angle.cos(), angle.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n == 0.0 {
            Vec2::ZERO
        } else {
            self * (1.0 / n)
        }
    }

    /// Left-hand normal.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
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

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Expresses a world point in a frame located at `origin` with yaw `heading`
/// (x forward, y left).
pub fn to_local(p: Vec2, origin: Vec2, heading: f64) -> Vec2 {
    (p - origin).rotate(-heading)
}

pub fn to_world(p: Vec2, origin: Vec2, heading: f64) -> Vec2 {
    p.rotate(heading) + origin
}

/// Closed-segment intersection test.
pub fn segments_intersect(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> bool {
    let d1 = (a1 - a0).cross(b0 - a0);
    let d2 = (a1 - a0).cross(b1 - a0);
    let d3 = (b1 - b0).cross(a0 - b0);
    let d4 = (b1 - b0).cross(a1 - b0);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on_seg = |p: Vec2, q: Vec2, r: Vec2| {
        r.x >= p.x.min(q.x) - 1e-12
            && r.x <= p.x.max(q.x) + 1e-12
            && r.y >= p.y.min(q.y) - 1e-12
            && r.y <= p.y.max(q.y) + 1e-12
    };
    (d1 == 0.0 && on_seg(a0, a1, b0))
        || (d2 == 0.0 && on_seg(a0, a1, b1))
        || (d3 == 0.0 && on_seg(b0, b1, a0))
        || (d4 == 0.0 && on_seg(b0, b1, a1))
}

/// Parameter `t` along the ray `origin + t * dir` where it meets segment
/// `b0..b1`, if it does.
pub fn ray_segment(origin: Vec2, dir: Vec2, b0: Vec2, b1: Vec2) -> Option<f64> {
    let e = b1 - b0;
    let denom = dir.cross(e);
    if denom.abs() < 1e-12 {
        return None;
    }
    let w = b0 - origin;
    let t = w.cross(e) / denom;
    let u = w.cross(dir) / denom;
    if t >= 0.0 && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Oriented bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl Obb {
    pub fn new(center: Vec2, heading: f64, half_length: f64, half_width: f64) -> Self {
        Self { center, heading, half_length, half_width }
    }

    pub fn axes(&self) -> (Vec2, Vec2) {
        let f = Vec2::from_angle(self.heading);
        (f, f.perp())
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let (f, l) = self.axes();
        let a = f * self.half_length;
        let b = l * self.half_width;
        let c = self.center;
        [c + a + b, c + a - b, c - a - b, c - a + b]
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let q = to_local(p, self.center, self.heading);
        q.x.abs() <= self.half_length && q.y.abs() <= self.half_width
    }

    /// Separating-axis overlap test.
    pub fn overlaps(&self, other: &Obb) -> bool {
        let (a0, a1) = self.axes();
        let (b0, b1) = other.axes();
        let d = other.center - self.center;
        for axis in [a0, a1, b0, b1] {
            let ra = self.half_length * a0.dot(axis).abs() + self.half_width * a1.dot(axis).abs();
            let rb = other.half_length * b0.dot(axis).abs() + other.half_width * b1.dot(axis).abs();
            if d.dot(axis).abs() > ra + rb {
                return false;
            }
        }
        true
    }

    /// True when the closed segment `p0..p1` touches the box.
    pub fn intersects_segment(&self, p0: Vec2, p1: Vec2) -> bool {
        let a = to_local(p0, self.center, self.heading);
        let b = to_local(p1, self.center, self.heading);
        let d = b - a;
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for (start, delta, ext) in [(a.x, d.x, self.half_length), (a.y, d.y, self.half_width)] {
            if delta.abs() < 1e-15 {
                if start.abs() > ext {
                    return false;
                }
            } else {
                let mut ta = (-ext - start) / delta;
                let mut tb = (ext - start) / delta;
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }

    /// Shortest distance between the box boundary/interior and a point.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        let q = to_local(p, self.center, self.heading);
        let dx = (q.x.abs() - self.half_length).max(0.0);
        let dy = (q.y.abs() - self.half_width).max(0.0);
        dx.hypot(dy)
    }
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point.
    pub s: f64,
    /// Signed offset, positive to the left of the direction of travel.
    pub lateral: f64,
    pub distance: f64,
    pub point: Vec2,
}

/// Piecewise-linear curve with cached arc lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct Polyline {
    points: Vec<Vec2>,
    cum: Vec<f64>,
}

impl TryFrom<Vec<Vec2>> for Polyline {
    type Error = String;
    fn try_from(points: Vec<Vec2>) -> Result<Self, Self::Error> {
        Polyline::new(points).ok_or_else(|| "polyline needs at least two distinct points".into())
    }
}

impl From<Polyline> for Vec<Vec2> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

impl Polyline {
    /// Returns `None` for fewer than two points or zero length.
    pub fn new(points: Vec<Vec2>) -> Option<Self> {
        if points.len() < 2 {
            return None;
        }
        let mut cum = Vec::with_capacity(points.len());
        cum.push(0.0);
        for w in points.windows(2) {
            let last = *cum.last().unwrap();
            cum.push(last + w[0].distance(w[1]));
        }
        if *cum.last().unwrap() <= 0.0 {
            return None;
        }
        Some(Self { points, cum })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn start(&self) -> Vec2 {
        self.points[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.points.last().unwrap()
    }

    fn segment_at(&self, s: f64) -> usize {
        let s = s.clamp(0.0, self.length());
        match self.cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => (i - 1).min(self.points.len() - 2),
        }
    }

    /// Point at arc length `s`, clamped to the curve.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let i = self.segment_at(s);
        let seg = self.cum[i + 1] - self.cum[i];
        let t = if seg > 0.0 { ((s.clamp(0.0, self.length()) - self.cum[i]) / seg).clamp(0.0, 1.0) } else { 0.0 };
        self.points[i].lerp(self.points[i + 1], t)
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let mut i = self.segment_at(s);
        // skip degenerate segments
        while i + 1 < self.points.len() - 1 && self.points[i].distance(self.points[i + 1]) == 0.0 {
            i += 1;
        }
        (self.points[i + 1] - self.points[i]).angle()
    }

    pub fn project(&self, p: Vec2) -> Projection {
        self.project_window(p, 0.0, self.length())
    }

    /// Projection restricted to segments overlapping `[s_lo, s_hi]`.
    pub fn project_window(&self, p: Vec2, s_lo: f64, s_hi: f64) -> Projection {
        let mut best: Option<Projection> = None;
        for i in 0..self.points.len() - 1 {
            if self.cum[i + 1] < s_lo || self.cum[i] > s_hi {
                continue;
            }
            let a = self.points[i];
            let b = self.points[i + 1];
            let ab = b - a;
            let len2 = ab.dot(ab);
            if len2 == 0.0 {
                continue;
            }
            let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
            let foot = a + ab * t;
            let dist = p.distance(foot);
            if best.is_none_or(|b| dist < b.distance) {
                let side = ab.cross(p - a);
                let lateral = if side >= 0.0 { dist } else { -dist };
                best = Some(Projection { s: self.cum[i] + t * len2.sqrt(), lateral, distance: dist, point: foot });
            }
        }
        best.unwrap_or_else(|| {
            let s = s_lo.clamp(0.0, self.length());
            let q = self.point_at(s);
            Projection { s, lateral: 0.0, distance: p.distance(q), point: q }
        })
    }

    pub fn distance(&self, p: Vec2) -> f64 {
        self.project(p).distance
    }

    /// Unsigned curvature estimate at arc length `s` from headings `ds` apart.
    pub fn curvature_at(&self, s: f64, ds: f64) -> f64 {
        let h0 = self.heading_at((s - ds).max(0.0));
        let h1 = self.heading_at((s + ds).min(self.length()));
        let span = (s + ds).min(self.length()) - (s - ds).max(0.0);
        if span <= 0.0 {
            0.0
        } else {
            wrap_angle(h1 - h0).abs() / span
        }
    }

    /// Offsets every vertex by `offset` to the left.
    pub fn offset(&self, offset: f64) -> Polyline {
        let n = self.points.len();
        let pts = (0..n)
            .map(|i| {
                let dir = if i == 0 {
                    self.points[1] - self.points[0]
                } else if i == n - 1 {
                    self.points[n - 1] - self.points[n - 2]
                } else {
                    (self.points[i + 1] - self.points[i - 1]).normalized()
                };
                self.points[i] + dir.normalized().perp() * offset
            })
            .collect();
        Polyline::new(pts).expect("offset of valid polyline")
    }

    pub fn reversed(&self) -> Polyline {
        let mut pts = self.points.clone();
        pts.reverse();
        Polyline::new(pts).expect("reverse of valid polyline")
    }
}

/// Samples an arc of radius `radius` around `center`, from `a0` to `a1` radians.
pub fn arc_points(center: Vec2, radius: f64, a0: f64, a1: f64, n: usize) -> Vec<Vec2> {
    (0..=n)
        .map(|i| {
            let a = a0 + (a1 - a0) * i as f64 / n as f64;
            center + Vec2::from_angle(a) * radius
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
        assert!((wrap_angle(2.0 * PI + 0.1) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn projection_on_straight_line() {
        let p = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)]).unwrap();
        let pr = p.project(Vec2::new(50.0, 2.0));
        assert!((pr.s - 50.0).abs() < 1e-12);
        assert!((pr.lateral - 2.0).abs() < 1e-12);
        let pr = p.project(Vec2::new(20.0, -1.0));
        assert!((pr.lateral + 1.0).abs() < 1e-12);
        assert_eq!(p.point_at(150.0), Vec2::new(100.0, 0.0));
    }

    #[test]
    fn obb_overlap_and_separation() {
        let a = Obb::new(Vec2::ZERO, 0.0, 2.0, 1.0);
        let b = Obb::new(Vec2::new(4.1, 0.0), 0.0, 2.0, 1.0);
        assert!(!a.overlaps(&b));
        let c = Obb::new(Vec2::new(3.9, 0.0), 0.3, 2.0, 1.0);
        assert!(a.overlaps(&c));
        assert!(a.intersects_segment(Vec2::new(-5.0, 0.0), Vec2::new(5.0, 0.5)));
        assert!(!a.intersects_segment(Vec2::new(-5.0, 2.0), Vec2::new(5.0, 2.0)));
    }

    #[test]
    fn segments() {
        assert!(segments_intersect(
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(1.0, -1.0),
            Vec2::new(1.0, 1.0)
        ));
        assert!(!segments_intersect(
            Vec2::new(0.0, 0.0),
            Vec2::new(0.5, 0.0),
            Vec2::new(1.0, -1.0),
            Vec2::new(1.0, 1.0)
        ));
        let t = ray_segment(Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(3.0, -1.0), Vec2::new(3.0, 1.0));
        assert_eq!(t, Some(3.0));
    }
}
