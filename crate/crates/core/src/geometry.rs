//! Computational domains: intervals, simple polygons and disks.
//!
//! Every query here is exact up to floating point (the disk is never
//! polygonalized). Points closer than [`BOUNDARY_TOLERANCE`] to the boundary
//! are classified as boundary points.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance below which a point counts as lying on the boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// A point in the plane. One-dimensional domains only use `x`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub const fn on_line(x: f64) -> Self {
        Point { x, y: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    pub fn add(&self, other: &Point) -> Point {
        Point::new(self.x + other.x, self.y + other.y)
    }

    pub fn scale(&self, t: f64) -> Point {
        Point::new(self.x * t, self.y * t)
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(&self, other: &Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn midpoint(&self, other: &Point) -> Point {
        Point::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

/// Where a point sits relative to a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Interior,
    Boundary,
    Exterior,
}

/// Boundary distance together with the out-of-domain flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryDistance {
    /// Distance to the boundary, clamped to zero outside the closure.
    pub distance: f64,
    pub outside: bool,
}

/// A bounded domain of dimension one or two.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Interval {
        a: f64,
        b: f64,
    },
    /// Counterclockwise vertex list of a simple polygon.
    Polygon {
        vertices: Vec<Point>,
    },
    Disk {
        center: Point,
        radius: f64,
    },
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidDomain(format!(
                "interval needs finite a < b, got ({a}, {b})"
            )));
        }
        Ok(Domain::Interval { a, b })
    }

    pub fn disk(center: Point, radius: f64) -> Result<Self> {
        if !center.is_finite() || !radius.is_finite() || radius <= 0.0 {
            return Err(Error::InvalidDomain(format!(
                "disk needs a finite center and R > 0, got R = {radius}"
            )));
        }
        Ok(Domain::Disk { center, radius })
    }

    /// Builds a polygon, normalizing the orientation to counterclockwise.
    pub fn polygon(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidDomain(
                "polygon needs at least three vertices".into(),
            ));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDomain("polygon vertex is not finite".into()));
        }
        // A repeated closing vertex is tolerated.
        if vertices.len() > 3 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        let area = signed_area(&vertices);
        let scale = bounding_extent(&vertices);
        if area.abs() <= 1e-14 * scale * scale {
            return Err(Error::InvalidDomain(
                "polygon is degenerate (zero area)".into(),
            ));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            let j = (i + 1) % n;
            if vertices[i].dist(&vertices[j]) == 0.0 {
                return Err(Error::InvalidDomain("polygon has a repeated vertex".into()));
            }
        }
        if !is_simple(&vertices) {
            return Err(Error::InvalidDomain("polygon is self-intersecting".into()));
        }
        Ok(Domain::Polygon { vertices })
    }

    /// Axis-aligned square `[x0, x0 + side] x [y0, y0 + side]`.
    pub fn square(x0: f64, y0: f64, side: f64) -> Result<Self> {
        Domain::polygon(vec![
            Point::new(x0, y0),
            Point::new(x0 + side, y0),
            Point::new(x0 + side, y0 + side),
            Point::new(x0, y0 + side),
        ])
    }

    pub fn unit_square() -> Self {
        Domain::square(0.0, 0.0, 1.0).expect("unit square is valid")
    }

    pub fn unit_disk() -> Self {
        Domain::disk(Point::new(0.0, 0.0), 1.0).expect("unit disk is valid")
    }

    pub fn dimension(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Length for intervals, area for planar domains.
    pub fn measure(&self) -> f64 {
        match self {
            Domain::Interval { a, b } => b - a,
            Domain::Polygon { vertices } => signed_area(vertices),
            Domain::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
        }
    }

    pub fn is_convex(&self) -> bool {
        match self {
            Domain::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|i| {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let c = vertices[(i + 2) % n];
                    b.sub(&a).cross(&c.sub(&b)) >= 0.0
                })
            }
            _ => true,
        }
    }

    /// Unclamped distance to the boundary curve, ignoring inside/outside.
    fn raw_boundary_distance(&self, p: &Point) -> f64 {
        match self {
            Domain::Interval { a, b } => (p.x - a).abs().min((b - p.x).abs()),
            Domain::Polygon { vertices } => {
                let n = vertices.len();
                (0..n)
                    .map(|i| point_segment_distance(p, &vertices[i], &vertices[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            }
            Domain::Disk { center, radius } => (p.dist(center) - radius).abs(),
        }
    }

    fn strictly_inside_raw(&self, p: &Point) -> bool {
        match self {
            Domain::Interval { a, b } => p.x > *a && p.x < *b,
            Domain::Polygon { vertices } => winding_contains(vertices, p),
            Domain::Disk { center, radius } => p.dist(center) < *radius,
        }
    }

    pub fn locate(&self, p: &Point) -> Location {
        if !p.is_finite() {
            return Location::Exterior;
        }
        if self.raw_boundary_distance(p) <= BOUNDARY_TOLERANCE {
            Location::Boundary
        } else if self.strictly_inside_raw(p) {
            Location::Interior
        } else {
            Location::Exterior
        }
    }

    /// Strict interior membership; boundary points return `false`.
    pub fn contains(&self, p: &Point) -> bool {
        self.locate(p) == Location::Interior
    }

    pub fn boundary_distance(&self, p: &Point) -> BoundaryDistance {
        match self.locate(p) {
            Location::Interior => BoundaryDistance {
                distance: self.raw_boundary_distance(p),
                outside: false,
            },
            Location::Boundary => BoundaryDistance {
                distance: 0.0,
                outside: false,
            },
            Location::Exterior => BoundaryDistance {
                distance: 0.0,
                outside: true,
            },
        }
    }

    /// Distance to the boundary, zero on the boundary and outside.
    pub fn distance_to_boundary(&self, p: &Point) -> f64 {
        self.boundary_distance(p).distance
    }

    /// `max |y - x|` over boundary points `y`.
    pub fn farthest_boundary_distance(&self, p: &Point) -> f64 {
        match self {
            Domain::Interval { a, b } => (p.x - a).abs().max((b - p.x).abs()),
            Domain::Polygon { vertices } => vertices.iter().map(|v| v.dist(p)).fold(0.0, f64::max),
            Domain::Disk { center, radius } => p.dist(center) + radius,
        }
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        match self {
            Domain::Interval { a, b } => (Point::on_line(*a), Point::on_line(*b)),
            Domain::Polygon { vertices } => {
                let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for v in vertices {
                    lo.x = lo.x.min(v.x);
                    lo.y = lo.y.min(v.y);
                    hi.x = hi.x.max(v.x);
                    hi.y = hi.y.max(v.y);
                }
                (lo, hi)
            }
            Domain::Disk { center, radius } => (
                Point::new(center.x - radius, center.y - radius),
                Point::new(center.x + radius, center.y + radius),
            ),
        }
    }

    /// First parameter `t` in `(0, 1]` at which the segment `from -> to` meets
    /// the boundary, or `None` when the whole segment stays interior.
    pub fn first_boundary_crossing(&self, from: &Point, to: &Point) -> Option<f64> {
        let dir = to.sub(from);
        match self {
            Domain::Interval { a, b } => {
                let mut best: Option<f64> = None;
                for &end in &[*a, *b] {
                    if dir.x != 0.0 {
                        let t = (end - from.x) / dir.x;
                        if t > 0.0 && t <= 1.0 {
                            best = Some(best.map_or(t, |bt: f64| bt.min(t)));
                        }
                    }
                }
                best
            }
            Domain::Polygon { vertices } => {
                let n = vertices.len();
                let mut best: Option<f64> = None;
                for i in 0..n {
                    let p0 = vertices[i];
                    let e = vertices[(i + 1) % n].sub(&p0);
                    let denom = dir.cross(&e);
                    if denom == 0.0 {
                        continue;
                    }
                    let w = p0.sub(from);
                    let t = w.cross(&e) / denom;
                    let s = w.cross(&dir) / denom;
                    if t > 0.0 && t <= 1.0 && (-1e-14..=1.0 + 1e-14).contains(&s) {
                        best = Some(best.map_or(t, |bt: f64| bt.min(t)));
                    }
                }
                best
            }
            Domain::Disk { center, radius } => {
                let w = from.sub(center);
                let qa = dir.dot(&dir);
                if qa == 0.0 {
                    return None;
                }
                let qb = 2.0 * w.dot(&dir);
                let qc = w.dot(&w) - radius * radius;
                let disc = qb * qb - 4.0 * qa * qc;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = (-qb + sq) / (2.0 * qa);
                if t > 0.0 && t <= 1.0 {
                    Some(t)
                } else {
                    None
                }
            }
        }
    }

    /// Centroid of the domain (area-weighted for polygons).
    pub fn centroid(&self) -> Point {
        match self {
            Domain::Interval { a, b } => Point::on_line(0.5 * (a + b)),
            Domain::Disk { center, .. } => *center,
            Domain::Polygon { vertices } => {
                let n = vertices.len();
                let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let p = vertices[i];
                    let q = vertices[(i + 1) % n];
                    let c = p.cross(&q);
                    a2 += c;
                    cx += (p.x + q.x) * c;
                    cy += (p.y + q.y) * c;
                }
                Point::new(cx / (3.0 * a2), cy / (3.0 * a2))
            }
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Interval { a, b } => write!(f, "interval:{a},{b}"),
            Domain::Polygon { vertices } => {
                write!(f, "polygon:")?;
                for (i, v) in vertices.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{},{}", v.x, v.y)?;
                }
                Ok(())
            }
            Domain::Disk { center, radius } => {
                write!(f, "disk:{},{},{}", center.x, center.y, radius)
            }
        }
    }
}

fn parse_numbers(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number {t:?} in {what}")))
        })
        .collect()
}

impl FromStr for Domain {
    type Err = Error;

    /// `interval:a,b` | `polygon:x1,y1;x2,y2;...` | `disk:cx,cy,R`
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("domain spec {s:?} lacks a kind prefix")))?;
        match kind.trim() {
            "interval" => {
                let v = parse_numbers(rest, "interval")?;
                if v.len() != 2 {
                    return Err(Error::Config("interval takes exactly a,b".into()));
                }
                Domain::interval(v[0], v[1])
            }
            "disk" => {
                let v = parse_numbers(rest, "disk")?;
                if v.len() != 3 {
                    return Err(Error::Config("disk takes exactly cx,cy,R".into()));
                }
                Domain::disk(Point::new(v[0], v[1]), v[2])
            }
            "polygon" => {
                let pts = rest
                    .split(';')
                    .filter(|t| !t.trim().is_empty())
                    .map(|pair| {
                        let v = parse_numbers(pair, "polygon")?;
                        if v.len() != 2 {
                            return Err(Error::Config(format!(
                                "polygon vertex {pair:?} needs two coordinates"
                            )));
                        }
                        Ok(Point::new(v[0], v[1]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Domain::polygon(pts)
            }
            other => Err(Error::Config(format!("unknown domain kind {other:?}"))),
        }
    }
}

pub(crate) fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    0.5 * (0..n)
        .map(|i| vertices[i].cross(&vertices[(i + 1) % n]))
        .sum::<f64>()
}

fn bounding_extent(vertices: &[Point]) -> f64 {
    let mut ext: f64 = 0.0;
    for a in vertices {
        for b in vertices {
            ext = ext.max(a.dist(b));
        }
    }
    ext
}

pub(crate) fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(&ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(&ab) / len2).clamp(0.0, 1.0);
    p.dist(&a.add(&ab.scale(t)))
}

/// Nonzero winding number test.
pub(crate) fn winding_contains(vertices: &[Point], p: &Point) -> bool {
    let n = vertices.len();
    let mut winding = 0i32;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let side = b.sub(&a).cross(&p.sub(&a));
        if a.y <= p.y {
            if b.y > p.y && side > 0.0 {
                winding += 1;
            }
        } else if b.y <= p.y && side < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

fn orient(a: &Point, b: &Point, c: &Point) -> f64 {
    b.sub(a).cross(&c.sub(a))
}

fn on_segment(a: &Point, b: &Point, p: &Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(a: &Point, b: &Point, c: &Point, d: &Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

fn is_simple(vertices: &[Point]) -> bool {
    let n = vertices.len();
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Adjacent edges may only share their common vertex: reject folds.
                let (shared, p, q) = if j == i + 1 {
                    (b, a, vertices[(j + 1) % n])
                } else {
                    (a, b, vertices[j])
                };
                if orient(&shared, &p, &q) == 0.0 && p.sub(&shared).dot(&q.sub(&shared)) > 0.0 {
                    return false;
                }
                continue;
            }
            let c = vertices[j];
            let d = vertices[(j + 1) % n];
            if segments_intersect(&a, &b, &c, &d) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn l_shape() -> Domain {
        "polygon:0,0;2,0;2,1;1,1;1,2;0,2".parse().unwrap()
    }

    #[test]
    fn interval_distances() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        assert_eq!(d.distance_to_boundary(&Point::on_line(0.5)), 0.5);
        assert_eq!(d.distance_to_boundary(&Point::on_line(0.25)), 0.25);
        assert!(!d.contains(&Point::on_line(0.0)));
        let outside = d.boundary_distance(&Point::on_line(1.5));
        assert_eq!(outside.distance, 0.0);
        assert!(outside.outside);
    }

    #[test]
    fn disk_distance_is_analytic() {
        let d = Domain::unit_disk();
        assert_abs_diff_eq!(
            d.distance_to_boundary(&Point::new(0.3, 0.0)),
            0.7,
            epsilon = 1e-15
        );
        assert!(d.contains(&Point::new(0.99, 0.0)));
        assert!(!d.contains(&Point::new(1.0, 0.0)));
    }

    #[test]
    fn measures() {
        assert_eq!(Domain::interval(0.0, 1.0).unwrap().measure(), 1.0);
        assert_abs_diff_eq!(Domain::unit_square().measure(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            Domain::unit_disk().measure(),
            std::f64::consts::PI,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(l_shape().measure(), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn convexity() {
        assert!(Domain::unit_square().is_convex());
        assert!(!l_shape().is_convex());
        assert!(Domain::unit_disk().is_convex());
        assert!(Domain::interval(-1.0, 3.0).unwrap().is_convex());
    }

    #[test]
    fn containment() {
        let sq = Domain::unit_square();
        assert!(!sq.contains(&Point::new(1.5, 0.5)));
        assert!(sq.contains(&Point::new(0.5, 0.5)));
        assert!(!sq.contains(&Point::new(1.0, 0.5)));
        assert!(!sq.contains(&Point::new(1.0 - 1e-13, 0.5)));
        let l = l_shape();
        assert!(!l.contains(&Point::new(1.5, 1.5)));
        assert!(l.contains(&Point::new(0.5, 1.5)));
    }

    #[test]
    fn clockwise_polygon_is_normalized() {
        let d = Domain::polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(d.measure() > 0.0);
        assert!(d.is_convex());
    }

    #[test]
    fn invalid_domains() {
        assert!(Domain::interval(1.0, 1.0).is_err());
        assert!(Domain::disk(Point::new(0.0, 0.0), 0.0).is_err());
        assert!(Domain::polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 2.0)
        ])
        .is_err());
        // bow tie
        assert!("polygon:0,0;1,1;1,0;0,1".parse::<Domain>().is_err());
        assert!("annulus:0,0,1".parse::<Domain>().is_err());
        assert!("disk:0,0".parse::<Domain>().is_err());
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in [
            "interval:0,1",
            "disk:0,0,1",
            "polygon:0,0;2,0;2,1;1,1;1,2;0,2",
        ] {
            let d: Domain = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
    }

    #[test]
    fn crossings() {
        let d = Domain::unit_disk();
        let t = d
            .first_boundary_crossing(&Point::new(0.5, 0.0), &Point::new(1.5, 0.0))
            .unwrap();
        assert_abs_diff_eq!(t, 0.5, epsilon = 1e-15);
        let l = l_shape();
        let t = l
            .first_boundary_crossing(&Point::new(0.5, 1.5), &Point::new(1.5, 1.5))
            .unwrap();
        assert_abs_diff_eq!(t, 0.5, epsilon = 1e-15);
        assert!(l
            .first_boundary_crossing(&Point::new(0.5, 0.5), &Point::new(1.5, 0.5))
            .is_none());
    }

    fn arb_domain() -> impl Strategy<Value = Domain> {
        prop_oneof![
            Just(Domain::interval(0.0, 1.0).unwrap()),
            Just(Domain::unit_square()),
            Just(Domain::unit_disk()),
            Just("polygon:0,0;2,0;2,1;1,1;1,2;0,2".parse::<Domain>().unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn distance_is_one_lipschitz(d in arb_domain(),
                                     x0 in -1.5f64..2.5, y0 in -1.5f64..2.5,
                                     x1 in -1.5f64..2.5, y1 in -1.5f64..2.5) {
            let (p, q) = if d.dimension() == 1 {
                (Point::on_line(x0), Point::on_line(x1))
            } else {
                (Point::new(x0, y0), Point::new(x1, y1))
            };
            let dp = d.distance_to_boundary(&p);
            let dq = d.distance_to_boundary(&q);
            prop_assert!((dp - dq).abs() <= p.dist(&q) + 1e-12);
            prop_assert_eq!(dp > 0.0, d.contains(&p));
        }

        #[test]
        fn disk_distance_closed_form(x in -0.99f64..0.99, y in -0.99f64..0.99) {
            let d = Domain::disk(Point::new(0.1, -0.2), 1.3).unwrap();
            let p = Point::new(x, y);
            let expected = (1.3 - p.dist(&Point::new(0.1, -0.2))).max(0.0);
            prop_assert!((d.distance_to_boundary(&p) - expected).abs() < 1e-12);
        }
    }
}
