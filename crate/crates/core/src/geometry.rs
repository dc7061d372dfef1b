//! Box overlap and the planar primitives behind the tail intersection point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn center_of(b: &BBox) -> Self {
        let (x, y) = b.center();
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    fn lerp(self, to: Point2, t: f64) -> Point2 {
        Point2::new(self.x + t * (to.x - self.x), self.y + t * (to.y - self.y))
    }
}

/// Intersection over union; zero when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map_or(0.0, |i| i.area());
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

const PARAM_EPS: f64 = 1e-12;

/// Intersection of the closed segments `[p1, p2]` and `[q1, q2]`.
///
/// Collinear segments that overlap yield the midpoint of the shared
/// interval. Zero-length segments are rejected.
pub fn segment_intersection(
    p1: Point2,
    p2: Point2,
    q1: Point2,
    q2: Point2,
) -> Result<Option<Point2>> {
    for p in [p1, p2, q1, q2] {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(Error::Domain("segment endpoints must be finite".into()));
        }
    }
    let r = p2.sub(p1);
    let s = q2.sub(q1);
    let (rr, ss) = (r.dot(r), s.dot(s));
    if rr == 0.0 || ss == 0.0 {
        return Err(Error::Domain("zero-length segment".into()));
    }

    let offset = q1.sub(p1);
    let denom = r.cross(s);
    let scale = (rr * ss).sqrt();

    if denom.abs() <= PARAM_EPS * scale {
        // Parallel: only collinear segments can meet.
        if offset.cross(r).abs() > PARAM_EPS * (offset.dot(offset) * rr).sqrt().max(rr) {
            return Ok(None);
        }
        let t0 = offset.dot(r) / rr;
        let t1 = t0 + s.dot(r) / rr;
        let lo = t0.min(t1).max(0.0);
        let hi = t0.max(t1).min(1.0);
        if lo > hi + PARAM_EPS {
            return Ok(None);
        }
        return Ok(Some(p1.lerp(p2, (lo + hi) / 2.0)));
    }

    let t = offset.cross(s) / denom;
    let u = offset.cross(r) / denom;
    let inside = |v: f64| (-PARAM_EPS..=1.0 + PARAM_EPS).contains(&v);
    if inside(t) && inside(u) {
        Ok(Some(p1.lerp(p2, t.clamp(0.0, 1.0))))
    } else {
        Ok(None)
    }
}

/// Tail intersection point: where the tail-fin-to-body segment crosses the
/// anal-fin-to-adipose-fin segment, expressed as the distance from the
/// adipose fin over the full fin-to-fin length. `None` when the segments
/// do not meet.
pub fn tip_ratio(anf: Point2, apf: Point2, tf: Point2, body: Point2) -> Result<Option<f64>> {
    let span = apf.distance(&anf);
    if span == 0.0 {
        return Err(Error::Domain("anal and adipose fin centers coincide".into()));
    }
    Ok(segment_intersection(anf, apf, tf, body)?
        .map(|ip| (apf.distance(&ip) / span).clamp(0.0, 1.0)))
}
