//! Reference routes and the Cartesian <-> Frenet coordinate maps.
//!
//! A [`ReferenceRoute`] is a natural cubic spline through the input waypoints,
//! resampled at a uniform arc-length spacing. Every sample carries a unit
//! tangent and a unit normal (the tangent rotated by +90 degrees), so positive
//! `d` lies to the left of the direction of travel.
//!
//! Between samples the frame is interpolated linearly: `to_cartesian` evaluates
//! `r(s) + d * n(s)` with `r` and `n` blended from the two bracketing samples,
//! and `to_frenet` inverts exactly that map.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spline::Spline2d;

/// Default resampling step along the route, in meters.
pub const DEFAULT_SPACING: f64 = 0.1;

/// Default lateral corridor half-width for `to_frenet`, in meters.
pub const DEFAULT_CORRIDOR: f64 = 25.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrenetError {
    #[error("invalid route input: {0}")]
    InvalidInput(String),
    #[error("arc length {s} outside route [0, {length}]")]
    OutOfRange { s: f64, length: f64 },
    #[error("point ({x}, {y}) is {distance:.3} m from the route, beyond the {limit} m corridor")]
    OutOfCorridor {
        x: f64,
        y: f64,
        distance: f64,
        limit: f64,
    },
}

/// A point in the world frame, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct CartesianPoint {
    pub x: f64,
    pub y: f64,
}

impl CartesianPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &CartesianPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for CartesianPoint {
    fn from(v: [f64; 2]) -> Self {
        Self { x: v[0], y: v[1] }
    }
}

impl From<CartesianPoint> for [f64; 2] {
    fn from(p: CartesianPoint) -> Self {
        [p.x, p.y]
    }
}

/// Longitudinal arc length `s` and signed lateral offset `d` (positive to the left).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrenetPoint {
    pub s: f64,
    pub d: f64,
}

impl FrenetPoint {
    pub const fn new(s: f64, d: f64) -> Self {
        Self { s, d }
    }
}

#[derive(Debug, Clone, Copy)]
struct Vec2 {
    x: f64,
    y: f64,
}

impl Vec2 {
    fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }
}

/// Arc-length-sampled reference path. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ReferenceRoute {
    waypoints: Vec<CartesianPoint>,
    spacing: f64,
    points: Vec<CartesianPoint>,
    tangents: Vec<(f64, f64)>,
    normals: Vec<(f64, f64)>,
    corridor: f64,
}

impl ReferenceRoute {
    /// Fit a natural cubic spline through `waypoints` and resample it every `spacing` meters.
    ///
    /// Consecutive duplicate waypoints are dropped. The last sample sits at the
    /// largest multiple of `spacing` not exceeding the spline length.
    pub fn build(waypoints: &[CartesianPoint], spacing: f64) -> Result<Self, FrenetError> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(FrenetError::InvalidInput(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        if waypoints
            .iter()
            .any(|p| !(p.x.is_finite() && p.y.is_finite()))
        {
            return Err(FrenetError::InvalidInput("non-finite waypoint".into()));
        }
        let mut distinct: Vec<CartesianPoint> = Vec::with_capacity(waypoints.len());
        for p in waypoints {
            if distinct.last().is_none_or(|q| q.distance(p) > 1e-9) {
                distinct.push(*p);
            }
        }
        if distinct.len() < 2 {
            return Err(FrenetError::InvalidInput(
                "need at least two distinct waypoints".into(),
            ));
        }
        check_simple_polyline(&distinct)?;

        let raw: Vec<(f64, f64)> = distinct.iter().map(|p| (p.x, p.y)).collect();
        let spline = Spline2d::through(&raw);
        let length = spline.length();
        if !(length > spacing) {
            return Err(FrenetError::InvalidInput(format!(
                "route length {length} is not longer than one spacing step {spacing}"
            )));
        }

        let count = (length / spacing + 1e-9).floor() as usize + 1;
        let mut points = Vec::with_capacity(count);
        let mut tangents = Vec::with_capacity(count);
        let mut normals = Vec::with_capacity(count);
        for i in 0..count {
            let (seg, u) = spline.locate(i as f64 * spacing);
            let (x, y) = spline.position(seg, u);
            let (dx, dy) = spline.derivative(seg, u);
            let norm = dx.hypot(dy);
            if !(norm > 0.0) {
                return Err(FrenetError::InvalidInput(
                    "degenerate route tangent (cusp in waypoints)".into(),
                ));
            }
            let (tx, ty) = (dx / norm, dy / norm);
            points.push(CartesianPoint::new(x, y));
            tangents.push((tx, ty));
            normals.push((-ty, tx));
        }

        Ok(Self {
            waypoints: distinct,
            spacing,
            points,
            tangents,
            normals,
            corridor: DEFAULT_CORRIDOR,
        })
    }

    /// Replace the lateral corridor half-width used by [`Self::to_frenet`].
    pub fn with_corridor(mut self, corridor: f64) -> Self {
        self.corridor = corridor;
        self
    }

    pub fn waypoints(&self) -> &[CartesianPoint] {
        &self.waypoints
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn corridor(&self) -> f64 {
        self.corridor
    }

    pub fn points(&self) -> &[CartesianPoint] {
        &self.points
    }

    pub fn tangents(&self) -> &[(f64, f64)] {
        &self.tangents
    }

    pub fn normals(&self) -> &[(f64, f64)] {
        &self.normals
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Arc length of sample `i`.
    pub fn arc_length_at(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }

    pub fn cumulative_s(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.arc_length_at(i)).collect()
    }

    /// Arc length of the last sample.
    pub fn length(&self) -> f64 {
        self.arc_length_at(self.len() - 1)
    }

    /// Bracketing sample index and blend factor for an in-range `s`.
    fn bracket(&self, s: f64) -> Result<(usize, f64), FrenetError> {
        let length = self.length();
        let slack = 1e-9 * length.max(1.0);
        if !s.is_finite() || s < -slack || s > length + slack {
            return Err(FrenetError::OutOfRange { s, length });
        }
        let s = s.clamp(0.0, length);
        let i = ((s / self.spacing).floor() as usize).min(self.len() - 2);
        Ok((i, (s - self.arc_length_at(i)) / self.spacing))
    }

    fn frame_at(&self, i: usize, alpha: f64) -> (Vec2, Vec2) {
        let (p0, p1) = (self.points[i], self.points[i + 1]);
        let (n0, n1) = (self.normals[i], self.normals[i + 1]);
        (
            Vec2 {
                x: p0.x + alpha * (p1.x - p0.x),
                y: p0.y + alpha * (p1.y - p0.y),
            },
            Vec2 {
                x: n0.0 + alpha * (n1.0 - n0.0),
                y: n0.1 + alpha * (n1.1 - n0.1),
            },
        )
    }

    /// Unit tangent at arc length `s` (blended and renormalized).
    pub fn tangent_at(&self, s: f64) -> Result<(f64, f64), FrenetError> {
        let (i, a) = self.bracket(s)?;
        let (t0, t1) = (self.tangents[i], self.tangents[i + 1]);
        let (x, y) = (t0.0 + a * (t1.0 - t0.0), t0.1 + a * (t1.1 - t0.1));
        let n = x.hypot(y);
        Ok((x / n, y / n))
    }

    /// Heading angle of the route at arc length `s`, in radians.
    pub fn heading_at(&self, s: f64) -> Result<f64, FrenetError> {
        let (tx, ty) = self.tangent_at(s)?;
        Ok(ty.atan2(tx))
    }

    /// `r(s) + d * n(s)` with the frame blended linearly between samples.
    pub fn to_cartesian(&self, p: FrenetPoint) -> Result<CartesianPoint, FrenetError> {
        let (i, alpha) = self.bracket(p.s)?;
        let (r, n) = self.frame_at(i, alpha);
        Ok(CartesianPoint::new(r.x + p.d * n.x, r.y + p.d * n.y))
    }

    /// Signed distance of `p` ahead of the normal line through sample `j`.
    fn ahead_of(&self, j: usize, p: CartesianPoint) -> f64 {
        let r = self.points[j];
        let t = self.tangents[j];
        (p.x - r.x) * t.0 + (p.y - r.y) * t.1
    }

    /// Inverse of [`Self::to_cartesian`]. Points before the start or past the end
    /// of the route are clamped to `s = 0` or `s = length`.
    pub fn to_frenet(&self, p: CartesianPoint) -> Result<FrenetPoint, FrenetError> {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(FrenetError::InvalidInput("non-finite query point".into()));
        }
        let (nearest, dist2) = self
            .points
            .iter()
            .enumerate()
            .map(|(i, q)| (i, (q.x - p.x).powi(2) + (q.y - p.y).powi(2)))
            .fold(
                (0, f64::INFINITY),
                |best, cur| if cur.1 < best.1 { cur } else { best },
            );
        let distance = dist2.sqrt();
        if distance > self.corridor {
            return Err(FrenetError::OutOfCorridor {
                x: p.x,
                y: p.y,
                distance,
                limit: self.corridor,
            });
        }

        // Walk to the segment whose bounding normal lines enclose `p`.
        let last_seg = self.len() - 2;
        let mut seg = nearest.min(last_seg);
        for _ in 0..self.len() {
            if seg > 0 && self.ahead_of(seg, p) < 0.0 {
                seg -= 1;
            } else if seg < last_seg && self.ahead_of(seg + 1, p) >= 0.0 {
                seg += 1;
            } else {
                break;
            }
        }

        let f0 = self.ahead_of(seg, p);
        let f1 = self.ahead_of(seg + 1, p);
        if seg == 0 && f0 < 0.0 {
            let n = self.normals[0];
            let r = self.points[0];
            return Ok(FrenetPoint::new(0.0, (p.x - r.x) * n.0 + (p.y - r.y) * n.1));
        }
        if seg == last_seg && f1 > 0.0 {
            let n = self.normals[last_seg + 1];
            let r = self.points[last_seg + 1];
            return Ok(FrenetPoint::new(
                self.length(),
                (p.x - r.x) * n.0 + (p.y - r.y) * n.1,
            ));
        }

        let r0 = self.points[seg];
        let r1 = self.points[seg + 1];
        let n0 = self.normals[seg];
        let n1 = self.normals[seg + 1];
        let dr = Vec2 {
            x: r1.x - r0.x,
            y: r1.y - r0.y,
        };
        let dn = Vec2 {
            x: n1.0 - n0.0,
            y: n1.1 - n0.1,
        };

        let mut alpha = if f0 - f1 > 0.0 { f0 / (f0 - f1) } else { 0.0 };
        let mut d = {
            let (r, n) = self.frame_at(seg, alpha);
            Vec2 {
                x: p.x - r.x,
                y: p.y - r.y,
            }
            .dot(n)
        };
        // Newton on r0 + a*dr + d*(n0 + a*dn) = p.
        for _ in 0..30 {
            let nx = n0.0 + alpha * dn.x;
            let ny = n0.1 + alpha * dn.y;
            let fx = r0.x + alpha * dr.x + d * nx - p.x;
            let fy = r0.y + alpha * dr.y + d * ny - p.y;
            if fx.hypot(fy) < 1e-14 {
                break;
            }
            let (j00, j01) = (dr.x + d * dn.x, nx);
            let (j10, j11) = (dr.y + d * dn.y, ny);
            let det = j00 * j11 - j01 * j10;
            if det.abs() < 1e-300 {
                break;
            }
            alpha -= (j11 * fx - j01 * fy) / det;
            d -= (-j10 * fx + j00 * fy) / det;
        }
        let alpha = alpha.clamp(0.0, 1.0);
        Ok(FrenetPoint::new(
            self.arc_length_at(seg) + alpha * self.spacing,
            d,
        ))
    }
}

/// Reject polylines that cross themselves or fold straight back.
fn check_simple_polyline(pts: &[CartesianPoint]) -> Result<(), FrenetError> {
    let orient = |a: CartesianPoint, b: CartesianPoint, c: CartesianPoint| {
        (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
    };
    for w in pts.windows(3) {
        let u = (w[1].x - w[0].x, w[1].y - w[0].y);
        let v = (w[2].x - w[1].x, w[2].y - w[1].y);
        let cross = u.0 * v.1 - u.1 * v.0;
        let dot = u.0 * v.0 + u.1 * v.1;
        if dot < 0.0 && cross.abs() <= 1e-9 * (u.0.hypot(u.1) * v.0.hypot(v.1)) {
            return Err(FrenetError::InvalidInput(
                "waypoints reverse direction".into(),
            ));
        }
    }
    let segs = pts.len() - 1;
    for i in 0..segs {
        for j in i + 2..segs {
            let (a, b, c, d) = (pts[i], pts[i + 1], pts[j], pts[j + 1]);
            let o1 = orient(a, b, c);
            let o2 = orient(a, b, d);
            let o3 = orient(c, d, a);
            let o4 = orient(c, d, b);
            if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
                return Err(FrenetError::InvalidInput(format!(
                    "waypoint polyline self-intersects (segments {i} and {j})"
                )));
            }
        }
    }
    Ok(())
}
