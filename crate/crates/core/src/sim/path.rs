//! Flight-path geometry for simulated UAVs.
//!
//! Every shape is defined in a local horizontal plane, scaled by
//! `scale_m`, rotated by `heading_deg` and placed at `center_xy` and a fixed
//! altitude. Travel is at constant speed along the curve's arc length.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape tag of a flight path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    #[serde(rename = "line")]
    Line,
    #[serde(rename = "circle")]
    Circle,
    #[serde(rename = "S")]
    S,
    #[serde(rename = "figure8")]
    Figure8,
    #[serde(rename = "square")]
    Square,
    #[serde(rename = "diamond")]
    Diamond,
    #[serde(rename = "M")]
    M,
    #[serde(rename = "star")]
    Star,
}

impl Shape {
    pub const ALL: [Shape; 8] = [
        Shape::Line,
        Shape::Circle,
        Shape::S,
        Shape::Figure8,
        Shape::Square,
        Shape::Diamond,
        Shape::M,
        Shape::Star,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Shape::Line => "line",
            Shape::Circle => "circle",
            Shape::S => "S",
            Shape::Figure8 => "figure8",
            Shape::Square => "square",
            Shape::Diamond => "diamond",
            Shape::M => "M",
            Shape::Star => "star",
        }
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Shape::ALL
            .into_iter()
            .find(|shape| shape.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownShape(s.to_string()))
    }
}

/// Placement and kinematics of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathGeometry {
    pub shape: Shape,
    pub speed_mps: f64,
    pub altitude_m: f64,
    pub center_xy: [f64; 2],
    pub scale_m: f64,
    pub heading_deg: f64,
    /// Angle between the line direction and the line of sight to the path
    /// centre; only used by [`Shape::Line`].
    pub boresight_deg: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone)]
enum Curve {
    Circle { radius: f64 },
    Line { length: f64 },
    Polyline(Polyline),
}

#[derive(Debug, Clone)]
struct Polyline {
    pts: Vec<[f64; 2]>,
    /// Cumulative arc length at each vertex.
    cum: Vec<f64>,
    /// Open curves are flown back and forth.
    closed: bool,
}

impl Polyline {
    fn new(mut pts: Vec<[f64; 2]>, closed: bool) -> Self {
        if closed && pts.first() != pts.last() {
            pts.push(pts[0]);
        }
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            cum.push(cum.last().unwrap() + d);
        }
        Self { pts, cum, closed }
    }

    fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn period_length(&self) -> f64 {
        if self.closed {
            self.length()
        } else {
            2.0 * self.length()
        }
    }

    /// Point and unit tangent (in travel direction) at arc length `s`.
    fn at(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let len = self.length();
        let period = self.period_length();
        let mut s = s.rem_euclid(period);
        let mut dir = 1.0;
        if !self.closed && s > len {
            s = period - s;
            dir = -1.0;
        }
        let seg = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.pts.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.pts.len() - 2),
        };
        let a = self.pts[seg];
        let b = self.pts[seg + 1];
        let seg_len = self.cum[seg + 1] - self.cum[seg];
        let f = if seg_len > 0.0 {
            (s - self.cum[seg]) / seg_len
        } else {
            0.0
        };
        let p = [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
        let t = if seg_len > 0.0 {
            [dir * (b[0] - a[0]) / seg_len, dir * (b[1] - a[1]) / seg_len]
        } else {
            [0.0, 0.0]
        };
        (p, t)
    }
}

fn unit_shape(shape: Shape) -> Polyline {
    match shape {
        Shape::Square => Polyline::new(
            vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]],
            true,
        ),
        Shape::Diamond => Polyline::new(
            vec![[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]],
            true,
        ),
        Shape::M => Polyline::new(
            vec![[-1.0, -1.0], [-1.0, 1.0], [0.0, 0.0], [1.0, 1.0], [1.0, -1.0]],
            false,
        ),
        Shape::Star => {
            let inner = 0.382;
            let pts = (0..10)
                .map(|k| {
                    let r = if k % 2 == 0 { 1.0 } else { inner };
                    let a = PI / 2.0 + k as f64 * PI / 5.0;
                    [r * a.cos(), r * a.sin()]
                })
                .collect();
            Polyline::new(pts, true)
        }
        Shape::S => {
            let n = 512;
            let pts = (0..=n)
                .map(|i| {
                    let u = i as f64 / n as f64;
                    [0.8 * (2.0 * PI * u).sin(), 1.0 - 2.0 * u]
                })
                .collect();
            Polyline::new(pts, false)
        }
        Shape::Figure8 => {
            // Lemniscate of Gerono.
            let n = 4096;
            let mut pts: Vec<[f64; 2]> = (0..n)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / n as f64;
                    [a.sin(), a.sin() * a.cos()]
                })
                .collect();
            pts.push(pts[0]);
            Polyline::new(pts, true)
        }
        Shape::Line | Shape::Circle => unreachable!("analytic shapes"),
    }
}

/// Path geometry with precomputed arc-length tables.
#[derive(Debug, Clone)]
pub struct BuiltPath {
    pub geometry: PathGeometry,
    curve: Curve,
    /// Rotation from local to world, radians.
    rotation: f64,
}

impl BuiltPath {
    pub fn new(geometry: PathGeometry) -> Result<Self> {
        let g = &geometry;
        let finite = [g.speed_mps, g.altitude_m, g.scale_m, g.heading_deg, g.boresight_deg]
            .iter()
            .chain(g.center_xy.iter())
            .all(|v| v.is_finite());
        if !finite || g.speed_mps < 0.0 || g.duration_s <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "path needs finite geometry, non-negative speed and positive duration ({:?})",
                g.shape
            )));
        }
        let (curve, rotation) = match g.shape {
            Shape::Circle => {
                if g.scale_m <= 0.0 {
                    return Err(Error::InvalidConfig("circle radius must be positive".into()));
                }
                (Curve::Circle { radius: g.scale_m }, g.heading_deg.to_radians())
            }
            Shape::Line => {
                let los = g.center_xy[1].atan2(g.center_xy[0]);
                (
                    Curve::Line {
                        length: g.speed_mps * g.duration_s,
                    },
                    los + g.boresight_deg.to_radians(),
                )
            }
            other => {
                if g.scale_m <= 0.0 {
                    return Err(Error::InvalidConfig("shape scale must be positive".into()));
                }
                let mut poly = unit_shape(other);
                for p in &mut poly.pts {
                    p[0] *= g.scale_m;
                    p[1] *= g.scale_m;
                }
                for c in &mut poly.cum {
                    *c *= g.scale_m;
                }
                (Curve::Polyline(poly), g.heading_deg.to_radians())
            }
        };
        Ok(Self {
            geometry,
            curve,
            rotation,
        })
    }

    /// Time for one full traversal of a closed (or back-and-forth) curve.
    pub fn period_s(&self) -> Option<f64> {
        let v = self.geometry.speed_mps;
        if v <= 0.0 {
            return None;
        }
        match &self.curve {
            Curve::Circle { radius } => Some(2.0 * PI * radius / v),
            Curve::Line { .. } => None,
            Curve::Polyline(p) => Some(p.period_length() / v),
        }
    }

    fn local(&self, t: f64) -> ([f64; 2], [f64; 2]) {
        let v = self.geometry.speed_mps;
        let s = v * t;
        match &self.curve {
            Curve::Circle { radius } => {
                let a = s / radius;
                (
                    [radius * a.cos(), radius * a.sin()],
                    [-v * a.sin(), v * a.cos()],
                )
            }
            Curve::Line { length } => ([s - 0.5 * length, 0.0], [v, 0.0]),
            Curve::Polyline(poly) => {
                let (p, dir) = poly.at(s);
                (p, [v * dir[0], v * dir[1]])
            }
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let d = self.geometry.duration_s;
        if !(t >= 0.0 && t <= d * (1.0 + 1e-12)) {
            return Err(Error::TimeOutOfRange { t, duration: d });
        }
        Ok(())
    }

    /// World position at `t` seconds after the path starts.
    pub fn position(&self, t: f64) -> Result<[f64; 3]> {
        Ok(self.state(t)?.0)
    }

    /// World position and velocity at `t`.
    pub fn state(&self, t: f64) -> Result<([f64; 3], [f64; 3])> {
        self.check_time(t)?;
        let (p, v) = self.local(t);
        let (s, c) = self.rotation.sin_cos();
        let g = &self.geometry;
        let pos = [
            g.center_xy[0] + c * p[0] - s * p[1],
            g.center_xy[1] + s * p[0] + c * p[1],
            g.altitude_m,
        ];
        let vel = [c * v[0] - s * v[1], s * v[0] + c * v[1], 0.0];
        Ok((pos, vel))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::dist3;

    fn geom(shape: Shape) -> PathGeometry {
        PathGeometry {
            shape,
            speed_mps: 10.0,
            altitude_m: 80.0,
            center_xy: [500.0, 100.0],
            scale_m: 120.0,
            heading_deg: 30.0,
            boresight_deg: 45.0,
            duration_s: 200.0,
        }
    }

    #[test]
    fn line_displacement_matches_speed() {
        let p = BuiltPath::new(geom(Shape::Line)).unwrap();
        let a = p.position(0.0).unwrap();
        let b = p.position(1.0).unwrap();
        assert!((dist3(a, b) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn line_boresight_angle() {
        let mut g = geom(Shape::Line);
        g.center_xy = [500.0, 0.0];
        g.boresight_deg = 0.0;
        let p = BuiltPath::new(g).unwrap();
        let (_, v) = p.state(3.0).unwrap();
        assert!((v[0] - 10.0).abs() < 1e-12 && v[1].abs() < 1e-12);
    }

    #[test]
    fn circle_radius_constant() {
        let p = BuiltPath::new(geom(Shape::Circle)).unwrap();
        for i in 0..400 {
            let q = p.position(i as f64 * 0.5).unwrap();
            let r = ((q[0] - 500.0).powi(2) + (q[1] - 100.0).powi(2)).sqrt();
            assert!((r - 120.0).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_shapes_return_to_start() {
        for shape in [Shape::Figure8, Shape::Square, Shape::Diamond, Shape::Star, Shape::M, Shape::S] {
            let mut g = geom(shape);
            g.duration_s = 1e4;
            let p = BuiltPath::new(g).unwrap();
            let period = p.period_s().unwrap();
            let a = p.position(0.0).unwrap();
            let b = p.position(period).unwrap();
            assert!(dist3(a, b) < 1e-6, "{shape:?}: {}", dist3(a, b));
        }
    }

    #[test]
    fn positions_are_continuous() {
        for shape in Shape::ALL {
            let p = BuiltPath::new(geom(shape)).unwrap();
            let mut prev = p.position(0.0).unwrap();
            for i in 1..2000 {
                let q = p.position(i as f64 * 0.1).unwrap();
                assert!(dist3(prev, q) <= 1.0 + 1e-9, "{shape:?} jumps at step {i}");
                prev = q;
            }
        }
    }

    #[test]
    fn time_out_of_range() {
        let p = BuiltPath::new(geom(Shape::Circle)).unwrap();
        assert!(matches!(p.position(-1.0), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(p.position(201.0), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn tags_parse() {
        assert_eq!("figure8".parse::<Shape>().unwrap(), Shape::Figure8);
        assert_eq!("star".parse::<Shape>().unwrap(), Shape::Star);
        assert!(matches!("hexagon".parse::<Shape>(), Err(Error::UnknownShape(_))));
    }
}
