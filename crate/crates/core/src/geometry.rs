//! Parametric specimen shapes and the boundary description of their quarter domains.
//!
//! The quarter domain sits in the first quadrant with the symmetry axes on `y = 0`
//! and `x = 0`. The minimum (net) section is the line `x = 0`, the traction is applied
//! on `x = half_length`, and the notch (or the continuous-radius fillet of a dogbone)
//! is a circular arc centred on the `x = 0` axis above the net section.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::BoundaryTag;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecimenKind {
    UnnotchedDogbone,
    EdgeNotched,
}

/// On-disk geometry description. All lengths in inches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub kind: SpecimenKind,
    pub w_max_in: f64,
    pub w_min_in: f64,
    pub notch_radius_in: f64,
    pub half_length_in: f64,
    pub thickness_in: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecimenGeometry {
    pub kind: SpecimenKind,
    pub w_max: f64,
    pub w_min: f64,
    pub notch_radius: f64,
    pub half_length: f64,
    pub thickness: f64,
}

/// Sheet thickness shared by the three aluminium specimens.
pub const SHEET_THICKNESS_IN: f64 = 0.09;

impl SpecimenGeometry {
    /// Validates a geometry description (`build_geometry`).
    pub fn from_config(cfg: &GeometryConfig) -> Result<Self> {
        let geom = SpecimenGeometry {
            kind: cfg.kind,
            w_max: cfg.w_max_in,
            w_min: cfg.w_min_in,
            notch_radius: cfg.notch_radius_in,
            half_length: cfg.half_length_in,
            thickness: cfg.thickness_in,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn to_config(&self) -> GeometryConfig {
        GeometryConfig {
            kind: self.kind,
            w_max_in: self.w_max,
            w_min_in: self.w_min,
            notch_radius_in: self.notch_radius,
            half_length_in: self.half_length,
            thickness_in: self.thickness,
        }
    }

    /// Approximate continuous-radius dogbone (12 in fillet radius). Widths and length are
    /// not documented for the original specimen; these values are placeholders.
    pub fn specimen1() -> Self {
        SpecimenGeometry {
            kind: SpecimenKind::UnnotchedDogbone,
            w_max: 1.5,
            w_min: 1.0,
            notch_radius: 12.0,
            half_length: 3.5,
            thickness: SHEET_THICKNESS_IN,
        }
    }

    /// Approximate blunt edge-notched sheet (0.76 in notch radius).
    pub fn specimen2() -> Self {
        SpecimenGeometry {
            kind: SpecimenKind::EdgeNotched,
            w_max: 2.25,
            w_min: 1.5,
            notch_radius: 0.76,
            half_length: 3.0,
            thickness: SHEET_THICKNESS_IN,
        }
    }

    /// Approximate sharp edge-notched sheet (1/32 in notch radius).
    pub fn specimen3() -> Self {
        SpecimenGeometry {
            kind: SpecimenKind::EdgeNotched,
            w_max: 2.25,
            w_min: 1.5,
            notch_radius: 0.03125,
            half_length: 2.0,
            thickness: SHEET_THICKNESS_IN,
        }
    }

    /// Straight strip of constant width: uniform stress under end traction.
    pub fn rectangle(width: f64, half_length: f64, thickness: f64) -> Result<Self> {
        let geom = SpecimenGeometry {
            kind: SpecimenKind::UnnotchedDogbone,
            w_max: width,
            w_min: width,
            notch_radius: width,
            half_length,
            thickness,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "specimen1" | "1" => Some(Self::specimen1()),
            "specimen2" | "2" => Some(Self::specimen2()),
            "specimen3" | "3" => Some(Self::specimen3()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("w_max", self.w_max),
            ("w_min", self.w_min),
            ("notch_radius", self.notch_radius),
            ("half_length", self.half_length),
            ("thickness", self.thickness),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Geometry(format!("{name} must be positive, got {v}")));
            }
        }
        if self.w_min > self.w_max {
            return Err(Error::Geometry(format!(
                "w_min ({}) must not exceed w_max ({})",
                self.w_min, self.w_max
            )));
        }
        if self.half_length <= self.w_max / 2.0 {
            return Err(Error::Geometry(format!(
                "half_length ({}) must exceed w_max/2 ({})",
                self.half_length,
                self.w_max / 2.0
            )));
        }
        if self.has_notch() && self.notch_end_x() >= self.half_length {
            return Err(Error::Geometry(format!(
                "notch extends to x = {:.4} which reaches the loaded end at half_length = {}",
                self.notch_end_x(),
                self.half_length
            )));
        }
        Ok(())
    }

    /// Notch depth per side, `(w_max - w_min) / 2`.
    pub fn notch_depth(&self) -> f64 {
        (self.w_max - self.w_min) / 2.0
    }

    pub fn has_notch(&self) -> bool {
        self.notch_depth() > 0.0
    }

    /// `W_min / W_max`: converts equivalent nominal stress into applied end traction.
    pub fn width_ratio(&self) -> f64 {
        self.w_min / self.w_max
    }

    fn notch_centre(&self) -> Point {
        [0.0, self.w_min / 2.0 + self.notch_radius]
    }

    /// Angle (about the notch centre) where the arc leaves the notch; the arc runs from
    /// this angle clockwise down to -90 degrees at the notch root.
    fn notch_top_angle(&self) -> f64 {
        let d = self.notch_depth();
        let r = self.notch_radius;
        if d < r {
            ((d - r) / r).asin()
        } else {
            0.0
        }
    }

    fn notch_end_x(&self) -> f64 {
        self.notch_radius * self.notch_top_angle().cos()
    }

    /// Tagged boundary loop of the quarter domain, counter-clockwise.
    pub fn domain(&self) -> Domain {
        let l = self.half_length;
        let top = self.w_max / 2.0;
        let net = self.w_min / 2.0;
        let mut pieces = vec![
            BoundaryPiece::new(BoundaryTag::B4, Curve::line([0.0, 0.0], [l, 0.0])),
            BoundaryPiece::new(BoundaryTag::B1, Curve::line([l, 0.0], [l, top])),
        ];
        if !self.has_notch() {
            pieces.push(BoundaryPiece::new(
                BoundaryTag::B2,
                Curve::line([l, top], [0.0, top]),
            ));
            pieces.push(BoundaryPiece::new(
                BoundaryTag::B5,
                Curve::line([0.0, top], [0.0, 0.0]),
            ));
            return Domain { pieces };
        }
        let c = self.notch_centre();
        let r = self.notch_radius;
        let a_top = self.notch_top_angle();
        let arc_top = [c[0] + r * a_top.cos(), c[1] + r * a_top.sin()];
        if self.notch_depth() < r {
            pieces.push(BoundaryPiece::new(
                BoundaryTag::B2,
                Curve::line([l, top], arc_top),
            ));
        } else {
            // U-notch: straight flank from the sheet edge down to the start of the root arc.
            pieces.push(BoundaryPiece::new(
                BoundaryTag::B2,
                Curve::line([l, top], [r, top]),
            ));
            if top > arc_top[1] {
                pieces.push(BoundaryPiece::new(
                    BoundaryTag::B3,
                    Curve::line([r, top], arc_top),
                ));
            }
        }
        pieces.push(BoundaryPiece::new(
            BoundaryTag::B3,
            Curve::arc(c, r, a_top, -FRAC_PI_2),
        ));
        pieces.push(BoundaryPiece::new(
            BoundaryTag::B5,
            Curve::line([0.0, net], [0.0, 0.0]),
        ));
        Domain { pieces }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve {
    Line { from: Point, to: Point },
    /// Circular arc swept linearly in angle from `start` to `end` (radians).
    Arc {
        centre: Point,
        radius: f64,
        start: f64,
        end: f64,
    },
}

impl Curve {
    pub fn line(from: Point, to: Point) -> Self {
        Curve::Line { from, to }
    }

    pub fn arc(centre: Point, radius: f64, start: f64, end: f64) -> Self {
        Curve::Arc {
            centre,
            radius,
            start,
            end,
        }
    }

    /// Point at parameter `t` in `[0, 1]`, uniform in arc length.
    pub fn point(&self, t: f64) -> Point {
        match *self {
            Curve::Line { from, to } => [
                from[0] + t * (to[0] - from[0]),
                from[1] + t * (to[1] - from[1]),
            ],
            Curve::Arc {
                centre,
                radius,
                start,
                end,
            } => {
                let a = start + t * (end - start);
                [centre[0] + radius * a.cos(), centre[1] + radius * a.sin()]
            }
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Curve::Line { from, to } => dist(from, to),
            Curve::Arc {
                radius, start, end, ..
            } => radius * (end - start).abs(),
        }
    }

    pub fn is_arc(&self) -> bool {
        matches!(self, Curve::Arc { .. })
    }

    pub fn radius(&self) -> Option<f64> {
        match *self {
            Curve::Arc { radius, .. } => Some(radius),
            Curve::Line { .. } => None,
        }
    }

    /// Closest point of the curve to `p`.
    pub fn project(&self, p: Point) -> Point {
        match *self {
            Curve::Line { from, to } => {
                let d = [to[0] - from[0], to[1] - from[1]];
                let len2 = d[0] * d[0] + d[1] * d[1];
                let t = (((p[0] - from[0]) * d[0] + (p[1] - from[1]) * d[1]) / len2).clamp(0.0, 1.0);
                self.point(t)
            }
            Curve::Arc {
                centre,
                radius,
                start,
                end,
            } => {
                let a = (p[1] - centre[1]).atan2(p[0] - centre[0]);
                let (lo, hi) = if start < end { (start, end) } else { (end, start) };
                if a >= lo && a <= hi {
                    [centre[0] + radius * a.cos(), centre[1] + radius * a.sin()]
                } else {
                    let p0 = self.point(0.0);
                    let p1 = self.point(1.0);
                    if dist(p, p0) <= dist(p, p1) {
                        p0
                    } else {
                        p1
                    }
                }
            }
        }
    }

    pub fn distance(&self, p: Point) -> f64 {
        dist(p, self.project(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPiece {
    pub tag: BoundaryTag,
    pub curve: Curve,
}

impl BoundaryPiece {
    pub fn new(tag: BoundaryTag, curve: Curve) -> Self {
        BoundaryPiece { tag, curve }
    }
}

/// Closed, counter-clockwise chain of tagged boundary pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub pieces: Vec<BoundaryPiece>,
}

impl Domain {
    /// Quarter of a rectangular plate `[0, w] x [0, h]` with a central hole of radius `a`.
    /// Traction is applied on `x = w`; the hole edge is the free curved boundary.
    pub fn plate_with_hole(a: f64, w: f64, h: f64) -> Result<Self> {
        if !(a > 0.0 && w > a && h > a) {
            return Err(Error::Geometry(format!(
                "plate {w} x {h} cannot contain a hole of radius {a}"
            )));
        }
        Ok(Domain {
            pieces: vec![
                BoundaryPiece::new(BoundaryTag::B4, Curve::line([a, 0.0], [w, 0.0])),
                BoundaryPiece::new(BoundaryTag::B1, Curve::line([w, 0.0], [w, h])),
                BoundaryPiece::new(BoundaryTag::B2, Curve::line([w, h], [0.0, h])),
                BoundaryPiece::new(BoundaryTag::B5, Curve::line([0.0, h], [0.0, a])),
                BoundaryPiece::new(BoundaryTag::B3, Curve::arc([0.0, 0.0], a, FRAC_PI_2, 0.0)),
            ],
        })
    }

    /// Smallest arc radius, i.e. the finest geometric feature the mesh must resolve.
    pub fn min_radius(&self) -> Option<f64> {
        self.pieces
            .iter()
            .filter_map(|p| p.curve.radius())
            .min_by(f64::total_cmp)
    }

    /// Distance from `p` to the nearest arc piece, `None` for purely polygonal domains.
    pub fn distance_to_arcs(&self, p: Point) -> Option<f64> {
        self.pieces
            .iter()
            .filter(|piece| piece.curve.is_arc())
            .map(|piece| piece.curve.distance(p))
            .min_by(f64::total_cmp)
    }

    pub fn check_closed(&self) -> Result<()> {
        let n = self.pieces.len();
        if n < 3 {
            return Err(Error::Geometry("boundary needs at least three pieces".into()));
        }
        for i in 0..n {
            let end = self.pieces[i].curve.point(1.0);
            let next = self.pieces[(i + 1) % n].curve.point(0.0);
            if dist(end, next) > 1e-12 * (1.0 + end[0].abs() + end[1].abs()) {
                return Err(Error::Geometry(format!(
                    "boundary pieces {i} and {} do not connect",
                    (i + 1) % n
                )));
            }
        }
        Ok(())
    }
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: SpecimenKind, radius: f64) -> GeometryConfig {
        GeometryConfig {
            kind,
            w_max_in: 2.25,
            w_min_in: 1.5,
            notch_radius_in: radius,
            half_length_in: 3.0,
            thickness_in: 0.09,
        }
    }

    #[test]
    fn blunt_and_sharp_notches_validate() {
        for r in [0.76, 0.03125] {
            let g = SpecimenGeometry::from_config(&cfg(SpecimenKind::EdgeNotched, r)).unwrap();
            assert_eq!(g.notch_radius, r);
            g.domain().check_closed().unwrap();
        }
    }

    #[test]
    fn equal_widths_give_a_rectangle() {
        let g = SpecimenGeometry::rectangle(1.0, 2.0, 0.09).unwrap();
        let d = g.domain();
        assert_eq!(d.pieces.len(), 4);
        assert!(d.min_radius().is_none());
        d.check_closed().unwrap();
    }

    #[test]
    fn inconsistent_dimensions_name_the_constraint() {
        let mut c = cfg(SpecimenKind::EdgeNotched, 0.76);
        c.w_min_in = 3.0;
        let err = SpecimenGeometry::from_config(&c).unwrap_err().to_string();
        assert!(err.contains("w_min"), "{err}");

        let mut c = cfg(SpecimenKind::EdgeNotched, 0.76);
        c.thickness_in = 0.0;
        let err = SpecimenGeometry::from_config(&c).unwrap_err().to_string();
        assert!(err.contains("thickness"), "{err}");

        let mut c = cfg(SpecimenKind::EdgeNotched, 0.76);
        c.half_length_in = 1.0;
        let err = SpecimenGeometry::from_config(&c).unwrap_err().to_string();
        assert!(err.contains("half_length"), "{err}");
    }

    #[test]
    fn presets_are_valid_and_closed() {
        for g in [
            SpecimenGeometry::specimen1(),
            SpecimenGeometry::specimen2(),
            SpecimenGeometry::specimen3(),
        ] {
            g.validate().unwrap();
            g.domain().check_closed().unwrap();
            assert_eq!(g.thickness, 0.09);
        }
    }

    #[test]
    fn arc_projection_lands_on_the_circle() {
        let c = Curve::arc([0.0, 1.0], 0.5, 0.0, -FRAC_PI_2);
        let p = c.project([0.2, 0.8]);
        assert!((dist(p, [0.0, 1.0]) - 0.5).abs() < 1e-14);
        let q = Domain::plate_with_hole(1.0, 5.0, 5.0).unwrap();
        q.check_closed().unwrap();
    }
}
