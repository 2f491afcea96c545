//! Closed polygonal knots in R^3.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KnotError {
    #[error("a knot needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("vertex {0} is not finite")]
    NonFinite(usize),
    #[error("edge {0} has zero length")]
    DegenerateEdge(usize),
    #[error("step {step} is larger than a third of the total length {length}")]
    StepTooLarge { step: f64, length: f64 },
    #[error("unknown built-in knot `{0}`")]
    UnknownBuiltin(String),
}

/// Cyclic sequence of vertices; the edge `i` joins vertex `i` to vertex `i + 1 mod n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKnot")]
pub struct PolygonalKnot {
    vertices: Vec<Point3>,
}

#[derive(Deserialize)]
struct RawKnot {
    vertices: Vec<Point3>,
}

impl TryFrom<RawKnot> for PolygonalKnot {
    type Error = KnotError;

    fn try_from(raw: RawKnot) -> Result<Self, Self::Error> {
        PolygonalKnot::new(raw.vertices)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearanceReport {
    pub min_nonadjacent_distance: f64,
    pub min_edge_length: f64,
    pub is_simple: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinKnot {
    Trefoil,
    FigureEight,
    RoundCircle,
}

impl FromStr for BuiltinKnot {
    type Err = KnotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trefoil" => Ok(BuiltinKnot::Trefoil),
            "figure_eight" | "figure-eight" => Ok(BuiltinKnot::FigureEight),
            "round_circle" | "circle" => Ok(BuiltinKnot::RoundCircle),
            other => Err(KnotError::UnknownBuiltin(other.to_string())),
        }
    }
}

impl fmt::Display for BuiltinKnot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BuiltinKnot::Trefoil => "trefoil",
            BuiltinKnot::FigureEight => "figure_eight",
            BuiltinKnot::RoundCircle => "round_circle",
        })
    }
}

impl PolygonalKnot {
    /// Checks vertex count and finiteness only; simplicity is reported by [`validate`].
    pub fn new(vertices: Vec<Point3>) -> Result<Self, KnotError> {
        if vertices.len() < 3 {
            return Err(KnotError::TooFewVertices(vertices.len()));
        }
        if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
            return Err(KnotError::NonFinite(i));
        }
        Ok(PolygonalKnot { vertices })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edge(&self, i: usize) -> (Point3, Point3) {
        let n = self.vertices.len();
        (self.vertices[i % n], self.vertices[(i + 1) % n])
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point3, Point3)> + '_ {
        (0..self.len()).map(move |i| self.edge(i))
    }

    pub fn total_length(&self) -> f64 {
        self.edges().map(|(a, b)| a.distance(b)).sum()
    }

    /// Cumulative arc length at each vertex, starting at 0; the final entry is the total length.
    pub fn arc_lengths(&self) -> Vec<f64> {
        let mut acc = Vec::with_capacity(self.len() + 1);
        let mut s = 0.0;
        acc.push(s);
        for (a, b) in self.edges() {
            s += a.distance(b);
            acc.push(s);
        }
        acc
    }

    /// Point at arc length `s` (taken modulo the total length) from vertex 0.
    pub fn point_at(&self, s: f64) -> Point3 {
        let arcs = self.arc_lengths();
        point_on(&self.vertices, &arcs, s)
    }

    /// Points at the given arc lengths; sorts nothing, expects any order.
    pub fn points_at(&self, positions: &[f64]) -> Vec<Point3> {
        let arcs = self.arc_lengths();
        positions
            .iter()
            .map(|&s| point_on(&self.vertices, &arcs, s))
            .collect()
    }

    /// Same cycle starting from vertex `k`.
    pub fn rotated(&self, k: usize) -> PolygonalKnot {
        let mut v = self.vertices.clone();
        v.rotate_left(k % self.len());
        PolygonalKnot { vertices: v }
    }

    pub fn bounding_diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                best = best.max(a.distance(*b));
            }
        }
        best
    }
}

fn point_on(vertices: &[Point3], arcs: &[f64], s: f64) -> Point3 {
    let total = *arcs.last().unwrap();
    let s = s.rem_euclid(total);
    // first edge whose end is past s
    let i = arcs
        .partition_point(|&a| a <= s)
        .saturating_sub(1)
        .min(vertices.len() - 1);
    let len = arcs[i + 1] - arcs[i];
    let a = vertices[i];
    let b = vertices[(i + 1) % vertices.len()];
    if len == 0.0 {
        return a;
    }
    a.lerp(b, ((s - arcs[i]) / len).clamp(0.0, 1.0))
}

/// Exact distance between the closed segments `p1q1` and `p2q2`.
pub fn segment_distance(p1: Point3, q1: Point3, p2: Point3, q2: Point3) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(r);

    let (s, t) = if a <= f64::EPSILON && e <= f64::EPSILON {
        (0.0, 0.0)
    } else if a <= f64::EPSILON {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = d1.dot(r);
        if e <= f64::EPSILON {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = d1.dot(d2);
            let denom = a * e - b * b;
            let mut s = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };
    (p1 + d1 * s).distance(p2 + d2 * t)
}

fn point_segment_distance(p: Point3, a: Point3, b: Point3) -> f64 {
    segment_distance(p, p, a, b)
}

/// Exact clearance of the closed polyline.
///
/// Non-adjacent edge pairs are compared with the exact segment distance. Two
/// adjacent edges that fold back onto each other overlap along a segment, which
/// is reported as a clearance of zero. A triangle has no non-adjacent edges, so
/// its clearance is the smallest vertex-to-opposite-edge distance.
pub fn validate(knot: &PolygonalKnot) -> Result<ClearanceReport, KnotError> {
    let n = knot.len();
    if n < 3 {
        return Err(KnotError::TooFewVertices(n));
    }
    let mut min_edge = f64::INFINITY;
    for (i, (a, b)) in knot.edges().enumerate() {
        let len = a.distance(b);
        if len == 0.0 {
            return Err(KnotError::DegenerateEdge(i));
        }
        min_edge = min_edge.min(len);
    }

    let mut min_dist = f64::INFINITY;
    if n == 3 {
        for i in 0..3 {
            let (a, b) = knot.edge(i + 1);
            min_dist = min_dist.min(point_segment_distance(knot.vertices[i], a, b));
        }
    } else {
        for i in 0..n {
            let (a, b) = knot.edge(i);
            // j ranges over edges that share no vertex with edge i
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (c, d) = knot.edge(j);
                min_dist = min_dist.min(segment_distance(a, b, c, d));
            }
        }
    }

    for i in 0..n {
        let (a, b) = knot.edge(i);
        let (_, c) = knot.edge(i + 1);
        let u = b - a;
        let v = c - b;
        let folded = u.cross(v).norm() <= 1e-12 * u.norm() * v.norm() && u.dot(v) < 0.0;
        if folded {
            min_dist = 0.0;
        }
    }

    Ok(ClearanceReport {
        min_nonadjacent_distance: min_dist,
        min_edge_length: min_edge,
        is_simple: min_dist > 0.0,
    })
}

/// Equal arc-length resampling with `round(L / target_step)` vertices, starting at vertex 0.
pub fn resample(knot: &PolygonalKnot, target_step: f64) -> Result<PolygonalKnot, KnotError> {
    let length = knot.total_length();
    // a hair of slack so that exactly L/3 is accepted despite rounding
    if target_step.is_nan() || target_step <= 0.0 || target_step > length / 3.0 * (1.0 + 1e-12) {
        return Err(KnotError::StepTooLarge {
            step: target_step,
            length,
        });
    }
    let count = ((length / target_step).round() as usize).max(3);
    Ok(resample_count(knot, count))
}

/// Equal arc-length resampling with exactly `count` vertices.
pub fn resample_count(knot: &PolygonalKnot, count: usize) -> PolygonalKnot {
    let length = knot.total_length();
    let positions: Vec<f64> = (0..count)
        .map(|j| length * j as f64 / count as f64)
        .collect();
    PolygonalKnot {
        vertices: knot.points_at(&positions),
    }
}

pub fn builtin(kind: BuiltinKnot) -> PolygonalKnot {
    let (steps, f): (usize, fn(f64) -> Point3) = match kind {
        BuiltinKnot::Trefoil => (120, |t| {
            let r = 2.0 + (3.0 * t).cos();
            Point3::new(r * (2.0 * t).cos(), r * (2.0 * t).sin(), (3.0 * t).sin())
        }),
        BuiltinKnot::FigureEight => (160, |t| {
            let r = 2.0 + (2.0 * t).cos();
            Point3::new(r * (3.0 * t).cos(), r * (3.0 * t).sin(), (4.0 * t).sin())
        }),
        BuiltinKnot::RoundCircle => (64, |t| Point3::new(t.cos(), t.sin(), 0.0)),
    };
    let vertices = (0..steps)
        .map(|i| f(TAU * i as f64 / steps as f64))
        .collect();
    PolygonalKnot { vertices }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn square() -> PolygonalKnot {
        PolygonalKnot::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ])
        .unwrap()
    }

    #[test]
    fn square_clearance() {
        let r = validate(&square()).unwrap();
        assert_eq!(r.min_nonadjacent_distance, 1.0);
        assert_eq!(r.min_edge_length, 1.0);
        assert!(r.is_simple);
    }

    #[test]
    fn bowtie_is_not_simple() {
        let k = PolygonalKnot::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ])
        .unwrap();
        let r = validate(&k).unwrap();
        assert_eq!(r.min_nonadjacent_distance, 0.0);
        assert!(!r.is_simple);
    }

    #[test]
    fn folded_edges_are_not_simple() {
        let k = PolygonalKnot::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
        ])
        .unwrap();
        assert!(!validate(&k).unwrap().is_simple);
    }

    #[test]
    fn degenerate_edge_is_an_error() {
        let k = PolygonalKnot::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
        ])
        .unwrap();
        assert_eq!(validate(&k), Err(KnotError::DegenerateEdge(0)));
    }

    #[test]
    fn triangle_clearance_is_its_smallest_height() {
        let k = PolygonalKnot::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(4.0, 0.0, 0.0),
            Point3::new(0.0, 3.0, 0.0),
        ])
        .unwrap();
        let r = validate(&k).unwrap();
        assert_abs_diff_eq!(r.min_nonadjacent_distance, 12.0 / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn too_few_or_non_finite_vertices() {
        assert_eq!(
            PolygonalKnot::new(vec![Point3::ORIGIN, Point3::new(1.0, 0.0, 0.0)]),
            Err(KnotError::TooFewVertices(2))
        );
        assert!(serde_json::from_str::<PolygonalKnot>(
            r#"{"vertices":[[0,0,0],[1,0,0],[0,1e999,0]]}"#
        )
        .is_err());
        assert!(
            serde_json::from_str::<PolygonalKnot>(r#"{"vertices":[[0,0,0],[1,0,0]]}"#).is_err()
        );
    }

    #[test]
    fn segment_distance_cases() {
        let o = Point3::ORIGIN;
        let x = Point3::new(1.0, 0.0, 0.0);
        // skew
        let d = segment_distance(
            o,
            x,
            Point3::new(0.5, -1.0, 2.0),
            Point3::new(0.5, 1.0, 2.0),
        );
        assert_abs_diff_eq!(d, 2.0, epsilon = 1e-15);
        // parallel, offset
        let d = segment_distance(o, x, Point3::new(3.0, 1.0, 0.0), Point3::new(4.0, 1.0, 0.0));
        assert_abs_diff_eq!(d, 5.0f64.sqrt(), epsilon = 1e-15);
        // crossing
        let d = segment_distance(
            o,
            x,
            Point3::new(0.5, -1.0, 0.0),
            Point3::new(0.5, 1.0, 0.0),
        );
        assert_eq!(d, 0.0);
    }

    #[test]
    fn resample_square() {
        let r = resample(&square(), 0.5).unwrap();
        assert_eq!(r.len(), 8);
        let arcs = square().arc_lengths();
        let expected = square().points_at(&(0..8).map(|j| 0.5 * j as f64).collect::<Vec<_>>());
        for (p, q) in r.vertices().iter().zip(&expected) {
            assert!(p.distance(*q) < 1e-15);
        }
        assert_eq!(arcs.last().copied(), Some(4.0));
        assert_eq!(r.vertices()[2], Point3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn resample_minimum_and_too_large() {
        let t = builtin(BuiltinKnot::Trefoil);
        let l = t.total_length();
        assert_eq!(resample(&t, l / 3.0).unwrap().len(), 3);
        assert!(matches!(
            resample(&t, l / 2.0),
            Err(KnotError::StepTooLarge { .. })
        ));
        assert!(matches!(
            resample(&t, 0.0),
            Err(KnotError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn trefoil_resample_has_even_chords() {
        let fine = resample_count(&builtin(BuiltinKnot::Trefoil), 200);
        let l = fine.total_length();
        let coarse = resample(&fine, l / 50.0).unwrap();
        assert_eq!(coarse.len(), 50);
        let chords: Vec<f64> = coarse.edges().map(|(a, b)| a.distance(b)).collect();
        let lo = chords.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = chords.iter().cloned().fold(0.0, f64::max);
        assert!(hi <= 1.2 * lo, "chords range {lo}..{hi}");
        // arc-length oracle: every vertex sits at j*L/50 along the fine polyline
        for (j, p) in coarse.vertices().iter().enumerate() {
            let q = fine.point_at(l * j as f64 / 50.0);
            assert!(p.distance(q) < 1e-12);
        }
    }

    #[test]
    fn builtins() {
        let c = builtin(BuiltinKnot::RoundCircle);
        assert_eq!(c.len(), 64);
        for p in c.vertices() {
            assert!((p.norm() - 1.0).abs() <= 1e-12);
            assert_eq!(p.z, 0.0);
        }
        let t = builtin(BuiltinKnot::Trefoil);
        assert_eq!(t.len(), 120);
        let r = validate(&t).unwrap();
        assert!(r.is_simple && r.min_nonadjacent_distance > 0.0);
        let f = builtin(BuiltinKnot::FigureEight);
        assert_eq!(f.len(), 160);
        assert!(validate(&f).unwrap().is_simple);
        assert_eq!(builtin(BuiltinKnot::Trefoil), t);
    }

    #[test]
    fn builtin_names_parse() {
        assert_eq!(
            "trefoil".parse::<BuiltinKnot>().unwrap(),
            BuiltinKnot::Trefoil
        );
        assert_eq!(
            "circle".parse::<BuiltinKnot>().unwrap(),
            BuiltinKnot::RoundCircle
        );
        assert!("unknot".parse::<BuiltinKnot>().is_err());
    }

    proptest! {
        #[test]
        fn validate_ignores_starting_vertex(k in 0usize..120) {
            let t = builtin(BuiltinKnot::Trefoil);
            let a = validate(&t).unwrap();
            let b = validate(&t.rotated(k)).unwrap();
            prop_assert!((a.min_nonadjacent_distance - b.min_nonadjacent_distance).abs() < 1e-12);
            prop_assert!((a.min_edge_length - b.min_edge_length).abs() < 1e-12);
            prop_assert_eq!(a.is_simple, b.is_simple);
        }

        #[test]
        fn resample_keeps_length(divisor in 20.0..200.0f64, b in 0.75..1.0f64, tilt in 0.0..1.0f64) {
            // finely sampled tilted ellipses; tightly wound knots lose more than 1% at L/20
            let k = PolygonalKnot::new(
                (0..400)
                    .map(|i| {
                        let t = TAU * i as f64 / 400.0;
                        Point3::new(t.cos(), b * t.sin(), tilt * t.cos())
                    })
                    .collect(),
            )
            .unwrap();
            let l = k.total_length();
            let r = resample(&k, l / divisor).unwrap();
            prop_assert!((r.total_length() - l).abs() <= 0.01 * l);
        }
    }
}
