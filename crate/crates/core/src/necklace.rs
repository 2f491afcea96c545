//! Pearl necklaces: cyclic chains of round spheres, consecutive ones tangent,
//! all others disjoint, whose balls cover a tame template knot.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{classify, Point3, RoundSphere, SphereRelation};
use crate::knot::{validate, KnotError, PolygonalKnot};

/// Coverage sampling density used by [`verify`].
pub const DEFAULT_SAMPLES_PER_PEARL: usize = 100;
/// The builder doubles the pearl count at most this many times.
pub const MAX_RETRIES: u32 = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NecklaceError {
    #[error(transparent)]
    Knot(#[from] KnotError),
    #[error("template knot is not simple")]
    NotSimple,
    #[error("a necklace needs at least 3 pearls, got {0}")]
    TooFewPearls(usize),
    #[error("tangency solve produced a non-positive radius at pearl {index}")]
    NegativeRadius { index: usize },
    #[error("no consistent tangency radii for {count} pearls")]
    Unsolvable { count: usize },
    #[error("cannot subordinate a necklace to this knot (tried up to {last_count} pearls)")]
    CannotSubordinate { last_count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNecklace")]
pub struct PearlNecklace {
    pearls: Vec<RoundSphere>,
    template: PolygonalKnot,
}

#[derive(Deserialize)]
struct RawNecklace {
    pearls: Vec<RoundSphere>,
    template: PolygonalKnot,
}

impl TryFrom<RawNecklace> for PearlNecklace {
    type Error = NecklaceError;

    fn try_from(raw: RawNecklace) -> Result<Self, Self::Error> {
        PearlNecklace::new(raw.pearls, raw.template)
    }
}

impl PearlNecklace {
    /// Wraps pearls and template without checking tangency; see [`verify`].
    pub fn new(pearls: Vec<RoundSphere>, template: PolygonalKnot) -> Result<Self, NecklaceError> {
        if pearls.len() < 3 {
            return Err(NecklaceError::TooFewPearls(pearls.len()));
        }
        Ok(PearlNecklace { pearls, template })
    }

    pub fn pearls(&self) -> &[RoundSphere] {
        &self.pearls
    }

    pub fn pearl(&self, i: usize) -> &RoundSphere {
        &self.pearls[i]
    }

    pub fn template(&self) -> &PolygonalKnot {
        &self.template
    }

    pub fn len(&self) -> usize {
        self.pearls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pearls.is_empty()
    }

    pub fn next(&self, i: usize) -> usize {
        (i + 1) % self.len()
    }

    pub fn prev(&self, i: usize) -> usize {
        (i + self.len() - 1) % self.len()
    }

    /// Contact point of pearl `i` with pearl `i + 1`.
    pub fn tangency(&self, i: usize) -> Point3 {
        let a = &self.pearls[i];
        let b = &self.pearls[self.next(i)];
        a.center.lerp(b.center, a.radius / (a.radius + b.radius))
    }

    pub fn tangency_points(&self) -> Vec<Point3> {
        (0..self.len()).map(|i| self.tangency(i)).collect()
    }

    pub fn max_diameter(&self) -> f64 {
        self.pearls
            .iter()
            .map(RoundSphere::diameter)
            .fold(0.0, f64::max)
    }

    /// Replace the pearls, keeping the template. Meant for perturbation experiments.
    pub fn with_pearls(&self, pearls: Vec<RoundSphere>) -> Result<Self, NecklaceError> {
        PearlNecklace::new(pearls, self.template.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NecklaceReport {
    pub n: usize,
    pub max_tangency_error: f64,
    /// `None` when every pair of pearls is adjacent (n = 3).
    pub min_separation_margin: Option<f64>,
    pub covered: bool,
    pub arcs_connected: bool,
    pub valid: bool,
}

/// Build a necklace of roughly `pearl_count_hint` pearls centered on `knot`.
///
/// Centers are placed at equal arc length and the radii solve the cyclic
/// system `r_i + r_{i+1} = |c_i - c_{i+1}|` exactly. For an even count that
/// system is only solvable when the alternating chord sum vanishes, so the
/// even-indexed centers are slid along the knot by a common offset until it
/// does; the remaining free parameter is fixed by least squares against the
/// half chords. The resulting template alternates centers and contact points.
/// On failure the count doubles, up to [`MAX_RETRIES`] times.
pub fn build(
    knot: &PolygonalKnot,
    pearl_count_hint: usize,
) -> Result<PearlNecklace, NecklaceError> {
    if pearl_count_hint < 3 {
        return Err(NecklaceError::TooFewPearls(pearl_count_hint));
    }
    if !validate(knot)?.is_simple {
        return Err(NecklaceError::NotSimple);
    }
    let mut count = pearl_count_hint;
    for attempt in 0..=MAX_RETRIES {
        if attempt > 0 {
            count *= 2;
        }
        match build_exact(knot, count) {
            Ok(necklace) if verify(&necklace, crate::geometry::ALGEBRAIC_TOL).valid => {
                return Ok(necklace)
            }
            Ok(_)
            | Err(NecklaceError::NegativeRadius { .. })
            | Err(NecklaceError::Unsolvable { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(NecklaceError::CannotSubordinate { last_count: count })
}

/// One attempt of [`build`] at a fixed pearl count, without verification or retries.
pub fn build_exact(knot: &PolygonalKnot, count: usize) -> Result<PearlNecklace, NecklaceError> {
    if count < 3 {
        return Err(NecklaceError::TooFewPearls(count));
    }
    let length = knot.total_length();
    let step = length / count as f64;

    let centers_at = |shift: f64| -> Vec<Point3> {
        let positions: Vec<f64> = (0..count)
            .map(|i| step * i as f64 + if i % 2 == 0 { shift } else { 0.0 })
            .collect();
        knot.points_at(&positions)
    };

    let (centers, radii) = if count % 2 == 1 {
        let centers = centers_at(0.0);
        let chords = cyclic_chords(&centers);
        let alt: f64 = alternating_sum(&chords);
        let mut radii = Vec::with_capacity(count);
        radii.push(alt / 2.0);
        for i in 0..count - 1 {
            radii.push(chords[i] - radii[i]);
        }
        (centers, radii)
    } else {
        let residual = |shift: f64| alternating_sum(&cyclic_chords(&centers_at(shift)));
        let shift = if residual(0.0).abs() <= 1e-14 * length {
            0.0
        } else {
            let (mut lo, mut hi) = (-0.45 * step, 0.45 * step);
            let (f_lo, f_hi) = (residual(lo), residual(hi));
            if f_lo.signum() == f_hi.signum() {
                return Err(NecklaceError::Unsolvable { count });
            }
            let lo_positive = f_lo > 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid == lo || mid == hi {
                    break;
                }
                if (residual(mid) > 0.0) == lo_positive {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if residual(lo).abs() < residual(hi).abs() {
                lo
            } else {
                hi
            }
        };
        let centers = centers_at(shift);
        let chords = cyclic_chords(&centers);
        // r_i = base_i + sign_i * t
        let mut base = vec![0.0; count];
        let mut sign = vec![1.0; count];
        for i in 0..count - 1 {
            base[i + 1] = chords[i] - base[i];
            sign[i + 1] = -sign[i];
        }
        let t = (0..count)
            .map(|i| sign[i] * (chords[i] / 2.0 - base[i]))
            .sum::<f64>()
            / count as f64;
        let radii = (0..count).map(|i| base[i] + sign[i] * t).collect();
        (centers, radii)
    };

    if let Some(index) = radii.iter().position(|&r| r.is_nan() || r <= 0.0) {
        return Err(NecklaceError::NegativeRadius { index });
    }
    let pearls: Vec<RoundSphere> = centers
        .iter()
        .zip(&radii)
        .map(|(&c, &r)| {
            RoundSphere::new(c, r).map_err(|_| NecklaceError::NegativeRadius { index: 0 })
        })
        .collect::<Result<_, _>>()?;

    let mut vertices = Vec::with_capacity(2 * count);
    for i in 0..count {
        let j = (i + 1) % count;
        vertices.push(centers[i]);
        vertices.push(centers[i].lerp(centers[j], radii[i] / (radii[i] + radii[j])));
    }
    PearlNecklace::new(pearls, PolygonalKnot::new(vertices)?)
}

fn cyclic_chords(centers: &[Point3]) -> Vec<f64> {
    let n = centers.len();
    (0..n)
        .map(|i| centers[i].distance(centers[(i + 1) % n]))
        .collect()
}

fn alternating_sum(values: &[f64]) -> f64 {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { *v } else { -*v })
        .sum()
}

pub fn verify(necklace: &PearlNecklace, tol: f64) -> NecklaceReport {
    verify_with_density(necklace, tol, DEFAULT_SAMPLES_PER_PEARL)
}

pub fn verify_with_density(
    necklace: &PearlNecklace,
    tol: f64,
    samples_per_pearl: usize,
) -> NecklaceReport {
    let n = necklace.len();
    let pearls = necklace.pearls();

    let max_tangency_error = (0..n)
        .map(|i| {
            let (a, b) = (&pearls[i], &pearls[necklace.next(i)]);
            let sum = a.radius + b.radius;
            (a.center.distance(b.center) - sum).abs() / sum
        })
        .fold(0.0, f64::max);

    let min_separation_margin = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let last = if i == 0 { n - 1 } else { n };
            (i + 2..last).map(move |j| {
                let (a, b) = (&pearls[i], &pearls[j]);
                a.center.distance(b.center) - (a.radius + b.radius)
            })
        })
        .reduce_with(f64::min);

    let samples = sample_polyline(necklace.template(), samples_per_pearl.max(1) * n);
    let inside = points_inside_balls(pearls, &samples, tol);

    let mut hit = vec![false; samples.len()];
    let mut arcs_connected = true;
    for members in &inside {
        for &s in members {
            hit[s] = true;
        }
        if cyclic_runs(members, samples.len()) != 1 {
            arcs_connected = false;
        }
    }
    let covered = hit.iter().all(|&h| h);

    let valid = max_tangency_error <= tol
        && min_separation_margin.is_none_or(|m| m > 0.0)
        && covered
        && arcs_connected;
    NecklaceReport {
        n,
        max_tangency_error,
        min_separation_margin,
        covered,
        arcs_connected,
        valid,
    }
}

/// Vertices plus interior points so that consecutive samples are at most `L / count` apart.
fn sample_polyline(knot: &PolygonalKnot, count: usize) -> Vec<Point3> {
    let spacing = knot.total_length() / count as f64;
    let mut out = Vec::with_capacity(count + knot.len());
    for (a, b) in knot.edges() {
        let pieces = ((a.distance(b) / spacing).ceil() as usize).max(1);
        for j in 0..pieces {
            out.push(a.lerp(b, j as f64 / pieces as f64));
        }
    }
    out
}

/// For each ball, the sorted indices of samples it contains.
fn points_inside_balls(balls: &[RoundSphere], samples: &[Point3], tol: f64) -> Vec<Vec<usize>> {
    let cell = balls
        .iter()
        .map(|b| b.radius)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let key = |p: Point3| {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in samples.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    balls
        .par_iter()
        .map(|ball| {
            let reach = ball.radius * (1.0 + tol);
            let lo = key(ball.center - Point3::new(reach, reach, reach));
            let hi = key(ball.center + Point3::new(reach, reach, reach));
            let mut members = Vec::new();
            for x in lo.0..=hi.0 {
                for y in lo.1..=hi.1 {
                    for z in lo.2..=hi.2 {
                        if let Some(ids) = grid.get(&(x, y, z)) {
                            members.extend(
                                ids.iter()
                                    .copied()
                                    .filter(|&i| ball.ball_contains_point(samples[i], tol)),
                            );
                        }
                    }
                }
            }
            members.sort_unstable();
            members
        })
        .collect()
}

/// Number of maximal cyclic runs in a sorted index set over `0..total`.
fn cyclic_runs(sorted: &[usize], total: usize) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    if sorted.len() == total {
        return 1;
    }
    let mut runs = 0;
    for (k, &i) in sorted.iter().enumerate() {
        let prev = (i + total - 1) % total;
        let prev_present = if k > 0 {
            sorted[k - 1] == prev
        } else {
            sorted.last() == Some(&prev)
        };
        if !prev_present {
            runs += 1;
        }
    }
    runs
}

/// `m` equal pearls orthogonal to the unit circle in the plane `z = 0`.
///
/// The template is the regular `2m`-gon inscribed in the unit circle whose
/// vertices are the contact points and the pearls' crossings of the circle.
pub fn fuchsian(m: usize) -> Result<PearlNecklace, NecklaceError> {
    if m < 3 {
        return Err(NecklaceError::TooFewPearls(m));
    }
    let half = PI / m as f64;
    let d = 1.0 / half.cos();
    let r = d * half.sin();
    let pearls = (0..m)
        .map(|k| {
            let a = 2.0 * half * k as f64;
            RoundSphere::new(Point3::new(d * a.cos(), d * a.sin(), 0.0), r)
                .expect("positive radius")
        })
        .collect();
    let vertices = (0..2 * m)
        .map(|j| {
            let a = half * j as f64;
            Point3::new(a.cos(), a.sin(), 0.0)
        })
        .collect();
    PearlNecklace::new(pearls, PolygonalKnot::new(vertices)?)
}

/// Whether `p` lies in the filling, the union of the closed balls.
pub fn filling_contains(necklace: &PearlNecklace, p: Point3) -> bool {
    necklace
        .pearls()
        .iter()
        .any(|b| b.ball_contains_point(p, 1e-12))
}

/// Pairwise relations of consecutive pearls, mostly for diagnostics.
pub fn consecutive_relations(necklace: &PearlNecklace, tol: f64) -> Vec<SphereRelation> {
    (0..necklace.len())
        .map(|i| classify(necklace.pearl(i), necklace.pearl(necklace.next(i)), tol))
        .collect()
}
