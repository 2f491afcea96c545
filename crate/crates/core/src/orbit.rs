//! Orbits of the reflection group of a necklace.
//!
//! The group is generated by the inversions `I_0, ..., I_{n-1}` in the pearls.
//! Its elements are reduced words (no letter repeated twice in a row). A stage
//! pearl `(w, i)` is the image `w(Σ_i)` with `i` different from the last
//! letter of `w`; its parent is `(w[..k-1], w[k-1])`, and its ball sits inside
//! the parent's ball. Stage `k` holds `n(n-1)^k` pearls.

use std::fmt;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::census::{self, CensusError};
use crate::geometry::{
    ball_contains, classify, invert_point, invert_sphere, GeometryError, Point3, RoundSphere,
    SphereRelation, STAGE_TOL,
};
use crate::knot::{KnotError, PolygonalKnot};
use crate::necklace::{filling_contains, PearlNecklace};

/// Default cap on the number of pearls a single computation may create.
pub const DEFAULT_BUDGET: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("computation needs {needed} pearls, budget is {cap}")]
    BudgetExceeded { needed: u128, cap: usize },
    #[error(transparent)]
    Overflow(#[from] CensusError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("letter {letter} is out of range for {n} generators")]
    LetterOutOfRange { letter: u32, n: usize },
    #[error("letters {0} repeat at position {1}; words must be reduced")]
    NotReduced(u32, usize),
    #[error("consecutive pearls at template position {position} are not tangent ({relation:?})")]
    OrderingFailure {
        position: usize,
        relation: SphereRelation,
    },
    #[error("stage depths {child} and {parent} are not consecutive")]
    StageMismatch { child: usize, parent: usize },
    #[error("starting point lies inside the filling")]
    InsideFilling,
    #[error("at least 3 generators are needed, got {0}")]
    TooFewGenerators(usize),
    #[error("refinement scale must be positive")]
    BadEpsilon,
    #[error(transparent)]
    Knot(#[from] KnotError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// A word in the involutive generators with no letter repeated consecutively.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct ReducedWord {
    letters: Vec<u32>,
}

impl TryFrom<Vec<u32>> for ReducedWord {
    type Error = OrbitError;

    fn try_from(letters: Vec<u32>) -> Result<Self, Self::Error> {
        ReducedWord::new(letters)
    }
}

impl From<ReducedWord> for Vec<u32> {
    fn from(w: ReducedWord) -> Self {
        w.letters
    }
}

impl ReducedWord {
    pub fn new(letters: Vec<u32>) -> Result<Self, OrbitError> {
        if let Some(i) = letters.windows(2).position(|p| p[0] == p[1]) {
            return Err(OrbitError::NotReduced(letters[i], i));
        }
        Ok(ReducedWord { letters })
    }

    pub fn identity() -> Self {
        ReducedWord::default()
    }

    pub fn letters(&self) -> &[u32] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn first(&self) -> Option<u32> {
        self.letters.first().copied()
    }

    pub fn last(&self) -> Option<u32> {
        self.letters.last().copied()
    }

    pub fn parity(&self) -> Parity {
        if self.letters.len().is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    /// Even words compose an even number of reflections.
    pub fn preserves_orientation(&self) -> bool {
        self.parity() == Parity::Even
    }

    /// `self` followed by `letter`, if the result is still reduced.
    pub fn appended(&self, letter: u32) -> Option<ReducedWord> {
        if self.last() == Some(letter) {
            return None;
        }
        let mut letters = Vec::with_capacity(self.len() + 1);
        letters.extend_from_slice(&self.letters);
        letters.push(letter);
        Some(ReducedWord { letters })
    }

    /// `letter` followed by `self`, if the result is still reduced.
    pub fn prepended(&self, letter: u32) -> Option<ReducedWord> {
        if self.first() == Some(letter) {
            return None;
        }
        let mut letters = Vec::with_capacity(self.len() + 1);
        letters.push(letter);
        letters.extend_from_slice(&self.letters);
        Some(ReducedWord { letters })
    }

    pub fn prefix(&self, len: usize) -> ReducedWord {
        ReducedWord {
            letters: self.letters[..len].to_vec(),
        }
    }

    fn check_range(&self, n: usize) -> Result<(), OrbitError> {
        match self.letters.iter().find(|&&l| l as usize >= n) {
            Some(&letter) => Err(OrbitError::LetterOutOfRange { letter, n }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for ReducedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return f.write_str("e");
        }
        let parts: Vec<String> = self.letters.iter().map(|l| format!("I{l}")).collect();
        f.write_str(&parts.join("·"))
    }
}

/// Position of `letter` among the `n - 1` letters different from `prev`.
fn skip_rank(letter: u32, prev: u32) -> usize {
    (letter - u32::from(letter > prev)) as usize
}

/// Lexicographic rank of a reduced word among reduced words of the same length.
fn word_rank(letters: &[u32], n: usize) -> usize {
    let mut rank = 0usize;
    for (t, &l) in letters.iter().enumerate() {
        rank = if t == 0 {
            l as usize
        } else {
            rank * (n - 1) + skip_rank(l, letters[t - 1])
        };
    }
    rank
}

/// All reduced words of length `k` over `n` letters, in lexicographic order.
pub fn enumerate_words(n: usize, k: usize, cap: usize) -> Result<Vec<ReducedWord>, OrbitError> {
    if n < 3 {
        return Err(OrbitError::TooFewGenerators(n));
    }
    let count = if k == 0 {
        1
    } else {
        census::word_count(n as u64, k as u64)?
    };
    if count > cap as u128 {
        return Err(OrbitError::BudgetExceeded { needed: count, cap });
    }
    let mut words = vec![ReducedWord::identity()];
    for _ in 0..k {
        words = words
            .iter()
            .flat_map(|w| (0..n as u32).filter_map(move |l| w.appended(l)))
            .collect();
    }
    Ok(words)
}

/// `I_{w[0]} ∘ ... ∘ I_{w[k-1]}` applied to `s`.
pub fn apply_word(
    necklace: &PearlNecklace,
    word: &ReducedWord,
    s: &RoundSphere,
) -> Result<RoundSphere, OrbitError> {
    word.check_range(necklace.len())?;
    let mut out = *s;
    for &l in word.letters().iter().rev() {
        out = invert_sphere(necklace.pearl(l as usize), &out)?;
    }
    Ok(out)
}

pub fn apply_word_to_point(
    necklace: &PearlNecklace,
    word: &ReducedWord,
    p: Point3,
) -> Result<Point3, OrbitError> {
    word.check_range(necklace.len())?;
    let mut out = p;
    for &l in word.letters().iter().rev() {
        out = invert_point(necklace.pearl(l as usize), out)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePearl {
    pub word: ReducedWord,
    pub base: usize,
    pub sphere: RoundSphere,
}

impl StagePearl {
    /// Word and base of the enclosing pearl one stage up; `None` at stage 0.
    pub fn parent(&self) -> Option<(ReducedWord, usize)> {
        let k = self.word.len();
        let last = self.word.last()?;
        Some((self.word.prefix(k - 1), last as usize))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub k: usize,
    pub n: usize,
    pub pearls: Vec<StagePearl>,
}

impl Stage {
    pub fn len(&self) -> usize {
        self.pearls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pearls.is_empty()
    }

    pub fn max_diameter(&self) -> f64 {
        self.pearls
            .iter()
            .map(|p| p.sphere.diameter())
            .fold(0.0, f64::max)
    }

    /// Position of `(word, base)` in canonical order.
    pub fn index_of(&self, word: &ReducedWord, base: usize) -> Option<usize> {
        if word.len() != self.k || base >= self.n || word.last() == Some(base as u32) {
            return None;
        }
        let idx = match word.last() {
            None => base,
            Some(last) => {
                word_rank(word.letters(), self.n) * (self.n - 1) + skip_rank(base as u32, last)
            }
        };
        (idx < self.pearls.len()).then_some(idx)
    }

    pub fn parent_index(&self, idx: usize) -> Option<usize> {
        (self.k > 0).then(|| idx / (self.n - 1))
    }
}

/// Stage 0: the necklace itself.
pub fn initial_stage(necklace: &PearlNecklace) -> Stage {
    let pearls = necklace
        .pearls()
        .iter()
        .enumerate()
        .map(|(i, s)| StagePearl {
            word: ReducedWord::identity(),
            base: i,
            sphere: *s,
        })
        .collect();
    Stage {
        k: 0,
        n: necklace.len(),
        pearls,
    }
}

/// Stage `k + 1` from stage `k`, by prepending every admissible letter.
pub fn next_stage(necklace: &PearlNecklace, prev: &Stage, cap: usize) -> Result<Stage, OrbitError> {
    let n = necklace.len();
    let needed = census::pearl_count(n as u64, prev.k as u64 + 1)?;
    if needed > cap as u128 {
        return Err(OrbitError::BudgetExceeded { needed, cap });
    }
    // outer loop over the new first letter keeps canonical order
    let blocks: Vec<Vec<StagePearl>> = (0..n as u32)
        .into_par_iter()
        .map(|a| {
            let mirror = necklace.pearl(a as usize);
            prev.pearls
                .iter()
                .filter(|p| p.word.first().unwrap_or(p.base as u32) != a)
                .map(|p| {
                    let word = p.word.prepended(a).expect("first letter differs");
                    Ok(StagePearl {
                        word,
                        base: p.base,
                        sphere: invert_sphere(mirror, &p.sphere)?,
                    })
                })
                .collect::<Result<Vec<_>, OrbitError>>()
        })
        .collect::<Result<_, _>>()?;
    let pearls = blocks.concat();
    debug_assert_eq!(pearls.len() as u128, needed);
    Ok(Stage {
        k: prev.k + 1,
        n,
        pearls,
    })
}

/// The stage-`k` necklace `T_k` with its pearls in canonical order.
pub fn stage(necklace: &PearlNecklace, k: usize, cap: usize) -> Result<Stage, OrbitError> {
    let needed = census::pearl_count(necklace.len() as u64, k as u64)?;
    if needed > cap as u128 {
        return Err(OrbitError::BudgetExceeded { needed, cap });
    }
    let mut current = initial_stage(necklace);
    for _ in 0..k {
        current = next_stage(necklace, &current, cap)?;
    }
    Ok(current)
}

/// Every stage from 0 up to the deepest one that fits in `cap`, capped at `max_k`.
pub fn stages_within_budget(
    necklace: &PearlNecklace,
    max_k: usize,
    cap: usize,
) -> Result<Vec<Stage>, OrbitError> {
    let mut out = vec![initial_stage(necklace)];
    while out.len() <= max_k {
        match next_stage(necklace, out.last().unwrap(), cap) {
            Ok(s) => out.push(s),
            Err(OrbitError::BudgetExceeded { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Each stage-`k` ball lies in its parent's ball, up to relative slack `tol`.
pub fn check_nesting(stage_k: &Stage, stage_km1: &Stage, tol: f64) -> Result<bool, OrbitError> {
    if stage_k.k != stage_km1.k + 1 || stage_k.n != stage_km1.n {
        return Err(OrbitError::StageMismatch {
            child: stage_k.k,
            parent: stage_km1.k,
        });
    }
    Ok(stage_k.pearls.par_iter().all(|p| {
        let Some((word, base)) = p.parent() else {
            return false;
        };
        match stage_km1.index_of(&word, base) {
            Some(i) => ball_contains(&stage_km1.pearls[i].sphere, &p.sphere, tol),
            None => false,
        }
    }))
}

/// Cyclic order of a stage along its template knot, as indices into `stage.pearls`.
///
/// Reflecting into pearl `i` replaces it by the chain of images of the other
/// pearls, traversed against the orientation of the original chain. At even
/// depth the chain entered through the `i - 1` contact runs `i-1, i-2, ..., i+1`;
/// at odd depth it runs `i+1, i+2, ..., i-1`.
pub fn template_order(stage: &Stage) -> Vec<usize> {
    let n = stage.n;
    // (index in its stage, base letter)
    let mut order: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    for depth in 0..stage.k {
        let descending = depth % 2 == 0;
        let mut next = Vec::with_capacity(order.len() * (n - 1));
        for &(idx, base) in &order {
            for step in 1..n {
                let j = if descending {
                    (base + n - step) % n
                } else {
                    (base + step) % n
                };
                next.push((idx * (n - 1) + skip_rank(j as u32, base as u32), j));
            }
        }
        order = next;
    }
    order.into_iter().map(|(idx, _)| idx).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub length: usize,
    pub max_tangency_error: f64,
    pub all_tangent: bool,
}

/// Tangency of consecutive pearls along [`template_order`].
pub fn chain_report(stage: &Stage, tol: f64) -> ChainReport {
    let order = template_order(stage);
    let len = order.len();
    let (max_err, all) = (0..len)
        .into_par_iter()
        .map(|p| {
            let a = &stage.pearls[order[p]].sphere;
            let b = &stage.pearls[order[(p + 1) % len]].sphere;
            let sum = a.radius + b.radius;
            let err = (a.center.distance(b.center) - sum).abs() / sum;
            (
                err,
                classify(a, b, tol) == SphereRelation::ExternallyTangent,
            )
        })
        .reduce(|| (0.0, true), |x, y| (x.0.max(y.0), x.1 && y.1));
    ChainReport {
        length: len,
        max_tangency_error: max_err,
        all_tangent: all,
    }
}

/// The template knot `K_k`: contact points of consecutive pearls in chain order.
pub fn stage_template(stage: &Stage) -> Result<PolygonalKnot, OrbitError> {
    let order = template_order(stage);
    let len = order.len();
    let mut vertices = Vec::with_capacity(len);
    for p in 0..len {
        let a = &stage.pearls[order[p]].sphere;
        let b = &stage.pearls[order[(p + 1) % len]].sphere;
        let relation = classify(a, b, STAGE_TOL);
        if relation != SphereRelation::ExternallyTangent {
            return Err(OrbitError::OrderingFailure {
                position: p,
                relation,
            });
        }
        vertices.push(a.center.lerp(b.center, a.radius / (a.radius + b.radius)));
    }
    Ok(PolygonalKnot::new(vertices)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub position: Point3,
    /// Contact points are exact limit points; centers are within `eps / 2` of one.
    pub exact: bool,
    pub word: ReducedWord,
    pub base: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub eps: f64,
    pub points: Vec<CloudPoint>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Depth-first refinement of the limit set down to pearls of diameter `eps`.
///
/// A pearl `(w, i)` small enough is a leaf: it emits the images under `w` of
/// the two contact points of `Σ_i` and its own center. Larger pearls are
/// replaced by their children `(w·i, j)`. Output is in word order.
pub fn refine(
    necklace: &PearlNecklace,
    eps: f64,
    max_pearls: usize,
) -> Result<PointCloud, OrbitError> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(OrbitError::BadEpsilon);
    }
    let n = necklace.len();
    let created = AtomicUsize::new(0);
    let ctx = RefineCtx {
        necklace,
        eps,
        max_pearls,
        created: &created,
    };
    let roots: Vec<(ReducedWord, usize)> = (0..n).map(|i| (ReducedWord::identity(), i)).collect();
    let parts: Vec<Vec<CloudPoint>> = roots
        .into_par_iter()
        .map(|(w, i)| {
            let mut out = Vec::new();
            ctx.visit(w, i, &mut out)?;
            Ok(out)
        })
        .collect::<Result<_, OrbitError>>()?;
    Ok(PointCloud {
        eps,
        points: parts.concat(),
    })
}

/// Words shorter than this fan out across threads in [`refine`].
const PARALLEL_DEPTH: usize = 3;

struct RefineCtx<'a> {
    necklace: &'a PearlNecklace,
    eps: f64,
    max_pearls: usize,
    created: &'a AtomicUsize,
}

impl RefineCtx<'_> {
    /// Count pearl `(word, base)` and emit it if small enough; otherwise return the children's word.
    fn create(
        &self,
        word: &ReducedWord,
        base: usize,
        out: &mut Vec<CloudPoint>,
    ) -> Result<Option<ReducedWord>, OrbitError> {
        let total = self.created.fetch_add(1, Ordering::Relaxed) + 1;
        if total > self.max_pearls {
            return Err(OrbitError::BudgetExceeded {
                needed: total as u128,
                cap: self.max_pearls,
            });
        }
        let t = self.necklace;
        let sphere = apply_word(t, word, t.pearl(base))?;
        if sphere.diameter() <= self.eps {
            let before = apply_word_to_point(t, word, t.tangency(t.prev(base)))?;
            let after = apply_word_to_point(t, word, t.tangency(base))?;
            for (position, exact) in [(before, true), (sphere.center, false), (after, true)] {
                out.push(CloudPoint {
                    position,
                    exact,
                    word: word.clone(),
                    base,
                });
            }
            return Ok(None);
        }
        Ok(Some(
            word.appended(base as u32)
                .expect("base differs from last letter"),
        ))
    }

    fn visit(
        &self,
        word: ReducedWord,
        base: usize,
        out: &mut Vec<CloudPoint>,
    ) -> Result<(), OrbitError> {
        if word.len() >= PARALLEL_DEPTH {
            return self.visit_sequential(word, base, out);
        }
        let Some(child_word) = self.create(&word, base, out)? else {
            return Ok(());
        };
        // fan out near the root, where subtrees are large
        let parts: Vec<Vec<CloudPoint>> = (0..self.necklace.len())
            .into_par_iter()
            .filter(|&j| j != base)
            .map(|j| {
                let mut sub = Vec::new();
                self.visit(child_word.clone(), j, &mut sub)?;
                Ok(sub)
            })
            .collect::<Result<_, OrbitError>>()?;
        out.extend(parts.into_iter().flatten());
        Ok(())
    }

    /// Same traversal order as `visit`, with an explicit stack: parabolic
    /// branches shrink only linearly and can run thousands of levels deep.
    fn visit_sequential(
        &self,
        word: ReducedWord,
        base: usize,
        out: &mut Vec<CloudPoint>,
    ) -> Result<(), OrbitError> {
        let n = self.necklace.len();
        let mut stack = vec![(word, base)];
        while let Some((word, base)) = stack.pop() {
            if let Some(child_word) = self.create(&word, base, out)? {
                for j in (0..n).rev().filter(|&j| j != base) {
                    stack.push((child_word.clone(), j));
                }
            }
        }
        Ok(())
    }
}

/// Images `w_m(z)` of `z` under the prefixes `w_m = branch[..m]`, for `m = 1..=len`.
pub fn orbit_converge(
    necklace: &PearlNecklace,
    z: Point3,
    branch: &ReducedWord,
) -> Result<Vec<Point3>, OrbitError> {
    if filling_contains(necklace, z) {
        return Err(OrbitError::InsideFilling);
    }
    (1..=branch.len())
        .map(|m| apply_word_to_point(necklace, &branch.prefix(m), z))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Ply,
}

/// Something that can be written as a stage or point-cloud file.
#[derive(Debug, Clone, Copy)]
pub enum Exportable<'a> {
    Stage(&'a Stage),
    Cloud(&'a PointCloud),
}

pub fn export_stage<W: Write>(
    item: Exportable<'_>,
    format: ExportFormat,
    mut out: W,
) -> Result<(), OrbitError> {
    match format {
        ExportFormat::Json => {
            match item {
                Exportable::Stage(s) => serde_json::to_writer(&mut out, s)?,
                Exportable::Cloud(c) => serde_json::to_writer(&mut out, c)?,
            }
            writeln!(out)?;
        }
        ExportFormat::Ply => match item {
            Exportable::Stage(s) => {
                write_ply_header(&mut out, s.len(), "property float radius")?;
                for p in &s.pearls {
                    let c = p.sphere.center;
                    writeln!(out, "{} {} {} {}", c.x, c.y, c.z, p.sphere.radius)?;
                }
            }
            Exportable::Cloud(cloud) => {
                write_ply_header(&mut out, cloud.len(), "property uchar exact")?;
                for p in &cloud.points {
                    let c = p.position;
                    writeln!(out, "{} {} {} {}", c.x, c.y, c.z, u8::from(p.exact))?;
                }
            }
        },
    }
    out.flush()?;
    Ok(())
}

fn write_ply_header<W: Write>(out: &mut W, count: usize, extra: &str) -> std::io::Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {count}")?;
    writeln!(out, "property float x")?;
    writeln!(out, "property float y")?;
    writeln!(out, "property float z")?;
    writeln!(out, "{extra}")?;
    writeln!(out, "end_header")
}

pub fn import_stage_json<R: Read>(input: R) -> Result<Stage, OrbitError> {
    Ok(serde_json::from_reader(input)?)
}

pub fn import_cloud_json<R: Read>(input: R) -> Result<PointCloud, OrbitError> {
    Ok(serde_json::from_reader(input)?)
}
