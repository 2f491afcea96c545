//! Finitely presented groups attached to fibered knots and their wild limits.
//!
//! Words are freely reduced sequences of `(symbol, exponent)` syllables. The
//! complement of a fibered knot has the mapping-torus presentation
//! `⟨fiber, c | fiber relators, c⁻¹ a c = ψ(a)⟩`; its abelian invariants come
//! from an exact Smith normal form over arbitrary precision integers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("unknown generator `{0}`")]
    UnknownSymbol(String),
    #[error("generator `{0}` appears twice")]
    SymbolClash(String),
    #[error("shared generator `{0}` is missing from a factor")]
    MissingShared(String),
    #[error("endomorphisms act on different generator lists")]
    GeneratorMismatch,
    #[error("search space of {0} assignments is too large")]
    SearchTooLarge(u128),
    #[error("cannot parse word: {0}")]
    Parse(String),
    #[error("{0} must be at least {1}")]
    TooSmall(&'static str, usize),
}

/// A symbol raised to a nonzero power.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(String, i64)", into = "(String, i64)")]
pub struct Syllable {
    pub symbol: String,
    pub exp: i64,
}

impl From<(String, i64)> for Syllable {
    fn from((symbol, exp): (String, i64)) -> Self {
        Syllable { symbol, exp }
    }
}

impl From<Syllable> for (String, i64) {
    fn from(s: Syllable) -> Self {
        (s.symbol, s.exp)
    }
}

/// A freely reduced word: no zero exponents, no two adjacent syllables on the same symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Syllable>", into = "Vec<Syllable>")]
pub struct FreeWord {
    syllables: Vec<Syllable>,
}

impl From<Vec<Syllable>> for FreeWord {
    fn from(s: Vec<Syllable>) -> Self {
        FreeWord::new(s)
    }
}

impl From<FreeWord> for Vec<Syllable> {
    fn from(w: FreeWord) -> Self {
        w.syllables
    }
}

impl FreeWord {
    pub fn new(syllables: Vec<Syllable>) -> Self {
        let mut out: Vec<Syllable> = Vec::with_capacity(syllables.len());
        for s in syllables {
            push_reduced(&mut out, s);
        }
        FreeWord { syllables: out }
    }

    pub fn identity() -> Self {
        FreeWord::default()
    }

    pub fn generator(symbol: &str) -> Self {
        FreeWord {
            syllables: vec![Syllable {
                symbol: symbol.to_string(),
                exp: 1,
            }],
        }
    }

    pub fn syllables(&self) -> &[Syllable] {
        &self.syllables
    }

    pub fn is_identity(&self) -> bool {
        self.syllables.is_empty()
    }

    /// Total number of letters, `sum |exp|`.
    pub fn length(&self) -> u64 {
        self.syllables.iter().map(|s| s.exp.unsigned_abs()).sum()
    }

    pub fn inverse(&self) -> Self {
        FreeWord {
            syllables: self
                .syllables
                .iter()
                .rev()
                .map(|s| Syllable {
                    symbol: s.symbol.clone(),
                    exp: -s.exp,
                })
                .collect(),
        }
    }

    pub fn mul(&self, other: &FreeWord) -> Self {
        let mut out = self.syllables.clone();
        for s in &other.syllables {
            push_reduced(&mut out, s.clone());
        }
        FreeWord { syllables: out }
    }

    pub fn pow(&self, e: i64) -> Self {
        let base = if e < 0 { self.inverse() } else { self.clone() };
        let mut out = FreeWord::identity();
        for _ in 0..e.unsigned_abs() {
            out = out.mul(&base);
        }
        out
    }

    pub fn product<'a>(words: impl IntoIterator<Item = &'a FreeWord>) -> Self {
        words
            .into_iter()
            .fold(FreeWord::identity(), |acc, w| acc.mul(w))
    }

    pub fn exponent_sum(&self, symbol: &str) -> i64 {
        self.syllables
            .iter()
            .filter(|s| s.symbol == symbol)
            .map(|s| s.exp)
            .sum()
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.syllables.iter().map(|s| s.symbol.as_str())
    }

    pub fn mentions(&self, symbol: &str) -> bool {
        self.symbols().any(|s| s == symbol)
    }

    /// Rotate by one letter: `x w` becomes `w x`.
    pub fn cyclic_shift(&self) -> Self {
        let Some(first) = self.syllables.first() else {
            return self.clone();
        };
        let sign = first.exp.signum();
        let head = FreeWord {
            syllables: vec![Syllable {
                symbol: first.symbol.clone(),
                exp: sign,
            }],
        };
        head.inverse().mul(self).mul(&head)
    }

    fn renamed(&self, rename: &impl Fn(&str) -> String) -> Self {
        FreeWord::new(
            self.syllables
                .iter()
                .map(|s| Syllable {
                    symbol: rename(&s.symbol),
                    exp: s.exp,
                })
                .collect(),
        )
    }
}

fn push_reduced(out: &mut Vec<Syllable>, s: Syllable) {
    if s.exp == 0 {
        return;
    }
    match out.last_mut() {
        Some(last) if last.symbol == s.symbol => {
            last.exp += s.exp;
            if last.exp == 0 {
                out.pop();
            }
        }
        _ => out.push(s),
    }
}

impl fmt::Display for FreeWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.syllables.is_empty() {
            return f.write_str("1");
        }
        let parts: Vec<String> = self
            .syllables
            .iter()
            .map(|s| {
                if s.exp == 1 {
                    s.symbol.clone()
                } else {
                    format!("{}^{}", s.symbol, s.exp)
                }
            })
            .collect();
        f.write_str(&parts.join(" "))
    }
}

/// Whitespace-separated letters, each `x` or `x^e`; `1` is the empty word.
impl FromStr for FreeWord {
    type Err = AlgebraError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut syllables = Vec::new();
        for token in s.split_whitespace() {
            if token == "1" {
                continue;
            }
            let (symbol, exp) = match token.split_once('^') {
                Some((sym, e)) => (
                    sym,
                    e.parse::<i64>()
                        .map_err(|_| AlgebraError::Parse(token.to_string()))?,
                ),
                None => (token, 1),
            };
            if symbol.is_empty() {
                return Err(AlgebraError::Parse(token.to_string()));
            }
            syllables.push(Syllable {
                symbol: symbol.to_string(),
                exp,
            });
        }
        Ok(FreeWord::new(syllables))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPresentation")]
pub struct Presentation {
    generators: Vec<String>,
    relators: Vec<FreeWord>,
}

#[derive(Deserialize)]
struct RawPresentation {
    generators: Vec<String>,
    relators: Vec<FreeWord>,
}

impl TryFrom<RawPresentation> for Presentation {
    type Error = AlgebraError;

    fn try_from(raw: RawPresentation) -> Result<Self, Self::Error> {
        Presentation::new(raw.generators, raw.relators)
    }
}

impl Presentation {
    pub fn new(generators: Vec<String>, relators: Vec<FreeWord>) -> Result<Self, AlgebraError> {
        let mut seen = HashSet::new();
        for g in &generators {
            if !seen.insert(g.as_str()) {
                return Err(AlgebraError::SymbolClash(g.clone()));
            }
        }
        for r in &relators {
            if let Some(s) = r.symbols().find(|s| !seen.contains(s)) {
                return Err(AlgebraError::UnknownSymbol(s.to_string()));
            }
        }
        Ok(Presentation {
            generators,
            relators,
        })
    }

    /// Free group on the given symbols.
    pub fn free(generators: &[&str]) -> Self {
        Presentation::new(generators.iter().map(|s| s.to_string()).collect(), vec![])
            .expect("distinct generators")
    }

    /// Parse relators with [`FreeWord::from_str`].
    pub fn parse(generators: &[&str], relators: &[&str]) -> Result<Self, AlgebraError> {
        let relators = relators
            .iter()
            .map(|r| r.parse())
            .collect::<Result<_, _>>()?;
        Presentation::new(generators.iter().map(|s| s.to_string()).collect(), relators)
    }

    pub fn generators(&self) -> &[String] {
        &self.generators
    }

    pub fn relators(&self) -> &[FreeWord] {
        &self.relators
    }

    pub fn has_generator(&self, symbol: &str) -> bool {
        self.generators.iter().any(|g| g == symbol)
    }

    /// Rows are relators, columns generators, entries exponent sums.
    pub fn relation_matrix(&self) -> IntMatrix {
        let col: HashMap<&str, usize> = self
            .generators
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_str(), i))
            .collect();
        let mut m = IntMatrix::zeros(self.relators.len(), self.generators.len());
        for (i, r) in self.relators.iter().enumerate() {
            for s in r.syllables() {
                m.rows[i][col[s.symbol.as_str()]] += s.exp;
            }
        }
        m
    }

    fn renamed(&self, rename: &impl Fn(&str) -> String) -> Self {
        Presentation {
            generators: self.generators.iter().map(|g| rename(g)).collect(),
            relators: self.relators.iter().map(|r| r.renamed(rename)).collect(),
        }
    }
}

impl fmt::Display for Presentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rels: Vec<String> = self.relators.iter().map(|r| r.to_string()).collect();
        write!(f, "⟨{} | {}⟩", self.generators.join(", "), rels.join(", "))
    }
}

/// A map on free generators, extended to words by substitution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endomorphism {
    generators: Vec<String>,
    images: Vec<FreeWord>,
}

impl Endomorphism {
    pub fn new(generators: Vec<String>, images: Vec<FreeWord>) -> Result<Self, AlgebraError> {
        if generators.len() != images.len() {
            return Err(AlgebraError::GeneratorMismatch);
        }
        Ok(Endomorphism { generators, images })
    }

    /// Images listed by generator name; every generator of `generators` must be present.
    pub fn from_map(
        generators: &[String],
        map: &BTreeMap<String, FreeWord>,
    ) -> Result<Self, AlgebraError> {
        if let Some(extra) = map.keys().find(|k| !generators.contains(k)) {
            return Err(AlgebraError::UnknownSymbol(extra.clone()));
        }
        let images = generators
            .iter()
            .map(|g| {
                map.get(g)
                    .cloned()
                    .ok_or_else(|| AlgebraError::UnknownSymbol(g.clone()))
            })
            .collect::<Result<_, _>>()?;
        Endomorphism::new(generators.to_vec(), images)
    }

    pub fn identity(generators: &[String]) -> Self {
        Endomorphism {
            generators: generators.to_vec(),
            images: generators.iter().map(|g| FreeWord::generator(g)).collect(),
        }
    }

    /// Monodromy of the trefoil on the free fiber `⟨a, b⟩`: `a ↦ b⁻¹`, `b ↦ ab`.
    pub fn trefoil() -> Self {
        Endomorphism {
            generators: vec!["a".into(), "b".into()],
            images: vec!["b^-1".parse().unwrap(), "a b".parse().unwrap()],
        }
    }

    pub fn generators(&self) -> &[String] {
        &self.generators
    }

    pub fn images(&self) -> &[FreeWord] {
        &self.images
    }

    pub fn image(&self, symbol: &str) -> Option<&FreeWord> {
        self.generators
            .iter()
            .position(|g| g == symbol)
            .map(|i| &self.images[i])
    }

    pub fn apply(&self, word: &FreeWord) -> Result<FreeWord, AlgebraError> {
        let mut out = FreeWord::identity();
        for s in word.syllables() {
            let img = self
                .image(&s.symbol)
                .ok_or_else(|| AlgebraError::UnknownSymbol(s.symbol.clone()))?;
            out = out.mul(&img.pow(s.exp));
        }
        Ok(out)
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &Endomorphism) -> Result<Endomorphism, AlgebraError> {
        if self.generators != other.generators {
            return Err(AlgebraError::GeneratorMismatch);
        }
        let images = other
            .images
            .iter()
            .map(|w| self.apply(w))
            .collect::<Result<_, _>>()?;
        Ok(Endomorphism {
            generators: self.generators.clone(),
            images,
        })
    }

    pub fn power(&self, q: u32) -> Endomorphism {
        let mut out = Endomorphism::identity(&self.generators);
        for _ in 0..q {
            out = self.compose(&out).expect("same generators");
        }
        out
    }

    fn renamed(&self, rename: &impl Fn(&str) -> String) -> Self {
        Endomorphism {
            generators: self.generators.iter().map(|g| rename(g)).collect(),
            images: self.images.iter().map(|w| w.renamed(rename)).collect(),
        }
    }
}

pub fn endo_compose(f: &Endomorphism, g: &Endomorphism) -> Result<Endomorphism, AlgebraError> {
    f.compose(g)
}

pub fn endo_power(f: &Endomorphism, q: u32) -> Endomorphism {
    f.power(q)
}

/// Dense integer matrix with arbitrary precision entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: Vec<Vec<BigInt>>,
    cols: usize,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix {
            rows: vec![vec![BigInt::zero(); cols]; rows],
            cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = IntMatrix::zeros(n, n);
        for i in 0..n {
            m.rows[i][i] = BigInt::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<i64>>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        IntMatrix {
            rows: rows
                .into_iter()
                .map(|r| r.into_iter().map(BigInt::from).collect())
                .collect(),
            cols,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &BigInt {
        &self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<BigInt>] {
        &self.rows
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, other.nrows(), "dimension mismatch");
        let mut out = IntMatrix::zeros(self.nrows(), other.cols);
        for i in 0..self.nrows() {
            for k in 0..self.cols {
                if self.rows[i][k].is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.rows[i][j] += &self.rows[i][k] * &other.rows[k][j];
                }
            }
        }
        out
    }

    pub fn pow(&self, q: u32) -> IntMatrix {
        let mut out = IntMatrix::identity(self.nrows());
        for _ in 0..q {
            out = out.mul(self);
        }
        out
    }

    pub fn sub(&self, other: &IntMatrix) -> IntMatrix {
        let mut out = self.clone();
        for (r, o) in out.rows.iter_mut().zip(&other.rows) {
            for (x, y) in r.iter_mut().zip(o) {
                *x -= y;
            }
        }
        out
    }

    pub fn is_identity(&self) -> bool {
        *self == IntMatrix::identity(self.nrows())
    }

    /// Stack `other` below `self`.
    pub fn stacked(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, other.cols);
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        IntMatrix {
            rows,
            cols: self.cols,
        }
    }

    /// Multiplicative order up to `limit`, if the matrix is square and has one.
    pub fn order(&self, limit: u32) -> Option<u32> {
        let mut p = self.clone();
        for k in 1..=limit {
            if p.is_identity() {
                return Some(k);
            }
            p = p.mul(self);
        }
        None
    }
}

/// Nonzero invariant factors `d_1 | d_2 | ...` (all positive) of an integer matrix.
pub fn smith_invariants(matrix: &IntMatrix) -> Vec<BigInt> {
    let mut a = matrix.rows.clone();
    let (m, n) = (matrix.nrows(), matrix.ncols());
    let mut diag = Vec::new();
    let mut t = 0;
    while t < m.min(n) {
        // smallest nonzero entry of the remaining block as pivot
        let Some((pi, pj)) = (t..m)
            .flat_map(|i| (t..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !a[i][j].is_zero())
            .min_by(|&(i, j), &(k, l)| a[i][j].abs().cmp(&a[k][l].abs()))
        else {
            break;
        };
        a.swap(t, pi);
        for row in a.iter_mut() {
            row.swap(t, pj);
        }

        let mut done = true;
        for i in t + 1..m {
            if a[i][t].is_zero() {
                continue;
            }
            let q = a[i][t].div_floor(&a[t][t]);
            let pivot_row = a[t].clone();
            for (x, p) in a[i].iter_mut().zip(&pivot_row).skip(t) {
                *x -= &q * p;
            }
            if !a[i][t].is_zero() {
                done = false;
            }
        }
        for j in t + 1..n {
            if a[t][j].is_zero() {
                continue;
            }
            let q = a[t][j].div_floor(&a[t][t]);
            for row in a.iter_mut().skip(t) {
                let p = row[t].clone();
                row[j] -= &q * p;
            }
            if !a[t][j].is_zero() {
                done = false;
            }
        }
        if !done {
            // a smaller remainder appeared; pick a new pivot
            continue;
        }
        // the pivot must divide the rest of the block
        if let Some(i) = (t + 1..m).find(|&i| (t + 1..n).any(|j| !a[i][j].is_multiple_of(&a[t][t])))
        {
            let row = a[i].clone();
            for (x, y) in a[t].iter_mut().zip(&row) {
                *x += y;
            }
            continue;
        }
        diag.push(a[t][t].abs());
        t += 1;
    }
    diag
}

/// `Z^free_rank ⊕ Z/d_1 ⊕ ... ⊕ Z/d_k` with `d_1 | ... | d_k`, all `d_i >= 2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AbelianInvariants {
    pub free_rank: usize,
    #[serde(serialize_with = "serialize_big_ints")]
    pub torsion: Vec<BigInt>,
}

fn serialize_big_ints<S: Serializer>(values: &[BigInt], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(values.len()))?;
    for v in values {
        match i64::try_from(v) {
            Ok(small) => seq.serialize_element(&small)?,
            Err(_) => seq.serialize_element(&v.to_string())?,
        }
    }
    seq.end()
}

impl AbelianInvariants {
    /// Cokernel of the map whose rows are relations among `matrix.ncols()` generators.
    pub fn of_relations(matrix: &IntMatrix) -> Self {
        let diag = smith_invariants(matrix);
        let torsion = diag.iter().filter(|d| !d.is_one()).cloned().collect();
        AbelianInvariants {
            free_rank: matrix.ncols() - diag.len(),
            torsion,
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.free_rank == 0 && self.torsion.is_empty()
    }

    pub fn torsion_u64(&self) -> Vec<u64> {
        self.torsion
            .iter()
            .map(|t| u64::try_from(t).unwrap_or(u64::MAX))
            .collect()
    }

    /// Direct sum, renormalized to divisor-chain form.
    pub fn direct_sum(&self, other: &AbelianInvariants) -> AbelianInvariants {
        let k = self.torsion.len() + other.torsion.len();
        let mut m = IntMatrix::zeros(k, k);
        for (i, d) in self.torsion.iter().chain(&other.torsion).enumerate() {
            m.rows[i][i] = d.clone();
        }
        let mut out = AbelianInvariants::of_relations(&m);
        out.free_rank += self.free_rank + other.free_rank;
        out
    }
}

impl fmt::Display for AbelianInvariants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        match self.free_rank {
            0 => {}
            1 => parts.push("Z".to_string()),
            r => parts.push(format!("Z^{r}")),
        }
        parts.extend(self.torsion.iter().map(|d| format!("Z/{d}")));
        if parts.is_empty() {
            f.write_str("0")
        } else {
            f.write_str(&parts.join(" + "))
        }
    }
}

/// Column `j` holds the exponent sums of the image of generator `j`.
pub fn abelianized_matrix(f: &Endomorphism) -> IntMatrix {
    let n = f.generators.len();
    let mut m = IntMatrix::zeros(n, n);
    for (j, img) in f.images.iter().enumerate() {
        for (i, g) in f.generators.iter().enumerate() {
            m.rows[i][j] = BigInt::from(img.exponent_sum(g));
        }
    }
    m
}

pub fn abelianization(p: &Presentation) -> AbelianInvariants {
    AbelianInvariants::of_relations(&p.relation_matrix())
}

/// How `a * c` is read in a semidirect relator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conjugation {
    /// `a * c = c⁻¹ a c`
    #[default]
    Right,
    /// `a * c = c a c⁻¹`
    Left,
}

pub fn semidirect(
    fiber: &Presentation,
    psi: &Endomorphism,
    stable: &str,
) -> Result<Presentation, AlgebraError> {
    semidirect_with(fiber, psi, stable, Conjugation::Right)
}

/// Mapping-torus presentation: fiber relators plus `(a * c) ψ(a)⁻¹` for each fiber generator.
pub fn semidirect_with(
    fiber: &Presentation,
    psi: &Endomorphism,
    stable: &str,
    convention: Conjugation,
) -> Result<Presentation, AlgebraError> {
    if fiber.has_generator(stable) {
        return Err(AlgebraError::SymbolClash(stable.to_string()));
    }
    if psi.generators != fiber.generators {
        return Err(AlgebraError::GeneratorMismatch);
    }
    let c = FreeWord::generator(stable);
    let mut generators = fiber.generators.clone();
    generators.push(stable.to_string());
    let mut relators = fiber.relators.clone();
    for (g, img) in psi.generators.iter().zip(&psi.images) {
        let a = FreeWord::generator(g);
        let conj = match convention {
            Conjugation::Right => c.inverse().mul(&a).mul(&c),
            Conjugation::Left => c.mul(&a).mul(&c.inverse()),
        };
        relators.push(conj.mul(&img.inverse()));
    }
    Presentation::new(generators, relators)
}

/// Free product of the factors with generators renamed `g1, g2, ...` per factor.
///
/// A `shared` symbol keeps its name and is identified across all factors; it
/// is listed once, after the renamed generators.
pub fn free_product(
    factors: &[Presentation],
    shared: Option<&str>,
) -> Result<Presentation, AlgebraError> {
    let mut generators = Vec::new();
    let mut relators = Vec::new();
    for (k, p) in factors.iter().enumerate() {
        if let Some(s) = shared {
            if !p.has_generator(s) {
                return Err(AlgebraError::MissingShared(s.to_string()));
            }
        }
        let renamed = p.renamed(&copy_renamer(k + 1, shared));
        generators.extend(
            renamed
                .generators
                .into_iter()
                .filter(|g| Some(g.as_str()) != shared),
        );
        relators.extend(renamed.relators);
    }
    if let Some(s) = shared {
        generators.push(s.to_string());
    }
    Presentation::new(generators, relators)
}

fn copy_renamer(index: usize, keep: Option<&str>) -> impl Fn(&str) -> String + '_ {
    move |g: &str| {
        if Some(g) == keep {
            g.to_string()
        } else {
            format!("{g}{index}")
        }
    }
}

/// Semidirect presentation plus `ψ^q(a) a⁻¹` for each fiber generator.
pub fn branched_cover(
    fiber: &Presentation,
    psi: &Endomorphism,
    q: u32,
    stable: &str,
) -> Result<Presentation, AlgebraError> {
    if q < 1 {
        return Err(AlgebraError::TooSmall("q", 1));
    }
    let base = semidirect(fiber, psi, stable)?;
    let psi_q = psi.power(q);
    let mut relators = base.relators.clone();
    for (g, img) in psi_q.generators.iter().zip(&psi_q.images) {
        relators.push(img.mul(&FreeWord::generator(g).inverse()));
    }
    Presentation::new(base.generators, relators)
}

/// Drop `stable` and every relator that mentions it.
///
/// Applied to [`branched_cover`] this leaves `⟨fiber | fiber relators, ψ^q(a) = a⟩`,
/// the quotient by the lifted meridian.
pub fn fiber_restriction(p: &Presentation, stable: &str) -> Result<Presentation, AlgebraError> {
    if !p.has_generator(stable) {
        return Err(AlgebraError::UnknownSymbol(stable.to_string()));
    }
    Presentation::new(
        p.generators
            .iter()
            .filter(|g| *g != stable)
            .cloned()
            .collect(),
        p.relators
            .iter()
            .filter(|r| !r.mentions(stable))
            .cloned()
            .collect(),
    )
}

/// First homology of the `q`-fold cyclic branched cover: coker of `M^q - I`.
pub fn cover_h1(psi: &Endomorphism, q: u32) -> AbelianInvariants {
    let m = abelianized_matrix(psi);
    let rel = m.pow(q).sub(&IntMatrix::identity(m.nrows()));
    // columns of M^q - I are the relations ψ^q(a) - a; transpose to rows
    AbelianInvariants::of_relations(&transpose(&rel))
}

fn transpose(m: &IntMatrix) -> IntMatrix {
    let mut out = IntMatrix::zeros(m.ncols(), m.nrows());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.rows[j][i] = m.rows[i][j].clone();
        }
    }
    out
}

/// `m` renamed copies of the fiber, ψ acting copy-wise, then the semidirect product.
pub fn truncated_wild_presentation(
    fiber: &Presentation,
    psi: &Endomorphism,
    copies: usize,
    stable: &str,
) -> Result<Presentation, AlgebraError> {
    if copies < 1 {
        return Err(AlgebraError::TooSmall("copies", 1));
    }
    let factors = vec![fiber.clone(); copies];
    let product = free_product(&factors, None)?;
    let mut generators = Vec::new();
    let mut images = Vec::new();
    for k in 1..=copies {
        let renamed = psi.renamed(&copy_renamer(k, None));
        generators.extend(renamed.generators);
        images.extend(renamed.images);
    }
    semidirect(&product, &Endomorphism::new(generators, images)?, stable)
}

/// Small permutation groups used as finite quotients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetGroup {
    S3,
    S4,
    A5,
}

impl FromStr for TargetGroup {
    type Err = AlgebraError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s3" | "symmetric_3" => Ok(TargetGroup::S3),
            "s4" | "symmetric_4" => Ok(TargetGroup::S4),
            "a5" | "alternating_5" => Ok(TargetGroup::A5),
            other => Err(AlgebraError::Parse(format!(
                "unknown target group `{other}`"
            ))),
        }
    }
}

impl fmt::Display for TargetGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetGroup::S3 => "s3",
            TargetGroup::S4 => "s4",
            TargetGroup::A5 => "a5",
        })
    }
}

/// Largest number of generator assignments [`hom_count`] will enumerate (`|A5|^4`).
pub const MAX_HOM_SEARCH: u128 = 60u128.pow(4);

/// Group given by its multiplication table; element 0 is the identity.
struct FiniteGroup {
    order: usize,
    table: Vec<usize>,
    inverse: Vec<usize>,
}

impl FiniteGroup {
    fn permutations(target: TargetGroup) -> Self {
        let (degree, even_only) = match target {
            TargetGroup::S3 => (3, false),
            TargetGroup::S4 => (4, false),
            TargetGroup::A5 => (5, true),
        };
        let mut perms: Vec<Vec<usize>> = vec![(0..degree).collect()];
        // all permutations, identity first
        let mut all = Vec::new();
        permute(&mut (0..degree).collect(), 0, &mut all);
        all.retain(|p| !even_only || is_even(p));
        all.sort();
        perms.extend(
            all.into_iter()
                .filter(|p| p.iter().enumerate().any(|(i, &x)| i != x)),
        );
        let index: HashMap<Vec<usize>, usize> = perms
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, p)| (p, i))
            .collect();
        let order = perms.len();
        let mut table = vec![0; order * order];
        let mut inverse = vec![0; order];
        for (i, p) in perms.iter().enumerate() {
            for (j, q) in perms.iter().enumerate() {
                // (p q)(x) = p(q(x))
                let pq: Vec<usize> = q.iter().map(|&x| p[x]).collect();
                table[i * order + j] = index[&pq];
            }
            let mut inv = vec![0; degree];
            for (x, &y) in p.iter().enumerate() {
                inv[y] = x;
            }
            inverse[i] = index[&inv];
        }
        FiniteGroup {
            order,
            table,
            inverse,
        }
    }

    fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a * self.order + b]
    }

    fn pow(&self, a: usize, e: i64) -> usize {
        let base = if e < 0 { self.inverse[a] } else { a };
        (0..e.unsigned_abs()).fold(0, |acc, _| self.mul(acc, base))
    }
}

fn permute(p: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == p.len() {
        out.push(p.clone());
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, out);
        p.swap(k, i);
    }
}

fn is_even(p: &[usize]) -> bool {
    let inversions = (0..p.len())
        .flat_map(|i| (i + 1..p.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| p[i] > p[j])
        .count();
    inversions % 2 == 0
}

/// Number of homomorphisms from the presented group to `target`, by exhaustive search.
pub fn hom_count(p: &Presentation, target: TargetGroup) -> Result<u64, AlgebraError> {
    let group = FiniteGroup::permutations(target);
    let gens = p.generators.len();
    let space = (group.order as u128)
        .checked_pow(gens as u32)
        .unwrap_or(u128::MAX);
    if space > MAX_HOM_SEARCH {
        return Err(AlgebraError::SearchTooLarge(space));
    }
    if gens == 0 {
        return Ok(1);
    }
    let index: HashMap<&str, usize> = p
        .generators
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    let compiled: Vec<Vec<(usize, i64)>> = p
        .relators
        .iter()
        .map(|r| {
            r.syllables()
                .iter()
                .map(|s| (index[s.symbol.as_str()], s.exp))
                .collect()
        })
        .collect();

    let count = (0..group.order)
        .into_par_iter()
        .map(|first| {
            let mut assign = vec![0usize; gens];
            assign[0] = first;
            let mut hits = 0u64;
            loop {
                let ok = compiled.iter().all(|rel| {
                    rel.iter()
                        .fold(0, |acc, &(g, e)| group.mul(acc, group.pow(assign[g], e)))
                        == 0
                });
                if ok {
                    hits += 1;
                }
                // odometer over generators 1..gens
                let mut pos = 1;
                loop {
                    if pos == gens {
                        return hits;
                    }
                    assign[pos] += 1;
                    if assign[pos] < group.order {
                        break;
                    }
                    assign[pos] = 0;
                    pos += 1;
                }
            }
        })
        .sum();
    Ok(count)
}

/// Free fiber `⟨a, b⟩` of the trefoil.
pub fn trefoil_fiber() -> Presentation {
    Presentation::free(&["a", "b"])
}

/// `⟨α, c | cαc = αcα⟩`, the standard trefoil group.
pub fn trefoil_group() -> Presentation {
    Presentation::parse(&["alpha", "c"], &["c alpha c alpha^-1 c^-1 alpha^-1"]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn word(s: &str) -> FreeWord {
        s.parse().unwrap()
    }

    fn torsion(inv: &AbelianInvariants) -> Vec<u64> {
        inv.torsion_u64()
    }

    #[test]
    fn free_reduction() {
        assert_eq!(word("a b b^-1 a"), word("a^2"));
        assert!(word("a b b^-1 a^-1").is_identity());
        assert_eq!(word("a^0 b"), word("b"));
        assert_eq!(word("a b").inverse(), word("b^-1 a^-1"));
        assert_eq!(word("a b").pow(-2), word("b^-1 a^-1 b^-1 a^-1"));
        assert!("a^x".parse::<FreeWord>().is_err());
    }

    #[test]
    fn trefoil_monodromy_squared() {
        let psi = Endomorphism::trefoil();
        let psi2 = endo_compose(&psi, &psi).unwrap();
        assert_eq!(psi2.image("a").unwrap(), &word("b^-1 a^-1"));
        assert_eq!(psi2.image("b").unwrap(), &word("b^-1 a b"));
        let id = Endomorphism::identity(psi.generators());
        assert_eq!(endo_compose(&id, &psi).unwrap(), psi);
        assert_eq!(endo_power(&psi, 0), id);
    }

    #[test]
    fn compose_rejects_foreign_symbols() {
        let psi = Endomorphism::trefoil();
        let other = Endomorphism::identity(&["x".to_string(), "y".to_string()]);
        assert_eq!(psi.compose(&other), Err(AlgebraError::GeneratorMismatch));
        assert_eq!(
            psi.apply(&word("z")),
            Err(AlgebraError::UnknownSymbol("z".into()))
        );
    }

    #[test]
    fn trefoil_matrix_has_order_six() {
        let m = abelianized_matrix(&Endomorphism::trefoil());
        assert_eq!(m, IntMatrix::from_rows(vec![vec![0, 1], vec![-1, 1]]));
        assert_eq!(
            m.pow(2),
            IntMatrix::from_rows(vec![vec![-1, 1], vec![-1, 0]])
        );
        assert_eq!(m.order(12), Some(6));
        assert_eq!(
            abelianized_matrix(&endo_power(&Endomorphism::trefoil(), 2)),
            m.pow(2)
        );
        assert!(abelianized_matrix(&Endomorphism::identity(&[
            "a".into(),
            "b".into(),
            "c".into()
        ]))
        .is_identity());
    }

    #[test]
    fn smith_by_hand() {
        // invariants computed by hand
        let m = IntMatrix::from_rows(vec![vec![-2, 1], vec![-1, -1]]);
        assert_eq!(smith_invariants(&m), vec![BigInt::from(1), BigInt::from(3)]);
        let m = IntMatrix::from_rows(vec![vec![-2, 0], vec![0, -2]]);
        assert_eq!(smith_invariants(&m), vec![BigInt::from(2), BigInt::from(2)]);
        let m = IntMatrix::from_rows(vec![vec![2, 4, 4], vec![-6, 6, 12], vec![10, -4, -16]]);
        assert_eq!(
            smith_invariants(&m),
            vec![BigInt::from(2), BigInt::from(6), BigInt::from(12)]
        );
        let m = IntMatrix::from_rows(vec![vec![6, 0], vec![0, 4]]);
        assert_eq!(
            smith_invariants(&m),
            vec![BigInt::from(2), BigInt::from(12)]
        );
        assert!(smith_invariants(&IntMatrix::zeros(2, 3)).is_empty());
    }

    #[test]
    fn semidirect_trefoil() {
        let p = semidirect(&trefoil_fiber(), &Endomorphism::trefoil(), "c").unwrap();
        assert_eq!(p.generators(), ["a", "b", "c"]);
        assert_eq!(
            p.relators(),
            [word("c^-1 a c b"), word("c^-1 b c b^-1 a^-1")]
        );
        let direct = semidirect(
            &trefoil_fiber(),
            &Endomorphism::identity(trefoil_fiber().generators()),
            "c",
        )
        .unwrap();
        assert_eq!(direct.relators()[0], word("c^-1 a c a^-1"));
        assert_eq!(
            semidirect(&trefoil_fiber(), &Endomorphism::trefoil(), "a"),
            Err(AlgebraError::SymbolClash("a".into()))
        );
        let left = semidirect_with(
            &trefoil_fiber(),
            &Endomorphism::trefoil(),
            "c",
            Conjugation::Left,
        )
        .unwrap();
        assert_eq!(left.relators()[0], word("c a c^-1 b"));
    }

    #[test]
    fn semidirect_matches_trefoil_group_in_s3() {
        let p = semidirect(&trefoil_fiber(), &Endomorphism::trefoil(), "c").unwrap();
        assert_eq!(
            hom_count(&p, TargetGroup::S3).unwrap(),
            hom_count(&trefoil_group(), TargetGroup::S3).unwrap()
        );
    }

    #[test]
    fn free_products() {
        let a = Presentation::free(&["a"]);
        let p = free_product(&[a.clone(), a.clone()], None).unwrap();
        assert_eq!(p.generators(), ["a1", "a2"]);
        let f = Presentation::parse(&["a", "c"], &["c a c a^-1 c^-1 a^-1"]).unwrap();
        let p = free_product(&vec![f.clone(); 4], Some("c")).unwrap();
        assert_eq!(p.generators().len(), 5);
        assert_eq!(p.relators().len(), 4);
        assert_eq!(
            free_product(&[f, a], Some("c")),
            Err(AlgebraError::MissingShared("c".into()))
        );
    }

    #[test]
    fn free_product_abelianization_is_a_direct_sum() {
        let z3 = Presentation::parse(&["x"], &["x^3"]).unwrap();
        let z4 = Presentation::parse(&["y"], &["y^4"]).unwrap();
        let z = Presentation::free(&["t"]);
        let p = free_product(&[z3.clone(), z4.clone(), z.clone()], None).unwrap();
        let expected = abelianization(&z3)
            .direct_sum(&abelianization(&z4))
            .direct_sum(&abelianization(&z));
        assert_eq!(abelianization(&p), expected);
        assert_eq!(expected.free_rank, 1);
        assert_eq!(torsion(&expected), vec![12]);
    }

    #[test]
    fn trefoil_group_abelianizes_to_z() {
        let inv = abelianization(&trefoil_group());
        assert_eq!((inv.free_rank, inv.torsion.len()), (1, 0));
    }

    #[test]
    fn cover_homology() {
        let psi = Endomorphism::trefoil();
        assert!(cover_h1(&psi, 5).is_trivial());
        assert_eq!(torsion(&cover_h1(&psi, 2)), vec![3]);
        assert_eq!(cover_h1(&psi, 2).free_rank, 0);
        assert_eq!(torsion(&cover_h1(&psi, 3)), vec![2, 2]);
        let six = cover_h1(&psi, 6);
        assert_eq!((six.free_rank, six.torsion.len()), (2, 0));
    }

    #[test]
    fn branched_cover_relators() {
        let psi = Endomorphism::trefoil();
        let p = branched_cover(&trefoil_fiber(), &psi, 1, "c").unwrap();
        assert_eq!(p.relators()[2], word("b^-1 a^-1"));
        assert_eq!(p.relators()[3], word("a b b^-1"));
        let p6 = branched_cover(&trefoil_fiber(), &psi, 6, "c").unwrap();
        let tail =
            Presentation::new(vec!["a".into(), "b".into()], p6.relators()[2..].to_vec()).unwrap();
        assert_eq!(abelianization(&tail).free_rank, 2);
    }

    #[test]
    fn fiber_restriction_agrees_with_matrix_path() {
        let psi = Endomorphism::trefoil();
        for q in 1..=8 {
            let p = branched_cover(&trefoil_fiber(), &psi, q, "c").unwrap();
            let restricted = fiber_restriction(&p, "c").unwrap();
            assert_eq!(abelianization(&restricted), cover_h1(&psi, q), "q = {q}");
        }
    }

    #[test]
    fn hom_count_basics() {
        assert_eq!(
            hom_count(&Presentation::free(&["a", "b"]), TargetGroup::S3).unwrap(),
            36
        );
        let p = Presentation::parse(&["a"], &["a^2"]).unwrap();
        assert_eq!(hom_count(&p, TargetGroup::S3).unwrap(), 4);
        assert_eq!(
            hom_count(&Presentation::free(&["a"]), TargetGroup::A5).unwrap(),
            60
        );
        assert_eq!(
            hom_count(
                &Presentation::parse(&["a"], &["a^2"]).unwrap(),
                TargetGroup::S4
            )
            .unwrap(),
            10
        );
        assert_eq!(
            hom_count(
                &Presentation::parse(&["a"], &["a^5"]).unwrap(),
                TargetGroup::A5
            )
            .unwrap(),
            25
        );
        assert_eq!(
            hom_count(
                &Presentation::free(&["a", "b", "c", "d", "e"]),
                TargetGroup::S3
            )
            .unwrap(),
            6u64.pow(5)
        );
        let big = Presentation::free(&["a", "b", "c", "d", "e", "f"]);
        assert!(matches!(
            hom_count(&big, TargetGroup::S4),
            Err(AlgebraError::SearchTooLarge(_))
        ));
    }

    #[test]
    fn truncated_wild_shapes() {
        let psi = Endomorphism::trefoil();
        let one = truncated_wild_presentation(&trefoil_fiber(), &psi, 1, "c").unwrap();
        assert_eq!(one.generators(), ["a1", "b1", "c"]);
        assert_eq!(
            one.relators(),
            [word("c^-1 a1 c b1"), word("c^-1 b1 c b1^-1 a1^-1")]
        );
        let two = truncated_wild_presentation(&trefoil_fiber(), &psi, 2, "c").unwrap();
        assert_eq!(two.generators(), ["a1", "b1", "a2", "b2", "c"]);
        assert_eq!(two.relators().len(), 4);
    }

    #[test]
    fn json_formats() {
        let p: Presentation =
            serde_json::from_str(r#"{"generators":["a","b","c"],"relators":[[["a",1],["b",-1]]]}"#)
                .unwrap();
        assert_eq!(p.relators()[0], word("a b^-1"));
        assert!(serde_json::from_str::<Presentation>(
            r#"{"generators":["a"],"relators":[[["z",1]]]}"#
        )
        .is_err());
        let inv = cover_h1(&Endomorphism::trefoil(), 3);
        assert_eq!(
            serde_json::to_string(&inv).unwrap(),
            r#"{"free_rank":0,"torsion":[2,2]}"#
        );
    }

    fn small_presentation() -> impl Strategy<Value = Presentation> {
        let syllable = (
            0usize..2,
            prop_oneof![Just(-2i64), Just(-1), Just(1), Just(2), Just(3)],
        );
        proptest::collection::vec(proptest::collection::vec(syllable, 1..6), 1..3).prop_map(
            |rels| {
                let names = ["x", "y"];
                let relators = rels
                    .into_iter()
                    .map(|r| {
                        FreeWord::new(
                            r.into_iter()
                                .map(|(g, e)| Syllable {
                                    symbol: names[g].into(),
                                    exp: e,
                                })
                                .collect(),
                        )
                    })
                    .collect();
                Presentation::new(vec!["x".into(), "y".into()], relators).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn reduction_is_idempotent(raw in proptest::collection::vec((0usize..3, -3i64..4), 0..12)) {
            let names = ["a", "b", "c"];
            let w = FreeWord::new(raw.into_iter().map(|(g, e)| Syllable { symbol: names[g].into(), exp: e }).collect());
            prop_assert_eq!(FreeWord::new(w.syllables().to_vec()), w.clone());
            prop_assert!(w.mul(&w.inverse()).is_identity());
        }

        #[test]
        fn hom_count_is_presentation_invariant(p in small_presentation()) {
            let base = hom_count(&p, TargetGroup::S3).unwrap();
            let swapped = p.renamed(&|g: &str| if g == "x" { "y".into() } else { "x".into() });
            prop_assert_eq!(hom_count(&swapped, TargetGroup::S3).unwrap(), base);
            let rotated = Presentation::new(
                p.generators().to_vec(),
                p.relators().iter().map(|r| r.cyclic_shift().inverse()).collect(),
            ).unwrap();
            prop_assert_eq!(hom_count(&rotated, TargetGroup::S3).unwrap(), base);
        }
    }
}
