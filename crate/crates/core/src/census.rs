//! Closed-form stage combinatorics.
//!
//! Stage `j >= 1` of the reflection process adds one copy of the template per
//! reduced word of length `j`, that is `n(n-1)^{j-1}` copies. Odd words reverse
//! orientation, so odd stages contribute mirror images. The truncated fiber is
//! the arc-sum of one Seifert surface per copy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CensusError {
    #[error("integer overflow in count")]
    Overflow,
    #[error("at least 3 pearls are needed, got {0}")]
    TooFewPearls(u64),
    #[error("fiber surface must have genus >= 1 and at least one boundary component")]
    BadSurface,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionCount {
    pub direct: u128,
    pub mirror: u128,
    pub total: u128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiberStats {
    pub copies: u128,
    /// Euler characteristic of the compact surface with boundary.
    pub euler: i128,
    pub genus: u128,
    /// Contact points removed from the boundary; not reflected in `euler`.
    pub boundary_punctures: u128,
}

fn check_n(n: u64) -> Result<(), CensusError> {
    if n < 3 {
        Err(CensusError::TooFewPearls(n))
    } else {
        Ok(())
    }
}

fn pow(base: u128, exp: u64) -> Result<u128, CensusError> {
    let exp = u32::try_from(exp).map_err(|_| CensusError::Overflow)?;
    base.checked_pow(exp).ok_or(CensusError::Overflow)
}

/// `n(n-1)^k`: pearls in stage `k`.
pub fn pearl_count(n: u64, k: u64) -> Result<u128, CensusError> {
    check_n(n)?;
    pow(n as u128 - 1, k)?
        .checked_mul(n as u128)
        .ok_or(CensusError::Overflow)
}

/// Reduced words of length exactly `k`: `n(n-1)^{k-1}`, and 1 for `k = 0`.
pub fn word_count(n: u64, k: u64) -> Result<u128, CensusError> {
    check_n(n)?;
    if k == 0 {
        return Ok(1);
    }
    pearl_count(n, k - 1)
}

/// Copies of the template and of its mirror image in the stage-`k` template.
pub fn composition(n: u64, k: u64) -> Result<CompositionCount, CensusError> {
    check_n(n)?;
    let mut direct: u128 = 1;
    let mut mirror: u128 = 0;
    for j in 1..=k {
        let added = word_count(n, j)?;
        let slot = if j % 2 == 1 { &mut mirror } else { &mut direct };
        *slot = slot.checked_add(added).ok_or(CensusError::Overflow)?;
    }
    let total = direct.checked_add(mirror).ok_or(CensusError::Overflow)?;
    Ok(CompositionCount {
        direct,
        mirror,
        total,
    })
}

/// Arc-sum of `copies` surfaces of genus `genus_s` with `boundary_s` boundary circles.
pub fn arc_sum(copies: u128, genus_s: u64, boundary_s: u64) -> Result<FiberStats, CensusError> {
    if genus_s < 1 || boundary_s < 1 {
        return Err(CensusError::BadSurface);
    }
    let chi = 2 - 2 * genus_s as i128 - boundary_s as i128;
    let c = i128::try_from(copies).map_err(|_| CensusError::Overflow)?;
    // gluing along an arc: chi(A ∪ B) = chi(A) + chi(B) - 1
    let euler = c
        .checked_mul(chi)
        .and_then(|e| e.checked_sub(c - 1))
        .ok_or(CensusError::Overflow)?;
    let genus = copies
        .checked_mul(genus_s as u128)
        .ok_or(CensusError::Overflow)?;
    Ok(FiberStats {
        copies,
        euler,
        genus,
        boundary_punctures: 0,
    })
}

/// Truncated fiber after `k` stages.
pub fn fiber_stats(
    n: u64,
    k: u64,
    genus_s: u64,
    boundary_s: u64,
) -> Result<FiberStats, CensusError> {
    let copies = composition(n, k)?.total;
    let mut stats = arc_sum(copies, genus_s, boundary_s)?;
    stats.boundary_punctures = pearl_count(n, k)?;
    Ok(stats)
}

/// Fiber of the orientation-preserving index-two subgroup: two copies, `2(n-1)` punctures.
pub fn index_two_fiber(n: u64, genus_s: u64, boundary_s: u64) -> Result<FiberStats, CensusError> {
    check_n(n)?;
    let mut stats = arc_sum(2, genus_s, boundary_s)?;
    stats.boundary_punctures = 2 * (n as u128 - 1);
    Ok(stats)
}
