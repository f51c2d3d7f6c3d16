use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::SynthView;
use crate::camera::overlap_ratio;
use crate::error::invalid;
use crate::{rng, Error, Result};

/// Covisibility of an unordered view pair: the smaller of the two directed
/// overlap ratios.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairOverlap {
    pub source: usize,
    pub target: usize,
    pub overlap: f64,
}

pub fn pair_overlaps(views: &[SynthView], rel_depth_tau: f64) -> Result<Vec<PairOverlap>> {
    if views.len() < 2 {
        return Err(invalid("pair sampling needs at least two views"));
    }
    let mut out = Vec::new();
    for a in 0..views.len() {
        for b in a + 1..views.len() {
            let (va, vb) = (&views[a], &views[b]);
            let ab = overlap_ratio(
                &va.depth,
                &vb.depth,
                &va.intrinsics,
                &vb.intrinsics,
                &va.relative_pose(vb),
                rel_depth_tau,
            )?;
            let ba = overlap_ratio(
                &vb.depth,
                &va.depth,
                &vb.intrinsics,
                &va.intrinsics,
                &vb.relative_pose(va),
                rel_depth_tau,
            )?;
            out.push(PairOverlap {
                source: a,
                target: b,
                overlap: ab.min(ba),
            });
        }
    }
    Ok(out)
}

/// Draws `count` pairs with replacement, each with probability proportional to
/// its overlap among pairs whose overlap lies in `[lo, hi]`.
pub fn sample_weighted_pairs(
    overlaps: &[PairOverlap],
    lo: f64,
    hi: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if !(lo <= hi) {
        return Err(invalid(format!("overlap range [{lo}, {hi}] is empty")));
    }
    let pool: Vec<&PairOverlap> = overlaps
        .iter()
        .filter(|p| p.overlap >= lo && p.overlap <= hi && p.overlap > 0.0)
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptySet("pairs with overlap in range"));
    }
    let dist =
        WeightedIndex::new(pool.iter().map(|p| p.overlap)).map_err(|e| invalid(e.to_string()))?;
    let mut r = rng::seeded(seed);
    Ok((0..count)
        .map(|_| {
            let p = pool[dist.sample(&mut r)];
            (p.source, p.target)
        })
        .collect())
}

pub fn sample_pairs(
    views: &[SynthView],
    lo: f64,
    hi: f64,
    count: usize,
    seed: u64,
    rel_depth_tau: f64,
) -> Result<Vec<(usize, usize)>> {
    sample_weighted_pairs(&pair_overlaps(views, rel_depth_tau)?, lo, hi, count, seed)
}
