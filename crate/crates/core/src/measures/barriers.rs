use serde::{Deserialize, Serialize};

use super::{DiscreteMeasure, MarginalSystem};
use crate::error::{Error, Result};

pub const DEFAULT_BARRIER_TOL: f64 = 1e-10;

/// A closed interval between consecutive barriers, with the two marginals
/// restricted to it and renormalized. Every martingale coupling keeps the
/// mass of `mu1` inside the block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub lo: f64,
    pub hi: f64,
    /// Probability mass of the block (same under both marginals).
    pub mass: f64,
    pub mu1: DiscreteMeasure,
    pub mu2: DiscreteMeasure,
    /// Indices of the block's atoms in the unrestricted marginals.
    pub mu1_atoms: Vec<usize>,
    pub mu2_atoms: Vec<usize>,
}

/// Barrier levels and the blocks they induce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSplit {
    pub barriers: Vec<f64>,
    pub blocks: Vec<Block>,
}

fn neighbour_gap_below(points: &[f64], x: f64) -> Option<f64> {
    let i = points.partition_point(|&p| p < x);
    (i > 0).then(|| x - points[i - 1])
}

fn neighbour_gap_above(points: &[f64], x: f64) -> Option<f64> {
    let i = points.partition_point(|&p| p <= x);
    (i < points.len()).then(|| points[i] - x)
}

/// Finds the interior levels where the call prices of `mu1` and `mu2`
/// coincide and splits both marginals into the induced blocks.
///
/// Equality of call prices at `s` forces every martingale coupling to keep
/// `S_1 <= s` paths at `S_2 <= s` and `S_1 > s` paths at `S_2 >= s`. On atomic
/// marginals the equality set is a union of gaps between consecutive atoms;
/// each such gap yields one barrier, placed where the gap is split in
/// proportion to the spacing of the `mu2` atoms on either side (the cell
/// boundary of a barycentric grid, the midpoint for uniform spacing).
///
/// Touching points at an isolated atom are not reported: they do not separate
/// the atom sets.
pub fn detect_barriers(mu1: &DiscreteMeasure, mu2: &DiscreteMeasure, tol: f64) -> Result<BarrierSplit> {
    if (mu1.mean() - mu2.mean()).abs() > super::ORDER_TOL {
        return Err(Error::InvalidMeasure("barrier detection needs equal means".into()));
    }
    let mut union: Vec<f64> = mu1.points().iter().chain(mu2.points()).copied().collect();
    union.sort_by(f64::total_cmp);
    union.dedup();
    let zero: Vec<bool> = union
        .iter()
        .map(|&x| (mu2.call_price(x) - mu1.call_price(x)).abs() <= tol)
        .collect();

    let mut barriers = Vec::new();
    for k in 0..union.len().saturating_sub(1) {
        if zero[k] && zero[k + 1] {
            let (xl, xr) = (union[k], union[k + 1]);
            let gap = xr - xl;
            let hl = neighbour_gap_below(mu2.points(), xl).unwrap_or(gap);
            let hr = neighbour_gap_above(mu2.points(), xr).unwrap_or(gap);
            barriers.push(xl + gap * hl / (hl + hr));
        }
    }

    let mut blocks = Vec::with_capacity(barriers.len() + 1);
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend(&barriers);
    edges.push(f64::INFINITY);
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let pick = |m: &DiscreteMeasure| -> Vec<usize> {
            (0..m.len()).filter(|&i| m.points()[i] > lo && m.points()[i] < hi).collect()
        };
        let (i1, i2) = (pick(mu1), pick(mu2));
        let mass1: f64 = i1.iter().map(|&i| mu1.weights()[i]).sum();
        let mass2: f64 = i2.iter().map(|&i| mu2.weights()[i]).sum();
        if i1.is_empty() && i2.is_empty() {
            continue;
        }
        if (mass1 - mass2).abs() > tol.max(1e-9) || i1.is_empty() || i2.is_empty() {
            return Err(Error::InvalidMeasure(format!(
                "block ({lo}, {hi}) carries mass {mass1} under mu1 but {mass2} under mu2; marginals not in convex order?"
            )));
        }
        let restrict = |m: &DiscreteMeasure, idx: &[usize], mass: f64| {
            DiscreteMeasure::new(
                idx.iter().map(|&i| m.points()[i]).collect(),
                idx.iter().map(|&i| m.weights()[i] / mass).collect(),
            )
        };
        blocks.push(Block {
            lo: idx_bound(&i1, &i2, mu1, mu2, true).max(lo),
            hi: idx_bound(&i1, &i2, mu1, mu2, false).min(hi),
            mass: mass1,
            mu1: restrict(mu1, &i1, mass1)?,
            mu2: restrict(mu2, &i2, mass2)?,
            mu1_atoms: i1,
            mu2_atoms: i2,
        });
    }
    // Report finite bounds: outermost blocks end at their extreme atoms.
    Ok(BarrierSplit { barriers, blocks })
}

fn idx_bound(i1: &[usize], i2: &[usize], mu1: &DiscreteMeasure, mu2: &DiscreteMeasure, low: bool) -> f64 {
    let it = i1.iter().map(|&i| mu1.points()[i]).chain(i2.iter().map(|&i| mu2.points()[i]));
    if low {
        it.fold(f64::INFINITY, f64::min)
    } else {
        it.fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Partial sums `Σ_{i<=n} 1/i²` for `n = 0..=count`.
pub fn inverse_square_partial_sums(count: usize) -> Vec<f64> {
    let mut sums = Vec::with_capacity(count + 1);
    let mut s = 0.0;
    sums.push(s);
    for i in 1..=count {
        s += 1.0 / (i * i) as f64;
        sums.push(s);
    }
    sums
}

/// Truncated instance with a unique martingale coupling and blocks of
/// length `1/n²` on `[0, 2]`.
///
/// The first marginal puts mass `1/(2n²)` at the midpoint of
/// `I_n = [Σ_{i<n} 1/i², Σ_{i<=n} 1/i²]` for `n <= blocks`, plus the residual
/// mass at the midpoint of the closing interval `[Σ_{i<=blocks} 1/i², 2]`.
/// The second marginal is uniform on `[0, 2]`, discretized barycentrically
/// with `per_block` equal cells inside every interval, so interval ends are
/// barriers.
pub fn counterexample_marginals(blocks: usize, per_block: usize) -> Result<MarginalSystem> {
    if blocks < 1 || per_block < 2 {
        return Err(Error::BadSpec(format!(
            "need blocks >= 1 and per_block >= 2 (got {blocks}, {per_block})"
        )));
    }
    let mut edges = inverse_square_partial_sums(blocks);
    edges.push(2.0);
    let mut atoms1 = Vec::with_capacity(edges.len() - 1);
    let mut atoms2 = Vec::with_capacity((edges.len() - 1) * per_block);
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let len = hi - lo;
        atoms1.push((0.5 * (lo + hi), 0.5 * len));
        let cell = len / per_block as f64;
        for c in 0..per_block {
            atoms2.push((lo + cell * (c as f64 + 0.5), 0.5 * cell));
        }
    }
    MarginalSystem::new(vec![DiscreteMeasure::from_atoms(atoms1)?, DiscreteMeasure::from_atoms(atoms2)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jensen_pair_has_one_block() {
        let mu1 = DiscreteMeasure::dirac(0.0);
        let mu2 = DiscreteMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let split = detect_barriers(&mu1, &mu2, DEFAULT_BARRIER_TOL).unwrap();
        assert!(split.barriers.is_empty());
        assert_eq!(split.blocks.len(), 1);
    }

    #[test]
    fn equal_marginals_split_every_gap() {
        let mu = DiscreteMeasure::new(vec![0.0, 1.0, 3.0], vec![0.2, 0.5, 0.3]).unwrap();
        let split = detect_barriers(&mu, &mu, DEFAULT_BARRIER_TOL).unwrap();
        assert_eq!(split.barriers.len(), 2);
        assert_eq!(split.blocks.len(), 3);
        for b in &split.blocks {
            assert_eq!(b.mu1.len(), 1);
            assert_eq!(b.mu1, b.mu2);
        }
    }

    #[test]
    fn counterexample_small_cases() {
        let sys = counterexample_marginals(1, 4).unwrap();
        assert_eq!(sys.marginal(0).points(), &[0.5, 1.5]);
        assert_eq!(sys.marginal(0).weights(), &[0.5, 0.5]);
        let split = detect_barriers(sys.marginal(0), sys.marginal(1), DEFAULT_BARRIER_TOL).unwrap();
        assert_eq!(split.barriers.len(), 1);
        assert!((split.barriers[0] - 1.0).abs() < 1e-12);

        let sys = counterexample_marginals(2, 2).unwrap();
        let mu1 = sys.marginal(0);
        let expect = [(0.5, 0.5), (1.125, 0.125), (1.625, 0.375)];
        for ((x, w), (ex, ew)) in mu1.atoms().zip(expect) {
            assert!((x - ex).abs() < 1e-15 && (w - ew).abs() < 1e-15);
        }
        assert!((mu1.mean() - 1.0).abs() < 1e-12);
        assert!((sys.marginal(1).mean() - 1.0).abs() < 1e-12);
        assert!(sys.admissible());
    }
}
