//! Small fixed instances with known answers, and the closed-form two-date
//! example with uniform first marginal and trapezoidal second marginal.

use crate::error::Result;
use crate::hedge::{DeltaTable, HedgeSense, SemiStaticHedge};
use crate::measures::{discretize, DensitySpec, DiscreteMeasure, MarginalSystem};
use crate::payoff::{Payoff, TabulatedPayoff};
use crate::pwl::PiecewiseLinear;

/// `μ1 = ½δ_{-1} + ½δ_1`, `μ2 = ⅓(δ_{-2} + δ_0 + δ_2)`.
pub fn instance_a() -> MarginalSystem {
    MarginalSystem::new(vec![
        DiscreteMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).expect("valid"),
        DiscreteMeasure::new(vec![-2.0, 0.0, 2.0], vec![1.0 / 3.0; 3]).expect("valid"),
    ])
    .expect("valid")
}

/// Indicator of the cell `(-1, -2)` on the grids of [`instance_a`].
pub fn instance_b_payoff() -> Payoff {
    let table = TabulatedPayoff::new(
        vec![vec![-1.0, 1.0], vec![-2.0, 0.0, 2.0]],
        vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    )
    .expect("valid");
    Payoff::tabulated(table)
}

pub fn uniform_density() -> DensitySpec {
    DensitySpec::Uniform { a: -1.0, b: 1.0 }
}

/// `(2+s)/3` on `[-2,-1]`, `1/3` on `[-1,1]`, `(2-s)/3` on `[1,2]`.
pub fn trapezoid_density() -> DensitySpec {
    DensitySpec::PiecewiseLinear {
        knots: vec![-2.0, -1.0, 1.0, 2.0],
        values: vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 0.0],
    }
}

/// Both densities discretized with `m` equal-mass barycentric cells.
pub fn trapezoid_marginals(m: usize) -> Result<MarginalSystem> {
    MarginalSystem::new(vec![discretize(&uniform_density(), m)?, discretize(&trapezoid_density(), m)?])
}

pub fn closed_form_u1(s: f64) -> f64 {
    (9.0 - 5.0 * s * s) / 6.0
}

pub fn closed_form_u2(s: f64) -> f64 {
    if s < -1.0 {
        -3.0 - 3.0 * s - 2.0 * s * s / 3.0
    } else if s > 1.0 {
        -3.0 + 3.0 * s - 2.0 * s * s / 3.0
    } else {
        -closed_form_u1(s)
    }
}

pub fn closed_form_delta(s: f64) -> f64 {
    -2.0 * s / 3.0
}

/// The closed-form subhedge of `|s2 - s1|`, sampled on the given grids.
pub fn closed_form_hedge(grid1: &[f64], grid2: &[f64]) -> Result<SemiStaticHedge> {
    let u1 = PiecewiseLinear::interpolating(grid1.to_vec(), grid1.iter().map(|&s| closed_form_u1(s)).collect())?;
    let u2 = PiecewiseLinear::interpolating(grid2.to_vec(), grid2.iter().map(|&s| closed_form_u2(s)).collect())?;
    let delta = DeltaTable::new(vec![grid1.to_vec()], grid1.iter().map(|&s| closed_form_delta(s)).collect())?;
    Ok(SemiStaticHedge { cash: 0.0, statics: vec![u1, u2], deltas: vec![delta], sense: HedgeSense::Sub })
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}
