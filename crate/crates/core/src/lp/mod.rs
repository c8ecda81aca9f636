//! Equality-form linear programs with nonnegative variables, a revised
//! simplex solver that returns primal and dual solutions, and an exact
//! rational tableau solver used as an oracle.

mod exact;
mod lu;
mod simplex;

pub use exact::{solve_exact, ExactSolution, EXACT_MAX_VARIABLES};
pub use simplex::solve_with;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("invalid linear program: {0}")]
    Invalid(String),
    #[error("infeasible (phase one objective {phase_one:.3e})")]
    Infeasible { phase_one: f64 },
    #[error("unbounded along column {column}")]
    Unbounded { column: usize },
    #[error("iteration limit reached after {iterations} pivots")]
    IterationLimit { iterations: usize },
    #[error("exact oracle is limited to {limit} variables, got {variables}")]
    ScaleExceeded { variables: usize, limit: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

/// `optimize cost·x  s.t.  A x = rhs,  x >= 0`, with `A` given as sparse
/// `(row, col, value)` triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LpRecord")]
pub struct LinearProgram {
    sense: Sense,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    triples: Vec<(usize, usize, f64)>,
}

#[derive(Deserialize)]
struct LpRecord {
    sense: Sense,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    triples: Vec<(usize, usize, f64)>,
}

impl TryFrom<LpRecord> for LinearProgram {
    type Error = LpError;

    fn try_from(r: LpRecord) -> Result<Self, LpError> {
        LinearProgram::new(r.sense, r.cost, r.rhs, r.triples)
    }
}

impl LinearProgram {
    pub fn new(
        sense: Sense,
        cost: Vec<f64>,
        rhs: Vec<f64>,
        mut triples: Vec<(usize, usize, f64)>,
    ) -> Result<Self, LpError> {
        if cost.is_empty() || rhs.is_empty() {
            return Err(LpError::Invalid("need at least one variable and one constraint".into()));
        }
        if cost.iter().chain(&rhs).any(|v| !v.is_finite()) {
            return Err(LpError::Invalid("non-finite cost or rhs".into()));
        }
        for &(r, c, v) in &triples {
            if r >= rhs.len() || c >= cost.len() {
                return Err(LpError::Invalid(format!("entry ({r}, {c}) out of range")));
            }
            if !v.is_finite() {
                return Err(LpError::Invalid(format!("non-finite coefficient at ({r}, {c})")));
            }
        }
        triples.sort_by_key(|&(r, c, _)| (c, r));
        if triples.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(LpError::Invalid("duplicate (row, col) entry".into()));
        }
        triples.retain(|t| t.2 != 0.0);
        Ok(Self { sense, cost, rhs, triples })
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Nonzero entries sorted by column, then row.
    pub fn triples(&self) -> &[(usize, usize, f64)] {
        &self.triples
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cost.len()
    }

    /// `A x`.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_rows()];
        for &(r, c, v) in &self.triples {
            out[r] += v * x[c];
        }
        out
    }

    /// `cost - Aᵀ y`.
    pub fn reduced_costs(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.cost.clone();
        for &(r, c, v) in &self.triples {
            out[c] -= v * y[r];
        }
        out
    }

    /// Returns a copy with every cost multiplied by `factor`.
    pub fn scaled_cost(&self, factor: f64) -> Self {
        Self { cost: self.cost.iter().map(|c| c * factor).collect(), ..self.clone() }
    }
}

/// Optimal primal/dual pair of a [`LinearProgram`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub primal: Vec<f64>,
    /// One value per constraint row; `cost - Aᵀ dual` has the optimality
    /// sign for the sense (>= 0 for min, <= 0 for max).
    pub dual: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    /// `rhs · dual`.
    pub dual_objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn duality_gap(&self) -> f64 {
        (self.objective - self.dual_objective).abs()
    }

    /// `‖A x - b‖_∞`.
    pub fn primal_residual(&self, lp: &LinearProgram) -> f64 {
        lp.row_activity(&self.primal)
            .iter()
            .zip(lp.rhs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Most negative reduced cost after orienting by the sense (0 when all
    /// have the right sign).
    pub fn worst_reduced_cost(&self, sense: Sense) -> f64 {
        let sign = if sense == Sense::Min { 1.0 } else { -1.0 };
        self.reduced_costs.iter().map(|r| (sign * r).min(0.0)).fold(0.0, f64::min)
    }

    /// `max_j |x_j · r_j|`.
    pub fn slackness(&self) -> f64 {
        self.primal
            .iter()
            .zip(&self.reduced_costs)
            .map(|(x, r)| (x * r).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pricing {
    /// Most negative reduced cost, falling back to Bland's rule while stalled.
    Dantzig,
    /// Lowest-index entering and leaving variables throughout.
    Bland,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub feasibility_tol: f64,
    pub gap_tol: f64,
    pub max_iterations: usize,
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub stall_limit: usize,
    pub pricing: Pricing,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            gap_tol: 1e-7,
            max_iterations: 1_000_000,
            refactor_every: 100,
            stall_limit: 500,
            pricing: Pricing::Dantzig,
        }
    }
}

/// Two-phase revised simplex with default options.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_with(lp, &SolverOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_malformed_programs() {
        assert!(LinearProgram::new(Sense::Min, vec![], vec![1.0], vec![]).is_err());
        assert!(LinearProgram::new(Sense::Min, vec![1.0], vec![1.0], vec![(1, 0, 1.0)]).is_err());
        assert!(LinearProgram::new(Sense::Min, vec![1.0], vec![1.0], vec![(0, 0, 1.0), (0, 0, 2.0)]).is_err());
        assert!(LinearProgram::new(Sense::Min, vec![f64::NAN], vec![1.0], vec![(0, 0, 1.0)]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let lp = LinearProgram::new(Sense::Max, vec![1.0, 2.0], vec![1.0], vec![(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        let text = serde_json::to_string(&lp).unwrap();
        let back: LinearProgram = serde_json::from_str(&text).unwrap();
        assert_eq!(lp, back);
        assert!(serde_json::from_str::<LinearProgram>(r#"{"sense":"min","cost":[1],"rhs":[1],"triples":[[3,0,1]]}"#).is_err());
    }
}
