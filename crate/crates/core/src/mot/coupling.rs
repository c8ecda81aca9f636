use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::MarginalSystem;
use crate::payoff::Payoff;

/// A sparse joint law on the product of the date grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    grids: Vec<Vec<f64>>,
    /// `(grid index per date, mass)`, sorted by index.
    cells: Vec<(Vec<usize>, f64)>,
}

impl Coupling {
    pub fn new(grids: Vec<Vec<f64>>, mut cells: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        for (idx, q) in &cells {
            if idx.len() != grids.len() {
                return Err(Error::DimensionMismatch { expected: grids.len(), got: idx.len() });
            }
            if idx.iter().zip(&grids).any(|(&i, g)| i >= g.len()) || !(*q >= 0.0) {
                return Err(Error::InvalidMeasure(format!("bad coupling cell {idx:?} with mass {q}")));
            }
        }
        cells.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Self { grids, cells })
    }

    /// Keeps the positive entries of a dense row-major mass vector.
    pub fn from_primal(grids: Vec<Vec<f64>>, primal: &[f64]) -> Self {
        let n = grids.len();
        let mut cells = Vec::new();
        for (flat, &q) in primal.iter().enumerate() {
            if q > 0.0 {
                let mut idx = vec![0; n];
                let mut rest = flat;
                for d in (0..n).rev() {
                    idx[d] = rest % grids[d].len();
                    rest /= grids[d].len();
                }
                cells.push((idx, q));
            }
        }
        Self { grids, cells }
    }

    pub fn grids(&self) -> &[Vec<f64>] {
        &self.grids
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        self.cells.iter().map(|(i, q)| (i.as_slice(), *q))
    }

    /// `(point, mass)` pairs.
    pub fn cells(&self) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        self.cells
            .iter()
            .map(|(idx, q)| (idx.iter().zip(&self.grids).map(|(&i, g)| g[i]).collect(), *q))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.1).sum()
    }

    /// Mass per grid point of date `i`.
    pub fn marginal(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.grids[i].len()];
        for (idx, q) in &self.cells {
            out[idx[i]] += q;
        }
        out
    }

    /// Mass per history cell over dates `0..=j`, row-major.
    pub fn history_mass(&self, j: usize) -> Vec<f64> {
        let size: usize = self.grids[..=j].iter().map(Vec::len).product();
        let mut out = vec![0.0; size];
        for (idx, q) in &self.cells {
            out[self.history_index(idx, j)] += q;
        }
        out
    }

    fn history_index(&self, idx: &[usize], j: usize) -> usize {
        (0..=j).fold(0, |acc, d| acc * self.grids[d].len() + idx[d])
    }

    /// Largest deviation of the coupling's marginals from the system's,
    /// matching grid points to atoms by value.
    pub fn max_marginal_residual(&self, system: &MarginalSystem) -> f64 {
        let mut worst = 0.0f64;
        for (i, mu) in system.marginals().iter().enumerate() {
            let got = self.marginal(i);
            for (&x, &m) in self.grids[i].iter().zip(&got) {
                let want = mu.index_of(x, 1e-12).map_or(0.0, |k| mu.weights()[k]);
                worst = worst.max((m - want).abs());
            }
            for (&x, &w) in mu.points().iter().zip(mu.weights()) {
                if !self.grids[i].iter().any(|&g| (g - x).abs() <= 1e-12 * (1.0 + x.abs())) {
                    worst = worst.max(w);
                }
            }
        }
        worst
    }

    /// `max |Σ q·(s_{j+1} - s_j)|` over history cells.
    pub fn max_martingale_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.grids.len().saturating_sub(1) {
            let size: usize = self.grids[..=j].iter().map(Vec::len).product();
            let mut drift = vec![0.0; size];
            for (idx, q) in &self.cells {
                drift[self.history_index(idx, j)] += q * (self.grids[j + 1][idx[j + 1]] - self.grids[j][idx[j]]);
            }
            worst = drift.iter().fold(worst, |w, d| w.max(d.abs()));
        }
        worst
    }

    /// `Σ q·Φ`.
    pub fn expect(&self, payoff: &Payoff) -> Result<f64> {
        let mut v = 0.0;
        for (s, q) in self.cells() {
            v += q * payoff.evaluate(&s)?;
        }
        Ok(v)
    }
}
