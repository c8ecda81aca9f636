//! Exotic payoffs on the asset path observed at finitely many dates.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A payoff tabulated on a product grid (row-major, last date fastest).
///
/// Lower semicontinuity is not checked for tabulated payoffs: on a finite grid
/// every function is continuous, so the hypothesis is vacuous at that scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedPayoff {
    pub grids: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl TabulatedPayoff {
    pub fn new(grids: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        let cells: usize = grids.iter().map(Vec::len).product();
        if grids.is_empty() || grids.iter().any(Vec::is_empty) {
            return Err(Error::InvalidPayoff("tabulated payoff needs nonempty grids".into()));
        }
        if grids.iter().any(|g| g.windows(2).any(|w| !(w[0] < w[1]))) {
            return Err(Error::InvalidPayoff("tabulation grids must be strictly increasing".into()));
        }
        if values.len() != cells {
            return Err(Error::DimensionMismatch { expected: cells, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPayoff("non-finite tabulated value".into()));
        }
        Ok(Self { grids, values })
    }

    fn lookup(&self, s: &[f64]) -> Result<f64> {
        let mut flat = 0;
        for (g, &x) in self.grids.iter().zip(s) {
            let tol = 1e-12 * (1.0 + x.abs());
            let i = g.partition_point(|&p| p < x - tol);
            if i >= g.len() || (g[i] - x).abs() > tol {
                return Err(Error::OffGrid(s.to_vec()));
            }
            flat = flat * g.len() + i;
        }
        Ok(self.values[flat])
    }
}

pub type PayoffFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum PayoffKind {
    /// `(s_2 - K·s_1)^+`
    ForwardStartCall { strike: f64 },
    /// `|s_2 - s_1|`
    ForwardStartStraddle,
    /// `-|s_2 - s_1|`
    NegatedStraddle,
    /// `(mean(s) - K)^+`
    AsianCall { strike: f64 },
    /// `(max(s) - K)^+`
    LookbackCall { strike: f64 },
    Tabulated(TabulatedPayoff),
    Custom(PayoffFn),
}

impl fmt::Debug for PayoffKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PayoffKind::ForwardStartCall { strike } => write!(f, "ForwardStartCall({strike})"),
            PayoffKind::ForwardStartStraddle => write!(f, "ForwardStartStraddle"),
            PayoffKind::NegatedStraddle => write!(f, "NegatedStraddle"),
            PayoffKind::AsianCall { strike } => write!(f, "AsianCall({strike})"),
            PayoffKind::LookbackCall { strike } => write!(f, "LookbackCall({strike})"),
            PayoffKind::Tabulated(t) => write!(f, "Tabulated({} cells)", t.values.len()),
            PayoffKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// An exotic payoff `Φ(s_1, …, s_n)` together with a growth constant `K_g`
/// certifying `Φ(s) >= -K_g·(1 + Σ|s_i|)`.
#[derive(Debug, Clone)]
pub struct Payoff {
    n: usize,
    kind: PayoffKind,
    growth_constant: f64,
}

impl Payoff {
    fn two_date(kind: PayoffKind, growth_constant: f64) -> Self {
        Self { n: 2, kind, growth_constant }
    }

    pub fn forward_start_call(strike: f64) -> Self {
        Self::two_date(PayoffKind::ForwardStartCall { strike }, 0.0)
    }

    pub fn forward_start_straddle() -> Self {
        Self::two_date(PayoffKind::ForwardStartStraddle, 0.0)
    }

    pub fn negated_straddle() -> Self {
        Self::two_date(PayoffKind::NegatedStraddle, 1.0)
    }

    pub fn asian_call(n: usize, strike: f64) -> Self {
        Self { n, kind: PayoffKind::AsianCall { strike }, growth_constant: 0.0 }
    }

    pub fn lookback_call(n: usize, strike: f64) -> Self {
        Self { n, kind: PayoffKind::LookbackCall { strike }, growth_constant: 0.0 }
    }

    pub fn tabulated(table: TabulatedPayoff) -> Self {
        let min = table.values.iter().copied().fold(f64::INFINITY, f64::min);
        Self { n: table.grids.len(), kind: PayoffKind::Tabulated(table), growth_constant: (-min).max(0.0) }
    }

    /// A user payoff. The growth constant is part of the contract: the caller
    /// declares `Φ(s) >= -growth_constant·(1 + Σ|s_i|)`.
    pub fn custom(n: usize, growth_constant: f64, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPayoff("payoff needs at least one date".into()));
        }
        if !(growth_constant >= 0.0) {
            return Err(Error::InvalidPayoff(format!("growth constant {growth_constant} must be >= 0")));
        }
        Ok(Self { n, kind: PayoffKind::Custom(Arc::new(f)), growth_constant })
    }

    /// `Φ + c + β·s_date`, as a custom payoff.
    pub fn plus_affine(&self, c: f64, beta: f64, date: usize) -> Self {
        let base = self.clone();
        let growth = self.growth_constant + c.abs() + beta.abs();
        Self {
            n: self.n,
            kind: PayoffKind::Custom(Arc::new(move |s: &[f64]| {
                base.evaluate(s).unwrap_or(f64::NAN) + c + beta * s[date]
            })),
            growth_constant: growth,
        }
    }

    pub fn dates(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &PayoffKind {
        &self.kind
    }

    pub fn growth_constant(&self) -> f64 {
        self.growth_constant
    }

    pub fn evaluate(&self, s: &[f64]) -> Result<f64> {
        if s.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: s.len() });
        }
        Ok(match &self.kind {
            PayoffKind::ForwardStartCall { strike } => (s[1] - strike * s[0]).max(0.0),
            PayoffKind::ForwardStartStraddle => (s[1] - s[0]).abs(),
            PayoffKind::NegatedStraddle => -(s[1] - s[0]).abs(),
            PayoffKind::AsianCall { strike } => (s.iter().sum::<f64>() / s.len() as f64 - strike).max(0.0),
            PayoffKind::LookbackCall { strike } => {
                (s.iter().copied().fold(f64::NEG_INFINITY, f64::max) - strike).max(0.0)
            }
            PayoffKind::Tabulated(t) => t.lookup(s)?,
            PayoffKind::Custom(f) => f(s),
        })
    }

    /// Values on the product of `grids`, row-major in date order (the last
    /// date varies fastest).
    pub fn tabulate(&self, grids: &[Vec<f64>]) -> Result<Vec<f64>> {
        if grids.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: grids.len() });
        }
        if grids.iter().any(Vec::is_empty) {
            return Err(Error::InvalidPayoff("empty tabulation grid".into()));
        }
        let cells: usize = grids.iter().map(Vec::len).product();
        let mut out = Vec::with_capacity(cells);
        let mut idx = vec![0usize; self.n];
        let mut point = vec![0.0; self.n];
        for _ in 0..cells {
            for (d, &i) in idx.iter().enumerate() {
                point[d] = grids[d][i];
            }
            let v = self.evaluate(&point)?;
            if !v.is_finite() {
                return Err(Error::InvalidPayoff(format!("non-finite value at {point:?}")));
            }
            out.push(v);
            for d in (0..self.n).rev() {
                idx[d] += 1;
                if idx[d] < grids[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(out)
    }

    /// For two-date payoffs piecewise linear in `s_2` with a single kink on
    /// the ray `s_2 = K·s_1`, returns `K`.
    pub fn forward_start_ratio(&self) -> Option<f64> {
        match self.kind {
            PayoffKind::ForwardStartCall { strike } => Some(strike),
            PayoffKind::ForwardStartStraddle | PayoffKind::NegatedStraddle => Some(1.0),
            _ => None,
        }
    }

    /// Worst value of `Φ(s) + K_g·(1 + Σ|s_i|)` over `samples` seeded random
    /// points in `[-scale, scale]^n` (grid points for tabulated payoffs).
    /// Nonnegative means the growth certificate held on the sample.
    pub fn growth_certificate_margin(&self, samples: usize, scale: f64, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = f64::INFINITY;
        let mut s = vec![0.0; self.n];
        for _ in 0..samples {
            match &self.kind {
                PayoffKind::Tabulated(t) => {
                    for (x, g) in s.iter_mut().zip(&t.grids) {
                        *x = g[rng.gen_range(0..g.len())];
                    }
                }
                _ => s.iter_mut().for_each(|x| *x = rng.gen_range(-scale..=scale)),
            }
            let bound = self.growth_constant * (1.0 + s.iter().map(|x| x.abs()).sum::<f64>());
            worst = worst.min(self.evaluate(&s)? + bound);
        }
        Ok(worst)
    }
}

/// JSON form of a payoff: `{"kind": ..., "n": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffSpec {
    pub kind: String,
    pub n: usize,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl PayoffSpec {
    pub fn build(&self) -> Result<Payoff> {
        let strike = || -> Result<f64> {
            self.params
                .get("K")
                .or_else(|| self.params.get("strike"))
                .and_then(serde_json::Value::as_f64)
                .ok_or_else(|| Error::InvalidPayoff(format!("payoff '{}' needs params.K", self.kind)))
        };
        let need_two = |p: Payoff| -> Result<Payoff> {
            if self.n != 2 {
                return Err(Error::InvalidPayoff(format!("payoff '{}' is defined for n = 2", self.kind)));
            }
            Ok(p)
        };
        match self.kind.as_str() {
            "forward_start_call" => need_two(Payoff::forward_start_call(strike()?)),
            "forward_start_straddle" => need_two(Payoff::forward_start_straddle()),
            "negated_straddle" => need_two(Payoff::negated_straddle()),
            "asian_call" => Ok(Payoff::asian_call(self.n, strike()?)),
            "lookback_call" => Ok(Payoff::lookback_call(self.n, strike()?)),
            "tabulated" => {
                let table: TabulatedPayoff = serde_json::from_value(self.params.clone())?;
                if table.grids.len() != self.n {
                    return Err(Error::DimensionMismatch { expected: self.n, got: table.grids.len() });
                }
                Ok(Payoff::tabulated(TabulatedPayoff::new(table.grids, table.values)?))
            }
            other => Err(Error::InvalidPayoff(format!("unknown payoff kind '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_examples() {
        assert_eq!(Payoff::forward_start_straddle().evaluate(&[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(Payoff::forward_start_call(1.0).evaluate(&[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(Payoff::asian_call(2, 0.0).evaluate(&[-1.0, 3.0]).unwrap(), 1.0);
        assert_eq!(Payoff::lookback_call(3, 1.0).evaluate(&[0.0, 4.0, 2.0]).unwrap(), 3.0);
        assert_eq!(Payoff::negated_straddle().evaluate(&[0.0, -2.0]).unwrap(), -2.0);
        assert!(matches!(
            Payoff::forward_start_straddle().evaluate(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn tabulate_examples() {
        let grids = vec![vec![-1.0, 1.0], vec![-2.0, 0.0, 2.0]];
        assert_eq!(
            Payoff::forward_start_straddle().tabulate(&grids).unwrap(),
            vec![1.0, 1.0, 3.0, 3.0, 1.0, 1.0]
        );
        let zero = Payoff::custom(2, 0.0, |_| 0.0).unwrap();
        assert!(zero.tabulate(&grids).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(
            Payoff::forward_start_call(0.5).tabulate(&[vec![1.0], vec![0.0, 1.0]]).unwrap(),
            vec![0.0, 0.5]
        );
    }

    #[test]
    fn tabulated_lookup_is_grid_only() {
        let grids = vec![vec![-1.0, 1.0], vec![-2.0, 0.0, 2.0]];
        let mut values = vec![0.0; 6];
        values[0] = 1.0;
        let p = Payoff::tabulated(TabulatedPayoff::new(grids, values).unwrap());
        assert_eq!(p.evaluate(&[-1.0, -2.0]).unwrap(), 1.0);
        assert_eq!(p.evaluate(&[1.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(p.evaluate(&[0.0, 0.0]), Err(Error::OffGrid(_))));
    }

    #[test]
    fn growth_certificates_hold_for_builtins() {
        let payoffs = [
            Payoff::forward_start_call(1.2),
            Payoff::forward_start_straddle(),
            Payoff::negated_straddle(),
            Payoff::asian_call(3, 0.5),
            Payoff::lookback_call(2, 1.0),
        ];
        for p in &payoffs {
            assert!(p.growth_certificate_margin(10_000, 100.0, 7).unwrap() >= 0.0, "{:?}", p.kind());
        }
    }

    #[test]
    fn straddle_is_twice_call_minus_forward() {
        let call = Payoff::forward_start_call(1.0);
        let straddle = Payoff::forward_start_straddle();
        for (a, b) in [(0.3, 1.7), (2.0, -1.0), (1.0, 1.0), (-0.5, 0.25)] {
            let lhs = straddle.evaluate(&[a, b]).unwrap();
            let rhs = 2.0 * call.evaluate(&[a, b]).unwrap() - (b - a);
            assert!((lhs - rhs).abs() < 1e-15);
        }
    }

    #[test]
    fn spec_round_trip() {
        let spec: PayoffSpec =
            serde_json::from_str(r#"{"kind":"forward_start_call","n":2,"params":{"K":1.1}}"#).unwrap();
        let p = spec.build().unwrap();
        assert!((p.evaluate(&[1.0, 2.0]).unwrap() - 0.9).abs() < 1e-15);
        let bad: PayoffSpec = serde_json::from_str(r#"{"kind":"forward_start_call","n":3,"params":{"K":1}}"#).unwrap();
        assert!(bad.build().is_err());
        let tab: PayoffSpec = serde_json::from_str(
            r#"{"kind":"tabulated","n":2,"params":{"grids":[[0,1],[0,1]],"values":[0,1,2,3]}}"#,
        )
        .unwrap();
        assert_eq!(tab.build().unwrap().evaluate(&[1.0, 0.0]).unwrap(), 2.0);
    }
}
