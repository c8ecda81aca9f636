//! Discrete marginal laws, their call-price curves and the convex-order
//! admissibility check.

mod barriers;
mod density;

pub use barriers::{
    counterexample_marginals, detect_barriers, inverse_square_partial_sums, BarrierSplit, Block, DEFAULT_BARRIER_TOL,
};
pub use density::{discretize, DensitySpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the convex-order and equal-mean checks.
pub const ORDER_TOL: f64 = 1e-10;

/// An atomic probability measure on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRecord")]
pub struct DiscreteMeasure {
    points: Vec<f64>,
    weights: Vec<f64>,
    mean: f64,
}

#[derive(Deserialize)]
struct MeasureRecord {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<MeasureRecord> for DiscreteMeasure {
    type Error = Error;

    fn try_from(r: MeasureRecord) -> Result<Self> {
        DiscreteMeasure::new(r.points, r.weights)
    }
}

impl DiscreteMeasure {
    /// Builds a measure from strictly increasing points and nonnegative
    /// weights summing to one (within 1e-9; the weights are renormalized).
    /// Zero-weight atoms are dropped.
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite point or weight".into()));
        }
        if let Some(w) = weights.iter().find(|&&w| w < 0.0) {
            return Err(Error::InvalidMeasure(format!("negative weight {w}")));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidMeasure("points must be strictly increasing".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        let (points, weights): (Vec<f64>, Vec<f64>) = points
            .into_iter()
            .zip(weights)
            .filter(|&(_, w)| w > 0.0)
            .map(|(x, w)| (x, w / total))
            .unzip();
        if points.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        let mean = points.iter().zip(&weights).map(|(x, w)| x * w).sum();
        Ok(Self { points, weights, mean })
    }

    /// Builds a measure from unordered `(point, weight)` pairs, merging
    /// coincident points.
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut points: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut weights: Vec<f64> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            if points.last() == Some(&x) {
                *weights.last_mut().unwrap() += w;
            } else {
                points.push(x);
                weights.push(w);
            }
        }
        Self::new(points, weights)
    }

    pub fn dirac(x: f64) -> Self {
        Self { points: vec![x], weights: vec![1.0], mean: x }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms().map(|(x, w)| w * f(x)).sum()
    }

    /// `E[(X - strike)^+]`.
    pub fn call_price(&self, strike: f64) -> f64 {
        self.atoms().map(|(x, w)| w * (x - strike).max(0.0)).sum()
    }

    /// Index of the atom equal to `x` (within `tol`), if any.
    pub fn index_of(&self, x: f64, tol: f64) -> Option<usize> {
        let i = self.points.partition_point(|&p| p < x - tol);
        (i < self.points.len() && (self.points[i] - x).abs() <= tol).then_some(i)
    }

    /// Index of the heaviest atom, lowest index on ties.
    pub fn heaviest_atom(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }
}

/// Free-function form of [`DiscreteMeasure::call_price`].
pub fn call_price(measure: &DiscreteMeasure, strike: f64) -> f64 {
    measure.call_price(strike)
}

/// Call quotes for one maturity with strictly increasing strikes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallCurve {
    maturity_index: usize,
    quotes: Vec<(f64, f64)>,
}

impl CallCurve {
    pub fn new(maturity_index: usize, mut quotes: Vec<(f64, f64)>) -> Result<Self> {
        quotes.sort_by(|a, b| a.0.total_cmp(&b.0));
        if quotes.len() < 2 {
            return Err(Error::InfeasibleCurve("at least two quotes are required".into()));
        }
        if quotes.iter().any(|(k, c)| !k.is_finite() || !c.is_finite()) {
            return Err(Error::InfeasibleCurve("non-finite quote".into()));
        }
        if quotes.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::InfeasibleCurve("duplicate strike".into()));
        }
        if let Some((k, c)) = quotes.iter().find(|(_, c)| *c < -ORDER_TOL) {
            return Err(Error::InfeasibleCurve(format!("negative price {c} at strike {k}")));
        }
        Ok(Self { maturity_index, quotes })
    }

    pub fn maturity_index(&self) -> usize {
        self.maturity_index
    }

    pub fn quotes(&self) -> &[(f64, f64)] {
        &self.quotes
    }

    /// Tabulates the call prices of `measure` at the given strikes.
    pub fn from_measure(maturity_index: usize, measure: &DiscreteMeasure, strikes: &[f64]) -> Result<Self> {
        Self::new(maturity_index, strikes.iter().map(|&k| (k, measure.call_price(k))).collect())
    }

    fn slopes(&self) -> Vec<f64> {
        self.quotes
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect()
    }
}

/// Recovers the atomic measure whose call prices interpolate `curve`.
///
/// Atoms sit at the quoted strikes with mass equal to the slope jump of the
/// piecewise-linear call function. Outside the quotes the call function is
/// continued with slope -1 on the left and 0 on the right; when the quotes are
/// not consistent with that closure (`C(K_1) + K_1 > s0`, or `C(K_L) > 0`) a
/// boundary atom absorbs the missing mass and first moment.
pub fn from_call_curve(curve: &CallCurve, s0: f64) -> Result<DiscreteMeasure> {
    const TOL: f64 = 1e-10;
    let q = curve.quotes();
    let slopes = curve.slopes();
    for (i, s) in slopes.iter().enumerate() {
        if *s < -1.0 - TOL || *s > TOL {
            return Err(Error::InfeasibleCurve(format!(
                "slope {s} between strikes {} and {} is outside [-1, 0]",
                q[i].0,
                q[i + 1].0
            )));
        }
    }
    for (i, w) in slopes.windows(2).enumerate() {
        if w[1] - w[0] < -TOL {
            return Err(Error::InfeasibleCurve(format!(
                "negative second difference {} at strike {}",
                w[1] - w[0],
                q[i + 1].0
            )));
        }
    }

    let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(q.len() + 2);

    // Left closure: C(K) + K must tend to s0.
    let (k1, c1) = q[0];
    let excess = c1 + k1 - s0;
    let mut left_slope = -1.0;
    if excess < -TOL {
        return Err(Error::InfeasibleCurve(format!(
            "C({k1}) = {c1} is below the intrinsic bound s0 - K = {}",
            s0 - k1
        )));
    }
    if excess > TOL {
        let w0 = 1.0 + slopes[0];
        if w0 <= TOL {
            return Err(Error::InfeasibleCurve(
                "first slope is -1 but the left boundary needs positive mass".into(),
            ));
        }
        atoms.push((k1 - excess / w0, w0));
        left_slope = slopes[0];
    }

    // Right closure: C must vanish beyond the last strike.
    let (kl, cl) = *q.last().unwrap();
    let mut right_slope = 0.0;
    let mut right_atom = None;
    if cl > TOL {
        let w = -slopes[slopes.len() - 1];
        if w <= TOL {
            return Err(Error::InfeasibleCurve(
                "last slope is 0 but the right boundary needs positive mass".into(),
            ));
        }
        right_atom = Some((kl + cl / w, w));
        right_slope = slopes[slopes.len() - 1];
    }

    let n = q.len();
    for l in 0..n {
        let before = if l == 0 { left_slope } else { slopes[l - 1] };
        let after = if l == n - 1 { right_slope } else { slopes[l] };
        let mass = after - before;
        if mass < -TOL {
            return Err(Error::InfeasibleCurve(format!("negative mass {mass} at strike {}", q[l].0)));
        }
        if mass > 1e-14 {
            atoms.push((q[l].0, mass));
        }
    }
    atoms.extend(right_atom);

    let total: f64 = atoms.iter().map(|a| a.1).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InfeasibleCurve(format!("implied total mass {total}")));
    }
    DiscreteMeasure::from_atoms(atoms)
}

/// Worst call-price violation for one adjacent pair of dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairViolation {
    /// Zero-based index `i` of the pair `(i, i + 1)`.
    pub index: usize,
    /// `max_K C_i(K) - C_{i+1}(K)`; positive means the order fails.
    pub worst_violation: f64,
    pub worst_strike: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub means_equal: bool,
    pub means: Vec<f64>,
    pub pairs: Vec<PairViolation>,
    pub admissible: bool,
}

impl OrderReport {
    pub fn summary(&self) -> String {
        if self.admissible {
            return "admissible".into();
        }
        let mut parts = Vec::new();
        if !self.means_equal {
            parts.push(format!("unequal means {:?}", self.means));
        }
        for p in self.pairs.iter().filter(|p| p.worst_violation > ORDER_TOL) {
            parts.push(format!(
                "dates {}->{}: call price drops by {:.3e} at strike {}",
                p.index + 1,
                p.index + 2,
                p.worst_violation,
                p.worst_strike
            ));
        }
        parts.join("; ")
    }
}

fn merged_points(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Vec<f64> {
    let mut pts: Vec<f64> = a.points().iter().chain(b.points()).copied().collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn order_report(marginals: &[DiscreteMeasure]) -> OrderReport {
    let means: Vec<f64> = marginals.iter().map(|m| m.mean()).collect();
    let means_equal = means.iter().all(|m| (m - means[0]).abs() <= ORDER_TOL);
    let pairs: Vec<PairViolation> = marginals
        .windows(2)
        .enumerate()
        .map(|(index, w)| {
            let mut worst = PairViolation { index, worst_violation: f64::NEG_INFINITY, worst_strike: f64::NAN };
            // Both call functions are piecewise linear with kinks at atoms.
            for k in merged_points(&w[0], &w[1]) {
                let v = w[0].call_price(k) - w[1].call_price(k);
                if v > worst.worst_violation {
                    worst.worst_violation = v;
                    worst.worst_strike = k;
                }
            }
            worst
        })
        .collect();
    let admissible = means_equal && pairs.iter().all(|p| p.worst_violation <= ORDER_TOL);
    OrderReport { means_equal, means, pairs, admissible }
}

/// The ordered marginals of a multi-date problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSystem {
    marginals: Vec<DiscreteMeasure>,
    s0: f64,
    admissible: bool,
}

impl MarginalSystem {
    /// Wraps the marginals and records whether they increase in convex order.
    /// Non-admissible systems are representable so they can be reported on.
    pub fn new(marginals: Vec<DiscreteMeasure>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidMeasure("a marginal system needs at least one date".into()));
        }
        let admissible = order_report(&marginals).admissible;
        let s0 = marginals[0].mean();
        Ok(Self { marginals, s0, admissible })
    }

    pub fn marginals(&self) -> &[DiscreteMeasure] {
        &self.marginals
    }

    pub fn marginal(&self, i: usize) -> &DiscreteMeasure {
        &self.marginals[i]
    }

    pub fn dates(&self) -> usize {
        self.marginals.len()
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn admissible(&self) -> bool {
        self.admissible
    }

    pub fn grids(&self) -> Vec<Vec<f64>> {
        self.marginals.iter().map(|m| m.points().to_vec()).collect()
    }
}

/// Checks equal means and `C_i(K) <= C_{i+1}(K)` at every atom of each
/// adjacent pair, which suffices because call functions of atomic measures
/// are piecewise linear with kinks at the atoms.
pub fn check_convex_order(system: &MarginalSystem) -> OrderReport {
    order_report(system.marginals())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point(a: f64, b: f64) -> DiscreteMeasure {
        DiscreteMeasure::new(vec![a, b], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn call_price_examples() {
        let d = DiscreteMeasure::dirac(100.0);
        assert_eq!(d.call_price(90.0), 10.0);
        assert_eq!(d.call_price(110.0), 0.0);
        assert_eq!(two_point(0.0, 2.0).call_price(1.0), 0.5);
    }

    #[test]
    fn construction_drops_zero_weights_and_rejects_bad_input() {
        let m = DiscreteMeasure::new(vec![0.0, 1.0, 2.0], vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(m.points(), &[0.0, 2.0]);
        assert!(DiscreteMeasure::new(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteMeasure::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(DiscreteMeasure::new(vec![0.0, 1.0], vec![1.5, -0.5]).is_err());
        let merged = DiscreteMeasure::from_atoms(vec![(1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]).unwrap();
        assert_eq!(merged.points(), &[0.0, 1.0]);
        assert_eq!(merged.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn curve_of_point_mass() {
        let c = CallCurve::new(0, vec![(90.0, 10.0), (100.0, 0.0), (110.0, 0.0)]).unwrap();
        let m = from_call_curve(&c, 100.0).unwrap();
        assert_eq!(m.points(), &[100.0]);
        assert!((m.weights()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn curve_second_differences() {
        let c = CallCurve::new(0, vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.0)]).unwrap();
        let m = from_call_curve(&c, 1.0).unwrap();
        assert_eq!(m.points(), &[0.0, 2.0]);
        assert!((m.weights()[0] - 0.5).abs() < 1e-15);
        assert!((m.weights()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nonconvex_curve_is_infeasible() {
        // slopes -0.5, -0.51, -0.49: second difference -0.01 at strike 1
        let c = CallCurve::new(0, vec![(0.0, 1.5), (1.0, 1.0), (2.0, 0.49), (3.0, 0.0)]).unwrap();
        assert!(matches!(from_call_curve(&c, 1.5), Err(Error::InfeasibleCurve(_))));
        assert!(matches!(
            CallCurve::new(0, vec![(0.0, 1.0), (1.0, -0.5)]),
            Err(Error::InfeasibleCurve(_))
        ));
    }

    #[test]
    fn boundary_atoms_restore_mass_and_mean() {
        // Quotes only cover the interior of the support of 1/4 δ0 + 1/2 δ2 + 1/4 δ4.
        let mu = DiscreteMeasure::new(vec![0.0, 2.0, 4.0], vec![0.25, 0.5, 0.25]).unwrap();
        let c = CallCurve::from_measure(0, &mu, &[1.0, 2.0, 3.0]).unwrap();
        let m = from_call_curve(&c, 2.0).unwrap();
        assert!((m.mean() - 2.0).abs() < 1e-12);
        for (k, p) in c.quotes() {
            assert!((m.call_price(*k) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn convex_order_examples() {
        let jensen = MarginalSystem::new(vec![DiscreteMeasure::dirac(0.0), two_point(-1.0, 1.0)]).unwrap();
        assert!(jensen.admissible());
        assert!(check_convex_order(&jensen).admissible);

        let reversed = MarginalSystem::new(vec![two_point(-1.0, 1.0), DiscreteMeasure::dirac(0.0)]).unwrap();
        let r = check_convex_order(&reversed);
        assert!(!r.admissible && r.means_equal);
        assert_eq!(r.pairs[0].worst_violation, 0.5);
        assert_eq!(r.pairs[0].worst_strike, 0.0);

        let shifted =
            MarginalSystem::new(vec![DiscreteMeasure::dirac(0.0), DiscreteMeasure::dirac(1.0)]).unwrap();
        let r = check_convex_order(&shifted);
        assert!(!r.admissible && !r.means_equal);
    }
}
