//! Semi-static hedges: static legs `u_i`, tabulated deltas `Δ_j` and cash,
//! assembled into `Ψ(s) = b + Σ u_i(s_i) + Σ Δ_j(s_1..s_j)·(s_{j+1} - s_j)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envelope::convex_envelope;
use crate::error::{Error, Result};
use crate::measures::MarginalSystem;
use crate::mot::Coupling;
use crate::payoff::{Payoff, PayoffKind};
use crate::pwl::PiecewiseLinear;

/// Default validity threshold for [`verify`].
pub const VERIFY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HedgeSense {
    /// `Ψ <= Φ`, certifies a lower bound.
    Sub,
    /// `Ψ >= Φ`, certifies an upper bound.
    Super,
}

impl HedgeSense {
    fn sign(self) -> f64 {
        match self {
            HedgeSense::Sub => 1.0,
            HedgeSense::Super => -1.0,
        }
    }
}

/// `Δ_j` tabulated on the product of the first `j` date grids, looked up at
/// the nearest grid point in each coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    grids: Vec<Vec<f64>>,
    /// Row-major, last coordinate fastest.
    values: Vec<f64>,
}

fn nearest(grid: &[f64], x: f64) -> usize {
    let i = grid.partition_point(|&g| g < x);
    if i == 0 {
        return 0;
    }
    if i == grid.len() {
        return grid.len() - 1;
    }
    if x - grid[i - 1] <= grid[i] - x {
        i - 1
    } else {
        i
    }
}

impl DeltaTable {
    pub fn new(grids: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        let cells: usize = grids.iter().map(Vec::len).product();
        if grids.is_empty() || cells != values.len() {
            return Err(Error::DimensionMismatch { expected: cells, got: values.len() });
        }
        Ok(Self { grids, values })
    }

    pub fn grids(&self) -> &[Vec<f64>] {
        &self.grids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn flat_index(&self, history: &[f64]) -> usize {
        self.grids.iter().zip(history).fold(0, |acc, (g, &x)| acc * g.len() + nearest(g, x))
    }

    pub fn lookup(&self, history: &[f64]) -> f64 {
        self.values[self.flat_index(history)]
    }

    pub fn add_constant(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v += c);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiStaticHedge {
    pub cash: f64,
    pub statics: Vec<PiecewiseLinear>,
    pub deltas: Vec<DeltaTable>,
    pub sense: HedgeSense,
}

impl SemiStaticHedge {
    pub fn zero(n: usize, sense: HedgeSense) -> Self {
        let deltas = (1..n)
            .map(|j| DeltaTable { grids: vec![vec![0.0]; j], values: vec![0.0] })
            .collect();
        Self { cash: 0.0, statics: vec![PiecewiseLinear::zero(); n], deltas, sense }
    }

    pub fn dates(&self) -> usize {
        self.statics.len()
    }

    /// `Ψ(s)`.
    pub fn evaluate(&self, s: &[f64]) -> f64 {
        let mut v = self.cash;
        for (u, &x) in self.statics.iter().zip(s) {
            v += u.eval(x);
        }
        for (j, d) in self.deltas.iter().enumerate() {
            v += d.lookup(&s[..=j]) * (s[j + 1] - s[j]);
        }
        v
    }

    /// Affine transfer between dates `date` and `date + 1`:
    /// `u_date += β·s`, `u_{date+1} -= β·s`, `Δ_date += β`. Leaves `Ψ` unchanged.
    pub fn transfer(&mut self, date: usize, beta: f64) {
        self.statics[date] = self.statics[date].add_affine(0.0, beta);
        self.statics[date + 1] = self.statics[date + 1].add_affine(0.0, -beta);
        self.deltas[date].add_constant(beta);
    }

    /// All static legs as one cash + forwards + calls portfolio.
    pub fn call_portfolio(&self) -> CallPortfolio {
        let mut out = CallPortfolio { cash: self.cash, forwards: Vec::new(), legs: Vec::new() };
        for (i, u) in self.statics.iter().enumerate() {
            let p = to_call_portfolio(u, i);
            out.cash += p.cash;
            out.forwards.extend(p.forwards);
            out.legs.extend(p.legs);
        }
        out
    }
}

/// One call position: `quantity` calls struck at `strike` maturing at `date`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CallLeg {
    pub date: usize,
    pub strike: f64,
    pub quantity: f64,
}

/// `cash + Σ β_i·s_i + Σ q·(s_date - K)^+`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallPortfolio {
    pub cash: f64,
    /// `(date, β)` pairs.
    pub forwards: Vec<(usize, f64)>,
    pub legs: Vec<CallLeg>,
}

impl CallPortfolio {
    /// Value of the part of the portfolio that matures at `date`, cash included.
    pub fn value_at(&self, date: usize, x: f64) -> f64 {
        let fwd: f64 = self.forwards.iter().filter(|f| f.0 == date).map(|f| f.1 * x).sum();
        let calls: f64 = self
            .legs
            .iter()
            .filter(|l| l.date == date)
            .map(|l| l.quantity * (x - l.strike).max(0.0))
            .sum();
        self.cash + fwd + calls
    }
}

/// Rewrites `u` as cash, a forward with the left wing slope and one call per
/// knot with a nonzero slope change.
pub fn to_call_portfolio(u: &PiecewiseLinear, date: usize) -> CallPortfolio {
    let knots = u.knots();
    let slopes = u.slopes();
    let forward = slopes[0];
    let cash = u.values()[0] - forward * knots[0];
    let legs = knots
        .iter()
        .enumerate()
        .filter_map(|(k, &strike)| {
            let quantity = slopes[k + 1] - slopes[k];
            (quantity != 0.0).then_some(CallLeg { date, strike, quantity })
        })
        .collect();
    CallPortfolio { cash, forwards: vec![(date, forward)], legs }
}

/// `b + Σ_i E_{μ_i}[u_i]`; the delta legs have zero price under every
/// martingale measure.
pub fn price(hedge: &SemiStaticHedge, system: &MarginalSystem) -> f64 {
    hedge.cash
        + hedge
            .statics
            .iter()
            .zip(system.marginals())
            .map(|(u, mu)| mu.expect(|x| u.eval(x)))
            .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub sense: HedgeSense,
    /// Largest amount by which `Ψ` crosses `Φ` on the grid (0 if never).
    pub max_violation: f64,
    pub worst_cell: Vec<f64>,
    pub cells_checked: usize,
    pub grid_sizes: Vec<usize>,
    pub valid: bool,
    /// For two-date payoffs piecewise linear in `s_2`, the largest crossing
    /// over the continuum in `s_2` between the grid extremes, with `s_1`
    /// on the grid.
    pub continuum_violation: Option<f64>,
}

/// Union of the atoms of all marginals with the midpoint of every gap added.
pub fn refined_grid(system: &MarginalSystem) -> Vec<f64> {
    let mut pts: Vec<f64> = system.marginals().iter().flat_map(|m| m.points().iter().copied()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|b, a| (*b - *a).abs() <= 1e-12 * (1.0 + a.abs()));
    let mut out = Vec::with_capacity(2 * pts.len());
    for w in pts.windows(2) {
        out.push(w[0]);
        let mid = 0.5 * (w[0] + w[1]);
        if w[0] < mid && mid < w[1] {
            out.push(mid);
        }
    }
    out.extend(pts.last());
    out
}

/// Default verification grids: [`refined_grid`] at every date, or the
/// table's own grids for a tabulated payoff.
pub fn default_verification_grids(system: &MarginalSystem, payoff: &Payoff) -> Vec<Vec<f64>> {
    match payoff.kind() {
        PayoffKind::Tabulated(t) => t.grids.clone(),
        _ => vec![refined_grid(system); system.dates()],
    }
}

fn cell_point(grids: &[Vec<f64>], mut flat: usize, out: &mut [f64]) {
    for d in (0..grids.len()).rev() {
        let len = grids[d].len();
        out[d] = grids[d][flat % len];
        flat /= len;
    }
}

/// Checks `Ψ <= Φ` (sub) or `Ψ >= Φ` (super) on the product of `grids`.
pub fn verify(hedge: &SemiStaticHedge, payoff: &Payoff, grids: &[Vec<f64>]) -> Result<VerificationReport> {
    let n = hedge.dates();
    if payoff.dates() != n || grids.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: grids.len().min(payoff.dates()) });
    }
    let cells: usize = grids.iter().map(Vec::len).product();
    let sign = hedge.sense.sign();
    let chunk = 4096;
    let partial: Vec<Result<(f64, usize)>> = (0..cells.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut s = vec![0.0; n];
            let mut best = (f64::NEG_INFINITY, c * chunk);
            for flat in c * chunk..((c + 1) * chunk).min(cells) {
                cell_point(grids, flat, &mut s);
                let v = sign * (hedge.evaluate(&s) - payoff.evaluate(&s)?);
                if v > best.0 {
                    best = (v, flat);
                }
            }
            Ok(best)
        })
        .collect();
    let mut worst = (f64::NEG_INFINITY, 0usize);
    for p in partial {
        let p = p?;
        if p.0 > worst.0 {
            worst = p;
        }
    }
    let mut worst_cell = vec![0.0; n];
    cell_point(grids, worst.1, &mut worst_cell);
    let max_violation = worst.0.max(0.0);

    let continuum_violation = match payoff.forward_start_ratio() {
        Some(k) if n == 2 => Some(continuum_check(hedge, payoff, grids, k)?),
        _ => None,
    };
    Ok(VerificationReport {
        sense: hedge.sense,
        max_violation,
        worst_cell,
        cells_checked: cells,
        grid_sizes: grids.iter().map(Vec::len).collect(),
        valid: max_violation <= VERIFY_TOL,
        continuum_violation,
    })
}

/// For fixed `s_1`, both `Φ(s_1, ·)` and `Ψ(s_1, ·)` are piecewise linear in
/// `s_2`, so their difference is extremal at the kinks of either one.
fn continuum_check(hedge: &SemiStaticHedge, payoff: &Payoff, grids: &[Vec<f64>], k: f64) -> Result<f64> {
    let sign = hedge.sense.sign();
    let (lo, hi) = (grids[1][0], grids[1][grids[1].len() - 1]);
    let mut worst = 0.0f64;
    for &s1 in &grids[0] {
        let mut probes: Vec<f64> = hedge.statics[1].knots().to_vec();
        probes.extend([k * s1, 0.0, lo, hi]);
        for s2 in probes {
            if s2 < lo || s2 > hi {
                continue;
            }
            let s = [s1, s2];
            worst = worst.max(sign * (hedge.evaluate(&s) - payoff.evaluate(&s)?));
        }
    }
    Ok(worst)
}

/// `max |Φ - Ψ|` over cells carrying more than 1e-12 mass.
pub fn slackness(hedge: &SemiStaticHedge, coupling: &Coupling, payoff: &Payoff) -> Result<f64> {
    let mut worst = 0.0f64;
    for (s, q) in coupling.cells() {
        if q > 1e-12 {
            worst = worst.max((payoff.evaluate(&s)? - hedge.evaluate(&s)).abs());
        }
    }
    Ok(worst)
}

/// Extends a two-date subhedge known on the marginal atoms to every point of
/// `grid` at both dates while keeping `Ψ <= Φ` on `grid × grid` and leaving
/// the values at the atoms (hence the price) untouched.
///
/// New first-date points get the best line below `s_2 ↦ Φ(s_1, s_2) - u_2(s_2)`
/// through the atoms of `μ_2`: the convex envelope with a subgradient inside
/// the hull, the extrapolated `u_1` with the steepest admissible slope outside
/// it. New second-date points get the largest `u_2` allowed by all first-date
/// points.
pub(crate) fn complete_two_date(
    u1_atoms: (&[f64], &[f64]),
    u2_atoms: (&[f64], &[f64]),
    delta_atoms: &[f64],
    phi: impl Fn(f64, f64) -> Result<f64>,
    grid: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (x1, v1) = u1_atoms;
    let (x2, v2) = u2_atoms;
    let u1_interp = PiecewiseLinear::interpolating(x1.to_vec(), v1.to_vec())?;
    let tol = 1e-12;
    let find = |xs: &[f64], s: f64| xs.iter().position(|&x| (x - s).abs() <= tol * (1.0 + s.abs()));

    let mut u1 = Vec::with_capacity(grid.len());
    let mut delta = Vec::with_capacity(grid.len());
    for &s1 in grid {
        if let Some(i) = find(x1, s1) {
            u1.push(v1[i]);
            delta.push(delta_atoms[i]);
            continue;
        }
        let g: Vec<f64> = x2
            .iter()
            .zip(v2)
            .map(|(&x, &u)| Ok(phi(s1, x)? - u))
            .collect::<Result<_>>()?;
        let (lo, hi) = (x2[0], x2[x2.len() - 1]);
        if x2.len() >= 2 && s1 > lo && s1 < hi {
            let env = convex_envelope(x2, &g)?;
            let k = env.knots();
            let j = k.partition_point(|&t| t <= s1);
            let slopes = env.slopes();
            // Between hull knots the segment slope is the only subgradient.
            let d = if k[j - 1] == s1 { 0.5 * (slopes[j - 1] + slopes[j]) } else { slopes[j] };
            u1.push(env.eval(s1));
            delta.push(d);
        } else {
            let u = u1_interp.eval(s1);
            let ratios = x2.iter().zip(&g).filter(|(&x, _)| x != s1).map(|(&x, &gx)| (gx - u) / (x - s1));
            let d = if s1 <= lo {
                ratios.fold(f64::INFINITY, f64::min)
            } else {
                ratios.fold(f64::NEG_INFINITY, f64::max)
            };
            let d = if d.is_finite() { d } else { 0.0 };
            // A point coinciding with a lone atom caps u.
            let cap = x2
                .iter()
                .zip(&g)
                .filter(|(&x, _)| x == s1)
                .map(|(_, &gx)| gx)
                .fold(f64::INFINITY, f64::min);
            u1.push(u.min(cap));
            delta.push(d);
        }
    }

    let mut u2 = Vec::with_capacity(grid.len());
    for &s2 in grid {
        if let Some(i) = find(x2, s2) {
            u2.push(v2[i]);
            continue;
        }
        let mut best = f64::INFINITY;
        for ((&s1, &a), &d) in grid.iter().zip(&u1).zip(&delta) {
            best = best.min(phi(s1, s2)? - a - d * (s2 - s1));
        }
        u2.push(best);
    }
    Ok((u1, u2, delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Buy,
    Sell,
    NoArb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub action: Action,
    pub quoted: f64,
    pub lower: f64,
    pub upper: f64,
    pub tolerance: f64,
    pub strategy: String,
}

/// Compares a quoted price with the bounds; `tol` defaults to `1e-6·(1+|quoted|)`.
pub fn check_arbitrage(quoted: f64, lower: f64, upper: f64, tol: Option<f64>) -> Verdict {
    let tolerance = tol.unwrap_or(1e-6 * (1.0 + quoted.abs()));
    let (action, strategy) = if quoted < lower - tolerance {
        (
            Action::Buy,
            format!("buy the exotic at {quoted} and sell the subhedge worth {lower}; the profit is locked in"),
        )
    } else if quoted > upper + tolerance {
        (
            Action::Sell,
            format!("sell the exotic at {quoted} and buy the superhedge worth {upper}; the profit is locked in"),
        )
    } else {
        (Action::NoArb, format!("quote is consistent with the interval [{lower}, {upper}]"))
    };
    Verdict { action, quoted, lower, upper, tolerance, strategy }
}

/// JSON export form of a hedge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeExport {
    pub sense: HedgeSense,
    pub cash: f64,
    pub portfolios: Vec<CallPortfolio>,
    pub deltas: Vec<DeltaTable>,
}

impl From<&SemiStaticHedge> for HedgeExport {
    fn from(h: &SemiStaticHedge) -> Self {
        Self {
            sense: h.sense,
            cash: h.cash,
            portfolios: h.statics.iter().enumerate().map(|(i, u)| to_call_portfolio(u, i)).collect(),
            deltas: h.deltas.clone(),
        }
    }
}

/// Rows `(s1, s2, Ψ, Φ, Φ - Ψ)` over a two-date grid.
pub fn surface(hedge: &SemiStaticHedge, payoff: &Payoff, grids: &[Vec<f64>]) -> Result<Vec<[f64; 5]>> {
    if hedge.dates() != 2 || grids.len() != 2 {
        return Err(Error::Unsupported("surfaces are defined for two dates".into()));
    }
    let mut rows = Vec::with_capacity(grids[0].len() * grids[1].len());
    for &s1 in &grids[0] {
        for &s2 in &grids[1] {
            let psi = hedge.evaluate(&[s1, s2]);
            let phi = payoff.evaluate(&[s1, s2])?;
            rows.push([s1, s2, psi, phi, phi - psi]);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DiscreteMeasure;

    #[test]
    fn portfolio_examples() {
        let call = PiecewiseLinear::new(vec![1.0], vec![0.0], 0.0, 1.0).unwrap();
        let p = to_call_portfolio(&call, 0);
        assert_eq!(p.cash, 0.0);
        assert_eq!(p.forwards, vec![(0, 0.0)]);
        assert_eq!(p.legs, vec![CallLeg { date: 0, strike: 1.0, quantity: 1.0 }]);

        let abs = PiecewiseLinear::new(vec![0.0], vec![0.0], -1.0, 1.0).unwrap();
        let p = to_call_portfolio(&abs, 1);
        assert_eq!(p.forwards, vec![(1, -1.0)]);
        assert_eq!(p.legs, vec![CallLeg { date: 1, strike: 0.0, quantity: 2.0 }]);
        for x in [-2.0, -0.5, 0.0, 3.0] {
            assert_eq!(p.value_at(1, x), abs.eval(x));
        }
    }

    #[test]
    fn zero_hedge() {
        let sys = MarginalSystem::new(vec![
            DiscreteMeasure::dirac(0.0),
            DiscreteMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap(),
        ])
        .unwrap();
        let h = SemiStaticHedge::zero(2, HedgeSense::Sub);
        assert_eq!(price(&h, &sys), 0.0);
        let r = verify(&h, &Payoff::forward_start_straddle(), &default_verification_grids(&sys, &Payoff::forward_start_straddle())).unwrap();
        assert!(r.valid);
        assert_eq!(r.max_violation, 0.0);
        assert_eq!(r.continuum_violation, Some(0.0));
    }

    #[test]
    fn identity_leg_prices_to_mean() {
        let sys = MarginalSystem::new(vec![DiscreteMeasure::new(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap()]).unwrap();
        let mut h = SemiStaticHedge::zero(1, HedgeSense::Sub);
        h.statics[0] = PiecewiseLinear::new(vec![0.0], vec![0.0], 1.0, 1.0).unwrap();
        h.cash = 0.5;
        assert_eq!(price(&h, &sys), 2.5);
    }

    #[test]
    fn transfer_keeps_psi() {
        let mut h = SemiStaticHedge::zero(2, HedgeSense::Sub);
        h.statics[1] = PiecewiseLinear::new(vec![0.0, 1.0], vec![0.0, 2.0], -1.0, 0.5).unwrap();
        h.deltas[0] = DeltaTable::new(vec![vec![-1.0, 1.0]], vec![0.3, -0.7]).unwrap();
        let before: Vec<f64> = [[-1.0, 2.0], [1.0, -3.0], [0.9, 0.4]].iter().map(|s| h.evaluate(s)).collect();
        for beta in [1.0, -3.0] {
            let mut g = h.clone();
            g.transfer(0, beta);
            for (s, b) in [[-1.0, 2.0], [1.0, -3.0], [0.9, 0.4]].iter().zip(&before) {
                assert!((g.evaluate(s) - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nearest_lookup() {
        let d = DeltaTable::new(vec![vec![0.0, 1.0, 3.0]], vec![10.0, 11.0, 13.0]).unwrap();
        assert_eq!(d.lookup(&[0.5]), 10.0);
        assert_eq!(d.lookup(&[2.1]), 13.0);
        assert_eq!(d.lookup(&[-5.0]), 10.0);
        assert_eq!(d.lookup(&[9.0]), 13.0);
    }

    #[test]
    fn arbitrage_verdicts() {
        assert_eq!(check_arbitrage(0.2, 0.25, 1.0 / 3.0, None).action, Action::Buy);
        assert_eq!(check_arbitrage(0.3, 0.25, 1.0 / 3.0, None).action, Action::NoArb);
        assert_eq!(check_arbitrage(0.4, 0.25, 1.0 / 3.0, None).action, Action::Sell);
    }
}
