//! Discrete martingale optimal transport: the LP over couplings of the
//! marginals on their grid product, its lower and upper bounds, and the
//! semi-static hedge read off its dual.

mod coupling;
mod transport;

pub use coupling::Coupling;
pub use transport::{antimonotone_value, comonotone_value};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hedge::{self, DeltaTable, HedgeSense, SemiStaticHedge, VERIFY_TOL};
use crate::lp::{self, LinearProgram, LpError, LpSolution, Pricing, Sense, SolverOptions};
use crate::measures::{check_convex_order, detect_barriers, MarginalSystem, DEFAULT_BARRIER_TOL};
use crate::payoff::{Payoff, PayoffKind, TabulatedPayoff};
use crate::pwl::PiecewiseLinear;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundSense {
    Lower,
    Upper,
}

impl BoundSense {
    fn lp_sense(self) -> Sense {
        match self {
            BoundSense::Lower => Sense::Min,
            BoundSense::Upper => Sense::Max,
        }
    }

    fn hedge_sense(self) -> HedgeSense {
        match self {
            BoundSense::Lower => HedgeSense::Sub,
            BoundSense::Upper => HedgeSense::Super,
        }
    }
}

/// A bounds query: admissible marginals, a payoff on as many dates, a sense.
#[derive(Debug, Clone)]
pub struct MotProblem {
    system: MarginalSystem,
    payoff: Payoff,
    sense: BoundSense,
}

impl MotProblem {
    pub fn new(system: MarginalSystem, payoff: Payoff, sense: BoundSense) -> Result<Self> {
        if payoff.dates() != system.dates() {
            return Err(Error::DimensionMismatch { expected: system.dates(), got: payoff.dates() });
        }
        if !system.admissible() {
            return Err(Error::NotAdmissible(Box::new(check_convex_order(&system))));
        }
        Ok(Self { system, payoff, sense })
    }

    pub fn system(&self) -> &MarginalSystem {
        &self.system
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    pub fn sense(&self) -> BoundSense {
        self.sense
    }

    pub fn with_sense(&self, sense: BoundSense) -> Self {
        Self { sense, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub duality_gap: f64,
    pub max_marginal_residual: f64,
    pub max_martingale_residual: f64,
    pub max_slackness_violation: f64,
    /// Price of the extracted hedge under the marginals.
    pub hedge_price: f64,
    pub lp_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotResult {
    pub sense: BoundSense,
    pub value: f64,
    pub coupling: Coupling,
    pub hedge: SemiStaticHedge,
    pub diagnostics: Diagnostics,
}

/// Row indices of the constraints in the assembled LP.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    grids: Vec<Vec<f64>>,
    /// Per date and atom; `None` for the dropped row.
    marginal_rows: Vec<Vec<Option<usize>>>,
    /// Per `j` and history cell over dates `0..=j`.
    martingale_rows: Vec<Vec<Option<usize>>>,
}

fn coords(grids: &[Vec<f64>], mut flat: usize, out: &mut [usize]) {
    for d in (0..grids.len()).rev() {
        out[d] = flat % grids[d].len();
        flat /= grids[d].len();
    }
}

fn assemble(problem: &MotProblem) -> Result<(LinearProgram, Layout)> {
    let system = &problem.system;
    let grids = system.grids();
    let n = grids.len();
    let cost = problem.payoff.tabulate(&grids)?;

    let mut rhs = Vec::new();
    let mut marginal_rows = Vec::with_capacity(n);
    for (i, mu) in system.marginals().iter().enumerate() {
        let dropped = (i > 0).then(|| mu.heaviest_atom());
        let rows: Vec<Option<usize>> = mu
            .weights()
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                (Some(k) != dropped).then(|| {
                    rhs.push(w);
                    rhs.len() - 1
                })
            })
            .collect();
        marginal_rows.push(rows);
    }
    let mut martingale_rows = Vec::with_capacity(n.saturating_sub(1));
    for j in 0..n.saturating_sub(1) {
        let histories: usize = grids[..=j].iter().map(Vec::len).product();
        let next = &grids[j + 1];
        let rows: Vec<Option<usize>> = (0..histories)
            .map(|h| {
                let x = grids[j][h % grids[j].len()];
                next.iter().any(|&y| y != x).then(|| {
                    rhs.push(0.0);
                    rhs.len() - 1
                })
            })
            .collect();
        martingale_rows.push(rows);
    }

    let mut triples = Vec::new();
    let mut idx = vec![0usize; n];
    for c in 0..cost.len() {
        coords(&grids, c, &mut idx);
        for i in 0..n {
            if let Some(r) = marginal_rows[i][idx[i]] {
                triples.push((r, c, 1.0));
            }
        }
        let mut h = 0;
        for j in 0..n.saturating_sub(1) {
            h = h * grids[j].len() + idx[j];
            if let Some(r) = martingale_rows[j][h] {
                let step = grids[j + 1][idx[j + 1]] - grids[j][idx[j]];
                if step != 0.0 {
                    triples.push((r, c, step));
                }
            }
        }
    }
    let lp = LinearProgram::new(problem.sense.lp_sense(), cost, rhs, triples)?;
    Ok((lp, Layout { grids, marginal_rows, martingale_rows }))
}

/// The MOT linear program: one mass per grid product cell (last date
/// fastest), one row per atom and date except the heaviest atom of each date
/// after the first, and one martingale row per history cell.
pub fn build_lp(problem: &MotProblem) -> Result<LinearProgram> {
    Ok(assemble(problem)?.0)
}

fn solve_lp(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution> {
    lp::solve_with(lp, opts).map_err(|e| match e {
        LpError::Infeasible { .. } => Error::DiscretizationInfeasible,
        other => Error::Lp(other),
    })
}

/// Lower or upper bound with default solver options.
pub fn bound(problem: &MotProblem) -> Result<MotResult> {
    bound_with(problem, &SolverOptions::default())
}

pub fn bound_with(problem: &MotProblem, opts: &SolverOptions) -> Result<MotResult> {
    let (lp, layout) = assemble(problem)?;
    let solution = solve_lp(&lp, opts)?;
    let coupling = Coupling::from_primal(layout.grids.clone(), &solution.primal);
    let atom_grids = problem.system.grids();
    let hedge = match extract_with_layout(&solution, problem, &layout, &coupling) {
        Ok(h) if hedge_violation(&h, problem, &atom_grids)? <= VERIFY_TOL => h,
        _ => {
            let bland = SolverOptions { pricing: Pricing::Bland, ..*opts };
            let retry = solve_lp(&lp, &bland)?;
            let coupling = Coupling::from_primal(layout.grids.clone(), &retry.primal);
            let h = extract_with_layout(&retry, problem, &layout, &coupling)?;
            let violation = hedge_violation(&h, problem, &atom_grids)?;
            if violation > VERIFY_TOL {
                return Err(Error::DegenerateDual { violation });
            }
            return package(problem, retry, coupling, h, opts);
        }
    };
    package(problem, solution, coupling, hedge, opts)
}

fn hedge_violation(h: &SemiStaticHedge, problem: &MotProblem, grids: &[Vec<f64>]) -> Result<f64> {
    Ok(hedge::verify(h, &problem.payoff, grids)?.max_violation)
}

fn package(
    problem: &MotProblem,
    solution: LpSolution,
    coupling: Coupling,
    hedge: SemiStaticHedge,
    opts: &SolverOptions,
) -> Result<MotResult> {
    let value = solution.objective;
    let duality_gap = solution.duality_gap();
    if duality_gap > opts.gap_tol * (1.0 + value.abs()) {
        return Err(Error::Lp(LpError::Numerical(format!("duality gap {duality_gap:.3e} above tolerance"))));
    }
    let diagnostics = Diagnostics {
        duality_gap,
        max_marginal_residual: coupling.max_marginal_residual(&problem.system),
        max_martingale_residual: coupling.max_martingale_residual(),
        max_slackness_violation: hedge::slackness(&hedge, &coupling, &problem.payoff)?,
        hedge_price: hedge::price(&hedge, &problem.system),
        lp_iterations: solution.iterations,
    };
    Ok(MotResult { sense: problem.sense, value, coupling, hedge, diagnostics })
}

/// Reads the semi-static hedge off an optimal solution of [`build_lp`].
///
/// `u_i` are the marginal-row duals (0 on dropped rows) and `Δ_j` the
/// martingale-row duals. The representative is normalized: each `Δ_j` has
/// zero mean under the coupling's history law (fixing the affine transfer
/// between `u_j` and `u_{j+1}`), and `u_i` vanishes at the heaviest atom for
/// `i >= 1`, the constant going to cash. For two dates the hedge is then
/// extended to the refined grid of all atoms and midpoints, unless the payoff
/// is tabulated and so only defined on the atoms.
pub fn extract_hedge(solution: &LpSolution, problem: &MotProblem) -> Result<SemiStaticHedge> {
    let (lp, layout) = assemble(problem)?;
    if solution.dual.len() != lp.num_rows() || solution.primal.len() != lp.num_cols() {
        return Err(Error::DimensionMismatch { expected: lp.num_rows(), got: solution.dual.len() });
    }
    let coupling = Coupling::from_primal(layout.grids.clone(), &solution.primal);
    extract_with_layout(solution, problem, &layout, &coupling)
}

fn extract_with_layout(
    solution: &LpSolution,
    problem: &MotProblem,
    layout: &Layout,
    coupling: &Coupling,
) -> Result<SemiStaticHedge> {
    let y = &solution.dual;
    let grids = &layout.grids;
    let n = grids.len();
    let mut u: Vec<Vec<f64>> = layout
        .marginal_rows
        .iter()
        .map(|rows| rows.iter().map(|r| r.map_or(0.0, |r| y[r])).collect())
        .collect();
    let mut delta: Vec<Vec<f64>> = layout
        .martingale_rows
        .iter()
        .map(|rows| rows.iter().map(|r| r.map_or(0.0, |r| y[r])).collect())
        .collect();
    let mut cash = 0.0;

    for j in 0..n.saturating_sub(1) {
        let mass = coupling.history_mass(j);
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let beta = -delta[j].iter().zip(&mass).map(|(d, w)| d * w).sum::<f64>() / total;
        delta[j].iter_mut().for_each(|d| *d += beta);
        for (v, &x) in u[j].iter_mut().zip(&grids[j]) {
            *v += beta * x;
        }
        for (v, &x) in u[j + 1].iter_mut().zip(&grids[j + 1]) {
            *v -= beta * x;
        }
    }
    for (i, mu) in problem.system.marginals().iter().enumerate().skip(1) {
        let c = u[i][mu.heaviest_atom()];
        u[i].iter_mut().for_each(|v| *v -= c);
        cash += c;
    }

    let sense = problem.sense.hedge_sense();
    let tabulated = matches!(problem.payoff.kind(), PayoffKind::Tabulated(_));
    if n == 2 && !tabulated {
        let grid = hedge::refined_grid(&problem.system);
        let sign = if sense == HedgeSense::Sub { 1.0 } else { -1.0 };
        let neg = |v: &[f64]| v.iter().map(|x| sign * x).collect::<Vec<f64>>();
        let (a1, a2, d) = (neg(&u[0]), neg(&u[1]), neg(&delta[0]));
        let payoff = &problem.payoff;
        let (u1, u2, dl) = hedge::complete_two_date(
            (&grids[0], &a1),
            (&grids[1], &a2),
            &d,
            |s1, s2| Ok(sign * payoff.evaluate(&[s1, s2])? - sign * cash),
            &grid,
        )?;
        return Ok(SemiStaticHedge {
            cash,
            statics: vec![
                PiecewiseLinear::interpolating(grid.clone(), neg(&u1))?,
                PiecewiseLinear::interpolating(grid.clone(), neg(&u2))?,
            ],
            deltas: vec![DeltaTable::new(vec![grid], neg(&dl))?],
            sense,
        });
    }
    let statics = grids
        .iter()
        .zip(u)
        .map(|(g, v)| PiecewiseLinear::interpolating(g.clone(), v))
        .collect::<Result<_>>()?;
    let deltas = delta
        .into_iter()
        .enumerate()
        .map(|(j, d)| DeltaTable::new(grids[..=j].to_vec(), d))
        .collect::<Result<_>>()?;
    Ok(SemiStaticHedge { cash, statics, deltas, sense })
}

/// Solves the two-date problem block by block between the barriers of the
/// marginals and reassembles value, coupling and hedge.
///
/// The reassembled hedge is a sub/superhedge on every block; across blocks
/// (cells no martingale coupling can charge) it is not constrained.
pub fn decompose_and_solve(problem: &MotProblem) -> Result<MotResult> {
    decompose_and_solve_with(problem, &SolverOptions::default())
}

pub fn decompose_and_solve_with(problem: &MotProblem, opts: &SolverOptions) -> Result<MotResult> {
    if problem.system.dates() != 2 {
        return Err(Error::Unsupported("block decomposition is implemented for two dates".into()));
    }
    let (mu1, mu2) = (problem.system.marginal(0), problem.system.marginal(1));
    let split = detect_barriers(mu1, mu2, DEFAULT_BARRIER_TOL)?;
    if split.blocks.len() <= 1 {
        return bound_with(problem, opts);
    }
    let results: Vec<Result<MotResult>> = split
        .blocks
        .par_iter()
        .map(|b| {
            let system = MarginalSystem::new(vec![b.mu1.clone(), b.mu2.clone()])?;
            let sub = MotProblem { system, payoff: problem.payoff.clone(), sense: problem.sense };
            bound_with(&sub, opts)
        })
        .collect();

    let grids = problem.system.grids();
    let mut value = 0.0;
    let mut duality_gap = 0.0;
    let mut iterations = 0;
    let mut cells = Vec::new();
    let mut u1 = vec![0.0; mu1.len()];
    let mut u2 = vec![0.0; mu2.len()];
    let mut delta = vec![0.0; mu1.len()];
    for (b, r) in split.blocks.iter().zip(results) {
        let r = r?;
        value += b.mass * r.value;
        duality_gap += b.mass * r.diagnostics.duality_gap;
        iterations += r.diagnostics.lp_iterations;
        for (idx, q) in r.coupling.entries() {
            cells.push((vec![b.mu1_atoms[idx[0]], b.mu2_atoms[idx[1]]], b.mass * q));
        }
        for &k in &b.mu1_atoms {
            let x = mu1.points()[k];
            u1[k] = r.hedge.statics[0].eval(x) + r.hedge.cash;
            delta[k] = r.hedge.deltas[0].lookup(&[x]);
        }
        for &k in &b.mu2_atoms {
            u2[k] = r.hedge.statics[1].eval(mu2.points()[k]);
        }
    }
    cells.sort_by(|a, b| a.0.cmp(&b.0));
    let coupling = Coupling::new(grids.clone(), cells)?;
    let hedge = SemiStaticHedge {
        cash: 0.0,
        statics: vec![
            PiecewiseLinear::interpolating(grids[0].clone(), u1)?,
            PiecewiseLinear::interpolating(grids[1].clone(), u2)?,
        ],
        deltas: vec![DeltaTable::new(vec![grids[0].clone()], delta)?],
        sense: problem.sense.hedge_sense(),
    };
    let diagnostics = Diagnostics {
        duality_gap,
        max_marginal_residual: coupling.max_marginal_residual(&problem.system),
        max_martingale_residual: coupling.max_martingale_residual(),
        max_slackness_violation: hedge::slackness(&hedge, &coupling, &problem.payoff)?,
        hedge_price: hedge::price(&hedge, &problem.system),
        lp_iterations: iterations,
    };
    Ok(MotResult { sense: problem.sense, value, coupling, hedge, diagnostics })
}

/// `Δ(a_{k+1}) - Δ(a_k)` over consecutive first-date atoms of a two-date result.
pub fn delta_increments(result: &MotResult, system: &MarginalSystem) -> Vec<f64> {
    let Some(d) = result.hedge.deltas.first() else { return Vec::new() };
    let vals: Vec<f64> = system.marginal(0).points().iter().map(|&x| d.lookup(&[x])).collect();
    vals.windows(2).map(|w| w[1] - w[0]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strike: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

/// Lower and upper bounds of `(s_2 - K·s_1)^+` for each strike. Rows are
/// solved in parallel and returned in strike order; a failed row records its
/// error and the sweep continues.
pub fn strike_sweep(system: &MarginalSystem, strikes: &[f64]) -> Result<SweepTable> {
    strike_sweep_with(system, strikes, &SolverOptions::default())
}

pub fn strike_sweep_with(system: &MarginalSystem, strikes: &[f64], opts: &SolverOptions) -> Result<SweepTable> {
    if system.dates() != 2 {
        return Err(Error::Unsupported("strike sweeps need two dates".into()));
    }
    if !system.admissible() {
        return Err(Error::NotAdmissible(Box::new(check_convex_order(system))));
    }
    let rows = strikes
        .par_iter()
        .map(|&strike| {
            let problem = MotProblem {
                system: system.clone(),
                payoff: Payoff::forward_start_call(strike),
                sense: BoundSense::Lower,
            };
            let lower = bound_with(&problem, opts);
            let upper = bound_with(&problem.with_sense(BoundSense::Upper), opts);
            match (lower, upper) {
                (Ok(l), Ok(u)) => SweepRow { strike, lower: Some(l.value), upper: Some(u.value), error: None },
                (l, u) => SweepRow {
                    strike,
                    lower: l.as_ref().ok().map(|r| r.value),
                    upper: u.as_ref().ok().map(|r| r.value),
                    error: l.err().or(u.err()).map(|e| e.to_string()),
                },
            }
        })
        .collect();
    Ok(SweepTable { rows })
}

/// An optimal coupling for a seeded uniform random cost on the grid product.
pub fn random_feasible_coupling(system: &MarginalSystem, seed: u64) -> Result<Coupling> {
    let grids = system.grids();
    let cells: usize = grids.iter().map(Vec::len).product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..cells).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let payoff = Payoff::tabulated(TabulatedPayoff::new(grids.clone(), values)?);
    let problem = MotProblem::new(system.clone(), payoff, BoundSense::Lower)?;
    let (lp, layout) = assemble(&problem)?;
    let solution = solve_lp(&lp, &SolverOptions::default())?;
    Ok(Coupling::from_primal(layout.grids, &solution.primal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DiscreteMeasure;

    fn forced() -> MarginalSystem {
        MarginalSystem::new(vec![
            DiscreteMeasure::dirac(0.0),
            DiscreteMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn forced_coupling_layout() {
        let p = MotProblem::new(forced(), Payoff::forward_start_straddle(), BoundSense::Lower).unwrap();
        let lp = build_lp(&p).unwrap();
        assert_eq!(lp.num_cols(), 2);
        assert_eq!(lp.num_rows(), 3);
        let r = bound(&p).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert!((r.diagnostics.hedge_price - 1.0).abs() < 1e-12);
        assert!(r.diagnostics.max_slackness_violation < 1e-9);
    }

    #[test]
    fn three_date_counts() {
        let mu = |a: f64| DiscreteMeasure::new(vec![-a, a], vec![0.5, 0.5]).unwrap();
        let sys = MarginalSystem::new(vec![mu(1.0), mu(2.0), mu(3.0)]).unwrap();
        let p = MotProblem::new(sys, Payoff::asian_call(3, 0.0), BoundSense::Upper).unwrap();
        let (lp, layout) = assemble(&p).unwrap();
        assert_eq!(lp.num_cols(), 8);
        assert_eq!(layout.martingale_rows[0].iter().flatten().count(), 2);
        assert_eq!(layout.martingale_rows[1].iter().flatten().count(), 4);
        let r = bound(&p).unwrap();
        assert!(r.diagnostics.max_martingale_residual < 1e-9);
        assert!((r.value - r.diagnostics.hedge_price).abs() < 1e-9);
    }

    #[test]
    fn rejects_reversed_marginals() {
        let sys = MarginalSystem::new(vec![
            DiscreteMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap(),
            DiscreteMeasure::dirac(0.0),
        ])
        .unwrap();
        assert!(matches!(
            MotProblem::new(sys, Payoff::forward_start_straddle(), BoundSense::Lower),
            Err(Error::NotAdmissible(_))
        ));
    }

    #[test]
    fn equal_marginals_force_identity() {
        let mu = DiscreteMeasure::new(vec![0.0, 1.0, 3.0], vec![0.2, 0.5, 0.3]).unwrap();
        let sys = MarginalSystem::new(vec![mu.clone(), mu.clone()]).unwrap();
        let p = MotProblem::new(sys, Payoff::forward_start_call(0.5), BoundSense::Upper).unwrap();
        let expected = mu.expect(|x| 0.5 * x);
        let r = decompose_and_solve(&p).unwrap();
        assert!((r.value - expected).abs() < 1e-12);
        assert!((bound(&p).unwrap().value - expected).abs() < 1e-12);
    }
}
