//! Two-phase revised simplex on `A x = b, x >= 0`.
//!
//! The basis is kept as a sparse-stored LU factorization plus a product-form
//! eta file, refactored every `refactor_every` pivots. Phase one starts from
//! an all-artificial basis; artificials never re-enter once they leave, and
//! artificials stuck on redundant rows stay basic at zero in phase two.

use super::lu::Lu;
use super::{LinearProgram, LpError, LpSolution, Pricing, Sense, SolverOptions};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-10;
const DRIVE_OUT_TOL: f64 = 1e-7;

struct Eta {
    row: usize,
    pivot: f64,
    /// Off-pivot entries of the entering column in basis coordinates.
    entries: Vec<(usize, f64)>,
}

struct Revised<'a> {
    m: usize,
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    basis: Vec<usize>,
    position: Vec<Option<usize>>,
    xb: Vec<f64>,
    lu: Lu,
    etas: Vec<Eta>,
    opts: &'a SolverOptions,
    iterations: usize,
    last_theta: f64,
}

enum Step {
    Optimal,
    Pivoted,
}

impl<'a> Revised<'a> {
    fn new(lp: &LinearProgram, opts: &'a SolverOptions) -> Self {
        let (m, n) = (lp.num_rows(), lp.num_cols());
        let sign: Vec<f64> = lp.rhs().iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
        let b: Vec<f64> = lp.rhs().iter().zip(&sign).map(|(b, s)| b * s).collect();
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(lp.triples().len());
        let mut vals = Vec::with_capacity(lp.triples().len());
        for &(r, c, v) in lp.triples() {
            col_ptr[c + 1] += 1;
            row_idx.push(r);
            vals.push(v * sign[r]);
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        let basis: Vec<usize> = (n..n + m).collect();
        let mut position = vec![None; n + m];
        for (k, &j) in basis.iter().enumerate() {
            position[j] = Some(k);
        }
        Self {
            m,
            n,
            col_ptr,
            row_idx,
            vals,
            xb: b.clone(),
            b,
            basis,
            position,
            lu: Lu::identity(m),
            etas: Vec::new(),
            opts,
            iterations: 0,
            last_theta: 0.0,
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n
    }

    fn column(&self, j: usize) -> Vec<(usize, f64)> {
        if j >= self.n {
            return vec![(j - self.n, 1.0)];
        }
        (self.col_ptr[j]..self.col_ptr[j + 1]).map(|k| (self.row_idx[k], self.vals[k])).collect()
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        (self.col_ptr[j]..self.col_ptr[j + 1]).map(|k| y[self.row_idx[k]] * self.vals[k]).sum()
    }

    fn ftran(&self, col: &[(usize, f64)]) -> Vec<f64> {
        let mut z = vec![0.0; self.m];
        for &(i, v) in col {
            z[i] += v;
        }
        self.lu.solve(&mut z);
        for eta in &self.etas {
            let zr = z[eta.row] / eta.pivot;
            z[eta.row] = zr;
            if zr != 0.0 {
                for &(i, d) in &eta.entries {
                    z[i] -= d * zr;
                }
            }
        }
        z
    }

    fn btran(&self, mut v: Vec<f64>) -> Vec<f64> {
        for eta in self.etas.iter().rev() {
            let mut s = v[eta.row];
            for &(i, d) in &eta.entries {
                s -= d * v[i];
            }
            v[eta.row] = s / eta.pivot;
        }
        self.lu.solve_transpose(&mut v);
        v
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let cols: Vec<Vec<(usize, f64)>> = self.basis.iter().map(|&j| self.column(j)).collect();
        self.lu = Lu::factor(self.m, &cols)
            .map_err(|s| LpError::Numerical(format!("singular basis at position {}", s.0)))?;
        self.etas.clear();
        let b: Vec<(usize, f64)> = self.b.iter().copied().enumerate().collect();
        self.xb = self.ftran(&b);
        for x in &mut self.xb {
            if *x < 0.0 && *x > -self.opts.feasibility_tol {
                *x = 0.0;
            }
        }
        Ok(())
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let cb: Vec<f64> = self.basis.iter().map(|&j| cost[j]).collect();
        self.btran(cb)
    }

    fn pivot(&mut self, entering: usize, row: usize, alpha: Vec<f64>, theta: f64) -> Result<(), LpError> {
        for (i, x) in self.xb.iter_mut().enumerate() {
            if i != row {
                *x -= theta * alpha[i];
                if *x < 0.0 && *x > -self.opts.feasibility_tol {
                    *x = 0.0;
                }
            }
        }
        self.xb[row] = theta;
        let leaving = self.basis[row];
        self.position[leaving] = None;
        self.position[entering] = Some(row);
        self.basis[row] = entering;
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != row && a != 0.0)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta { row, pivot: alpha[row], entries });
        self.iterations += 1;
        if self.etas.len() >= self.opts.refactor_every {
            self.refactor()?;
        }
        Ok(())
    }

    fn price(&self, cost: &[f64], y: &[f64], bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.n {
            if self.position[j].is_some() {
                continue;
            }
            let d = cost[j] - self.dot_column(j, y);
            if d < -OPT_TOL {
                if bland {
                    return Some(j);
                }
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    /// Minimum-ratio test; ties go to the lowest basic variable index.
    /// Basic artificials (only present on redundant rows in phase two) must
    /// stay at zero and block any move that would change them.
    fn ratio_test(&self, alpha: &[f64], phase_two: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let a = alpha[i];
            let j = self.basis[i];
            let ratio = if phase_two && self.is_artificial(j) && a.abs() > PIVOT_TOL {
                0.0
            } else if a > PIVOT_TOL {
                self.xb[i].max(0.0) / a
            } else {
                continue;
            };
            match best {
                None => best = Some((i, ratio)),
                Some((bi, br)) => {
                    let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                    if (!tie && ratio < br) || (tie && j < self.basis[bi]) {
                        best = Some((i, ratio));
                    }
                }
            }
        }
        best
    }

    fn step(&mut self, cost: &[f64], phase_two: bool, bland: bool) -> Result<Step, LpError> {
        let y = self.duals(cost);
        let Some(q) = self.price(cost, &y, bland) else {
            return Ok(Step::Optimal);
        };
        let alpha = self.ftran(&self.column(q));
        let Some((r, theta)) = self.ratio_test(&alpha, phase_two) else {
            return Err(LpError::Unbounded { column: q });
        };
        self.last_theta = theta;
        self.pivot(q, r, alpha, theta)?;
        Ok(Step::Pivoted)
    }

    /// Pivots basic artificials out on any structural column with a usable
    /// entry in their row. Those left behind sit on redundant rows.
    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        for r in 0..self.m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let mut unit = vec![0.0; self.m];
            unit[r] = 1.0;
            let rho = self.btran(unit);
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n {
                if self.position[j].is_some() {
                    continue;
                }
                let a = self.dot_column(j, &rho).abs();
                if a > DRIVE_OUT_TOL && best.is_none_or(|(_, ba)| a > ba) {
                    best = Some((j, a));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.ftran(&self.column(q));
                let theta = self.xb[r] / alpha[r];
                self.pivot(q, r, alpha, theta)?;
            }
        }
        self.refactor()
    }

    fn run_phase(&mut self, cost: &[f64], phase_two: bool) -> Result<(), LpError> {
        let mut stalled = 0usize;
        let mut bland = self.opts.pricing == Pricing::Bland;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(LpError::IterationLimit { iterations: self.iterations });
            }
            match self.step(cost, phase_two, bland)? {
                Step::Optimal => {
                    if self.etas.is_empty() {
                        return Ok(());
                    }
                    // Confirm on a fresh factorization.
                    self.refactor()?;
                    if matches!(self.step(cost, phase_two, bland)?, Step::Optimal) {
                        return Ok(());
                    }
                }
                Step::Pivoted => {}
            }
            let degenerate = self.last_theta <= 1e-12;
            if degenerate {
                stalled += 1;
                if stalled >= self.opts.stall_limit {
                    bland = true;
                }
            } else {
                stalled = 0;
                bland = self.opts.pricing == Pricing::Bland;
            }
        }
    }
}


/// Solves `lp` with the given options.
pub fn solve_with(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution, LpError> {
    let (m, n) = (lp.num_rows(), lp.num_cols());
    let flip = if lp.sense() == Sense::Min { 1.0 } else { -1.0 };
    let mut solver = Revised::new(lp, opts);

    let mut phase_one = vec![0.0; n + m];
    phase_one[n..].iter_mut().for_each(|c| *c = 1.0);
    solver.run_phase(&phase_one, false)?;
    let infeasibility: f64 = solver
        .basis
        .iter()
        .zip(&solver.xb)
        .filter(|(&j, _)| j >= n)
        .map(|(_, &x)| x.max(0.0))
        .sum();
    let scale = 1.0 + lp.rhs().iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if infeasibility > opts.feasibility_tol * scale {
        return Err(LpError::Infeasible { phase_one: infeasibility });
    }
    solver.drive_out_artificials()?;

    let mut phase_two = vec![0.0; n + m];
    for (c, &orig) in phase_two.iter_mut().zip(lp.cost()) {
        *c = flip * orig;
    }
    solver.run_phase(&phase_two, true)?;
    solver.refactor()?;

    let mut primal = vec![0.0; n];
    for (k, &j) in solver.basis.iter().enumerate() {
        if j < n {
            primal[j] = solver.xb[k].max(0.0);
        }
    }
    // Undo the row sign flips and the sense flip on the duals.
    let internal = solver.duals(&phase_two);
    let dual: Vec<f64> = internal
        .iter()
        .zip(lp.rhs())
        .map(|(y, b)| flip * y * if *b < 0.0 { -1.0 } else { 1.0 })
        .collect();
    let reduced_costs = lp.reduced_costs(&dual);
    let objective = lp.cost().iter().zip(&primal).map(|(c, x)| c * x).sum();
    let dual_objective = lp.rhs().iter().zip(&dual).map(|(b, y)| b * y).sum();
    Ok(LpSolution { primal, dual, reduced_costs, objective, dual_objective, iterations: solver.iterations })
}
