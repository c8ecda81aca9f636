//! Dense tableau simplex in exact rational arithmetic with Bland's rule.
//!
//! Inputs are read as the simplest rational within a relative 1e-13 of each
//! float, so data such as `1.0 / 3.0` is treated as exactly one third.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::{LinearProgram, LpError, LpSolution, Sense};

/// Largest number of structural variables accepted by [`solve_exact`].
pub const EXACT_MAX_VARIABLES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub primal: Vec<BigRational>,
    pub dual: Vec<BigRational>,
    pub objective: BigRational,
    pub iterations: usize,
}

impl ExactSolution {
    pub fn objective_f64(&self) -> f64 {
        to_f64(&self.objective)
    }

    /// Rounds everything to floats, with reduced costs taken against `lp`.
    pub fn to_solution(&self, lp: &LinearProgram) -> LpSolution {
        let primal: Vec<f64> = self.primal.iter().map(to_f64).collect();
        let dual: Vec<f64> = self.dual.iter().map(to_f64).collect();
        let dual_objective = lp.rhs().iter().zip(&dual).map(|(b, y)| b * y).sum();
        LpSolution {
            reduced_costs: lp.reduced_costs(&dual),
            primal,
            dual,
            objective: self.objective_f64(),
            dual_objective,
            iterations: self.iterations,
        }
    }
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Simplest fraction within a relative 1e-13 of `x`, found from the
/// continued-fraction convergents.
pub fn rational_from_f64(x: f64) -> BigRational {
    if x == 0.0 {
        return BigRational::zero();
    }
    let tol = 1e-13 * x.abs().max(1e-300);
    let (mut h0, mut h1) = (BigInt::zero(), BigInt::one());
    let (mut k0, mut k1) = (BigInt::one(), BigInt::zero());
    let mut rest = x;
    for _ in 0..64 {
        let a = rest.floor();
        let Some(ai) = num_traits::FromPrimitive::from_f64(a) else { break };
        let ai: BigInt = ai;
        let h2 = &ai * &h1 + &h0;
        let k2 = &ai * &k1 + &k0;
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let approx = BigRational::new(h1.clone(), k1.clone());
        if (to_f64(&approx) - x).abs() <= tol {
            return approx;
        }
        let frac = rest - a;
        if frac == 0.0 {
            break;
        }
        rest = 1.0 / frac;
    }
    BigRational::from_float(x).unwrap_or_else(BigRational::zero)
}

struct Tableau {
    m: usize,
    width: usize,
    rows: Vec<Vec<BigRational>>,
    basis: Vec<usize>,
    iterations: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, q: usize) {
        let p = self.rows[r][q].clone();
        for v in &mut self.rows[r] {
            *v = &*v / &p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[q].is_zero() {
                continue;
            }
            let f = row[q].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
        }
        self.basis[r] = q;
        self.iterations += 1;
    }

    fn reduced(&self, cost: &[BigRational], j: usize) -> BigRational {
        let mut d = cost[j].clone();
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if !row[j].is_zero() && !cost[b].is_zero() {
                d -= &cost[b] * &row[j];
            }
        }
        d
    }

    /// Bland's rule over the first `enter_limit` columns.
    fn optimize(&mut self, cost: &[BigRational], enter_limit: usize, max_iter: usize) -> Result<(), LpError> {
        let rhs = self.width - 1;
        loop {
            if self.iterations >= max_iter {
                return Err(LpError::IterationLimit { iterations: self.iterations });
            }
            let entering = (0..enter_limit)
                .filter(|j| !self.basis.contains(j))
                .find(|&j| self.reduced(cost, j).is_negative());
            let Some(q) = entering else { return Ok(()) };
            let mut best: Option<(usize, BigRational)> = None;
            for i in 0..self.m {
                let a = &self.rows[i][q];
                if !a.is_positive() {
                    continue;
                }
                let ratio = &self.rows[i][rhs] / a;
                let better = match &best {
                    None => true,
                    Some((bi, br)) => ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            let Some((r, _)) = best else { return Err(LpError::Unbounded { column: q }) };
            self.pivot(r, q);
        }
    }
}

/// Solves `lp` exactly; limited to [`EXACT_MAX_VARIABLES`] variables.
pub fn solve_exact(lp: &LinearProgram) -> Result<ExactSolution, LpError> {
    let (m, n) = (lp.num_rows(), lp.num_cols());
    if n > EXACT_MAX_VARIABLES {
        return Err(LpError::ScaleExceeded { variables: n, limit: EXACT_MAX_VARIABLES });
    }
    let width = n + m + 1;
    let sign: Vec<bool> = lp.rhs().iter().map(|&b| b < 0.0).collect();
    let mut rows = vec![vec![BigRational::zero(); width]; m];
    for &(r, c, v) in lp.triples() {
        let v = rational_from_f64(v);
        rows[r][c] = if sign[r] { -v } else { v };
    }
    for (r, row) in rows.iter_mut().enumerate() {
        row[n + r] = BigRational::one();
        let b = rational_from_f64(lp.rhs()[r]);
        row[width - 1] = if sign[r] { -b } else { b };
    }
    let mut t = Tableau { m, width, rows, basis: (n..n + m).collect(), iterations: 0 };
    let max_iter = 1_000_000;

    let mut phase_one = vec![BigRational::zero(); n + m];
    for c in &mut phase_one[n..] {
        *c = BigRational::one();
    }
    t.optimize(&phase_one, n + m, max_iter)?;
    let infeasibility: BigRational =
        (0..m).filter(|&i| t.basis[i] >= n).map(|i| t.rows[i][width - 1].clone()).sum();
    if infeasibility.is_positive() {
        return Err(LpError::Infeasible { phase_one: to_f64(&infeasibility) });
    }
    for r in 0..m {
        if t.basis[r] >= n {
            if let Some(q) = (0..n).find(|&j| !t.rows[r][j].is_zero() && !t.basis.contains(&j)) {
                t.pivot(r, q);
            }
        }
    }

    let flip = lp.sense() == Sense::Max;
    let mut cost = vec![BigRational::zero(); n + m];
    for (c, &v) in cost.iter_mut().zip(lp.cost()) {
        let v = rational_from_f64(v);
        *c = if flip { -v } else { v };
    }
    t.optimize(&cost, n, max_iter)?;

    let mut primal = vec![BigRational::zero(); n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            primal[b] = t.rows[i][width - 1].clone();
        }
    }
    // The artificial block of the tableau holds the basis inverse.
    let dual: Vec<BigRational> = (0..m)
        .map(|k| {
            let mut y: BigRational =
                (0..m).map(|i| &cost[t.basis[i]] * &t.rows[i][n + k]).sum();
            if sign[k] {
                y = -y;
            }
            if flip {
                y = -y;
            }
            y
        })
        .collect();
    let objective = lp
        .cost()
        .iter()
        .zip(&primal)
        .map(|(&c, x)| rational_from_f64(c) * x)
        .sum();
    Ok(ExactSolution { primal, dual, objective, iterations: t.iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn simplest_fractions() {
        assert_eq!(rational_from_f64(1.0 / 3.0), r(1, 3));
        assert_eq!(rational_from_f64(-7.0 / 6.0), r(-7, 6));
        assert_eq!(rational_from_f64(0.1), r(1, 10));
        assert_eq!(rational_from_f64(2.0), r(2, 1));
    }

    #[test]
    fn small_examples() {
        let lp = LinearProgram::new(Sense::Min, vec![1.0], vec![3.0], vec![(0, 0, 1.0)]).unwrap();
        let s = solve_exact(&lp).unwrap();
        assert_eq!(s.objective, r(3, 1));
        assert_eq!(s.dual, vec![r(1, 1)]);

        let triples = vec![
            (0, 0, 1.0), (0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0),
            (2, 0, 1.0), (2, 2, 1.0), (3, 1, 1.0), (3, 3, 1.0),
        ];
        let lp = LinearProgram::new(Sense::Min, vec![0.0, 1.0, 1.0, 0.0], vec![1.0; 4], triples).unwrap();
        let s = solve_exact(&lp).unwrap();
        assert!(s.objective.is_zero());
        assert_eq!(s.primal, vec![r(1, 1), r(0, 1), r(0, 1), r(1, 1)]);

        let triples = vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, -1.0)];
        let lp = LinearProgram::new(Sense::Min, vec![0.0, 1.0], vec![1.0, 1.0], triples).unwrap();
        let s = solve_exact(&lp).unwrap();
        assert_eq!(s.primal, vec![r(1, 1), r(0, 1)]);
    }

    #[test]
    fn duals_satisfy_strong_duality_for_max() {
        let triples = vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0), (2, 0, -1.0)];
        let lp = LinearProgram::new(Sense::Max, vec![2.0, 1.0], vec![1.0, 1.0, -0.25], triples).unwrap();
        let s = solve_exact(&lp).unwrap();
        assert_eq!(s.objective, r(5, 4));
        let dual_obj: BigRational = lp.rhs().iter().zip(&s.dual).map(|(&b, y)| rational_from_f64(b) * y).sum();
        assert_eq!(dual_obj, s.objective);
        let f = s.to_solution(&lp);
        assert!(f.worst_reduced_cost(Sense::Max) > -1e-15);
    }

    #[test]
    fn rejects_large_programs() {
        let n = EXACT_MAX_VARIABLES + 1;
        let triples = (0..n).map(|j| (0, j, 1.0)).collect();
        let lp = LinearProgram::new(Sense::Min, vec![1.0; n], vec![1.0], triples).unwrap();
        assert!(matches!(solve_exact(&lp), Err(LpError::ScaleExceeded { .. })));
    }
}
