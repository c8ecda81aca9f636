//! Two-date dual in terms of convex envelopes:
//! `sup_{u_2} E_{μ_1}[(Φ(S_1, ·) - u_2)**(S_1)] + E_{μ_2}[u_2]`.
//!
//! Every `u_2` gives a lower bound on the martingale transport problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::payoff::Payoff;
use crate::pwl::PiecewiseLinear;

/// Lower convex hull of the points `(xs[i], ys[i])` as a piecewise-linear
/// function through the hull vertices; the wings continue the end segments.
pub fn convex_envelope(xs: &[f64], ys: &[f64]) -> Result<PiecewiseLinear> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(Error::InvalidMeasure(format!(
            "convex envelope needs at least two matching points (got {} and {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidMeasure("envelope abscissae must be strictly increasing".into()));
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(xs.len());
    for (&x, &y) in xs.iter().zip(ys) {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
            if cross > 0.0 {
                break;
            }
            hull.pop();
        }
        hull.push((x, y));
    }
    let (knots, values): (Vec<f64>, Vec<f64>) = hull.into_iter().unzip();
    PiecewiseLinear::interpolating(knots, values)
}

/// A function tabulated on strictly increasing points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub points: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(points: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() || points.is_empty() {
            return Err(Error::DimensionMismatch { expected: points.len(), got: values.len() });
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidMeasure("grid points must be strictly increasing".into()));
        }
        Ok(Self { points, values })
    }

    pub fn zeros(points: Vec<f64>) -> Result<Self> {
        let values = vec![0.0; points.len()];
        Self::new(points, values)
    }

    fn index_of(&self, x: f64) -> Option<usize> {
        let i = self.points.partition_point(|&p| p < x - 1e-12 * (1.0 + x.abs()));
        (i < self.points.len() && (self.points[i] - x).abs() <= 1e-12 * (1.0 + x.abs())).then_some(i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeDual {
    pub u2: GridFunction,
    pub value: f64,
    /// `(Φ(s_1, ·) - u_2)**` for each atom `s_1` of `μ_1`.
    pub envelopes: Vec<PiecewiseLinear>,
    pub sweeps: usize,
}

struct Evaluator<'a> {
    mu1: &'a DiscreteMeasure,
    mu2_index: Vec<usize>,
    mu2_weights: &'a [f64],
    /// `Φ(s_1, x)` per `μ_1` atom and grid point.
    phi: Vec<Vec<f64>>,
}

impl<'a> Evaluator<'a> {
    fn new(u2: &GridFunction, payoff: &Payoff, mu1: &'a DiscreteMeasure, mu2: &'a DiscreteMeasure) -> Result<Self> {
        if payoff.dates() != 2 {
            return Err(Error::Unsupported("the envelope dual is a two-date construction".into()));
        }
        if u2.points.len() < 2 {
            return Err(Error::InvalidMeasure("u2 needs at least two grid points".into()));
        }
        let (lo, hi) = (u2.points[0], u2.points[u2.points.len() - 1]);
        if let Some(&s) = mu1.points().iter().find(|&&s| s < lo || s > hi) {
            return Err(Error::GridCoverage(s));
        }
        let mu2_index = mu2
            .points()
            .iter()
            .map(|&x| u2.index_of(x).ok_or(Error::GridCoverage(x)))
            .collect::<Result<_>>()?;
        let phi = mu1
            .points()
            .iter()
            .map(|&s1| u2.points.iter().map(|&x| payoff.evaluate(&[s1, x])).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        Ok(Self { mu1, mu2_index, mu2_weights: mu2.weights(), phi })
    }

    fn envelopes(&self, u2: &GridFunction) -> Result<Vec<PiecewiseLinear>> {
        self.phi
            .iter()
            .map(|row| {
                let g: Vec<f64> = row.iter().zip(&u2.values).map(|(p, u)| p - u).collect();
                convex_envelope(&u2.points, &g)
            })
            .collect()
    }

    fn value(&self, u2: &GridFunction) -> Result<f64> {
        let mut v = 0.0;
        for ((env, &s1), &w) in self.envelopes(u2)?.iter().zip(self.mu1.points()).zip(self.mu1.weights()) {
            v += w * env.eval(s1);
        }
        for (&k, &w) in self.mu2_index.iter().zip(self.mu2_weights) {
            v += w * u2.values[k];
        }
        Ok(v)
    }
}

/// `Σ μ_1(s_1)·g_{s_1}**(s_1) + Σ μ_2(x)·u_2(x)` with `g_{s_1} = Φ(s_1, ·) - u_2`
/// on the points of `u2`, which must contain every atom of `μ_2` and span
/// every atom of `μ_1`.
pub fn dual_value(u2: &GridFunction, payoff: &Payoff, mu1: &DiscreteMeasure, mu2: &DiscreteMeasure) -> Result<f64> {
    Evaluator::new(u2, payoff, mu1, mu2)?.value(u2)
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Coordinate ascent on the entries of `u2`, each line search a golden-section
/// search over `[u - 2·scale, u + 2·scale]` where `scale` is the payoff range
/// along that grid point. A step is kept only if it raises the value.
pub fn improve_u2(
    start: &GridFunction,
    payoff: &Payoff,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    iters: usize,
) -> Result<EnvelopeDual> {
    let ev = Evaluator::new(start, payoff, mu1, mu2)?;
    let mut u2 = start.clone();
    let mut value = ev.value(&u2)?;
    let scales: Vec<f64> = (0..u2.points.len())
        .map(|k| 1.0 + ev.phi.iter().map(|row| row[k].abs()).fold(0.0, f64::max))
        .collect();
    let mut sweeps = 0;
    for _ in 0..iters {
        sweeps += 1;
        let before = value;
        for k in 0..u2.points.len() {
            let centre = u2.values[k];
            let probe = |t: f64, u2: &mut GridFunction| -> Result<f64> {
                u2.values[k] = t;
                ev.value(u2)
            };
            let (mut a, mut b) = (centre - 2.0 * scales[k], centre + 2.0 * scales[k]);
            let mut c = b - GOLDEN * (b - a);
            let mut d = a + GOLDEN * (b - a);
            let mut fc = probe(c, &mut u2)?;
            let mut fd = probe(d, &mut u2)?;
            while b - a > 1e-11 * (1.0 + scales[k]) {
                if fc >= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - GOLDEN * (b - a);
                    fc = probe(c, &mut u2)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + GOLDEN * (b - a);
                    fd = probe(d, &mut u2)?;
                }
            }
            let t = 0.5 * (a + b);
            let ft = probe(t, &mut u2)?;
            if ft > value {
                value = ft;
            } else {
                u2.values[k] = centre;
            }
        }
        if value - before <= 1e-13 * (1.0 + value.abs()) {
            break;
        }
    }
    let envelopes = ev.envelopes(&u2)?;
    Ok(EnvelopeDual { u2, value, envelopes, sweeps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_examples() {
        let e = convex_envelope(&[0.0, 1.0, 2.0], &[0.0, 2.0, 0.0]).unwrap();
        assert_eq!(e.eval(1.0), 0.0);
        assert_eq!(e.knots(), &[0.0, 2.0]);
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [3.0, 0.0, 0.0, 3.0];
        let e = convex_envelope(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(e.eval(*x), *y);
        }
        assert!(convex_envelope(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn zero_u2_on_straddle() {
        let mu1 = DiscreteMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let mu2 = DiscreteMeasure::new(vec![-2.0, 0.0, 2.0], vec![1.0 / 3.0; 3]).unwrap();
        let u2 = GridFunction::zeros(vec![-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        let v = dual_value(&u2, &Payoff::forward_start_straddle(), &mu1, &mu2).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn coverage_is_checked() {
        let mu1 = DiscreteMeasure::new(vec![-3.0, 3.0], vec![0.5, 0.5]).unwrap();
        let mu2 = DiscreteMeasure::new(vec![-2.0, 2.0], vec![0.5, 0.5]).unwrap();
        let u2 = GridFunction::zeros(vec![-2.0, 2.0]).unwrap();
        assert!(matches!(
            dual_value(&u2, &Payoff::forward_start_straddle(), &mu1, &mu2),
            Err(Error::GridCoverage(_))
        ));
        let u2 = GridFunction::zeros(vec![-3.0, 3.0]).unwrap();
        assert!(matches!(
            dual_value(&u2, &Payoff::forward_start_straddle(), &mu1, &mu2),
            Err(Error::GridCoverage(_))
        ));
    }

    #[test]
    fn zero_sweeps_keep_start() {
        let mu1 = DiscreteMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let mu2 = DiscreteMeasure::new(vec![-2.0, 0.0, 2.0], vec![1.0 / 3.0; 3]).unwrap();
        let u2 = GridFunction::new(mu2.points().to_vec(), vec![0.1, -0.2, 0.3]).unwrap();
        let p = Payoff::forward_start_straddle();
        let r = improve_u2(&u2, &p, &mu1, &mu2, 0).unwrap();
        assert_eq!(r.u2, u2);
        assert_eq!(r.value, dual_value(&u2, &p, &mu1, &mu2).unwrap());
    }
}
