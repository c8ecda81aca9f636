use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::DiscreteMeasure;
use crate::error::{Error, Result};

/// A continuous law with compact support, to be discretized.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Uniform { a: f64, b: f64 },
    /// Density linear between knots and zero outside; values need not be
    /// normalized.
    PiecewiseLinear { knots: Vec<f64>, values: Vec<f64> },
    /// Arbitrary density on `[a, b]`; discretized on equal-width cells with
    /// numerical quadrature.
    #[serde(skip)]
    Custom { a: f64, b: f64, density: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl fmt::Debug for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensitySpec::Uniform { a, b } => write!(f, "Uniform({a}, {b})"),
            DensitySpec::PiecewiseLinear { knots, values } => {
                write!(f, "PiecewiseLinear({knots:?}, {values:?})")
            }
            DensitySpec::Custom { a, b, .. } => write!(f, "Custom([{a}, {b}])"),
        }
    }
}

/// Linear density pieces `f(x) = v + slope·(x - x0)` on `[x0, x1]`.
struct Piece {
    x0: f64,
    x1: f64,
    v: f64,
    slope: f64,
}

impl Piece {
    /// Mass and first moment over `[x0 + y0, x0 + y1]`.
    fn mass_moment(&self, y0: f64, y1: f64) -> (f64, f64) {
        let (v, s) = (self.v, self.slope);
        let d1 = y1 - y0;
        let d2 = (y1 * y1 - y0 * y0) / 2.0;
        let d3 = (y1 * y1 * y1 - y0 * y0 * y0) / 3.0;
        let mass = v * d1 + s * d2;
        let moment = self.x0 * mass + v * d2 + s * d3;
        (mass, moment)
    }

    /// Offset `y` with `mass_moment(0, y).0 == r`.
    fn invert(&self, r: f64) -> f64 {
        let disc = (self.v * self.v + 2.0 * self.slope * r).max(0.0);
        let denom = self.v + disc.sqrt();
        let y = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        y.clamp(0.0, self.x1 - self.x0)
    }
}

fn pieces(knots: &[f64], values: &[f64]) -> Result<Vec<Piece>> {
    if knots.len() < 2 || knots.len() != values.len() {
        return Err(Error::BadSpec("piecewise-linear density needs >= 2 matching knots/values".into()));
    }
    if knots.windows(2).any(|w| !(w[0] < w[1])) || knots.iter().any(|k| !k.is_finite()) {
        return Err(Error::BadSpec("density knots must be finite and strictly increasing".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::BadSpec("density values must be finite and nonnegative".into()));
    }
    Ok(knots
        .windows(2)
        .zip(values.windows(2))
        .map(|(k, v)| Piece { x0: k[0], x1: k[1], v: v[0], slope: (v[1] - v[0]) / (k[1] - k[0]) })
        .collect())
}

fn discretize_linear(pieces: &[Piece], m: usize) -> Result<DiscreteMeasure> {
    let masses: Vec<f64> = pieces.iter().map(|p| p.mass_moment(0.0, p.x1 - p.x0).0).collect();
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::BadSpec(format!("density has total mass {total}")));
    }

    // Equal-mass cell boundaries: walk the pieces once.
    let mut bounds: Vec<(usize, f64)> = Vec::with_capacity(m + 1);
    bounds.push((0, 0.0));
    let mut piece = 0;
    let mut below = 0.0;
    for k in 1..m {
        let target = total * k as f64 / m as f64;
        while piece + 1 < pieces.len() && below + masses[piece] < target {
            below += masses[piece];
            piece += 1;
        }
        bounds.push((piece, pieces[piece].invert(target - below)));
    }
    let last = pieces.len() - 1;
    bounds.push((last, pieces[last].x1 - pieces[last].x0));

    let mut atoms = Vec::with_capacity(m);
    for w in bounds.windows(2) {
        let ((p0, y0), (p1, y1)) = (w[0], w[1]);
        let (mut mass, mut moment) = (0.0, 0.0);
        for p in p0..=p1 {
            let lo = if p == p0 { y0 } else { 0.0 };
            let hi = if p == p1 { y1 } else { pieces[p].x1 - pieces[p].x0 };
            if hi > lo {
                let (a, b) = pieces[p].mass_moment(lo, hi);
                mass += a;
                moment += b;
            }
        }
        if mass > 0.0 {
            atoms.push((moment / mass, mass / total));
        }
    }
    DiscreteMeasure::from_atoms(atoms)
}

fn discretize_custom(a: f64, b: f64, density: &(dyn Fn(f64) -> f64 + Send + Sync), m: usize) -> Result<DiscreteMeasure> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::BadSpec(format!("bad support [{a}, {b}]")));
    }
    // Composite Simpson on each equal-width cell.
    const SUB: usize = 64;
    let width = (b - a) / m as f64;
    let mut cells = Vec::with_capacity(m);
    for c in 0..m {
        let lo = a + width * c as f64;
        let h = width / SUB as f64;
        let (mut mass, mut moment) = (0.0, 0.0);
        for j in 0..=SUB {
            let x = lo + h * j as f64;
            let f = density(x);
            if !f.is_finite() || f < 0.0 {
                return Err(Error::BadSpec(format!("density value {f} at {x}")));
            }
            let wgt = if j == 0 || j == SUB { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
            mass += wgt * f;
            moment += wgt * f * x;
        }
        cells.push((mass * h / 3.0, moment * h / 3.0));
    }
    let total: f64 = cells.iter().map(|c| c.0).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::BadSpec(format!("density has total mass {total}")));
    }
    let atoms = cells
        .into_iter()
        .filter(|c| c.0 > 0.0)
        .map(|(mass, moment)| (moment / mass, mass / total))
        .collect();
    DiscreteMeasure::from_atoms(atoms)
}

/// Barycentric discretization: splits the support into `m` cells (equal
/// probability mass when the quantile function is available in closed form,
/// equal width otherwise) and puts each cell's mass at its conditional mean.
/// The mean of the result equals the mean of the density.
pub fn discretize(spec: &DensitySpec, m: usize) -> Result<DiscreteMeasure> {
    if m < 2 {
        return Err(Error::BadSpec(format!("need at least 2 cells, got {m}")));
    }
    match spec {
        DensitySpec::Uniform { a, b } => {
            if !(a < b) {
                return Err(Error::BadSpec(format!("bad support [{a}, {b}]")));
            }
            discretize_linear(&pieces(&[*a, *b], &[1.0, 1.0])?, m)
        }
        DensitySpec::PiecewiseLinear { knots, values } => discretize_linear(&pieces(knots, values)?, m),
        DensitySpec::Custom { a, b, density } => discretize_custom(*a, *b, density.as_ref(), m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trapezoid() -> DensitySpec {
        DensitySpec::PiecewiseLinear {
            knots: vec![-2.0, -1.0, 1.0, 2.0],
            values: vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 0.0],
        }
    }

    #[test]
    fn uniform_halves_and_quarters() {
        let m = discretize(&DensitySpec::Uniform { a: -1.0, b: 1.0 }, 2).unwrap();
        assert_eq!(m.points(), &[-0.5, 0.5]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        let m = discretize(&DensitySpec::Uniform { a: -1.0, b: 1.0 }, 4).unwrap();
        for (x, e) in m.points().iter().zip([-0.75, -0.25, 0.25, 0.75]) {
            assert!((x - e).abs() < 1e-15);
        }
        assert!(m.weights().iter().all(|w| (w - 0.25).abs() < 1e-15));
    }

    #[test]
    fn trapezoid_three_cells() {
        // Cell masses are 1/3 each.
        let m = discretize(&trapezoid(), 3).unwrap();
        assert_eq!(m.len(), 3);
        let total: f64 = m.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(m.mean().abs() < 1e-12);
        assert!(m.weights().iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-12));

        // Left cell is [-2, q]: 1/6 of mass on [-2, -1] plus (q + 1)/3 = 1/6, so q = -0.5.
        let q = -0.5;
        // ∫_{-2}^{-1} x (2 + x)/3 dx = -2/9 ; ∫_{-1}^{q} x/3 dx = (q² - 1)/6
        let moment = -2.0 / 9.0 + (q * q - 1.0) / 6.0;
        assert!((m.points()[0] - moment * 3.0).abs() < 1e-12);
        assert!(m.points()[1].abs() < 1e-12);
    }

    #[test]
    fn custom_density_preserves_mean() {
        let spec = DensitySpec::Custom { a: 0.0, b: 2.0, density: Arc::new(|x: f64| x) };
        let m = discretize(&spec, 10).unwrap();
        // mean of density x/2 on [0, 2] is 4/3
        assert!((m.mean() - 4.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(discretize(&DensitySpec::Uniform { a: 1.0, b: 1.0 }, 4).is_err());
        assert!(discretize(&DensitySpec::Uniform { a: 0.0, b: 1.0 }, 1).is_err());
        let neg = DensitySpec::PiecewiseLinear { knots: vec![0.0, 1.0], values: vec![-1.0, 1.0] };
        assert!(discretize(&neg, 4).is_err());
        let zero = DensitySpec::PiecewiseLinear { knots: vec![0.0, 1.0], values: vec![0.0, 0.0] };
        assert!(discretize(&zero, 4).is_err());
    }
}
