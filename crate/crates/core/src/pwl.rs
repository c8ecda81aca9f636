//! Continuous piecewise-linear functions on the real line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A continuous piecewise-linear function given by its values at strictly
/// increasing knots, extended linearly beyond the outer knots with the
/// stored wing slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    knots: Vec<f64>,
    values: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, left_slope: f64, right_slope: f64) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::InvalidMeasure(format!(
                "piecewise-linear function needs matching nonempty knots/values ({} vs {})",
                knots.len(),
                values.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidMeasure("knots must be strictly increasing".into()));
        }
        if values.iter().chain([&left_slope, &right_slope]).any(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite value or slope".into()));
        }
        Ok(Self { knots, values, left_slope, right_slope })
    }

    /// Interpolates the given points and continues the first and last
    /// segments linearly. A single knot yields a constant.
    pub fn interpolating(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let k = knots.len();
        let (left, right) = if k >= 2 {
            (
                (values[1] - values[0]) / (knots[1] - knots[0]),
                (values[k - 1] - values[k - 2]) / (knots[k - 1] - knots[k - 2]),
            )
        } else {
            (0.0, 0.0)
        };
        Self::new(knots, values, left, right)
    }

    pub fn zero() -> Self {
        Self { knots: vec![0.0], values: vec![0.0], left_slope: 0.0, right_slope: 0.0 }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_slope(&self) -> f64 {
        self.left_slope
    }

    pub fn right_slope(&self) -> f64 {
        self.right_slope
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        let v = &self.values;
        let last = k.len() - 1;
        if x <= k[0] {
            return v[0] + self.left_slope * (x - k[0]);
        }
        if x >= k[last] {
            return v[last] + self.right_slope * (x - k[last]);
        }
        // k[i] <= x < k[i + 1]
        let i = k.partition_point(|&t| t <= x) - 1;
        let t = (x - k[i]) / (k[i + 1] - k[i]);
        v[i] + t * (v[i + 1] - v[i])
    }

    /// Slopes of the segments, including both wings: `slopes()[0]` is the left
    /// wing and `slopes()[len]` the right wing.
    pub fn slopes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.knots.len() + 1);
        out.push(self.left_slope);
        for i in 1..self.knots.len() {
            out.push((self.values[i] - self.values[i - 1]) / (self.knots[i] - self.knots[i - 1]));
        }
        out.push(self.right_slope);
        out
    }

    /// Returns `self + a + b·x`.
    pub fn add_affine(&self, a: f64, b: f64) -> Self {
        Self {
            knots: self.knots.clone(),
            values: self.knots.iter().zip(&self.values).map(|(x, v)| v + a + b * x).collect(),
            left_slope: self.left_slope + b,
            right_slope: self.right_slope + b,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            knots: self.knots.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            left_slope: c * self.left_slope,
            right_slope: c * self.right_slope,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_inside_and_on_wings() {
        let f = PiecewiseLinear::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 0.0], -1.0, 0.5).unwrap();
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(2.0), 1.0);
        assert_eq!(f.eval(3.0), 0.0);
        assert_eq!(f.eval(-2.0), 2.0);
        assert_eq!(f.eval(5.0), 1.0);
        assert_eq!(f.slopes(), vec![-1.0, 2.0, -1.0, 0.5]);
    }

    #[test]
    fn rejects_unsorted_knots() {
        assert!(PiecewiseLinear::new(vec![1.0, 1.0], vec![0.0, 0.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn single_knot_interpolant_is_constant() {
        let f = PiecewiseLinear::interpolating(vec![2.0], vec![7.0]).unwrap();
        assert_eq!(f.eval(-10.0), 7.0);
        assert_eq!(f.eval(10.0), 7.0);
    }
}
