//! Transport values without the martingale constraint, by sorting.

use crate::error::Result;
use crate::measures::DiscreteMeasure;
use crate::payoff::Payoff;

fn quantile_coupling_value(a: &[(f64, f64)], b: &[(f64, f64)], payoff: &Payoff) -> Result<f64> {
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut v = 0.0;
    loop {
        let q = ra.min(rb);
        v += q * payoff.evaluate(&[a[i].0, b[j].0])?;
        ra -= q;
        rb -= q;
        if ra <= 1e-15 {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = a[i].1;
        }
        if rb <= 1e-15 {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    Ok(v)
}

/// `E[Φ(X, Y)]` under the increasing (quantile) coupling of `mu1` and `mu2`.
pub fn comonotone_value(mu1: &DiscreteMeasure, mu2: &DiscreteMeasure, payoff: &Payoff) -> Result<f64> {
    let a: Vec<_> = mu1.atoms().collect();
    let b: Vec<_> = mu2.atoms().collect();
    quantile_coupling_value(&a, &b, payoff)
}

/// `E[Φ(X, Y)]` under the decreasing coupling of `mu1` and `mu2`.
pub fn antimonotone_value(mu1: &DiscreteMeasure, mu2: &DiscreteMeasure, payoff: &Payoff) -> Result<f64> {
    let a: Vec<_> = mu1.atoms().collect();
    let mut b: Vec<_> = mu2.atoms().collect();
    b.reverse();
    quantile_coupling_value(&a, &b, payoff)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_couplings() {
        let mu = DiscreteMeasure::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let p = Payoff::forward_start_straddle();
        assert_eq!(comonotone_value(&mu, &mu, &p).unwrap(), 0.0);
        assert_eq!(antimonotone_value(&mu, &mu, &p).unwrap(), 1.0);
    }
}
