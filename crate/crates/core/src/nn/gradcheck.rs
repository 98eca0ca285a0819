//! Central finite-difference gradient oracle.

use super::{ParamCoord, ParamSet, Scalar};
use crate::error::Result;

/// `(f(θ + ε·e) − f(θ − ε·e)) / (2ε)` at each requested coordinate.
///
/// The denominator uses the perturbation actually representable in `T`, which
/// matters for `f32` parameters.
pub fn finite_diff_at<T, F>(mut f: F, params: &ParamSet<T>, coords: &[ParamCoord], eps: f64) -> Result<Vec<f64>>
where
    T: Scalar,
    F: FnMut(&ParamSet<T>) -> Result<f64>,
{
    let mut work = params.clone();
    let mut out = Vec::with_capacity(coords.len());
    for &c in coords {
        let theta = params.at(c);
        let plus = theta + T::of(eps);
        let minus = theta - T::of(eps);
        work.set(c, plus);
        let fp = f(&work)?;
        work.set(c, minus);
        let fm = f(&work)?;
        work.set(c, theta);
        out.push((fp - fm) / (plus.as_f64() - minus.as_f64()));
    }
    Ok(out)
}

/// Finite-difference gradient over every scalar parameter, flattened in
/// parameter order.
pub fn finite_diff_grad<T, F>(f: F, params: &ParamSet<T>, eps: f64) -> Result<Vec<f64>>
where
    T: Scalar,
    F: FnMut(&ParamSet<T>) -> Result<f64>,
{
    let coords: Vec<ParamCoord> = params.coords().collect();
    finite_diff_at(f, params, &coords, eps)
}

/// `max|g − ĝ| / (max|ĝ| + 1e-12)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = numeric.iter().map(|n| n.abs()).fold(0.0, f64::max);
    diff / (scale + 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let mut p = ParamSet::<f64>::new();
        p.push("theta", vec![1], vec![3.0]);
        let g = finite_diff_grad(|p| Ok(p.get(0)[0].powi(2)), &p, 1e-3).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function() {
        let mut p = ParamSet::<f32>::new();
        p.push("a", vec![2, 2], vec![0.1, -4.0, 2.0, 7.5]);
        let g = finite_diff_grad(|_| Ok(1.25), &p, 1e-3).unwrap();
        assert_eq!(g, vec![0.0; 4]);
    }

    #[test]
    fn relative_error_definition() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        let e = relative_error(&[1.1, 2.0], &[1.0, 2.0]);
        assert!((e - 0.1 / (2.0 + 1e-12)).abs() < 1e-12);
    }
}
