//! Piecewise-polynomial slope reconstruction and its closed-form estimator.
//!
//! Instead of piecewise-linear interpolation between recorded values, the
//! slope dQ/dl on each interval can carry a polynomial shape taken from a
//! global regression, corrected per interval so the induced Q stays
//! continuous and still interpolates every recorded value. The weighted
//! contribution then has a closed form against the exponential law, via the
//! antiderivative of `l^i * exp(r l)`.

use nalgebra::{DMatrix, DVector};

use super::EstimatorError;
use crate::hierarchy::SamplePath;
use crate::level_law::LevelLaw;

/// Per-interval slope polynomials: `coefficients[j][i]` multiplies `l^i` on
/// the interval `(levels[j], levels[j+1])`.
#[derive(Clone, Debug)]
pub struct PiecewisePolynomial {
    pub coefficients: Vec<Vec<f64>>,
}

/// Fit per-interval slope polynomials with `order` coefficients each
/// (degree `order - 1`).
///
/// A global least-squares polynomial of degree `order` is fitted through the
/// recorded `(level, value)` points; its derivative provides the shape, and
/// each interval's constant term is shifted so the integral over the
/// interval reproduces the recorded increment exactly. The induced Q is
/// therefore continuous and interpolates every recorded value. With
/// `order == 1` the result degenerates to the finite-difference slopes.
pub fn fit_piecewise_polynomial(
    path: &SamplePath,
    order: usize,
) -> Result<PiecewisePolynomial, EstimatorError> {
    if order == 0 {
        return Err(EstimatorError::Contract(
            "polynomial order must be at least 1".into(),
        ));
    }
    let points = path.levels.len();
    if points < order + 1 {
        return Err(EstimatorError::Contract(format!(
            "fit of order {order} needs at least {} points, path has {points}",
            order + 1
        )));
    }
    let intervals = points - 1;
    if order == 1 {
        let coefficients = (0..intervals)
            .map(|j| {
                vec![
                    (path.values[j + 1] - path.values[j]) / (path.levels[j + 1] - path.levels[j]),
                ]
            })
            .collect();
        return Ok(PiecewisePolynomial { coefficients });
    }

    // Global degree-`order` least squares through the recorded values.
    let rows = points;
    let cols = order + 1;
    let design = DMatrix::from_fn(rows, cols, |r, c| path.levels[r].powi(c as i32));
    let rhs = DVector::from_fn(rows, |r, _| path.values[r]);
    let svd = design.svd(true, true);
    let global = svd
        .solve(&rhs, 1e-13)
        .map_err(|e| EstimatorError::Contract(format!("degenerate polynomial fit: {e}")))?;

    let eval_global = |l: f64| {
        let mut acc = 0.0;
        for c in (0..cols).rev() {
            acc = acc * l + global[c];
        }
        acc
    };
    // Derivative coefficients of the global fit.
    let shape: Vec<f64> = (1..cols).map(|c| c as f64 * global[c]).collect();

    let mut coefficients = Vec::with_capacity(intervals);
    for j in 0..intervals {
        let (l0, l1) = (path.levels[j], path.levels[j + 1]);
        let dq = path.values[j + 1] - path.values[j];
        let fitted_gain = eval_global(l1) - eval_global(l0);
        let mut coeffs = shape.clone();
        coeffs[0] += (dq - fitted_gain) / (l1 - l0);
        coefficients.push(coeffs);
    }
    Ok(PiecewisePolynomial { coefficients })
}

/// Antiderivative of `l^i * exp(rate * l)`:
/// `exp(rate l) * sum_{m=0..i} (-1)^m (i)_m / rate^{m+1} * l^{i-m}`
/// with the falling factorial `(i)_m = i! / (i-m)!`.
fn power_exponential_antiderivative(i: usize, rate: f64, l: f64) -> f64 {
    let mut sum = 0.0;
    let mut falling = 1.0f64;
    let mut sign = 1.0f64;
    let mut rate_pow = rate;
    for m in 0..=i {
        sum += sign * falling / rate_pow * l.powi((i - m) as i32);
        falling *= (i - m) as f64;
        sign = -sign;
        rate_pow *= rate;
    }
    (rate * l).exp() * sum
}

/// Closed-form weighted contribution of a piecewise-polynomial slope under
/// an exponential stopping law. Reduces to [`super::sample_contribution`]
/// when the polynomials are the order-1 finite-difference slopes.
pub fn polynomial_contribution(
    poly: &PiecewisePolynomial,
    path: &SamplePath,
    law: &LevelLaw,
) -> Result<f64, EstimatorError> {
    let rate = match law {
        LevelLaw::Exponential { rate } => *rate,
        other => {
            return Err(EstimatorError::UnsupportedLaw {
                expected: "exponential",
                got: match other {
                    LevelLaw::Geometric { .. } => "geometric",
                    _ => "piecewise",
                },
            })
        }
    };
    if !(rate > 0.0) {
        return Err(EstimatorError::NonPositiveRate(rate));
    }
    let intervals = path.levels.len() - 1;
    if poly.coefficients.len() != intervals {
        return Err(EstimatorError::Contract(format!(
            "polynomial has {} intervals, path has {intervals}",
            poly.coefficients.len()
        )));
    }
    let mut y = 0.0;
    for j in 0..intervals {
        let l_prev = path.levels[j];
        let l_next = path.levels[j + 1];
        let l_tilde = super::truncated_level(l_next, path.stopping_level, path.truncation_level);
        if l_tilde <= l_prev {
            continue;
        }
        for (i, &a) in poly.coefficients[j].iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            y += a
                * (power_exponential_antiderivative(i, rate, l_tilde)
                    - power_exponential_antiderivative(i, rate, l_prev));
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::sample_contribution;
    use crate::hierarchy::SamplePath;
    use crate::rng::{stream, StreamRole};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn path_from(levels: Vec<f64>, values: Vec<f64>, stopping: f64) -> SamplePath {
        let n = levels.len();
        SamplePath {
            sample_index: 0,
            levels,
            values,
            step_costs: vec![0.0; n],
            stopping_level: stopping,
            truncation_level: None,
            machine_truncated: false,
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn antiderivative_differentiates_back() {
        // Central difference of the antiderivative recovers l^i e^{rl}.
        for i in 0..4usize {
            for &l in &[0.4, 1.3, 2.9] {
                let r = 1.1;
                let h = 1e-6;
                let deriv = (power_exponential_antiderivative(i, r, l + h)
                    - power_exponential_antiderivative(i, r, l - h))
                    / (2.0 * h);
                let expected = l.powi(i as i32) * (r * l).exp();
                assert_relative_eq!(deriv, expected, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn order_one_reproduces_finite_difference_slopes() {
        let path = path_from(vec![0.0, 1.0, 2.5], vec![0.3, 0.9, 1.0], 2.2);
        let poly = fit_piecewise_polynomial(&path, 1).unwrap();
        // Same arithmetic as the finite-difference special case.
        let first = (0.9 - 0.3) / (1.0 - 0.0);
        let second = (1.0 - 0.9) / (2.5 - 1.0);
        assert_eq!(poly.coefficients, vec![vec![first], vec![second]]);
    }

    #[test]
    fn quadratic_data_is_recovered_exactly() {
        // Q(l) = 2 + 0.5 l - 0.25 l^2, so dQ/dl = 0.5 - 0.5 l.
        let levels = vec![0.0, 0.7, 1.5, 2.0, 3.1];
        let q = |l: f64| 2.0 + 0.5 * l - 0.25 * l * l;
        let values: Vec<f64> = levels.iter().map(|&l| q(l)).collect();
        let path = path_from(levels, values, 3.0);
        let poly = fit_piecewise_polynomial(&path, 2).unwrap();
        for coeffs in &poly.coefficients {
            assert_relative_eq!(coeffs[0], 0.5, max_relative = 1e-10, epsilon = 1e-10);
            assert_relative_eq!(coeffs[1], -0.5, max_relative = 1e-10);
        }
    }

    #[test]
    fn constant_path_gives_zero_coefficients() {
        let path = path_from(vec![0.0, 1.0, 2.0, 3.0], vec![4.0; 4], 2.5);
        let poly = fit_piecewise_polynomial(&path, 2).unwrap();
        for coeffs in &poly.coefficients {
            for &a in coeffs {
                assert!(a.abs() < 1e-10, "coefficient {a} should vanish");
            }
        }
    }

    #[test]
    fn underdetermined_fit_is_rejected() {
        let path = path_from(vec![0.0, 1.0], vec![0.0, 1.0], 0.7);
        assert!(fit_piecewise_polynomial(&path, 2).is_err());
        assert!(fit_piecewise_polynomial(&path, 0).is_err());
    }

    #[test]
    fn order_one_contribution_matches_linear_estimator() {
        let mut rng = stream(21, 0, StreamRole::Model);
        let law = LevelLaw::Exponential { rate: 1.4 };
        for trial in 0..1000 {
            let n = 2 + (trial % 5);
            let mut levels = vec![0.0];
            let mut values = vec![rng.random::<f64>()];
            for j in 1..=n {
                levels.push(levels[j - 1] + 0.5 + rng.random::<f64>());
                values.push(values[j - 1] + rng.random::<f64>() - 0.4);
            }
            let stopping = levels[n - 1] + rng.random::<f64>() * (levels[n] - levels[n - 1]);
            let path = path_from(levels, values, stopping.max(1e-9));
            let poly = fit_piecewise_polynomial(&path, 1).unwrap();
            let closed = polynomial_contribution(&poly, &path, &law).unwrap();
            let linear = sample_contribution(&path, &law).unwrap();
            assert_relative_eq!(closed, linear, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn contribution_matches_quadrature_for_higher_orders() {
        // Independent oracle: numerically integrate sum_i a_i l^i e^{rl}.
        let levels = vec![0.0, 0.9, 1.7, 2.6];
        let q = |l: f64| 1.0 + 0.3 * l + 0.2 * l * l - 0.05 * l * l * l;
        let values: Vec<f64> = levels.iter().map(|&l| q(l)).collect();
        let path = path_from(levels.clone(), values, 2.3);
        let law = LevelLaw::Exponential { rate: 0.9 };
        let poly = fit_piecewise_polynomial(&path, 3).unwrap();
        let closed = polynomial_contribution(&poly, &path, &law).unwrap();

        let mut oracle = 0.0;
        for j in 0..poly.coefficients.len() {
            let a = &poly.coefficients[j];
            let lo = levels[j];
            let hi = levels[j + 1].min(2.3);
            if hi <= lo {
                continue;
            }
            // Fine midpoint rule; the integrand is smooth.
            let steps = 200_000;
            let h = (hi - lo) / steps as f64;
            let mut acc = 0.0;
            for s in 0..steps {
                let l = lo + (s as f64 + 0.5) * h;
                let slope: f64 = a
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| c * l.powi(i as i32))
                    .sum();
                acc += slope * (0.9 * l).exp();
            }
            oracle += acc * h;
        }
        assert_relative_eq!(closed, oracle, max_relative = 1e-8);
    }

    #[test]
    fn non_exponential_law_is_rejected() {
        let path = path_from(vec![0.0, 1.0], vec![0.0, 1.0], 0.6);
        let poly = fit_piecewise_polynomial(&path, 1).unwrap();
        let law = LevelLaw::Geometric { rate: 0.5 };
        assert!(matches!(
            polynomial_contribution(&poly, &path, &law),
            Err(EstimatorError::UnsupportedLaw { .. })
        ));
    }
}
