//! Birkhoff averages along single orbits.

use super::AnalysisError;
use crate::maps::{Family, Model};
use crate::torus::TorusPoint;
use std::f64::consts::TAU;

/// Fraction of the first `steps` iterates of `start` that land in the chart
/// box around the origin.
pub fn u0_frequency(model: &Model, start: &TorusPoint, steps: usize) -> Result<f64, AnalysisError> {
    if model.family() != Family::Fk {
        return Err(AnalysisError::NotApplicable { op: "u0_frequency", family: model.family() });
    }
    let mut p = *start;
    let mut hits = 0usize;
    for _ in 0..steps {
        if model.chart.to_chart(&p).is_some() {
            hits += 1;
        }
        p = model.eval(&p);
    }
    Ok(hits as f64 / steps as f64)
}

/// Upper bound `log λ / log 3λ` on the box frequency.
pub fn u0_bound(lambda: f64) -> f64 {
    lambda.ln() / (3.0 * lambda).ln()
}

/// Normal-approximation 95 % half-width of a binomial fraction.
pub fn ci_half_width(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Adds `(cos 2πxᵢ, sin 2πxᵢ)` for every coordinate of `p` into `acc`.
pub fn accumulate_observables(p: &TorusPoint, acc: &mut [f64]) {
    for (i, x) in p.as_slice().iter().enumerate() {
        let (s, c) = (TAU * x).sin_cos();
        acc[2 * i] += c;
        acc[2 * i + 1] += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::SystemSpec;

    #[test]
    fn bound_value() {
        let lam = crate::maps::linear::lambda0().powi(4);
        assert!((u0_bound(lam) - 0.777).abs() < 1e-3, "{}", u0_bound(lam));
    }

    #[test]
    fn relaxed_frequency_respects_the_bound() {
        let m = Model::build(&SystemSpec::relaxed(Family::Fk, 2)).unwrap();
        let f = u0_frequency(&m, &TorusPoint::new(&[0.31, 0.77, 0.12, 0.58, 0.21]), 100_000).unwrap();
        assert!(f <= u0_bound(m.lambda), "{f}");
    }

    #[test]
    fn observables_of_the_origin() {
        let mut acc = vec![0.0; 4];
        accumulate_observables(&TorusPoint::zero(2), &mut acc);
        assert_eq!(acc, vec![1.0, 0.0, 1.0, 0.0]);
        assert!((ci_half_width(0.5, 100) - 0.098).abs() < 1e-12);
    }
}
