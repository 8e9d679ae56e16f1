//! Morse–Smale circle diffeomorphisms realized as time-1 maps of the flow
//! `ẋ = -σ c sin(2π m x)`.
//!
//! With `ψ = π m x` shifted into the cell `[-π/2, π/2]` around the nearest
//! `j/m`, the flow solves to `tan ψ(t) = tan ψ(0) · e^{-σ s t}`, `s = 2π m c`.
//! Map, derivative and inverse are therefore closed form.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::torus::canonical;

/// Time-1 map of `ẋ = -σ c sin(2π m x)`.
///
/// For `σ = +1` the sinks are `j/m` and the sources `(j + 1/2)/m`; `σ = -1`
/// swaps them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineFlowMap {
    pub harmonics: u32,
    pub strength: f64,
    pub orientation: i8,
}

impl SineFlowMap {
    pub fn new(harmonics: u32, strength: f64) -> Self {
        assert!(harmonics >= 1);
        assert!(strength >= 0.0 && strength.is_finite());
        Self { harmonics, strength, orientation: 1 }
    }

    /// The strength `c` with `exp(2π m c) = rate`.
    pub fn strength_for_rate(harmonics: u32, rate: f64) -> f64 {
        rate.ln() / (2.0 * PI * harmonics as f64)
    }

    /// The canonical choice `exp(2π m c) = 0.7 λ`.
    pub fn default_for(harmonics: u32, lambda: f64) -> Self {
        Self::new(harmonics, Self::strength_for_rate(harmonics, 0.7 * lambda))
    }

    #[inline]
    fn rate(&self) -> f64 {
        self.orientation as f64 * 2.0 * PI * self.harmonics as f64 * self.strength
    }

    /// Derivative at the sinks, `e^{-s}`.
    pub fn sink_derivative(&self) -> f64 {
        (-self.rate().abs()).exp()
    }

    /// Derivative at the sources, `e^{s}`.
    pub fn source_derivative(&self) -> f64 {
        self.rate().abs().exp()
    }

    pub fn sinks(&self) -> Vec<f64> {
        self.fixed_points().into_iter().step_by(2).map(|x| self.shift(x)).collect()
    }

    pub fn sources(&self) -> Vec<f64> {
        self.fixed_points().into_iter().skip(1).step_by(2).map(|x| self.shift(x)).collect()
    }

    fn shift(&self, x: f64) -> f64 {
        if self.orientation >= 0 {
            x
        } else {
            canonical(x + 0.5 / self.harmonics as f64)
        }
    }

    /// All `2m` fixed points `j / (2m)` in increasing order.
    pub fn fixed_points(&self) -> Vec<f64> {
        let two_m = 2 * self.harmonics;
        (0..two_m).map(|j| j as f64 / two_m as f64).collect()
    }

    /// Cell index `n` and cell angle `ψ ∈ [-π/2, π/2]` of `x`.
    #[inline]
    fn cell(&self, x: f64) -> (f64, f64) {
        let m = self.harmonics as f64;
        let n = (x * m).round();
        let psi = PI * (x * m - n);
        (n, psi)
    }

    #[inline]
    fn is_fixed(&self, x: f64) -> bool {
        let y = x * 2.0 * self.harmonics as f64;
        y == y.round()
    }

    #[inline]
    fn flow(&self, x: f64, s: f64) -> f64 {
        if self.is_fixed(x) {
            return x;
        }
        let m = self.harmonics as f64;
        let (n, psi) = self.cell(x);
        let (sn, cs) = psi.sin_cos();
        let psi1 = ((-s).exp() * sn).atan2(cs);
        canonical(n / m + psi1 / (PI * m))
    }

    #[inline]
    fn flow_derivative(&self, x: f64, s: f64) -> f64 {
        let (_, psi) = self.cell(x);
        let (sn, cs) = psi.sin_cos();
        let e = (-s).exp();
        e / (e * e * sn * sn + cs * cs)
    }

    /// `K(x)`. Fixed points map to themselves exactly.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.flow(x, self.rate())
    }

    /// `K'(x) > 0`.
    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        self.flow_derivative(x, self.rate())
    }

    /// `K⁻¹(y)`, the time-(-1) map.
    #[inline]
    pub fn inverse(&self, y: f64) -> f64 {
        self.flow(y, -self.rate())
    }

    /// `(K⁻¹)'(y)`.
    #[inline]
    pub fn inverse_deriv(&self, y: f64) -> f64 {
        self.flow_derivative(y, -self.rate())
    }
}

/// Which hypothesis family a condition check belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionSet {
    /// Two fixed points, one sink and one source.
    K,
    /// Four or six fixed points, alternating sinks and sources.
    J,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub name: String,
    pub passed: bool,
    /// Positive when the inequality holds; the worst slack over the grid.
    pub margin: f64,
    /// Grid point realizing the worst margin.
    pub witness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleConditionReport {
    pub set: ConditionSet,
    pub results: Vec<ConditionResult>,
    /// Pointwise check at the sinks, `K'(sink) < (3/2)/λ`.
    pub sink_pointwise: ConditionResult,
}

impl CircleConditionReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed) && self.sink_pointwise.passed
    }

    pub fn first_failure(&self) -> Option<&ConditionResult> {
        self.results
            .iter()
            .chain(std::iter::once(&self.sink_pointwise))
            .find(|r| !r.passed)
    }
}

/// Number of points in the global sweep.
pub const CONDITION_GRID: usize = 100_000;

fn worst<I: Iterator<Item = f64>>(xs: I, slack: impl Fn(f64) -> f64) -> (f64, f64) {
    xs.map(|x| (slack(x), x))
        .fold((f64::INFINITY, f64::NAN), |a, b| if b.0 < a.0 { b } else { a })
}

/// Check the derivative conditions:
/// 1. `λ⁻¹ < K' < λ` on the whole circle;
/// 2. `K' < (3/2) λ⁻¹` within `δ₀` of every sink;
/// 3. `K' > (2/3) λ` within `δ₀` of every source.
///
/// The global sweep uses [`CONDITION_GRID`] points plus 2000 points in each
/// `δ₀`-window around a fixed point, which is where the extremes sit.
pub fn check_conditions(map: &SineFlowMap, lambda: f64, delta0: f64) -> CircleConditionReport {
    let set = if map.harmonics == 1 { ConditionSet::K } else { ConditionSet::J };
    let tag = match set {
        ConditionSet::K => "K",
        ConditionSet::J => "J",
    };
    let window = |centers: Vec<f64>| -> Vec<f64> {
        let per = 2000;
        centers
            .into_iter()
            .flat_map(|c| {
                (0..=per).map(move |i| canonical(c - delta0 + 2.0 * delta0 * i as f64 / per as f64))
            })
            .collect()
    };
    let sinks = map.sinks();
    let sources = map.sources();
    let mut global: Vec<f64> =
        (0..CONDITION_GRID).map(|i| i as f64 / CONDITION_GRID as f64).collect();
    global.extend(window(sinks.clone()));
    global.extend(window(sources.clone()));

    let d = |x: f64| map.deriv(x);
    let (m1, w1) = worst(global.iter().copied(), |x| {
        let v = d(x);
        (v - 1.0 / lambda).min(lambda - v)
    });
    let (m2, w2) = worst(window(sinks.clone()).into_iter(), |x| 1.5 / lambda - d(x));
    let (m3, w3) = worst(window(sources).into_iter(), |x| d(x) - 2.0 / 3.0 * lambda);
    let (mp, wp) = worst(sinks.into_iter(), |x| 1.5 / lambda - d(x));
    let mk = |i: usize, margin: f64, witness: f64| ConditionResult {
        name: format!("{tag}{i}"),
        passed: margin > 0.0,
        margin,
        witness,
    };
    CircleConditionReport {
        set,
        results: vec![mk(1, m1, w1), mk(2, m2, w2), mk(3, m3, w3)],
        sink_pointwise: ConditionResult {
            name: format!("{tag}2-at-sinks"),
            passed: mp > 0.0,
            margin: mp,
            witness: wp,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::wrap_delta;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn lam4() -> f64 {
        ((3.0 + 5f64.sqrt()) / 2.0).powi(4)
    }

    #[test]
    fn fixed_points_are_exact() {
        for m in 1..=3 {
            let k = SineFlowMap::default_for(m, lam4());
            for x in k.fixed_points() {
                assert_eq!(k.eval(x), x);
                assert_eq!(k.inverse(x), x);
            }
        }
        let k = SineFlowMap::default_for(1, lam4());
        assert_eq!(k.sinks(), vec![0.0]);
        assert_eq!(k.sources(), vec![0.5]);
    }

    #[test]
    fn quarter_point_closed_form() {
        let c = 0.37;
        let k = SineFlowMap::new(1, c);
        let expect = (1.0 / PI) * (-2.0 * PI * c).exp().atan();
        assert!((k.eval(0.25) - expect).abs() < 1e-15);
        assert!(k.eval(0.25) < 0.25);
    }

    /// Independent oracle: integrate the ODE with classical RK4.
    fn rk4_time_one(m: u32, c: f64, x0: f64) -> f64 {
        let f = |x: f64| -c * (2.0 * PI * m as f64 * x).sin();
        let n = 20_000;
        let h = 1.0 / n as f64;
        let mut x = x0;
        for _ in 0..n {
            let k1 = f(x);
            let k2 = f(x + 0.5 * h * k1);
            let k3 = f(x + 0.5 * h * k2);
            let k4 = f(x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        canonical(x)
    }

    #[test]
    fn closed_form_matches_rk4() {
        for m in 1..=3 {
            let k = SineFlowMap::new(m, 0.11);
            for x in [0.03, 0.2, 0.41, 0.77, 0.96] {
                let d = wrap_delta(k.eval(x), rk4_time_one(m, 0.11, x)).abs();
                assert!(d < 1e-10, "m={m} x={x} diff {d:e}");
            }
        }
    }

    #[test]
    fn derivative_at_fixed_points_and_fd() {
        let k = SineFlowMap::default_for(2, lam4());
        let s = 2.0 * PI * 2.0 * k.strength;
        assert!((k.deriv(0.0) - (-s).exp()).abs() < 1e-15);
        assert!((k.deriv(0.25) - s.exp()).abs() < 1e-12 * s.exp());
        let h = 1e-7;
        for i in 0..500 {
            let x = (i as f64 + 0.3) / 500.0;
            let fd = wrap_delta(k.eval(x + h), k.eval(x - h)) / (2.0 * h);
            assert!((fd - k.deriv(x)).abs() < 1e-6 * k.deriv(x).max(1.0));
            let fdi = wrap_delta(k.inverse(x + h), k.inverse(x - h)) / (2.0 * h);
            assert!((fdi - k.inverse_deriv(x)).abs() < 1e-6 * k.inverse_deriv(x).max(1.0));
        }
    }

    #[test]
    fn positive_derivative_and_extremes_at_fixed_points() {
        let k = SineFlowMap::default_for(3, lam4());
        let (lo, hi) = (k.sink_derivative(), k.source_derivative());
        for i in 0..100_000 {
            let d = k.deriv(i as f64 / 100_000.0);
            assert!(d > 0.0);
            assert!(d >= lo * (1.0 - 1e-12) && d <= hi * (1.0 + 1e-12));
        }
    }

    #[test]
    fn round_trip_ten_thousand() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for m in 1..=3 {
            let k = SineFlowMap::default_for(m, lam4());
            for _ in 0..10_000 {
                let x: f64 = rng.random();
                assert!(wrap_delta(k.eval(k.inverse(x)), x).abs() < 1e-12);
                assert!(wrap_delta(k.inverse(k.eval(x)), x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn condition_examples() {
        let lam = lam4();
        for m in 1..=3 {
            let r = check_conditions(&SineFlowMap::default_for(m, lam), lam, 9.5e-5);
            assert!(r.passed(), "m = {m}: {:?}", r.first_failure());
        }
        let id = check_conditions(&SineFlowMap::new(1, 0.0), lam, 9.5e-5);
        assert_eq!(id.first_failure().unwrap().name, "K2");
        assert!(!id.results[2].passed);
        let huge = SineFlowMap::new(1, SineFlowMap::strength_for_rate(1, 1.2 * lam));
        let r = check_conditions(&huge, lam, 9.5e-5);
        assert!(!r.results[0].passed);
    }

    #[test]
    fn reversed_orientation_swaps_roles() {
        let mut k = SineFlowMap::new(1, 0.2);
        k.orientation = -1;
        assert_eq!(k.sinks(), vec![canonical(0.5)]);
        assert!(k.deriv(0.5) < 1.0 && k.deriv(0.0) > 1.0);
    }

    proptest! {
        #[test]
        fn equivariant_under_cell_shift(x in 0.0f64..1.0, m in 1u32..=3) {
            let k = SineFlowMap::default_for(m, lam4());
            let shifted = k.eval(canonical(x + 1.0 / m as f64));
            let expect = canonical(k.eval(x) + 1.0 / m as f64);
            prop_assert!(wrap_delta(shifted, expect).abs() < 1e-12);
        }
    }
}
