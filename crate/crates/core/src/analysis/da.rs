//! Geometry of the DA surgery `g_k` on 𝕋²: the saddle abscissa `u₀`, the
//! trapping box `V` around the new sink and the expansion on its complement.
//!
//! Inside the plateau of the stable cutoff the deformed unstable coordinate
//! is `L(u, v) = λu + (½ - λ) u φ(ku) φ(v)`, so on the axis `v = 0` the map
//! fixes `u₀` exactly when `φ(ku₀) = (λ - 1)/(λ - ½)`.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::{chunk_rng, CHUNK};
use super::trapping::{trapping_check, TrapGeometry, TrapRegion, TrapReport};
use super::AnalysisError;
use crate::bump::BumpProfile;
use crate::maps::{Family, Model};
use crate::torus::{distance, TorusPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaParams {
    pub lambda: f64,
    pub k: f64,
    pub delta0: f64,
    /// Positive saddle abscissa on the unstable axis.
    pub u0: f64,
    /// Last abscissa below `u₀` where `∂L/∂u(u, 0) ≤ 1`.
    pub u_star: f64,
    /// Half-width of `V` along the unstable direction.
    pub a: f64,
    /// Half-width of `V` along the stable direction, `δ₀/4`.
    pub s_half: f64,
}

/// `∂L/∂u` at `(u, v)`.
pub fn du(bump: &BumpProfile, lambda: f64, k: f64, u: f64, v: f64) -> f64 {
    let (p, dp) = bump.phi_and_prime(k * u);
    lambda + (0.5 - lambda) * (p + k * u * dp) * bump.phi(v)
}

impl DaParams {
    /// Solves for `u₀` and `u*` and places `a` a quarter of the way from
    /// `u₀` down to `u*`.
    pub fn solve(bump: &BumpProfile, lambda: f64, k: f64) -> Result<Self, AnalysisError> {
        let target = (lambda - 1.0) / (lambda - 0.5);
        let (q, s) = (bump.plateau(), bump.support());
        // φ decreases from 1 to 0 across (q, s); bisect in t = k u.
        let (mut lo, mut hi) = (q, s);
        while hi - lo > f64::EPSILON * hi {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if bump.phi(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t0 = if (bump.phi(lo) - target).abs() <= (bump.phi(hi) - target).abs() { lo } else { hi };
        let u0 = t0 / k;

        let d = |u: f64| du(bump, lambda, k, u, 0.0);
        if d(u0) <= 1.0 {
            return Err(AnalysisError::Precondition(format!("dL/du(u0) = {} is not expanding", d(u0))));
        }
        // Walk down from u₀ to the first grid point with dL/du ≤ 1, then
        // refine between it and its upper neighbour.
        const GRID: usize = 10_000;
        let mut upper = u0;
        let mut lower = None;
        for i in 1..=GRID {
            let u = u0 * (1.0 - i as f64 / GRID as f64);
            if d(u) <= 1.0 {
                lower = Some(u);
                break;
            }
            upper = u;
        }
        let mut lo = lower.ok_or_else(|| AnalysisError::Precondition("dL/du > 1 on all of [0, u0]".into()))?;
        let mut hi = upper;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if d(mid) <= 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let u_star = lo;
        let a = u0 - 0.25 * (u0 - u_star);
        Ok(Self { lambda, k, delta0: bump.delta0, u0, u_star, a, s_half: 0.25 * bump.delta0 })
    }

    pub fn for_model(model: &Model) -> Result<Self, AnalysisError> {
        Self::solve(&model.bump, model.lambda, model.spec.k as f64)
    }

    /// Same parameters with a different box half-width.
    pub fn with_a(self, a: f64) -> Self {
        Self { a, ..self }
    }

    /// `φ(k u₀) - (λ - 1)/(λ - ½)`.
    pub fn root_residual(&self, bump: &BumpProfile) -> f64 {
        bump.phi(self.k * self.u0) - (self.lambda - 1.0) / (self.lambda - 0.5)
    }

    pub fn u0_in_window(&self) -> bool {
        self.delta0 / (4.0 * self.k) < self.u0 && self.u0 < self.delta0 / (2.0 * self.k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaReport {
    pub params: DaParams,
    pub root_residual: f64,
    pub u0_in_window: bool,
    /// Smallest `∂L/∂u` seen on the complement of `[-a, a] × [-δ₀/2, δ₀/2]`
    /// inside `V₀ = [-δ₀, δ₀]²`.
    pub min_du_complement: f64,
    pub du_witness: Vec<f64>,
    /// Largest `|∂L/∂u - λ|` outside `V₀`.
    pub max_du_dev_outside: f64,
    pub trap: TrapReport,
    /// Orbits from `V` that came within `1e-8` of the sink in time.
    pub converged: usize,
    pub orbits: usize,
    pub max_steps_to_converge: usize,
    /// `max |DG(0) - diag(½, 1/λ)|` in the chart.
    pub sink_jacobian_error: f64,
    pub passed: bool,
}

pub const CONVERGE_RADIUS: f64 = 1e-8;
pub const CONVERGE_BUDGET: usize = 500;

/// Chart Jacobian entry `(0, 0)`, i.e. `∂L/∂u` as the map computes it.
fn map_du(model: &Model, u: f64, v: f64) -> f64 {
    let p = model.chart.from_chart(&DVector::from_vec(vec![u, v]));
    model.chart_jacobian(&p)[(0, 0)]
}

/// Runs the three checks on `samples` complement points, a boundary grid of
/// `samples` points and `orbits` starts in `V`.
pub fn da_complement_check(
    model: &Model,
    params: &DaParams,
    samples: usize,
    orbits: usize,
    seed: u64,
) -> Result<DaReport, AnalysisError> {
    if model.family() != Family::DaGk {
        return Err(AnalysisError::NotApplicable { op: "da_complement_check", family: model.family() });
    }
    let d0 = params.delta0;
    let cut_u = d0 / (2.0 * params.k);

    // (i) Half of the complement samples fill V₀ by rejection, the other half
    // sit in the thin strip a < |u| < δ₀/(2k) where the bump is active. Every
    // fourth sample lies outside V₀ and must see the unperturbed rate λ.
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<(f64, Vec<f64>, f64)> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = chunk_rng(seed, ci as u64);
            let mut min_du = f64::INFINITY;
            let mut wit = vec![];
            let mut dev = 0.0f64;
            for i in ci * CHUNK..((ci + 1) * CHUNK).min(samples) {
                if i % 4 == 3 {
                    let (u, v) = loop {
                        let u: f64 = rng.random_range(-0.5..0.5);
                        let v: f64 = rng.random_range(-0.5..0.5);
                        if u.abs() > d0 || v.abs() > d0 {
                            break (u, v);
                        }
                    };
                    dev = dev.max((map_du(model, u, v) - params.lambda).abs());
                    continue;
                }
                let (u, v) = if i % 2 == 0 {
                    loop {
                        let u: f64 = rng.random_range(-d0..=d0);
                        let v: f64 = rng.random_range(-d0..=d0);
                        if u.abs() > params.a || v.abs() > 0.5 * d0 {
                            break (u, v);
                        }
                    }
                } else {
                    let mag = rng.random_range(params.a..=cut_u.max(params.a));
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    // Exclude the boundary |u| = a itself.
                    let mag = if mag == params.a { 0.5 * (params.a + cut_u) } else { mag };
                    (sign * mag, rng.random_range(-0.5 * d0..=0.5 * d0))
                };
                let d = map_du(model, u, v);
                if d < min_du {
                    min_du = d;
                    wit = vec![u, v];
                }
            }
            (min_du, wit, dev)
        })
        .collect();
    let mut min_du = f64::INFINITY;
    let mut du_witness = vec![];
    let mut dev = 0.0f64;
    for (m, w, d) in parts {
        if m < min_du {
            min_du = m;
            du_witness = w;
        }
        dev = dev.max(d);
    }

    // (ii) g(V̄) ⊂ V.
    let geom = TrapGeometry::of(model);
    let trap = trapping_check(model, &geom, &TrapRegion::da_box(params, vec![]), samples, seed ^ 0x7a7a, 0.0);

    // (iii) Orbits from V reach the sink.
    let origin = TorusPoint::zero(2);
    let steps: Vec<Option<usize>> = (0..orbits)
        .into_par_iter()
        .map(|i| {
            let mut rng = chunk_rng(seed ^ 0x0b17, i as u64);
            let u = rng.random_range(-params.a..params.a);
            let v = rng.random_range(-params.s_half..params.s_half);
            let mut p = model.chart.from_chart(&DVector::from_vec(vec![u, v]));
            for n in 0..=CONVERGE_BUDGET {
                if distance(&p, &origin) < CONVERGE_RADIUS {
                    return Some(n);
                }
                p = model.eval(&p);
            }
            None
        })
        .collect();
    let converged = steps.iter().flatten().count();
    let max_steps = steps.iter().flatten().copied().max().unwrap_or(0);

    let j = model.chart_jacobian(&origin);
    let want = [[0.5, 0.0], [0.0, 1.0 / params.lambda]];
    let mut sink_err = 0.0f64;
    for (r, row) in want.iter().enumerate() {
        for (c, w) in row.iter().enumerate() {
            sink_err = sink_err.max((j[(r, c)] - w).abs());
        }
    }

    let root_residual = params.root_residual(&model.bump);
    let passed = min_du > 1.0
        && dev <= 1e-9 * params.lambda
        && trap.passed
        && converged == orbits
        && sink_err <= 1e-12
        && root_residual.abs() <= 1e-10
        && params.u0_in_window();
    Ok(DaReport {
        params: *params,
        root_residual,
        u0_in_window: params.u0_in_window(),
        min_du_complement: min_du,
        du_witness,
        max_du_dev_outside: dev,
        trap,
        converged,
        orbits,
        max_steps_to_converge: max_steps,
        sink_jacobian_error: sink_err,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::SystemSpec;

    fn strict_da() -> Model {
        Model::build(&SystemSpec::strict(Family::DaGk, 2)).unwrap()
    }

    #[test]
    fn saddle_root_and_box() {
        let m = strict_da();
        let p = DaParams::for_model(&m).unwrap();
        assert!(p.u0_in_window(), "{p:?}");
        assert!(p.root_residual(&m.bump).abs() < 1e-10);
        assert!(0.0 < p.u_star && p.u_star < p.a && p.a < p.u0);
        // The saddle really is fixed by the map on the unstable axis.
        let q = m.eval(&m.chart.from_chart(&DVector::from_vec(vec![p.u0, 0.0])));
        let c = m.chart.coords_unchecked(&q);
        assert!((c[0] - p.u0).abs() < 1e-9 * p.u0, "{} vs {}", c[0], p.u0);
    }

    #[test]
    fn expansion_formula_matches_the_map() {
        let m = strict_da();
        let p = DaParams::for_model(&m).unwrap();
        for frac in [0.3, 0.9, 1.1, 1.4, 2.5] {
            let u = frac * p.u0;
            let want = du(&m.bump, m.lambda, p.k, u, 1e-6);
            let got = map_du(&m, u, 1e-6);
            assert!((want - got).abs() < 1e-9 * m.lambda, "{u}: {want} vs {got}");
        }
        // Beyond the cutoff the rate is exactly λ.
        assert_eq!(du(&m.bump, m.lambda, p.k, 0.5 * p.delta0 / p.k, 0.0), m.lambda);
    }

    #[test]
    fn all_checks_pass_just_below_the_saddle() {
        let m = strict_da();
        let p = DaParams::for_model(&m).unwrap();
        let r = da_complement_check(&m, &p, 20_000, 200, 11).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.max_steps_to_converge <= CONVERGE_BUDGET);
    }

    #[test]
    fn box_beyond_the_saddle_does_not_trap() {
        let m = strict_da();
        let p = DaParams::for_model(&m).unwrap();
        let wide = p.with_a(1.05 * p.u0);
        let geom = TrapGeometry::of(&m);
        let r = trapping_check(&m, &geom, &TrapRegion::da_box(&wide, vec![]), 4000, 3, 0.0);
        assert!(!r.passed, "{r:?}");
    }

    #[test]
    fn other_families_are_rejected() {
        let m = Model::build(&SystemSpec::relaxed(Family::Gk, 2)).unwrap();
        let p = DaParams::for_model(&m).unwrap();
        assert!(matches!(
            da_complement_check(&m, &p, 10, 1, 0),
            Err(AnalysisError::NotApplicable { .. })
        ));
    }
}
