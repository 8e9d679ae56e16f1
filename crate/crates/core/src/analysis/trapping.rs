//! Trapping regions: slabs in the circle coordinate, optionally intersected
//! with the DA box on the `A` factor, and the escape times into them.
//!
//! A region traps when the image of every sampled boundary point lies in
//! the interior. The margin of a point is its signed distance to the region
//! boundary in the region's own coordinates (positive inside), and the check
//! reports the smallest margin over the images.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::da::DaParams;
use super::sampling::{chunk_rng, CHUNK};
use super::AnalysisError;
use crate::circle::SineFlowMap;
use crate::maps::linear::anosov_power;
use crate::maps::{Family, Model};
use crate::torus::{canonical, circle_distance, wrap_delta, TorusPoint};

/// Where the circle coordinate and the DA factor live.
#[derive(Clone, Debug, PartialEq)]
pub struct TrapGeometry {
    pub n: usize,
    pub circle: Option<usize>,
    /// Slot of the `A` factor with its unstable and stable unit vectors.
    pub b: Option<(usize, [f64; 2], [f64; 2])>,
}

impl TrapGeometry {
    pub fn of(model: &Model) -> Self {
        let a = anosov_power(model.spec.n_power);
        Self {
            n: model.dim(),
            circle: model.layout.theta,
            b: model.layout.b.map(|off| (off, a.unstable, a.stable)),
        }
    }

    fn b_coords(&self, p: &TorusPoint) -> (f64, f64) {
        let (off, u, s) = self.b.expect("region uses the DA box but the geometry has no A factor");
        let d = [wrap_delta(p.coord(off), 0.0), wrap_delta(p.coord(off + 1), 0.0)];
        (d[0] * u[0] + d[1] * u[1], d[0] * s[0] + d[1] * s[1])
    }
}

/// A closed region `{z ∈ ∪ arcs} ∩ {(u, s) ∈ box}`. An empty arc list leaves
/// the circle unconstrained; a missing box leaves the `A` factor free.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapRegion {
    pub label: String,
    /// Closed arcs `[lo, hi]` with `hi - lo < 1`, read mod 1.
    pub arcs: Vec<(f64, f64)>,
    /// `(a, s_half)` of the box `[-a, a] × [-s_half, s_half]`.
    pub da_box: Option<(f64, f64)>,
}

impl TrapRegion {
    pub fn slab(label: &str, lo: f64, hi: f64) -> Self {
        Self { label: label.into(), arcs: vec![(lo, hi)], da_box: None }
    }

    pub fn whole(label: &str) -> Self {
        Self { label: label.into(), arcs: vec![], da_box: None }
    }

    pub fn da_box(p: &DaParams, arcs: Vec<(f64, f64)>) -> Self {
        Self { label: "V".into(), arcs, da_box: Some((p.a, p.s_half)) }
    }

    fn arc_margin(&self, z: f64) -> Option<f64> {
        if self.arcs.is_empty() {
            return None;
        }
        let m = self
            .arcs
            .iter()
            .map(|&(lo, hi)| 0.5 * (hi - lo) - circle_distance(z, 0.5 * (lo + hi)))
            .fold(f64::NEG_INFINITY, f64::max);
        Some(m)
    }

    /// Signed distance to the boundary, `None` for the whole torus.
    pub fn margin(&self, geom: &TrapGeometry, p: &TorusPoint) -> Option<f64> {
        let mut m: Option<f64> = None;
        if let Some(t) = geom.circle {
            m = self.arc_margin(p.coord(t));
        }
        if let Some((a, sh)) = self.da_box {
            let (u, s) = geom.b_coords(p);
            let bm = (a - u.abs()).min(sh - s.abs());
            m = Some(m.map_or(bm, |x| x.min(bm)));
        }
        m
    }

    /// Number of boundary faces: two per arc and four for the box.
    fn faces(&self) -> usize {
        2 * self.arcs.len() + if self.da_box.is_some() { 4 } else { 0 }
    }

    /// Boundary point on face `face`, all free coordinates drawn from `rng`.
    fn boundary_point<R: Rng>(&self, geom: &TrapGeometry, face: usize, rng: &mut R) -> TorusPoint {
        let mut c: Vec<f64> = (0..geom.n).map(|_| rng.random()).collect();
        if let Some(t) = geom.circle {
            if !self.arcs.is_empty() {
                let (lo, hi) = self.arcs[rng.random_range(0..self.arcs.len())];
                c[t] = canonical(rng.random_range(lo..=hi));
            }
        }
        let mut box_uv = None;
        if let Some((a, sh)) = self.da_box {
            box_uv = Some((rng.random_range(-a..=a), rng.random_range(-sh..=sh)));
        }
        let na = 2 * self.arcs.len();
        if face < na {
            let (lo, hi) = self.arcs[face / 2];
            c[geom.circle.expect("arc region needs a circle slot")] = canonical(if face.is_multiple_of(2) { lo } else { hi });
        } else if let (Some((a, sh)), Some((u, s))) = (self.da_box, box_uv.as_mut()) {
            match face - na {
                0 => *u = a,
                1 => *u = -a,
                2 => *s = sh,
                _ => *s = -sh,
            }
        }
        if let Some((u, s)) = box_uv {
            let (off, uv, sv) = geom.b.expect("box region needs an A factor");
            c[off] = canonical(u * uv[0] + s * sv[0]);
            c[off + 1] = canonical(u * uv[1] + s * sv[1]);
        }
        TorusPoint::new(&c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapReport {
    pub region: TrapRegion,
    pub samples: usize,
    /// Smallest margin of an image; `None` when the region has no boundary.
    pub min_margin: Option<f64>,
    pub required_margin: f64,
    pub witness: Vec<f64>,
    pub passed: bool,
}

/// Boundary check for an arbitrary map.
pub fn trapping_check_map<F>(
    f: F,
    geom: &TrapGeometry,
    region: &TrapRegion,
    samples: usize,
    seed: u64,
    required: f64,
) -> TrapReport
where
    F: Fn(&TorusPoint) -> TorusPoint + Sync,
{
    let faces = region.faces();
    if faces == 0 {
        return TrapReport {
            region: region.clone(),
            samples: 0,
            min_margin: None,
            required_margin: required,
            witness: vec![],
            passed: true,
        };
    }
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<(f64, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = chunk_rng(seed, ci as u64);
            let mut worst = (f64::INFINITY, vec![]);
            for i in ci * CHUNK..((ci + 1) * CHUNK).min(samples) {
                let p = region.boundary_point(geom, i % faces, &mut rng);
                let m = region.margin(geom, &f(&p)).expect("bounded region");
                let m = if m.is_nan() { f64::NEG_INFINITY } else { m };
                if m < worst.0 {
                    worst = (m, p.as_slice().to_vec());
                }
            }
            worst
        })
        .collect();
    let (min_margin, witness) = parts
        .into_iter()
        .fold((f64::INFINITY, vec![]), |a, b| if b.0 < a.0 { b } else { a });
    TrapReport {
        region: region.clone(),
        samples,
        min_margin: Some(min_margin),
        required_margin: required,
        witness,
        passed: min_margin > required,
    }
}

pub fn trapping_check(
    model: &Model,
    geom: &TrapGeometry,
    region: &TrapRegion,
    samples: usize,
    seed: u64,
    required: f64,
) -> TrapReport {
    trapping_check_map(|p| model.eval(p), geom, region, samples, seed, required)
}

/// Contraction factor `θ` used for the slab margin.
pub const SLAB_THETA: f64 = 0.5;

/// `F_k` maps `𝕋⁴ × [-η, η]` into the slab of half-width `(1 + θ)/2 · η`.
pub fn fk_slab_check(model: &Model, eta: f64, samples: usize, seed: u64) -> Result<TrapReport, AnalysisError> {
    if model.family() != Family::Fk {
        return Err(AnalysisError::NotApplicable { op: "fk_slab_check", family: model.family() });
    }
    let region = TrapRegion::slab("slab", -eta, eta);
    let geom = TrapGeometry::of(model);
    Ok(trapping_check(model, &geom, &region, samples, seed, 0.5 * (1.0 - SLAB_THETA) * eta))
}

/// The filtration `N¹ ⊂ … ⊂ N⁵` of `G_k`, in order.
pub fn gk_filtration_regions(params: &DaParams) -> Vec<TrapRegion> {
    let q = 0.25 * params.delta0;
    let mut n1 = TrapRegion::da_box(params, vec![(-q, q)]);
    n1.label = "N1".into();
    vec![
        n1,
        TrapRegion::slab("N2", -q, q),
        TrapRegion { label: "N3".into(), arcs: vec![(-q, q), (0.5 - q, 0.5 + q)], da_box: None },
        TrapRegion::slab("N4", -q, 0.5 + q),
        TrapRegion::whole("N5"),
    ]
}

pub fn gk_filtration(
    model: &Model,
    params: &DaParams,
    samples: usize,
    seed: u64,
) -> Result<Vec<TrapReport>, AnalysisError> {
    if model.family() != Family::Gk {
        return Err(AnalysisError::NotApplicable { op: "gk_filtration", family: model.family() });
    }
    let geom = TrapGeometry::of(model);
    Ok(gk_filtration_regions(params)
        .iter()
        .enumerate()
        .map(|(i, r)| trapping_check(model, &geom, r, samples, seed.wrapping_add(i as u64), 0.0))
        .collect())
}

/// Smallest circle displacement `|z - K^{±1}(z)|` over a uniform grid of the
/// middle region `[η, ½ - η] ∪ [½ + η, 1 - η]`.
pub fn zeta(map: &SineFlowMap, eta: f64, grid: usize) -> f64 {
    let mut z_min = f64::INFINITY;
    for half in [0.0, 0.5] {
        for i in 0..=grid {
            let z = half + eta + (0.5 - 2.0 * eta) * i as f64 / grid as f64;
            let d = circle_distance(z, map.eval(z)).min(circle_distance(z, map.inverse(z)));
            z_min = z_min.min(d);
        }
    }
    z_min
}

/// `⌈2/ζ⌉ + 1`.
pub fn escape_bound(zeta: f64) -> usize {
    (2.0 / zeta).ceil() as usize + 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeReport {
    /// Steps until the circle coordinate entered the target slab, or `None`
    /// if the bound ran out.
    pub steps: Option<usize>,
    pub bound: usize,
    pub reverse: bool,
}

/// Forward iterates until the circle coordinate enters `(-η, η)`; with
/// `reverse`, backward iterates until it enters `(½ - η, ½ + η)`.
pub fn escape_time(
    model: &Model,
    start: &TorusPoint,
    eta: f64,
    reverse: bool,
    zeta: f64,
) -> Result<EscapeReport, AnalysisError> {
    let t = match (model.family(), model.layout.theta) {
        (Family::Fk, Some(t)) => t,
        (f, _) => return Err(AnalysisError::NotApplicable { op: "escape_time", family: f }),
    };
    let (target, other) = if reverse { (0.5, 0.0) } else { (0.0, 0.5) };
    if circle_distance(start.coord(t), other) < eta {
        return Err(AnalysisError::Precondition(format!(
            "start circle coordinate {} lies in the opposite slab",
            start.coord(t)
        )));
    }
    let bound = escape_bound(zeta);
    let mut p = *start;
    for n in 0..=bound {
        if circle_distance(p.coord(t), target) < eta {
            return Ok(EscapeReport { steps: Some(n), bound, reverse });
        }
        p = if reverse {
            model.inverse(&p).map_err(|e| AnalysisError::Precondition(e.to_string()))?
        } else {
            model.eval(&p)
        };
    }
    Ok(EscapeReport { steps: None, bound, reverse })
}

/// Whether the circle coordinate stays in `(-η, η)` for `steps` iterates.
pub fn stays_in_slab(model: &Model, start: &TorusPoint, eta: f64, steps: usize) -> bool {
    let Some(t) = model.layout.theta else { return false };
    let mut p = *start;
    for _ in 0..=steps {
        if circle_distance(p.coord(t), 0.0) >= eta {
            return false;
        }
        p = model.eval(&p);
    }
    true
}
