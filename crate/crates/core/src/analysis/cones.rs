//! Cone-field invariance and the diagonal domination chain, both read off
//! the Jacobian in the eigenframe of the linear part.
//!
//! A cone family splits the chart coordinates at an index `i` into a core
//! `E = span{e_0..e_{i-1}}` and a complement `F = span{e_i..}` (or the
//! reverse for backward cones). The cone of half-ratio `ε` holds the vectors
//! `a + b`, `a ∈ E`, `b ∈ F`, `|b| ≤ ε|a|`. It is mapped into the cone of
//! half-ratio `κε` when every image satisfies `|b'| ≤ κε|a'|`; we report the
//! smallest such `κ` seen over the sampled points and generators.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::{chunk_rng, sample, Stratum, CHUNK};
use super::AnalysisError;
use crate::maps::{Family, Model};

/// Largest admissible contraction factor.
pub const KAPPA_MAX: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeFamily {
    pub split: usize,
    /// Forward cones sit around the leading coordinates and are pushed by
    /// `DF`; backward cones sit around the trailing ones and are pushed by
    /// `DF⁻¹`.
    pub forward: bool,
}

impl ConeFamily {
    pub fn label(&self) -> String {
        let dir = if self.forward { "forward" } else { "backward" };
        format!("{dir}@{}", self.split)
    }
}

/// The cone families checked for each family, in chart order.
pub fn cone_families(family: Family) -> Option<Vec<ConeFamily>> {
    let f = |split| ConeFamily { split, forward: true };
    let b = |split| ConeFamily { split, forward: false };
    match family {
        // Unstable, center and stable cones around the strong, weak and
        // circle directions.
        Family::Fk | Family::Gk | Family::Ak => Some(vec![f(1), b(2), b(3)]),
        Family::LinearB | Family::Hk => Some(vec![f(1), b(2)]),
        Family::DaGk => Some(vec![f(1)]),
        Family::M3Glued => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeWitness {
    pub cone: ConeFamily,
    pub point: Vec<f64>,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub family: Family,
    pub eps: f64,
    pub samples: usize,
    pub cones: Vec<ConeFamily>,
    /// Worst `κ` per cone family.
    pub kappa: Vec<f64>,
    pub worst: ConeWitness,
    pub passed: bool,
}

/// Largest ratio `|b'| / |a'|` of `T v` over a fixed generator set of the
/// cone of half-ratio `eps` split at `split`, with core `core_first` (true:
/// leading coordinates).
fn worst_ratio<R: Rng>(t: &DMatrix<f64>, split: usize, core_first: bool, eps: f64, rng: &mut R) -> f64 {
    let n = t.nrows();
    let (core, comp): (Vec<usize>, Vec<usize>) = if core_first {
        ((0..split).collect(), (split..n).collect())
    } else {
        ((split..n).collect(), (0..split).collect())
    };
    let ratio = |v: &DVector<f64>| {
        let w = t * v;
        let a: f64 = core.iter().map(|&i| w[i] * w[i]).sum::<f64>().sqrt();
        let b: f64 = comp.iter().map(|&i| w[i] * w[i]).sum::<f64>().sqrt();
        b / a
    };
    let mut worst = 0.0f64;
    let mut v = DVector::zeros(n);
    // Coordinate generators at radii 0, ε/2, ε with both signs.
    for &a in &core {
        for &b in &comp {
            for r in [0.0, 0.5 * eps, eps, -0.5 * eps, -eps] {
                v.fill(0.0);
                v[a] = 1.0;
                v[b] = r;
                worst = worst.max(ratio(&v));
            }
        }
    }
    // Random directions on the boundary of the cone.
    for _ in 0..4 {
        v.fill(0.0);
        let mut na = 0.0;
        for &a in &core {
            v[a] = rng.random_range(-1.0..1.0);
            na += v[a] * v[a];
        }
        let na = na.sqrt();
        let mut nb = 0.0f64;
        let mut bvec = vec![0.0; comp.len()];
        for x in bvec.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
            nb += *x * *x;
        }
        let nb = nb.sqrt();
        for (j, &b) in comp.iter().enumerate() {
            v[b] = eps * na * bvec[j] / nb;
        }
        worst = worst.max(ratio(&v));
    }
    worst
}

/// Cone check on `samples` stratified points (uniform, chart box, surgery
/// supports in turn).
pub fn cone_invariance(model: &Model, eps: f64, samples: usize, seed: u64) -> Result<ConeReport, AnalysisError> {
    let family = model.family();
    let cones = cone_families(family).ok_or(AnalysisError::NotApplicable { op: "cone_invariance", family })?;
    let chunks = samples.div_ceil(CHUNK);
    let per_chunk: Vec<(Vec<f64>, Vec<ConeWitness>)> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = chunk_rng(seed, ci as u64);
            let mut kappa = vec![0.0f64; cones.len()];
            let mut wit: Vec<ConeWitness> = cones
                .iter()
                .map(|&c| ConeWitness { cone: c, point: vec![], kappa: 0.0 })
                .collect();
            let lo = ci * CHUNK;
            let hi = (lo + CHUNK).min(samples);
            for i in lo..hi {
                let p = sample(model, Stratum::of_index(i), i / 3, &mut rng);
                let m = model.chart_jacobian(&p);
                let inv = m.clone().try_inverse();
                for (j, c) in cones.iter().enumerate() {
                    let k = if c.forward {
                        worst_ratio(&m, c.split, true, eps, &mut rng) / eps
                    } else {
                        match &inv {
                            Some(mi) => worst_ratio(mi, c.split, false, eps, &mut rng) / eps,
                            None => f64::INFINITY,
                        }
                    };
                    let k = if k.is_nan() { f64::INFINITY } else { k };
                    if k > kappa[j] {
                        kappa[j] = k;
                        wit[j] = ConeWitness { cone: *c, point: p.as_slice().to_vec(), kappa: k };
                    }
                }
            }
            (kappa, wit)
        })
        .collect();
    let mut kappa = vec![0.0f64; cones.len()];
    let mut wit: Vec<ConeWitness> =
        cones.iter().map(|&c| ConeWitness { cone: c, point: vec![], kappa: 0.0 }).collect();
    for (k, w) in per_chunk {
        for j in 0..cones.len() {
            if k[j] > kappa[j] {
                kappa[j] = k[j];
                wit[j] = w[j].clone();
            }
        }
    }
    let (jw, _) = kappa
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (j, &k)| if k > acc.1 { (j, k) } else { acc });
    Ok(ConeReport {
        family,
        eps,
        samples,
        passed: kappa.iter().all(|&k| k <= KAPPA_MAX),
        worst: wit[jw].clone(),
        kappa,
        cones,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub family: Family,
    pub samples: usize,
    /// Largest ratio `|d_{i+1}| / |d_i|` of consecutive diagonal entries of
    /// the chart Jacobian; the chain is strict when this stays below 1.
    pub worst_ratio: f64,
    /// Position `i` where the worst ratio occurred.
    pub worst_index: usize,
    pub witness: Vec<f64>,
    pub passed: bool,
}

/// Samples the diagonal of the chart-frame Jacobian and checks that its
/// moduli decrease strictly along the chart order.
pub fn dominated_chain(model: &Model, samples: usize, seed: u64) -> ChainReport {
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<(f64, usize, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = chunk_rng(seed, ci as u64);
            let mut best = (0.0f64, 0usize, vec![]);
            for i in ci * CHUNK..((ci + 1) * CHUNK).min(samples) {
                let p = sample(model, Stratum::of_index(i), i / 3, &mut rng);
                let m = model.chart_jacobian(&p);
                for d in 0..m.nrows() - 1 {
                    let r = m[(d + 1, d + 1)].abs() / m[(d, d)].abs();
                    if r > best.0 || r.is_nan() {
                        best = (if r.is_nan() { f64::INFINITY } else { r }, d, p.as_slice().to_vec());
                    }
                }
            }
            best
        })
        .collect();
    let (worst_ratio, worst_index, witness) = parts
        .into_iter()
        .fold((0.0, 0, vec![]), |a, b| if b.0 > a.0 { b } else { a });
    ChainReport {
        family: model.family(),
        samples,
        worst_ratio,
        worst_index,
        witness,
        passed: worst_ratio < 1.0,
    }
}
