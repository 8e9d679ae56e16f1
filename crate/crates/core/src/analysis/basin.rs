//! Basin classification by ω-limit proximity and clustering of empirical
//! measures through their Birkhoff vectors.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lyapunov::{is_resolved, QrAccumulator};
use super::sampling::{chunk_rng, uniform};
use super::stats::{accumulate_observables, ci_half_width};
use super::AnalysisError;
use crate::maps::{Family, Mode, Model};
use crate::torus::{circle_distance, wrap_delta, TorusPoint};

/// Which attractor an orbit settled on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OmegaLabel {
    /// `𝕋² × {0} × {0}` of `G_k`.
    Lambda1,
    /// `𝕋² × 𝕋² × {½}` of `G_k`.
    Lambda3,
    /// The attractor of `F_k` inside the sink slab.
    #[serde(rename = "A_f")]
    Af,
    /// The repeller of `F_k` inside the source slab.
    #[serde(rename = "R_f")]
    Rf,
    /// Glued map, block around the first circle sink: all surgeries active.
    #[serde(rename = "a1")]
    M1,
    /// Glued map, DA-only block.
    #[serde(rename = "a2")]
    M2,
    /// Glued map, undeformed block.
    #[serde(rename = "a3")]
    M3,
    Unresolved,
}

impl OmegaLabel {
    pub fn tag(self) -> &'static str {
        match self {
            OmegaLabel::Lambda1 => "Lambda1",
            OmegaLabel::Lambda3 => "Lambda3",
            OmegaLabel::Af => "A_f",
            OmegaLabel::Rf => "R_f",
            OmegaLabel::M1 => "a1",
            OmegaLabel::M2 => "a2",
            OmegaLabel::M3 => "a3",
            OmegaLabel::Unresolved => "Unresolved",
        }
    }
}

/// Toral displacement of the factor at `off` from the origin.
fn toral_norm2(p: &TorusPoint, off: usize) -> f64 {
    let a = wrap_delta(p.coord(off), 0.0);
    let b = wrap_delta(p.coord(off + 1), 0.0);
    a * a + b * b
}

/// Nearest candidate attractor and the distance to it.
pub fn nearest_target(model: &Model, p: &TorusPoint) -> Option<(OmegaLabel, f64)> {
    let t = model.layout.theta?;
    let z = p.coord(t);
    match model.family() {
        Family::Fk => {
            let (d0, dh) = (circle_distance(z, 0.0), circle_distance(z, 0.5));
            Some(if d0 <= dh { (OmegaLabel::Af, d0) } else { (OmegaLabel::Rf, dh) })
        }
        Family::Gk => {
            let b = model.layout.b?;
            let d1 = (toral_norm2(p, b) + circle_distance(z, 0.0).powi(2)).sqrt();
            let d3 = circle_distance(z, 0.5);
            Some(if d1 <= d3 { (OmegaLabel::Lambda1, d1) } else { (OmegaLabel::Lambda3, d3) })
        }
        Family::M3Glued => {
            let (b, c) = (model.layout.b?, model.layout.c?);
            let offs = &model.spec.rotation_offsets;
            let zc = |j: usize| circle_distance(z, offs[j]);
            let cands = [
                (OmegaLabel::M1, (toral_norm2(p, b) + toral_norm2(p, c) + zc(0).powi(2)).sqrt()),
                (OmegaLabel::M2, (toral_norm2(p, b) + zc(1).powi(2)).sqrt()),
                (OmegaLabel::M3, zc(2)),
            ];
            // The circle picks the block; the toral distances only decide
            // whether the orbit has been captured yet.
            let j = (0..3).min_by(|&x, &y| zc(x).total_cmp(&zc(y))).unwrap_or(0);
            Some(cands[j])
        }
        _ => None,
    }
}

/// ω-limit labeling radius.
pub fn label_radius(model: &Model) -> f64 {
    match model.spec.mode {
        Mode::Strict => 10.0 * model.spec.delta0,
        Mode::Relaxed => model.spec.delta0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinConfig {
    pub ensemble: usize,
    /// Length of the measurement window.
    pub steps: usize,
    /// Minimum transient.
    pub transient: usize,
    /// Transient cap; orbits still unlabeled by then are `Unresolved`.
    pub max_transient: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinReport {
    pub seed_index: usize,
    pub start: Vec<f64>,
    pub omega_label: OmegaLabel,
    pub distance_to_target: f64,
    /// Transient actually used.
    pub transient: usize,
    /// `(⟨cos 2πxᵢ⟩, ⟨sin 2πxᵢ⟩)` per coordinate over the window.
    pub birkhoff_vector: Vec<f64>,
    pub exponents: Vec<f64>,
    pub exponents_resolved: bool,
    pub unstable_index: usize,
}

/// Runs one start. Labels are checked every `CHECK` steps of the transient,
/// and the transient ends once two consecutive checks are within the radius:
/// an orbit merely passing near a saddle region leaves it well within one
/// check interval.
fn classify_one(model: &Model, cfg: &BasinConfig, radius: f64, i: usize) -> BasinReport {
    const CHECK: usize = 64;
    let mut rng = chunk_rng(cfg.seed, i as u64);
    let start = uniform(model.dim(), &mut rng);
    // Burn one draw so streams stay aligned if more randomness is added.
    let _: u64 = rng.random();
    let mut p = start;
    let mut used = 0;
    let mut hits = 0;
    while used < cfg.max_transient {
        for _ in 0..CHECK {
            p = model.eval(&p);
        }
        used += CHECK;
        if used >= cfg.transient {
            match nearest_target(model, &p) {
                Some((_, d)) if d < radius => hits += 1,
                _ => hits = 0,
            }
            if hits >= 2 {
                break;
            }
        }
    }
    let n = model.dim();
    let mut acc = QrAccumulator::new(model.chart.frame().clone());
    let mut obs = vec![0.0; 2 * n];
    let half = cfg.steps / 2;
    for s in 0..cfg.steps {
        if s == half {
            acc.mark_half();
        }
        accumulate_observables(&p, &mut obs);
        let (q, j) = model.eval_with_jacobian(&p);
        acc.push(&j);
        p = q;
    }
    for o in obs.iter_mut() {
        *o /= cfg.steps as f64;
    }
    let (ex, drift, _) = acc.finish(half);
    let mut pairs: Vec<(f64, f64)> = ex.into_iter().zip(drift).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (exponents, drift): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (label, dist) = nearest_target(model, &p).unwrap_or((OmegaLabel::Unresolved, f64::INFINITY));
    let omega_label = if dist < radius { label } else { OmegaLabel::Unresolved };
    BasinReport {
        seed_index: i,
        start: start.as_slice().to_vec(),
        omega_label,
        distance_to_target: dist,
        transient: used,
        birkhoff_vector: obs,
        exponents_resolved: is_resolved(&exponents, &drift),
        unstable_index: exponents.iter().filter(|&&x| x > 0.0).count(),
        exponents,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelFraction {
    pub label: OmegaLabel,
    pub count: usize,
    pub fraction: f64,
    pub ci_half_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinSummary {
    pub family: Family,
    pub ensemble: usize,
    pub fractions: Vec<LabelFraction>,
    pub unresolved: usize,
    /// Set when more than 1 % of the orbits stayed unlabeled.
    pub unresolved_flag: bool,
}

pub fn summarize(family: Family, reports: &[BasinReport]) -> BasinSummary {
    let n = reports.len();
    let mut labels: Vec<OmegaLabel> = reports.iter().map(|r| r.omega_label).collect();
    labels.sort();
    labels.dedup();
    let fractions = labels
        .iter()
        .filter(|&&l| l != OmegaLabel::Unresolved)
        .map(|&label| {
            let count = reports.iter().filter(|r| r.omega_label == label).count();
            let fraction = count as f64 / n as f64;
            LabelFraction { label, count, fraction, ci_half_width: ci_half_width(fraction, n) }
        })
        .collect();
    let unresolved = reports.iter().filter(|r| r.omega_label == OmegaLabel::Unresolved).count();
    BasinSummary { family, ensemble: n, fractions, unresolved, unresolved_flag: unresolved * 100 > n }
}

/// Classifies `cfg.ensemble` Lebesgue-uniform starts. Start `i` uses its own
/// random stream, so the output is independent of the thread count.
pub fn basin_classify(model: &Model, cfg: &BasinConfig) -> Result<(Vec<BasinReport>, BasinSummary), AnalysisError> {
    let family = model.family();
    if !matches!(family, Family::Fk | Family::Gk | Family::M3Glued) {
        return Err(AnalysisError::NotApplicable { op: "basin_classify", family });
    }
    if cfg.steps < 2 {
        return Err(AnalysisError::Precondition("measurement window needs at least 2 steps".into()));
    }
    let radius = label_radius(model);
    let reports: Vec<BasinReport> =
        (0..cfg.ensemble).into_par_iter().map(|i| classify_one(model, cfg, radius, i)).collect();
    let summary = summarize(family, &reports);
    Ok((reports, summary))
}

/// Single-linkage cutoff in the max metric on Birkhoff vectors.
pub const CLUSTER_CUTOFF: f64 = 0.1;
/// Clusters smaller than this make the clustering degenerate.
pub const MIN_CLUSTER: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub size: usize,
    pub centroid: Vec<f64>,
    pub modal_index: usize,
    /// Most common ω-label among the members.
    pub modal_label: OmegaLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub count: usize,
    pub clusters: Vec<Cluster>,
    pub degenerate: bool,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn mode_of<T: Copy + Ord>(xs: impl Iterator<Item = T>) -> Option<T> {
    let mut v: Vec<T> = xs.collect();
    v.sort();
    let mut best: Option<(T, usize)> = None;
    let mut i = 0;
    while i < v.len() {
        let j = v[i..].iter().take_while(|&&x| x == v[i]).count();
        if best.is_none_or(|(_, c)| j > c) {
            best = Some((v[i], j));
        }
        i += j;
    }
    best.map(|b| b.0)
}

/// Clusters the labeled reports. Clusters are ordered by their first member.
pub fn empirical_measure_clusters(reports: &[BasinReport], cutoff: f64) -> Result<ClusterReport, AnalysisError> {
    let rs: Vec<&BasinReport> = reports.iter().filter(|r| r.omega_label != OmegaLabel::Unresolved).collect();
    if rs.len() < 100 {
        return Err(AnalysisError::Precondition(format!("{} resolved reports, need at least 100", rs.len())));
    }
    let n = rs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            let d = rs[i]
                .birkhoff_vector
                .iter()
                .zip(&rs[j].birkhoff_vector)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if d <= cutoff {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut roots: Vec<usize> = Vec::new();
    let mut member: Vec<usize> = vec![0; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        let k = match roots.iter().position(|&x| x == r) {
            Some(k) => k,
            None => {
                roots.push(r);
                roots.len() - 1
            }
        };
        member[i] = k;
    }
    let dim = rs[0].birkhoff_vector.len();
    let clusters: Vec<Cluster> = (0..roots.len())
        .map(|k| {
            let ms: Vec<&BasinReport> = (0..n).filter(|&i| member[i] == k).map(|i| rs[i]).collect();
            let mut centroid = vec![0.0; dim];
            for m in &ms {
                for (c, x) in centroid.iter_mut().zip(&m.birkhoff_vector) {
                    *c += x;
                }
            }
            for c in centroid.iter_mut() {
                *c /= ms.len() as f64;
            }
            Cluster {
                size: ms.len(),
                centroid,
                modal_index: mode_of(ms.iter().map(|m| m.unstable_index)).unwrap_or(0),
                modal_label: mode_of(ms.iter().map(|m| m.omega_label)).unwrap_or(OmegaLabel::Unresolved),
            }
        })
        .collect();
    Ok(ClusterReport {
        count: clusters.len(),
        degenerate: clusters.iter().any(|c| c.size < MIN_CLUSTER),
        clusters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::SystemSpec;

    fn cfg(ensemble: usize, seed: u64) -> BasinConfig {
        BasinConfig { ensemble, steps: 1000, transient: 1000, max_transient: 200_000, seed }
    }

    fn fake(label: OmegaLabel, v: f64, idx: usize) -> BasinReport {
        BasinReport {
            seed_index: 0,
            start: vec![],
            omega_label: label,
            distance_to_target: 0.0,
            transient: 0,
            birkhoff_vector: vec![v, 0.0],
            exponents: vec![],
            exponents_resolved: true,
            unstable_index: idx,
        }
    }

    #[test]
    fn single_linkage_chains_close_points() {
        let mut rs: Vec<BasinReport> = (0..60).map(|i| fake(OmegaLabel::Lambda1, i as f64 * 0.01, 1)).collect();
        rs.extend((0..60).map(|i| fake(OmegaLabel::Lambda3, 5.0 + i as f64 * 0.05, 2)));
        let c = empirical_measure_clusters(&rs, CLUSTER_CUTOFF).unwrap();
        assert_eq!(c.count, 2);
        assert_eq!(c.clusters[0].modal_index, 1);
        assert_eq!(c.clusters[1].modal_label, OmegaLabel::Lambda3);
        assert!(!c.degenerate);
        rs.push(fake(OmegaLabel::Lambda3, 50.0, 2));
        assert!(empirical_measure_clusters(&rs, CLUSTER_CUTOFF).unwrap().degenerate);
        assert!(empirical_measure_clusters(&rs[..50], CLUSTER_CUTOFF).is_err());
    }

    #[test]
    fn g_k_splits_into_two_basins() {
        let m = Model::build(&SystemSpec::relaxed(Family::Gk, 2)).unwrap();
        let (rs, s) = basin_classify(&m, &cfg(120, 7)).unwrap();
        assert!(!s.unresolved_flag, "{s:?}");
        let labels: Vec<OmegaLabel> = s.fractions.iter().map(|f| f.label).collect();
        assert_eq!(labels, vec![OmegaLabel::Lambda1, OmegaLabel::Lambda3]);
        for r in &rs {
            match r.omega_label {
                OmegaLabel::Lambda1 => assert_eq!(r.unstable_index, 1),
                OmegaLabel::Lambda3 => assert_eq!(r.unstable_index, 2),
                _ => {}
            }
        }
        let c = empirical_measure_clusters(&rs, CLUSTER_CUTOFF).unwrap();
        assert_eq!(c.count, 2);
    }

    #[test]
    fn same_seed_same_reports() {
        let m = Model::build(&SystemSpec::relaxed(Family::Fk, 2)).unwrap();
        let a = basin_classify(&m, &cfg(16, 3)).unwrap();
        let b = basin_classify(&m, &cfg(16, 3)).unwrap();
        assert_eq!(a, b);
        assert!(a.0.iter().all(|r| r.omega_label == OmegaLabel::Af && r.unstable_index == 2));
    }

    #[test]
    fn other_families_are_rejected() {
        let m = Model::build(&SystemSpec::relaxed(Family::LinearB, 2)).unwrap();
        assert!(basin_classify(&m, &cfg(1, 0)).is_err());
    }
}
