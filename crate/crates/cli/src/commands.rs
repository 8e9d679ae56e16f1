//! One function per subcommand. Each resolves the configuration through the
//! gate, runs its analysis, writes its files and reports pass or fail.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use phdyn_core::analysis::basin::{basin_classify, empirical_measure_clusters, BasinConfig, CLUSTER_CUTOFF};
use phdyn_core::analysis::cones::{cone_families, cone_invariance, dominated_chain};
use phdyn_core::analysis::da::{da_complement_check, DaParams};
use phdyn_core::analysis::lyapunov::{default_transient, lyapunov_ensemble, summarize_spectra};
use phdyn_core::analysis::trapping::{fk_slab_check, gk_filtration};
use phdyn_core::gate::{certify, default_k, GateReport, SearchOptions};
use phdyn_core::maps::{Family, Model, SystemSpec};
use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::output::{fmt_f64, header, write_csv, write_json};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail(String),
}

impl Outcome {
    fn from_bool(ok: bool, why: impl FnOnce() -> String) -> Self {
        if ok {
            Outcome::Pass
        } else {
            Outcome::Fail(why())
        }
    }
}

/// A parameter set the gate has accepted, with its map.
pub struct Resolved {
    pub spec: SystemSpec,
    pub model: Model,
}

fn search_options(cfg: &ExperimentConfig) -> SearchOptions {
    let mut o = SearchOptions::default();
    if let Some(s) = cfg.samples {
        o.cone_samples = s;
    }
    o
}

fn run_gate(cfg: &ExperimentConfig) -> Result<(GateReport, Option<SystemSpec>)> {
    certify(&cfg.draft(), &search_options(cfg)).map_err(|e| anyhow!("gate: {e}"))
}

/// Runs the gate and builds the map, or explains why no map exists.
pub fn resolve(cfg: &ExperimentConfig) -> Result<std::result::Result<Resolved, Outcome>> {
    let (gate, spec) = run_gate(cfg)?;
    let Some(spec) = spec else {
        let why = gate
            .first_failure()
            .map_or_else(|| "gate failed".to_string(), |c| format!("gate failed at {}: {}", c.name, c.note));
        return Ok(Err(Outcome::Fail(why)));
    };
    let model = Model::build(&spec).map_err(|e| anyhow!("model: {e}"))?;
    Ok(Ok(Resolved { spec, model }))
}

fn out_path(cfg: &ExperimentConfig, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    Ok(cfg.output.join(name))
}

#[derive(Serialize)]
struct Verdict<'a, T: Serialize> {
    passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<&'a str>,
    #[serde(flatten)]
    body: T,
}

fn finish<T: Serialize>(path: &Path, head: &Value, outcome: Outcome, body: T) -> Result<Outcome> {
    let failure = match &outcome {
        Outcome::Fail(w) => Some(w.as_str()),
        Outcome::Pass => None,
    };
    write_json(path, head, &Verdict { passed: outcome == Outcome::Pass, failure, body })?;
    Ok(outcome)
}

pub fn gate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (report, spec) = run_gate(cfg)?;
    let k = report.witnesses.k.unwrap_or_else(|| default_k(cfg.family));
    let spec = spec.unwrap_or_else(|| cfg.draft().to_spec(k));
    let outcome = Outcome::from_bool(report.passed, || {
        report
            .first_failure()
            .map_or_else(|| "gate failed".into(), |c| format!("condition {} failed: {}", c.name, c.note))
    });
    finish(&out_path(cfg, "gate.json")?, &header("gate", &spec, cfg.seed), outcome, &report)
}

macro_rules! resolved_or_return {
    ($cfg:expr) => {
        match resolve($cfg)? {
            Ok(r) => r,
            Err(outcome) => return Ok(outcome),
        }
    };
}

pub fn lyapunov(cfg: &ExperimentConfig) -> Result<Outcome> {
    let r = resolved_or_return!(cfg);
    let n = r.model.dim();
    let transient = cfg.transient.unwrap_or_else(|| default_transient(cfg.steps));
    let reports = lyapunov_ensemble(&r.model, cfg.ensemble, cfg.steps, transient, cfg.seed);
    let head = header("lyapunov", &r.spec, cfg.seed);

    let mut columns = vec!["seed_index".to_string()];
    columns.extend((1..=n).map(|i| format!("x{i}")));
    columns.extend((1..=n).map(|i| format!("chi_{i}")));
    columns.extend((1..=n).map(|i| format!("drift_{i}")));
    columns.push("resolved".into());
    let rows: Vec<Vec<String>> = reports
        .iter()
        .enumerate()
        .map(|(i, rep)| {
            let mut row = vec![i.to_string()];
            row.extend(rep.start.iter().map(|&x| fmt_f64(x)));
            row.extend(rep.exponents.iter().map(|&x| fmt_f64(x)));
            row.extend(rep.drift.iter().map(|&x| fmt_f64(x)));
            row.push(rep.resolved.to_string());
            row
        })
        .collect();
    write_csv(&out_path(cfg, "lyapunov.csv")?, &head, &columns, &rows)?;

    let summary = summarize_spectra(r.model.lambda, &reports);
    let outcome = if cfg.family == Family::Fk {
        Outcome::from_bool(summary.meets_fk_expectations(), || {
            format!(
                "sign patterns {:?}, min second {:?}, max third {:?}, unresolved {}",
                summary.patterns, summary.min_second, summary.max_third, summary.unresolved_fraction
            )
        })
    } else {
        Outcome::from_bool(summary.unresolved_fraction <= 0.01, || {
            format!("unresolved fraction {} above 1%", summary.unresolved_fraction)
        })
    };
    finish(&out_path(cfg, "lyapunov.json")?, &head, outcome, &summary)
}

/// Number of physical measures each family is expected to carry.
pub fn expected_clusters(family: Family) -> Option<usize> {
    match family {
        Family::Fk => Some(1),
        Family::Gk => Some(2),
        Family::M3Glued => Some(3),
        _ => None,
    }
}

/// Transient cap when the configuration leaves it open.
pub fn default_max_transient(steps: usize, transient: usize) -> usize {
    transient.max(200 * steps)
}

pub fn basin(cfg: &ExperimentConfig) -> Result<Outcome> {
    let r = resolved_or_return!(cfg);
    let n = r.model.dim();
    let transient = cfg.transient.unwrap_or_else(|| default_transient(cfg.steps));
    let bc = BasinConfig {
        ensemble: cfg.ensemble,
        steps: cfg.steps,
        transient,
        max_transient: cfg.max_transient.unwrap_or_else(|| default_max_transient(cfg.steps, transient)),
        seed: cfg.seed,
    };
    let (reports, summary) = basin_classify(&r.model, &bc).map_err(|e| anyhow!("basin: {e}"))?;
    let head = header("basin", &r.spec, cfg.seed);

    let mut columns = vec!["seed_index".to_string()];
    columns.extend((1..=n).map(|i| format!("x{i}")));
    columns.extend(["omega_label", "distance_to_target", "transient"].map(String::from));
    for i in 1..=n {
        columns.push(format!("cos_{i}"));
        columns.push(format!("sin_{i}"));
    }
    columns.extend((1..=n).map(|i| format!("chi_{i}")));
    columns.extend(["resolved", "unstable_index"].map(String::from));
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|rep| {
            let mut row = vec![rep.seed_index.to_string()];
            row.extend(rep.start.iter().map(|&x| fmt_f64(x)));
            row.push(rep.omega_label.tag().into());
            row.push(fmt_f64(rep.distance_to_target));
            row.push(rep.transient.to_string());
            row.extend(rep.birkhoff_vector.iter().map(|&x| fmt_f64(x)));
            row.extend(rep.exponents.iter().map(|&x| fmt_f64(x)));
            row.push(rep.exponents_resolved.to_string());
            row.push(rep.unstable_index.to_string());
            row
        })
        .collect();
    write_csv(&out_path(cfg, "basin.csv")?, &head, &columns, &rows)?;

    let clusters = empirical_measure_clusters(&reports, CLUSTER_CUTOFF);
    let expected = expected_clusters(cfg.family);
    let (cluster_count, cluster_indices, cluster_error) = match &clusters {
        Ok(c) => (Some(c.count), c.clusters.iter().map(|k| k.modal_index).collect(), None),
        Err(e) => (None, vec![], Some(e.to_string())),
    };
    let outcome = match &clusters {
        _ if summary.unresolved_flag => Outcome::Fail(format!("{} unresolved orbits exceed 1%", summary.unresolved)),
        Err(e) => Outcome::Fail(format!("clustering: {e}")),
        Ok(c) if c.degenerate => Outcome::Fail("a cluster below the minimum size".into()),
        Ok(c) => Outcome::from_bool(expected.is_none_or(|e| e == c.count), || {
            format!("{} clusters, expected {}", c.count, expected.unwrap_or(0))
        }),
    };

    #[derive(Serialize)]
    struct BasinOut<'a> {
        summary: &'a phdyn_core::analysis::basin::BasinSummary,
        cluster_count: Option<usize>,
        cluster_indices: Vec<usize>,
        expected_clusters: Option<usize>,
        cluster_error: Option<String>,
        clusters: Option<&'a phdyn_core::analysis::basin::ClusterReport>,
    }
    let body = BasinOut {
        summary: &summary,
        cluster_count,
        cluster_indices,
        expected_clusters: expected,
        cluster_error,
        clusters: clusters.as_ref().ok(),
    };
    finish(&out_path(cfg, "basin.json")?, &head, outcome, body)
}

pub fn cone(cfg: &ExperimentConfig) -> Result<Outcome> {
    if cone_families(cfg.family).is_none() {
        bail!("the cone check is not defined for {}", cfg.family.name());
    }
    let r = resolved_or_return!(cfg);
    let samples = cfg.samples.unwrap_or(1_000_000);
    let cones = cone_invariance(&r.model, 0.5, samples, cfg.seed).map_err(|e| anyhow!("cone: {e}"))?;
    let chain = dominated_chain(&r.model, samples, cfg.seed);
    let outcome = Outcome::from_bool(cones.passed && chain.passed, || {
        format!("kappa {:?}, chain worst ratio {} at index {}", cones.kappa, chain.worst_ratio, chain.worst_index)
    });
    #[derive(Serialize)]
    struct ConeOut<'a> {
        cones: &'a phdyn_core::analysis::cones::ConeReport,
        chain: &'a phdyn_core::analysis::cones::ChainReport,
    }
    let head = header("cone", &r.spec, cfg.seed);
    finish(&out_path(cfg, "cone.json")?, &head, outcome, ConeOut { cones: &cones, chain: &chain })
}

pub fn trap(cfg: &ExperimentConfig) -> Result<Outcome> {
    if !matches!(cfg.family, Family::Fk | Family::Gk) {
        bail!("the trapping check is defined for F_k and G_k, not {}", cfg.family.name());
    }
    let r = resolved_or_return!(cfg);
    let samples = cfg.samples.unwrap_or(100_000);
    let reports = match cfg.family {
        Family::Fk => {
            let eta = cfg.eta.unwrap_or(0.25 * r.spec.delta0);
            vec![fk_slab_check(&r.model, eta, samples, cfg.seed).map_err(|e| anyhow!("trap: {e}"))?]
        }
        _ => {
            let params = DaParams::for_model(&r.model).map_err(|e| anyhow!("trap: {e}"))?;
            gk_filtration(&r.model, &params, samples, cfg.seed).map_err(|e| anyhow!("trap: {e}"))?
        }
    };
    let failed: Vec<&str> = reports.iter().filter(|t| !t.passed).map(|t| t.region.label.as_str()).collect();
    let outcome = Outcome::from_bool(failed.is_empty(), || format!("regions not trapped: {failed:?}"));
    #[derive(Serialize)]
    struct TrapOut<'a> {
        regions: &'a [phdyn_core::analysis::trapping::TrapReport],
    }
    let head = header("trap", &r.spec, cfg.seed);
    finish(&out_path(cfg, "trap.json")?, &head, outcome, TrapOut { regions: &reports })
}

pub fn da(cfg: &ExperimentConfig) -> Result<Outcome> {
    if cfg.family != Family::DaGk {
        bail!("the DA check needs family DA_gk, not {}", cfg.family.name());
    }
    let r = resolved_or_return!(cfg);
    let params = DaParams::for_model(&r.model).map_err(|e| anyhow!("da: {e}"))?;
    let samples = cfg.samples.unwrap_or(100_000);
    let report =
        da_complement_check(&r.model, &params, samples, cfg.orbits, cfg.seed).map_err(|e| anyhow!("da: {e}"))?;
    let outcome = Outcome::from_bool(report.passed, || {
        format!(
            "root residual {:e}, window {}, min dL/du {}, trap {}, converged {}/{}, sink error {:e}",
            report.root_residual,
            report.u0_in_window,
            report.min_du_complement,
            report.trap.passed,
            report.converged,
            report.orbits,
            report.sink_jacobian_error
        )
    });
    let head = header("da", &r.spec, cfg.seed);
    finish(&out_path(cfg, "da.json")?, &head, outcome, &report)
}
