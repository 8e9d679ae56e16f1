//! Acceptance battery: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so the lines come out in order
//! and unbuffered. The process exits nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use phdyn_core::analysis::basin::{basin_classify, empirical_measure_clusters, BasinConfig, OmegaLabel, CLUSTER_CUTOFF};
use phdyn_core::analysis::cones::dominated_chain;
use phdyn_core::analysis::da::{da_complement_check, DaParams};
use phdyn_core::analysis::lyapunov::{default_transient, lyapunov_ensemble, summarize_spectra, SpectrumSummary};
use phdyn_core::analysis::sampling::{chunk_rng, sample, Stratum};
use phdyn_core::analysis::trapping::{fk_slab_check, gk_filtration};
use phdyn_core::bump::BumpProfile;
use phdyn_core::fd::{jacobian, relative_error, step_for, Stencil};
use phdyn_core::gate::{certify, check_h, GateReport, SearchOptions, SpecDraft, Status};
use phdyn_core::maps::spec::DEFAULT_DELTA0;
use phdyn_core::maps::{Family, Mode, Model, SystemSpec};
use rand::Rng;

type Verdict = Result<(bool, String), String>;

struct Certified {
    report: GateReport,
    spec: SystemSpec,
    secs: f64,
}

fn certify_strict(family: Family) -> Result<Certified, String> {
    let t = Instant::now();
    let (report, spec) = certify(&SpecDraft::strict(family), &SearchOptions::default()).map_err(|e| e.to_string())?;
    let spec = spec.ok_or_else(|| format!("{} gate failed: {:?}", family.name(), report.first_failure()))?;
    Ok(Certified { report, spec, secs: t.elapsed().as_secs_f64() })
}

fn build(spec: &SystemSpec) -> Result<Model, String> {
    Model::build(spec).map_err(|e| e.to_string())
}

/// 1: the inequalities hold at N = 4 and fail at N = 1.
fn constants_gate() -> Verdict {
    let t = Instant::now();
    let c = BumpProfile::new(DEFAULT_DELTA0).big_c;
    let (at4, _, count) = check_h(4, DEFAULT_DELTA0, c);
    let (at1, _, _) = check_h(1, DEFAULT_DELTA0, c);
    let secs = t.elapsed().as_secs_f64();
    let pass4 = at4.iter().all(|x| x.status == Status::Pass);
    let fail1: Vec<&str> = at1.iter().filter(|x| x.status == Status::Fail).map(|x| x.name.as_str()).collect();
    Ok((
        pass4 && !fail1.is_empty() && secs < 5.0,
        format!("N=4 all pass ({count} fixed points, C = {c:.10}); N=1 fails {fail1:?}; {secs:.2}s"),
    ))
}

/// 2: analytic Jacobians against central differences at 10³ points per map.
fn jacobian_oracle(fk_auto: &SystemSpec) -> Verdict {
    let t = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut configs = 0;
    for family in Family::ALL {
        let k = if family == Family::LinearB { 1 } else { 2 };
        for mode in [Mode::Strict, Mode::Relaxed] {
            for eps in [0.0, 1e-4] {
                let base = match mode {
                    Mode::Strict => SystemSpec::strict(family, k),
                    Mode::Relaxed => SystemSpec::relaxed(family, k),
                };
                let m = build(&base.with_perturbation(eps, 7))?;
                let e = max_fd_error(&m, 1000);
                configs += 1;
                if e > worst.0 {
                    worst = (e, format!("{} {mode:?} eps={eps}", family.name()));
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    // Diagnostic only: at the searched k the bump transition is ~1e-10 wide.
    let auto = max_fd_error(&build(fk_auto)?, 1000);
    Ok((
        worst.0 < 1e-6 && secs < 30.0,
        format!(
            "{configs} maps at k = 2, worst relative error {:.2e} ({}); {secs:.1}s; diagnostic F_k at k = {}: {auto:.2e}",
            worst.0, worst.1, fk_auto.k
        ),
    ))
}

fn max_fd_error(m: &Model, points: usize) -> f64 {
    let h = step_for(m.feature_length());
    (0..points)
        .map(|i| {
            let p = sample(m, Stratum::of_index(i), i, &mut chunk_rng(11, i as u64));
            relative_error(&jacobian(|q| m.eval(q), &p, h, Stencil::TwoPoint), &m.jacobian(&p))
        })
        .fold(0.0, f64::max)
}

/// 3: `∂₂P_k` and `∂₂Q_k` stay in `[1/2, λ²/3]` in the chart box and equal
/// `1/2` at the origin.
fn surgery_bounds(fk: &SystemSpec, gk: &SystemSpec) -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for spec in [fk, gk] {
        let m = build(spec)?;
        let (lo, hi, at0) = second_partial_range(&m, 100_000);
        let top = m.lambda * m.lambda / 3.0;
        let good = lo >= 0.5 - 1e-12 && hi <= top + 1e-12 && (at0 - 0.5).abs() <= 1e-12;
        ok &= good;
        notes.push(format!("{} range [{lo:.12}, {hi:.4}] (cap {top:.4}), at 0 {at0:.15}", spec.family.name()));
    }
    Ok((ok, notes.join("; ")))
}

/// Range of the deformed-coordinate partial over `samples` chart-box points.
/// Odd samples narrow the coordinates the bump factors act on to their
/// supports, which are far thinner than the box at large `k`.
fn second_partial_range(m: &Model, samples: usize) -> (f64, f64, f64) {
    let n = m.dim();
    let r = m.chart.box_radius();
    let d0 = m.spec.delta0;
    let narrow_u = d0 / (2.0 * m.spec.k as f64);
    let mut rng = chunk_rng(13, 0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..samples {
        let x: Vec<f64> = (0..n)
            .map(|j| {
                let h = match (i % 2, j) {
                    (1, 1) => narrow_u,
                    (1, _) => 0.5 * d0,
                    _ => r,
                };
                rng.random_range(-h..=h)
            })
            .collect();
        let d = m.surgery_partials(&x).expect("principal surgery").1[1];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let at0 = m.surgery_partials(&vec![0.0; n]).expect("principal surgery").1[1];
    (lo, hi, at0)
}

/// 4: cones and the diagonal chain at the searched `k`.
fn cones(certs: &[&Certified]) -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for c in certs {
        let t = Instant::now();
        let m = build(&c.spec)?;
        let chain = dominated_chain(&m, 1_000_000, 0x5eed);
        let cone = c.report.cone.as_ref().ok_or("gate ran no cone check")?;
        let secs = c.secs + t.elapsed().as_secs_f64();
        let max_kappa = cone.kappa.iter().cloned().fold(0.0, f64::max);
        let good = cone.passed && max_kappa <= 0.9 && cone.samples >= 1_000_000 && chain.passed && secs < 120.0;
        ok &= good;
        notes.push(format!(
            "{} k = {}: kappa {:?}, chain worst ratio {:.4}; {secs:.1}s",
            c.spec.family.name(),
            c.spec.k,
            cone.kappa.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>(),
            chain.worst_ratio
        ));
    }
    Ok((ok, notes.join("; ")))
}

/// 5: the `F_k` slab and the `G_k` filtration are trapping.
fn trapping(fk: &SystemSpec, gk: &SystemSpec) -> Verdict {
    let f = build(fk)?;
    let eta = 0.25 * fk.delta0;
    let slab = fk_slab_check(&f, eta, 100_000, 5).map_err(|e| e.to_string())?;
    let g = build(gk)?;
    let params = DaParams::for_model(&g).map_err(|e| e.to_string())?;
    let levels = gk_filtration(&g, &params, 100_000, 5).map_err(|e| e.to_string())?;
    let ok = slab.passed && levels.len() == 5 && levels.iter().all(|l| l.passed);
    let margins: Vec<String> = levels
        .iter()
        .map(|l| format!("{} {}", l.region.label, l.min_margin.map_or("whole".into(), |m| format!("{m:.2e}"))))
        .collect();
    Ok((
        ok,
        format!(
            "slab margin {:.3e} >= {:.3e}; filtration {}",
            slab.min_margin.unwrap_or(f64::NAN),
            slab.required_margin,
            margins.join(", ")
        ),
    ))
}

fn fk_spectra(spec: &SystemSpec) -> Result<SpectrumSummary, String> {
    let m = build(spec)?;
    let reps = lyapunov_ensemble(&m, 100, 10_000, default_transient(10_000), 6);
    Ok(summarize_spectra(m.lambda, &reps))
}

fn describe_spectra(s: &SpectrumSummary) -> String {
    format!(
        "{}/{} resolved, patterns {:?}, min chi2 {:.4} > beta {:.4}, max chi3 {:.4}",
        s.resolved,
        s.ensemble,
        s.patterns.iter().map(|p| format!("{}x{}", p.pattern, p.count)).collect::<Vec<_>>(),
        s.min_second.unwrap_or(f64::NAN),
        s.beta,
        s.max_third.unwrap_or(f64::NAN)
    )
}

/// 6: exponent signs for `F_k`.
fn exponent_signs(fk: &SystemSpec) -> Verdict {
    let t = Instant::now();
    let s = fk_spectra(fk)?;
    let secs = t.elapsed().as_secs_f64();
    Ok((s.meets_fk_expectations() && secs < 120.0, format!("{}; {secs:.1}s", describe_spectra(&s))))
}

struct BasinOutcome {
    ok: bool,
    clusters: usize,
    note: String,
}

fn basins(spec: &SystemSpec, max_transient: usize, want: &[(OmegaLabel, f64)], indices: &[usize]) -> Result<BasinOutcome, String> {
    let t = Instant::now();
    let m = build(spec)?;
    let cfg = BasinConfig {
        ensemble: 1000,
        steps: 10_000,
        transient: default_transient(10_000),
        max_transient,
        seed: 9,
    };
    let (reps, summary) = basin_classify(&m, &cfg).map_err(|e| e.to_string())?;
    let clusters = empirical_measure_clusters(&reps, CLUSTER_CUTOFF).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let mut got: Vec<usize> = clusters.clusters.iter().map(|c| c.modal_index).collect();
    got.sort_unstable();
    let mut ok = clusters.count == indices.len() && got == indices && !clusters.degenerate;
    let mut parts = Vec::new();
    for (label, min) in want {
        let f = summary.fractions.iter().find(|f| f.label == *label);
        let (p, ci) = f.map_or((0.0, 0.0), |f| (f.fraction, f.ci_half_width));
        ok &= p >= *min;
        parts.push(format!("{} {p:.3} +- {ci:.3}", label.tag()));
    }
    Ok(BasinOutcome {
        ok,
        clusters: clusters.count,
        note: format!(
            "{} clusters, indices {got:?}, fractions [{}], unresolved {}; {secs:.1}s",
            clusters.count,
            parts.join(", "),
            summary.unresolved
        ),
    })
}

const GK_TARGETS: [(OmegaLabel, f64); 2] = [(OmegaLabel::Lambda1, 0.3), (OmegaLabel::Lambda3, 0.3)];

/// 7: two physical measures for `G_k`.
fn two_measures() -> Verdict {
    let t = Instant::now();
    let b = basins(&SystemSpec::relaxed(Family::Gk, 2), 2_000_000, &GK_TARGETS, &[1, 2])?;
    Ok((b.ok && t.elapsed().as_secs_f64() < 300.0, b.note))
}

/// 8: the DA map.
fn da_structure() -> Verdict {
    let m = build(&SystemSpec::strict(Family::DaGk, 2))?;
    let p = DaParams::for_model(&m).map_err(|e| e.to_string())?;
    let r = da_complement_check(&m, &p, 100_000, 1000, 8).map_err(|e| e.to_string())?;
    let ok = r.passed
        && r.u0_in_window
        && r.root_residual.abs() <= 1e-10
        && r.sink_jacobian_error <= 1e-12
        && r.trap.passed
        && r.converged == r.orbits
        && r.max_steps_to_converge <= 500
        && r.min_du_complement > 1.0;
    Ok((
        ok,
        format!(
            "u0 = {:.6e} in window, residual {:.1e}, sink error {:.1e}, trap margin {:.2e}, {}/{} converge in <= {} steps, min dL/du {:.4}",
            p.u0,
            r.root_residual,
            r.sink_jacobian_error,
            r.trap.min_margin.unwrap_or(f64::NAN),
            r.converged,
            r.orbits,
            r.max_steps_to_converge,
            r.min_du_complement
        ),
    ))
}

/// 9: three indices at `m = 3`.
fn three_indices() -> Verdict {
    let t = Instant::now();
    let want = [(OmegaLabel::M1, 0.1), (OmegaLabel::M2, 0.1), (OmegaLabel::M3, 0.1)];
    let b = basins(&SystemSpec::relaxed(Family::M3Glued, 2), 2_000_000, &want, &[1, 2, 3])?;
    Ok((b.ok && t.elapsed().as_secs_f64() < 600.0, b.note))
}

/// 10: criteria 6 and 7 under five small perturbations each.
fn robustness(fk: &SystemSpec) -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for seed in 1..=5u64 {
        let s = fk_spectra(&fk.clone().with_perturbation(1e-4, seed))?;
        let g = basins(&SystemSpec::relaxed(Family::Gk, 2).with_perturbation(1e-4, seed), 2_000_000, &GK_TARGETS, &[1, 2])?;
        let good = s.meets_fk_expectations() && g.ok && g.clusters == 2;
        ok &= good;
        notes.push(format!(
            "seed {seed}: F_k {} min chi2 {:.3}, G_k {} clusters",
            s.patterns.iter().map(|p| format!("{}x{}", p.pattern, p.count)).collect::<Vec<_>>().join("+"),
            s.min_second.unwrap_or(f64::NAN),
            g.clusters
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn csv_body(path: &Path) -> Result<String, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n"))
}

/// 11: identical configurations give byte-identical CSV bodies, whatever the
/// number of worker threads.
fn determinism() -> Verdict {
    let root = std::env::temp_dir().join(format!("phdyn-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&root).map_err(|e| e.to_string())?;
    let cfg = root.join("run.cfg");
    std::fs::write(&cfg, "family = G_k\nmode = relaxed\nk = 2\nensemble = 150\nsteps = 2000\ntransient = 20000\nsamples = 100000\nseed = 21\n")
        .map_err(|e| e.to_string())?;
    let mut bodies = Vec::new();
    for (run, threads) in [("a", "1"), ("b", "4")] {
        for cmd in ["lyapunov", "basin"] {
            let out = root.join(run);
            let st = Command::new(env!("CARGO_BIN_EXE_phdyn"))
                .args([cmd, "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .env("RAYON_NUM_THREADS", threads)
                .output()
                .map_err(|e| e.to_string())?;
            if st.status.code() != Some(0) {
                return Err(format!("{cmd} did not pass: {}", String::from_utf8_lossy(&st.stdout).trim()));
            }
        }
        let run_dir = root.join(run);
        bodies.push((csv_body(&run_dir.join("lyapunov.csv"))?, csv_body(&run_dir.join("basin.csv"))?));
    }
    let _ = std::fs::remove_dir_all(&root);
    let same = bodies[0] == bodies[1];
    let rows = bodies[0].0.lines().count() + bodies[0].1.lines().count();
    Ok((same, format!("lyapunov and basin CSV bodies identical across 1 and 4 threads ({rows} lines): {same}")))
}

fn main() {
    let mut lines: Vec<(usize, &str, Verdict, f64)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match &v {
            Ok((true, d)) => ("PASS", d.clone()),
            Ok((false, d)) => ("FAIL", d.clone()),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        println!("{tag} [{id:>2}] {name}: {detail} ({secs:.1}s)");
        lines.push((id, name, v, secs));
    };

    let fk = certify_strict(Family::Fk);
    let gk = certify_strict(Family::Gk);
    let need = |c: &Result<Certified, String>| c.as_ref().map(|c| c.spec.clone()).map_err(Clone::clone);

    run(1, "constants gate", &mut constants_gate);
    run(2, "Jacobian oracle", &mut || jacobian_oracle(&need(&fk)?));
    run(3, "deformed-partial bounds", &mut || surgery_bounds(&need(&fk)?, &need(&gk)?));
    run(4, "cone and domination certification", &mut || match (&fk, &gk) {
        (Ok(a), Ok(b)) => cones(&[a, b]),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    });
    run(5, "trapping", &mut || trapping(&need(&fk)?, &need(&gk)?));
    run(6, "exponent signs", &mut || exponent_signs(&need(&fk)?));
    run(7, "two physical measures", &mut two_measures);
    run(8, "DA structure", &mut da_structure);
    run(9, "three indices at m = 3", &mut three_indices);
    run(10, "robustness under perturbation", &mut || robustness(&need(&fk)?));
    run(11, "determinism", &mut determinism);

    let passed = lines.iter().filter(|l| matches!(l.2, Ok((true, _)))).count();
    println!("acceptance: {passed}/{} criteria passed", lines.len());
    if passed != lines.len() {
        std::process::exit(1);
    }
}
