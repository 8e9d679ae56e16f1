//! Certification of parameter sets before any experiment runs.
//!
//! [`certify`] checks the standing inequalities on `λ`, the derivative
//! conditions on the circle factor and, for the two families whose `k` is
//! searched, the cone conditions at the chosen `k`. Every condition carries
//! its numeric margin so a failure can be read off the report.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::cones::{cone_invariance, ConeReport};
use crate::analysis::sampling::chunk_rng;
use crate::bump::BumpProfile;
use crate::circle::{check_conditions, SineFlowMap};
use crate::maps::linear::{anosov_power, lambda0};
use crate::maps::{Family, Mode, Model, ModelError, PerturbationSpec, SystemSpec};
use crate::maps::spec::{DEFAULT_DELTA0, DEFAULT_N, RELAXED_DELTA0_MAX};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// Failed, but tolerated in relaxed mode.
    Waived,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub status: Status,
    /// Positive when the inequality holds.
    pub margin: f64,
    pub note: String,
}

impl Condition {
    fn new(name: &str, margin: f64, note: String) -> Self {
        let status = if margin > 0.0 { Status::Pass } else { Status::Fail };
        Self { name: name.into(), status, margin, note }
    }

    fn waive_if(mut self, relaxed: bool) -> Self {
        if relaxed && self.status == Status::Fail {
            self.status = Status::Waived;
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witnesses {
    pub lambda: f64,
    pub big_c: f64,
    pub delta0: f64,
    /// A fixed point of the toral automorphism outside the surgery box.
    pub fixed_point: Option<[f64; 2]>,
    pub fixed_point_count: u64,
    pub k: Option<u64>,
    pub flow_strength: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSearchStep {
    pub k: u64,
    pub offdiag_sup: f64,
    pub cone_kappa: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub family: Family,
    pub mode: Mode,
    pub conditions: Vec<Condition>,
    pub witnesses: Witnesses,
    pub k_search: Vec<KSearchStep>,
    pub cone: Option<ConeReport>,
    pub passed: bool,
}

impl GateReport {
    pub fn first_failure(&self) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.status == Status::Fail)
    }
}

/// A parameter set whose `k` and circle strength may still be open.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecDraft {
    pub family: Family,
    pub n_power: u32,
    pub k: Option<u64>,
    pub delta0: f64,
    pub flow_strength: Option<f64>,
    pub rotation_offsets: Vec<f64>,
    pub perturbation: PerturbationSpec,
    pub mode: Mode,
    pub r_uses_phi_prime: bool,
}

impl SpecDraft {
    pub fn strict(family: Family) -> Self {
        Self {
            family,
            n_power: DEFAULT_N,
            k: None,
            delta0: DEFAULT_DELTA0,
            flow_strength: None,
            rotation_offsets: vec![0.0, 1.0 / 3.0, 2.0 / 3.0],
            perturbation: PerturbationSpec { size: 0.0, seed: 0 },
            mode: Mode::Strict,
            r_uses_phi_prime: false,
        }
    }

    pub fn relaxed(family: Family) -> Self {
        Self { delta0: RELAXED_DELTA0_MAX, mode: Mode::Relaxed, ..Self::strict(family) }
    }

    pub fn with_k(mut self, k: u64) -> Self {
        self.k = Some(k);
        self
    }

    pub fn lambda(&self) -> f64 {
        lambda0().powi(self.n_power as i32)
    }

    /// The canonical strength `e^{2πmc} = 0.7λ`, or 0 without a circle.
    pub fn resolved_flow(&self) -> f64 {
        self.flow_strength.unwrap_or_else(|| {
            self.family
                .harmonics()
                .map(|m| SineFlowMap::strength_for_rate(m, 0.7 * self.lambda()))
                .unwrap_or(0.0)
        })
    }

    /// Resolved spec with the given `k`.
    pub fn to_spec(&self, k: u64) -> SystemSpec {
        SystemSpec {
            family: self.family,
            n_power: self.n_power,
            k,
            delta0: self.delta0,
            flow_strength: self.resolved_flow(),
            rotation_offsets: self.rotation_offsets.clone(),
            perturbation: self.perturbation,
            mode: self.mode,
            r_uses_phi_prime: self.r_uses_phi_prime,
            certified: false,
        }
    }
}

/// The four inequalities on `λ = λ₀ᴺ`, `C` and `δ₀`. Returns the conditions
/// and a witness fixed point.
pub fn check_h(n_power: u32, delta0: f64, big_c: f64) -> (Vec<Condition>, Option<[f64; 2]>, u64) {
    let a = anosov_power(n_power.max(1));
    let lambda = a.lambda;
    // A fixed point farther than √2 δ₀ from the origin lies outside the box
    // [-δ₀, δ₀]² in every orthonormal frame.
    let mut best: Option<([f64; 2], f64)> = None;
    for (num, den) in a.fixed_points() {
        let p = [num[0] as f64 / den as f64, num[1] as f64 / den as f64];
        let w = [crate::torus::wrap_delta(p[0], 0.0), crate::torus::wrap_delta(p[1], 0.0)];
        let r = (w[0] * w[0] + w[1] * w[1]).sqrt();
        if best.is_none_or(|(_, rb)| r > rb) {
            best = Some((p, r));
        }
    }
    let (fp, r) = best.map_or((None, 0.0), |(p, r)| (Some(p), r));
    let fp_margin = r - std::f64::consts::SQRT_2 * delta0;
    let count = a.fixed_point_count();
    let leb = (2.0 * delta0).powi(2);
    let ratio = lambda.ln() / (3.0 * lambda).ln();
    let h3_rhs = 3.0 * (big_c + 1.0) * lambda - 1.5 * big_c;
    let conds = vec![
        Condition::new(
            "H1",
            fp_margin,
            format!("{count} fixed points; farthest at distance {r:.6} from the origin"),
        ),
        Condition::new("H2", lambda - 6.0, format!("lambda = {lambda}")),
        Condition::new("H3", lambda * lambda - h3_rhs, format!("lambda^2 = {} vs {h3_rhs}", lambda * lambda)),
        Condition::new("H4", ratio - leb, format!("log(lambda)/log(3 lambda) = {ratio} vs Leb = {leb:e}")),
    ];
    (conds, if fp_margin > 0.0 { fp } else { None }, count)
}

/// Gap between the deformed rate `½` and the sink derivative `1/(0.7λ)`
/// adjacent to it in the chain.
pub fn chain_gap(spec: &SystemSpec) -> f64 {
    let sink = spec
        .family
        .harmonics()
        .map(|m| SineFlowMap::new(m, spec.flow_strength).sink_derivative())
        .unwrap_or(0.0);
    0.5 - sink
}

/// Sample sup over `samples` chart-box points of the off-diagonal partials of
/// the principal surgery. Odd samples confine the deformed coordinate to
/// the `k`-scale support, where the partials live.
pub fn offdiag_sup(model: &Model, samples: usize, seed: u64) -> f64 {
    let n = model.dim();
    let r = model.chart.box_radius();
    let d0 = model.spec.delta0;
    let ui = match model.family() {
        Family::DaGk => 0,
        _ => 1,
    };
    let narrow = (0.5 * d0 / model.spec.k as f64).min(r);
    let mut rng = chunk_rng(seed, 0);
    let mut sup = 0.0f64;
    for i in 0..samples {
        let x: Vec<f64> = (0..n)
            .map(|j| {
                let h = if i % 2 == 1 && j == ui { narrow } else { r };
                rng.random_range(-h..=h)
            })
            .collect();
        let Some((_, g)) = model.surgery_partials(&x) else { return 0.0 };
        for (j, v) in g.iter().enumerate() {
            if j != ui {
                sup = sup.max(v.abs());
            }
        }
    }
    sup
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOptions {
    pub partial_samples: usize,
    pub cone_samples: usize,
    pub cone_eps: f64,
    pub seed: u64,
    pub max_k: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { partial_samples: 100_000, cone_samples: 1_000_000, cone_eps: 0.5, seed: 0x5eed, max_k: 1 << 20 }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no admissible k up to {max_k}")]
    KExhausted { max_k: u64, history: Vec<KSearchStep> },
}

/// Doubles `k` from 1 until the off-diagonal partials fall below
/// `1e-3 · gap` and the cone check passes at `opts.cone_eps`.
pub fn select_k(
    draft: &SpecDraft,
    bump: &BumpProfile,
    opts: &SearchOptions,
) -> Result<(u64, Vec<KSearchStep>, ConeReport), GateError> {
    let mut history = Vec::new();
    let mut k = draft.family.min_k();
    while k <= opts.max_k {
        let model = Model::with_bump(&draft.to_spec(k), bump.clone())?;
        let tol = 1e-3 * chain_gap(&model.spec);
        let sup = offdiag_sup(&model, opts.partial_samples, opts.seed);
        let mut step = KSearchStep { k, offdiag_sup: sup, cone_kappa: None };
        if sup < tol {
            let cone = cone_invariance(&model, opts.cone_eps, opts.cone_samples, opts.seed)
                .expect("searched families carry cone families");
            step.cone_kappa = Some(cone.kappa.clone());
            let ok = cone.passed;
            history.push(step);
            if ok {
                return Ok((k, history, cone));
            }
        } else {
            history.push(step);
        }
        k *= 2;
    }
    Err(GateError::KExhausted { max_k: opts.max_k, history })
}

/// `k` used by families whose `k` is not searched when left on auto.
pub fn default_k(family: Family) -> u64 {
    match family {
        Family::LinearB => 1,
        _ => 2,
    }
}

/// Runs every applicable check. The returned spec is present, and marked
/// certified, exactly when the report passed.
pub fn certify(draft: &SpecDraft, opts: &SearchOptions) -> Result<(GateReport, Option<SystemSpec>), GateError> {
    let relaxed = draft.mode == Mode::Relaxed;
    let lambda = draft.lambda();
    let delta0 = draft.delta0;
    let bump = BumpProfile::new(delta0).with_r_variant(draft.r_uses_phi_prime);
    let (mut conditions, fixed_point, count) = check_h(draft.n_power, delta0, bump.big_c);
    let flow = draft.resolved_flow();

    if let Some(m) = draft.family.harmonics() {
        let map = SineFlowMap::new(m, flow);
        let rep = check_conditions(&map, lambda, delta0);
        for r in rep.results.iter().chain(std::iter::once(&rep.sink_pointwise)) {
            let c = Condition::new(&r.name, r.margin, format!("worst at x = {}", r.witness));
            // The source-window condition needs δ₀ well below 1/λ; the
            // desk-scale δ₀ of relaxed mode is too wide for it.
            let waivable = r.name.ends_with('3');
            conditions.push(if waivable { c.waive_if(relaxed) } else { c });
        }
    }

    let h_ok = conditions.iter().all(|c| c.status != Status::Fail);
    let mut k_search = Vec::new();
    let mut cone = None;
    let mut k = draft.k;
    if h_ok && draft.family.searches_k() {
        match draft.k {
            None => match select_k(draft, &bump, opts) {
                Ok((kk, hist, c)) => {
                    k = Some(kk);
                    k_search = hist;
                    conditions.push(Condition::new(
                        "cone",
                        crate::analysis::cones::KAPPA_MAX - c.kappa.iter().cloned().fold(0.0, f64::max),
                        format!("k = {kk}, kappa = {:?}", c.kappa),
                    ));
                    cone = Some(c);
                }
                Err(GateError::KExhausted { max_k, history }) => {
                    k_search = history;
                    conditions.push(Condition::new("cone", -1.0, format!("no admissible k up to {max_k}")));
                }
                Err(e) => return Err(e),
            },
            Some(kk) => {
                let model = Model::with_bump(&draft.to_spec(kk), bump.clone())?;
                let sup = offdiag_sup(&model, opts.partial_samples, opts.seed);
                let tol = 1e-3 * chain_gap(&model.spec);
                let c = cone_invariance(&model, opts.cone_eps, opts.cone_samples, opts.seed)
                    .expect("searched families carry cone families");
                k_search.push(KSearchStep { k: kk, offdiag_sup: sup, cone_kappa: Some(c.kappa.clone()) });
                let worst = c.kappa.iter().cloned().fold(0.0, f64::max);
                // An explicit k below the searched one is a deliberate
                // desk-scale choice in relaxed mode.
                conditions.push(
                    Condition::new("offdiag", tol - sup, format!("k = {kk}, sup = {sup:e}, tol = {tol:e}"))
                        .waive_if(relaxed),
                );
                conditions.push(
                    Condition::new("cone", crate::analysis::cones::KAPPA_MAX - worst, format!("k = {kk}, kappa = {:?}", c.kappa))
                        .waive_if(relaxed),
                );
                cone = Some(c);
            }
        }
    }
    let k = k.or_else(|| (!draft.family.searches_k()).then(|| default_k(draft.family)));
    if let Some(kk) = k {
        if kk < draft.family.min_k() {
            conditions.push(Condition::new("k", -1.0, format!("k = {kk} below minimum {}", draft.family.min_k())));
        }
    }
    let passed = conditions.iter().all(|c| c.status != Status::Fail);
    let spec = match (passed, k) {
        (true, Some(kk)) => {
            let mut s = draft.to_spec(kk);
            s.validate().map_err(ModelError::from)?;
            s.certified = true;
            Some(s)
        }
        _ => None,
    };
    let report = GateReport {
        family: draft.family,
        mode: draft.mode,
        conditions,
        witnesses: Witnesses {
            lambda,
            big_c: bump.big_c,
            delta0,
            fixed_point,
            fixed_point_count: count,
            k,
            flow_strength: draft.family.harmonics().map(|_| flow),
        },
        k_search,
        cone,
        passed,
    };
    Ok((report, spec))
}
