//! Assembly of the seven map families from a [`SystemSpec`].
//!
//! Ambient layouts (slot indices of 𝕋ⁿ):
//!
//! | family   | slots                                              |
//! |----------|----------------------------------------------------|
//! | LinearB  | `A²` on 0,1 · `A` on 2,3                            |
//! | F_k, G_k | `A²` on 0,1 · `A` on 2,3 · circle on 4              |
//! | DA_gk    | `A` on 0,1                                         |
//! | H_k      | `A` on 0,1 · `A²` on 2,3                            |
//! | A_k      | `A` on 0,1 · `A²` on 2,3 · circle on 4              |
//! | M3Glued  | `A³` on 0,1 · `A` on 2,3 · `A²` on 4,5 · circle on 6 |
//!
//! Charts are centered at the origin with columns sorted by decreasing
//! eigenvalue modulus, so the chart coordinate of the DA-deformed unstable
//! direction `u_b` always sits right after the stronger unstable ones.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use smallvec::smallvec;
use thiserror::Error;

use super::deform::{BracketError, BumpArg, BumpDeformation, BumpFactor, SparseCoord};
use super::linear::{anosov_power, AnosovPower};
use super::perturb::Perturbation;
use super::spec::{Family, SpecError, SystemSpec};
use super::system::{check_layout, Factor, MapSystem};
use crate::bump::BumpProfile;
use crate::circle::SineFlowMap;
use crate::torus::{circle_distance, ChartError, EigenChart, TorusPoint};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Chart(#[from] ChartError),
}

/// Where each factor lives in the ambient torus.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    /// Strongest toral factor (`A²` or `A³`), if present and not the `c` block.
    pub a: Option<(usize, u32)>,
    /// The `A` factor carrying the DA surgery.
    pub b: Option<usize>,
    /// The `A²` factor of the `H_k` block.
    pub c: Option<usize>,
    pub theta: Option<usize>,
    pub circle: Option<SineFlowMap>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub spec: SystemSpec,
    pub lambda: f64,
    pub bump: BumpProfile,
    pub layout: Layout,
    pub chart: EigenChart,
    /// The full composite map. For the glued family this agrees with the
    /// piecewise definition because the surgery supports are disjoint arcs.
    pub system: MapSystem,
    branches: Option<Box<[MapSystem; 2]>>,
    /// Per chart column: `(deformation index, local coordinate index)` of the
    /// matching local coordinate of the principal surgery, if any.
    principal: Option<(usize, Vec<Option<usize>>)>,
}

/// Column vector with `dir` placed in slots `off, off + 1`.
fn toral_col(n: usize, off: usize, dir: [f64; 2]) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[off] = dir[0];
    v[off + 1] = dir[1];
    v
}

fn circle_col(n: usize, off: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[off] = 1.0;
    v
}

fn toral_factor(off: usize, a: &AnosovPower) -> Factor {
    Factor::Toral { off, matrix: a.matrix, inverse: a.inverse }
}

struct Surgeries<'a> {
    bump: &'a BumpProfile,
    lambda: f64,
    k: f64,
    a: &'a AnosovPower,
}

impl Surgeries<'_> {
    fn da_coef(&self) -> f64 {
        (0.5 - self.lambda) / self.lambda
    }

    fn strong_coef(&self) -> f64 {
        let l2 = self.lambda * self.lambda;
        (0.75 - l2) / l2
    }

    /// DA surgery on the `A` factor at `b`, optionally localized on the
    /// circle at slot `theta` around `center`.
    fn da(&self, name: &'static str, b: usize, theta: Option<(usize, f64)>) -> BumpDeformation {
        let mut coords = vec![SparseCoord::toral(b, self.a.unstable), SparseCoord::toral(b, self.a.stable)];
        let mut factors = vec![
            BumpFactor { scale: self.k, arg: BumpArg::Coord(0) },
            BumpFactor { scale: 1.0, arg: BumpArg::Coord(1) },
        ];
        if let Some((t, c)) = theta {
            coords.push(SparseCoord::circle(t, c));
            factors.insert(0, BumpFactor { scale: 1.0, arg: BumpArg::Coord(2) });
        }
        BumpDeformation { name, coords, target: 0, factors, coef: self.da_coef(), bump: self.bump.clone() }
    }

    /// Surgery on `E^uu` of the `A²` factor at `c`, cut off in the `b`
    /// coordinates at scale `k²`, optionally localized on the circle with
    /// the factor `φ(2θ)`.
    fn strong(&self, b: usize, c: usize, theta: Option<(usize, f64)>) -> BumpDeformation {
        let k2 = self.k * self.k;
        let mut coords = vec![
            SparseCoord::toral(b, self.a.unstable),
            SparseCoord::toral(b, self.a.stable),
            SparseCoord::toral(c, self.a.unstable),
            SparseCoord::toral(c, self.a.stable),
        ];
        let mut factors = vec![
            BumpFactor { scale: k2, arg: BumpArg::Coord(2) },
            BumpFactor { scale: k2, arg: BumpArg::Norm(smallvec![0, 1, 3]) },
        ];
        if let Some((t, center)) = theta {
            coords.push(SparseCoord::circle(t, center));
            factors.insert(0, BumpFactor { scale: 2.0, arg: BumpArg::Coord(4) });
        }
        BumpDeformation {
            name: "R",
            coords,
            target: 2,
            factors,
            coef: self.strong_coef(),
            bump: self.bump.clone(),
        }
    }
}

impl Model {
    pub fn build(spec: &SystemSpec) -> Result<Self, ModelError> {
        spec.validate()?;
        let bump = BumpProfile::new(spec.delta0).with_r_variant(spec.r_uses_phi_prime);
        Self::with_bump(spec, bump)
    }

    /// Like [`Model::build`] but reusing a bump profile whose constants were
    /// already computed for the same `δ₀`.
    pub fn with_bump(spec: &SystemSpec, bump: BumpProfile) -> Result<Self, ModelError> {
        spec.validate()?;
        assert_eq!(bump.delta0, spec.delta0, "bump profile built for a different delta0");
        let bump = bump.with_r_variant(spec.r_uses_phi_prime);
        let n_pow = spec.n_power;
        let a1 = anosov_power(n_pow);
        let a2 = anosov_power(2 * n_pow);
        let a3 = anosov_power(3 * n_pow);
        let lambda = a1.lambda;
        let circle = spec.family.harmonics().map(|m| SineFlowMap::new(m, spec.flow_strength));
        let sg = Surgeries { bump: &bump, lambda, k: spec.k as f64, a: &a1 };
        let (u, s) = (a1.unstable, a1.stable);
        let n = spec.family.dim();
        let l2 = lambda * lambda;
        let sink_rate = circle.map(|c| c.sink_derivative()).unwrap_or(0.0);

        let mut branches = None;
        let mut principal = None;
        // (factors, deformations, chart columns, eigenvalues, layout)
        let (factors, deformations, cols, eigs, layout) = match spec.family {
            Family::LinearB => (
                vec![toral_factor(0, &a2), toral_factor(2, &a1)],
                vec![],
                vec![toral_col(n, 0, u), toral_col(n, 2, u), toral_col(n, 2, s), toral_col(n, 0, s)],
                vec![l2, lambda, 1.0 / lambda, 1.0 / l2],
                Layout { a: Some((0, 2)), b: Some(2), c: None, theta: None, circle: None },
            ),
            Family::Fk => {
                let d = BumpDeformation {
                    name: "P",
                    coords: vec![
                        SparseCoord::toral(0, u),
                        SparseCoord::toral(2, u),
                        SparseCoord::circle(4, 0.0),
                        SparseCoord::toral(2, s),
                        SparseCoord::toral(0, s),
                    ],
                    target: 1,
                    factors: vec![
                        BumpFactor { scale: spec.k as f64, arg: BumpArg::Coord(1) },
                        BumpFactor { scale: 1.0, arg: BumpArg::Norm(smallvec![0, 2, 3, 4]) },
                    ],
                    coef: sg.da_coef(),
                    bump: bump.clone(),
                };
                principal = Some((0, (0..5).map(Some).collect()));
                (
                    vec![toral_factor(0, &a2), toral_factor(2, &a1), Factor::Circle { off: 4, map: circle.unwrap() }],
                    vec![d],
                    vec![
                        toral_col(n, 0, u),
                        toral_col(n, 2, u),
                        circle_col(n, 4),
                        toral_col(n, 2, s),
                        toral_col(n, 0, s),
                    ],
                    vec![l2, lambda, sink_rate, 1.0 / lambda, 1.0 / l2],
                    Layout { a: Some((0, 2)), b: Some(2), c: None, theta: Some(4), circle },
                )
            }
            Family::Gk => {
                let d = BumpDeformation {
                    name: "Q",
                    coords: vec![SparseCoord::toral(2, u), SparseCoord::circle(4, 0.0), SparseCoord::toral(2, s)],
                    target: 0,
                    factors: vec![
                        BumpFactor { scale: spec.k as f64, arg: BumpArg::Coord(0) },
                        BumpFactor { scale: 1.0, arg: BumpArg::Coord(1) },
                        BumpFactor { scale: 1.0, arg: BumpArg::Coord(2) },
                    ],
                    coef: sg.da_coef(),
                    bump: bump.clone(),
                };
                principal = Some((0, vec![None, Some(0), Some(1), Some(2), None]));
                (
                    vec![toral_factor(0, &a2), toral_factor(2, &a1), Factor::Circle { off: 4, map: circle.unwrap() }],
                    vec![d],
                    vec![
                        toral_col(n, 0, u),
                        toral_col(n, 2, u),
                        circle_col(n, 4),
                        toral_col(n, 2, s),
                        toral_col(n, 0, s),
                    ],
                    vec![l2, lambda, sink_rate, 1.0 / lambda, 1.0 / l2],
                    Layout { a: Some((0, 2)), b: Some(2), c: None, theta: Some(4), circle },
                )
            }
            Family::DaGk => {
                principal = Some((0, vec![Some(0), Some(1)]));
                (
                    vec![toral_factor(0, &a1)],
                    vec![sg.da("L", 0, None)],
                    vec![toral_col(n, 0, u), toral_col(n, 0, s)],
                    vec![lambda, 1.0 / lambda],
                    Layout { a: None, b: Some(0), c: None, theta: None, circle: None },
                )
            }
            Family::Hk => {
                principal = Some((0, vec![Some(2), Some(0), Some(1), Some(3)]));
                (
                    vec![toral_factor(0, &a1), toral_factor(2, &a2)],
                    vec![sg.strong(0, 2, None), sg.da("L", 0, None)],
                    vec![toral_col(n, 2, u), toral_col(n, 0, u), toral_col(n, 0, s), toral_col(n, 2, s)],
                    vec![l2, lambda, 1.0 / lambda, 1.0 / l2],
                    Layout { a: None, b: Some(0), c: Some(2), theta: None, circle: None },
                )
            }
            Family::Ak => {
                principal = Some((0, vec![Some(2), Some(0), Some(4), Some(1), Some(3)]));
                (
                    vec![toral_factor(0, &a1), toral_factor(2, &a2), Factor::Circle { off: 4, map: circle.unwrap() }],
                    vec![sg.strong(0, 2, Some((4, 0.0))), sg.da("Q", 0, Some((4, 0.0)))],
                    vec![
                        toral_col(n, 2, u),
                        toral_col(n, 0, u),
                        circle_col(n, 4),
                        toral_col(n, 0, s),
                        toral_col(n, 2, s),
                    ],
                    vec![l2, lambda, sink_rate, 1.0 / lambda, 1.0 / l2],
                    Layout { a: None, b: Some(0), c: Some(2), theta: Some(4), circle },
                )
            }
            Family::M3Glued => {
                let offs = &spec.rotation_offsets;
                let r1 = sg.strong(2, 4, Some((6, offs[0])));
                let q1 = sg.da("Q", 2, Some((6, offs[0])));
                let q2 = sg.da("Q", 2, Some((6, offs[1])));
                let factors = vec![
                    toral_factor(0, &a3),
                    toral_factor(2, &a1),
                    toral_factor(4, &a2),
                    Factor::Circle { off: 6, map: circle.unwrap() },
                ];
                let mk = |defs: Vec<BumpDeformation>| MapSystem {
                    n,
                    factors: factors.clone(),
                    deformations: defs,
                    perturbation: None,
                };
                branches = Some(Box::new([mk(vec![r1.clone(), q1.clone()]), mk(vec![q2.clone()])]));
                let l3 = l2 * lambda;
                (
                    factors.clone(),
                    vec![r1, q1, q2],
                    vec![
                        toral_col(n, 0, u),
                        toral_col(n, 4, u),
                        toral_col(n, 2, u),
                        circle_col(n, 6),
                        toral_col(n, 2, s),
                        toral_col(n, 4, s),
                        toral_col(n, 0, s),
                    ],
                    vec![l3, l2, lambda, sink_rate, 1.0 / lambda, 1.0 / l2, 1.0 / l3],
                    Layout { a: Some((0, 3)), b: Some(2), c: Some(4), theta: Some(6), circle },
                )
            }
        };
        debug_assert!(check_layout(n, &factors));
        let perturbation = (spec.perturbation.size > 0.0)
            .then(|| Perturbation::new(n, spec.perturbation.size, spec.perturbation.seed));
        if let (Some(br), Some(p)) = (branches.as_mut(), perturbation.as_ref()) {
            for b in br.iter_mut() {
                b.perturbation = Some(p.clone());
            }
        }
        let frame = DMatrix::from_columns(&cols);
        let chart = EigenChart::new(frame, eigs, spec.delta0, TorusPoint::zero(n))?;
        Ok(Self {
            spec: spec.clone(),
            lambda,
            bump,
            layout,
            chart,
            system: MapSystem { n, factors, deformations, perturbation },
            branches,
            principal,
        })
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn dim(&self) -> usize {
        self.system.n
    }

    pub fn deformations(&self) -> &[BumpDeformation] {
        &self.system.deformations
    }

    /// Narrowest transition width `(support - plateau) / scale` over every
    /// bump factor of every block. It is the length below which the map can
    /// no longer be treated as locally linear.
    pub fn feature_length(&self) -> f64 {
        let width = self.bump.support() - self.bump.plateau();
        let blocks: &[MapSystem] = match &self.branches {
            Some(b) => &b[..],
            None => std::slice::from_ref(&self.system),
        };
        blocks
            .iter()
            .flat_map(|b| b.deformations.iter())
            .flat_map(|d| d.factors.iter())
            .map(|f| width / f.scale)
            .fold(f64::INFINITY, f64::min)
    }

    /// For the glued family, which construction block governs `p`: 0 on the
    /// closed arc of half-width 1/6 around the first offset, 1 elsewhere.
    pub fn branch_of(&self, p: &TorusPoint) -> usize {
        match self.layout.theta {
            Some(t) if self.family() == Family::M3Glued => {
                usize::from(circle_distance(p.coord(t), self.spec.rotation_offsets[0]) > 1.0 / 6.0 + 1e-15)
            }
            _ => 0,
        }
    }

    fn system_at(&self, p: &TorusPoint) -> &MapSystem {
        match &self.branches {
            Some(b) => &b[self.branch_of(p)],
            None => &self.system,
        }
    }

    #[inline]
    pub fn eval(&self, p: &TorusPoint) -> TorusPoint {
        self.system_at(p).eval(p)
    }

    pub fn jacobian(&self, p: &TorusPoint) -> DMatrix<f64> {
        self.system_at(p).jacobian(p)
    }

    pub fn eval_with_jacobian(&self, p: &TorusPoint) -> (TorusPoint, DMatrix<f64>) {
        self.system_at(p).eval_with_jacobian(p)
    }

    /// Preimage of `y`. The composite system is used for every family: its
    /// surgeries have disjoint supports, and the base circle map preserves
    /// each arc between consecutive sources.
    pub fn inverse(&self, y: &TorusPoint) -> Result<TorusPoint, BracketError> {
        self.system.inverse(y)
    }

    /// `Fᵀ · DF(p) · F` with `F` the chart frame.
    pub fn chart_jacobian(&self, p: &TorusPoint) -> DMatrix<f64> {
        let f = self.chart.frame();
        f.transpose() * self.jacobian(p) * f
    }

    /// Largest disagreement between the two construction blocks of the glued
    /// map on `samples` points within `width` of the sources bounding the
    /// first arc. Zero for the other families.
    pub fn glue_check<R: Rng>(&self, samples: usize, width: f64, rng: &mut R) -> f64 {
        let (Some(br), Some(t)) = (&self.branches, self.layout.theta) else {
            return 0.0;
        };
        let n = self.dim();
        let off = self.spec.rotation_offsets[0];
        let mut worst = 0.0f64;
        for i in 0..samples {
            let side = if i % 2 == 0 { 1.0 } else { -1.0 };
            let mut c: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            c[t] = off + side / 6.0 + rng.random_range(-width..=width);
            let p = TorusPoint::new(&c);
            let d = crate::torus::distance(&br[0].eval(&p), &br[1].eval(&p));
            worst = worst.max(d);
        }
        worst
    }

    /// Value and chart-frame partials of the deformed coordinate of the
    /// principal surgery, in the coordinates of [`Model::chart`]:
    ///
    /// * `F_k`, `G_k`, `DA_gk`: `λ (x_u + Δ)` on the DA-deformed direction,
    /// * `H_k`, `A_k`: `λ² (x_uu + Δ)` on the strong unstable direction of
    ///   the `A²` block.
    ///
    /// Returns `None` for the families without such a surgery.
    pub fn surgery_partials(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (di, map) = self.principal.as_ref()?;
        let d = &self.system.deformations[*di];
        let nl = d.coords.len();
        let mut local = vec![0.0; nl];
        for (col, l) in map.iter().enumerate() {
            if let Some(l) = l {
                local[*l] = x[col];
            }
        }
        let rate = match self.family() {
            Family::Hk | Family::Ak => self.lambda * self.lambda,
            _ => self.lambda,
        };
        let (delta, g) = d.delta_and_grad(&local);
        let value = rate * (local[d.target] + delta);
        let mut partials = vec![0.0; x.len()];
        for (col, l) in map.iter().enumerate() {
            if let Some(l) = l {
                partials[col] = rate * (g[*l] + if *l == d.target { 1.0 } else { 0.0 });
            }
        }
        Some((value, partials))
    }

    /// Random point whose local coordinates for deformation `di` fill its
    /// support box; other slots are uniform on the torus.
    pub fn sample_in_support<R: Rng>(&self, di: usize, rng: &mut R) -> TorusPoint {
        let d = &self.system.deformations[di];
        let s = self.bump.support();
        let nl = d.coords.len();
        // Per local coordinate, the tightest half-width among its factors.
        let mut half = vec![0.5 * self.spec.delta0; nl];
        for f in &d.factors {
            match &f.arg {
                BumpArg::Coord(i) => half[*i] = half[*i].min(s / f.scale),
                BumpArg::Norm(ids) => {
                    let h = s / f.scale / (ids.len() as f64).sqrt();
                    for &i in ids {
                        half[i] = half[i].min(h);
                    }
                }
            }
        }
        let x: Vec<f64> = half.iter().map(|&h| rng.random_range(-h..=h)).collect();
        let n = self.dim();
        let mut c: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let mut touched = [false; crate::torus::MAX_DIM];
        for sc in &d.coords {
            for (j, &slot) in sc.idx.iter().enumerate() {
                if !touched[slot] {
                    touched[slot] = true;
                    c[slot] = sc.center[j];
                }
            }
        }
        for (v, sc) in x.iter().zip(&d.coords) {
            for (j, &slot) in sc.idx.iter().enumerate() {
                c[slot] += v * sc.weight[j];
            }
        }
        TorusPoint::new(&c)
    }
}
