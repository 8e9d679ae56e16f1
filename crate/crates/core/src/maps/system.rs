//! Composite maps `(id + εV) ∘ Base ∘ D_last ∘ … ∘ D_first` on 𝕋ⁿ.

use nalgebra::DMatrix;

use super::deform::{BracketError, BumpDeformation};
use super::linear::{apply_mod1, IntMat2};
use super::perturb::Perturbation;
use crate::circle::SineFlowMap;
use crate::torus::{TorusPoint, MAX_DIM};

/// One factor of the product base map.
#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    /// `p ↦ M p mod 1` on the 𝕋² occupying ambient slots `off, off + 1`.
    Toral { off: usize, matrix: IntMat2, inverse: IntMat2 },
    /// A circle map on ambient slot `off`.
    Circle { off: usize, map: SineFlowMap },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapSystem {
    pub n: usize,
    pub factors: Vec<Factor>,
    /// Applied first to last, before the base map.
    pub deformations: Vec<BumpDeformation>,
    pub perturbation: Option<Perturbation>,
}

impl MapSystem {
    #[inline]
    pub fn base(&self, p: &TorusPoint) -> TorusPoint {
        let mut c = *p.raw();
        for f in &self.factors {
            match f {
                Factor::Toral { off, matrix, .. } => {
                    let (a, b) = apply_mod1(matrix, c[*off], c[off + 1]);
                    c[*off] = a;
                    c[off + 1] = b;
                }
                Factor::Circle { off, map } => c[*off] = map.eval(c[*off]),
            }
        }
        TorusPoint::from_canonical(c, self.n)
    }

    pub fn base_inverse(&self, q: &TorusPoint) -> TorusPoint {
        let mut c = *q.raw();
        for f in &self.factors {
            match f {
                Factor::Toral { off, inverse, .. } => {
                    let (a, b) = apply_mod1(inverse, c[*off], c[off + 1]);
                    c[*off] = a;
                    c[off + 1] = b;
                }
                Factor::Circle { off, map } => c[*off] = map.inverse(c[*off]),
            }
        }
        TorusPoint::from_canonical(c, self.n)
    }

    /// `jac ← DBase(p) · jac`.
    pub fn push_base_jacobian(&self, p: &TorusPoint, jac: &mut DMatrix<f64>) {
        let cols = jac.ncols();
        for f in &self.factors {
            match f {
                Factor::Toral { off, matrix, .. } => {
                    let m = matrix.map(|r| r.map(|x| x as f64));
                    for c in 0..cols {
                        let (u, v) = (jac[(*off, c)], jac[(off + 1, c)]);
                        jac[(*off, c)] = m[0][0] * u + m[0][1] * v;
                        jac[(off + 1, c)] = m[1][0] * u + m[1][1] * v;
                    }
                }
                Factor::Circle { off, map } => {
                    let d = map.deriv(p.coord(*off));
                    for c in 0..cols {
                        jac[(*off, c)] *= d;
                    }
                }
            }
        }
    }

    /// The map without its perturbation.
    #[inline]
    pub fn eval_unperturbed(&self, p: &TorusPoint) -> TorusPoint {
        let mut q = *p;
        for d in &self.deformations {
            q = d.apply(&q);
        }
        self.base(&q)
    }

    #[inline]
    pub fn eval(&self, p: &TorusPoint) -> TorusPoint {
        let q = self.eval_unperturbed(p);
        match &self.perturbation {
            Some(pert) => pert.apply(&q),
            None => q,
        }
    }

    /// Ambient Jacobian by the chain rule.
    pub fn jacobian(&self, p: &TorusPoint) -> DMatrix<f64> {
        let mut jac = DMatrix::identity(self.n, self.n);
        let mut q = *p;
        for d in &self.deformations {
            d.push_jacobian(&q, &mut jac);
            q = d.apply(&q);
        }
        self.push_base_jacobian(&q, &mut jac);
        if let Some(pert) = &self.perturbation {
            let r = self.base(&q);
            pert.push_jacobian(&r, &mut jac);
        }
        jac
    }

    /// Image and Jacobian in one pass.
    pub fn eval_with_jacobian(&self, p: &TorusPoint) -> (TorusPoint, DMatrix<f64>) {
        let mut jac = DMatrix::identity(self.n, self.n);
        let mut q = *p;
        for d in &self.deformations {
            d.push_jacobian(&q, &mut jac);
            q = d.apply(&q);
        }
        self.push_base_jacobian(&q, &mut jac);
        let mut r = self.base(&q);
        if let Some(pert) = &self.perturbation {
            pert.push_jacobian(&r, &mut jac);
            r = pert.apply(&r);
        }
        (r, jac)
    }

    pub fn inverse(&self, y: &TorusPoint) -> Result<TorusPoint, BracketError> {
        let mut q = match &self.perturbation {
            Some(pert) => pert.invert(y),
            None => *y,
        };
        q = self.base_inverse(&q);
        for d in self.deformations.iter().rev() {
            q = d.invert(&q)?;
        }
        Ok(q)
    }

    /// The same system with its perturbation removed.
    pub fn unperturbed(&self) -> MapSystem {
        MapSystem { perturbation: None, ..self.clone() }
    }
}

/// Quick sanity helper: the ambient slots occupied by the factors cover
/// `0..n` exactly once.
pub(crate) fn check_layout(n: usize, factors: &[Factor]) -> bool {
    let mut seen = [false; MAX_DIM];
    for f in factors {
        let slots = match f {
            Factor::Toral { off, .. } => vec![*off, off + 1],
            Factor::Circle { off, .. } => vec![*off],
        };
        for s in slots {
            if s >= n || seen[s] {
                return false;
            }
            seen[s] = true;
        }
    }
    seen[..n].iter().all(|&b| b)
}
