//! Seeded C¹-small perturbations `x ↦ x + ε V(x)`.
//!
//! `V` is a trigonometric vector field with a handful of Fourier modes whose
//! integer wave vectors have entries in `-3..=3`. Coefficients are scaled so
//! that the crude bound `Σ (|a| + |b|) · max(1, 2π |k|₁)` on `‖V‖_{C¹}` is
//! exactly 1.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

use crate::torus::{canonical, TorusPoint, MAX_DIM};

pub const MODES: usize = 6;
pub const MAX_DEGREE: i32 = 3;

#[derive(Clone, Debug, PartialEq)]
struct Mode {
    k: [f64; MAX_DIM],
    a: [f64; MAX_DIM],
    b: [f64; MAX_DIM],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub eps: f64,
    pub seed: u64,
    n: usize,
    modes: Vec<Mode>,
}

impl Perturbation {
    pub fn new(n: usize, eps: f64, seed: u64) -> Self {
        assert!((0.0..=1e-3).contains(&eps), "perturbation size must lie in [0, 1e-3]");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut modes = Vec::with_capacity(MODES);
        for _ in 0..MODES {
            let mut k = [0.0; MAX_DIM];
            // Resample the zero wave vector: a constant field is a rotation,
            // harmless but uninformative.
            while k[..n].iter().all(|&x| x == 0.0) {
                for kk in k.iter_mut().take(n) {
                    *kk = rng.random_range(-MAX_DEGREE..=MAX_DEGREE) as f64;
                }
            }
            let mut a = [0.0; MAX_DIM];
            let mut b = [0.0; MAX_DIM];
            for i in 0..n {
                a[i] = rng.random_range(-1.0..1.0);
                b[i] = rng.random_range(-1.0..1.0);
            }
            modes.push(Mode { k, a, b });
        }
        // C¹ bound per component, then scale the worst to 1.
        let mut worst = 0.0f64;
        for i in 0..n {
            let s: f64 = modes
                .iter()
                .map(|m| {
                    let k1: f64 = m.k[..n].iter().map(|x| x.abs()).sum();
                    (m.a[i].abs() + m.b[i].abs()) * (TAU * k1).max(1.0)
                })
                .sum();
            worst = worst.max(s);
        }
        for m in &mut modes {
            for i in 0..n {
                m.a[i] /= worst;
                m.b[i] /= worst;
            }
        }
        Self { eps, seed, n, modes }
    }

    /// `V(x)`.
    pub fn field(&self, p: &TorusPoint) -> [f64; MAX_DIM] {
        let x = p.raw();
        let mut v = [0.0; MAX_DIM];
        for m in &self.modes {
            let phase: f64 = TAU * (0..self.n).map(|i| m.k[i] * x[i]).sum::<f64>();
            let (s, c) = phase.sin_cos();
            for i in 0..self.n {
                v[i] += m.a[i] * c + m.b[i] * s;
            }
        }
        v
    }

    /// `DV(x)`.
    pub fn field_jacobian(&self, p: &TorusPoint) -> DMatrix<f64> {
        let x = p.raw();
        let n = self.n;
        let mut d = DMatrix::zeros(n, n);
        for m in &self.modes {
            let phase: f64 = TAU * (0..n).map(|i| m.k[i] * x[i]).sum::<f64>();
            let (s, c) = phase.sin_cos();
            for i in 0..n {
                let g = -m.a[i] * s + m.b[i] * c;
                for j in 0..n {
                    d[(i, j)] += g * TAU * m.k[j];
                }
            }
        }
        d
    }

    /// `x + ε V(x)`. With `ε = 0` the input is returned untouched.
    pub fn apply(&self, p: &TorusPoint) -> TorusPoint {
        if self.eps == 0.0 {
            return *p;
        }
        let v = self.field(p);
        let mut c = *p.raw();
        for i in 0..self.n {
            c[i] = canonical(c[i] + self.eps * v[i]);
        }
        TorusPoint::from_canonical(c, self.n)
    }

    /// `J ← (I + ε DV(q)) J` where `q` is the point the perturbation acts on.
    pub fn push_jacobian(&self, q: &TorusPoint, jac: &mut DMatrix<f64>) {
        if self.eps == 0.0 {
            return;
        }
        let dv = self.field_jacobian(q) * self.eps;
        let upd = &dv * &*jac;
        *jac += upd;
    }

    /// Solve `z + ε V(z) = y` by fixed-point iteration; `ε Lip(V) ≤ ε ≤ 10⁻³`
    /// makes the iteration a strong contraction.
    pub fn invert(&self, y: &TorusPoint) -> TorusPoint {
        if self.eps == 0.0 {
            return *y;
        }
        let mut z = *y;
        for _ in 0..60 {
            let v = self.field(&z);
            let mut c = *y.raw();
            for i in 0..self.n {
                c[i] = canonical(c[i] - self.eps * v[i]);
            }
            let next = TorusPoint::from_canonical(c, self.n);
            let done = crate::torus::distance(&next, &z) < 1e-16;
            z = next;
            if done {
                break;
            }
        }
        z
    }

    /// Sampled `sup |V|` (at most 1 by construction).
    pub fn sup_norm_estimate(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..samples)
            .map(|_| {
                let c: Vec<f64> = (0..self.n).map(|_| rng.random()).collect();
                let v = self.field(&TorusPoint::new(&c));
                v[..self.n].iter().map(|x| x * x).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c1_bound_and_jacobian() {
        let p = Perturbation::new(5, 1e-4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = 1e-6;
        for _ in 0..200 {
            let c: Vec<f64> = (0..5).map(|_| rng.random()).collect();
            let x = TorusPoint::new(&c);
            let v = p.field(&x);
            assert!(v[..5].iter().all(|a| a.abs() <= 1.0));
            let d = p.field_jacobian(&x);
            assert!(d.amax() <= 1.0 + 1e-12);
            for j in 0..5 {
                let mut e = vec![0.0; 5];
                e[j] = h;
                let vp = p.field(&x.translate(&e));
                e[j] = -h;
                let vm = p.field(&x.translate(&e));
                for i in 0..5 {
                    let fd = (vp[i] - vm[i]) / (2.0 * h);
                    assert!((fd - d[(i, j)]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn zero_size_is_identity_and_inverse_round_trips() {
        let z = Perturbation::new(7, 0.0, 9);
        let x = TorusPoint::new(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
        assert_eq!(z.apply(&x), x);
        let p = Perturbation::new(7, 1e-3, 9);
        let y = p.apply(&x);
        assert!(crate::torus::distance(&y, &x) <= 1e-3 * 7f64.sqrt());
        assert!(crate::torus::distance(&p.invert(&y), &x) < 1e-15);
    }

    #[test]
    fn seeds_differ() {
        let a = Perturbation::new(5, 1e-4, 1);
        let b = Perturbation::new(5, 1e-4, 2);
        assert_ne!(a, b);
        assert_eq!(a, Perturbation::new(5, 1e-4, 1));
    }
}
