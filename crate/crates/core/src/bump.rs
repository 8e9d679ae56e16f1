//! The C∞ truncation function φ, its exact derivative, the auxiliary
//! functions `H` and `R`, and the numeric bound `C` on them.
//!
//! φ equals 1 on `[-δ₀/4, δ₀/4]`, vanishes outside `(-δ₀/2, δ₀/2)` and on the
//! transition interval is `1 - s(t)` for the smooth step
//! `s(t) = g(t) / (g(t) + g(1-t))`, `g(t) = exp(-1/t)`, where `t` rescales
//! `(δ₀/4, δ₀/2)` onto `(0, 1)`.
//!
//! Everything is evaluated on `|x|`, so evenness holds bit-for-bit, and the
//! plateau and the outside of the support return literal `1.0` and `0.0`.

use serde::{Deserialize, Serialize};

/// Safety factor applied to the grid supremum when computing `C`.
pub const C_SAFETY: f64 = 1.1;
/// Default grid sides: `1000²` points for `H`, `100³` for `R`.
pub const H_GRID_SIDE: usize = 1000;
pub const R_GRID_SIDE: usize = 100;

/// `(1 - s(t), s'(t))` for `t ∈ (0, 1)`.
///
/// With `w = 1/t - 1/(1-t)` we have `1 - s = 1/(1 + e^{-w})` and
/// `s(1-s) = e^{-|w|} / (1 + e^{-|w|})²`, both free of overflow.
#[inline]
fn step(t: f64) -> (f64, f64) {
    let w = 1.0 / t - 1.0 / (1.0 - t);
    let one_minus_s = 1.0 / (1.0 + (-w).exp());
    let e = (-w.abs()).exp();
    let s_times_comp = e / ((1.0 + e) * (1.0 + e));
    let dw = 1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t));
    (one_minus_s, s_times_comp * dw)
}

/// The truncation function with its scale `δ₀` and the derived constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpProfile {
    pub delta0: f64,
    /// `sup |p · φ'(p)|`, computed once on a fine grid.
    pub c1: f64,
    /// Bound on `|H|` and `|R|` (both variants of `R`), at least 1.
    pub big_c: f64,
    /// Selects `R(x,y,z) = φ(x)φ(y)(φ(z) + zφ'(z))` instead of the default
    /// `φ(x)φ(y)(φ(z) + zφ(z))`.
    pub r_uses_phi_prime: bool,
}

impl BumpProfile {
    pub fn new(delta0: f64) -> Self {
        Self::with_grid(delta0, H_GRID_SIDE, R_GRID_SIDE)
    }

    pub fn with_grid(delta0: f64, h_side: usize, r_side: usize) -> Self {
        assert!(delta0 > 0.0 && delta0.is_finite(), "delta0 must be positive");
        let mut b = Self { delta0, c1: 0.0, big_c: 1.0, r_uses_phi_prime: false };
        b.c1 = b.sup_p_phi_prime(100_000);
        b.big_c = b.compute_c(h_side, r_side);
        b
    }

    pub fn with_r_variant(mut self, r_uses_phi_prime: bool) -> Self {
        self.r_uses_phi_prime = r_uses_phi_prime;
        self
    }

    /// Half-width of the plateau, `δ₀/4`.
    #[inline]
    pub fn plateau(&self) -> f64 {
        0.25 * self.delta0
    }

    /// Half-width of the support, `δ₀/2`.
    #[inline]
    pub fn support(&self) -> f64 {
        0.5 * self.delta0
    }

    #[inline]
    pub fn phi(&self, x: f64) -> f64 {
        let a = x.abs();
        let q = self.plateau();
        if a <= q {
            1.0
        } else if a >= 2.0 * q {
            0.0
        } else {
            step((a - q) / q).0
        }
    }

    #[inline]
    pub fn phi_prime(&self, x: f64) -> f64 {
        let a = x.abs();
        let q = self.plateau();
        if a <= q || a >= 2.0 * q {
            0.0
        } else {
            -step((a - q) / q).1 / q * x.signum()
        }
    }

    /// `(φ(x), φ'(x))` in one pass.
    #[inline]
    pub fn phi_and_prime(&self, x: f64) -> (f64, f64) {
        let a = x.abs();
        let q = self.plateau();
        if a <= q {
            (1.0, 0.0)
        } else if a >= 2.0 * q {
            (0.0, 0.0)
        } else {
            let (v, ds) = step((a - q) / q);
            (v, -ds / q * x.signum())
        }
    }

    pub fn h_fn(&self, x: f64, y: f64) -> f64 {
        self.phi(x) * (self.phi(y) + y * self.phi_prime(y))
    }

    pub fn r_fn(&self, x: f64, y: f64, z: f64) -> f64 {
        if self.r_uses_phi_prime {
            r_with_prime(self, x, y, z)
        } else {
            r_printed(self, x, y, z)
        }
    }

    fn sup_p_phi_prime(&self, n: usize) -> f64 {
        let (q, s) = (self.plateau(), self.support());
        (0..=n)
            .map(|i| {
                let p = q + (s - q) * i as f64 / n as f64;
                (p * self.phi_prime(p)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Grid supremum of `|H|` on the square `[-δ₀/2, δ₀/2]²` (outside it `H`
    /// vanishes) using `side²` points.
    pub fn grid_sup_h(&self, side: usize) -> f64 {
        let g = grid(self.support(), side);
        let phis: Vec<f64> = g.iter().map(|&x| self.phi(x)).collect();
        let inner: Vec<f64> = g.iter().map(|&y| self.phi(y) + y * self.phi_prime(y)).collect();
        let mut sup = 0.0f64;
        for &a in &phis {
            for &b in &inner {
                sup = sup.max((a * b).abs());
            }
        }
        sup
    }

    /// Grid supremum of `|R|` over both variants on `[-δ₀/2, δ₀/2]³`.
    pub fn grid_sup_r(&self, side: usize) -> f64 {
        let g = grid(self.support(), side);
        let mut sup = 0.0f64;
        for &x in &g {
            for &y in &g {
                for &z in &g {
                    sup = sup
                        .max(r_printed(self, x, y, z).abs())
                        .max(r_with_prime(self, x, y, z).abs());
                }
            }
        }
        sup
    }

    /// `max(1, grid sup |H|, grid sup |R|)` inflated by [`C_SAFETY`].
    pub fn compute_c(&self, h_side: usize, r_side: usize) -> f64 {
        C_SAFETY * 1f64.max(self.grid_sup_h(h_side)).max(self.grid_sup_r(r_side))
    }
}

fn r_printed(b: &BumpProfile, x: f64, y: f64, z: f64) -> f64 {
    let pz = b.phi(z);
    b.phi(x) * b.phi(y) * (pz + z * pz)
}

fn r_with_prime(b: &BumpProfile, x: f64, y: f64, z: f64) -> f64 {
    b.phi(x) * b.phi(y) * (b.phi(z) + z * b.phi_prime(z))
}

fn grid(half: f64, side: usize) -> Vec<f64> {
    assert!(side >= 2);
    (0..side)
        .map(|i| -half + 2.0 * half * i as f64 / (side - 1) as f64)
        .collect()
}
