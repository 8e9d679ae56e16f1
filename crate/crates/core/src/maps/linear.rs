//! Integer 2×2 toral automorphisms: powers of `[[2,1],[1,1]]`, their
//! eigenframes, and exact fixed-point enumeration.

use serde::{Deserialize, Serialize};

use crate::torus::canonical;

pub type IntMat2 = [[i64; 2]; 2];

pub const CAT: IntMat2 = [[2, 1], [1, 1]];

/// `λ₀ = (3 + √5) / 2`, the expanding eigenvalue of the cat map.
pub fn lambda0() -> f64 {
    (3.0 + 5f64.sqrt()) / 2.0
}

pub fn mat_mul(a: &IntMat2, b: &IntMat2) -> IntMat2 {
    let mut c = [[0i64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0]
                .checked_mul(b[0][j])
                .and_then(|x| a[i][1].checked_mul(b[1][j]).and_then(|y| x.checked_add(y)))
                .expect("integer overflow in matrix power");
        }
    }
    c
}

pub fn mat_pow(a: &IntMat2, n: u32) -> IntMat2 {
    (0..n).fold([[1, 0], [0, 1]], |acc, _| mat_mul(&acc, a))
}

pub fn det(a: &IntMat2) -> i64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

pub fn trace(a: &IntMat2) -> i64 {
    a[0][0] + a[1][1]
}

/// Adjugate; equals the inverse when `det = 1`.
pub fn adjugate(a: &IntMat2) -> IntMat2 {
    [[a[1][1], -a[0][1]], [-a[1][0], a[0][0]]]
}

/// `M p mod 1` for a point of 𝕋² given by two canonical coordinates.
///
/// Each product `m · p` is split exactly into a float and its rounding error
/// with a fused multiply-add, and only the fractional parts are summed, so
/// the result is within about one ulp of the exact residue however large the
/// matrix entries are. Plain evaluation would lose `log₂ |m|` bits.
#[inline]
pub fn apply_mod1(m: &IntMat2, p0: f64, p1: f64) -> (f64, f64) {
    (row_mod1(m[0][0], m[0][1], p0, p1), row_mod1(m[1][0], m[1][1], p0, p1))
}

#[inline]
fn row_mod1(a: i64, b: i64, p0: f64, p1: f64) -> f64 {
    let (fa, la) = frac_product(a as f64, p0);
    let (fb, lb) = frac_product(b as f64, p1);
    // Error-free sum of the two fractional parts.
    let s = fa + fb;
    let bb = s - fa;
    let e = (fa - (s - bb)) + (fb - bb);
    let f = s - s.round();
    canonical(f + (e + la + lb))
}

/// `(hi - round(hi), lo)` with `hi + lo = m · p` exactly.
#[inline]
fn frac_product(m: f64, p: f64) -> (f64, f64) {
    let hi = m * p;
    let lo = m.mul_add(p, -hi);
    (hi - hi.round(), lo)
}

/// `A₀ᴺ` with its eigendata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnosovPower {
    pub power: u32,
    pub matrix: IntMat2,
    pub inverse: IntMat2,
    /// `λ = λ₀ᴺ`.
    pub lambda: f64,
    /// Unit eigenvector for `λ`, with positive entries.
    pub unstable: [f64; 2],
    /// Unit eigenvector for `λ⁻¹`, equal to `unstable` rotated by +90°.
    pub stable: [f64; 2],
}

pub fn anosov_power(n: u32) -> AnosovPower {
    assert!(n >= 1, "power must be at least 1");
    let matrix = mat_pow(&CAT, n);
    let l0 = lambda0();
    let norm = (1.0 + (l0 - 1.0) * (l0 - 1.0)).sqrt();
    let unstable = [(l0 - 1.0) / norm, 1.0 / norm];
    let stable = [-unstable[1], unstable[0]];
    AnosovPower {
        power: n,
        matrix,
        inverse: adjugate(&matrix),
        lambda: l0.powi(n as i32),
        unstable,
        stable,
    }
}

impl AnosovPower {
    pub fn eigenvalues(&self) -> (f64, f64) {
        (self.lambda, 1.0 / self.lambda)
    }

    /// `|det(M - I)|`, the number of fixed points on 𝕋².
    pub fn fixed_point_count(&self) -> u64 {
        let m = self.matrix;
        det(&[[m[0][0] - 1, m[0][1]], [m[1][0], m[1][1] - 1]]).unsigned_abs()
    }

    /// All fixed points, as exact rationals `(num0, num1) / den`.
    ///
    /// `x` is fixed iff `(M - I) x ∈ ℤ²`, so the fixed points are
    /// `adj(M - I) z / det(M - I)` reduced mod 1 for integer `z`. Sweeping
    /// `z` over a `D × D` box reaches every residue.
    pub fn fixed_points(&self) -> Vec<([i64; 2], i64)> {
        let m = self.matrix;
        let b = [[m[0][0] - 1, m[0][1]], [m[1][0], m[1][1] - 1]];
        let d = det(&b);
        let dd = d.abs();
        assert!(dd > 0, "M - I is singular");
        assert!(dd <= 10_000, "too many fixed points to enumerate");
        let adj = adjugate(&b);
        let sign = d.signum();
        let mut pts: Vec<[i64; 2]> = Vec::new();
        for z0 in 0..dd {
            for z1 in 0..dd {
                let x0 = (sign * (adj[0][0] * z0 + adj[0][1] * z1)).rem_euclid(dd);
                let x1 = (sign * (adj[1][0] * z0 + adj[1][1] * z1)).rem_euclid(dd);
                pts.push([x0, x1]);
            }
        }
        pts.sort_unstable();
        pts.dedup();
        pts.into_iter().map(|p| (p, dd)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_powers() {
        assert_eq!(mat_pow(&CAT, 4), [[34, 21], [21, 13]]);
        assert_eq!(mat_pow(&CAT, 8), [[1597, 987], [987, 610]]);
        assert_eq!(mat_pow(&CAT, 12), [[75025, 46368], [46368, 28657]]);
        let a = anosov_power(1);
        let (l, li) = a.eigenvalues();
        assert!((l - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((li - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn trace_recurrence() {
        // t_n = λ₀ⁿ + λ₀⁻ⁿ obeys t_{n+1} = 3 t_n - t_{n-1}, t_0 = 2, t_1 = 3.
        let (mut prev, mut cur) = (2i64, 3i64);
        for n in 1..=12u32 {
            let a = anosov_power(n);
            assert_eq!(trace(&a.matrix), cur);
            assert_eq!((a.lambda + 1.0 / a.lambda).round() as i64, cur);
            assert_eq!(det(&a.matrix), 1);
            assert_eq!(mat_mul(&a.matrix, &a.inverse), [[1, 0], [0, 1]]);
            (prev, cur) = (cur, 3 * cur - prev);
        }
        assert!((anosov_power(4).lambda - 46.978_713_763_747_79).abs() < 1e-11);
    }

    #[test]
    fn eigenvectors() {
        for n in [1, 4, 8] {
            let a = anosov_power(n);
            let m = a.matrix.map(|r| r.map(|x| x as f64));
            for (v, ev) in [(a.unstable, a.lambda), (a.stable, 1.0 / a.lambda)] {
                let mv = [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]];
                let scale = m[0][0].abs().max(1.0);
                assert!((mv[0] - ev * v[0]).abs() < 1e-13 * scale);
                assert!((mv[1] - ev * v[1]).abs() < 1e-13 * scale);
            }
            let dot = a.unstable[0] * a.stable[0] + a.unstable[1] * a.stable[1];
            assert!(dot.abs() < 1e-16);
        }
    }

    #[test]
    fn fixed_point_counts() {
        let a4 = anosov_power(4);
        assert_eq!(a4.fixed_point_count(), 45);
        // λ⁴ + λ⁻⁴ − 2 with λ = λ₀ … i.e. trace − 2 for det 1.
        assert_eq!(trace(&a4.matrix) - 2, 45);
        let pts = a4.fixed_points();
        assert_eq!(pts.len(), 45);
        for (p, d) in &pts {
            let m = a4.matrix;
            let y0 = m[0][0] * p[0] + m[0][1] * p[1];
            let y1 = m[1][0] * p[0] + m[1][1] * p[1];
            assert_eq!(y0.rem_euclid(*d), p[0]);
            assert_eq!(y1.rem_euclid(*d), p[1]);
        }
        assert_eq!(anosov_power(1).fixed_point_count(), 1);
        assert_eq!(anosov_power(1).fixed_points(), vec![([0, 0], 1)]);
    }

    #[test]
    fn residue_is_exact_to_an_ulp() {
        // Dyadic inputs k / 2⁵³ make the exact residue an integer computation.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let m = anosov_power(12).matrix;
        let one = 1i128 << 53;
        for _ in 0..10_000 {
            let k0: i128 = rng.random_range(0..one);
            let k1: i128 = rng.random_range(0..one);
            let (p0, p1) = (k0 as f64 / one as f64, k1 as f64 / one as f64);
            let (q0, _) = apply_mod1(&m, p0, p1);
            let exact = (m[0][0] as i128 * k0 + m[0][1] as i128 * k1).rem_euclid(one);
            let d = crate::torus::wrap_delta(q0, exact as f64 / one as f64).abs();
            assert!(d <= f64::EPSILON, "{d:e}");
        }
    }
}
