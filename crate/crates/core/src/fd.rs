//! Central finite-difference Jacobians on 𝕋ⁿ.
//!
//! Output differences are wrapped to `[-1/2, 1/2)` before dividing, and the
//! divisor is the step actually realized in floating point, which can differ
//! from the nominal one by an ulp of the coordinate.

use nalgebra::DMatrix;

use crate::torus::{wrap_delta, TorusPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`, error `O(h²)`.
    TwoPoint,
    /// `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`, error `O(h⁴)`.
    FourPoint,
}

pub fn jacobian<F>(f: F, p: &TorusPoint, h: f64, stencil: Stencil) -> DMatrix<f64>
where
    F: Fn(&TorusPoint) -> TorusPoint,
{
    let n = p.dim();
    let mut jac = DMatrix::zeros(n, n);
    let shifted = |col: usize, t: f64| {
        let mut e = vec![0.0; n];
        e[col] = t;
        p.translate(&e)
    };
    for col in 0..n {
        match stencil {
            Stencil::TwoPoint => {
                let (xp, xm) = (shifted(col, h), shifted(col, -h));
                let step = wrap_delta(xp.coord(col), xm.coord(col));
                let (a, b) = (f(&xp), f(&xm));
                for row in 0..n {
                    jac[(row, col)] = wrap_delta(a.coord(row), b.coord(row)) / step;
                }
            }
            Stencil::FourPoint => {
                let pts = [shifted(col, 2.0 * h), shifted(col, h), shifted(col, -h), shifted(col, -2.0 * h)];
                let vals: Vec<TorusPoint> = pts.iter().map(&f).collect();
                for row in 0..n {
                    let c = vals[2].coord(row);
                    let d: Vec<f64> = vals.iter().map(|v| wrap_delta(v.coord(row), c)).collect();
                    jac[(row, col)] = (-d[0] + 8.0 * d[1] - 8.0 * d[2] + d[3]) / (12.0 * h);
                }
            }
        }
    }
    jac
}

/// Two-point step for a map whose narrowest feature has width `feature_length`.
///
/// Truncation error grows like `(h / feature_length)²`, so the step is tied to
/// that width and capped at `1e-8`, where rounding in the coordinates starts
/// to dominate for smooth maps.
pub fn step_for(feature_length: f64) -> f64 {
    (1e-5 * feature_length).min(1e-8)
}

/// `max |J_fd - J| / max |J|`.
pub fn relative_error(fd: &DMatrix<f64>, analytic: &DMatrix<f64>) -> f64 {
    (fd - analytic).amax() / analytic.amax()
}
