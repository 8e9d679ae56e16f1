//! Local surgery on one eigencoordinate.
//!
//! A [`BumpDeformation`] moves a point along a single chart direction by
//!
//! ```text
//! Δ(x) = coef · x_t · Π_f φ(scale_f · arg_f(x))
//! ```
//!
//! where `x` are eigencoordinates around a lattice point and each `arg_f` is
//! either one coordinate or the Euclidean norm of several. Composing with the
//! linear base map that multiplies `x_t` by `μ` turns `μ x_t` into
//! `μ x_t + μ Δ`, which is how every surgery of the map families is written.
//! Outside the support `Δ` is exactly zero and points are returned unchanged
//! bit for bit.

use nalgebra::DMatrix;
use smallvec::SmallVec;

use crate::bump::BumpProfile;
use crate::torus::{canonical, wrap_delta, TorusPoint, MAX_DIM};

/// One eigencoordinate as a sparse linear functional of the lifted ambient
/// displacement from a center.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCoord {
    pub idx: SmallVec<[usize; 2]>,
    pub weight: SmallVec<[f64; 2]>,
    pub center: SmallVec<[f64; 2]>,
}

impl SparseCoord {
    /// Direction `(w0, w1)` inside the 𝕋² factor starting at ambient index
    /// `off`, centered at the origin.
    pub fn toral(off: usize, dir: [f64; 2]) -> Self {
        Self {
            idx: SmallVec::from_slice(&[off, off + 1]),
            weight: SmallVec::from_slice(&dir),
            center: SmallVec::from_slice(&[0.0, 0.0]),
        }
    }

    /// The circle coordinate at ambient index `idx`, measured from `center`.
    pub fn circle(idx: usize, center: f64) -> Self {
        Self {
            idx: SmallVec::from_slice(&[idx]),
            weight: SmallVec::from_slice(&[1.0]),
            center: SmallVec::from_slice(&[center]),
        }
    }

    #[inline]
    pub fn value(&self, p: &[f64; MAX_DIM]) -> f64 {
        let mut v = 0.0;
        for j in 0..self.idx.len() {
            v += self.weight[j] * wrap_delta(p[self.idx[j]], self.center[j]);
        }
        v
    }
}

/// Argument of one bump factor.
#[derive(Clone, Debug, PartialEq)]
pub enum BumpArg {
    /// A single local coordinate (φ is even, so its sign is irrelevant).
    Coord(usize),
    /// Euclidean norm of several local coordinates.
    Norm(SmallVec<[usize; 4]>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BumpFactor {
    pub scale: f64,
    pub arg: BumpArg,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BumpDeformation {
    pub name: &'static str,
    pub coords: Vec<SparseCoord>,
    pub target: usize,
    pub factors: Vec<BumpFactor>,
    pub coef: f64,
    pub bump: BumpProfile,
}

type Local = SmallVec<[f64; 8]>;

/// Failure of the scalar root solve in [`BumpDeformation::invert`].
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("root bracket failure in {name}: g(lo) = {glo:e}, g(hi) = {ghi:e}, target {y:e}")]
pub struct BracketError {
    pub name: &'static str,
    pub glo: f64,
    pub ghi: f64,
    pub y: f64,
}

impl BumpDeformation {
    #[inline]
    pub fn local(&self, p: &TorusPoint) -> Local {
        let raw = p.raw();
        self.coords.iter().map(|c| c.value(raw)).collect()
    }

    /// Half-width of the support in the target coordinate, taken from the
    /// single-coordinate factor on it.
    pub fn target_half_width(&self) -> f64 {
        self.factors
            .iter()
            .filter_map(|f| match f.arg {
                BumpArg::Coord(i) if i == self.target => Some(self.bump.support() / f.scale),
                _ => None,
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[inline]
    fn arg_value(&self, x: &[f64], arg: &BumpArg) -> f64 {
        match arg {
            BumpArg::Coord(i) => x[*i],
            BumpArg::Norm(ids) => ids.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt(),
        }
    }

    /// `Δ(x)`; exactly zero outside the support.
    #[inline]
    pub fn delta(&self, x: &[f64]) -> f64 {
        let s = self.bump.support();
        // Cheap rejection on single-coordinate factors first.
        for f in &self.factors {
            if let BumpArg::Coord(i) = f.arg {
                if (f.scale * x[i]).abs() >= s {
                    return 0.0;
                }
            }
        }
        let mut prod = self.coef * x[self.target];
        for f in &self.factors {
            let v = self.bump.phi(f.scale * self.arg_value(x, &f.arg));
            if v == 0.0 {
                return 0.0;
            }
            prod *= v;
        }
        prod
    }

    /// `Δ(x)` and its gradient in local coordinates.
    pub fn delta_and_grad(&self, x: &[f64]) -> (f64, Local) {
        let n = x.len();
        let mut grad: Local = SmallVec::from_elem(0.0, n);
        let nf = self.factors.len();
        let mut vals: SmallVec<[f64; 4]> = SmallVec::with_capacity(nf);
        let mut ders: SmallVec<[f64; 4]> = SmallVec::with_capacity(nf);
        let mut args: SmallVec<[f64; 4]> = SmallVec::with_capacity(nf);
        for f in &self.factors {
            let a = self.arg_value(x, &f.arg);
            let (v, d) = self.bump.phi_and_prime(f.scale * a);
            vals.push(v);
            ders.push(d * f.scale);
            args.push(a);
        }
        let lin = self.coef * x[self.target];
        let all: f64 = vals.iter().product();
        if all == 0.0 && ders.iter().all(|&d| d == 0.0) {
            return (0.0, grad);
        }
        grad[self.target] += self.coef * all;
        for (fi, f) in self.factors.iter().enumerate() {
            if ders[fi] == 0.0 {
                continue;
            }
            let others: f64 = vals
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != fi)
                .map(|(_, v)| v)
                .product();
            let common = lin * others * ders[fi];
            match &f.arg {
                BumpArg::Coord(i) => grad[*i] += common,
                BumpArg::Norm(ids) => {
                    let r = args[fi];
                    if r > 0.0 {
                        for &i in ids {
                            grad[i] += common * x[i] / r;
                        }
                    }
                }
            }
        }
        (lin * all, grad)
    }

    /// Move `p` by `Δ` along the target direction.
    #[inline]
    pub fn apply(&self, p: &TorusPoint) -> TorusPoint {
        let x = self.local(p);
        let d = self.delta(&x);
        if d == 0.0 {
            return *p;
        }
        self.shift(p, d)
    }

    #[inline]
    fn shift(&self, p: &TorusPoint, d: f64) -> TorusPoint {
        let mut c = *p.raw();
        let t = &self.coords[self.target];
        for j in 0..t.idx.len() {
            c[t.idx[j]] = canonical(c[t.idx[j]] + t.weight[j] * d);
        }
        TorusPoint::from_canonical(c, p.dim())
    }

    /// Left-multiply `jac` by the ambient Jacobian of the deformation at `p`,
    /// `I + e_t ∇Δᵀ`, as a rank-one update.
    pub fn push_jacobian(&self, p: &TorusPoint, jac: &mut DMatrix<f64>) {
        let x = self.local(p);
        let (_, g) = self.delta_and_grad(&x);
        if g.iter().all(|&v| v == 0.0) {
            return;
        }
        let n = p.dim();
        // Ambient gradient of Δ.
        let mut ga = [0.0; MAX_DIM];
        for (j, c) in self.coords.iter().enumerate() {
            if g[j] != 0.0 {
                for l in 0..c.idx.len() {
                    ga[c.idx[l]] += g[j] * c.weight[l];
                }
            }
        }
        // row = gaᵀ · jac
        let cols = jac.ncols();
        let mut row = vec![0.0; cols];
        for (i, &gi) in ga.iter().enumerate().take(n) {
            if gi != 0.0 {
                for (c, r) in row.iter_mut().enumerate() {
                    *r += gi * jac[(i, c)];
                }
            }
        }
        let t = &self.coords[self.target];
        for l in 0..t.idx.len() {
            let w = t.weight[l];
            for (c, r) in row.iter().enumerate() {
                jac[(t.idx[l], c)] += w * r;
            }
        }
    }

    /// Solve `x_t + Δ(x_t, others) = y_t` for the preimage of `q`.
    ///
    /// `g(s) = s + Δ(s)` is strictly increasing and equals the identity
    /// outside `[-w, w]`, `w` the target half-width, so the root lies in that
    /// bracket whenever `|y_t| < w`. Bisection keeps the bracket while Newton
    /// steps accelerate convergence.
    pub fn invert(&self, q: &TorusPoint) -> Result<TorusPoint, BracketError> {
        let mut x = self.local(q);
        let y = x[self.target];
        let w = self.target_half_width();
        if y.abs() >= w {
            return Ok(*q);
        }
        let g = |s: f64, x: &mut Local| -> (f64, f64) {
            x[self.target] = s;
            let (d, gr) = self.delta_and_grad(x);
            (s + d - y, 1.0 + gr[self.target])
        };
        let (mut lo, mut hi) = (-w, w);
        let glo = g(lo, &mut x).0;
        let ghi = g(hi, &mut x).0;
        if glo > 0.0 || ghi < 0.0 {
            return Err(BracketError { name: self.name, glo, ghi, y });
        }
        let mut s = y.clamp(lo, hi);
        for _ in 0..200 {
            let (f, df) = g(s, &mut x);
            if f == 0.0 {
                break;
            }
            if f < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let newton = s - f / df;
            // A converged Newton step may round onto the bracket end it just
            // set; accept it rather than falling back to the midpoint.
            if df > 0.0 && (f / df).abs() <= 1e-17 * w {
                s = newton;
                break;
            }
            s = if df > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 4.0 * f64::EPSILON * w {
                break;
            }
        }
        Ok(self.shift(q, s - y))
    }
}
