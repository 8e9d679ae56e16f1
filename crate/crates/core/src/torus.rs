//! Points on flat tori, nearest lifts to the covering space, and orthonormal
//! eigencoordinate charts around lattice points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest torus dimension used by any map family (the glued map on 𝕋⁷).
pub const MAX_DIM: usize = 7;

/// Reduce a real number to its canonical representative in `[-1/2, 1/2)`.
///
/// The representative is centred on the lattice so that points just below an
/// integer keep full relative precision. Every surgery in this crate is
/// supported near a lattice point, and a value such as `-2e-4` stored as
/// `0.9998` would carry an absolute error of `1e-16` that the next toral
/// factor amplifies by its largest entry.
///
/// Rounding in `x + 1/2` can land the result one ulp outside the interval;
/// both edges are folded back so the invariant holds bit-exactly.
#[inline]
pub fn canonical(x: f64) -> f64 {
    let mut r = x - (x + 0.5).floor();
    if r < -0.5 {
        r += 1.0;
    }
    if r >= 0.5 {
        r = -0.5;
    }
    // `+ 0.0` turns a negative zero into a positive one.
    r + 0.0
}

/// Signed displacement `d ≡ x - c (mod 1)` with `d ∈ [-1/2, 1/2)`.
#[inline]
pub fn wrap_delta(x: f64, c: f64) -> f64 {
    let d = x - c;
    d - (d + 0.5).floor()
}

/// A point of 𝕋ⁿ = ℝⁿ/ℤⁿ stored by its canonical coordinates.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    coords: [f64; MAX_DIM],
    n: usize,
}

impl std::fmt::Debug for TorusPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("TorusPoint").field(&self.as_slice()).finish()
    }
}

impl TorusPoint {
    /// Build a point from arbitrary reals; every coordinate is reduced mod 1.
    ///
    /// # Panics
    /// If `coords` is empty or longer than [`MAX_DIM`].
    pub fn new(coords: &[f64]) -> Self {
        let n = coords.len();
        assert!(
            (1..=MAX_DIM).contains(&n),
            "torus dimension {n} outside 1..={MAX_DIM}"
        );
        let mut c = [0.0; MAX_DIM];
        for (dst, &src) in c.iter_mut().zip(coords) {
            *dst = canonical(src);
        }
        Self { coords: c, n }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(&vec![0.0; n])
    }

    /// Build from coordinates that are already canonical. Only the debug
    /// build checks this.
    #[inline]
    pub(crate) fn from_canonical(coords: [f64; MAX_DIM], n: usize) -> Self {
        debug_assert!(coords[..n].iter().all(|x| (-0.5..0.5).contains(x)));
        Self { coords, n }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.n]
    }

    #[inline]
    pub(crate) fn raw(&self) -> &[f64; MAX_DIM] {
        &self.coords
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.as_slice()[i]
    }

    /// Translate by a real vector and reduce.
    pub fn translate(&self, v: &[f64]) -> Self {
        assert_eq!(v.len(), self.n);
        let mut c = self.coords;
        for i in 0..self.n {
            c[i] = canonical(c[i] + v[i]);
        }
        Self { coords: c, n: self.n }
    }

    /// Per-coordinate signed displacement from `other` to `self`, each in
    /// `[-1/2, 1/2)`.
    pub fn displacement_from(&self, other: &TorusPoint) -> Vec<f64> {
        assert_eq!(self.n, other.n);
        (0..self.n)
            .map(|i| wrap_delta(self.coords[i], other.coords[i]))
            .collect()
    }
}

/// Representative `v ∈ ℝⁿ` of `p` with every component of `v - center` in
/// `[-1/2, 1/2)`.
pub fn lift_near(p: &TorusPoint, center: &TorusPoint) -> Vec<f64> {
    assert_eq!(p.dim(), center.dim());
    (0..p.dim())
        .map(|i| center.coord(i) + wrap_delta(p.coord(i), center.coord(i)))
        .collect()
}

/// Flat Euclidean distance on 𝕋ⁿ. Always at most `√n / 2`.
pub fn distance(p: &TorusPoint, q: &TorusPoint) -> f64 {
    p.displacement_from(q).iter().map(|d| d * d).sum::<f64>().sqrt()
}

/// Circle distance between two reals read mod 1.
#[inline]
pub fn circle_distance(x: f64, y: f64) -> f64 {
    wrap_delta(x, y).abs()
}

#[derive(Debug, Error, PartialEq)]
pub enum ChartError {
    #[error("chart frame is {rows}x{cols}, expected {n}x{n}")]
    Shape { rows: usize, cols: usize, n: usize },
    #[error("chart frame is not orthogonal (deviation {0:e})")]
    NotOrthogonal(f64),
    #[error("eigenvalues are not strictly decreasing in modulus")]
    Unsorted,
    #[error("box radius {0} must lie in (0, 1/4)")]
    BoxRadius(f64),
}

/// Orthonormal eigenframe of a linear torus map around a lattice fixed point.
///
/// Columns of `frame` are unit eigenvectors ordered by decreasing eigenvalue
/// modulus. Chart coordinates are `frameᵀ · (lift - center)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenChart {
    frame: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    box_radius: f64,
    center: TorusPoint,
}

impl EigenChart {
    pub fn new(
        frame: DMatrix<f64>,
        eigenvalues: Vec<f64>,
        box_radius: f64,
        center: TorusPoint,
    ) -> Result<Self, ChartError> {
        let n = center.dim();
        if frame.nrows() != n || frame.ncols() != n || eigenvalues.len() != n {
            return Err(ChartError::Shape { rows: frame.nrows(), cols: frame.ncols(), n });
        }
        let dev = (frame.transpose() * &frame - DMatrix::identity(n, n)).amax();
        if dev > 1e-12 {
            return Err(ChartError::NotOrthogonal(dev));
        }
        if eigenvalues.windows(2).any(|w| w[0].abs() <= w[1].abs()) {
            return Err(ChartError::Unsorted);
        }
        if !(box_radius > 0.0 && box_radius < 0.25) {
            return Err(ChartError::BoxRadius(box_radius));
        }
        Ok(Self { frame, eigenvalues, box_radius, center })
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn box_radius(&self) -> f64 {
        self.box_radius
    }

    pub fn center(&self) -> &TorusPoint {
        &self.center
    }

    /// Eigencoordinates of `p` without the box test.
    pub fn coords_unchecked(&self, p: &TorusPoint) -> DVector<f64> {
        let d = DVector::from_vec(p.displacement_from(&self.center));
        self.frame.tr_mul(&d)
    }

    /// Eigencoordinates of `p`, or `None` when `p` lies outside the closed
    /// box `[-r, r]ⁿ`.
    pub fn to_chart(&self, p: &TorusPoint) -> Option<DVector<f64>> {
        let c = self.coords_unchecked(p);
        c.iter().all(|x| x.abs() <= self.box_radius).then_some(c)
    }

    /// Torus point with the given eigencoordinates. The coordinates may leave
    /// the box; reduction mod 1 handles any wrap.
    pub fn from_chart(&self, c: &DVector<f64>) -> TorusPoint {
        let d = &self.frame * c;
        self.center.translate(d.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rotation_chart(r: f64) -> EigenChart {
        let a = 0.3_f64;
        let frame = DMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()]);
        EigenChart::new(frame, vec![3.0, 0.5], r, TorusPoint::zero(2)).unwrap()
    }

    #[test]
    fn canonical_folds_rounding_edge() {
        // Small negatives keep their full relative precision.
        assert_eq!(canonical(-1e-300), -1e-300);
        assert_eq!(canonical(-2e-4), -2e-4);
        assert_eq!(canonical(-0.0).to_bits(), 0.0f64.to_bits());
        assert_eq!(canonical(1.0), 0.0);
        assert_eq!(canonical(2.25), 0.25);
        assert_eq!(canonical(0.75), -0.25);
        assert_eq!(canonical(0.5), -0.5);
        assert_eq!(canonical(-0.5), -0.5);
        assert!(canonical(0.5 - 1e-17) >= -0.5);
        assert!(canonical(-0.5 - 1e-17) < 0.5);
    }

    #[test]
    fn lift_examples() {
        let p = TorusPoint::new(&[0.9]);
        let v = lift_near(&p, &TorusPoint::zero(1));
        assert!((v[0] + 0.1).abs() < 1e-15);

        let c = TorusPoint::new(&[0.2, 0.1]);
        assert!(lift_near(&c, &c).iter().zip(c.as_slice()).all(|(a, b)| a == b));

        // Nearest-integer oracle: v = p + round(c - p) componentwise.
        let p = TorusPoint::new(&[0.3, 0.8]);
        let v = lift_near(&p, &c);
        let oracle: Vec<f64> = p
            .as_slice()
            .iter()
            .zip(c.as_slice())
            .map(|(pi, ci)| pi + (ci - pi).round())
            .collect();
        assert!((v[0] - 0.3).abs() < 1e-15 && (v[1] + 0.2).abs() < 1e-15);
        assert!(v.iter().zip(&oracle).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn chart_examples() {
        let r = 1e-3;
        let chart = rotation_chart(r);
        let zero = chart.to_chart(chart.center()).unwrap();
        assert_eq!(zero.amax(), 0.0);

        let far = TorusPoint::new(&[0.01, 0.01]);
        assert!(distance(&far, chart.center()) > 2f64.sqrt() * r);
        assert!(chart.to_chart(&far).is_none());

        let e_u = chart.frame().column(0).into_owned();
        let p = chart.center().translate((e_u * (r / 2.0)).as_slice());
        let c = chart.to_chart(&p).unwrap();
        assert!((c[0] - r / 2.0).abs() < 1e-15 && c[1].abs() < 1e-15);
        assert!(distance(&chart.from_chart(&c), &p) < 1e-15);

        // Outside the box the linear extension still reduces mod 1.
        let c = DVector::from_vec(vec![2.0 * r, 0.0]);
        let q = chart.from_chart(&c);
        let e = chart.frame().column(0) * (2.0 * r);
        let expect = TorusPoint::new(e.as_slice());
        assert!(distance(&q, &expect) < 1e-15);
    }

    #[test]
    fn chart_rejects_bad_frames() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(
            EigenChart::new(bad, vec![2.0, 0.5], 0.1, TorusPoint::zero(2)),
            Err(ChartError::NotOrthogonal(_))
        ));
        let id = DMatrix::identity(2, 2);
        assert_eq!(
            EigenChart::new(id.clone(), vec![0.5, 2.0], 0.1, TorusPoint::zero(2)),
            Err(ChartError::Unsorted)
        );
        assert_eq!(
            EigenChart::new(id, vec![2.0, 0.5], 0.25, TorusPoint::zero(2)),
            Err(ChartError::BoxRadius(0.25))
        );
    }

    proptest! {
        #[test]
        fn canonical_is_idempotent(x in -1e6f64..1e6) {
            let once = canonical(x);
            prop_assert!((-0.5..0.5).contains(&once));
            prop_assert_eq!(canonical(once).to_bits(), once.to_bits());
        }

        #[test]
        fn distance_is_bounded(a in proptest::collection::vec(-3.0f64..3.0, 5),
                               b in proptest::collection::vec(-3.0f64..3.0, 5)) {
            let d = distance(&TorusPoint::new(&a), &TorusPoint::new(&b));
            prop_assert!(d <= 5f64.sqrt() / 2.0 + 1e-15);
        }

        #[test]
        fn chart_round_trip_and_isometry(u in -1.0f64..1.0, v in -1.0f64..1.0) {
            let r = 1e-4;
            let chart = rotation_chart(r);
            let c = DVector::from_vec(vec![u * r, v * r]);
            let p = chart.from_chart(&c);
            let back = chart.to_chart(&p).expect("point built inside the box");
            prop_assert!((&back - &c).amax() < 1e-12);
            prop_assert!(distance(&chart.from_chart(&back), &p) < 1e-12);
            let dist = distance(&p, chart.center());
            prop_assert!((dist - c.norm()).abs() < 1e-15);
        }
    }

    #[test]
    fn round_trip_ten_thousand_points() {
        use rand::{Rng, SeedableRng};
        let r = 9.5e-5;
        let chart = rotation_chart(r);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let c = DVector::from_fn(2, |_, _| rng.random_range(-r..=r));
            let p = chart.from_chart(&c);
            let q = chart.from_chart(&chart.to_chart(&p).unwrap());
            worst = worst.max(distance(&p, &q));
        }
        assert!(worst < 1e-12, "worst round-trip error {worst:e}");
    }
}
