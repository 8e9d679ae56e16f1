//! Deterministic point samplers shared by the checks.
//!
//! Large sample loops are split into fixed-size chunks, each with its own
//! ChaCha stream derived from the run seed and the chunk index, so results do
//! not depend on how rayon schedules the chunks.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::maps::Model;
use crate::torus::TorusPoint;

pub const CHUNK: usize = 4096;

/// Independent stream for chunk `i` of a run seeded with `seed`.
pub fn chunk_rng(seed: u64, i: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(i);
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stratum {
    /// Lebesgue-uniform on the torus.
    Uniform,
    /// Uniform in the chart box `[-δ₀, δ₀]ⁿ`.
    Box,
    /// Inside the support of one of the surgeries.
    Support,
}

impl Stratum {
    /// Round-robin assignment used by the stratified checks.
    pub fn of_index(i: usize) -> Self {
        match i % 3 {
            0 => Stratum::Uniform,
            1 => Stratum::Box,
            _ => Stratum::Support,
        }
    }
}

pub fn uniform<R: Rng>(n: usize, rng: &mut R) -> TorusPoint {
    let c: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    TorusPoint::new(&c)
}

pub fn in_box<R: Rng>(model: &Model, rng: &mut R) -> TorusPoint {
    let r = model.chart.box_radius();
    let c = DVector::from_fn(model.dim(), |_, _| rng.random_range(-r..=r));
    model.chart.from_chart(&c)
}

pub fn sample<R: Rng>(model: &Model, stratum: Stratum, i: usize, rng: &mut R) -> TorusPoint {
    match stratum {
        Stratum::Uniform => uniform(model.dim(), rng),
        Stratum::Box => in_box(model, rng),
        Stratum::Support => {
            let nd = model.deformations().len();
            if nd == 0 {
                in_box(model, rng)
            } else {
                model.sample_in_support(i % nd, rng)
            }
        }
    }
}
