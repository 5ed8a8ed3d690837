//! Initial data sampled at cell centers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{CellField, GridSpec};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition<T> {
    /// `0.6 + 0.15 cos(3 pi x / 32) cos(3 pi y / 32)`.
    Cosine,
    /// `mean + r_ij` with `r_ij` uniform in `[-amplitude, amplitude]`, drawn
    /// from a ChaCha8 stream seeded with `seed` in row-major cell order.
    Random {
        seed: u64,
        amplitude: T,
        mean: T,
    },
    Constant(T),
}

impl<T: Real> InitialCondition<T> {
    /// The seeded random data `0.6 + U[-0.15, 0.15]`.
    pub fn random(seed: u64) -> Self {
        InitialCondition::Random { seed, amplitude: T::lit(0.15), mean: T::lit(0.6) }
    }

    pub fn sample(&self, grid: GridSpec<T>) -> Result<CellField<T>> {
        match *self {
            InitialCondition::Cosine => {
                let k = T::lit(3.0) * T::PI() / T::lit(32.0);
                Ok(CellField::sample(grid, |x, y| T::lit(0.6) + T::lit(0.15) * (k * x).cos() * (k * y).cos()))
            }
            InitialCondition::Random { seed, amplitude, mean } => {
                if !(amplitude >= T::zero()) {
                    return Err(Error::InvalidParameter { name: "amplitude", value: amplitude.as_f64() });
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = amplitude.as_f64();
                Ok(CellField::from_fn(grid, |_, _| {
                    let r: f64 = if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 };
                    mean + T::lit(r)
                }))
            }
            InitialCondition::Constant(c) => Ok(CellField::constant(grid, c)),
        }
    }
}
