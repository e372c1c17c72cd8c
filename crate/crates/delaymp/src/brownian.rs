//! Reproducible Brownian increment ensembles.
//!
//! Each path draws from its own counter-keyed ChaCha stream, so regenerating
//! with the same seed gives bit-identical increments no matter how many
//! workers simulate the ensemble.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::real::Real;
use crate::stats::par_map_paths;

/// Gaussian increments `dB[path][i]`, one per grid interval on
/// `[-delta, T + delta]`, with variance `h`.
#[derive(Debug, Clone)]
pub struct BrownianEnsemble<F: Real> {
    grid: TimeGrid<F>,
    seed: u64,
    increments: Vec<Vec<F>>,
}

impl<F: Real> BrownianEnsemble<F> {
    pub fn sample(grid: &TimeGrid<F>, n_paths: usize, seed: u64) -> Self {
        assert!(n_paths >= 1, "need at least one path");
        let n_inc = grid.n_increments();
        let sqrt_h = grid.step().sqrt();
        let increments = par_map_paths(n_paths, |path| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64);
            (0..n_inc)
                .map(|_| F::standard_normal(&mut rng) * sqrt_h)
                .collect()
        });
        Self {
            grid: grid.clone(),
            seed,
            increments,
        }
    }

    pub fn grid(&self) -> &TimeGrid<F> {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_paths(&self) -> usize {
        self.increments.len()
    }

    /// Increment over `[t_i, t_{i+1})` for signed node index `i`.
    #[inline]
    pub fn db(&self, path: usize, index: isize) -> F {
        self.increments[path][self.grid.slot(index)]
    }

    /// Raw increments for one path, slot 0 being the interval starting at
    /// `-delta`.
    pub fn path(&self, path: usize) -> &[F] {
        &self.increments[path]
    }

    /// Checks the ensemble covers the given grid.
    pub fn check_grid(&self, grid: &TimeGrid<F>) -> Result<()> {
        if !self.grid.same_as(grid) {
            return Err(Error::EnsembleMismatch {
                expected: grid.n_increments(),
                got: self.grid.n_increments(),
            });
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn set_path_for_test(&mut self, path: usize, row: Vec<F>) {
        assert_eq!(row.len(), self.increments[path].len());
        self.increments[path] = row;
    }

    /// Brownian value `B(t_i) - B(0)` accumulated from increments.
    pub fn b_at(&self, path: usize, index: isize) -> F {
        let mut acc = F::zero();
        if index >= 0 {
            for i in 0..index {
                acc = acc + self.db(path, i);
            }
        } else {
            for i in index..0 {
                acc = acc - self.db(path, i);
            }
        }
        acc
    }
}
