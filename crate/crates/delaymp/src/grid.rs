//! Uniform time grid aligned with the delay.
//!
//! The step is forced to be `delta / m`, so the delay is an exact shift by
//! `m` indices and the anticipated terms at `t + delta` never interpolate.

use crate::error::{Error, Result};
use crate::real::Real;

/// Uniform grid on `[-delta, T + delta]` with node times `t_i = i * h` for
/// signed indices `i` in `[-m, n_steps + m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<F: Real> {
    horizon: F,
    delta: F,
    steps_per_delay: usize,
    step: F,
    n_steps: usize,
}

impl<F: Real> TimeGrid<F> {
    /// Builds a grid with `h = delta / m`. Fails when `T` is not an integer
    /// multiple of `h` (relative tolerance 1e-9) or the delay is not positive.
    pub fn new(horizon: F, delta: F, steps_per_delay: usize) -> Result<Self> {
        if delta <= F::zero() || !delta.is_finite() {
            return Err(Error::NonPositiveDelay(delta.as_f64()));
        }
        assert!(steps_per_delay >= 1, "steps_per_delay must be at least 1");
        assert!(
            horizon > delta,
            "horizon must exceed the delay ({} <= {})",
            horizon,
            delta
        );
        let step = delta / F::from_index(steps_per_delay);
        let ratio = (horizon / step).as_f64();
        let n_steps = ratio.round() as usize;
        if (ratio - n_steps as f64).abs() > 1e-9 * ratio.abs().max(1.0) {
            return Err(Error::NonDivisibleHorizon {
                horizon: horizon.as_f64(),
                step: step.as_f64(),
            });
        }
        Ok(Self {
            horizon,
            delta,
            steps_per_delay,
            step,
            n_steps,
        })
    }

    pub fn horizon(&self) -> F {
        self.horizon
    }

    pub fn delta(&self) -> F {
        self.delta
    }

    /// Step `h = delta / m`.
    pub fn step(&self) -> F {
        self.step
    }

    /// Number of indices corresponding to one delay (`m`).
    pub fn delay_shift(&self) -> usize {
        self.steps_per_delay
    }

    /// Number of steps on `[0, T]`.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Node time for a signed index (index 0 is time 0).
    pub fn time(&self, index: isize) -> F {
        let i = F::from_f64(index as f64).expect("index fits");
        i * self.step
    }

    /// Signed index of a node time; the time must lie on the grid.
    pub fn index_of(&self, t: F) -> isize {
        let ratio = (t / self.step).as_f64();
        let i = ratio.round();
        debug_assert!(
            (ratio - i).abs() <= 1e-9 * ratio.abs().max(1.0),
            "time {} is not a grid node",
            t
        );
        i as isize
    }

    /// Storage slot for a signed index in arrays starting at `-delta`.
    #[inline]
    pub fn slot(&self, index: isize) -> usize {
        debug_assert!(index >= -(self.steps_per_delay as isize));
        (index + self.steps_per_delay as isize) as usize
    }

    /// Node count on `[-delta, T]` (state and control storage).
    pub fn n_state_nodes(&self) -> usize {
        self.n_steps + self.steps_per_delay + 1
    }

    /// Node count on `[0, T + delta]` (backward-solution storage).
    pub fn n_backward_nodes(&self) -> usize {
        self.n_steps + self.steps_per_delay + 1
    }

    /// Number of Brownian increments per path, covering `[-delta, T + delta]`.
    pub fn n_increments(&self) -> usize {
        self.n_steps + 2 * self.steps_per_delay
    }

    /// True when both grids are the same discretization.
    pub fn same_as(&self, other: &Self) -> bool {
        self == other
    }
}
