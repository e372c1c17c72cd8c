//! Deterministic cross-path reductions.
//!
//! Per-path work may run on any number of rayon workers; every reduction
//! walks the per-path results in fixed index order with compensated
//! summation, so outputs do not depend on the worker count.

use rayon::prelude::*;

use crate::real::Real;

/// Kahan compensated accumulator.
#[derive(Debug, Clone, Copy)]
pub struct KahanSum<F: Real> {
    sum: F,
    comp: F,
}

impl<F: Real> Default for KahanSum<F> {
    fn default() -> Self {
        Self {
            sum: F::zero(),
            comp: F::zero(),
        }
    }
}

impl<F: Real> KahanSum<F> {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: F) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> F {
        self.sum
    }
}

/// Compensated sum in slice order.
pub fn sum<F: Real>(xs: &[F]) -> F {
    let mut acc = KahanSum::new();
    for &x in xs {
        acc.add(x);
    }
    acc.value()
}

pub fn mean<F: Real>(xs: &[F]) -> F {
    sum(xs) / F::from_index(xs.len())
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr<F: Real>(xs: &[F]) -> (F, F) {
    let n = F::from_index(xs.len());
    let m = mean(xs);
    let mut acc = KahanSum::new();
    for &x in xs {
        let d = x - m;
        acc.add(d * d);
    }
    let var = acc.value() / (n - F::one());
    (m, (var / n).sqrt())
}

/// Maps a closure over path indices in parallel, returning results in path
/// order regardless of scheduling.
pub fn par_map_paths<T: Send, G>(n_paths: usize, f: G) -> Vec<T>
where
    G: Fn(usize) -> T + Sync + Send,
{
    (0..n_paths).into_par_iter().map(f).collect()
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ols_slope<F: Real>(x: &[F], y: &[F]) -> F {
    assert_eq!(x.len(), y.len());
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = KahanSum::new();
    let mut sxx = KahanSum::new();
    for (&xi, &yi) in x.iter().zip(y) {
        sxy.add((xi - mx) * (yi - my));
        sxx.add((xi - mx) * (xi - mx));
    }
    sxy.value() / sxx.value()
}
