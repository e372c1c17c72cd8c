//! Controlled SDDE simulation by explicit Euler-Maruyama.
//!
//! The state equation is
//!
//! ```text
//! dX(t) = b(t, X(t), X(t-d), v(t), v(t-d)) dt + sigma(t, X(t), X(t-d), v(t), v(t-d)) dB(t)
//! X(t) = phi(t), v(t) = eta(t) on [-d, 0]
//! ```
//!
//! with coefficients evaluated at the left endpoint of each cell. The delayed
//! arguments are exact index shifts by `m = delta / h`.

use std::sync::Arc;

use crate::brownian::BrownianEnsemble;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::real::Real;
use crate::stats::{self, par_map_paths};

/// Coefficient signature `(t, x, x_delta, v, v_delta) -> value`.
pub type Coeff<F> = Arc<dyn Fn(F, F, F, F, F) -> F + Send + Sync>;
/// Terminal-cost signature `x -> value`.
pub type TerminalFn<F> = Arc<dyn Fn(F) -> F + Send + Sync>;

/// Wraps a closure as a coefficient function.
pub fn coeff<F: Real>(f: impl Fn(F, F, F, F, F) -> F + Send + Sync + 'static) -> Coeff<F> {
    Arc::new(f)
}

/// Wraps a closure as a terminal map.
pub fn terminal<F: Real>(f: impl Fn(F) -> F + Send + Sync + 'static) -> TerminalFn<F> {
    Arc::new(f)
}

fn zero_coeff<F: Real>() -> Coeff<F> {
    coeff(|_, _, _, _, _| F::zero())
}

/// Control-set descriptor: membership predicate plus representative points
/// used by scans over the (possibly unbounded, nonconvex) set.
#[derive(Clone)]
pub struct ControlSet<F: Real> {
    contains: Arc<dyn Fn(F) -> bool + Send + Sync>,
    representatives: Vec<F>,
}

impl<F: Real> ControlSet<F> {
    pub fn new(
        contains: impl Fn(F) -> bool + Send + Sync + 'static,
        representatives: Vec<F>,
    ) -> Self {
        Self {
            contains: Arc::new(contains),
            representatives,
        }
    }

    /// The whole real line.
    pub fn all() -> Self {
        Self::new(|_| true, vec![F::zero()])
    }

    /// Two rays `(-inf, -a] U [a, inf)`; the boundary points are the
    /// representatives.
    pub fn two_rays(a: F) -> Self {
        Self::new(move |v: F| v.abs() >= a, vec![-a, a])
    }

    /// A finite set of admissible values.
    pub fn finite(values: Vec<F>) -> Self {
        let vals = values.clone();
        Self::new(
            move |v: F| vals.iter().any(|&u| u == v),
            values,
        )
    }

    pub fn contains(&self, v: F) -> bool {
        (self.contains)(v)
    }

    /// Boundary/representative points, e.g. the ray endpoints of a union of
    /// rays; included in maximum-condition scans.
    pub fn representatives(&self) -> &[F] {
        &self.representatives
    }
}

impl<F: Real> std::fmt::Debug for ControlSet<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlSet")
            .field("representatives", &self.representatives)
            .finish()
    }
}

/// Coefficients of a delayed control problem and their partials in
/// `(x, x_delta)`. Partials default to zero; `validate_partials` checks
/// whatever is supplied against central differences.
#[derive(Clone)]
pub struct DelayProblem<F: Real> {
    pub b: Coeff<F>,
    pub sigma: Coeff<F>,
    pub l: Coeff<F>,
    pub h_term: TerminalFn<F>,

    pub b_x: Coeff<F>,
    pub b_xd: Coeff<F>,
    pub sigma_x: Coeff<F>,
    pub sigma_xd: Coeff<F>,
    pub l_x: Coeff<F>,
    pub l_xd: Coeff<F>,
    pub h_x: TerminalFn<F>,

    pub b_xx: Coeff<F>,
    pub b_xdxd: Coeff<F>,
    pub b_xxd: Coeff<F>,
    pub sigma_xx: Coeff<F>,
    pub sigma_xdxd: Coeff<F>,
    pub sigma_xxd: Coeff<F>,
    pub l_xx: Coeff<F>,
    pub l_xdxd: Coeff<F>,
    pub l_xxd: Coeff<F>,
    pub h_xx: TerminalFn<F>,

    pub control_set: ControlSet<F>,
}

impl<F: Real> DelayProblem<F> {
    /// Problem with the given data and all partials zero.
    pub fn new(
        b: Coeff<F>,
        sigma: Coeff<F>,
        l: Coeff<F>,
        h_term: TerminalFn<F>,
        control_set: ControlSet<F>,
    ) -> Self {
        Self {
            b,
            sigma,
            l,
            h_term,
            b_x: zero_coeff(),
            b_xd: zero_coeff(),
            sigma_x: zero_coeff(),
            sigma_xd: zero_coeff(),
            l_x: zero_coeff(),
            l_xd: zero_coeff(),
            h_x: terminal(|_| F::zero()),
            b_xx: zero_coeff(),
            b_xdxd: zero_coeff(),
            b_xxd: zero_coeff(),
            sigma_xx: zero_coeff(),
            sigma_xdxd: zero_coeff(),
            sigma_xxd: zero_coeff(),
            l_xx: zero_coeff(),
            l_xdxd: zero_coeff(),
            l_xxd: zero_coeff(),
            h_xx: terminal(|_| F::zero()),
            control_set,
        }
    }

    /// Checks every supplied first partial against central differences of its
    /// parent at the given sample points. Relative tolerance 1e-4 at step
    /// 1e-5, suitable for smooth coefficients.
    pub fn validate_partials(&self, points: &[(F, F, F, F, F)]) -> Result<()> {
        let h = F::of(1e-5);
        let tol = F::of(1e-4);
        let check = |name: &str, got: F, expected: F| -> Result<()> {
            let scale = expected.abs().max(F::one());
            if (got - expected).abs() > tol * scale {
                return Err(Error::Config(format!(
                    "partial {name} disagrees with central difference: {got} vs {expected}"
                )));
            }
            Ok(())
        };
        for &(t, x, xd, v, vd) in points {
            let fd_x = |f: &Coeff<F>| ((f)(t, x + h, xd, v, vd) - (f)(t, x - h, xd, v, vd))
                / (F::of(2.0) * h);
            let fd_xd = |f: &Coeff<F>| ((f)(t, x, xd + h, v, vd) - (f)(t, x, xd - h, v, vd))
                / (F::of(2.0) * h);
            check("b_x", (self.b_x)(t, x, xd, v, vd), fd_x(&self.b))?;
            check("b_xd", (self.b_xd)(t, x, xd, v, vd), fd_xd(&self.b))?;
            check("sigma_x", (self.sigma_x)(t, x, xd, v, vd), fd_x(&self.sigma))?;
            check("sigma_xd", (self.sigma_xd)(t, x, xd, v, vd), fd_xd(&self.sigma))?;
            check("l_x", (self.l_x)(t, x, xd, v, vd), fd_x(&self.l))?;
            check("l_xd", (self.l_xd)(t, x, xd, v, vd), fd_xd(&self.l))?;
            check("b_xx", (self.b_xx)(t, x, xd, v, vd), fd_x(&self.b_x))?;
            check("b_xdxd", (self.b_xdxd)(t, x, xd, v, vd), fd_xd(&self.b_xd))?;
            check("b_xxd", (self.b_xxd)(t, x, xd, v, vd), fd_xd(&self.b_x))?;
            check("sigma_xx", (self.sigma_xx)(t, x, xd, v, vd), fd_x(&self.sigma_x))?;
            check(
                "sigma_xdxd",
                (self.sigma_xdxd)(t, x, xd, v, vd),
                fd_xd(&self.sigma_xd),
            )?;
            check(
                "sigma_xxd",
                (self.sigma_xxd)(t, x, xd, v, vd),
                fd_xd(&self.sigma_x),
            )?;
            check("l_xx", (self.l_xx)(t, x, xd, v, vd), fd_x(&self.l_x))?;
            check("l_xdxd", (self.l_xdxd)(t, x, xd, v, vd), fd_xd(&self.l_xd))?;
            check("l_xxd", (self.l_xxd)(t, x, xd, v, vd), fd_xd(&self.l_x))?;
            let hx_fd = ((self.h_term)(x + h) - (self.h_term)(x - h)) / (F::of(2.0) * h);
            check("h_x", (self.h_x)(x), hx_fd)?;
            let hxx_fd = ((self.h_x)(x + h) - (self.h_x)(x - h)) / (F::of(2.0) * h);
            check("h_xx", (self.h_xx)(x), hxx_fd)?;
        }
        Ok(())
    }
}

/// Initial data on `[-delta, 0]`: state segment `phi` (m+1 node values) and
/// control segment `eta` (m node values, the one at 0 belongs to the control).
#[derive(Debug, Clone)]
pub struct InitialData<F: Real> {
    pub phi: Vec<F>,
    pub eta: Vec<F>,
}

impl<F: Real> InitialData<F> {
    pub fn from_fns(
        grid: &TimeGrid<F>,
        phi: impl Fn(F) -> F,
        eta: impl Fn(F) -> F,
    ) -> Self {
        let m = grid.delay_shift() as isize;
        let phi = (-m..=0).map(|i| phi(grid.time(i))).collect();
        let eta = (-m..0).map(|i| eta(grid.time(i))).collect();
        Self { phi, eta }
    }

    pub fn constant(grid: &TimeGrid<F>, phi0: F, eta0: F) -> Self {
        Self::from_fns(grid, |_| phi0, |_| eta0)
    }

    pub fn check(&self, grid: &TimeGrid<F>) -> Result<()> {
        let m = grid.delay_shift();
        if self.phi.len() != m + 1 || self.eta.len() != m {
            return Err(Error::GridMismatch(format!(
                "initial data has {} phi / {} eta nodes, grid wants {} / {}",
                self.phi.len(),
                self.eta.len(),
                m + 1,
                m
            )));
        }
        if self.phi.iter().chain(&self.eta).any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite initial data".into()));
        }
        Ok(())
    }
}

/// Control values on grid nodes of `[-delta, T]`. A single shared row means
/// the control is deterministic and common to all paths.
#[derive(Debug, Clone)]
pub struct ControlProcess<F: Real> {
    grid: TimeGrid<F>,
    rows: Vec<Vec<F>>,
}

impl<F: Real> ControlProcess<F> {
    /// Deterministic control `t -> f(t)` on `[0, T]`, `eta` before 0.
    pub fn deterministic(grid: &TimeGrid<F>, init: &InitialData<F>, f: impl Fn(F) -> F) -> Self {
        let m = grid.delay_shift() as isize;
        let mut row = Vec::with_capacity(grid.n_state_nodes());
        for i in -m..=(grid.n_steps() as isize) {
            if i < 0 {
                row.push(init.eta[grid.slot(i)]);
            } else {
                row.push(f(grid.time(i)));
            }
        }
        Self {
            grid: grid.clone(),
            rows: vec![row],
        }
    }

    pub fn constant(grid: &TimeGrid<F>, init: &InitialData<F>, value: F) -> Self {
        Self::deterministic(grid, init, |_| value)
    }

    pub fn grid(&self) -> &TimeGrid<F> {
        &self.grid
    }

    #[inline]
    pub fn v(&self, path: usize, index: isize) -> F {
        let row = if self.rows.len() == 1 { 0 } else { path };
        self.rows[row][self.grid.slot(index)]
    }

    pub fn is_shared(&self) -> bool {
        self.rows.len() == 1
    }

    pub(crate) fn rows_mut(&mut self) -> &mut Vec<Vec<F>> {
        &mut self.rows
    }

    pub(crate) fn rows(&self) -> &[Vec<F>] {
        &self.rows
    }

    /// True when every value on `[0, T]` belongs to the control set.
    pub fn admissible(&self, set: &ControlSet<F>) -> Option<F> {
        for row in &self.rows {
            for i in 0..=self.grid.n_steps() as isize {
                let v = row[self.grid.slot(i)];
                if !set.contains(v) {
                    return Some(v);
                }
            }
        }
        None
    }
}

/// Simulated state trajectories on `[-delta, T]` grid nodes.
#[derive(Debug, Clone)]
pub struct StatePaths<F: Real> {
    grid: TimeGrid<F>,
    x: Vec<Vec<F>>,
}

impl<F: Real> StatePaths<F> {
    pub fn grid(&self) -> &TimeGrid<F> {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.x.len()
    }

    #[inline]
    pub fn x(&self, path: usize, index: isize) -> F {
        self.x[path][self.grid.slot(index)]
    }

    pub fn path(&self, path: usize) -> &[F] {
        &self.x[path]
    }

    /// Terminal value `x(T)`.
    pub fn terminal(&self, path: usize) -> F {
        self.x(path, self.grid.n_steps() as isize)
    }
}

/// Explicit Euler-Maruyama forward sweep with left-point coefficients.
pub fn simulate<F: Real>(
    problem: &DelayProblem<F>,
    control: &ControlProcess<F>,
    init: &InitialData<F>,
    grid: &TimeGrid<F>,
    ens: &BrownianEnsemble<F>,
) -> Result<StatePaths<F>> {
    ens.check_grid(grid)?;
    init.check(grid)?;
    if !control.grid().same_as(grid) {
        return Err(Error::GridMismatch("control grid differs".into()));
    }
    let m = grid.delay_shift() as isize;
    let n = grid.n_steps() as isize;
    let h = grid.step();
    let rows: Vec<std::result::Result<Vec<F>, (usize, usize)>> =
        par_map_paths(ens.n_paths(), |path| {
            let mut row = vec![F::zero(); grid.n_state_nodes()];
            for i in -m..=0 {
                row[grid.slot(i)] = init.phi[grid.slot(i)];
            }
            for i in 0..n {
                let t = grid.time(i);
                let x = row[grid.slot(i)];
                let xd = row[grid.slot(i - m)];
                let v = control.v(path, i);
                let vd = control.v(path, i - m);
                let drift = (problem.b)(t, x, xd, v, vd);
                let diff = (problem.sigma)(t, x, xd, v, vd);
                let next = x + drift * h + diff * ens.db(path, i);
                if !next.is_finite() {
                    return Err((path, i as usize));
                }
                row[grid.slot(i + 1)] = next;
            }
            Ok(row)
        });
    let mut x = Vec::with_capacity(rows.len());
    for row in rows {
        match row {
            Ok(r) => x.push(r),
            Err((path, step)) => {
                return Err(Error::NonFiniteState {
                    path,
                    step,
                    value: f64::NAN,
                })
            }
        }
    }
    Ok(StatePaths {
        grid: grid.clone(),
        x,
    })
}

/// Monte Carlo estimate of `E[sup_{0<=t<=T} |X(t)|^p]` over grid nodes.
pub fn sup_moment<F: Real>(paths: &StatePaths<F>, p: F) -> F {
    assert!(p >= F::of(2.0), "sup_moment needs p >= 2");
    let grid = paths.grid();
    let n = grid.n_steps() as isize;
    let vals: Vec<F> = par_map_paths(paths.n_paths(), |path| {
        let mut sup = F::zero();
        for i in 0..=n {
            sup = sup.max(paths.x(path, i).abs());
        }
        sup.powf(p)
    });
    stats::mean(&vals)
}

/// Per-path cost `int_0^T l dt + h(x(T))` by left-endpoint quadrature.
pub fn cost_paths<F: Real>(
    problem: &DelayProblem<F>,
    paths: &StatePaths<F>,
    control: &ControlProcess<F>,
) -> Vec<F> {
    let grid = paths.grid();
    let m = grid.delay_shift() as isize;
    let n = grid.n_steps() as isize;
    let h = grid.step();
    par_map_paths(paths.n_paths(), |path| {
        let mut acc = crate::stats::KahanSum::new();
        for i in 0..n {
            let t = grid.time(i);
            acc.add(
                (problem.l)(
                    t,
                    paths.x(path, i),
                    paths.x(path, i - m),
                    control.v(path, i),
                    control.v(path, i - m),
                ) * h,
            );
        }
        acc.add((problem.h_term)(paths.terminal(path)));
        acc.value()
    })
}

/// Monte Carlo cost estimate with its standard error.
pub fn cost<F: Real>(
    problem: &DelayProblem<F>,
    paths: &StatePaths<F>,
    control: &ControlProcess<F>,
) -> (F, F) {
    stats::mean_stderr(&cost_paths(problem, paths, control))
}
